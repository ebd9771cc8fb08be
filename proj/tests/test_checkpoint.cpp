#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>

#include "topoprior/checkpoint.hpp"
#include "topoprior/embeddings.hpp"
#include "topoprior/error.hpp"
#include "topoprior/synthdata.hpp"

using namespace topoprior;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.embed_dim = 16;
  c.hidden_dim = 12;
  c.latent_dim = 6;
  c.edge_hidden_dim = 10;
  c.prior_hidden_dim = 9;
  c.discriminator_hidden_dim = 7;
  return c;
}

class CheckpointTest : public ::testing::Test {
 protected:
  void SetUp() override {
    config_ = small_config();
    SyntheticEmbedder embedder(SyntheticEmbedderConfig{config_.embed_dim});
    roles_ = embedder.embed_pool(RolePool::standard());
    records_ = encode_corpus(make_queries(default_domain_specs(), 5, 31), embedder, config_);
    train_.latent_dim = config_.latent_dim;
    train_.hidden_dim = config_.hidden_dim;
    train_.batch_size = 6;
    train_.epochs = 3;
    train_.learning_rate = 1e-3;
    train_.alpha = 0.0;
  }

  Trainer fresh() const {
    return Trainer(TopoPriorModel::initialized(config_, 32), roles_, records_, train_);
  }

  Checkpoint checkpoint_of(const Trainer& t) const {
    return Checkpoint{t.model(), snapshot(t), {{"provider", "synthetic"}}};
  }

  static std::vector<double> flatten(TopoPriorModel m) {
    std::vector<double> out;
    for (const auto& p : m.parameters()) out.insert(out.end(), p.data, p.data + p.rows * p.cols);
    return out;
  }

  ModelConfig config_;
  Mat roles_;
  std::vector<EncodedRecord> records_;
  TrainConfig train_;
};

}  // namespace

TEST_F(CheckpointTest, RoundTripPreservesModelAndLoss) {
  Trainer t = fresh();
  for (int i = 0; i < 2; ++i) t.step();
  const std::string bytes = encode_checkpoint(checkpoint_of(t));
  const Checkpoint back = decode_checkpoint(bytes);
  EXPECT_EQ(back.model.config, t.model().config);
  EXPECT_EQ(flatten(back.model), flatten(t.model()));
  EXPECT_EQ(back.metadata.at("provider"), "synthetic");
  ASSERT_TRUE(back.trainer.has_value());
  EXPECT_EQ(back.trainer->config, train_);
  EXPECT_EQ(back.trainer->adam.step, 2);
  EXPECT_EQ(flatten(back.trainer->adam.v), flatten(t.adam().v));

  Rng rng(33);
  const Vec eps = standard_normal(rng, config_.latent_dim);
  for (const auto& r : records_) {
    EXPECT_EQ(total_loss(back.model, roles_, r, eps, {}).total,
              total_loss(t.model(), roles_, r, eps, {}).total);
  }
  EXPECT_EQ(encode_checkpoint(back), bytes);
}

TEST_F(CheckpointTest, ModelOnlyCheckpointCannotResume) {
  const Checkpoint c{TopoPriorModel::initialized(config_, 1), std::nullopt, {}};
  const Checkpoint back = decode_checkpoint(encode_checkpoint(c));
  EXPECT_FALSE(back.trainer.has_value());
  EXPECT_THROW(resume_trainer(back, roles_, records_), CheckpointError);
}

TEST_F(CheckpointTest, FileRoundTrip) {
  const Trainer t = fresh();
  const auto path = std::filesystem::temp_directory_path() / "topoprior_ckpt_test.bin";
  save_checkpoint(path.string(), checkpoint_of(t));
  const Checkpoint back = load_checkpoint(path.string());
  EXPECT_EQ(flatten(back.model), flatten(t.model()));
  std::filesystem::remove(path);
  EXPECT_THROW(load_checkpoint(path.string()), Error);
}

TEST_F(CheckpointTest, DetectsCorruption) {
  const std::string good = encode_checkpoint(checkpoint_of(fresh()));

  std::string flipped = good;
  flipped[good.size() / 2] ^= 0x20;
  EXPECT_THROW(decode_checkpoint(flipped), CheckpointError);

  std::string magic = good;
  magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(magic), CheckpointError);

  std::string version = good;
  const std::uint32_t next = kCheckpointVersion + 1;
  std::memcpy(version.data() + 4, &next, sizeof next);
  try {
    decode_checkpoint(version);
    FAIL() << "version mismatch accepted";
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }

  for (const std::size_t keep : {std::size_t{0}, std::size_t{3}, std::size_t{10},
                                 good.size() / 3, good.size() - 1})
    EXPECT_THROW(decode_checkpoint(std::string_view(good).substr(0, keep)), CheckpointError)
        << keep;

  EXPECT_THROW(decode_checkpoint(good + "x"), CheckpointError);
}

TEST_F(CheckpointTest, MidEpochResumeMatchesUninterruptedRun) {
  Trainer straight = fresh();
  straight.run();

  // 20 records in batches of 6: stop after five steps, inside epoch two.
  Trainer first = fresh();
  for (int i = 0; i < 5; ++i) first.step();
  ASSERT_EQ(first.cursor().epoch, 1);
  ASSERT_GT(first.cursor().position, 0u);
  const Checkpoint saved = decode_checkpoint(encode_checkpoint(checkpoint_of(first)));
  Trainer resumed = resume_trainer(saved, roles_, records_);
  EXPECT_EQ(resumed.cursor().position, first.cursor().position);
  resumed.run();

  EXPECT_EQ(flatten(resumed.model()), flatten(straight.model()));
  ASSERT_EQ(resumed.log().size(), straight.log().size());
  for (std::size_t i = 0; i < straight.log().size(); ++i) {
    EXPECT_EQ(resumed.log()[i].epoch, straight.log()[i].epoch);
    EXPECT_EQ(resumed.log()[i].total, straight.log()[i].total);
  }
}

TEST_F(CheckpointTest, ResumeRejectsMismatchedCorpus) {
  Trainer first = fresh();
  for (int i = 0; i < 2; ++i) first.step();
  const Checkpoint saved = checkpoint_of(first);
  std::vector<EncodedRecord> shorter(records_.begin(), records_.begin() + 4);
  EXPECT_THROW(resume_trainer(saved, roles_, shorter), Error);
}
