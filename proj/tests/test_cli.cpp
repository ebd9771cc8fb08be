#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "topoprior/cli.hpp"
#include "topoprior/graphs.hpp"

using namespace topoprior;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "topoprior");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  return nlohmann::json::parse(in);
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("topoprior_cli_" + std::string(::testing::UnitTest::GetInstance()
                                               ->current_test_info()
                                               ->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    // Small enough to run the whole pipeline in seconds.
    const nlohmann::json config = {
        {"embedding", {{"dimension", 16}}},
        {"model", {{"hidden_dim", 12}, {"latent_dim", 6}, {"edge_hidden_dim", 10},
                   {"prior_hidden_dim", 9}}},
        {"train", {{"hidden_dim", 12}, {"latent_dim", 6}, {"epochs", 2}, {"batch_size", 8},
                   {"learning_rate", 1e-3}}},
        {"synth", {{"per_domain", 10}, {"ood_per_domain", 4}}},
        {"simulate", {{"test_per_domain", 3}}},
        {"theory", {{"token_trajectories", 50}}}};
    config_ = (dir_ / "config.json").string();
    std::ofstream(config_) << config.dump();
  }

  void TearDown() override { fs::remove_all(dir_); }

  std::vector<std::string> common(const std::string& sub) const {
    return {sub, "--config", config_, "--out", (dir_ / "run").string(), "--seed", "5"};
  }

  // Training straight on the oracle corpus, skipping the teacher stage.
  std::vector<std::string> train_on_oracle() const {
    auto args = common("train");
    args.insert(args.end(), {"--corpus", (dir_ / "run" / "corpus.jsonl").string()});
    return args;
  }

  fs::path dir_;
  std::string config_;
};

}  // namespace

TEST(Cli, UsageErrorsExitWithTwo) {
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"bogus"}).code, 2);
  EXPECT_EQ(run({"train", "--delta-e"}).code, 2);
  EXPECT_EQ(run({"--help"}).code, 0);
  EXPECT_NE(run({"--help"}).out.find("simulate"), std::string::npos);
}

TEST_F(CliTest, InvalidConfigurationExitsWithTwo) {
  const std::string out = (dir_ / "bad").string();
  const Result missing = run({"synth", "--config", (dir_ / "nope.json").string(), "--out", out});
  EXPECT_EQ(missing.code, 2);
  EXPECT_NE(missing.err.find("nope.json"), std::string::npos);

  std::ofstream(dir_ / "broken.json") << "{ not json";
  EXPECT_EQ(run({"synth", "--config", (dir_ / "broken.json").string(), "--out", out}).code, 2);

  auto args = common("train");
  args.insert(args.end(), {"--delta-e", "1.5"});
  EXPECT_EQ(run(args).code, 2);

  args = common("simulate");
  args.insert(args.end(), {"--arms", "scratch,oracle"});
  EXPECT_EQ(run(args).code, 2);

  EXPECT_EQ(run(common("train")).code, 2) << "no corpus yet";
}

TEST_F(CliTest, FullPipelineWritesArtifactsAndManifest) {
  const fs::path run_dir = dir_ / "run";
  ASSERT_EQ(run(common("synth")).code, 0);
  EXPECT_TRUE(fs::exists(run_dir / "corpus.jsonl"));
  EXPECT_EQ(read_jsonl_file((run_dir / "corpus.jsonl").string()).size(), 40u);
  EXPECT_EQ(read_jsonl_file((run_dir / "ood_queries.jsonl").string()).size(), 4u);

  auto teach = common("teach");
  teach.insert(teach.end(), {"--mode", "cheap-early:0.5"});
  ASSERT_EQ(run(teach).code, 0);
  for (const auto& r : read_jsonl_file((run_dir / "teacher_corpus.jsonl").string()))
    EXPECT_TRUE(r.teacher_utility.has_value());

  const Result trained = run(common("train"));
  ASSERT_EQ(trained.code, 0) << trained.err;
  for (const char* f : {"model.ckpt", "training_log.csv", "latent_points.csv",
                        "centroid_similarity.csv"})
    EXPECT_TRUE(fs::exists(run_dir / f)) << f;
  std::ifstream log(run_dir / "training_log.csv");
  int lines = 0;
  for (std::string line; std::getline(log, line);) ++lines;
  EXPECT_EQ(lines, 4);  // header, epoch 0 and two epochs

  const nlohmann::json manifest = read_json(run_dir / "manifest.json");
  EXPECT_EQ(manifest.at("command"), "train");
  EXPECT_EQ(manifest.at("seed"), 5);
  EXPECT_EQ(manifest.at("layers").at("file").at("train").at("epochs"), 2);
  EXPECT_EQ(manifest.at("resolved").at("train").at("epochs"), 2);
  EXPECT_EQ(manifest.at("resolved").at("train").at("alpha"), 0.5);
  EXPECT_TRUE(manifest.at("outputs").contains("checkpoint"));

  const Result generated = run(common("generate"));
  ASSERT_EQ(generated.code, 0) << generated.err;
  const auto gens = read_jsonl_file((run_dir / "generated.jsonl").string());
  ASSERT_EQ(gens.size(), 40u);
  for (const auto& g : gens) EXPECT_TRUE(validate(g.graph, 13).empty());
  EXPECT_TRUE(read_json(run_dir / "manifest.json").at("outputs").contains("mean_motif_score"));

  const Result simulated = run(common("simulate"));
  ASSERT_EQ(simulated.code, 0) << simulated.err;
  const nlohmann::json summary = read_json(run_dir / "simulation_summary.json");
  ASSERT_EQ(summary.size(), 3u);
  EXPECT_EQ(summary[0].at("arm"), "prior");
  EXPECT_EQ(summary[0].at("queries"), 12);
}

TEST_F(CliTest, CommandLineOverridesFileLayer) {
  ASSERT_EQ(run(common("synth")).code, 0);
  auto args = train_on_oracle();
  args.insert(args.end(), {"--alpha", "0", "--beta", "0.25"});
  ASSERT_EQ(run(args).code, 0);
  const nlohmann::json manifest = read_json(dir_ / "run" / "manifest.json");
  EXPECT_EQ(manifest.at("layers").at("cli").at("train").at("beta"), 0.25);
  EXPECT_EQ(manifest.at("resolved").at("train").at("alpha"), 0.0);
  EXPECT_EQ(manifest.at("resolved").at("train").at("beta"), 0.25);
}

TEST_F(CliTest, SameSeedGivesIdenticalOutputs) {
  const auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  ASSERT_EQ(run(common("synth")).code, 0);
  ASSERT_EQ(run(train_on_oracle()).code, 0);
  const std::string first_ckpt = slurp(dir_ / "run" / "model.ckpt");
  auto arms = common("simulate");
  arms.insert(arms.end(), {"--arms", "scratch,template"});
  ASSERT_EQ(run(arms).code, 0);
  const std::string first_traj = slurp(dir_ / "run" / "trajectories.jsonl");

  ASSERT_EQ(run(train_on_oracle()).code, 0);
  EXPECT_EQ(slurp(dir_ / "run" / "model.ckpt"), first_ckpt);
  ASSERT_EQ(run(arms).code, 0);
  EXPECT_EQ(slurp(dir_ / "run" / "trajectories.jsonl"), first_traj);
}

TEST_F(CliTest, TheoryAndBreakEvenReports) {
  const Result theory = run(common("theory"));
  ASSERT_EQ(theory.code, 0) << theory.err;
  EXPECT_TRUE(read_json(dir_ / "run" / "theory_report.json").at("all_pass").get<bool>());

  const Result be = run(common("breakeven"));
  ASSERT_EQ(be.code, 0);
  const nlohmann::json report = read_json(dir_ / "run" / "breakeven.json");
  EXPECT_EQ(report.at("break_even_queries"), 372671);
  EXPECT_NE(be.out.find("372671"), std::string::npos);
}

TEST_F(CliTest, DivergentTrainingExitsWithThree) {
  ASSERT_EQ(run(common("synth")).code, 0);
  nlohmann::json config = read_json(config_);
  config["train"]["learning_rate"] = 1e300;
  config["train"]["epochs"] = 4;
  std::ofstream(config_) << config.dump();
  const Result r = run(train_on_oracle());
  EXPECT_EQ(r.code, 3) << r.err;
  EXPECT_NE(r.err.find("numerical failure"), std::string::npos);
}
