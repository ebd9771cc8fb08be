#include "topoprior/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "topoprior/error.hpp"

namespace topoprior {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload is written in native little-endian order");

namespace {

constexpr char kMagic[4] = {'T', 'P', 'C', 'K'};

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

template <class T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

template <class T>
T get(std::string_view bytes, std::size_t& offset) {
  if (offset + sizeof(T) > bytes.size())
    throw CheckpointError("checkpoint truncated at byte " + std::to_string(offset));
  T value;
  std::memcpy(&value, bytes.data() + offset, sizeof(T));
  offset += sizeof(T);
  return value;
}

nlohmann::json block_table(TopoPriorModel& model) {
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& p : model.parameters())
    blocks.push_back({{"name", p.name}, {"rows", p.rows}, {"cols", p.cols}});
  return blocks;
}

void append_values(std::string& out, TopoPriorModel& model) {
  for (const auto& p : model.parameters())
    out.append(reinterpret_cast<const char*>(p.data),
               static_cast<std::size_t>(p.size()) * sizeof(double));
}

void read_values(std::string_view bytes, std::size_t& offset, TopoPriorModel& model) {
  for (const auto& p : model.parameters()) {
    const std::size_t n = static_cast<std::size_t>(p.size()) * sizeof(double);
    if (offset + n > bytes.size())
      throw CheckpointError("checkpoint payload truncated in " + p.name);
    std::memcpy(p.data, bytes.data() + offset, n);
    offset += n;
  }
}

}  // namespace

TrainerSnapshot snapshot(const Trainer& trainer) {
  return {trainer.config(), trainer.adam(), trainer.cursor(), trainer.log()};
}

std::string encode_checkpoint(const Checkpoint& checkpoint) {
  TopoPriorModel model = checkpoint.model;
  nlohmann::json header;
  header["model_config"] = model.config;
  header["blocks"] = block_table(model);
  header["metadata"] = checkpoint.metadata;
  if (checkpoint.trainer) {
    const TrainerSnapshot& s = *checkpoint.trainer;
    nlohmann::json log = nlohmann::json::array();
    for (const auto& e : s.log)
      log.push_back({e.epoch, e.recon, e.kl, e.task, e.adapt, e.total});
    header["trainer"] = {{"train_config", s.config},
                         {"adam_step", s.adam.step},
                         {"epoch", s.cursor.epoch},
                         {"position", s.cursor.position},
                         {"order", s.cursor.order},
                         {"rng_state", s.cursor.rng_state},
                         {"log", log}};
  }
  const std::string header_text = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, header_text.size());
  out += header_text;
  append_values(out, model);
  if (checkpoint.trainer) {
    TopoPriorModel m = checkpoint.trainer->adam.m;
    TopoPriorModel v = checkpoint.trainer->adam.v;
    append_values(out, m);
    append_values(out, v);
  }
  put<std::uint64_t>(out, fnv1a(out));
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < sizeof(kMagic) + 4 + 8 + 8 ||
      std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw CheckpointError("not a checkpoint file (bad magic)");
  std::size_t offset = sizeof(kMagic);
  const auto version = get<std::uint32_t>(bytes, offset);
  if (version != kCheckpointVersion)
    throw CheckpointError("incompatible checkpoint version " + std::to_string(version) +
                          " (expected " + std::to_string(kCheckpointVersion) + ")");
  const std::string_view body = bytes.substr(0, bytes.size() - 8);
  std::size_t tail = body.size();
  if (get<std::uint64_t>(bytes, tail) != fnv1a(body))
    throw CheckpointError("checkpoint checksum mismatch (file is damaged)");

  const auto header_size = get<std::uint64_t>(body, offset);
  if (offset + header_size > body.size())
    throw CheckpointError("checkpoint header truncated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(body.substr(offset, header_size));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  offset += header_size;

  Checkpoint out;
  try {
    out.model = TopoPriorModel::zeros(header.at("model_config").get<ModelConfig>());
    if (header.at("blocks") != block_table(out.model))
      throw CheckpointError("checkpoint parameter blocks do not match its config");
    out.metadata = header.value("metadata", nlohmann::json::object());
    read_values(body, offset, out.model);
    if (header.contains("trainer")) {
      const auto& t = header["trainer"];
      TrainerSnapshot s;
      s.config = t.at("train_config").get<TrainConfig>();
      s.adam.step = t.at("adam_step").get<std::int64_t>();
      s.cursor.epoch = t.at("epoch").get<int>();
      s.cursor.position = t.at("position").get<std::size_t>();
      s.cursor.order = t.at("order").get<std::vector<std::size_t>>();
      s.cursor.rng_state = t.at("rng_state").get<std::string>();
      for (const auto& e : t.at("log"))
        s.log.push_back({e.at(0).get<int>(), e.at(1).get<double>(),
                         e.at(2).get<double>(), e.at(3).get<double>(),
                         e.at(4).get<double>(), e.at(5).get<double>()});
      s.adam.m = TopoPriorModel::zeros(out.model.config);
      s.adam.v = TopoPriorModel::zeros(out.model.config);
      read_values(body, offset, s.adam.m);
      read_values(body, offset, s.adam.v);
      out.trainer = std::move(s);
    }
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint header is malformed: ") + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint config is invalid: ") + e.what());
  }
  if (offset != body.size())
    throw CheckpointError("checkpoint has trailing bytes after the payload");
  return out;
}

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  const std::string bytes = encode_checkpoint(checkpoint);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot open " + path + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ValidationError("failed writing " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open checkpoint " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return decode_checkpoint(buf.str());
}

Trainer resume_trainer(const Checkpoint& checkpoint, Mat role_embeddings,
                       std::vector<EncodedRecord> records) {
  if (!checkpoint.trainer)
    throw CheckpointError("checkpoint carries no optimizer state to resume from");
  const TrainerSnapshot& s = *checkpoint.trainer;
  Trainer trainer(checkpoint.model, std::move(role_embeddings), std::move(records),
                  s.config);
  trainer.restore(s.adam, s.cursor, s.log);
  return trainer;
}

}  // namespace topoprior
