#include "topoprior/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>

#include <CLI11.hpp>

#include "topoprior/checkpoint.hpp"
#include "topoprior/embeddings.hpp"
#include "topoprior/error.hpp"
#include "topoprior/evosim.hpp"
#include "topoprior/metrics.hpp"
#include "topoprior/synthdata.hpp"
#include "topoprior/training.hpp"

namespace topoprior {

namespace fs = std::filesystem;
using nlohmann::json;

json default_run_config() {
  SyntheticEmbedderConfig emb;
  TeacherConfig teacher;
  ContractionConfig search;
  ModelConfig model;
  model.embed_dim = emb.dimension;
  return {
      {"seed", 0},
      {"out", "run"},
      {"embedding",
       {{"provider", "synthetic"},
        {"dimension", emb.dimension},
        {"seed", emb.seed},
        {"probes", emb.probes},
        {"signature_weight", emb.signature_weight},
        {"endpoint", ""}}},
      {"model", model},
      {"train", TrainConfig{}},
      {"utility", UtilityParams{}},
      {"synth", {{"per_domain", 500}, {"ood_per_domain", 100},
                 {"domains", default_domain_specs()}, {"ood_domain", default_ood_spec()}}},
      {"teach", {{"mode", "full"}, {"search", teacher.search}}},
      {"generate", {{"delta_e", 0.5}, {"mode", "greedy"}, {"use_prior", true}}},
      {"simulate", {{"arms", "prior,scratch,template"}, {"test_per_domain", 50},
                    {"search", search}}},
      {"theory", {{"token_trajectories", 1000}, {"size_cap", 12}}},
      {"breakeven", {{"train_tokens_total", 1.2e8}, {"tokens_per_query_baseline", 800.0},
                     {"tokens_per_query_with_prior", 478.0},
                     {"reference_queries", 373670.0}}},
  };
}

namespace {

struct Layers {
  json defaults;
  json file = json::object();
  json cli = json::object();
  json resolved;
};

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("config file " + path + " is not valid JSON: " + e.what(), e.byte);
  }
}

void set_path(json& j, const std::string& dotted, const json& value) {
  json* node = &j;
  std::size_t start = 0;
  for (std::size_t dot; (dot = dotted.find('.', start)) != std::string::npos; start = dot + 1)
    node = &(*node)[dotted.substr(start, dot - start)];
  (*node)[dotted.substr(start)] = value;
}

std::unique_ptr<EmbeddingProvider> make_embedder(const json& e) {
  const std::string provider = e.value("provider", std::string("synthetic"));
  if (provider == "synthetic") {
    SyntheticEmbedderConfig c;
    c.dimension = e.value("dimension", c.dimension);
    c.seed = e.value("seed", c.seed);
    c.probes = e.value("probes", c.probes);
    c.signature_weight = e.value("signature_weight", c.signature_weight);
    return std::make_unique<SyntheticEmbedder>(c);
  }
  if (provider == "http") {
    HttpEmbeddingConfig c;
    c.endpoint = e.value("endpoint", std::string());
    c.dimension = e.value("dimension", 0);
    c.timeout_seconds = e.value("timeout_seconds", c.timeout_seconds);
    return std::make_unique<HttpEmbeddingClient>(c);
  }
  throw ConfigError("unknown embedding provider '" + provider + "'");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << text;
}

class Runner {
 public:
  Runner(std::string command, Layers layers, std::ostream& out)
      : command_(std::move(command)), layers_(std::move(layers)), log_(out) {
    seed_ = cfg().at("seed").get<std::uint64_t>();
    out_dir_ = cfg().at("out").get<std::string>();
    fs::create_directories(out_dir_);
  }

  const json& cfg() const { return layers_.resolved; }

  void write_manifest(const json& outputs) const {
    json manifest = {{"command", command_},
                     {"seed", seed_},
                     {"layers", {{"default", layers_.defaults},
                                 {"file", layers_.file},
                                 {"cli", layers_.cli}}},
                     {"resolved", layers_.resolved},
                     {"outputs", outputs}};
    write_text(out_dir_ / "manifest.json", manifest.dump(2) + "\n");
  }

  std::vector<DomainSpec> specs() const {
    return cfg().at("synth").at("domains").get<std::vector<DomainSpec>>();
  }

  fs::path path_or(const char* key, const fs::path& fallback) const {
    if (cfg().contains(key) && cfg()[key].is_string()) return cfg()[key].get<std::string>();
    return fallback;
  }

  json synth() {
    const auto domain_specs = specs();
    for (const auto& s : domain_specs) s.validate(RolePool::standard().size());
    const DomainSpec ood = cfg().at("synth").at("ood_domain").get<DomainSpec>();
    ood.validate(RolePool::standard().size());
    const int per_domain = cfg().at("synth").at("per_domain").get<int>();
    const auto corpus = make_queries(domain_specs, per_domain, seed_);
    const auto ood_queries = make_queries(
        {ood}, cfg().at("synth").at("ood_per_domain").get<int>(), derive_seed(seed_, 0x00d));
    write_jsonl_file((out_dir_ / "corpus.jsonl").string(), corpus);
    write_jsonl_file((out_dir_ / "ood_queries.jsonl").string(), ood_queries);
    json specs_json = {{"domains", domain_specs}, {"ood_domain", ood}};
    write_text(out_dir_ / "domains.json", specs_json.dump(2) + "\n");
    log_ << "wrote " << corpus.size() << " records and " << ood_queries.size()
         << " held-out-domain queries to " << out_dir_.string() << "\n";
    return {{"corpus", "corpus.jsonl"}, {"ood_queries", "ood_queries.jsonl"},
            {"domains", "domains.json"}};
  }

  json teach() {
    const auto mode = SupervisionMode::parse(cfg().at("teach").at("mode").get<std::string>());
    TeacherConfig tc;
    tc.search = cfg().at("teach").at("search").get<ContractionConfig>();
    tc.utility = cfg().at("utility").get<UtilityParams>();
    const auto input = path_or("corpus", out_dir_ / "corpus.jsonl");
    const auto records = read_jsonl_file(input.string());
    const auto annotated = annotate_teachers(records, specs(), mode, tc, seed_);
    write_jsonl_file((out_dir_ / "teacher_corpus.jsonl").string(), annotated);
    double mean = 0.0;
    for (const auto& r : annotated) mean += *r.teacher_utility;
    if (!annotated.empty()) mean /= static_cast<double>(annotated.size());
    log_ << "teacher mode " << mode.to_string() << ": mean utility " << mean << "\n";
    return {{"teacher_corpus", "teacher_corpus.jsonl"}, {"mean_teacher_utility", mean}};
  }

  json train() {
    auto embedder = make_embedder(cfg().at("embedding"));
    ModelConfig mc = cfg().at("model").get<ModelConfig>();
    mc.embed_dim = embedder->dimension();
    TrainConfig tc = cfg().at("train").get<TrainConfig>();
    tc.seed = seed_;
    const auto input = path_or("corpus", out_dir_ / "teacher_corpus.jsonl");
    const auto records = read_jsonl_file(input.string());
    const Mat role_emb = embedder->embed_pool(RolePool::standard());
    const auto encoded = encode_corpus(records, *embedder, mc);
    mc.latent_dim = tc.latent_dim;
    mc.hidden_dim = tc.hidden_dim;
    Trainer trainer(TopoPriorModel::initialized(mc, tc.seed), role_emb, encoded, tc);
    log_ << "training " << trainer.model().parameter_count() << " parameters on "
         << encoded.size() << " records\n";
    while (!trainer.finished()) {
      const auto epochs_logged = trainer.log().size();
      trainer.step();
      if (trainer.log().size() != epochs_logged) {
        const auto& e = trainer.log().back();
        log_ << "epoch " << e.epoch << " total " << e.total << "\n";
      }
    }
    Checkpoint ck{trainer.model(), snapshot(trainer),
                  {{"embedding", cfg().at("embedding")}}};
    const auto ck_path = path_or("checkpoint", out_dir_ / "model.ckpt");
    save_checkpoint(ck_path.string(), ck);
    write_loss_log_csv_file((out_dir_ / "training_log.csv").string(), trainer.log());

    // Latent analysis on posterior means.
    Mat mus(static_cast<Eigen::Index>(encoded.size()), mc.latent_dim);
    std::vector<int> labels;
    for (std::size_t i = 0; i < encoded.size(); ++i) {
      mus.row(i) = encode_posterior(trainer.model(), role_emb, encoded[i]).mu.transpose();
      labels.push_back(encoded[i].domain_id);
    }
    json outputs = {{"checkpoint", ck_path.string()}, {"training_log", "training_log.csv"}};
    {
      std::ofstream pts(out_dir_ / "latent_points.csv");
      write_latent_points_csv(pts, latent_points(mus, labels));
      outputs["latent_points"] = "latent_points.csv";
    }
    std::optional<LatentSummary> summary;
    try {
      summary = latent_summary(mus, labels, {.seed = seed_});
      outputs["silhouette"] = summary->silhouette;
      outputs["probe_accuracy"] = summary->probe_accuracy;
    } catch (const ValidationError& e) {
      log_ << "latent summary skipped: " << e.what() << "\n";
    }
    const fs::path ood_path = out_dir_ / "ood_queries.jsonl";
    if (summary && fs::exists(ood_path)) {
      std::vector<CentroidSimilarity> rows;
      const auto ood = read_jsonl_file(ood_path.string());
      for (std::size_t i = 0; i < ood.size(); ++i)
        for (const auto& [domain, cosine] :
             route_unseen(embedder->embed_query(ood[i].query), trainer.model().prior, *summary))
          rows.push_back({"q" + std::to_string(i), domain, cosine});
      std::ofstream sim(out_dir_ / "centroid_similarity.csv");
      write_centroid_similarity_csv(sim, rows);
      outputs["centroid_similarity"] = "centroid_similarity.csv";
    }
    log_ << "final total loss " << trainer.log().back().total << " (epoch 0: "
         << trainer.log().front().total << ")\n";
    return outputs;
  }

  struct LoadedModel {
    Checkpoint checkpoint;
    std::unique_ptr<EmbeddingProvider> embedder;
    Mat role_emb;
  };

  LoadedModel load_model() const {
    const auto path = path_or("checkpoint", out_dir_ / "model.ckpt");
    LoadedModel m{load_checkpoint(path.string()), nullptr, {}};
    const json emb = m.checkpoint.metadata.value("embedding", cfg().at("embedding"));
    m.embedder = make_embedder(emb);
    if (m.embedder->dimension() != m.checkpoint.model.config.embed_dim)
      throw ConfigError("checkpoint embed_dim does not match its embedding provider");
    m.role_emb = m.embedder->embed_pool(RolePool::standard());
    return m;
  }

  std::vector<Generation> generate_for(const LoadedModel& m,
                                       const std::vector<DatasetRecord>& queries,
                                       double delta_e, GenerationMode mode,
                                       bool use_prior) const {
    const auto& model = m.checkpoint.model;
    Mat h_q(static_cast<Eigen::Index>(queries.size()), model.config.embed_dim);
    for (std::size_t i = 0; i < queries.size(); ++i)
      h_q.row(i) = m.embedder->embed_query(queries[i].query).transpose();
    const Mat eps = Mat::Zero(h_q.rows(), model.config.latent_dim);
    std::vector<Rng> rngs;
    for (std::size_t i = 0; i < queries.size(); ++i)
      rngs.emplace_back(derive_seed(seed_, 0x6e4, i));
    return infer_graphs(h_q, model, m.role_emb, delta_e, eps, mode, &rngs, use_prior);
  }

  json generate() {
    const LoadedModel m = load_model();
    const auto input = path_or("corpus", out_dir_ / "corpus.jsonl");
    const auto queries = read_jsonl_file(input.string());
    const json& g = cfg().at("generate");
    const std::string mode_name = g.at("mode").get<std::string>();
    if (mode_name != "greedy" && mode_name != "sampled")
      throw ConfigError("generate mode must be greedy or sampled");
    const auto gens = generate_for(m, queries, g.at("delta_e").get<double>(),
                                   mode_name == "greedy" ? GenerationMode::kGreedy
                                                         : GenerationMode::kSampled,
                                   g.at("use_prior").get<bool>());
    std::vector<DatasetRecord> out = queries;
    double score = 0.0;
    int scored = 0;
    std::vector<DomainSpec> all_specs = specs();
    all_specs.push_back(cfg().at("synth").at("ood_domain").get<DomainSpec>());
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (out[i].query_seed) {
        try {
          score += motif_score(gens[i].graph, oracle_graph(out[i], all_specs));
          ++scored;
        } catch (const ValidationError&) {
        }
      }
      out[i].graph = gens[i].graph;
      out[i].teacher_utility.reset();
    }
    write_jsonl_file((out_dir_ / "generated.jsonl").string(), out);
    json outputs = {{"generated", "generated.jsonl"}, {"count", out.size()}};
    if (scored > 0) {
      outputs["mean_motif_score"] = score / scored;
      log_ << "mean motif score " << score / scored << " over " << scored << " queries\n";
    }
    return outputs;
  }

  json simulate() {
    const json& s = cfg().at("simulate");
    std::vector<std::string> arms;
    {
      std::stringstream ss(s.at("arms").get<std::string>());
      for (std::string arm; std::getline(ss, arm, ',');)
        if (!arm.empty()) arms.push_back(arm);
    }
    if (arms.empty()) throw ConfigError("at least one simulation arm is required");
    for (const auto& a : arms)
      if (a != "prior" && a != "scratch" && a != "template")
        throw ConfigError("unknown arm '" + a + "' (prior, scratch, template)");
    const ContractionConfig cc = s.at("search").get<ContractionConfig>();
    const UtilityParams up = cfg().at("utility").get<UtilityParams>();
    const auto domain_specs = specs();
    const auto queries = make_queries(domain_specs, s.at("test_per_domain").get<int>(),
                                      derive_seed(seed_, 0x7e57));
    std::optional<LoadedModel> model;
    std::vector<Generation> prior_graphs;
    if (std::find(arms.begin(), arms.end(), "prior") != arms.end()) {
      model = load_model();
      prior_graphs = generate_for(*model, queries, cfg().at("generate").at("delta_e").get<double>(),
                                  GenerationMode::kGreedy, true);
    }

    std::ofstream traj_out(out_dir_ / "trajectories.jsonl");
    json summary = json::array();
    for (const auto& arm : arms) {
      std::uint64_t arm_key = 0xcbf29ce484222325ULL;
      for (const unsigned char c : arm) arm_key = (arm_key ^ c) * 0x100000001b3ULL;
      std::vector<int> rounds;
      double tokens = 0.0;
      double initial = 0.0;
      double terminal = 0.0;
      for (std::size_t i = 0; i < queries.size(); ++i) {
        Rng rng(derive_seed(seed_, arm_key, i));
        CollaborationGraph init;
        InitSource source = InitSource::kScratch;
        if (arm == "prior") {
          init = prior_graphs[i].graph;
          source = InitSource::kPrior;
        } else if (arm == "template") {
          init = template_graph(spec_for(queries[i], domain_specs));
          source = InitSource::kTemplate;
        } else {
          init = random_graph(cc.pool_size, rng);
        }
        const auto traj = evolve(init, oracle_graph(queries[i], domain_specs), cc, up, rng, source);
        write_trajectory_jsonl(traj_out, traj, arm + ":q" + std::to_string(i));
        rounds.push_back(traj.num_rounds());
        tokens += traj.total_token_cost();
        initial += traj.initial_utility();
        terminal += traj.terminal_utility();
      }
      const double n = static_cast<double>(queries.size());
      std::vector<int> sorted = rounds;
      std::sort(sorted.begin(), sorted.end());
      const double median = sorted.empty() ? 0.0
                            : sorted.size() % 2 == 1
                                ? sorted[sorted.size() / 2]
                                : 0.5 * (sorted[sorted.size() / 2 - 1] + sorted[sorted.size() / 2]);
      summary.push_back({{"arm", arm},
                         {"queries", queries.size()},
                         {"median_rounds", median},
                         {"total_tokens", tokens},
                         {"mean_initial_utility", initial / n},
                         {"mean_terminal_utility", terminal / n}});
      log_ << arm << ": median rounds " << median << ", total tokens " << tokens
           << ", mean terminal utility " << terminal / n << "\n";
    }
    write_text(out_dir_ / "simulation_summary.json", summary.dump(2) + "\n");
    return {{"trajectories", "trajectories.jsonl"}, {"summary", "simulation_summary.json"}};
  }

  json theory() {
    TheoryConfig tc;
    tc.seed = seed_;
    tc.utility = cfg().at("utility").get<UtilityParams>();
    tc.token_trajectories = cfg().at("theory").at("token_trajectories").get<int>();
    tc.size_cap = cfg().at("theory").at("size_cap").get<int>();
    const json report = run_theory_checks(tc);
    write_text(out_dir_ / "theory_report.json", report.dump(2) + "\n");
    log_ << "theory checks " << (report.at("all_pass").get<bool>() ? "passed" : "FAILED")
         << "\n";
    return {{"report", "theory_report.json"}, {"all_pass", report.at("all_pass")}};
  }

  json breakeven() {
    const json& b = cfg().at("breakeven");
    std::optional<double> reference;
    if (b.contains("reference_queries") && !b["reference_queries"].is_null())
      reference = b["reference_queries"].get<double>();
    const auto report = break_even_report(b.at("train_tokens_total").get<double>(),
                                          b.at("tokens_per_query_baseline").get<double>(),
                                          b.at("tokens_per_query_with_prior").get<double>(),
                                          reference);
    const json j = to_json(report);
    write_text(out_dir_ / "breakeven.json", j.dump(2) + "\n");
    log_ << "break-even after " << report.queries << " queries";
    if (j.contains("discrepancy")) log_ << " (" << j["discrepancy"].get<std::string>() << ")";
    log_ << "\n";
    return j;
  }

 private:
  std::string command_;
  Layers layers_;
  std::ostream& log_;
  std::uint64_t seed_ = 0;
  fs::path out_dir_;
};

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Query-conditioned topology prior: synthesis, training and simulation"};
  app.require_subcommand(1);

  struct Flags {
    std::optional<std::uint64_t> seed;
    std::string config;
    std::optional<std::string> out, corpus, checkpoint, mode, arms;
    std::optional<double> delta_e, alpha, beta;
  } f;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", f.seed, "Run seed");
    sub->add_option("--config", f.config, "JSON config file");
    sub->add_option("--out", f.out, "Output directory");
  };
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, help] : std::vector<std::pair<std::string, std::string>>{
           {"synth", "Generate the synthetic corpus with oracle graphs"},
           {"teach", "Replace reference graphs by teacher graphs"},
           {"train", "Train the prior; writes a checkpoint and loss log"},
           {"generate", "Generate graphs for a query file from a checkpoint"},
           {"simulate", "Compare initializations under the surrogate evolver"},
           {"theory", "Run the convergence and token-bound check grids"},
           {"breakeven", "Queries needed to amortize offline supervision"}}) {
    subs[name] = app.add_subcommand(name, help);
    add_common(subs[name]);
  }
  for (const char* name : {"teach", "train", "generate"})
    subs[name]->add_option("--corpus", f.corpus, "Input JSONL corpus");
  for (const char* name : {"train", "generate", "simulate"})
    subs[name]->add_option("--checkpoint", f.checkpoint, "Checkpoint path");
  for (const char* name : {"train", "generate", "simulate"})
    subs[name]->add_option("--delta-e", f.delta_e, "Edge threshold in [0, 1]");
  subs["train"]->add_option("--alpha", f.alpha, "Task loss weight");
  subs["train"]->add_option("--beta", f.beta, "Adaptation loss weight");
  subs["teach"]->add_option("--mode", f.mode,
                            "full | cheap-early:<f> | static-template | random");
  subs["generate"]->add_option("--mode", f.mode, "greedy | sampled");
  subs["simulate"]->add_option("--mode", f.mode, "local-search | idealized");
  subs["simulate"]->add_option("--arms", f.arms, "Comma list of prior, scratch, template");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    err << "error: " << e.what() << "\n";
    return 2;
  }
  std::string command;
  for (const auto& [name, sub] : subs)
    if (sub->parsed()) command = name;

  try {
    Layers layers;
    layers.defaults = default_run_config();
    if (!f.config.empty()) layers.file = read_json_file(f.config);
    if (f.seed) layers.cli["seed"] = *f.seed;
    if (f.out) layers.cli["out"] = *f.out;
    if (f.corpus) layers.cli["corpus"] = *f.corpus;
    if (f.checkpoint) layers.cli["checkpoint"] = *f.checkpoint;
    if (f.delta_e) {
      set_path(layers.cli, "train.delta_e", *f.delta_e);
      set_path(layers.cli, "generate.delta_e", *f.delta_e);
    }
    if (f.alpha) set_path(layers.cli, "train.alpha", *f.alpha);
    if (f.beta) set_path(layers.cli, "train.beta", *f.beta);
    if (f.mode) {
      if (command == "teach") set_path(layers.cli, "teach.mode", *f.mode);
      if (command == "generate") set_path(layers.cli, "generate.mode", *f.mode);
      if (command == "simulate") set_path(layers.cli, "simulate.search.mode", *f.mode);
    }
    if (f.arms) set_path(layers.cli, "simulate.arms", *f.arms);
    layers.resolved = layers.defaults;
    layers.resolved.merge_patch(layers.file);
    layers.resolved.merge_patch(layers.cli);
    layers.resolved["train"].get<TrainConfig>().validate();

    Runner runner(command, layers, out);
    json outputs;
    if (command == "synth") outputs = runner.synth();
    else if (command == "teach") outputs = runner.teach();
    else if (command == "train") outputs = runner.train();
    else if (command == "generate") outputs = runner.generate();
    else if (command == "simulate") outputs = runner.simulate();
    else if (command == "theory") outputs = runner.theory();
    else if (command == "breakeven") outputs = runner.breakeven();
    runner.write_manifest(outputs);
    return 0;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const json::exception& e) {
    err << "error: invalid configuration: " << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace topoprior
