#include "topoprior/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "topoprior/error.hpp"

namespace topoprior {

std::string_view to_string(Motif motif) {
  switch (motif) {
    case Motif::kChain: return "chain";
    case Motif::kStar: return "star";
    case Motif::kTree: return "tree";
    case Motif::kTwoHub: return "two-hub";
    case Motif::kSparseRandom: return "sparse-random";
  }
  return "unknown";
}

Motif parse_motif(std::string_view text) {
  for (const Motif m : {Motif::kChain, Motif::kStar, Motif::kTree, Motif::kTwoHub,
                        Motif::kSparseRandom})
    if (to_string(m) == text) return m;
  throw ConfigError("unknown motif '" + std::string(text) + "'");
}

void DomainSpec::validate(int pool_size) const {
  if (domain_id < 0) throw ConfigError("domain_id must be non-negative");
  if (role_subset.empty()) throw ConfigError("role_subset must not be empty");
  std::set<int> seen;
  for (const int r : role_subset) {
    if (r < 0 || r >= pool_size)
      throw ConfigError("role " + std::to_string(r) + " is outside the pool");
    if (!seen.insert(r).second)
      throw ConfigError("role " + std::to_string(r) + " repeats in role_subset");
  }
  if (min_nodes < 1 || max_nodes < min_nodes ||
      max_nodes > static_cast<int>(role_subset.size()))
    throw ConfigError("size range must lie within [1, |role_subset|]");
  if (noise_tokens < 0 || shared_noise_tokens < 0 || vocabulary < 1)
    throw ConfigError("noise settings must be non-negative with a non-empty vocabulary");
}

void to_json(nlohmann::json& j, const DomainSpec& s) {
  j = {{"domain_id", s.domain_id},
       {"motif", std::string(to_string(s.motif))},
       {"role_subset", s.role_subset},
       {"size_range", {s.min_nodes, s.max_nodes}},
       {"noise_tokens", s.noise_tokens},
       {"vocabulary", s.vocabulary},
       {"shared_noise_tokens", s.shared_noise_tokens}};
}

void from_json(const nlohmann::json& j, DomainSpec& s) {
  DomainSpec d;
  s.domain_id = j.at("domain_id").get<int>();
  s.motif = parse_motif(j.at("motif").get<std::string>());
  s.role_subset = j.at("role_subset").get<std::vector<int>>();
  const auto range = j.at("size_range").get<std::vector<int>>();
  if (range.size() != 2) throw ConfigError("size_range needs two entries");
  s.min_nodes = range[0];
  s.max_nodes = range[1];
  s.noise_tokens = j.value("noise_tokens", d.noise_tokens);
  s.vocabulary = j.value("vocabulary", d.vocabulary);
  s.shared_noise_tokens = j.value("shared_noise_tokens", d.shared_noise_tokens);
}

std::vector<DomainSpec> default_domain_specs() {
  std::vector<DomainSpec> specs(4);
  specs[0] = {0, Motif::kChain, {0, 7, 8, 9, 10, 12}, 3, 6};
  specs[1] = {1, Motif::kStar, {2, 4, 6, 11, 12}, 3, 5};
  specs[2] = {2, Motif::kTree, {2, 3, 4, 5, 6, 12}, 3, 6};
  specs[3] = {3, Motif::kTwoHub, {1, 6, 7, 9, 11, 12}, 3, 6};
  return specs;
}

DomainSpec default_ood_spec() {
  return {4, Motif::kSparseRandom, {0, 1, 2, 3, 5, 12}, 3, 6};
}

std::vector<DomainSpec> load_domain_specs_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open domain spec file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("domain spec file is not valid JSON: ") + e.what(),
                     e.byte);
  }
  const auto& list = j.is_object() ? j.at("domains") : j;
  return list.get<std::vector<DomainSpec>>();
}

std::vector<int> draw_roles(const DomainSpec& spec, std::uint64_t query_seed) {
  Rng rng(derive_seed(query_seed, 0x201e));
  const int n = std::uniform_int_distribution<int>(spec.min_nodes, spec.max_nodes)(rng);
  std::vector<int> roles = spec.role_subset;
  std::shuffle(roles.begin(), roles.end(), rng);
  roles.resize(n);
  std::sort(roles.begin(), roles.end());
  return roles;
}

CollaborationGraph motif_graph(Motif motif, const std::vector<int>& sorted_roles,
                               std::uint64_t query_seed) {
  CollaborationGraph g;
  g.roles = sorted_roles;
  const int n = g.num_nodes();
  for (int t = 1; t < n; ++t) {
    switch (motif) {
      case Motif::kChain:
        g.edges.push_back({t - 1, t});
        break;
      case Motif::kStar:
        g.edges.push_back({0, t});
        break;
      case Motif::kTree:
        g.edges.push_back({(t - 1) / 2, t});
        break;
      case Motif::kTwoHub:
        g.edges.push_back({t == 1 ? 0 : (t % 2 == 0 ? 0 : 1), t});
        break;
      case Motif::kSparseRandom:
        g.edges.push_back({t - 1, t});
        for (int s = 0; s + 1 < t; ++s)
          if (mix_seed(derive_seed(query_seed, 0x5ba7, s * 64 + t)) % 4 == 0)
            g.edges.push_back({s, t});
        break;
    }
  }
  std::sort(g.edges.begin(), g.edges.end());
  return g;
}

std::string query_text(const DomainSpec& spec, std::uint64_t query_seed) {
  Rng rng(derive_seed(query_seed, 0x7e47));
  const std::string d = std::to_string(spec.domain_id);
  std::string text = "domain:" + d;
  for (const int r : draw_roles(spec, query_seed)) text += " role:" + std::to_string(r);
  std::uniform_int_distribution<int> word(0, spec.vocabulary - 1);
  for (int i = 0; i < spec.noise_tokens; ++i)
    text += " d" + d + "w" + std::to_string(word(rng));
  for (int i = 0; i < spec.shared_noise_tokens; ++i)
    text += " w" + std::to_string(word(rng));
  return text;
}

std::vector<DatasetRecord> make_queries(const std::vector<DomainSpec>& specs,
                                        int per_domain, std::uint64_t seed) {
  if (specs.empty()) throw ValidationError("at least one domain spec is required");
  if (per_domain < 0) throw ValidationError("per_domain must be non-negative");
  std::vector<DatasetRecord> out;
  out.reserve(specs.size() * static_cast<std::size_t>(per_domain));
  for (const auto& spec : specs) {
    for (int i = 0; i < per_domain; ++i) {
      DatasetRecord r;
      r.query_seed = derive_seed(seed, static_cast<std::uint64_t>(spec.domain_id) + 1,
                                 static_cast<std::uint64_t>(i));
      r.domain_id = spec.domain_id;
      r.query = query_text(spec, *r.query_seed);
      r.graph = motif_graph(spec.motif, draw_roles(spec, *r.query_seed), *r.query_seed);
      out.push_back(std::move(r));
    }
  }
  return out;
}

const DomainSpec& spec_for(const DatasetRecord& record,
                           const std::vector<DomainSpec>& specs) {
  for (const auto& s : specs)
    if (s.domain_id == record.domain_id) return s;
  throw ValidationError("no domain spec for domain " + std::to_string(record.domain_id));
}

CollaborationGraph oracle_graph(const DatasetRecord& record,
                                const std::vector<DomainSpec>& specs) {
  if (!record.query_seed)
    throw ValidationError("record has no query_seed; its oracle cannot be rebuilt");
  const DomainSpec& spec = spec_for(record, specs);
  return motif_graph(spec.motif, draw_roles(spec, *record.query_seed), *record.query_seed);
}

void SupervisionMode::validate() const {
  if (kind == Kind::kCheapEarly && !(fraction > 0.0 && fraction <= 1.0))
    throw ConfigError("cheap-early fraction must lie in (0, 1]");
}

SupervisionMode SupervisionMode::parse(std::string_view text) {
  if (text == "full") return full();
  if (text == "static-template") return static_template();
  if (text == "random") return random();
  constexpr std::string_view prefix = "cheap-early";
  if (text.substr(0, prefix.size()) == prefix) {
    double f = 0.5;
    if (text.size() > prefix.size()) {
      if (text[prefix.size()] != ':' && text[prefix.size()] != '=')
        throw ConfigError("unknown supervision mode '" + std::string(text) + "'");
      try {
        std::size_t used = 0;
        const std::string number(text.substr(prefix.size() + 1));
        f = std::stod(number, &used);
        if (used != number.size()) throw std::invalid_argument("trailing text");
      } catch (const std::exception&) {
        throw ConfigError("bad cheap-early fraction in '" + std::string(text) + "'");
      }
    }
    SupervisionMode m = cheap_early(f);
    m.validate();
    return m;
  }
  throw ConfigError("unknown supervision mode '" + std::string(text) + "'");
}

std::string SupervisionMode::to_string() const {
  switch (kind) {
    case Kind::kFull: return "full";
    case Kind::kStaticTemplate: return "static-template";
    case Kind::kRandom: return "random";
    case Kind::kCheapEarly: {
      std::string f = std::to_string(fraction);
      f.erase(f.find_last_not_of('0') + 1);
      if (!f.empty() && f.back() == '.') f.pop_back();
      return "cheap-early:" + f;
    }
  }
  return "unknown";
}

CollaborationGraph template_graph(const DomainSpec& spec) {
  std::vector<int> roles = spec.role_subset;
  std::sort(roles.begin(), roles.end());
  return motif_graph(spec.motif, roles, static_cast<std::uint64_t>(spec.domain_id));
}

TeacherGraph build_teacher_graph(const DatasetRecord& record,
                                 const std::vector<DomainSpec>& specs,
                                 SupervisionMode mode, const TeacherConfig& config,
                                 std::uint64_t seed) {
  mode.validate();
  const CollaborationGraph oracle = oracle_graph(record, specs);
  Rng rng(derive_seed(seed, 0x7eac, *record.query_seed));
  const int pool = config.search.pool_size;
  // full, cheap-early and random share the same random start.
  const CollaborationGraph start = random_graph(pool, rng);

  TeacherGraph out;
  switch (mode.kind) {
    case SupervisionMode::Kind::kRandom:
      out.graph = start;
      break;
    case SupervisionMode::Kind::kStaticTemplate:
      out.graph = template_graph(spec_for(record, specs));
      break;
    case SupervisionMode::Kind::kFull:
    case SupervisionMode::Kind::kCheapEarly: {
      const auto traj = evolve(start, oracle, config.search, config.utility, rng);
      out.full_rounds = traj.num_rounds();
      const double f = mode.kind == SupervisionMode::Kind::kFull ? 1.0 : mode.fraction;
      const auto stop = static_cast<std::size_t>(std::floor(f * out.full_rounds));
      out.graph = traj.rounds[stop].graph;
      break;
    }
  }
  out.utility = utility(out.graph, oracle, config.utility);
  return out;
}

std::vector<DatasetRecord> annotate_teachers(const std::vector<DatasetRecord>& records,
                                             const std::vector<DomainSpec>& specs,
                                             SupervisionMode mode,
                                             const TeacherConfig& config,
                                             std::uint64_t seed) {
  std::vector<DatasetRecord> out = records;
  for (auto& r : out) {
    TeacherGraph t = build_teacher_graph(r, specs, mode, config, seed);
    r.graph = std::move(t.graph);
    r.teacher_utility = t.utility;
  }
  return out;
}

std::vector<DatasetRecord> make_corpus(const std::vector<DomainSpec>& specs,
                                       int per_domain, std::uint64_t seed,
                                       SupervisionMode mode, const TeacherConfig& config) {
  for (const auto& s : specs) s.validate(config.search.pool_size);
  return annotate_teachers(make_queries(specs, per_domain, seed), specs, mode, config,
                           seed);
}

}  // namespace topoprior
