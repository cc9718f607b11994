// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "alignopt/embed.hpp"
#include "alignopt/finetune.hpp"
#include "alignopt/pretrain.hpp"
#include "alignopt/report.hpp"
#include "alignopt/tai.hpp"

namespace alignopt {

/// Raised for malformed or unknown configuration; the CLI exits with 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Effective settings for one command: defaults, then a JSON file, then flags.
class RunConfig {
 public:
  RunConfig() : values_(defaults()) {}

  static const nlohmann::json& defaults() {
    static const nlohmann::json d = {
        {"kind", "TSP"},          {"n", 20},
        {"count", 100},           {"seed", 1},
        {"out", ""},              {"input", ""},
        {"checkpoint", ""},       {"provider", "hash_stub"},
        {"mode", ""},             {"workers", 1},
        {"embed_dim", 32},        {"embed_seed", 0},
        {"endpoint", ""},         {"store", ""},
        {"max_in_flight", 4},     {"http_retries", 3},
        {"http_timeout_ms", 10000}, {"k_neighbors", 3},
        {"epochs", 1},            {"batch", 64},
        {"batches_per_epoch", 1}, {"lr", 1e-4},
        {"samples", 8},           {"checkpoint_every", 0},
        {"tau", 0.1},             {"lambda", 0.5},
        {"tgc_mode", "paper_literal"}, {"tgm_norm", "per_M"},
        {"max_anchors", 512},     {"symmetric_tgc", false},
        {"d_model", 64},          {"heads", 4},
        {"layers", 3},            {"rank", 0},
        {"d_h", 64},              {"ff_hidden", 128},
    };
    return d;
  }

  void set(const std::string& key, const nlohmann::json& v) {
    const auto& d = defaults();
    const auto it = d.find(key);
    if (it == d.end()) throw ConfigError("unknown config key '" + key + "'");
    const bool ok = it->is_boolean()          ? v.is_boolean()
                    : it->is_number_integer() ? v.is_number_integer()
                    : it->is_number()         ? v.is_number()
                                              : v.is_string();
    if (!ok) throw ConfigError("config key '" + key + "' has the wrong type");
    values_[key] = v;
  }

  void merge_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config file " + path + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
    for (const auto& [k, v] : j.items()) set(k, v);
  }

  template <typename T>
  T get(const std::string& key) const {
    return values_.at(key).get<T>();
  }
  std::string str(const std::string& key) const { return get<std::string>(key); }
  int integer(const std::string& key) const { return get<int>(key); }
  double real(const std::string& key) const { return get<double>(key); }
  std::uint64_t seed() const { return get<std::uint64_t>("seed"); }

  const nlohmann::json& values() const { return values_; }

  /// Stable 16-hex digest of the command and every effective setting.
  std::string digest(const std::string& command) const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(command + "\n" + values_.dump())));
    return buf;
  }

 private:
  nlohmann::json values_;
};

namespace cli {

inline std::vector<ProblemKind> parse_kinds(const std::string& list) {
  std::vector<ProblemKind> out;
  std::string item;
  std::istringstream in(list);
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(parse_kind(item));
  if (out.empty()) throw Error(ErrorCode::InvalidArgument, "no problem kind given");
  return out;
}

inline std::string require(const RunConfig& c, const std::string& key) {
  const auto v = c.str(key);
  if (v.empty()) throw Error(ErrorCode::InvalidArgument, "--" + key + " is required");
  return v;
}

inline void ensure_parent(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
}

inline std::ofstream open_out(const std::string& path) {
  ensure_parent(path);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::IoError, "cannot write " + path);
  return f;
}

inline std::vector<nlohmann::json> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path);
  std::vector<nlohmann::json> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ParseError, path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline std::vector<CopInstance> read_instances(const std::string& path) {
  std::vector<CopInstance> out;
  for (const auto& j : read_jsonl(path)) out.push_back(instance_from_json(j));
  return out;
}

/// Provenance record written next to every artifact.
inline void write_run_record(const std::string& path, const std::string& command, const RunConfig& c) {
  auto f = open_out(path);
  f << nlohmann::json{{"command", command}, {"config", c.values()}, {"digest", c.digest(command)}}.dump(2) << '\n';
}

inline void write_sidecar(const std::string& artifact, const std::string& command, const RunConfig& c) {
  write_run_record(artifact + ".run.json", command, c);
}

inline ProviderConfig provider_config(const RunConfig& c) {
  ProviderConfig p;
  p.mode = parse_provider_mode(c.str("provider"));
  p.dim = c.integer("embed_dim");
  p.seed = c.get<std::uint64_t>("embed_seed");
  p.endpoint = c.str("endpoint");
  p.store_path = c.str("store");
  p.max_in_flight = c.integer("max_in_flight");
  p.retries = c.integer("http_retries");
  p.timeout_ms = c.integer("http_timeout_ms");
  return p;
}

inline ModelConfig model_config(const RunConfig& c) {
  ModelConfig m;
  m.d_model = c.integer("d_model");
  m.heads = c.integer("heads");
  m.layers = c.integer("layers");
  m.rank = c.integer("rank");
  m.d_h = c.integer("d_h");
  m.ff_hidden = c.integer("ff_hidden");
  m.d_text = c.integer("embed_dim");
  return m;
}

/// Restores a model from --checkpoint, or builds a fresh one from the config.
inline std::unique_ptr<AlignModel> load_or_create_model(const RunConfig& c) {
  const auto path = c.str("checkpoint");
  if (path.empty()) return std::make_unique<AlignModel>(model_config(c), mix_seed(c.seed(), 0x6d6f64656cULL));
  const auto meta = read_checkpoint_metadata(path);
  if (!meta.is_object() || !meta.contains("model"))
    throw Error(ErrorCode::ParseError, "checkpoint " + path + " carries no model config");
  auto model = std::make_unique<AlignModel>(model_config_from_json(meta.at("model")), 0);
  load_checkpoint(model->params(), path);
  return model;
}

inline const RunConfig& require_checkpoint(const RunConfig& c) {
  require(c, "checkpoint");
  return c;
}

inline nlohmann::json checkpoint_metadata(const AlignModel& model, const std::string& stage, int epoch,
                                          const std::string& digest) {
  return {{"model", to_json(model.config())}, {"stage", stage}, {"epoch", epoch}, {"run_digest", digest}};
}

// ------------------------------------------------------------------ commands

inline int cmd_gen(const RunConfig& c, std::ostream& log) {
  const auto out = require(c, "out");
  const auto kind = parse_kind(c.str("kind"));
  const int n = c.integer("n"), count = c.integer("count");
  if (count < 0) throw Error(ErrorCode::InvalidArgument, "--count must be non-negative");
  auto f = open_out(out);
  for (int i = 0; i < count; ++i)
    f << to_json(generate_instance(kind, n, mix_seed(c.seed(), static_cast<std::uint64_t>(i)))).dump() << '\n';
  write_sidecar(out, "gen", c);
  log << "wrote " << count << " " << to_string(kind) << " instances to " << out << '\n';
  return 0;
}

inline int cmd_tai(const RunConfig& c, std::ostream& log) {
  const auto out = require(c, "out");
  const auto insts = read_instances(require(c, "input"));
  auto f = open_out(out);
  for (const auto& inst : insts) f << to_json(render_instance_document(inst, c.integer("k_neighbors"))).dump() << '\n';
  write_sidecar(out, "tai", c);
  log << "wrote " << insts.size() << " documents to " << out << '\n';
  return 0;
}

inline int cmd_embed(const RunConfig& c, std::ostream& log) {
  const auto out = require(c, "out");
  const EmbeddingProvider provider(provider_config(c));
  int count = 0;
  for (const auto& j : read_jsonl(require(c, "input"))) {
    const TaiDocument doc =
        j.contains("task_text") ? tai_from_json(j) : render_instance_document(instance_from_json(j), c.integer("k_neighbors"));
    const auto [m, task] = provider.encode(doc);
    store_embeddings(out, doc, m, task);
    ++count;
  }
  write_run_record((std::filesystem::path(out) / "run.json").string(), "embed", c);
  log << "stored " << count << " embedding files in " << out << '\n';
  return 0;
}

inline PretrainConfig pretrain_config(const RunConfig& c) {
  PretrainConfig p;
  p.tau = c.real("tau");
  p.lambda = c.real("lambda");
  p.tgc_mode = parse_tgc_mode(c.str("tgc_mode"));
  p.tgm_norm = parse_tgm_norm(c.str("tgm_norm"));
  p.symmetric_tgc = c.get<bool>("symmetric_tgc");
  p.batch = c.integer("batch");
  p.epochs = c.integer("epochs");
  p.batches_per_epoch = c.integer("batches_per_epoch");
  p.max_anchors = c.integer("max_anchors");
  p.lr = c.real("lr");
  p.seed = c.seed();
  return p;
}

/// Pool of `count` instances per kind with text and graph views.
inline AlignmentPool build_pool(const std::vector<ProblemKind>& kinds, int n, int count, std::uint64_t seed,
                                const EmbeddingProvider& provider) {
  AlignmentPool pool;
  for (auto k : kinds)
    for (int i = 0; i < count; ++i)
      pool[k].push_back(make_alignment_item(
          generate_instance(k, n, mix_seed(mix_seed(seed, 0x706f6f6cULL + static_cast<std::uint64_t>(k)), i)), provider));
  return pool;
}

inline int cmd_pretrain(const RunConfig& c, std::ostream& log) {
  const auto out = require(c, "out");
  const auto digest = c.digest("pretrain");
  const auto kinds = parse_kinds(c.str("kind"));
  const EmbeddingProvider provider(provider_config(c));
  const auto pool = build_pool(kinds, c.integer("n"), c.integer("count"), c.seed(), provider);
  auto model = load_or_create_model(c);
  if (model->config().d_text != c.integer("embed_dim"))
    throw Error(ErrorCode::DimensionMismatch, "model text width differs from embed_dim");
  const auto cfg = pretrain_config(c);
  AdamW opt;
  std::filesystem::create_directories(out);
  auto csv = open_out((std::filesystem::path(out) / "pretrain.csv").string());
  write_pretrain_csv_header(csv);
  const int every = c.integer("checkpoint_every");
  pretrain(*model, opt, pool, cfg, [&](const PretrainStats& s) {
    write_pretrain_csv_row(csv, s);
    if (every > 0 && s.epoch % every == 0)
      save_checkpoint(model->params(), (std::filesystem::path(out) / ("checkpoint_e" + std::to_string(s.epoch) + ".json")).string(),
                      checkpoint_metadata(*model, "pretrain", s.epoch, digest));
    log << "epoch " << s.epoch << " tgc " << format_real(s.tgc) << " tgm " << format_real(s.tgm) << '\n';
  });
  save_checkpoint(model->params(), (std::filesystem::path(out) / "checkpoint.json").string(),
                  checkpoint_metadata(*model, "pretrain", cfg.epochs, digest));
  write_run_record((std::filesystem::path(out) / "run.json").string(), "pretrain", c);
  return 0;
}

inline FinetuneConfig finetune_config(const RunConfig& c) {
  FinetuneConfig f;
  f.kinds = parse_kinds(c.str("kind"));
  const auto mode = c.str("mode");
  f.scheme = mode.empty() ? (f.kinds.size() > 1 ? Scheme::MTFT : Scheme::STFT) : parse_scheme(mode);
  f.n = c.integer("n");
  f.batch = c.integer("batch");
  f.samples = c.integer("samples");
  f.epochs = c.integer("epochs");
  f.batches_per_epoch = c.integer("batches_per_epoch");
  f.lr = c.real("lr");
  f.seed = c.seed();
  f.workers = c.integer("workers");
  return f;
}

inline int cmd_finetune(const RunConfig& c, std::ostream& log) {
  const auto out = require(c, "out");
  auto model = load_or_create_model(c);
  const auto cfg = finetune_config(c);
  AdamW opt;
  std::filesystem::create_directories(out);
  auto csv = open_out((std::filesystem::path(out) / "finetune.csv").string());
  write_finetune_csv_header(csv);
  finetune(*model, opt, cfg, [&](const FinetuneStats& s) {
    write_finetune_csv_row(csv, s);
    log << "epoch " << s.epoch << ' ' << to_string(s.kind) << " cost " << format_real(s.mean_cost) << '\n';
  });
  save_checkpoint(model->params(), (std::filesystem::path(out) / "checkpoint.json").string(),
                  checkpoint_metadata(*model, "finetune", cfg.epochs, c.digest("finetune")));
  write_run_record((std::filesystem::path(out) / "run.json").string(), "finetune", c);
  return 0;
}

/// Methods: exact, model, TwoOpt (nearest neighbour then 2-opt) or a heuristic name.
inline Solution solve_with(const std::string& method, const CopInstance& inst, const AlignModel* model) {
  if (method == "exact") return exact_solve(inst);
  if (method == "model") {
    if (!model) throw Error(ErrorCode::InvalidArgument, "method 'model' needs --checkpoint");
    return solve_greedy(*model, {inst})[0];
  }
  if (method == "TwoOpt") return two_opt(inst, heuristic_solve(HeuristicName::NearestNeighbor, inst));
  return heuristic_solve(parse_heuristic(method), inst);
}

template <typename Fn>
auto timed(Fn&& fn, double& ms) {
  const auto t0 = std::chrono::steady_clock::now();
  auto r = fn();
  ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

inline int cmd_solve(const RunConfig& c, std::ostream& log) {
  const auto out = require(c, "out");
  const auto insts = read_instances(require(c, "input"));
  const std::string method = c.str("mode").empty() ? "exact" : c.str("mode");
  std::unique_ptr<AlignModel> model;
  if (method == "model") model = load_or_create_model(require_checkpoint(c));
  std::vector<nlohmann::json> rows(insts.size());
  parallel_for(static_cast<int>(insts.size()), c.integer("workers"), [&](int i) {
    double ms = 0;
    const auto sol = timed([&] { return solve_with(method, insts[i], model.get()); }, ms);
    nlohmann::json violations = nlohmann::json::array();
    for (const auto& v : check_feasibility(insts[i], sol)) violations.push_back(std::string(to_string(v.kind)));
    rows[i] = {{"index", i},
               {"kind", std::string(to_string(insts[i].kind))},
               {"method", method},
               {"solution", to_json(sol)},
               {"objective", evaluate_objective(insts[i], sol)},
               {"feasible", violations.empty()},
               {"violations", violations},
               {"time_ms", ms}};
  });
  auto f = open_out(out);
  for (const auto& r : rows) f << r.dump() << '\n';
  write_sidecar(out, "solve", c);
  log << "solved " << insts.size() << " instances with " << method << '\n';
  return 0;
}

/// Every applicable method on one instance. The reference is the exact
/// optimum when the size permits, otherwise the kind's reference heuristic.
inline std::vector<EvalRecord> evaluate_instance(const CopInstance& inst, int index, const AlignModel* model) {
  std::vector<std::string> methods;
  for (auto h : heuristics_for(inst.kind)) methods.emplace_back(to_string(h));
  if (inst.kind == ProblemKind::TSP) methods.emplace_back("TwoOpt");
  if (model) methods.emplace_back("model");
  const bool exact = inst.n <= exact_size_limit(inst.kind);
  if (exact) methods.emplace_back("exact");
  std::vector<EvalRecord> recs;
  for (const auto& m : methods) {
    EvalRecord r;
    r.kind = inst.kind;
    r.n = inst.n;
    r.index = index;
    r.method = m;
    const auto sol = timed([&] { return solve_with(m, inst, model); }, r.time_ms);
    r.objective = evaluate_objective(inst, sol);
    r.feasible = check_feasibility(inst, sol).empty();
    recs.push_back(r);
  }
  const std::string ref_method = exact ? "exact" : std::string(to_string(reference_heuristic(inst.kind)));
  double ref = 0;
  for (const auto& r : recs)
    if (r.method == ref_method) ref = r.objective;
  for (auto& r : recs) {
    r.reference = ref;
    r.reference_method = ref_method;
  }
  return recs;
}

inline int cmd_eval(const RunConfig& c, std::ostream& log) {
  const auto out = require(c, "out");
  const auto insts = read_instances(require(c, "input"));
  std::unique_ptr<AlignModel> model;
  if (!c.str("checkpoint").empty()) model = load_or_create_model(c);
  std::vector<std::vector<EvalRecord>> per(insts.size());
  parallel_for(static_cast<int>(insts.size()), c.integer("workers"),
               [&](int i) { per[i] = evaluate_instance(insts[i], i, model.get()); });
  auto f = open_out(out);
  write_eval_csv_header(f);
  for (const auto& recs : per)
    for (const auto& r : recs) write_eval_csv_row(f, r);
  write_sidecar(out, "eval", c);
  log << "evaluated " << insts.size() << " instances into " << out << '\n';
  return 0;
}

inline int cmd_report(const RunConfig& c, std::ostream& log) {
  const auto input = require(c, "input");
  std::ifstream in(input);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + input);
  const auto rows = eval_report(read_eval_csv(in));
  std::ostringstream table;
  write_report_csv_header(table);
  for (const auto& r : rows) write_report_csv_row(table, r);
  const auto out = c.str("out");
  if (!out.empty()) {
    auto f = open_out(out);
    f << table.str();
    write_sidecar(out, "report", c);
  }
  log << table.str();
  return 0;
}

inline const std::vector<std::string>& commands() {
  static const std::vector<std::string> names = {"gen", "tai", "embed", "pretrain", "finetune", "solve", "eval", "report"};
  return names;
}

inline int run(const std::string& command, const RunConfig& c, std::ostream& log) {
  if (command == "gen") return cmd_gen(c, log);
  if (command == "tai") return cmd_tai(c, log);
  if (command == "embed") return cmd_embed(c, log);
  if (command == "pretrain") return cmd_pretrain(c, log);
  if (command == "finetune") return cmd_finetune(c, log);
  if (command == "solve") return cmd_solve(c, log);
  if (command == "eval") return cmd_eval(c, log);
  if (command == "report") return cmd_report(c, log);
  throw Error(ErrorCode::InvalidArgument, "unknown command '" + command + "'");
}

}  // namespace cli
}  // namespace alignopt
