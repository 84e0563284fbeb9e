#pragma once

// Experiment configuration and the file-based pipeline behind the CLI:
// simulate -> discover -> train -> eval, with artifacts named {method}_{seed}.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <future>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "crl/agent_q.hpp"
#include "crl/cate_engine.hpp"
#include "crl/causal_discovery.hpp"
#include "crl/crl_trainer.hpp"
#include "crl/dataset.hpp"
#include "crl/errors.hpp"
#include "crl/eval_harness.hpp"
#include "crl/patient_sim.hpp"
#include "crl/rng.hpp"

namespace crl {

namespace fs = std::filesystem;

struct ModelSource {
  // When set, the transition table is read from this JSON file and the
  // generator parameters are ignored.
  std::optional<std::string> path;
  double strength = 0.95;
  std::uint64_t seed = 0;
};

struct DiscoveryParams {
  double alpha = 0.05;
  int max_cond_size = 3;
  int n_log_episodes = 2000;
  std::uint64_t seed = 7;
  int min_count = 10;
};

struct EvalParams {
  std::vector<EvalMode> modes{EvalMode::RlOnly, EvalMode::StrategyConsistent};
  int episodes_per_snapshot = 30;
  int final_runs = 100;
  int window = 30;
  Thresholds thresholds{};
};

struct ExperimentConfig {
  ModelSource model;
  RewardParams reward;
  EpisodeConfig episode;
  std::vector<Method> methods{kAllMethods.begin(), kAllMethods.end()};
  int epochs = 1500;
  int episodes_per_epoch = 30;
  TrainHyperparams hyperparams;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  DiscoveryParams discovery;
  EvalParams eval;

  void validate() const {
    if (methods.empty()) throw ConfigError("method list must be nonempty");
    if (seeds.empty()) throw ConfigError("seed list must be nonempty");
    for (std::size_t i = 0; i < methods.size(); ++i)
      for (std::size_t j = i + 1; j < methods.size(); ++j)
        if (methods[i] == methods[j]) throw ConfigError("duplicate method: " + std::string(label(methods[i])));
    for (std::size_t i = 0; i < seeds.size(); ++i)
      for (std::size_t j = i + 1; j < seeds.size(); ++j)
        if (seeds[i] == seeds[j]) throw ConfigError("duplicate seed: " + std::to_string(seeds[i]));
    if (!(model.strength >= 0.0 && model.strength <= 1.0)) throw ConfigError("model.strength must lie in [0, 1]");
    reward.validate();
    episode.validate();
    method_config(methods.front()).validate();
    if (!(discovery.alpha > 0.0 && discovery.alpha < 1.0)) throw ConfigError("discovery.alpha must lie in (0, 1)");
    if (discovery.max_cond_size < 0) throw ConfigError("discovery.max_cond_size must be >= 0");
    if (discovery.n_log_episodes < 1) throw ConfigError("discovery.n_log_episodes must be >= 1");
    if (discovery.min_count < 1) throw ConfigError("discovery.min_count must be >= 1");
    if (eval.modes.empty()) throw ConfigError("eval.modes must be nonempty");
    if (eval.episodes_per_snapshot < 1) throw ConfigError("eval.episodes_per_snapshot must be >= 1");
    if (eval.final_runs < 1) throw ConfigError("eval.final_runs must be >= 1");
    if (eval.window < 1) throw ConfigError("eval.window must be >= 1");
  }

  MethodConfig method_config(Method m) const { return MethodConfig{m, epochs, episodes_per_epoch, hyperparams}; }

  bool needs_cate() const {
    return std::any_of(methods.begin(), methods.end(), [](Method m) { return needs_suggestion(m); });
  }
};

// --- JSON ------------------------------------------------------------------

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  nlohmann::json model{{"strength", c.model.strength}, {"seed", c.model.seed}};
  model["path"] = c.model.path ? nlohmann::json(*c.model.path) : nlohmann::json(nullptr);
  nlohmann::json methods = nlohmann::json::array();
  for (Method m : c.methods) methods.push_back(std::string(label(m)));
  nlohmann::json modes = nlohmann::json::array();
  for (EvalMode m : c.eval.modes) modes.push_back(std::string(label(m)));
  j = nlohmann::json{
      {"model", model},
      {"reward", c.reward},
      {"episode", c.episode},
      {"methods", methods},
      {"training",
       {{"epochs", c.epochs},
        {"episodes_per_epoch", c.episodes_per_epoch},
        {"alpha", c.hyperparams.alpha},
        {"gamma", c.hyperparams.gamma},
        {"epsilon", c.hyperparams.epsilon}}},
      {"seeds", c.seeds},
      {"discovery",
       {{"alpha", c.discovery.alpha},
        {"max_cond_size", c.discovery.max_cond_size},
        {"n_log_episodes", c.discovery.n_log_episodes},
        {"seed", c.discovery.seed},
        {"min_count", c.discovery.min_count}}},
      {"eval",
       {{"modes", modes},
        {"episodes_per_snapshot", c.eval.episodes_per_snapshot},
        {"final_runs", c.eval.final_runs},
        {"window", c.eval.window},
        {"thresholds",
         {{"high_return", c.eval.thresholds.high_return},
          {"low_return", c.eval.thresholds.low_return},
          {"long_episode", c.eval.thresholds.long_episode}}}}}};
}

// Missing keys keep their defaults, so a partial file is a valid override.
inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  ExperimentConfig out;
  try {
    if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
    if (j.contains("model")) {
      const auto& m = j.at("model");
      if (m.contains("path") && !m.at("path").is_null()) out.model.path = m.at("path").get<std::string>();
      out.model.strength = m.value("strength", out.model.strength);
      out.model.seed = m.value("seed", out.model.seed);
    }
    if (j.contains("reward")) out.reward = j.at("reward").get<RewardParams>();
    if (j.contains("episode")) out.episode = j.at("episode").get<EpisodeConfig>();
    if (j.contains("methods")) {
      out.methods.clear();
      for (const auto& m : j.at("methods")) {
        const auto parsed = parse_method(m.get<std::string>());
        if (!parsed) throw ConfigError("unknown method: " + m.get<std::string>());
        out.methods.push_back(*parsed);
      }
    }
    if (j.contains("training")) {
      const auto& t = j.at("training");
      out.epochs = t.value("epochs", out.epochs);
      out.episodes_per_epoch = t.value("episodes_per_epoch", out.episodes_per_epoch);
      out.hyperparams.alpha = t.value("alpha", out.hyperparams.alpha);
      out.hyperparams.gamma = t.value("gamma", out.hyperparams.gamma);
      out.hyperparams.epsilon = t.value("epsilon", out.hyperparams.epsilon);
    }
    if (j.contains("seeds")) out.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("discovery")) {
      const auto& d = j.at("discovery");
      out.discovery.alpha = d.value("alpha", out.discovery.alpha);
      out.discovery.max_cond_size = d.value("max_cond_size", out.discovery.max_cond_size);
      out.discovery.n_log_episodes = d.value("n_log_episodes", out.discovery.n_log_episodes);
      out.discovery.seed = d.value("seed", out.discovery.seed);
      out.discovery.min_count = d.value("min_count", out.discovery.min_count);
    }
    if (j.contains("eval")) {
      const auto& e = j.at("eval");
      if (e.contains("modes")) {
        out.eval.modes.clear();
        for (const auto& m : e.at("modes")) {
          const auto parsed = parse_eval_mode(m.get<std::string>());
          if (!parsed) throw ConfigError("unknown eval mode: " + m.get<std::string>());
          out.eval.modes.push_back(*parsed);
        }
      }
      out.eval.episodes_per_snapshot = e.value("episodes_per_snapshot", out.eval.episodes_per_snapshot);
      out.eval.final_runs = e.value("final_runs", out.eval.final_runs);
      out.eval.window = e.value("window", out.eval.window);
      if (e.contains("thresholds")) {
        const auto& t = e.at("thresholds");
        out.eval.thresholds.high_return = t.value("high_return", out.eval.thresholds.high_return);
        out.eval.thresholds.low_return = t.value("low_return", out.eval.thresholds.low_return);
        out.eval.thresholds.long_episode = t.value("long_episode", out.eval.thresholds.long_episode);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  }
  out.validate();
  c = out;
}

// --- File helpers ----------------------------------------------------------

inline nlohmann::json read_json_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

inline void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw ConfigError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw ConfigError("write failed: " + path.string());
}

inline void write_json_file(const fs::path& path, const nlohmann::json& j) { write_text_file(path, j.dump(2) + "\n"); }

inline ExperimentConfig load_config(const fs::path& path) { return read_json_file(path).get<ExperimentConfig>(); }

inline SimSetup make_setup(const ExperimentConfig& cfg) {
  SimSetup setup;
  if (cfg.model.path) {
    if (!fs::exists(*cfg.model.path)) throw ConfigError("transition model not found: " + *cfg.model.path);
    setup.model = read_json_file(*cfg.model.path).get<TransitionModel>();
  } else {
    setup.model = default_transition_model(cfg.model.strength, cfg.model.seed);
  }
  setup.episode = cfg.episode;
  setup.reward = cfg.reward;
  return setup;
}

// --- Artifact names --------------------------------------------------------

inline std::string run_name(Method m, std::uint64_t seed) { return std::string(label(m)) + "_" + std::to_string(seed); }

struct RunPaths {
  fs::path q;          // final Q-table, JSON
  fs::path log;        // per-episode training returns, CSV
  fs::path snapshots;  // Q after every epoch, CSV
};

inline RunPaths run_paths(const fs::path& dir, Method m, std::uint64_t seed) {
  const std::string n = run_name(m, seed);
  return {dir / (n + ".q.json"), dir / (n + ".log.csv"), dir / (n + ".snapshots.csv")};
}

inline constexpr std::string_view kGraphFile = "graph.json";
inline constexpr std::string_view kCateFile = "cate.json";
inline constexpr std::string_view kEvalFile = "eval.json";

// --- Snapshot CSV ----------------------------------------------------------

inline constexpr std::string_view kSnapshotHeader = "epoch,state,a0,a1,a2,a3,a4,a5,a6";

inline void write_snapshots_csv(std::ostream& out, const std::vector<QTable>& snapshots) {
  out << kSnapshotHeader << '\n';
  for (std::size_t e = 0; e < snapshots.size(); ++e) {
    for (int s = 0; s < kNumStates; ++s) {
      out << e << ',' << state_label(decode_state(s));
      for (int a = 0; a < kNumActions; ++a) out << ',' << format_double(snapshots[e].q[s][a]);
      out << '\n';
    }
  }
}

inline std::vector<QTable> read_snapshots_csv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open snapshots: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kSnapshotHeader) throw ParseError(path.string() + ": bad snapshot header", 1);
  std::vector<QTable> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = detail::split_csv(line);
    if (f.size() != 2 + kNumActions) throw ParseError(path.string() + ": expected 9 fields", line_no);
    const auto epoch = detail::parse_field<std::size_t>(f[0], line_no, "epoch");
    const auto st = parse_state_label(f[1]);
    if (!st) throw ParseError(path.string() + ": unknown state label", line_no);
    if (epoch == out.size()) out.emplace_back();
    if (epoch + 1 != out.size()) throw ParseError(path.string() + ": epochs out of order", line_no);
    for (int a = 0; a < kNumActions; ++a)
      out.back().q[encode_state(*st)][a] = detail::parse_field<double>(f[2 + a], line_no, "q");
  }
  return out;
}

// --- Stages ----------------------------------------------------------------

inline Dataset simulate_dataset(const SimSetup& setup, int n_episodes, std::uint64_t seed) {
  if (n_episodes < 1) throw DomainError("n_episodes must be >= 1");
  Rng rng(seed);
  return collect_random_trajectories(setup.model, setup.episode, n_episodes, rng, setup.reward);
}

struct DiscoveryResult {
  CausalGraph graph;
  CateTable cate;
};

inline DiscoveryResult discover(const Dataset& data, const DiscoveryParams& p) {
  return {pc_learn(discretize(data), PcOptions{p.alpha, p.max_cond_size}), estimate_cate(data)};
}

inline std::vector<fs::path> write_discovery(const DiscoveryResult& r, const fs::path& out_dir) {
  const auto g = out_dir / kGraphFile, c = out_dir / kCateFile;
  write_json_file(g, r.graph);
  write_json_file(c, r.cate);
  return {g, c};
}

inline CateTable load_cate(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("CATE artifact not found: " + path.string());
  return read_json_file(path).get<CateTable>();
}

// One training run per (method, seed), fanned out across threads. Each run
// owns its RNG streams and output files, so scheduling cannot change bytes.
inline std::vector<fs::path> run_training(const ExperimentConfig& cfg, const SimSetup& setup,
                                          const std::optional<CateTable>& cate, const fs::path& out_dir) {
  cfg.validate();
  std::optional<SuggestionPolicy> policy;
  if (cate) policy.emplace(*cate, cfg.discovery.min_count);
  if (cfg.needs_cate() && !policy)
    throw ConfigError("methods dag/crl-static/crl-dynamic require a CATE artifact (run discover first)");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw ConfigError("cannot create directory " + out_dir.string() + ": " + ec.message());

  std::vector<std::future<void>> jobs;
  for (Method m : cfg.methods) {
    for (std::uint64_t seed : cfg.seeds) {
      jobs.push_back(std::async(std::launch::async, [&, m, seed] {
        const auto res = train(setup, cfg.method_config(m), policy ? &*policy : nullptr, seed);
        const RunPaths p = run_paths(out_dir, m, seed);
        write_json_file(p.q, res.q);
        std::ostringstream log, snaps;
        write_train_log_csv(log, res.log);
        write_snapshots_csv(snaps, res.log.snapshots);
        write_text_file(p.log, log.str());
        write_text_file(p.snapshots, snaps.str());
      }));
    }
  }
  // Drain every job before rethrowing so no thread outlives the captures.
  std::exception_ptr first;
  for (auto& j : jobs) {
    try {
      j.get();
    } catch (...) {
      if (!first) first = std::current_exception();
    }
  }
  if (first) std::rethrow_exception(first);

  std::vector<fs::path> written;
  for (Method m : cfg.methods)
    for (std::uint64_t seed : cfg.seeds) {
      const RunPaths p = run_paths(out_dir, m, seed);
      written.insert(written.end(), {p.q, p.log, p.snapshots});
    }
  return written;
}

inline std::uint64_t eval_seed(std::uint64_t seed, std::uint64_t epoch, EvalMode mode) {
  return mix_seed(mix_seed(seed, epoch), mode == EvalMode::RlOnly ? 1 : 2);
}

// Any missing snapshot file aborts before work starts, naming every path.
inline void require_snapshots(const ExperimentConfig& cfg, const fs::path& train_dir) {
  std::vector<std::string> missing;
  for (Method m : cfg.methods)
    for (std::uint64_t seed : cfg.seeds) {
      const auto p = run_paths(train_dir, m, seed).snapshots;
      if (!fs::exists(p)) missing.push_back(p.string());
    }
  if (missing.empty()) return;
  std::string msg = "missing snapshots:";
  for (const auto& p : missing) msg += "\n  " + p;
  throw ConfigError(msg);
}

// Evaluates every epoch snapshot of every run in `mode`. Strategy-consistent
// evaluation replays each method's training-time weights for that epoch.
inline EvalReport run_evaluation(const ExperimentConfig& cfg, const SimSetup& setup, const fs::path& train_dir,
                                 EvalMode mode, const std::optional<CateTable>& cate) {
  cfg.validate();
  require_snapshots(cfg, train_dir);
  std::optional<SuggestionPolicy> policy;
  if (mode == EvalMode::StrategyConsistent) {
    if (cfg.needs_cate() && !cate)
      throw ConfigError("strategy-consistent evaluation of dag/crl methods requires a CATE artifact");
    if (cate) policy.emplace(*cate, cfg.discovery.min_count);
  }

  struct RunEval {
    std::vector<std::vector<EpisodeSummary>> per_epoch;
    std::vector<EpisodeSummary> final_runs;
  };
  std::vector<std::future<RunEval>> jobs;
  for (Method m : cfg.methods) {
    for (std::uint64_t seed : cfg.seeds) {
      jobs.push_back(std::async(std::launch::async, [&, m, seed] {
        const auto snaps = read_snapshots_csv(run_paths(train_dir, m, seed).snapshots);
        if (snaps.size() != static_cast<std::size_t>(cfg.epochs))
          throw ConfigError(run_name(m, seed) + ": expected " + std::to_string(cfg.epochs) + " snapshots, found " +
                            std::to_string(snaps.size()));
        const SuggestionPolicy* sp = policy && needs_suggestion(m) ? &*policy : nullptr;
        const double eps = cfg.hyperparams.epsilon;
        RunEval r;
        for (int e = 0; e < cfg.epochs; ++e)
          r.per_epoch.push_back(evaluate_snapshot(snaps[e], sp, mode, weight_schedule(m, e, cfg.epochs), eps, setup,
                                                  cfg.eval.episodes_per_snapshot, eval_seed(seed, e, mode)));
        r.final_runs = evaluate_snapshot(snaps.back(), sp, mode, weight_schedule(m, cfg.epochs - 1, cfg.epochs), eps, setup,
                                         cfg.eval.final_runs, eval_seed(seed, 1'000'000'007ULL, mode));
        return r;
      }));
    }
  }

  EvalReport report;
  report.mode = mode;
  report.window = cfg.eval.window;
  report.thresholds = cfg.eval.thresholds;
  std::size_t k = 0;
  std::exception_ptr first;
  std::vector<RunEval> results;
  for (auto& j : jobs) {
    try {
      results.push_back(j.get());
    } catch (...) {
      if (!first) first = std::current_exception();
    }
  }
  if (first) std::rethrow_exception(first);
  for (Method m : cfg.methods) {
    std::vector<std::vector<std::vector<EpisodeSummary>>> per_seed;
    std::vector<std::vector<EpisodeSummary>> finals;
    for (std::size_t s = 0; s < cfg.seeds.size(); ++s, ++k) {
      per_seed.push_back(std::move(results[k].per_epoch));
      finals.push_back(std::move(results[k].final_runs));
    }
    report.methods.push_back(build_method_report(std::string(label(m)), per_seed, finals, cfg.eval.thresholds, cfg.eval.window));
  }
  return report;
}

inline void from_json(const nlohmann::json& j, SummaryStats& s) {
  s.mean_return = j.at("mean_return").get<double>();
  s.p_gt150 = j.at("p_gt150").get<double>();
  s.p_lt50 = j.at("p_lt50").get<double>();
  s.mean_len = j.at("mean_len").get<double>();
  s.p_ge40 = j.at("p_ge40").get<double>();
  s.n_runs = j.at("n_runs").get<long>();
}

inline void from_json(const nlohmann::json& j, EvalReport& r) {
  EvalReport out;
  try {
    const auto mode = parse_eval_mode(j.at("mode").get<std::string>());
    if (!mode) throw ConfigError("eval report: unknown mode");
    out.mode = *mode;
    out.window = j.at("window").get<int>();
    const auto& t = j.at("thresholds");
    out.thresholds = {t.at("high_return").get<double>(), t.at("low_return").get<double>(), t.at("long_episode").get<double>()};
    for (const auto& m : j.at("methods")) {
      MethodReport rep;
      rep.method = m.at("method").get<std::string>();
      for (const auto& e : m.at("epochs"))
        rep.epochs.push_back({e.at("mean_return").get<double>(), e.at("smoothed_return").get<double>(),
                              e.at("p_gt150").get<double>(), e.at("p_lt50").get<double>(), e.at("mean_len").get<double>(),
                              e.at("p_ge40").get<double>()});
      if (!m.at("final").is_null()) rep.final_stats = m.at("final").get<SummaryStats>();
      out.methods.push_back(std::move(rep));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("eval report: ") + e.what());
  }
  r = std::move(out);
}

// eval.json plus metrics.csv and the SVG charts, all under out_dir.
inline std::vector<fs::path> write_eval(const EvalReport& report, const fs::path& out_dir) {
  auto written = render_report(report, out_dir);
  const auto j = out_dir / kEvalFile;
  write_json_file(j, report);
  written.insert(written.begin(), j);
  return written;
}

inline fs::path mode_dir(const fs::path& root, EvalMode m) { return root / label(m); }

// --- Policy export ---------------------------------------------------------

// state label -> action label, all 18 states.
inline nlohmann::json policy_array(const QTable& q) {
  nlohmann::json out = nlohmann::json::object();
  for (int s = 0; s < kNumStates; ++s) out[state_label(decode_state(s))] = std::string(label(greedy_action(q, s)));
  return out;
}

inline nlohmann::json policy_array(const SuggestionPolicy& p) {
  nlohmann::json out = nlohmann::json::object();
  for (int s = 0; s < kNumStates; ++s) {
    const PatientState st = decode_state(s);
    out[state_label(st)] = std::string(label(suggest_action(p, st)));
  }
  return out;
}

}  // namespace crl
