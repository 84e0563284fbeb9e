// Command-line front end for the pipeline. Exit codes: 0 success, 1 usage,
// 2 data or configuration error.

#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "crl/experiment.hpp"

namespace fs = std::filesystem;
using namespace crl;

namespace {

constexpr int kUsage = 1;
constexpr int kDataError = 2;

struct Overrides {
  std::vector<std::string> methods;
  std::vector<std::uint64_t> seeds;
  std::optional<int> epochs;
  std::optional<int> episodes_per_epoch;
};

void add_overrides(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--methods", o.methods, "Subset of rl, dag, crl-static, crl-dynamic")->delimiter(',');
  cmd->add_option("--seeds", o.seeds, "Training seeds")->delimiter(',');
  cmd->add_option("--epochs", o.epochs, "Training epochs")->check(CLI::PositiveNumber);
  cmd->add_option("--episodes-per-epoch", o.episodes_per_epoch, "Training episodes per epoch")->check(CLI::PositiveNumber);
}

ExperimentConfig resolve_config(const std::string& path, const Overrides& o) {
  ExperimentConfig cfg = path.empty() ? ExperimentConfig{} : load_config(path);
  if (!o.methods.empty()) {
    cfg.methods.clear();
    for (const auto& m : o.methods) {
      const auto parsed = parse_method(m);
      if (!parsed) throw CLI::ValidationError("--methods", "unknown method '" + m + "'");
      cfg.methods.push_back(*parsed);
    }
  }
  if (!o.seeds.empty()) cfg.seeds = o.seeds;
  if (o.epochs) cfg.epochs = *o.epochs;
  if (o.episodes_per_epoch) cfg.episodes_per_epoch = *o.episodes_per_epoch;
  cfg.validate();
  return cfg;
}

void print_written(const std::vector<fs::path>& paths) {
  for (const auto& p : paths) std::cout << p.string() << '\n';
}

std::string summary_table(const EvalReport& r) {
  std::ostringstream o;
  o << "mode " << label(r.mode) << '\n';
  o << std::left << std::setw(14) << "method" << std::right << std::setw(12) << "final_sm" << std::setw(12) << "mean_ret"
    << std::setw(10) << "p_gt150" << std::setw(10) << "p_lt50" << std::setw(10) << "mean_len" << std::setw(10) << "p_ge40"
    << '\n';
  o << std::fixed << std::setprecision(3);
  for (const auto& m : r.methods) {
    o << std::left << std::setw(14) << m.method << std::right << std::setw(12) << m.epochs.back().smoothed_return;
    if (m.final_stats) {
      const auto& f = *m.final_stats;
      o << std::setw(12) << f.mean_return << std::setw(10) << f.p_gt150 << std::setw(10) << f.p_lt50 << std::setw(10)
        << f.mean_len << std::setw(10) << f.p_ge40;
    }
    o << '\n';
  }
  return o.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Causal-structure-aware Q-learning workbench for simulated reminiscence sessions"};
  app.require_subcommand(1);

  // default-config
  auto* dc = app.add_subcommand("default-config", "Print the default experiment config as JSON");
  std::string dc_out;
  dc->add_option("--out", dc_out, "Write to this file instead of stdout");

  // simulate
  auto* sim = app.add_subcommand("simulate", "Collect uniformly randomized interaction logs as CSV");
  std::string sim_config, sim_out;
  std::optional<int> sim_episodes;
  std::optional<std::uint64_t> sim_seed;
  sim->add_option("--config", sim_config, "Experiment config JSON");
  sim->add_option("--episodes", sim_episodes, "Number of episodes (default: discovery.n_log_episodes)")
      ->check(CLI::PositiveNumber);
  sim->add_option("--seed", sim_seed, "Logging seed (default: discovery.seed)");
  sim->add_option("--out", sim_out, "Output CSV path")->required();

  // discover
  auto* disc = app.add_subcommand("discover", "Learn the causal graph and CATE table from a log");
  std::string disc_data, disc_out, disc_config;
  disc->add_option("--data", disc_data, "Dataset CSV")->required();
  disc->add_option("--out", disc_out, "Output directory for graph.json and cate.json")->required();
  disc->add_option("--config", disc_config, "Experiment config JSON (discovery section)");

  // train
  auto* tr = app.add_subcommand("train", "Train every (method, seed) run and save Q-tables, logs and snapshots");
  std::string tr_config, tr_out, tr_cate;
  Overrides tr_over;
  tr->add_option("--config", tr_config, "Experiment config JSON");
  tr->add_option("--out", tr_out, "Output directory")->required();
  tr->add_option("--cate", tr_cate, "CATE JSON from discover (needed by dag/crl methods)");
  add_overrides(tr, tr_over);

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate every epoch snapshot and write metrics.csv, SVGs and eval.json");
  std::string ev_config, ev_train, ev_out, ev_cate, ev_mode = "both";
  Overrides ev_over;
  ev->add_option("--config", ev_config, "Experiment config JSON (default: <train-dir>/config.json)");
  ev->add_option("--train-dir", ev_train, "Directory written by train")->required();
  ev->add_option("--out", ev_out, "Output directory; one subdirectory per mode")->required();
  ev->add_option("--cate", ev_cate, "CATE JSON (strategy-consistent mode only)");
  ev->add_option("--mode", ev_mode, "rl-only, strategy-consistent or both")
      ->check(CLI::IsMember({"rl-only", "strategy-consistent", "both"}));
  add_overrides(ev, ev_over);

  // report
  auto* rep = app.add_subcommand("report", "Re-render an evaluation and/or export a policy array");
  std::string rep_eval, rep_out, rep_policy, rep_q, rep_cate;
  bool rep_json = false;
  int rep_min_count = 10;
  rep->add_option("--eval-dir", rep_eval, "Directory written by eval");
  rep->add_option("--out", rep_out, "Render into this directory (default: in place)");
  rep->add_flag("--json", rep_json, "Print the full reports as one JSON document");
  rep->add_option("--export-policy", rep_policy, "Write a state -> action policy array JSON");
  auto* q_opt = rep->add_option("--q", rep_q, "Q-table JSON to export greedily");
  auto* c_opt = rep->add_option("--cate", rep_cate, "CATE JSON to export as suggestions");
  rep->add_option("--min-count", rep_min_count, "Support threshold for CATE suggestions")->check(CLI::PositiveNumber);
  q_opt->excludes(c_opt);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*dc) {
      const nlohmann::json j = ExperimentConfig{};
      if (dc_out.empty()) std::cout << j.dump(2) << '\n';
      else write_json_file(dc_out, j);
      return 0;
    }

    if (*sim) {
      const ExperimentConfig cfg = sim_config.empty() ? ExperimentConfig{} : load_config(sim_config);
      const SimSetup setup = make_setup(cfg);
      const int n = sim_episodes.value_or(cfg.discovery.n_log_episodes);
      const Dataset data = simulate_dataset(setup, n, sim_seed.value_or(cfg.discovery.seed));
      std::ostringstream csv;
      write_dataset_csv(csv, data);
      write_text_file(sim_out, csv.str());
      std::cerr << "wrote " << data.records.size() << " records from " << data.num_episodes() << " episodes\n";
      std::cout << sim_out << '\n';
      return 0;
    }

    if (*disc) {
      const ExperimentConfig cfg = disc_config.empty() ? ExperimentConfig{} : load_config(disc_config);
      const Dataset data = read_dataset_csv(disc_data);
      const DiscoveryResult r = discover(data, cfg.discovery);
      for (const auto& w : r.graph.warnings) std::cerr << "warning: " << w << '\n';
      print_written(write_discovery(r, disc_out));
      return 0;
    }

    if (*tr) {
      const ExperimentConfig cfg = resolve_config(tr_config, tr_over);
      std::optional<CateTable> cate;
      if (cfg.needs_cate()) {
        if (tr_cate.empty())
          throw ConfigError("methods dag/crl-static/crl-dynamic require --cate (the cate.json written by discover)");
        cate = load_cate(tr_cate);
      }
      const SimSetup setup = make_setup(cfg);
      auto written = run_training(cfg, setup, cate, tr_out);
      const fs::path saved = fs::path(tr_out) / "config.json";
      write_json_file(saved, cfg);
      written.push_back(saved);
      print_written(written);
      return 0;
    }

    if (*ev) {
      const std::string path = ev_config.empty() ? (fs::path(ev_train) / "config.json").string() : ev_config;
      if (!fs::exists(path)) throw ConfigError("experiment config not found: " + path);
      ExperimentConfig cfg = resolve_config(path, ev_over);
      if (ev_mode != "both") cfg.eval.modes = {*parse_eval_mode(ev_mode)};
      const SimSetup setup = make_setup(cfg);
      require_snapshots(cfg, ev_train);
      std::vector<fs::path> written;
      for (EvalMode mode : cfg.eval.modes) {
        std::optional<CateTable> cate;
        if (mode == EvalMode::StrategyConsistent && cfg.needs_cate()) {
          if (ev_cate.empty()) throw ConfigError("strategy-consistent evaluation of dag/crl methods requires --cate");
          cate = load_cate(ev_cate);
        }
        const EvalReport report = run_evaluation(cfg, setup, ev_train, mode, cate);
        const auto w = write_eval(report, mode_dir(ev_out, mode));
        written.insert(written.end(), w.begin(), w.end());
        std::cerr << summary_table(report);
      }
      print_written(written);
      return 0;
    }

    if (*rep) {
      if (rep_eval.empty() && rep_policy.empty()) {
        std::cerr << "report: nothing to do; pass --eval-dir and/or --export-policy\n";
        return kUsage;
      }
      if (!rep_policy.empty() && rep_q.empty() == rep_cate.empty()) {
        std::cerr << "report: --export-policy needs exactly one of --q or --cate\n";
        return kUsage;
      }
      if (!rep_eval.empty()) {
        std::vector<EvalReport> reports;
        for (EvalMode mode : {EvalMode::RlOnly, EvalMode::StrategyConsistent}) {
          const fs::path f = mode_dir(rep_eval, mode) / kEvalFile;
          if (fs::exists(f)) reports.push_back(read_json_file(f).get<EvalReport>());
        }
        if (reports.empty())
          throw ConfigError("no eval.json under " + (fs::path(rep_eval) / "rl-only").string() + " or " +
                            (fs::path(rep_eval) / "strategy-consistent").string());
        const fs::path root = rep_out.empty() ? fs::path(rep_eval) : fs::path(rep_out);
        nlohmann::json full = nlohmann::json::array();
        for (const auto& r : reports) {
          render_report(r, mode_dir(root, r.mode));
          if (rep_json) full.push_back(r);
          else std::cout << summary_table(r);
        }
        if (rep_json) std::cout << nlohmann::json{{"reports", full}}.dump(2) << '\n';
      }
      if (!rep_policy.empty()) {
        const nlohmann::json policy = !rep_q.empty()
                                          ? policy_array(read_json_file(rep_q).get<QTable>())
                                          : policy_array(SuggestionPolicy(load_cate(rep_cate), rep_min_count));
        write_json_file(rep_policy, policy);
        if (!rep_json) std::cout << rep_policy << '\n';
      }
      return 0;
    }
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << '\n';
    return kUsage;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kDataError;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kDataError;
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDataError;
  }
  return kUsage;
}
