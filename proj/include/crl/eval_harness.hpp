#pragma once

// Snapshot evaluation under RL-only and strategy-consistent execution, the
// per-epoch figure metrics, and their CSV / SVG rendering.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "crl/agent_q.hpp"
#include "crl/cate_engine.hpp"
#include "crl/crl_trainer.hpp"
#include "crl/errors.hpp"
#include "crl/patient_sim.hpp"
#include "crl/rng.hpp"

namespace crl {

enum class EvalMode { RlOnly, StrategyConsistent };

inline std::string_view label(EvalMode m) { return m == EvalMode::RlOnly ? "rl-only" : "strategy-consistent"; }

inline std::optional<EvalMode> parse_eval_mode(std::string_view s) {
  if (s == "rl-only") return EvalMode::RlOnly;
  if (s == "strategy-consistent") return EvalMode::StrategyConsistent;
  return std::nullopt;
}

struct EvalCounters {
  long steps = 0;
  long forced = 0;
  long rl_branch = 0;
  long dag_branch = 0;
  long explore_branch = 0;
};

// Runs `n_episodes` with a frozen Q-table. RL-only acts greedily; the
// strategy-consistent mode keeps the training-time mix and epsilon. The
// forced GiveChoice rule applies in both.
inline std::vector<EpisodeSummary> evaluate_snapshot(const QTable& q, const SuggestionPolicy* suggestion, EvalMode mode,
                                                     const MixedWeights& weights, double epsilon, const SimSetup& setup,
                                                     int n_episodes, std::uint64_t seed,
                                                     EvalCounters* counters = nullptr) {
  EpisodeConfig ec = setup.episode;
  ec.seed = mix_seed(seed, 11);
  PatientEnv env(setup.model, ec, setup.reward);
  Rng agent_rng(mix_seed(seed, 12));
  const int K = setup.episode.persistence_K;
  const TrainHyperparams unused{};
  EvalCounters local;
  EvalCounters& c = counters ? *counters : local;

  std::vector<EpisodeSummary> out;
  out.reserve(std::max(0, n_episodes));
  for (int i = 0; i < n_episodes; ++i) {
    out.push_back(run_episode(env, nullptr, unused, [&](const PatientState& s, const EpisodeStatus& st) {
      ++c.steps;
      if (forced_give_choice(st, K)) {
        ++c.forced;
        return Action::GiveChoice;
      }
      if (mode == EvalMode::RlOnly) {
        ++c.rl_branch;
        return greedy_action(q, encode_state(s));
      }
      const Selection sel = mixed_select_branch(weights, q, suggestion, s, epsilon, agent_rng);
      switch (sel.branch) {
        case Branch::Rl: ++c.rl_branch; break;
        case Branch::Dag: ++c.dag_branch; break;
        case Branch::Explore: ++c.explore_branch; break;
      }
      return sel.action;
    }));
  }
  return out;
}

// Trailing moving average; the first window-1 outputs average what is available.
inline std::vector<double> smooth(const std::vector<double>& series, int window = 30) {
  if (window < 1) throw DomainError("smooth: window must be >= 1");
  std::vector<double> out(series.size());
  for (std::size_t i = 0; i < series.size(); ++i) {
    const std::size_t n = std::min<std::size_t>(i + 1, window);
    double sum = 0.0;
    for (std::size_t k = i + 1 - n; k <= i; ++k) sum += series[k];
    out[i] = sum / static_cast<double>(n);
  }
  return out;
}

enum class Compare { Greater, Less, GreaterEqual };

inline double threshold_proportion(const std::vector<double>& series, Compare op, double threshold) {
  if (series.empty()) throw DomainError("threshold_proportion: empty series");
  std::size_t hits = 0;
  for (double v : series) {
    const bool ok = op == Compare::Greater ? v > threshold : op == Compare::Less ? v < threshold : v >= threshold;
    hits += ok ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(series.size());
}

struct Thresholds {
  double high_return = 150.0;
  double low_return = 50.0;
  double long_episode = 40.0;
};

struct EpochMetrics {
  double mean_return = 0.0;
  double smoothed_return = 0.0;
  double p_gt150 = 0.0;
  double p_lt50 = 0.0;
  double mean_len = 0.0;
  double p_ge40 = 0.0;
};

struct SummaryStats {
  double mean_return = 0.0;
  double p_gt150 = 0.0;
  double p_lt50 = 0.0;
  double mean_len = 0.0;
  double p_ge40 = 0.0;
  long n_runs = 0;
};

inline SummaryStats summarize(const std::vector<EpisodeSummary>& episodes, const Thresholds& th) {
  if (episodes.empty()) throw DomainError("summarize: no episodes");
  std::vector<double> rets, lens;
  rets.reserve(episodes.size());
  lens.reserve(episodes.size());
  for (const auto& e : episodes) {
    rets.push_back(e.ret);
    lens.push_back(e.length);
  }
  SummaryStats s;
  double total = 0.0, total_len = 0.0;
  for (double r : rets) total += r;
  for (double l : lens) total_len += l;
  s.mean_return = total / static_cast<double>(rets.size());
  s.mean_len = total_len / static_cast<double>(lens.size());
  s.p_gt150 = threshold_proportion(rets, Compare::Greater, th.high_return);
  s.p_lt50 = threshold_proportion(rets, Compare::Less, th.low_return);
  s.p_ge40 = threshold_proportion(lens, Compare::GreaterEqual, th.long_episode);
  s.n_runs = static_cast<long>(episodes.size());
  return s;
}

struct MethodReport {
  std::string method;
  std::vector<EpochMetrics> epochs;
  std::optional<SummaryStats> final_stats;
};

struct EvalReport {
  EvalMode mode = EvalMode::RlOnly;
  int window = 30;
  Thresholds thresholds{};
  std::vector<MethodReport> methods;
};

// Pools each epoch's evaluation episodes across seeds, then smooths the
// mean-return series. per_seed[seed][epoch] holds that epoch's episodes.
inline MethodReport build_method_report(std::string method,
                                        const std::vector<std::vector<std::vector<EpisodeSummary>>>& per_seed,
                                        const std::vector<std::vector<EpisodeSummary>>& final_per_seed,
                                        const Thresholds& th, int window) {
  MethodReport rep;
  rep.method = std::move(method);
  if (per_seed.empty()) throw DomainError("build_method_report: no seeds");
  const std::size_t n_epochs = per_seed.front().size();
  for (const auto& s : per_seed)
    if (s.size() != n_epochs) throw DomainError("build_method_report: seeds disagree on epoch count");
  std::vector<double> means;
  for (std::size_t e = 0; e < n_epochs; ++e) {
    std::vector<EpisodeSummary> pooled;
    for (const auto& s : per_seed) pooled.insert(pooled.end(), s[e].begin(), s[e].end());
    const SummaryStats st = summarize(pooled, th);
    EpochMetrics m;
    m.mean_return = st.mean_return;
    m.p_gt150 = st.p_gt150;
    m.p_lt50 = st.p_lt50;
    m.mean_len = st.mean_len;
    m.p_ge40 = st.p_ge40;
    rep.epochs.push_back(m);
    means.push_back(st.mean_return);
  }
  const auto sm = smooth(means, window);
  for (std::size_t e = 0; e < n_epochs; ++e) rep.epochs[e].smoothed_return = sm[e];
  if (!final_per_seed.empty()) {
    std::vector<EpisodeSummary> pooled;
    for (const auto& s : final_per_seed) pooled.insert(pooled.end(), s.begin(), s.end());
    if (!pooled.empty()) rep.final_stats = summarize(pooled, th);
  }
  return rep;
}

inline constexpr std::string_view kMetricsHeader = "epoch,mean_return,smoothed_return,p_gt150,p_lt50,mean_len,p_ge40";

inline void to_json(nlohmann::json& j, const SummaryStats& s) {
  j = nlohmann::json{{"mean_return", s.mean_return}, {"p_gt150", s.p_gt150}, {"p_lt50", s.p_lt50},
                     {"mean_len", s.mean_len},       {"p_ge40", s.p_ge40},   {"n_runs", s.n_runs}};
}

inline void to_json(nlohmann::json& j, const EvalReport& r) {
  nlohmann::json methods = nlohmann::json::array();
  for (const auto& m : r.methods) {
    nlohmann::json epochs = nlohmann::json::array();
    for (const auto& e : m.epochs)
      epochs.push_back({{"mean_return", e.mean_return}, {"smoothed_return", e.smoothed_return}, {"p_gt150", e.p_gt150},
                        {"p_lt50", e.p_lt50}, {"mean_len", e.mean_len}, {"p_ge40", e.p_ge40}});
    nlohmann::json entry{{"method", m.method}, {"epochs", epochs}};
    entry["final"] = m.final_stats ? nlohmann::json(*m.final_stats) : nlohmann::json(nullptr);
    methods.push_back(entry);
  }
  j = nlohmann::json{{"mode", std::string(label(r.mode))},
                     {"window", r.window},
                     {"thresholds",
                      {{"high_return", r.thresholds.high_return},
                       {"low_return", r.thresholds.low_return},
                       {"long_episode", r.thresholds.long_episode}}},
                     {"methods", methods}};
}

namespace detail {

inline std::string fixed(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::string svg_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Series {
  std::string name;
  std::vector<double> values;
};

inline std::string line_chart_svg(const std::string& title, const std::string& y_label, const std::vector<Series>& series) {
  constexpr double W = 800, H = 420, L = 70, R = 170, T = 40, B = 50;
  static constexpr std::array<std::string_view, 6> colors{"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  double lo = 1e300, hi = -1e300;
  std::size_t n = 0;
  for (const auto& s : series) {
    n = std::max(n, s.values.size());
    for (double v : s.values) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (!(hi > lo)) {
    lo -= 1.0;
    hi += 1.0;
  }
  const double pw = W - L - R, ph = H - T - B;
  auto x_of = [&](std::size_t i) { return L + (n <= 1 ? 0.0 : pw * static_cast<double>(i) / static_cast<double>(n - 1)); };
  auto y_of = [&](double v) { return T + ph * (1.0 - (v - lo) / (hi - lo)); };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W << ' '
    << H << "\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">"
    << svg_escape(title) << "</text>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << T + ph << "\" x2=\"" << L + pw << "\" y2=\"" << T + ph << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << T + ph << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = lo + (hi - lo) * k / 4.0;
    o << "<text x=\"" << L - 6 << "\" y=\"" << fixed(y_of(v) + 4, 1)
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << fixed(v) << "</text>\n";
  }
  o << "<text x=\"" << L + pw / 2 << "\" y=\"" << H - 12
    << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">epoch</text>\n";
  o << "<text x=\"16\" y=\"" << T + ph / 2 << "\" transform=\"rotate(-90 16 " << T + ph / 2
    << ")\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << svg_escape(y_label) << "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const auto color = colors[s % colors.size()];
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < series[s].values.size(); ++i)
      o << (i ? " " : "") << fixed(x_of(i), 1) << ',' << fixed(y_of(series[s].values[i]), 1);
    o << "\"/>\n";
    const double ly = T + 16 + 18 * static_cast<double>(s);
    o << "<line x1=\"" << L + pw + 12 << "\" y1=\"" << ly << "\" x2=\"" << L + pw + 32 << "\" y2=\"" << ly
      << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << L + pw + 38 << "\" y=\"" << ly + 4 << "\" font-family=\"sans-serif\" font-size=\"12\">"
      << svg_escape(series[s].name) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open for writing: " + path.string());
  out << contents;
  if (!out) throw ConfigError("write failed: " + path.string());
}

}  // namespace detail

inline const std::array<std::string_view, 5> kChartNames{"smoothed_return", "p_gt150", "p_lt50", "mean_len", "p_ge40"};

inline std::string metrics_csv(const EvalReport& report) {
  std::ostringstream o;
  for (std::size_t m = 0; m < report.methods.size(); ++m) {
    const auto& rep = report.methods[m];
    if (m) o << '\n';
    o << "# method=" << rep.method << " mode=" << label(report.mode) << '\n';
    o << kMetricsHeader << '\n';
    for (std::size_t e = 0; e < rep.epochs.size(); ++e) {
      const auto& x = rep.epochs[e];
      o << e << ',' << format_double(x.mean_return) << ',' << format_double(x.smoothed_return) << ','
        << format_double(x.p_gt150) << ',' << format_double(x.p_lt50) << ',' << format_double(x.mean_len) << ','
        << format_double(x.p_ge40) << '\n';
    }
  }
  return o.str();
}

// Writes metrics.csv plus one SVG per charted metric. Nothing is written
// unless the report has at least one method with at least one epoch.
inline std::vector<std::filesystem::path> render_report(const EvalReport& report, const std::filesystem::path& out_dir) {
  if (report.methods.empty()) throw DomainError("render_report: report has no methods");
  for (const auto& m : report.methods)
    if (m.epochs.empty()) throw DomainError("render_report: method " + m.method + " has no epochs");

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + out_dir.string() + ": " + ec.message());

  std::vector<std::filesystem::path> written;
  const auto csv_path = out_dir / "metrics.csv";
  detail::write_file(csv_path, metrics_csv(report));
  written.push_back(csv_path);

  const std::array<std::string, 5> titles{"Smoothed average return (window " + std::to_string(report.window) + ")",
                                          "Proportion of episodes with return > " + detail::fixed(report.thresholds.high_return, 0),
                                          "Proportion of episodes with return < " + detail::fixed(report.thresholds.low_return, 0),
                                          "Average episode length",
                                          "Proportion of episodes with length >= " + detail::fixed(report.thresholds.long_episode, 0)};
  for (std::size_t c = 0; c < kChartNames.size(); ++c) {
    std::vector<detail::Series> series;
    for (const auto& m : report.methods) {
      detail::Series s{m.method, {}};
      for (const auto& e : m.epochs) {
        const double v = c == 0 ? e.smoothed_return : c == 1 ? e.p_gt150 : c == 2 ? e.p_lt50 : c == 3 ? e.mean_len : e.p_ge40;
        s.values.push_back(v);
      }
      series.push_back(std::move(s));
    }
    const auto path = out_dir / (std::string(kChartNames[c]) + ".svg");
    detail::write_file(path, detail::line_chart_svg(titles[c] + " (" + std::string(label(report.mode)) + ")",
                                                    std::string(kChartNames[c]), series));
    written.push_back(path);
  }
  return written;
}

}  // namespace crl
