#pragma once

// Tiered PC search with G^2 conditional-independence tests over the
// transition variables {RP_t, E_t, C_t, A_t, RP_t1, E_t1, C_t1, Reward}.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>
#include <json.hpp>

#include "crl/dataset.hpp"
#include "crl/errors.hpp"

namespace crl {

enum class CausalVar : int { RP_t = 0, E_t, C_t, A_t, RP_t1, E_t1, C_t1, Reward };

inline constexpr int kNumCausalVars = 8;

inline std::string_view label(CausalVar v) {
  static constexpr std::array<std::string_view, kNumCausalVars> names{"RP_t",  "E_t",  "C_t",  "A_t",
                                                                      "RP_t1", "E_t1", "C_t1", "Reward"};
  return names[static_cast<int>(v)];
}

inline std::optional<CausalVar> parse_causal_var(std::string_view name) {
  for (int i = 0; i < kNumCausalVars; ++i)
    if (label(static_cast<CausalVar>(i)) == name) return static_cast<CausalVar>(i);
  return std::nullopt;
}

// Time-t variables and A_t form tier 0, time-t+1 state variables tier 1.
// Reward is computed from the whole transition and sits in a final tier.
constexpr int tier_of(CausalVar v) noexcept {
  const int i = static_cast<int>(v);
  return i <= 3 ? 0 : (v == CausalVar::Reward ? 2 : 1);
}

// Columns recoded as dense levels 0..card-1.
struct DiscreteData {
  std::array<std::vector<int>, kNumCausalVars> columns;
  std::array<int, kNumCausalVars> cardinality{};
  std::size_t rows = 0;

  void validate() const {
    for (int v = 0; v < kNumCausalVars; ++v) {
      const std::string name(label(static_cast<CausalVar>(v)));
      if (columns[v].size() != rows) throw DomainError("column " + name + " has the wrong length");
      for (int x : columns[v])
        if (x < 0 || x >= cardinality[v]) throw DomainError("column " + name + " has a level outside its cardinality");
    }
  }
};

inline constexpr int kRewardBins = 5;

// Maps each column to dense levels. Reward keeps its distinct values as
// levels when there are at most kRewardBins of them; otherwise it is cut
// into equal-frequency bins (ties stay in one bin).
inline DiscreteData discretize(const Dataset& data) {
  DiscreteData out;
  out.rows = data.records.size();
  auto recode = [&](int var, auto get) {
    std::set<int> levels;
    for (const auto& r : data.records) levels.insert(get(r));
    std::map<int, int> dense;
    for (int v : levels) dense.emplace(v, static_cast<int>(dense.size()));
    auto& col = out.columns[var];
    col.reserve(out.rows);
    for (const auto& r : data.records) col.push_back(dense.at(get(r)));
    out.cardinality[var] = static_cast<int>(dense.size());
  };
  recode(0, [](const TrajectoryRecord& r) { return r.rp_t; });
  recode(1, [](const TrajectoryRecord& r) { return r.e_t; });
  recode(2, [](const TrajectoryRecord& r) { return r.c_t; });
  recode(3, [](const TrajectoryRecord& r) { return r.a_t; });
  recode(4, [](const TrajectoryRecord& r) { return r.rp_t1; });
  recode(5, [](const TrajectoryRecord& r) { return r.e_t1; });
  recode(6, [](const TrajectoryRecord& r) { return r.c_t1; });

  std::vector<double> sorted;
  sorted.reserve(out.rows);
  for (const auto& r : data.records) sorted.push_back(r.reward);
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::vector<double> cuts;  // level = number of cuts strictly below the value
  if (sorted.size() <= static_cast<std::size_t>(kRewardBins)) {
    for (std::size_t i = 1; i < sorted.size(); ++i) cuts.push_back(sorted[i - 1]);
  } else {
    std::vector<double> all;
    all.reserve(out.rows);
    for (const auto& r : data.records) all.push_back(r.reward);
    std::sort(all.begin(), all.end());
    for (int k = 1; k < kRewardBins; ++k) {
      const double q = all[(all.size() * k) / kRewardBins];
      if (q > all.front() && (cuts.empty() || q > cuts.back())) cuts.push_back(q);
    }
    // A cut c separates values < c from values >= c; shift to "strictly below" form.
    for (auto& c : cuts) c = std::nextafter(c, -1e300);
  }
  auto& col = out.columns[7];
  col.reserve(out.rows);
  for (const auto& r : data.records) {
    col.push_back(static_cast<int>(std::lower_bound(cuts.begin(), cuts.end(), r.reward) - cuts.begin()));
  }
  std::set<int> used(col.begin(), col.end());
  out.cardinality[7] = static_cast<int>(used.size());
  return out;
}

struct CiResult {
  bool independent = true;
  double p_value = 1.0;
  double g = 0.0;
  double dof = 0.0;
  bool low_power = false;
};

// G = 2 sum O ln(O/E) over each z-stratum's (x, y) table. Degrees of freedom
// are summed per stratum from the levels with positive marginals there.
// With fewer than 5 samples per degree of freedom the test reports
// independence and sets low_power.
inline CiResult g_test_ci(const DiscreteData& d, CausalVar x, CausalVar y, const std::vector<CausalVar>& z,
                          double alpha = 0.05) {
  if (x == y) throw DomainError("g_test_ci: x and y must differ");
  for (CausalVar v : z)
    if (v == x || v == y) throw DomainError("g_test_ci: conditioning set contains x or y");
  const int xi = static_cast<int>(x), yi = static_cast<int>(y);
  const int kx = std::max(1, d.cardinality[xi]), ky = std::max(1, d.cardinality[yi]);
  std::size_t n_strata = 1;
  for (CausalVar v : z) n_strata *= static_cast<std::size_t>(std::max(1, d.cardinality[static_cast<int>(v)]));

  std::vector<double> counts(n_strata * kx * ky, 0.0);
  for (std::size_t r = 0; r < d.rows; ++r) {
    std::size_t stratum = 0;
    for (CausalVar v : z) {
      const int vi = static_cast<int>(v);
      stratum = stratum * static_cast<std::size_t>(std::max(1, d.cardinality[vi])) + d.columns[vi][r];
    }
    counts[(stratum * kx + d.columns[xi][r]) * ky + d.columns[yi][r]] += 1.0;
  }

  CiResult res;
  std::vector<double> row(kx), col(ky);
  for (std::size_t s = 0; s < n_strata; ++s) {
    const double* t = &counts[s * kx * ky];
    std::fill(row.begin(), row.end(), 0.0);
    std::fill(col.begin(), col.end(), 0.0);
    double n = 0.0;
    for (int i = 0; i < kx; ++i)
      for (int j = 0; j < ky; ++j) {
        row[i] += t[i * ky + j];
        col[j] += t[i * ky + j];
        n += t[i * ky + j];
      }
    if (n == 0.0) continue;
    const auto rows_pos = std::count_if(row.begin(), row.end(), [](double v) { return v > 0; });
    const auto cols_pos = std::count_if(col.begin(), col.end(), [](double v) { return v > 0; });
    res.dof += static_cast<double>((rows_pos - 1) * (cols_pos - 1));
    for (int i = 0; i < kx; ++i)
      for (int j = 0; j < ky; ++j) {
        const double o = t[i * ky + j];
        if (o > 0.0) res.g += 2.0 * o * std::log(o * n / (row[i] * col[j]));
      }
  }
  res.g = std::max(0.0, res.g);
  if (res.dof <= 0.0) return res;
  if (static_cast<double>(d.rows) < 5.0 * res.dof) {
    res.low_power = true;
    return res;
  }
  res.p_value = boost::math::gamma_q(res.dof / 2.0, res.g / 2.0);
  res.independent = res.p_value >= alpha;
  return res;
}

inline CiResult g_test_ci(const Dataset& data, CausalVar x, CausalVar y, const std::vector<CausalVar>& z,
                          double alpha = 0.05) {
  return g_test_ci(discretize(data), x, y, z, alpha);
}

struct CausalGraph {
  // (from, to) pairs.
  std::vector<std::pair<CausalVar, CausalVar>> directed;
  // Unordered pairs stored with first < second.
  std::vector<std::pair<CausalVar, CausalVar>> undirected;
  std::vector<std::string> warnings;

  bool adjacent(CausalVar a, CausalVar b) const {
    for (const auto& [u, v] : directed)
      if ((u == a && v == b) || (u == b && v == a)) return true;
    for (const auto& [u, v] : undirected)
      if ((u == a && v == b) || (u == b && v == a)) return true;
    return false;
  }

  bool has_directed(CausalVar from, CausalVar to) const {
    return std::find(directed.begin(), directed.end(), std::make_pair(from, to)) != directed.end();
  }

  std::vector<CausalVar> neighbors(CausalVar a) const {
    std::vector<CausalVar> out;
    for (int i = 0; i < kNumCausalVars; ++i) {
      const auto b = static_cast<CausalVar>(i);
      if (b != a && adjacent(a, b)) out.push_back(b);
    }
    return out;
  }

  // Unordered skeleton pairs (first < second).
  std::set<std::pair<CausalVar, CausalVar>> skeleton() const {
    std::set<std::pair<CausalVar, CausalVar>> out;
    for (auto [u, v] : directed) out.insert(u < v ? std::make_pair(u, v) : std::make_pair(v, u));
    for (auto [u, v] : undirected) out.insert(u < v ? std::make_pair(u, v) : std::make_pair(v, u));
    return out;
  }

  // Directed edges pointing to an earlier tier.
  std::size_t tier_violations() const {
    return static_cast<std::size_t>(std::count_if(directed.begin(), directed.end(),
                                                  [](const auto& e) { return tier_of(e.first) > tier_of(e.second); }));
  }
};

struct PcOptions {
  double alpha = 0.05;
  int max_cond_size = 3;
};

namespace detail {

// All size-k subsets of `pool`, in lexicographic order of positions.
inline void for_each_subset(const std::vector<CausalVar>& pool, int k, const auto& fn) {
  const int n = static_cast<int>(pool.size());
  if (k > n) return;
  std::vector<int> idx(k);
  for (int i = 0; i < k; ++i) idx[i] = i;
  std::vector<CausalVar> subset(k);
  while (true) {
    for (int i = 0; i < k; ++i) subset[i] = pool[idx[i]];
    if (fn(subset)) return;
    int i = k - 1;
    while (i >= 0 && idx[i] == n - k + i) --i;
    if (i < 0) return;
    ++idx[i];
    for (int j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
}

}  // namespace detail

// PC-stable skeleton search followed by tier orientation. Conditioning sets
// are drawn from current neighbours of either endpoint and restricted to
// tiers no later than the later endpoint. Surviving cross-tier edges point
// forward in time; within-tier edges stay undirected.
inline CausalGraph pc_learn(const DiscreteData& d, const PcOptions& opt = {}) {
  if (d.rows == 0) throw DomainError("pc_learn: empty dataset");
  d.validate();
  CausalGraph g;
  std::array<std::array<bool, kNumCausalVars>, kNumCausalVars> adj{};
  for (int i = 0; i < kNumCausalVars; ++i)
    for (int j = 0; j < kNumCausalVars; ++j) adj[i][j] = i != j;

  for (int i = 0; i < kNumCausalVars; ++i) {
    if (d.cardinality[i] <= 1) {
      g.warnings.push_back("variable " + std::string(label(static_cast<CausalVar>(i))) + " is constant; isolated");
      for (int j = 0; j < kNumCausalVars; ++j) adj[i][j] = adj[j][i] = false;
    }
  }

  for (int level = 0; level <= opt.max_cond_size; ++level) {
    const auto frozen = adj;
    bool any_testable = false;
    for (int i = 0; i < kNumCausalVars; ++i) {
      for (int j = i + 1; j < kNumCausalVars; ++j) {
        if (!adj[i][j]) continue;
        const auto x = static_cast<CausalVar>(i), y = static_cast<CausalVar>(j);
        const int max_tier = std::max(tier_of(x), tier_of(y));
        bool removed = false;
        for (int side = 0; side < 2 && !removed; ++side) {
          const int a = side == 0 ? i : j, b = side == 0 ? j : i;
          std::vector<CausalVar> pool;
          for (int k = 0; k < kNumCausalVars; ++k) {
            if (k == a || k == b || !frozen[a][k]) continue;
            if (tier_of(static_cast<CausalVar>(k)) > max_tier) continue;
            pool.push_back(static_cast<CausalVar>(k));
          }
          if (static_cast<int>(pool.size()) < level) continue;
          any_testable = true;
          detail::for_each_subset(pool, level, [&](const std::vector<CausalVar>& z) {
            if (g_test_ci(d, x, y, z, opt.alpha).independent) {
              removed = true;
              return true;
            }
            return false;
          });
        }
        if (removed) adj[i][j] = adj[j][i] = false;
      }
    }
    if (!any_testable) break;
  }

  for (int i = 0; i < kNumCausalVars; ++i) {
    for (int j = i + 1; j < kNumCausalVars; ++j) {
      if (!adj[i][j]) continue;
      const auto x = static_cast<CausalVar>(i), y = static_cast<CausalVar>(j);
      if (tier_of(x) < tier_of(y)) g.directed.emplace_back(x, y);
      else if (tier_of(x) > tier_of(y)) g.directed.emplace_back(y, x);
      else g.undirected.emplace_back(x, y);
    }
  }
  return g;
}

inline CausalGraph pc_learn(const Dataset& data, double alpha = 0.05, int max_cond_size = 3) {
  if (data.records.empty()) throw DomainError("pc_learn: empty dataset");
  return pc_learn(discretize(data), PcOptions{alpha, max_cond_size});
}

inline void to_json(nlohmann::json& j, const CausalGraph& g) {
  nlohmann::json nodes = nlohmann::json::array(), tiers = nlohmann::json::object();
  for (int i = 0; i < kNumCausalVars; ++i) {
    const auto v = static_cast<CausalVar>(i);
    nodes.push_back(std::string(label(v)));
    tiers[std::string(label(v))] = tier_of(v);
  }
  auto edges = [](const auto& list) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& [u, v] : list) out.push_back({std::string(label(u)), std::string(label(v))});
    return out;
  };
  j = nlohmann::json{{"nodes", nodes},
                     {"tiers", tiers},
                     {"directed", edges(g.directed)},
                     {"undirected", edges(g.undirected)},
                     {"warnings", g.warnings}};
}

inline void from_json(const nlohmann::json& j, CausalGraph& g) {
  CausalGraph out;
  auto edges = [](const nlohmann::json& list, auto& dst) {
    for (const auto& e : list) {
      const auto u = parse_causal_var(e.at(0).get<std::string>());
      const auto v = parse_causal_var(e.at(1).get<std::string>());
      if (!u || !v) throw ConfigError("graph: unknown node name");
      dst.emplace_back(*u, *v);
    }
  };
  try {
    edges(j.at("directed"), out.directed);
    edges(j.at("undirected"), out.undirected);
    if (j.contains("warnings")) out.warnings = j.at("warnings").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("graph: ") + e.what());
  }
  g = out;
}

}  // namespace crl
