#pragma once

// Randomized interaction logs and their CSV form.

#include <array>
#include <charconv>
#include <cstddef>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "crl/core_mdp.hpp"
#include "crl/agent_q.hpp"
#include "crl/errors.hpp"
#include "crl/patient_sim.hpp"
#include "crl/rng.hpp"

namespace crl {

// One logged transition. State fields hold the integer codes (emotion in {-1,0,1}).
struct TrajectoryRecord {
  int rp_t = 0, e_t = 0, c_t = 0;
  int a_t = 0;
  int rp_t1 = 0, e_t1 = 0, c_t1 = 0;
  int a_t1 = 0;
  double reward = 0.0;

  PatientState state() const {
    return {static_cast<ResponseRelevance>(rp_t), static_cast<Emotion>(e_t), static_cast<Confusion>(c_t)};
  }
  PatientState next_state() const {
    return {static_cast<ResponseRelevance>(rp_t1), static_cast<Emotion>(e_t1), static_cast<Confusion>(c_t1)};
  }

  bool valid() const {
    auto in = [](int v, int lo, int hi) { return v >= lo && v <= hi; };
    return in(rp_t, 0, 2) && in(e_t, -1, 1) && in(c_t, 0, 1) && in(a_t, 0, 6) && in(rp_t1, 0, 2) &&
           in(e_t1, -1, 1) && in(c_t1, 0, 1) && in(a_t1, 0, 6);
  }

  friend bool operator==(const TrajectoryRecord&, const TrajectoryRecord&) = default;
};

struct Dataset {
  std::vector<TrajectoryRecord> records;
  // Episode i spans [episode_starts[i], episode_starts[i+1]); last entry == records.size().
  std::vector<std::size_t> episode_starts{0};

  std::size_t num_episodes() const { return episode_starts.size() - 1; }
};

// Uniform a0..a5 logging. The forced GiveChoice rule is not applied here, so
// the logged action is independent of the logged state.
inline Dataset collect_random_trajectories(const TransitionModel& model, const EpisodeConfig& config, int n_episodes,
                                           Rng& rng, const RewardParams& params = {}) {
  if (n_episodes < 1) throw DomainError("n_episodes must be >= 1");
  model.validate();
  Dataset data;
  data.episode_starts.clear();
  data.episode_starts.push_back(0);
  PatientEnv env(model, config, params);
  for (int ep = 0; ep < n_episodes; ++ep) {
    env.reset(rng.next_u64());
    const std::size_t first = data.records.size();
    while (!env.status().done) {
      const PatientState s = env.state();
      const Action a = random_learnable_action(rng);
      const StepResult r = env.step(a);
      TrajectoryRecord rec;
      rec.rp_t = code(s.rp);
      rec.e_t = code(s.e);
      rec.c_t = code(s.c);
      rec.a_t = code(a);
      rec.rp_t1 = code(r.next.rp);
      rec.e_t1 = code(r.next.e);
      rec.c_t1 = code(r.next.c);
      rec.a_t1 = code(a);
      rec.reward = r.reward;
      if (data.records.size() > first) data.records.back().a_t1 = rec.a_t;
      data.records.push_back(rec);
    }
    data.episode_starts.push_back(data.records.size());
  }
  return data;
}

// Shortest decimal that parses back to the same double.
inline std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

inline constexpr std::string_view kDatasetHeader = "rp_t,e_t,c_t,a_t,rp_t1,e_t1,c_t1,a_t1,reward";

inline void write_dataset_csv(std::ostream& out, const Dataset& data) {
  out << kDatasetHeader << '\n';
  for (const auto& r : data.records) {
    out << r.rp_t << ',' << r.e_t << ',' << r.c_t << ',' << r.a_t << ',' << r.rp_t1 << ',' << r.e_t1 << ',' << r.c_t1
        << ',' << r.a_t1 << ',' << format_double(r.reward) << '\n';
  }
}

inline void write_dataset_csv(const std::string& path, const Dataset& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open for writing: " + path);
  write_dataset_csv(out, data);
  if (!out) throw ConfigError("write failed: " + path);
}

namespace detail {

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
T parse_field(std::string_view text, std::size_t line, std::string_view column) {
  T value{};
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size())
    throw ParseError("invalid value '" + std::string(text) + "' in column " + std::string(column), line);
  return value;
}

}  // namespace detail

// Episode boundaries are not part of the CSV; they are inferred where a
// record's state does not continue the previous record's next state.
inline Dataset read_dataset_csv(std::istream& in) {
  static constexpr std::array<std::string_view, 9> columns{"rp_t", "e_t", "c_t", "a_t", "rp_t1",
                                                           "e_t1", "c_t1", "a_t1", "reward"};
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty dataset: missing header", 1);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = detail::split_csv(line);
  std::array<int, 9> col_of{};
  for (std::size_t c = 0; c < columns.size(); ++c) {
    int found = -1;
    for (std::size_t h = 0; h < header.size(); ++h)
      if (header[h] == columns[c]) found = static_cast<int>(h);
    if (found < 0) throw ParseError("missing column: " + std::string(columns[c]), 1);
    col_of[c] = found;
  }

  Dataset data;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = detail::split_csv(line);
    if (fields.size() != header.size())
      throw ParseError("expected " + std::to_string(header.size()) + " fields, got " + std::to_string(fields.size()), line_no);
    TrajectoryRecord r;
    int* ints[8] = {&r.rp_t, &r.e_t, &r.c_t, &r.a_t, &r.rp_t1, &r.e_t1, &r.c_t1, &r.a_t1};
    for (int c = 0; c < 8; ++c) *ints[c] = detail::parse_field<int>(fields[col_of[c]], line_no, columns[c]);
    r.reward = detail::parse_field<double>(fields[col_of[8]], line_no, columns[8]);
    if (!r.valid()) throw ParseError("code out of range", line_no);
    if (!data.records.empty()) {
      const auto& prev = data.records.back();
      if (prev.rp_t1 != r.rp_t || prev.e_t1 != r.e_t || prev.c_t1 != r.c_t) data.episode_starts.push_back(data.records.size());
    }
    data.records.push_back(r);
  }
  if (data.records.empty()) throw ParseError("dataset has no records", line_no);
  data.episode_starts.push_back(data.records.size());
  return data;
}

inline Dataset read_dataset_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open dataset: " + path);
  return read_dataset_csv(in);
}

}  // namespace crl
