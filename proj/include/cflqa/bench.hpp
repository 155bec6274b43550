#pragma once

// Benchmark bookkeeping: published reference values for the twelve OR-Library
// `cap` instances, gap computation, JSON reports and solution files.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cflqa/instance.hpp"

namespace cflqa {

struct ReferenceEntry {
  std::string_view name;
  std::size_t m;
  std::size_t n;
  double lindo_opt;  // proven optimum
  double paper_sa;   // single classical annealing run
  double paper_qa;   // hybrid annealing run
};

inline constexpr std::array<ReferenceEntry, 12> kReferenceTable{{
    {"cap71", 16, 50, 932615.7500, 1460909.750, 933172.1000},
    {"cap72", 16, 50, 977799.4000, 1395389.538, 977988.1000},
    {"cap73", 16, 50, 1010641.450, 1585875.550, 1010641.450},
    {"cap74", 16, 50, 1034976.975, 1390963.787, 1034976.975},
    {"cap101", 25, 50, 796648.4400, 1182235.563, 797656.2875},
    {"cap102", 25, 50, 854704.2000, 1282306.175, 854952.5125},
    {"cap103", 25, 50, 893782.1125, 1395701.200, 894872.1125},
    {"cap104", 25, 50, 928941.7500, 1458550.450, 928941.7500},
    {"cap131", 50, 50, 793439.5620, 1167543.950, 796066.6500},
    {"cap132", 50, 50, 851495.3250, 1132436.300, 852291.9375},
    {"cap133", 50, 50, 893076.7120, 1126423.238, 893521.4125},
    {"cap134", 50, 50, 928941.7500, 1321380.713, 928941.7500},
}};

inline std::optional<ReferenceEntry> find_reference(std::string_view name) {
  for (const auto& e : kReferenceTable) {
    if (e.name == name) return e;
  }
  return std::nullopt;
}

// Signed percentage gap to the reference optimum; absent for unknown names.
inline std::optional<double> compare_reference(std::string_view name, double best_cost) {
  auto ref = find_reference(name);
  if (!ref) return std::nullopt;
  return 100.0 * (best_cost - ref->lindo_opt) / ref->lindo_opt;
}

// ---------------------------------------------------------------------------
// Reports

struct RunParams {
  std::string algorithm = "hybrid";  // hybrid | baseline
  std::string inner = "tabu";
  std::string penalty = "paper";
  double t0 = 10000.0;
  double alpha = 0.5;
  double t_end = 1.0;
  std::size_t iters_per_step = 0;  // resolved value
  std::size_t restarts = 20;
  std::size_t sub_size = 50;
  std::size_t chains = 1;
  bool t0_auto = false;
  bool paper_slack_width = false;
  bool capacity_guard = true;
  bool error_correction = true;

  bool operator==(const RunParams&) const = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(RunParams, algorithm, inner, penalty, t0, alpha, t_end, iters_per_step, restarts,
                                   sub_size, chains, t0_auto, paper_slack_width, capacity_guard,
                                   error_correction)

struct InstanceResult {
  std::string instance;
  std::size_t m = 0;
  std::size_t n = 0;
  std::optional<double> best_cost;  // absent when no feasible solution was found
  std::optional<double> gap_pct;
  std::uint64_t seed = 0;
  RunParams params;
  double runtime_s = 0.0;
  std::optional<std::string> trace_path;

  bool operator==(const InstanceResult&) const = default;
};

struct BenchReport {
  std::vector<InstanceResult> instances;
  std::optional<double> mean_gap_pct;
  std::optional<double> max_gap_pct;

  bool operator==(const BenchReport&) const = default;
};

// Aggregates over rows that have a reference gap.
inline void summarize(BenchReport& report) {
  double sum = 0.0, worst = -std::numeric_limits<double>::infinity();
  std::size_t count = 0;
  for (const auto& r : report.instances) {
    if (!r.gap_pct) continue;
    sum += *r.gap_pct;
    worst = std::max(worst, *r.gap_pct);
    ++count;
  }
  report.mean_gap_pct = count ? std::optional<double>(sum / static_cast<double>(count)) : std::nullopt;
  report.max_gap_pct = count ? std::optional<double>(worst) : std::nullopt;
}

namespace detail {

template <typename T>
nlohmann::json optional_json(const std::optional<T>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

template <typename T>
std::optional<T> json_optional(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

}  // namespace detail

inline void to_json(nlohmann::json& j, const InstanceResult& r) {
  j = nlohmann::json{{"instance", r.instance},
                     {"m", r.m},
                     {"n", r.n},
                     {"best_cost", detail::optional_json(r.best_cost)},
                     {"gap_pct", detail::optional_json(r.gap_pct)},
                     {"seed", r.seed},
                     {"params", r.params},
                     {"runtime_s", r.runtime_s},
                     {"trace_path", detail::optional_json(r.trace_path)}};
}

inline void from_json(const nlohmann::json& j, InstanceResult& r) {
  j.at("instance").get_to(r.instance);
  j.at("m").get_to(r.m);
  j.at("n").get_to(r.n);
  r.best_cost = detail::json_optional<double>(j, "best_cost");
  r.gap_pct = detail::json_optional<double>(j, "gap_pct");
  j.at("seed").get_to(r.seed);
  j.at("params").get_to(r.params);
  j.at("runtime_s").get_to(r.runtime_s);
  r.trace_path = detail::json_optional<std::string>(j, "trace_path");
}

inline void to_json(nlohmann::json& j, const BenchReport& b) {
  j = nlohmann::json{{"instances", b.instances},
                     {"aggregate",
                      {{"mean_gap_pct", detail::optional_json(b.mean_gap_pct)},
                       {"max_gap_pct", detail::optional_json(b.max_gap_pct)}}}};
}

inline void from_json(const nlohmann::json& j, BenchReport& b) {
  j.at("instances").get_to(b.instances);
  const auto& agg = j.at("aggregate");
  b.mean_gap_pct = detail::json_optional<double>(agg, "mean_gap_pct");
  b.max_gap_pct = detail::json_optional<double>(agg, "max_gap_pct");
}

// ---------------------------------------------------------------------------
// Solution files: first line the m facility bits, then n lines of m
// assignment bits, space separated.

inline void write_solution(const OpenConfig& open, const BitMatrix& y, std::ostream& out) {
  for (std::size_t j = 0; j < open.size(); ++j) out << (j ? " " : "") << int(open.is_open(j));
  out << '\n';
  for (std::size_t i = 0; i < y.rows(); ++i) {
    for (std::size_t j = 0; j < y.cols(); ++j) out << (j ? " " : "") << int(y(i, j));
    out << '\n';
  }
}

struct Solution {
  OpenConfig open;
  BitMatrix y;
};

inline Solution read_solution(std::istream& in, std::size_t m, std::size_t n) {
  std::size_t position = 0;
  auto next_bit = [&]() -> std::uint8_t {
    std::string tok;
    if (!(in >> tok)) throw ParseError("unexpected end of solution file", position + 1);
    ++position;
    if (tok != "0" && tok != "1") throw ParseError("expected 0 or 1, got '" + tok + "'", position);
    return tok == "1" ? 1 : 0;
  };
  Solution s{OpenConfig(m), BitMatrix(n, m)};
  for (std::size_t j = 0; j < m; ++j) s.open.set(j, next_bit() != 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) s.y(i, j) = next_bit();
  }
  std::string extra;
  if (in >> extra) throw ParseError("trailing token '" + extra + "' in solution file", position + 1);
  return s;
}

}  // namespace cflqa
