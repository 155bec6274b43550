#pragma once

// Two-layer annealing: simulated annealing over facility configurations, with
// each candidate configuration's customers assigned by the QUBO layer. The
// classical baseline runs the same outer chain with a greedy assignment.

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cflqa/instance.hpp"
#include "cflqa/qubo.hpp"
#include "cflqa/solvers.hpp"

namespace cflqa {

class InfeasibleInstance : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AnnealSchedule {
  double t0 = 10000.0;
  double t_end = 1.0;
  double alpha = 0.5;
  std::optional<std::size_t> iters_per_step;  // unset: m trials per temperature

  std::size_t trials_per_step(const Instance& inst) const { return iters_per_step.value_or(inst.m); }
};

inline void validate(const AnnealSchedule& s) {
  if (!(s.t0 > 0) || !(s.t_end > 0)) throw std::invalid_argument("schedule temperatures must be > 0");
  if (!(s.alpha > 0 && s.alpha < 1)) throw std::invalid_argument("cooling rate must lie in (0, 1)");
  if (s.iters_per_step && *s.iters_per_step < 1) throw std::invalid_argument("iterations per step must be >= 1");
}

// Temperatures t0, alpha t0, ... that are still above t_end; the chain stops
// once the temperature is no longer higher than the target. A schedule that
// starts at or below the target keeps the single temperature t0.
inline std::vector<double> cooling_steps(const AnnealSchedule& s) {
  validate(s);
  if (s.t0 <= s.t_end) return {s.t0};
  std::vector<double> temps;
  const double floor = s.t_end * (1.0 + 1e-12);
  for (double t = s.t0; t > floor; t *= s.alpha) temps.push_back(t);
  return temps;
}

// ---------------------------------------------------------------------------
// Neighbourhood

enum class MoveKind { Close, Open, Swap, None };

inline std::string_view to_string(MoveKind k) {
  switch (k) {
    case MoveKind::Close: return "close";
    case MoveKind::Open: return "open";
    case MoveKind::Swap: return "swap";
    case MoveKind::None: return "none";
  }
  return "?";
}

struct MoveOptions {
  // Moves leaving less open capacity than total demand are unavailable.
  bool capacity_guard = true;
  // Propose uniformly over all neighbouring configurations instead of rolling
  // for the move type first. Used to check the stationary law of the chain.
  bool uniform_neighbors = false;
};

struct Move {
  OpenConfig config;
  MoveKind kind = MoveKind::None;
  bool moved = false;
};

struct MoveCandidates {
  std::vector<std::size_t> close;
  std::vector<std::size_t> open;
  std::vector<std::pair<std::size_t, std::size_t>> swap;  // (open site, closed site)

  std::size_t total() const { return close.size() + open.size() + swap.size(); }
};

// The last open site is never closed.
inline MoveCandidates move_candidates(const Instance& inst, const OpenConfig& x, MoveOptions opts = {}) {
  if (x.size() != inst.m) throw DimensionError("neighbor_move: config length differs from m");
  const double demand = inst.total_demand();
  const double cap = x.open_capacity(inst);
  const bool guard = opts.capacity_guard;
  MoveCandidates c;
  const std::size_t open_count = x.open_count();
  for (std::size_t j = 0; j < inst.m; ++j) {
    if (x.is_open(j)) {
      if (open_count >= 2 && (!guard || cap - inst.capacity[j] >= demand)) c.close.push_back(j);
    } else {
      c.open.push_back(j);
    }
  }
  for (std::size_t j = 0; j < inst.m; ++j) {
    if (!x.is_open(j)) continue;
    for (std::size_t k = 0; k < inst.m; ++k) {
      if (x.is_open(k)) continue;
      if (!guard || cap - inst.capacity[j] + inst.capacity[k] >= demand) c.swap.emplace_back(j, k);
    }
  }
  return c;
}

inline std::size_t neighbor_count(const Instance& inst, const OpenConfig& x, MoveOptions opts = {}) {
  return move_candidates(inst, x, opts).total();
}

// Rolls uniformly among the available move kinds, then picks a uniform target
// for that kind.
inline Move neighbor_move(const Instance& inst, const OpenConfig& x, Rng& rng, MoveOptions opts = {}) {
  auto c = move_candidates(inst, x, opts);
  Move mv{x, MoveKind::None, false};
  if (c.total() == 0) return mv;

  MoveKind kind = MoveKind::None;
  std::size_t pick = 0;
  if (opts.uniform_neighbors) {
    pick = uniform_index(rng, c.total());
    if (pick < c.close.size()) {
      kind = MoveKind::Close;
    } else if ((pick -= c.close.size()) < c.open.size()) {
      kind = MoveKind::Open;
    } else {
      pick -= c.open.size();
      kind = MoveKind::Swap;
    }
  } else {
    std::vector<MoveKind> kinds;
    if (!c.close.empty()) kinds.push_back(MoveKind::Close);
    if (!c.open.empty()) kinds.push_back(MoveKind::Open);
    if (!c.swap.empty()) kinds.push_back(MoveKind::Swap);
    kind = kinds[uniform_index(rng, kinds.size())];
    std::size_t count = kind == MoveKind::Close ? c.close.size() : kind == MoveKind::Open ? c.open.size() : c.swap.size();
    pick = uniform_index(rng, count);
  }

  switch (kind) {
    case MoveKind::Close: mv.config.set(c.close[pick], false); break;
    case MoveKind::Open: mv.config.set(c.open[pick], true); break;
    case MoveKind::Swap:
      mv.config.set(c.swap[pick].first, false);
      mv.config.set(c.swap[pick].second, true);
      break;
    case MoveKind::None: break;
  }
  mv.kind = kind;
  mv.moved = true;
  return mv;
}

// Metropolis criterion. An infinite (infeasible) candidate is never accepted;
// any finite candidate replaces an infinite incumbent.
inline bool metropolis_accept(double old_cost, double new_cost, double t, Rng& rng) {
  if (!(t > 0)) throw std::invalid_argument("metropolis_accept: temperature must be > 0");
  if (!std::isfinite(new_cost)) return false;
  if (new_cost < old_cost) return true;
  double rho = uniform01(rng);
  return rho < std::exp(-(new_cost - old_cost) / t);
}

// ---------------------------------------------------------------------------
// Reports

struct TraceRow {
  std::size_t iter = 0;
  double temperature = 0.0;
  double current_cost = kInfiniteCost;
  double best_cost = kInfiniteCost;
};

struct SolveReport {
  double best_cost = kInfiniteCost;
  OpenConfig best_open;
  Assignment best_assignment;
  std::vector<TraceRow> trace;
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::vector<OpenConfig> config_history;  // current configuration after each cooling step
  std::size_t trials = 0;
  std::size_t inner_fallbacks = 0;  // trials whose QUBO samples never decoded feasibly
  double t0_used = 0.0;
  std::uint64_t seed = 0;
  double runtime_s = 0.0;
};

struct OuterOptions {
  MoveOptions moves;
  // Set t0 to the mean |cost change| over probe moves from the initial configuration.
  bool t0_auto = false;
  std::size_t t0_probes = 50;
  // Restart multiplier for the final re-solve of the best configuration.
  std::size_t refine_factor = 5;
};

struct Evaluation {
  Assignment assignment;
  double cost = kInfiniteCost;  // fixed + transport, infinite when infeasible
  bool fallback = false;
};

// Evaluates a configuration; the index identifies the call so evaluators can
// derive independent random streams.
using Evaluator = std::function<Evaluation(const OpenConfig&, std::uint64_t)>;

namespace detail {

inline double fixed_cost_of(const Instance& inst, const OpenConfig& x) {
  double f = 0.0;
  for (std::size_t j = 0; j < inst.m; ++j) {
    if (x.is_open(j)) f += inst.fixed_cost[j];
  }
  return f;
}

inline OpenConfig initial_config(const Instance& inst, Rng& rng, const MoveOptions& opts) {
  const double demand = inst.total_demand();
  for (int attempt = 0; attempt < 1000; ++attempt) {
    OpenConfig x(inst.m);
    for (std::size_t j = 0; j < inst.m; ++j) x.set(j, (rng() >> 63) != 0);
    if (x.open_count() == 0) continue;
    if (!opts.capacity_guard || x.open_capacity(inst) >= demand) return x;
  }
  return OpenConfig(inst.m, true);
}

inline constexpr std::uint64_t kProbeStream = 0x70726f6265ULL;
inline constexpr std::uint64_t kRefineStream = 0x726566696e65ULL;

inline SolveReport run_outer(const Instance& inst, const AnnealSchedule& sched, std::uint64_t seed,
                             const OuterOptions& opts, const Evaluator& evaluate) {
  auto clock_start = std::chrono::steady_clock::now();
  validate(sched);
  if (!inst.globally_feasible()) {
    throw InfeasibleInstance("instance is infeasible: total capacity is below total demand");
  }
  Rng rng = make_stream(seed);
  SolveReport report;
  report.seed = seed;

  OpenConfig current = initial_config(inst, rng, opts.moves);
  double current_cost = kInfiniteCost;

  AnnealSchedule schedule = sched;
  if (opts.t0_auto) {
    auto base = evaluate(current, kProbeStream);
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t k = 0; k < opts.t0_probes; ++k) {
      auto mv = neighbor_move(inst, current, rng, opts.moves);
      auto probe = evaluate(mv.config, kProbeStream + 1 + k);
      if (std::isfinite(base.cost) && std::isfinite(probe.cost)) {
        sum += std::abs(probe.cost - base.cost);
        ++count;
      }
    }
    if (count > 0 && sum > 0) schedule.t0 = sum / static_cast<double>(count);
  }
  report.t0_used = schedule.t0;

  const auto temps = cooling_steps(schedule);
  const std::size_t per_step = schedule.trials_per_step(inst);
  std::uint64_t trial = 0;
  for (double t : temps) {
    for (std::size_t it = 0; it < per_step; ++it) {
      auto mv = neighbor_move(inst, current, rng, opts.moves);
      auto eval = evaluate(mv.config, trial);
      if (eval.fallback) ++report.inner_fallbacks;
      if (eval.cost < report.best_cost) {
        report.best_cost = eval.cost;
        report.best_open = mv.config;
        report.best_assignment = std::move(eval.assignment);
      }
      if (metropolis_accept(current_cost, eval.cost, t, rng)) {
        current = mv.config;
        current_cost = eval.cost;
        ++report.accepted;
      } else {
        ++report.rejected;
      }
      report.trace.push_back({static_cast<std::size_t>(trial), t, current_cost, report.best_cost});
      ++trial;
    }
    report.config_history.push_back(current);
  }
  report.trials = trial;
  report.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start).count();
  return report;
}

}  // namespace detail

struct HybridOptions : OuterOptions {
  EncodingOptions encoding;
};

// Evaluation of one configuration through the QUBO layer.
inline Evaluation evaluate_hybrid(const Instance& inst, const OpenConfig& x, const PenaltySet& pen,
                                  const SolverParams& sp, const EncodingOptions& enc) {
  Evaluation ev;
  auto inner = assign_customers(inst, x, pen, sp, enc);
  ev.fallback = inner.fallback;
  if (std::isfinite(inner.inner_cost)) ev.cost = detail::fixed_cost_of(inst, x) + inner.inner_cost;
  ev.assignment = std::move(inner.assignment);
  return ev;
}

inline SolveReport run_hybrid(const Instance& inst, const AnnealSchedule& sched, const PenaltySet& pen,
                              const SolverParams& sp, std::uint64_t seed, const HybridOptions& opts = {}) {
  auto clock_start = std::chrono::steady_clock::now();
  validate(sp);
  auto evaluate = [&](const OpenConfig& x, std::uint64_t index) {
    SolverParams call = sp;
    call.seed = splitmix64(seed ^ splitmix64(sp.seed + index));
    return evaluate_hybrid(inst, x, pen, call, opts.encoding);
  };
  SolveReport report = detail::run_outer(inst, sched, seed, opts, evaluate);

  // Re-solve the winning configuration with a larger sampling budget.
  if (std::isfinite(report.best_cost) && opts.refine_factor > 1) {
    SolverParams refine = sp;
    refine.restarts = sp.restarts * opts.refine_factor;
    refine.seed = splitmix64(seed ^ detail::kRefineStream);
    auto ev = evaluate_hybrid(inst, report.best_open, pen, refine, opts.encoding);
    if (ev.cost < report.best_cost) {
      report.best_cost = ev.cost;
      report.best_assignment = std::move(ev.assignment);
    }
  }
  report.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start).count();
  return report;
}

// Same outer chain and trial budget, with the greedy assignment as inner layer.
inline SolveReport run_classical_baseline(const Instance& inst, const AnnealSchedule& sched, std::uint64_t seed,
                                          const OuterOptions& opts = {}) {
  auto evaluate = [&](const OpenConfig& x, std::uint64_t) {
    Evaluation ev;
    ev.assignment = greedy_assign(inst, x);
    if (ev.assignment.feasible) ev.cost = total_cost(inst, x, ev.assignment);
    return ev;
  };
  return detail::run_outer(inst, sched, seed, opts, evaluate);
}

// Runs `chains` independent chains (seeds derived from `seed`) and keeps the
// one with the lowest best cost, the lowest chain index winning ties.
template <typename RunChain>
SolveReport best_of_chains(std::size_t chains, std::size_t threads, std::uint64_t seed, RunChain&& run_chain) {
  if (chains < 1) throw std::invalid_argument("chain count must be >= 1");
  if (chains == 1) return run_chain(seed);
  std::vector<SolveReport> reports(chains);
  parallel_for(chains, threads, [&](std::size_t c) { reports[c] = run_chain(splitmix64(seed ^ (c + 1))); });
  std::size_t best = 0;
  for (std::size_t c = 1; c < chains; ++c) {
    if (reports[c].best_cost < reports[best].best_cost) best = c;
  }
  return std::move(reports[best]);
}

// Fixed-temperature Metropolis chain over configurations with a known energy
// function. Returns visit counts after `burn_in` steps.
inline std::map<OpenConfig, std::size_t> metropolis_histogram(const Instance& inst,
                                                              const std::function<double(const OpenConfig&)>& energy,
                                                              OpenConfig start, double t, std::size_t steps,
                                                              std::size_t burn_in, Rng& rng, MoveOptions opts) {
  std::map<OpenConfig, std::size_t> visits;
  OpenConfig current = std::move(start);
  double e = energy(current);
  for (std::size_t s = 0; s < burn_in + steps; ++s) {
    auto mv = neighbor_move(inst, current, rng, opts);
    double e_new = energy(mv.config);
    if (metropolis_accept(e, e_new, t, rng)) {
      current = std::move(mv.config);
      e = e_new;
    }
    if (s >= burn_in) ++visits[current];
  }
  return visits;
}

// ---------------------------------------------------------------------------
// CSV output

inline std::string format_cost(double c) {
  if (std::isinf(c)) return c > 0 ? "inf" : "-inf";
  return detail::format_number(c);
}

inline void write_trace_csv(const SolveReport& r, std::ostream& out) {
  out << "iter,temp,current_cost,best_cost\n";
  for (const auto& row : r.trace) {
    out << row.iter << ',' << format_cost(row.temperature) << ',' << format_cost(row.current_cost) << ','
        << format_cost(row.best_cost) << '\n';
  }
}

inline void write_config_history_csv(const SolveReport& r, std::ostream& out) {
  for (const auto& x : r.config_history) {
    for (std::size_t j = 0; j < x.size(); ++j) out << (j ? "," : "") << int(x.is_open(j));
    out << '\n';
  }
}

inline void write_assignment_csv(const BitMatrix& y, std::ostream& out) {
  for (std::size_t i = 0; i < y.rows(); ++i) {
    for (std::size_t j = 0; j < y.cols(); ++j) out << (j ? "," : "") << int(y(i, j));
    out << '\n';
  }
}

}  // namespace cflqa
