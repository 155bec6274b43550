#pragma once

// QUBO minimizers and the customer-assignment layer built on them.
//
// Backends:
//   exact       full enumeration (<= 26 variables), lexicographically smallest
//               minimizer on ties
//   sa          Metropolis single-flip sweeps over a geometric temperature ladder
//   tabu        best-improvement single flips with tenure and aspiration
//   sqa         path-integral Monte Carlo over Trotter replicas with a linear
//               transverse-field ramp
//   decomposed  clamped sub-QUBO passes around a global incumbent
//
// Every backend is a pure function of (QUBO, parameters): restart r draws from
// its own stream seeded by seed ^ r, and restarts may run on several threads
// without changing the result.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "cflqa/instance.hpp"
#include "cflqa/qubo.hpp"

namespace cflqa {

// ---------------------------------------------------------------------------
// Random streams

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

using Rng = std::mt19937_64;

// Independent stream for sub-run `index` of a run seeded with `seed`.
inline Rng make_stream(std::uint64_t seed, std::uint64_t index = 0) { return Rng(splitmix64(seed ^ index)); }

inline double uniform01(Rng& rng) { return std::generate_canonical<double, 53>(rng); }

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return static_cast<std::size_t>(std::uniform_int_distribution<std::uint64_t>(0, n - 1)(rng));
}

// Runs body(i) for i in [0, count) on up to `threads` workers. Callers write
// results into per-index slots so the outcome does not depend on scheduling.
template <typename Body>
void parallel_for(std::size_t count, std::size_t threads, Body&& body) {
  threads = std::max<std::size_t>(1, std::min(threads, count));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      for (std::size_t i = t; i < count; i += threads) body(i);
    });
  }
  for (auto& th : pool) th.join();
}

// ---------------------------------------------------------------------------
// Compressed adjacency view of a QUBO used by every solver.

class QuboGraph {
 public:
  struct Edge {
    std::size_t to;
    double weight;
  };

  QuboGraph() = default;

  explicit QuboGraph(const Qubo& q) : n_(q.nvars()), offset_(q.offset()), linear_(q.nvars(), 0.0) {
    std::vector<std::size_t> degree(n_, 0);
    for (const auto& [key, c] : q.terms()) {
      if (key.first == key.second) {
        linear_[key.first] += c;
      } else {
        ++degree[key.first];
        ++degree[key.second];
      }
    }
    start_.assign(n_ + 1, 0);
    for (std::size_t p = 0; p < n_; ++p) start_[p + 1] = start_[p] + degree[p];
    edges_.resize(start_[n_]);
    std::vector<std::size_t> fill(start_.begin(), start_.end() - 1);
    for (const auto& [key, c] : q.terms()) {
      if (key.first == key.second) continue;
      edges_[fill[key.first]++] = {key.second, c};
      edges_[fill[key.second]++] = {key.first, c};
    }
  }

  // Builds a graph directly from linear terms and symmetric adjacency lists.
  QuboGraph(std::vector<double> linear, std::vector<std::vector<Edge>> adjacency, double offset)
      : n_(linear.size()), offset_(offset), linear_(std::move(linear)) {
    start_.assign(n_ + 1, 0);
    for (std::size_t p = 0; p < n_; ++p) start_[p + 1] = start_[p] + adjacency[p].size();
    edges_.reserve(start_[n_]);
    for (auto& row : adjacency) edges_.insert(edges_.end(), row.begin(), row.end());
  }

  std::size_t size() const { return n_; }
  double offset() const { return offset_; }
  double linear(std::size_t p) const { return linear_[p]; }
  std::span<const Edge> neighbors(std::size_t p) const {
    return {edges_.data() + start_[p], start_[p + 1] - start_[p]};
  }

  double energy(std::span<const std::uint8_t> x) const {
    double e = offset_;
    for (std::size_t p = 0; p < n_; ++p) {
      if (!x[p]) continue;
      e += linear_[p];
      for (const auto& edge : neighbors(p)) {
        if (edge.to > p && x[edge.to]) e += edge.weight;
      }
    }
    return e;
  }

  // linear_p + sum_q w_pq x_q: flipping p changes the energy by (1 - 2 x_p) * field.
  std::vector<double> fields(std::span<const std::uint8_t> x) const {
    std::vector<double> f(linear_);
    for (std::size_t p = 0; p < n_; ++p) {
      for (const auto& edge : neighbors(p)) {
        if (x[edge.to]) f[p] += edge.weight;
      }
    }
    return f;
  }

  // Largest possible single-flip change of any variable.
  double max_flip_energy() const {
    double best = 0.0;
    for (std::size_t p = 0; p < n_; ++p) {
      double s = std::abs(linear_[p]);
      for (const auto& edge : neighbors(p)) s += std::abs(edge.weight);
      best = std::max(best, s);
    }
    return best;
  }

  // Smallest nonzero coefficient magnitude touching any variable.
  double min_flip_energy() const {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p < n_; ++p) {
      if (linear_[p] != 0.0) best = std::min(best, std::abs(linear_[p]));
      for (const auto& edge : neighbors(p)) best = std::min(best, std::abs(edge.weight));
    }
    return best;
  }

 private:
  std::size_t n_ = 0;
  double offset_ = 0.0;
  std::vector<double> linear_;
  std::vector<std::size_t> start_;
  std::vector<Edge> edges_;
};

// ---------------------------------------------------------------------------
// Samples

struct Sample {
  std::vector<std::uint8_t> bits;
  double energy = 0.0;
  std::size_t occurrences = 1;

  bool operator==(const Sample&) const = default;
};

// Energy ascending, then lexicographically smallest bits.
inline bool sample_before(const Sample& a, const Sample& b) {
  if (a.energy != b.energy) return a.energy < b.energy;
  return a.bits < b.bits;
}

class SampleSet {
 public:
  SampleSet() = default;

  // Merges identical bit vectors; energies are recomputed from the QUBO.
  static SampleSet from_states(const QuboGraph& g, std::vector<std::vector<std::uint8_t>> states) {
    SampleSet set;
    for (auto& bits : states) {
      double e = g.energy(bits);
      set.samples_.push_back({std::move(bits), e, 1});
    }
    set.normalize();
    return set;
  }

  const std::vector<Sample>& samples() const { return samples_; }
  bool empty() const { return samples_.empty(); }
  std::size_t size() const { return samples_.size(); }
  const Sample& best() const { return samples_.front(); }

  bool operator==(const SampleSet&) const = default;

 private:
  void normalize() {
    std::sort(samples_.begin(), samples_.end(), [](const Sample& a, const Sample& b) { return a.bits < b.bits; });
    std::vector<Sample> merged;
    for (auto& s : samples_) {
      if (!merged.empty() && merged.back().bits == s.bits) {
        merged.back().occurrences += s.occurrences;
      } else {
        merged.push_back(std::move(s));
      }
    }
    std::sort(merged.begin(), merged.end(), sample_before);
    samples_ = std::move(merged);
  }

  std::vector<Sample> samples_;
};

// ---------------------------------------------------------------------------
// Parameters

enum class Backend { Exact, SA, Tabu, SQA, Decomposed };

inline std::string_view to_string(Backend b) {
  switch (b) {
    case Backend::Exact: return "exact";
    case Backend::SA: return "sa";
    case Backend::Tabu: return "tabu";
    case Backend::SQA: return "sqa";
    case Backend::Decomposed: return "decomposed";
  }
  return "?";
}

inline std::optional<Backend> parse_backend(std::string_view s) {
  for (auto b : {Backend::Exact, Backend::SA, Backend::Tabu, Backend::SQA, Backend::Decomposed}) {
    if (to_string(b) == s) return b;
  }
  return std::nullopt;
}

inline constexpr std::size_t kMaxExactVars = 26;

struct SolverParams {
  Backend backend = Backend::Tabu;
  std::size_t sweeps = 1000;  // sa / sqa sweeps per restart
  std::size_t restarts = 20;
  std::uint64_t seed = 42;

  // Absolute temperatures; unset means derived from the coefficient range
  // (hot: half acceptance of the largest flip, cold: 1% of the smallest).
  std::optional<double> sa_t_hot;
  std::optional<double> sa_t_cold;

  std::size_t tabu_tenure = 20;
  // Non-improving iterations before a tabu run stops; unset means max(100, nvars).
  std::optional<std::size_t> tabu_stall;

  // Transverse field and bath temperature, in units of the mean per-spin
  // coupling magnitude of the problem.
  std::size_t sqa_slices = 16;
  double sqa_gamma_hot = 3.0;
  double sqa_gamma_cold = 0.01;
  double sqa_temperature = 0.05;

  std::size_t sub_size = 50;
  std::size_t passes = 10;  // stale decomposition passes before stopping
  Backend sub_backend = Backend::Tabu;

  std::size_t max_repair = 5;
  bool error_correction = true;  // correct the lowest-energy decode once resampling is exhausted
  std::size_t threads = 1;
};

inline void validate(const SolverParams& p) {
  auto fail = [](const char* what) { throw std::invalid_argument(std::string("invalid solver parameters: ") + what); };
  if (p.sweeps < 1 || p.restarts < 1 || p.tabu_tenure < 1 || p.sqa_slices < 1 || p.passes < 1 ||
      p.max_repair < 1 || p.threads < 1) {
    fail("counts must be >= 1");
  }
  if ((p.sa_t_hot && *p.sa_t_hot <= 0) || (p.sa_t_cold && *p.sa_t_cold <= 0)) fail("temperatures must be > 0");
  if (p.sqa_temperature <= 0 || p.sqa_gamma_hot <= 0 || p.sqa_gamma_cold <= 0) fail("sqa field and temperature must be > 0");
  if (p.tabu_stall && *p.tabu_stall < 1) fail("tabu stall must be >= 1");
  if (p.sub_size < 8) fail("sub_size must be >= 8");
}

// ---------------------------------------------------------------------------
// Exact enumeration

inline Sample solve_exact(const QuboGraph& g) {
  const std::size_t n = g.size();
  if (n > kMaxExactVars) {
    throw std::invalid_argument("solve_exact: " + std::to_string(n) + " variables exceeds the enumeration limit of " +
                                std::to_string(kMaxExactVars));
  }
  std::vector<std::uint8_t> x(n, 0);
  std::vector<double> field(n);
  for (std::size_t p = 0; p < n; ++p) field[p] = g.linear(p);
  double e = g.offset();

  // Bit p of the state maps to bit (n-1-p) of `code`, so integer order is
  // lexicographic order of the bit vector.
  std::uint32_t code = 0;
  std::uint32_t best_code = 0;
  double best_e = e;
  auto tol = [](double ref) { return 1e-9 * std::max(1.0, std::abs(ref)); };

  const std::uint64_t total = std::uint64_t{1} << n;
  for (std::uint64_t k = 1; k < total; ++k) {
    std::size_t p = static_cast<std::size_t>(std::countr_zero(k));
    double sign = x[p] ? -1.0 : 1.0;
    e += sign * field[p];
    x[p] ^= 1;
    for (const auto& edge : g.neighbors(p)) field[edge.to] += sign * edge.weight;
    code ^= std::uint32_t{1} << (n - 1 - p);

    if ((k & 0xffff) == 0) {
      // drift control for long Gray-code walks
      e = g.energy(x);
      field = g.fields(x);
    }
    if (e < best_e - tol(best_e)) {
      best_e = e;
      best_code = code;
    } else if (e <= best_e + tol(best_e) && code < best_code) {
      best_e = std::min(best_e, e);
      best_code = code;
    }
  }
  Sample s;
  s.bits.resize(n);
  for (std::size_t p = 0; p < n; ++p) s.bits[p] = (best_code >> (n - 1 - p)) & 1u;
  s.energy = g.energy(s.bits);
  return s;
}

inline Sample solve_exact(const Qubo& q) { return solve_exact(QuboGraph(q)); }

// ---------------------------------------------------------------------------
// Single-restart kernels

namespace detail {

inline std::vector<std::uint8_t> random_bits(Rng& rng, std::size_t n) {
  std::vector<std::uint8_t> x(n);
  for (auto& b : x) b = static_cast<std::uint8_t>(rng() >> 63);
  return x;
}

inline std::vector<std::uint8_t> run_sa(const QuboGraph& g, const SolverParams& p, Rng& rng) {
  const std::size_t n = g.size();
  auto x = random_bits(rng, n);
  if (n == 0) return x;
  double t_hot = p.sa_t_hot.value_or(0.0);
  double t_cold = p.sa_t_cold.value_or(0.0);
  if (!p.sa_t_hot || !p.sa_t_cold) {
    double hi = g.max_flip_energy();
    double lo = g.min_flip_energy();
    if (!(hi > 0) || !std::isfinite(lo)) return x;  // constant energy
    if (!p.sa_t_hot) t_hot = hi / std::log(2.0);
    if (!p.sa_t_cold) t_cold = lo / std::log(100.0);
  }
  auto field = g.fields(x);
  double e = g.energy(x);
  double best_e = e;
  auto best = x;
  const double ratio = p.sweeps > 1 ? std::pow(t_cold / t_hot, 1.0 / static_cast<double>(p.sweeps - 1)) : 1.0;
  double t = p.sweeps > 1 ? t_hot : t_cold;
  for (std::size_t sweep = 0; sweep < p.sweeps; ++sweep) {
    for (std::size_t v = 0; v < n; ++v) {
      double delta = x[v] ? -field[v] : field[v];
      if (delta > 0 && uniform01(rng) >= std::exp(-delta / t)) continue;
      double sign = x[v] ? -1.0 : 1.0;
      x[v] ^= 1;
      e += delta;
      for (const auto& edge : g.neighbors(v)) field[edge.to] += sign * edge.weight;
    }
    if (e < best_e) {
      best_e = e;
      best = x;
    }
    t *= ratio;
  }
  return best;
}

inline std::vector<std::uint8_t> run_tabu(const QuboGraph& g, const SolverParams& p, Rng& rng) {
  const std::size_t n = g.size();
  auto x = random_bits(rng, n);
  if (n == 0) return x;
  auto field = g.fields(x);
  std::vector<double> delta(n);
  for (std::size_t v = 0; v < n; ++v) delta[v] = x[v] ? -field[v] : field[v];

  const std::size_t tenure = std::min(p.tabu_tenure, n / 2);
  const std::size_t stall = p.tabu_stall.value_or(std::max<std::size_t>(100, n));
  std::vector<std::size_t> tabu_until(n, 0);

  double e = g.energy(x);
  double best_e = e;
  auto best = x;
  const double eps = 1e-12 * std::max(1.0, g.max_flip_energy());

  std::size_t last_improvement = 0;
  for (std::size_t iter = 1; iter - last_improvement <= stall; ++iter) {
    std::size_t pick = n;
    double pick_delta = std::numeric_limits<double>::infinity();
    for (std::size_t v = 0; v < n; ++v) {
      bool allowed = tabu_until[v] < iter || e + delta[v] < best_e - eps;
      if (allowed && delta[v] < pick_delta) {
        pick = v;
        pick_delta = delta[v];
      }
    }
    if (pick == n) break;  // every move tabu and none aspirates

    double sign = x[pick] ? -1.0 : 1.0;
    x[pick] ^= 1;
    e += pick_delta;
    delta[pick] = -pick_delta;
    for (const auto& edge : g.neighbors(pick)) {
      field[edge.to] += sign * edge.weight;
      delta[edge.to] = x[edge.to] ? -field[edge.to] : field[edge.to];
    }
    tabu_until[pick] = iter + tenure;
    if (e < best_e - eps) {
      best_e = e;
      best = x;
      last_improvement = iter;
    }
  }
  return best;
}

// Path-integral Monte Carlo on the spin form. Replica k holds spins s^k; the
// classical action is sum_k H_P(s^k) - J_perp sum_k sum_i s_i^k s_i^{k+1}
// sampled at temperature P*T, with J_perp = -(P T / 2) ln tanh(Gamma / (P T)).
inline std::vector<std::uint8_t> run_sqa(const QuboGraph& g, const SolverParams& p, Rng& rng) {
  const std::size_t n = g.size();
  const std::size_t slices = p.sqa_slices;
  if (n == 0) return {};

  // Ising fields and couplings: x = (1+s)/2
  std::vector<double> h(n);
  for (std::size_t v = 0; v < n; ++v) {
    h[v] = g.linear(v) / 2.0;
    for (const auto& edge : g.neighbors(v)) h[v] += edge.weight / 4.0;
  }
  double scale = 0.0;
  for (std::size_t v = 0; v < n; ++v) {
    double s = std::abs(h[v]);
    for (const auto& edge : g.neighbors(v)) s += std::abs(edge.weight) / 4.0;
    scale += s;
  }
  scale /= static_cast<double>(n);
  if (!(scale > 0)) return std::vector<std::uint8_t>(n, 0);

  const double temperature = p.sqa_temperature * scale;
  const double pt = static_cast<double>(slices) * temperature;
  const double g_hot = p.sqa_gamma_hot * scale;
  const double g_cold = p.sqa_gamma_cold * scale;

  std::vector<std::vector<std::int8_t>> spin(slices, std::vector<std::int8_t>(n));
  for (auto& replica : spin) {
    for (auto& s : replica) s = (rng() >> 63) ? 1 : -1;
  }
  // local[k][v] = h_v + sum_u J_vu s_u^k
  std::vector<std::vector<double>> local(slices, std::vector<double>(n));
  for (std::size_t k = 0; k < slices; ++k) {
    for (std::size_t v = 0; v < n; ++v) {
      double f = h[v];
      for (const auto& edge : g.neighbors(v)) f += edge.weight / 4.0 * spin[k][edge.to];
      local[k][v] = f;
    }
  }
  auto flip = [&](std::size_t k, std::size_t v) {
    std::int8_t old = spin[k][v];
    spin[k][v] = static_cast<std::int8_t>(-old);
    double change = -2.0 * old;
    for (const auto& edge : g.neighbors(v)) local[k][edge.to] += edge.weight / 4.0 * change;
  };

  std::vector<std::uint8_t> best;
  double best_e = std::numeric_limits<double>::infinity();
  std::vector<std::uint8_t> bits(n);
  auto consider_slices = [&] {
    for (std::size_t k = 0; k < slices; ++k) {
      for (std::size_t v = 0; v < n; ++v) bits[v] = spin[k][v] > 0 ? 1 : 0;
      double e = g.energy(bits);
      if (e < best_e) {
        best_e = e;
        best = bits;
      }
    }
  };

  for (std::size_t sweep = 0; sweep < p.sweeps; ++sweep) {
    double frac = p.sweeps > 1 ? static_cast<double>(sweep) / static_cast<double>(p.sweeps - 1) : 1.0;
    double gamma = g_hot + (g_cold - g_hot) * frac;
    double j_perp = -0.5 * pt * std::log(std::tanh(gamma / pt));

    for (std::size_t k = 0; k < slices; ++k) {
      const auto& prev = spin[(k + slices - 1) % slices];
      const auto& next = spin[(k + 1) % slices];
      for (std::size_t v = 0; v < n; ++v) {
        double s = spin[k][v];
        double neighbours = slices > 1 ? static_cast<double>(prev[v] + next[v]) : 0.0;
        double d = -2.0 * s * local[k][v] + 2.0 * j_perp * s * neighbours;
        if (d <= 0 || uniform01(rng) < std::exp(-d / pt)) flip(k, v);
      }
    }
    // world-line move: flip a spin in every replica at once
    for (std::size_t v = 0; v < n; ++v) {
      double d = 0.0;
      for (std::size_t k = 0; k < slices; ++k) d += -2.0 * spin[k][v] * local[k][v];
      if (d <= 0 || uniform01(rng) < std::exp(-d / pt)) {
        for (std::size_t k = 0; k < slices; ++k) flip(k, v);
      }
    }
    consider_slices();
  }
  return best;
}

inline std::vector<std::uint8_t> run_backend(const QuboGraph& g, const SolverParams& p, Rng& rng) {
  switch (p.backend) {
    case Backend::SA: return run_sa(g, p, rng);
    case Backend::Tabu: return run_tabu(g, p, rng);
    case Backend::SQA: return run_sqa(g, p, rng);
    default: throw std::invalid_argument("solve_heuristic: backend must be sa, tabu or sqa");
  }
}

}  // namespace detail

// Runs `restarts` independent runs and returns their merged samples, best first.
inline SampleSet solve_heuristic(const QuboGraph& g, const SolverParams& p) {
  validate(p);
  if (p.backend != Backend::SA && p.backend != Backend::Tabu && p.backend != Backend::SQA) {
    throw std::invalid_argument("solve_heuristic: backend must be sa, tabu or sqa, got " +
                                std::string(to_string(p.backend)));
  }
  std::vector<std::vector<std::uint8_t>> states(p.restarts);
  parallel_for(p.restarts, p.threads, [&](std::size_t r) {
    Rng rng = make_stream(p.seed, r);
    states[r] = detail::run_backend(g, p, rng);
  });
  return SampleSet::from_states(g, std::move(states));
}

inline SampleSet solve_heuristic(const Qubo& q, const SolverParams& p) { return solve_heuristic(QuboGraph(q), p); }

// ---------------------------------------------------------------------------
// Decomposition

namespace detail {

inline Sample solve_block(const QuboGraph& g, const SolverParams& p, std::uint64_t seed) {
  if (p.sub_backend == Backend::Exact && g.size() <= kMaxExactVars) return solve_exact(g);
  SolverParams sub = p;
  sub.backend = p.sub_backend == Backend::Exact ? Backend::Tabu : p.sub_backend;
  if (sub.backend == Backend::Decomposed) sub.backend = Backend::Tabu;
  sub.restarts = 1;
  sub.threads = 1;
  sub.seed = seed;
  return solve_heuristic(g, sub).best();
}

}  // namespace detail

// Keeps a global bit vector (seeded by one greedy descent pass), then
// repeatedly solves blocks of `sub_size` variables with the rest clamped,
// ranking variables by the magnitude of their current flip energy. A pass
// without gain restarts the working vector from a randomly kicked copy of the
// incumbent with a random grouping. Stops after `passes` consecutive passes
// without improving the incumbent. `pass_energies`, when given, receives the
// incumbent energy after each pass.
inline Sample solve_decomposed(const QuboGraph& g, const SolverParams& p,
                               std::vector<double>* pass_energies = nullptr) {
  validate(p);
  const std::size_t n = g.size();
  if (n <= p.sub_size) {
    Sample s = detail::solve_block(g, p, splitmix64(p.seed));
    if (pass_energies) pass_energies->assign(1, s.energy);
    return s;
  }

  std::vector<std::uint8_t> x(n, 0);
  auto field = g.fields(x);
  for (std::size_t v = 0; v < n; ++v) {
    double delta = x[v] ? -field[v] : field[v];
    if (delta < 0) {
      double sign = x[v] ? -1.0 : 1.0;
      x[v] ^= 1;
      for (const auto& edge : g.neighbors(v)) field[edge.to] += sign * edge.weight;
    }
  }
  double e = g.energy(x);
  if (pass_energies) pass_energies->clear();

  auto best = x;
  double best_e = e;
  std::vector<std::size_t> order(n);
  std::vector<std::ptrdiff_t> local_index(n, -1);
  std::size_t stale = 0;
  std::uint64_t block_counter = 0;
  constexpr std::size_t kMaxPasses = 1000;
  for (std::size_t pass = 0; pass < kMaxPasses && stale < p.passes; ++pass) {
    std::iota(order.begin(), order.end(), 0);
    if (stale == 0) {
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return std::abs(field[a]) > std::abs(field[b]); });
    } else {
      // stuck: restart the working vector from a kicked copy of the incumbent
      // and regroup the variables at random
      Rng kick = make_stream(p.seed, 0x73687566ULL + pass);
      x = best;
      for (std::size_t k = 0; k < std::max<std::size_t>(1, n / 8); ++k) x[uniform_index(kick, n)] ^= 1;
      field = g.fields(x);
      e = g.energy(x);
      std::shuffle(order.begin(), order.end(), kick);
    }

    // half-overlapping windows over the ranked order, the last one wrapping around
    const std::size_t stride = std::max<std::size_t>(1, p.sub_size / 2);
    std::vector<std::size_t> window(p.sub_size);
    for (std::size_t begin = 0; begin < n; begin += stride) {
      for (std::size_t a = 0; a < p.sub_size; ++a) window[a] = order[(begin + a) % n];
      std::span<const std::size_t> block(window.data(), p.sub_size);
      for (std::size_t a = 0; a < block.size(); ++a) local_index[block[a]] = static_cast<std::ptrdiff_t>(a);

      // clamp the outside variables into the block's linear terms
      std::vector<double> lin(block.size());
      std::vector<std::vector<QuboGraph::Edge>> adj(block.size());
      for (std::size_t a = 0; a < block.size(); ++a) {
        std::size_t v = block[a];
        double l = g.linear(v);
        for (const auto& edge : g.neighbors(v)) {
          auto li = local_index[edge.to];
          if (li >= 0) {
            adj[a].push_back({static_cast<std::size_t>(li), edge.weight});
          } else if (x[edge.to]) {
            l += edge.weight;
          }
        }
        lin[a] = l;
      }
      QuboGraph sub(std::move(lin), std::move(adj), 0.0);
      std::vector<std::uint8_t> current(block.size());
      for (std::size_t a = 0; a < block.size(); ++a) current[a] = x[block[a]];
      double current_e = sub.energy(current);

      Sample candidate = detail::solve_block(sub, p, splitmix64(p.seed ^ (0x5bd1e995ULL + block_counter++)));
      if (candidate.energy < current_e - 1e-12 * std::max(1.0, std::abs(current_e))) {
        for (std::size_t a = 0; a < block.size(); ++a) {
          std::size_t v = block[a];
          if (x[v] == candidate.bits[a]) continue;
          double sign = x[v] ? -1.0 : 1.0;
          x[v] ^= 1;
          for (const auto& edge : g.neighbors(v)) field[edge.to] += sign * edge.weight;
        }
        e = g.energy(x);
      }
      for (auto v : block) local_index[v] = -1;
    }
    if (e < best_e - 1e-12 * std::max(1.0, std::abs(best_e))) {
      best = x;
      best_e = e;
      stale = 0;
    } else {
      ++stale;
    }
    if (pass_energies) pass_energies->push_back(best_e);
  }
  return Sample{best, g.energy(best), 1};
}

inline Sample solve_decomposed(const Qubo& q, const SolverParams& p, std::vector<double>* pass_energies = nullptr) {
  return solve_decomposed(QuboGraph(q), p, pass_energies);
}

// Dispatches to the configured backend and always returns samples best first.
inline SampleSet solve(const QuboGraph& g, const SolverParams& p) {
  switch (p.backend) {
    case Backend::Exact: {
      auto s = solve_exact(g);
      return SampleSet::from_states(g, {std::move(s.bits)});
    }
    case Backend::Decomposed: {
      auto s = solve_decomposed(g, p);
      return SampleSet::from_states(g, {std::move(s.bits)});
    }
    default: return solve_heuristic(g, p);
  }
}

// ---------------------------------------------------------------------------
// Decoding and the assignment layer

// assign(i,j) bits become y_ij; every other role is dropped.
inline Assignment decode_assignment(const Sample& s, const Qubo& q, const Instance& inst, const OpenConfig& open) {
  if (s.bits.size() != q.nvars() || q.roles().size() != q.nvars()) {
    throw DimensionError("decode_assignment: sample length does not match the variable map");
  }
  BitMatrix y(inst.n, inst.m);
  for (std::size_t v = 0; v < q.nvars(); ++v) {
    const auto& r = q.roles()[v];
    if (r.role != Role::Assign) continue;
    if (r.first >= inst.n || r.second >= inst.m) throw DimensionError("decode_assignment: role outside the instance");
    if (s.bits[v]) y(r.first, r.second) = 1;
  }
  return check_feasibility(inst, open, std::move(y));
}

// Facility bits of a direct-encoding sample.
inline OpenConfig decode_facilities(const Sample& s, const Qubo& q, const Instance& inst) {
  OpenConfig open(inst.m);
  for (std::size_t v = 0; v < q.nvars(); ++v) {
    const auto& r = q.roles()[v];
    if (r.role == Role::Facility && s.bits[v]) open.set(r.second, true);
  }
  return open;
}

// Error correction of a possibly infeasible assignment. Each customer keeps its
// cheapest selected open site, overloaded sites shed their largest customers,
// unserved customers go largest first to the cheapest open site with room, and
// single moves and pairwise exchanges are then applied while they lower the
// transport cost. An all-zero y gives greedy_assign followed by the descent.
inline Assignment correct_assignment(const Instance& inst, const OpenConfig& open, const BitMatrix& y) {
  if (open.size() != inst.m || y.rows() != inst.n || y.cols() != inst.m) {
    throw DimensionError("correct_assignment: dimensions differ from the instance");
  }
  const std::size_t none = inst.m;
  std::vector<std::size_t> site(inst.n, none);
  std::vector<double> load(inst.m, 0.0);
  for (std::size_t i = 0; i < inst.n; ++i) {
    for (std::size_t j = 0; j < inst.m; ++j) {
      if (open.is_open(j) && y(i, j) && (site[i] == none || inst.transport(i, j) < inst.transport(i, site[i]))) {
        site[i] = j;
      }
    }
    if (site[i] != none) load[site[i]] += inst.demand[i];
  }
  for (std::size_t j = 0; j < inst.m; ++j) {
    while (load[j] > inst.capacity[j]) {
      std::size_t shed = none;
      for (std::size_t i = 0; i < inst.n; ++i) {
        if (site[i] == j && (shed == none || inst.demand[i] > inst.demand[shed])) shed = i;
      }
      site[shed] = none;
      load[j] -= inst.demand[shed];
    }
  }

  std::vector<std::size_t> unserved;
  for (std::size_t i = 0; i < inst.n; ++i) {
    if (site[i] == none) unserved.push_back(i);
  }
  std::stable_sort(unserved.begin(), unserved.end(),
                   [&](std::size_t a, std::size_t b) { return inst.demand[a] > inst.demand[b]; });
  bool complete = true;
  for (auto i : unserved) {
    for (std::size_t j = 0; j < inst.m; ++j) {
      if (!open.is_open(j) || load[j] + inst.demand[i] > inst.capacity[j]) continue;
      if (site[i] == none || inst.transport(i, j) < inst.transport(i, site[i])) site[i] = j;
    }
    if (site[i] == none) {
      complete = false;
      continue;
    }
    load[site[i]] += inst.demand[i];
  }

  if (complete) {
    constexpr double eps = 1e-9;
    for (bool improved = true; improved;) {
      improved = false;
      for (std::size_t i = 0; i < inst.n; ++i) {
        for (std::size_t j = 0; j < inst.m; ++j) {
          if (!open.is_open(j) || j == site[i] || load[j] + inst.demand[i] > inst.capacity[j]) continue;
          if (inst.transport(i, j) < inst.transport(i, site[i]) - eps) {
            load[site[i]] -= inst.demand[i];
            load[j] += inst.demand[i];
            site[i] = j;
            improved = true;
          }
        }
      }
      for (std::size_t a = 0; a < inst.n; ++a) {
        for (std::size_t b = a + 1; b < inst.n; ++b) {
          const std::size_t ja = site[a], jb = site[b];
          if (ja == jb) continue;
          const double shift = inst.demand[a] - inst.demand[b];
          if (load[jb] + shift > inst.capacity[jb] || load[ja] - shift > inst.capacity[ja]) continue;
          const double gain = inst.transport(a, ja) + inst.transport(b, jb) - inst.transport(a, jb) -
                              inst.transport(b, ja);
          if (gain > eps) {
            site[a] = jb;
            site[b] = ja;
            load[jb] += shift;
            load[ja] -= shift;
            improved = true;
          }
        }
      }
    }
  }

  BitMatrix out(inst.n, inst.m);
  for (std::size_t i = 0; i < inst.n; ++i) {
    if (site[i] != none) out(i, site[i]) = 1;
  }
  return check_feasibility(inst, open, std::move(out));
}

struct InnerResult {
  Assignment assignment;
  double inner_cost = kInfiniteCost;  // transport cost, infinite when no feasible assignment
  std::size_t attempts = 0;           // solver calls made
  bool fallback = false;              // no sample decoded feasibly
  bool corrected = false;             // the result came from correct_assignment
};

// Solves the assignment QUBO for a fixed configuration, scanning samples best
// first for a feasible decode and re-solving with fresh streams up to
// max_repair times. After that, with error correction on, the cheaper of the
// corrected lowest-energy decode and the corrected greedy assignment is
// returned; without it, greedy_assign.
inline InnerResult assign_customers(const Instance& inst, const OpenConfig& open, const PenaltySet& pen,
                                    const SolverParams& p, EncodingOptions opts = {}) {
  validate(p);
  if (open.size() != inst.m) throw DimensionError("assign_customers: config length differs from m");
  if (open.open_count() == 0) throw std::invalid_argument("assign_customers: no open facility");

  InnerResult result;
  result.fallback = true;
  if (open.open_capacity(inst) < inst.total_demand()) {
    result.assignment = greedy_assign(inst, open);
    return result;
  }

  Qubo q = build_inner_qubo(inst, open, pen, opts);
  QuboGraph g(q);
  std::optional<Sample> lowest;
  for (std::size_t attempt = 0; attempt < p.max_repair; ++attempt) {
    SolverParams round = p;
    round.seed = splitmix64(p.seed ^ (attempt * 0x9e3779b97f4a7c15ULL));
    ++result.attempts;
    const SampleSet samples = solve(g, round);
    for (const auto& s : samples.samples()) {
      Assignment a = decode_assignment(s, q, inst, open);
      if (a.feasible) {
        result.fallback = false;
        result.inner_cost = transport_cost(inst, a.y);
        result.assignment = std::move(a);
        return result;
      }
      if (!lowest || sample_before(s, *lowest)) lowest = s;
    }
    if (p.backend == Backend::Exact) break;  // deterministic; another attempt gives the same state
  }

  if (!p.error_correction) {
    result.assignment = greedy_assign(inst, open);
    result.inner_cost = result.assignment.feasible ? transport_cost(inst, result.assignment.y) : kInfiniteCost;
    return result;
  }
  result.corrected = true;
  for (const auto& start : {decode_assignment(*lowest, q, inst, open).y, BitMatrix(inst.n, inst.m)}) {
    Assignment a = correct_assignment(inst, open, start);
    if (!a.feasible) continue;
    double cost = transport_cost(inst, a.y);
    if (cost < result.inner_cost) {
      result.inner_cost = cost;
      result.assignment = std::move(a);
    }
  }
  if (!std::isfinite(result.inner_cost)) {
    result.corrected = false;
    result.assignment = greedy_assign(inst, open);
  }
  return result;
}

}  // namespace cflqa
