#pragma once

// QUBO encodings of the assignment subproblem and of the full network design
// problem, the spin (Ising) form, and device resource counts.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string_view>
#include <utility>
#include <vector>

#include "cflqa/instance.hpp"

namespace cflqa {

enum class Role { Assign, Slack, Facility, Legit, Free };

inline std::string_view to_string(Role r) {
  switch (r) {
    case Role::Assign: return "assign";
    case Role::Slack: return "slack";
    case Role::Facility: return "facility";
    case Role::Legit: return "legit";
    case Role::Free: return "free";
  }
  return "?";
}

// assign(i,j) / legit(i,j): first = customer i, second = site j.
// slack(l,j): first = bit position l, second = site j.
// facility(j): second = site j.
struct VarRole {
  Role role = Role::Free;
  std::size_t first = 0;
  std::size_t second = 0;

  bool operator==(const VarRole&) const = default;
};

// Sparse upper-triangular QUBO: energy(x) = offset + sum_{p<=q} terms[p,q] x_p x_q.
class Qubo {
 public:
  using Key = std::pair<std::size_t, std::size_t>;

  Qubo() = default;
  explicit Qubo(std::size_t nvars) : nvars_(nvars), roles_(nvars) {}

  std::size_t nvars() const { return nvars_; }
  const std::map<Key, double>& terms() const { return terms_; }
  double offset() const { return offset_; }
  const std::vector<VarRole>& roles() const { return roles_; }

  std::size_t add_variable(VarRole role = {}) {
    roles_.push_back(role);
    return nvars_++;
  }

  void add(std::size_t p, std::size_t q, double coeff) {
    if (p > q) std::swap(p, q);
    if (q >= nvars_) throw std::out_of_range("Qubo::add: variable index out of range");
    if (coeff == 0.0) return;
    auto [it, inserted] = terms_.try_emplace(Key{p, q}, coeff);
    if (!inserted) {
      it->second += coeff;
      if (it->second == 0.0) terms_.erase(it);
    }
  }

  void add_offset(double c) { offset_ += c; }

  double coefficient(std::size_t p, std::size_t q) const {
    if (p > q) std::swap(p, q);
    auto it = terms_.find(Key{p, q});
    return it == terms_.end() ? 0.0 : it->second;
  }

  double energy(std::span<const std::uint8_t> bits) const {
    if (bits.size() != nvars_) throw DimensionError("Qubo::energy: bit vector length differs from nvars");
    double e = offset_;
    for (const auto& [key, c] : terms_) {
      if (bits[key.first] && bits[key.second]) e += c;
    }
    return e;
  }

  std::size_t coupler_count() const {
    return static_cast<std::size_t>(
        std::count_if(terms_.begin(), terms_.end(), [](const auto& kv) { return kv.first.first != kv.first.second; }));
  }

  bool operator==(const Qubo&) const = default;

 private:
  std::size_t nvars_ = 0;
  std::map<Key, double> terms_;
  double offset_ = 0.0;
  std::vector<VarRole> roles_;
};

enum class PenaltyMode { Paper, Strict };

struct PenaltySet {
  std::vector<double> lambda;  // one-hot, per customer
  std::vector<double> mu;      // capacity, per site
  std::vector<double> alpha;   // legitimacy, per (i,j) row-major; direct encoding only
  PenaltyMode mode = PenaltyMode::Paper;
};

struct IsingModel {
  std::vector<double> h;
  std::map<Qubo::Key, double> J;  // p < q
  double offset = 0.0;

  double energy(std::span<const std::int8_t> spins) const {
    if (spins.size() != h.size()) throw DimensionError("IsingModel::energy: spin vector length differs");
    double e = offset;
    for (std::size_t p = 0; p < h.size(); ++p) e += h[p] * spins[p];
    for (const auto& [key, c] : J) e += c * spins[key.first] * spins[key.second];
    return e;
  }
};

// Width of the slack register for capacity v: ceil(log2(v+1)) bits hold every
// slack in [0, v]. The compatibility width ceil(log2 v) cannot hold slack = v
// when v is a power of two.
inline std::size_t slack_width(double capacity, bool paper_width = false) {
  auto v = static_cast<std::uint64_t>(std::floor(capacity));
  if (v == 0) return 0;
  std::uint64_t target = paper_width ? v : v + 1;
  std::size_t k = 0;
  while ((std::uint64_t{1} << k) < target) ++k;
  return k;
}

struct EncodingOptions {
  bool paper_slack_width = false;
};

inline PenaltySet default_penalties(const Instance& inst, PenaltyMode mode) {
  PenaltySet pen;
  pen.mode = mode;
  pen.lambda.resize(inst.n);
  pen.mu.resize(inst.m);
  pen.alpha.resize(inst.n * inst.m);

  double max_c = *std::max_element(inst.cost.begin(), inst.cost.end());
  double max_v = *std::max_element(inst.capacity.begin(), inst.capacity.end());
  double min_c = std::numeric_limits<double>::infinity();
  for (double c : inst.cost) {
    if (c > 0) min_c = std::min(min_c, c);
  }
  if (!std::isfinite(min_c)) min_c = 1.0;

  // Strict weights never drop below the cost of opening every site and serving
  // each customer from its dearest one. Any single unit of violation then costs
  // more than some feasible solution, so exact minimizers decode feasibly
  // whenever the slack registers can represent every slack.
  double bound = std::accumulate(inst.fixed_cost.begin(), inst.fixed_cost.end(), 0.0) + 1.0;
  std::vector<double> row_min(inst.n), row_max(inst.n);
  for (std::size_t i = 0; i < inst.n; ++i) {
    row_min[i] = row_max[i] = inst.transport(i, 0);
    for (std::size_t j = 1; j < inst.m; ++j) {
      row_min[i] = std::min(row_min[i], inst.transport(i, j));
      row_max[i] = std::max(row_max[i], inst.transport(i, j));
    }
    bound += row_max[i];
  }

  for (std::size_t i = 0; i < inst.n; ++i) {
    if (mode == PenaltyMode::Paper) {
      // weights must stay positive, so an all-zero cost row falls back to min_c
      pen.lambda[i] = row_min[i] > 0 ? row_min[i] : min_c;
    } else {
      pen.lambda[i] = std::max(2.0 * row_max[i] + 1.0, bound);
    }
  }
  for (std::size_t j = 0; j < inst.m; ++j) {
    pen.mu[j] = mode == PenaltyMode::Paper ? min_c / (max_v * max_v) : std::max(max_c + 1.0, bound);
  }
  for (std::size_t i = 0; i < inst.n; ++i) {
    for (std::size_t j = 0; j < inst.m; ++j) {
      pen.alpha[i * inst.m + j] = mode == PenaltyMode::Paper ? pen.lambda[i] : bound;
    }
  }
  return pen;
}

namespace detail {

inline void require_integral_demands(const Instance& inst) {
  for (std::size_t i = 0; i < inst.n; ++i) {
    if (inst.demand[i] != std::floor(inst.demand[i])) {
      throw std::invalid_argument("QUBO encoding requires integer demands (customer " + std::to_string(i + 1) +
                                  " has " + std::to_string(inst.demand[i]) + ")");
    }
  }
}

inline void check_penalties(const Instance& inst, const PenaltySet& pen, bool need_alpha) {
  if (pen.lambda.size() != inst.n || pen.mu.size() != inst.m ||
      (need_alpha && pen.alpha.size() != inst.n * inst.m)) {
    throw DimensionError("penalty set does not match the instance");
  }
  auto positive = [](const std::vector<double>& w) {
    return std::all_of(w.begin(), w.end(), [](double x) { return x > 0; });
  };
  if (!positive(pen.lambda) || !positive(pen.mu) || (need_alpha && !positive(pen.alpha))) {
    throw std::invalid_argument("penalty weights must be positive");
  }
}

// weight * (sum_k coeffs[k] x_{vars[k]} + constant)^2, expanded with x^2 = x.
inline void add_squared_linear(Qubo& q, double weight, std::span<const std::size_t> vars,
                               std::span<const double> coeffs, double constant) {
  for (std::size_t a = 0; a < vars.size(); ++a) {
    q.add(vars[a], vars[a], weight * (coeffs[a] * coeffs[a] + 2.0 * constant * coeffs[a]));
    for (std::size_t b = a + 1; b < vars.size(); ++b) {
      q.add(vars[a], vars[b], 2.0 * weight * coeffs[a] * coeffs[b]);
    }
  }
  q.add_offset(weight * constant * constant);
}

// Adds capacity terms mu_j (sum_i d_i y_ij + <2, a_j> - v_j)^2 for site j,
// given the variable index of y_ij for each customer.
inline void add_capacity_block(Qubo& q, const Instance& inst, std::size_t j, double mu,
                               std::span<const std::size_t> assign_vars, bool paper_width) {
  std::vector<std::size_t> vars(assign_vars.begin(), assign_vars.end());
  std::vector<double> coeffs(inst.demand.begin(), inst.demand.end());
  std::size_t k = slack_width(inst.capacity[j], paper_width);
  for (std::size_t l = 0; l < k; ++l) {
    vars.push_back(q.add_variable({Role::Slack, l, j}));
    coeffs.push_back(std::ldexp(1.0, static_cast<int>(l)));
  }
  // loads and slacks are integral, so only the integer part of v_j is reachable
  add_squared_linear(q, mu, vars, coeffs, -std::floor(inst.capacity[j]));
}

}  // namespace detail

// Assignment subproblem for a fixed set of open sites. Variables exist only
// for open sites: customer-major assign(i,j) first, then each open site's
// slack register.
inline Qubo build_inner_qubo(const Instance& inst, const OpenConfig& open, const PenaltySet& pen,
                             EncodingOptions opts = {}) {
  if (open.size() != inst.m) throw DimensionError("build_inner_qubo: config length differs from m");
  auto sites = open.open_sites();
  if (sites.empty()) throw std::invalid_argument("build_inner_qubo: no open facility");
  detail::require_integral_demands(inst);
  detail::check_penalties(inst, pen, false);

  Qubo q;
  const std::size_t mo = sites.size();
  for (std::size_t i = 0; i < inst.n; ++i) {
    for (auto j : sites) q.add_variable({Role::Assign, i, j});
  }
  for (std::size_t i = 0; i < inst.n; ++i) {
    std::vector<std::size_t> row(mo);
    for (std::size_t jj = 0; jj < mo; ++jj) {
      row[jj] = i * mo + jj;
      q.add(row[jj], row[jj], inst.transport(i, sites[jj]));
    }
    std::vector<double> ones(mo, 1.0);
    detail::add_squared_linear(q, pen.lambda[i], row, ones, -1.0);
  }
  for (std::size_t jj = 0; jj < mo; ++jj) {
    std::vector<std::size_t> column(inst.n);
    for (std::size_t i = 0; i < inst.n; ++i) column[i] = i * mo + jj;
    detail::add_capacity_block(q, inst, sites[jj], pen.mu[sites[jj]], column, opts.paper_slack_width);
  }
  return q;
}

// Whole problem in one QUBO: facility bits, assignments over every site,
// slack registers, and one legitimacy ancilla per (i,j) with penalty
// alpha_ij (x_j - y_ij - b_ij)^2.
inline Qubo build_direct_qubo(const Instance& inst, const PenaltySet& pen, EncodingOptions opts = {}) {
  detail::require_integral_demands(inst);
  detail::check_penalties(inst, pen, true);

  Qubo q;
  for (std::size_t j = 0; j < inst.m; ++j) {
    std::size_t v = q.add_variable({Role::Facility, 0, j});
    q.add(v, v, inst.fixed_cost[j]);
  }
  auto facility = [](std::size_t j) { return j; };
  const std::size_t assign_base = inst.m;
  auto assign = [&](std::size_t i, std::size_t j) { return assign_base + i * inst.m + j; };
  for (std::size_t i = 0; i < inst.n; ++i) {
    for (std::size_t j = 0; j < inst.m; ++j) q.add_variable({Role::Assign, i, j});
  }
  for (std::size_t i = 0; i < inst.n; ++i) {
    std::vector<std::size_t> row(inst.m);
    for (std::size_t j = 0; j < inst.m; ++j) {
      row[j] = assign(i, j);
      q.add(row[j], row[j], inst.transport(i, j));
    }
    std::vector<double> ones(inst.m, 1.0);
    detail::add_squared_linear(q, pen.lambda[i], row, ones, -1.0);
  }
  for (std::size_t j = 0; j < inst.m; ++j) {
    std::vector<std::size_t> column(inst.n);
    for (std::size_t i = 0; i < inst.n; ++i) column[i] = assign(i, j);
    detail::add_capacity_block(q, inst, j, pen.mu[j], column, opts.paper_slack_width);
  }
  for (std::size_t i = 0; i < inst.n; ++i) {
    for (std::size_t j = 0; j < inst.m; ++j) {
      std::size_t b = q.add_variable({Role::Legit, i, j});
      std::size_t vars[] = {facility(j), assign(i, j), b};
      double coeffs[] = {1.0, -1.0, -1.0};
      detail::add_squared_linear(q, pen.alpha[i * inst.m + j], vars, coeffs, 0.0);
    }
  }
  return q;
}

// Substitutes x = (1 + s) / 2.
inline IsingModel qubo_to_ising(const Qubo& q) {
  IsingModel ising;
  ising.h.assign(q.nvars(), 0.0);
  ising.offset = q.offset();
  for (const auto& [key, c] : q.terms()) {
    auto [p, r] = key;
    if (p == r) {
      ising.h[p] += c / 2.0;
      ising.offset += c / 2.0;
    } else {
      ising.h[p] += c / 4.0;
      ising.h[r] += c / 4.0;
      ising.J[key] += c / 4.0;
      ising.offset += c / 4.0;
    }
  }
  return ising;
}

inline std::vector<std::uint8_t> spins_to_bits(std::span<const std::int8_t> spins) {
  std::vector<std::uint8_t> bits(spins.size());
  for (std::size_t p = 0; p < spins.size(); ++p) bits[p] = spins[p] > 0 ? 1 : 0;
  return bits;
}

inline std::vector<std::int8_t> bits_to_spins(std::span<const std::uint8_t> bits) {
  std::vector<std::int8_t> spins(bits.size());
  for (std::size_t p = 0; p < bits.size(); ++p) spins[p] = bits[p] ? 1 : -1;
  return spins;
}

struct ResourceCount {
  std::size_t qubits = 0;
  std::size_t couplers = 0;

  bool operator==(const ResourceCount&) const = default;
};

// Logical plus ancilla qubits and the couplers of the inner encoding over the
// open sites: one-hot pairs per customer, assignment pairs per site, slack
// pairs per site, and slack-to-assignment links per site.
inline ResourceCount count_resources(const Instance& inst, const OpenConfig& open, EncodingOptions opts = {}) {
  if (open.size() != inst.m) throw DimensionError("count_resources: config length differs from m");
  auto sites = open.open_sites();
  if (sites.empty()) throw std::invalid_argument("count_resources: no open facility");
  const std::size_t mo = sites.size();
  const std::size_t n = inst.n;
  ResourceCount rc;
  rc.qubits = mo * n;
  rc.couplers = n * mo * (mo - 1) / 2 + mo * n * (n - 1) / 2;
  for (auto j : sites) {
    std::size_t k = slack_width(inst.capacity[j], opts.paper_slack_width);
    rc.qubits += k;
    rc.couplers += k * (k == 0 ? 0 : k - 1) / 2 + n * k;
  }
  return rc;
}

}  // namespace cflqa
