#pragma once

// Capacitated facility location: problem data, OR-Library ingestion,
// cost evaluation, feasibility checking and a greedy assignment.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cflqa {

inline constexpr double kInfiniteCost = std::numeric_limits<double>::infinity();

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t token_position)
      : std::runtime_error("token " + std::to_string(token_position) + ": " + what),
        token_position_(token_position) {}

  // 1-based index of the offending token in the input stream.
  std::size_t token_position() const { return token_position_; }

 private:
  std::size_t token_position_;
};

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Row-major dense binary matrix.
class BitMatrix {
 public:
  BitMatrix() = default;
  BitMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), bits_(rows * cols, 0) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  std::uint8_t operator()(std::size_t r, std::size_t c) const { return bits_[r * cols_ + c]; }
  std::uint8_t& operator()(std::size_t r, std::size_t c) { return bits_[r * cols_ + c]; }

  std::size_t row_sum(std::size_t r) const {
    return static_cast<std::size_t>(
        std::accumulate(bits_.begin() + r * cols_, bits_.begin() + (r + 1) * cols_, 0));
  }

  bool operator==(const BitMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint8_t> bits_;
};

// Immutable problem data. Sites are indexed j in [0, m), customers i in [0, n).
struct Instance {
  std::size_t m = 0;
  std::size_t n = 0;
  std::vector<double> capacity;    // v_j
  std::vector<double> fixed_cost;  // f_j
  std::vector<double> demand;      // d_i
  std::vector<double> cost;        // c_ij, row-major n x m; whole demand of i served from j
  std::string name;

  double transport(std::size_t i, std::size_t j) const { return cost[i * m + j]; }

  double total_demand() const { return std::accumulate(demand.begin(), demand.end(), 0.0); }
  double total_capacity() const { return std::accumulate(capacity.begin(), capacity.end(), 0.0); }

  // False when no choice of sites can hold every customer.
  bool globally_feasible() const { return total_capacity() >= total_demand(); }

  bool operator==(const Instance&) const = default;
};

// Outer-layer state: x_j = 1 when a facility is built at site j.
class OpenConfig {
 public:
  OpenConfig() = default;
  explicit OpenConfig(std::size_t m, bool open = false) : bits_(m, open ? 1 : 0) {}
  explicit OpenConfig(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {}

  std::size_t size() const { return bits_.size(); }
  bool is_open(std::size_t j) const { return bits_[j] != 0; }
  void set(std::size_t j, bool open) { bits_[j] = open ? 1 : 0; }
  const std::vector<std::uint8_t>& bits() const { return bits_; }

  std::size_t open_count() const {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
  }

  std::vector<std::size_t> open_sites() const {
    std::vector<std::size_t> sites;
    for (std::size_t j = 0; j < bits_.size(); ++j) {
      if (bits_[j]) sites.push_back(j);
    }
    return sites;
  }

  double open_capacity(const Instance& inst) const {
    double total = 0.0;
    for (std::size_t j = 0; j < bits_.size(); ++j) {
      if (bits_[j]) total += inst.capacity[j];
    }
    return total;
  }

  auto operator<=>(const OpenConfig&) const = default;

 private:
  std::vector<std::uint8_t> bits_;
};

enum class Constraint { OneHot, Capacity, Legitimacy };

inline std::string_view to_string(Constraint c) {
  switch (c) {
    case Constraint::OneHot: return "one-hot";
    case Constraint::Capacity: return "capacity";
    case Constraint::Legitimacy: return "legitimacy";
  }
  return "?";
}

// Customer index for OneHot, site index for Capacity, both for Legitimacy.
struct Violation {
  Constraint constraint;
  std::size_t customer = 0;
  std::size_t site = 0;

  bool operator==(const Violation&) const = default;
};

struct Assignment {
  BitMatrix y;  // n x m
  bool feasible = false;
  std::vector<Violation> violations;
};

namespace detail {

inline std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

class TokenReader {
 public:
  explicit TokenReader(std::istream& in) : in_(in) {}

  double next_number(const char* what) {
    std::string tok;
    if (!(in_ >> tok)) {
      throw ParseError(std::string("unexpected end of input, expected ") + what, position_ + 1);
    }
    ++position_;
    double value = 0.0;
    const char* first = tok.data();
    const char* last = tok.data() + tok.size();
    if (!tok.empty() && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last || !std::isfinite(value)) {
      throw ParseError("non-numeric token '" + tok + "' for " + what, position_);
    }
    return value;
  }

  std::size_t next_count(const char* what) {
    double v = next_number(what);
    if (v < 1 || v != std::floor(v)) {
      throw ParseError(std::string(what) + " must be a positive integer", position_);
    }
    return static_cast<std::size_t>(v);
  }

  void expect_end() {
    std::string tok;
    if (in_ >> tok) {
      throw ParseError("unexpected trailing token '" + tok + "'", position_ + 1);
    }
  }

  std::size_t position() const { return position_; }

 private:
  std::istream& in_;
  std::size_t position_ = 0;
};

}  // namespace detail

// Reads the OR-Library `cap` layout: m n, then m (capacity, fixed cost) pairs,
// then per customer its demand followed by m allocation costs.
inline Instance parse_orlib(std::istream& in, std::string name = {}) {
  detail::TokenReader reader(in);
  Instance inst;
  inst.name = std::move(name);
  inst.m = reader.next_count("site count m");
  inst.n = reader.next_count("customer count n");
  inst.capacity.resize(inst.m);
  inst.fixed_cost.resize(inst.m);
  inst.demand.resize(inst.n);
  inst.cost.resize(inst.n * inst.m);

  for (std::size_t j = 0; j < inst.m; ++j) {
    inst.capacity[j] = reader.next_number("capacity");
    if (inst.capacity[j] <= 0) throw ParseError("nonpositive capacity", reader.position());
    inst.fixed_cost[j] = reader.next_number("fixed cost");
    if (inst.fixed_cost[j] < 0) throw ParseError("negative fixed cost", reader.position());
  }
  for (std::size_t i = 0; i < inst.n; ++i) {
    inst.demand[i] = reader.next_number("demand");
    if (inst.demand[i] <= 0) throw ParseError("nonpositive demand", reader.position());
    for (std::size_t j = 0; j < inst.m; ++j) {
      double c = reader.next_number("allocation cost");
      if (c < 0) throw ParseError("negative allocation cost", reader.position());
      inst.cost[i * inst.m + j] = c;
    }
  }
  reader.expect_end();
  return inst;
}

inline Instance parse_orlib(std::string_view text, std::string name = {}) {
  std::istringstream in{std::string(text)};
  return parse_orlib(in, std::move(name));
}

inline void serialize_orlib(const Instance& inst, std::ostream& out) {
  using detail::format_number;
  out << inst.m << ' ' << inst.n << '\n';
  for (std::size_t j = 0; j < inst.m; ++j) {
    out << format_number(inst.capacity[j]) << ' ' << format_number(inst.fixed_cost[j]) << '\n';
  }
  for (std::size_t i = 0; i < inst.n; ++i) {
    out << format_number(inst.demand[i]) << '\n';
    for (std::size_t j = 0; j < inst.m; ++j) {
      out << (j ? " " : "") << format_number(inst.transport(i, j));
    }
    out << '\n';
  }
}

inline std::string serialize_orlib(const Instance& inst) {
  std::ostringstream out;
  serialize_orlib(inst, out);
  return out.str();
}

// Fixed plus transport cost, summed as written; feasibility is not checked.
inline double total_cost(const Instance& inst, const OpenConfig& open, const BitMatrix& y) {
  if (open.size() != inst.m || y.rows() != inst.n || y.cols() != inst.m) {
    throw DimensionError("total_cost: dimensions do not match the instance");
  }
  double total = 0.0;
  for (std::size_t j = 0; j < inst.m; ++j) {
    if (open.is_open(j)) total += inst.fixed_cost[j];
  }
  for (std::size_t i = 0; i < inst.n; ++i) {
    for (std::size_t j = 0; j < inst.m; ++j) {
      if (y(i, j)) total += inst.transport(i, j);
    }
  }
  return total;
}

inline double total_cost(const Instance& inst, const OpenConfig& open, const Assignment& asg) {
  return total_cost(inst, open, asg.y);
}

// Transport part only.
inline double transport_cost(const Instance& inst, const BitMatrix& y) {
  double total = 0.0;
  for (std::size_t i = 0; i < inst.n; ++i) {
    for (std::size_t j = 0; j < inst.m; ++j) {
      if (y(i, j)) total += inst.transport(i, j);
    }
  }
  return total;
}

// Capacity is enforced as load <= v_j.
inline Assignment check_feasibility(const Instance& inst, const OpenConfig& open, BitMatrix y) {
  if (open.size() != inst.m || y.rows() != inst.n || y.cols() != inst.m) {
    throw DimensionError("check_feasibility: dimensions do not match the instance");
  }
  Assignment asg;
  for (std::size_t i = 0; i < inst.n; ++i) {
    if (y.row_sum(i) != 1) asg.violations.push_back({Constraint::OneHot, i, 0});
  }
  for (std::size_t j = 0; j < inst.m; ++j) {
    double load = 0.0;
    for (std::size_t i = 0; i < inst.n; ++i) {
      if (y(i, j)) load += inst.demand[i];
    }
    if (load > inst.capacity[j]) asg.violations.push_back({Constraint::Capacity, 0, j});
  }
  for (std::size_t i = 0; i < inst.n; ++i) {
    for (std::size_t j = 0; j < inst.m; ++j) {
      if (y(i, j) && !open.is_open(j)) asg.violations.push_back({Constraint::Legitimacy, i, j});
    }
  }
  asg.y = std::move(y);
  asg.feasible = asg.violations.empty();
  return asg;
}

// Largest demand first, each to the cheapest open site that still has room.
inline Assignment greedy_assign(const Instance& inst, const OpenConfig& open) {
  if (open.size() != inst.m) throw DimensionError("greedy_assign: config length differs from m");
  auto sites = open.open_sites();
  if (sites.empty()) throw std::invalid_argument("greedy_assign: no open facility");

  std::vector<std::size_t> order(inst.n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return inst.demand[a] > inst.demand[b]; });

  std::vector<double> remaining(inst.m, 0.0);
  for (auto j : sites) remaining[j] = inst.capacity[j];

  BitMatrix y(inst.n, inst.m);
  for (auto i : order) {
    std::size_t pick = inst.m;
    for (auto j : sites) {
      if (remaining[j] < inst.demand[i]) continue;
      if (pick == inst.m || inst.transport(i, j) < inst.transport(i, pick)) pick = j;
    }
    if (pick == inst.m) continue;  // left unserved, reported as a violation
    y(i, pick) = 1;
    remaining[pick] -= inst.demand[i];
  }
  return check_feasibility(inst, open, std::move(y));
}

}  // namespace cflqa
