// Acceptance checks, one line per criterion. Arguments select criteria by
// number; none runs all nine. Exit 1 on any FAIL, else 77 if any SKIP.

#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cflqa/cflqa.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace cflqa;

namespace {

enum class Verdict { Pass, Fail, Skip };

struct Outcome {
  Verdict verdict;
  std::string detail;
};

Outcome pass_if(bool ok, std::string detail) { return {ok ? Verdict::Pass : Verdict::Fail, std::move(detail)}; }

std::string fixed(double v, int digits = 4) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(digits);
  out << v;
  return out.str();
}

// ---------------------------------------------------------------------------
// OR-Library data

const std::vector<std::string> kCapNames = {"cap71",  "cap72",  "cap73",  "cap74",  "cap101", "cap102",
                                            "cap103", "cap104", "cap131", "cap132", "cap133", "cap134"};

fs::path orlib_dir() {
  if (const char* env = std::getenv("CFLQA_ORLIB_DIR")) return env;
  return CFLQA_DEFAULT_ORLIB_DIR;
}

std::optional<fs::path> cap_file(const std::string& name) {
  for (const auto& candidate : {orlib_dir() / name, orlib_dir() / (name + ".txt")}) {
    if (fs::is_regular_file(candidate)) return candidate;
  }
  return std::nullopt;
}

std::optional<std::map<std::string, Instance>> load_caps() {
  std::map<std::string, Instance> caps;
  for (const auto& name : kCapNames) {
    auto path = cap_file(name);
    if (!path) return std::nullopt;
    std::ifstream in(*path);
    auto inst = parse_orlib(in, name);
    const std::size_t m = name.size() == 5 ? 16 : name[4] == '0' ? 25 : 50;
    if (inst.m != m || inst.n != 50) {
      throw std::runtime_error(name + " is " + std::to_string(inst.m) + "x" + std::to_string(inst.n) +
                               ", expected " + std::to_string(m) + "x50");
    }
    caps.emplace(name, std::move(inst));
  }
  return caps;
}

void require_cap71_shape(const fs::path& path) {
  std::ifstream in(path);
  auto inst = parse_orlib(in, "cap71");
  if (inst.m != 16 || inst.n != 50) throw std::runtime_error("cap71 is not 16x50");
}

Outcome missing_data() { return {Verdict::Skip, "cap files not found in " + orlib_dir().string()}; }

struct DefaultRuns {
  std::map<std::string, SolveReport> hybrid;
  std::map<std::string, SolveReport> baseline;
};

SolveReport default_hybrid(const Instance& inst, std::uint64_t seed) {
  return run_hybrid(inst, {}, default_penalties(inst, PenaltyMode::Paper), SolverParams{}, seed);
}

const DefaultRuns& default_runs(const std::map<std::string, Instance>& caps) {
  static std::optional<DefaultRuns> runs;
  if (!runs) {
    runs.emplace();
    for (const auto& [name, inst] : caps) {
      runs->hybrid.emplace(name, default_hybrid(inst, 42));
      runs->baseline.emplace(name, run_classical_baseline(inst, {}, 42));
      std::cerr << name << " hybrid " << fixed(runs->hybrid.at(name).best_cost) << " baseline "
                << fixed(runs->baseline.at(name).best_cost) << " (" << fixed(runs->hybrid.at(name).runtime_s, 1)
                << " s)\n";
    }
  }
  return *runs;
}

Outcome criterion1() {
  auto caps = load_caps();
  if (!caps) return missing_data();
  const auto& runs = default_runs(*caps);
  double sum = 0.0, worst = 0.0, slowest = 0.0;
  for (const auto& [name, r] : runs.hybrid) {
    double gap = *compare_reference(name, r.best_cost);
    if (gap < -1e-6) return {Verdict::Fail, name + " beats the reference optimum by " + fixed(-gap) + "%"};
    sum += gap;
    worst = std::max(worst, gap);
    slowest = std::max(slowest, r.runtime_s);
  }
  double mean = sum / static_cast<double>(runs.hybrid.size());
  return pass_if(mean <= 1.0 && worst <= 2.0 && slowest <= 600.0,
                 "mean gap " + fixed(mean) + "%, max gap " + fixed(worst) + "%, slowest " + fixed(slowest, 1) + " s");
}

Outcome criterion2() {
  auto caps = load_caps();
  if (!caps) return missing_data();
  int reached = 0;
  std::string detail;
  for (const std::string name : {"cap73", "cap74", "cap104", "cap134"}) {
    double best_gap = kInfiniteCost;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      best_gap = std::min(best_gap, *compare_reference(name, default_hybrid(caps->at(name), seed).best_cost));
    }
    reached += best_gap <= 0.1;
    detail += name + " " + fixed(best_gap) + "% ";
  }
  return pass_if(reached >= 3, std::to_string(reached) + "/4 within 0.1% (" + detail + "best of 5 seeds)");
}

Outcome criterion3() {
  auto caps = load_caps();
  if (!caps) return missing_data();
  const auto& runs = default_runs(*caps);
  int ordered = 0;
  for (const auto& [name, r] : runs.hybrid) ordered += runs.baseline.at(name).best_cost >= r.best_cost;
  return pass_if(ordered >= 11, "baseline >= hybrid on " + std::to_string(ordered) + "/12");
}

std::string run_capture(const std::string& command) {
  std::string out;
  if (FILE* pipe = popen(command.c_str(), "r")) {
    char buf[256];
    while (fgets(buf, sizeof buf, pipe)) out += buf;
    pclose(pipe);
  }
  return out;
}

std::optional<std::size_t> field(const std::string& text, const std::string& key) {
  std::smatch m;
  if (std::regex_search(text, m, std::regex("(^|\\n)" + key + " ([0-9]+)"))) return std::stoul(m[2]);
  return std::nullopt;
}

Outcome criterion4() {
  auto path = cap_file("cap71");
  if (!path) return missing_data();
  require_cap71_shape(*path);
  auto out = run_capture(std::string("\"") + CFLQA_CLI_PATH + "\" resources \"" + path->string() +
                         "\" --paper-slack-width");
  auto qubits = field(out, "qubits");
  auto couplers = field(out, "couplers");
  auto structural = field(out, "structural_couplers");
  if (!qubits || !couplers || !structural) return {Verdict::Fail, "unexpected resources output"};
  return pass_if(*qubits == 1056 && *couplers == 40320 && *couplers == *structural,
                 "qubits " + std::to_string(*qubits) + ", couplers " + std::to_string(*couplers) + ", structural " +
                     std::to_string(*structural));
}

// ---------------------------------------------------------------------------
// Self-contained criteria

Instance four_sites() {
  return parse_orlib("4 3\n10 12\n10 7\n10 15\n10 4\n2\n3 9 4 8\n3\n6 2 7 5\n1\n8 6 1 9\n", "four");
}

Outcome criterion5() {
  auto temps = cooling_steps({.t0 = 10000, .t_end = 1, .alpha = 0.5});
  auto inst = four_sites();
  auto baseline = run_classical_baseline(inst, {}, 42);
  SolverParams sp;
  sp.restarts = 2;
  auto hybrid = run_hybrid(inst, {}, default_penalties(inst, PenaltyMode::Paper), sp, 42);
  return pass_if(temps.size() == 14 && baseline.trials == 14 * inst.m && hybrid.trials == 14 * inst.m,
                 std::to_string(temps.size()) + " steps, " + std::to_string(hybrid.trials) + " trials for m=" +
                     std::to_string(inst.m));
}

double direct_optimum_cost(const Instance& inst, const Sample& s, const Qubo& q) {
  auto open = decode_facilities(s, q, inst);
  if (open.open_count() == 0) return kInfiniteCost;
  auto a = decode_assignment(s, q, inst, open);
  return a.feasible ? total_cost(inst, open, a) : kInfiniteCost;
}

Outcome criterion6() {
  std::mt19937_64 rng(606);
  SolverParams exact;
  exact.backend = Backend::Exact;
  int hybrid_hits = 0;
  for (int trial = 0; trial < 100; ++trial) {
    auto inst = testing::random_instance(rng);
    auto oracle = testing::brute_force_global(inst);
    auto r = run_hybrid(inst, {}, default_penalties(inst, PenaltyMode::Strict), exact, static_cast<std::uint64_t>(trial));
    hybrid_hits += std::abs(r.best_cost - oracle.cost) < 1e-9;
  }

  int direct_hits = 0, direct_total = 0;
  const testing::InstanceShape small{.m_min = 1, .m_max = 3, .n_min = 1, .n_max = 3, .demand_max = 2,
                                     .capacity_max = 3, .max_inner_vars = 26};
  while (direct_total < 100) {
    auto inst = testing::random_instance(rng, small);
    auto q = build_direct_qubo(inst, default_penalties(inst, PenaltyMode::Strict));
    if (q.nvars() > kMaxExactVars) continue;
    ++direct_total;
    auto oracle = testing::brute_force_global(inst);
    auto s = solve_exact(q);
    direct_hits += std::abs(direct_optimum_cost(inst, s, q) - oracle.cost) < 1e-9 &&
                   std::abs(s.energy - oracle.cost) < 1e-9 * std::max(1.0, oracle.cost);
  }
  return pass_if(hybrid_hits >= 95 && direct_hits == 100,
                 "hybrid " + std::to_string(hybrid_hits) + "/100, direct ground state " + std::to_string(direct_hits) +
                     "/" + std::to_string(direct_total));
}

Outcome criterion7() {
  auto inst = four_sites();
  MoveOptions opts{.capacity_guard = true, .uniform_neighbors = true};
  std::map<OpenConfig, double> energy;
  for (std::uint64_t mask = 1; mask < 16; ++mask) {
    OpenConfig x(4);
    for (std::size_t j = 0; j < 4; ++j) x.set(j, (mask >> j) & 1u);
    energy[x] = total_cost(inst, x, greedy_assign(inst, x));
  }
  auto e = [&](const OpenConfig& x) { return energy.at(x); };
  double worst = 0.0;
  std::string detail;
  for (double t : {3.0, 10.0, 40.0}) {
    std::map<OpenConfig, double> target;
    double z = 0.0;
    for (const auto& [x, ex] : energy) {
      target[x] = static_cast<double>(neighbor_count(inst, x, opts)) * std::exp(-ex / t);
      z += target[x];
    }
    const std::size_t steps = 100000;
    Rng rng = make_stream(7, static_cast<std::uint64_t>(t));
    auto visits = metropolis_histogram(inst, e, OpenConfig(4, true), t, steps, 5000, rng, opts);
    double tv = 0.0;
    for (const auto& [x, w] : target) {
      auto it = visits.find(x);
      double seen = it == visits.end() ? 0.0 : static_cast<double>(it->second) / static_cast<double>(steps);
      tv += std::abs(w / z - seen);
    }
    tv /= 2.0;
    worst = std::max(worst, tv);
    detail += "T=" + fixed(t, 0) + " TV " + fixed(tv) + " ";
  }
  return pass_if(worst < 0.05, detail);
}

std::vector<std::uint8_t> encode_inner(const Qubo& q, const Instance& inst, const BitMatrix& y) {
  std::vector<double> load(inst.m, 0.0);
  for (std::size_t i = 0; i < inst.n; ++i) {
    for (std::size_t j = 0; j < inst.m; ++j) {
      if (y(i, j)) load[j] += inst.demand[i];
    }
  }
  std::vector<std::uint8_t> bits(q.nvars(), 0);
  for (std::size_t v = 0; v < q.nvars(); ++v) {
    const auto& r = q.roles()[v];
    if (r.role == Role::Assign) bits[v] = y(r.first, r.second);
    if (r.role == Role::Slack) {
      auto slack = static_cast<std::uint64_t>(std::floor(inst.capacity[r.second]) - load[r.second]);
      bits[v] = (slack >> r.first) & 1u;
    }
  }
  return bits;
}

Outcome criterion8() {
  std::mt19937_64 rng(808);
  int ising_ok = 0;
  for (int trial = 0; trial < 50; ++trial) {
    auto q = testing::random_qubo(rng, 4);
    auto ising = qubo_to_ising(q);
    bool ok = true;
    for (std::uint64_t code = 0; code < 16; ++code) {
      std::vector<std::uint8_t> x(4);
      for (std::size_t p = 0; p < 4; ++p) x[p] = (code >> p) & 1u;
      double a = testing::term_energy(q, x);
      double b = ising.energy(bits_to_spins(x));
      ok = ok && std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(a));
    }
    ising_ok += ok;
  }

  int decode_ok = 0, decode_total = 0;
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  while (decode_total < 50) {
    auto inst = testing::random_instance(rng);
    OpenConfig open(inst.m);
    for (std::size_t j = 0; j < inst.m; ++j) open.set(j, coin(rng) < 0.7);
    if (open.open_count() == 0) continue;
    auto sites = open.open_sites();
    BitMatrix y(inst.n, inst.m);
    for (std::size_t i = 0; i < inst.n; ++i) y(i, sites[rng() % sites.size()]) = 1;
    if (!check_feasibility(inst, open, y).feasible) continue;
    ++decode_total;
    for (auto mode : {PenaltyMode::Paper, PenaltyMode::Strict}) {
      auto q = build_inner_qubo(inst, open, default_penalties(inst, mode));
      auto bits = encode_inner(q, inst, y);
      double cost = transport_cost(inst, y);
      auto a = decode_assignment(Sample{bits, q.energy(bits), 1}, q, inst, open);
      decode_ok += std::abs(q.energy(bits) - cost) <= 1e-9 * std::max(1.0, cost) && a.feasible && a.y == y;
    }
  }
  return pass_if(ising_ok == 50 && decode_ok == 2 * decode_total,
                 "Ising " + std::to_string(ising_ok) + "/50, decode " + std::to_string(decode_ok) + "/" +
                     std::to_string(2 * decode_total) + " (both penalty modes)");
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

std::string without_runtime(const std::string& json) {
  return std::regex_replace(json, std::regex("\"runtime_s\":\\s*[-+0-9.eE]+"), "\"runtime_s\":0");
}

Outcome criterion9() {
  const fs::path dir = fs::temp_directory_path() / ("cflqa-acceptance-" + std::to_string(getpid()));
  fs::create_directories(dir / "bench");
  std::mt19937_64 rng(909);
  for (const std::string name : {"cap900", "cap901"}) {
    auto inst = testing::random_instance(rng, {.m_min = 4, .m_max = 5, .n_min = 5, .n_max = 6, .max_inner_vars = 60});
    std::ofstream(dir / "bench" / (name + ".txt")) << serialize_orlib(inst);
  }
  const std::string instance = (dir / "bench" / "cap900.txt").string();
  const std::vector<std::string> invocations = {
      "solve \"" + instance + "\" --seed 7",
      "solve \"" + instance + "\" --seed 7 --inner sa --sweeps 200 --penalty strict",
      "solve \"" + instance + "\" --seed 7 --inner sqa --sweeps 100 --restarts 4",
      "solve \"" + instance + "\" --seed 7 --inner decomposed --sub-size 8",
      "solve \"" + instance + "\" --seed 7 --chains 3 --threads 2",
      "baseline \"" + instance + "\" --seed 7",
      "bench \"" + (dir / "bench").string() + "\" --seed 7",
  };
  int identical = 0;
  std::string failed;
  for (std::size_t k = 0; k < invocations.size(); ++k) {
    std::string reports[2];
    for (int rep = 0; rep < 2; ++rep) {
      fs::path json = dir / ("run" + std::to_string(k) + "_" + std::to_string(rep) + ".json");
      std::string cmd = std::string("\"") + CFLQA_CLI_PATH + "\" " + invocations[k] + " --json \"" + json.string() +
                        "\" > /dev/null 2>&1";
      if (std::system(cmd.c_str()) == 0) reports[rep] = without_runtime(read_file(json));
    }
    bool same = !reports[0].empty() && reports[0] == reports[1];
    identical += same;
    if (!same) failed += " [" + invocations[k] + "]";
  }
  fs::remove_all(dir);
  return pass_if(identical == static_cast<int>(invocations.size()),
                 std::to_string(identical) + "/" + std::to_string(invocations.size()) +
                     " invocations byte-identical apart from runtime" + failed);
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Outcome (*)()> criteria = {criterion1, criterion2, criterion3, criterion4, criterion5,
                                               criterion6, criterion7, criterion8, criterion9};
  std::set<int> selected;
  for (int k = 1; k < argc; ++k) {
    int c = std::atoi(argv[k]);
    if (c < 1 || c > 9) {
      std::cerr << "usage: acceptance [criterion 1-9]...\n";
      return 2;
    }
    selected.insert(c);
  }
  if (selected.empty()) {
    for (int c = 1; c <= 9; ++c) selected.insert(c);
  }

  bool any_fail = false, any_skip = false;
  for (int c : selected) {
    Outcome o;
    try {
      o = criteria[c - 1]();
    } catch (const std::exception& e) {
      o = {Verdict::Fail, std::string("exception: ") + e.what()};
    }
    const char* tag = o.verdict == Verdict::Pass ? "PASS" : o.verdict == Verdict::Fail ? "FAIL" : "SKIP";
    std::cout << tag << " criterion " << c << ": " << o.detail << std::endl;
    any_fail = any_fail || o.verdict == Verdict::Fail;
    any_skip = any_skip || o.verdict == Verdict::Skip;
  }
  if (any_fail) return 1;
  return any_skip ? 77 : 0;
}
