// cflqa: two-layer annealing for capacitated facility location.
//
//   cflqa solve <file>        hybrid outer SA with a QUBO inner layer
//   cflqa baseline <file>     same outer chain, greedy inner layer
//   cflqa bench <dir>         every capNNN file in a directory
//   cflqa solve-qubo <file>   minimize an exported QUBO
//   cflqa export-qubo <file>  write the inner (or --direct) QUBO
//   cflqa resources <file>    qubit and coupler counts
//   cflqa evaluate <file>     re-evaluate a solution file
//
// Exit codes: 0 ok, 1 runtime failure, 2 usage, 3 parse error, 4 infeasible instance.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <regex>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cflqa/cflqa.hpp"

namespace fs = std::filesystem;
using namespace cflqa;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string path;
  std::uint64_t seed = 42;
  std::string inner = "tabu";
  std::string penalty = "paper";
  double t0 = 10000.0;
  double alpha = 0.5;
  double t_end = 1.0;
  std::size_t iters_per_step = 0;
  std::size_t restarts = 20;
  std::size_t sweeps = 1000;
  std::size_t sub_size = 50;
  std::size_t chains = 1;
  std::size_t threads = 1;
  bool t0_auto = false;
  bool paper_slack_width = false;
  bool no_capacity_guard = false;
  bool no_error_correction = false;
  std::string trace;
  std::string json;
  std::string history;
  std::string assignment;
  std::string solution;
  std::string algorithm = "hybrid";
  // export-qubo / resources
  bool direct = false;
  std::string open;
  std::string output;
  std::string map;
};

void add_run_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--seed", o.seed, "Random seed")->capture_default_str();
  cmd->add_option("--inner", o.inner, "Inner backend")
      ->check(CLI::IsMember({"exact", "sa", "tabu", "sqa", "decomposed"}))
      ->capture_default_str();
  cmd->add_option("--penalty", o.penalty, "Penalty mode")->check(CLI::IsMember({"paper", "strict"}))->capture_default_str();
  cmd->add_option("--t0", o.t0, "Initial temperature")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--alpha", o.alpha, "Cooling rate")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  cmd->add_option("--t-end", o.t_end, "Target temperature")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--iters-per-step", o.iters_per_step, "Trials per temperature (default m)")->check(CLI::PositiveNumber);
  cmd->add_option("--restarts", o.restarts, "Inner solver restarts")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--sweeps", o.sweeps, "SA/SQA sweeps per restart")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--sub-size", o.sub_size, "Decomposition block size")->check(CLI::Range(8, 1 << 30))->capture_default_str();
  cmd->add_option("--chains", o.chains, "Independent outer chains")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--threads", o.threads, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_flag("--t0-auto", o.t0_auto, "Derive t0 from probe moves");
  cmd->add_flag("--paper-slack-width", o.paper_slack_width, "Slack registers of ceil(log2 v) bits");
  cmd->add_flag("--no-capacity-guard", o.no_capacity_guard, "Allow moves below total demand");
  cmd->add_flag("--no-error-correction", o.no_error_correction, "Use greedy_assign when no sample decodes feasibly");
  cmd->add_option("--trace", o.trace, "Trace CSV path (bench: directory)");
  cmd->add_option("--json", o.json, "JSON report path");
}

Instance load_instance(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open " + path);
  return parse_orlib(in, fs::path(path).stem().string());
}

OpenConfig parse_open(const std::string& text, const Instance& inst) {
  if (text.empty()) return OpenConfig(inst.m, true);
  std::string bits;
  for (char c : text) {
    if (c == '0' || c == '1') {
      bits.push_back(c);
    } else if (c != ',' && c != ' ') {
      throw UsageError("--open expects a string of 0/1 bits");
    }
  }
  if (bits.size() != inst.m) {
    throw UsageError("--open has " + std::to_string(bits.size()) + " bits, instance has m=" + std::to_string(inst.m));
  }
  OpenConfig x(inst.m);
  for (std::size_t j = 0; j < inst.m; ++j) x.set(j, bits[j] == '1');
  if (x.open_count() == 0) throw UsageError("--open must open at least one site");
  return x;
}

SolverParams solver_params(const Options& o) {
  SolverParams sp;
  sp.backend = *parse_backend(o.inner);
  sp.restarts = o.restarts;
  sp.sweeps = o.sweeps;
  sp.sub_size = o.sub_size;
  sp.seed = o.seed;
  sp.threads = o.threads;
  sp.error_correction = !o.no_error_correction;
  return sp;
}

PenaltyMode penalty_mode(const Options& o) { return o.penalty == "strict" ? PenaltyMode::Strict : PenaltyMode::Paper; }

AnnealSchedule schedule(const Options& o) {
  AnnealSchedule s{o.t0, o.t_end, o.alpha, std::nullopt};
  if (o.iters_per_step) s.iters_per_step = o.iters_per_step;
  return s;
}

RunParams run_params(const Options& o, const Instance& inst, const std::string& algorithm) {
  RunParams p;
  p.algorithm = algorithm;
  p.inner = algorithm == "baseline" ? "greedy" : o.inner;
  p.penalty = o.penalty;
  p.t0 = o.t0;
  p.alpha = o.alpha;
  p.t_end = o.t_end;
  p.iters_per_step = schedule(o).trials_per_step(inst);
  p.restarts = o.restarts;
  p.sub_size = o.sub_size;
  p.chains = o.chains;
  p.t0_auto = o.t0_auto;
  p.paper_slack_width = o.paper_slack_width;
  p.capacity_guard = !o.no_capacity_guard;
  p.error_correction = !o.no_error_correction;
  return p;
}

SolveReport run_algorithm(const Instance& inst, const Options& o, const std::string& algorithm) {
  HybridOptions opts;
  opts.moves.capacity_guard = !o.no_capacity_guard;
  opts.t0_auto = o.t0_auto;
  opts.encoding.paper_slack_width = o.paper_slack_width;
  const auto sched = schedule(o);
  if (algorithm == "baseline") {
    return best_of_chains(o.chains, o.threads, o.seed,
                          [&](std::uint64_t s) { return run_classical_baseline(inst, sched, s, opts); });
  }
  const auto pen = default_penalties(inst, penalty_mode(o));
  const auto sp = solver_params(o);
  return best_of_chains(o.chains, o.threads, o.seed,
                        [&](std::uint64_t s) { return run_hybrid(inst, sched, pen, sp, s, opts); });
}

template <typename Writer>
void write_file(const std::string& path, Writer&& writer) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  writer(out);
}

InstanceResult make_result(const Instance& inst, const Options& o, const std::string& algorithm,
                           const SolveReport& r, std::optional<std::string> trace_path) {
  InstanceResult row;
  row.instance = inst.name;
  row.m = inst.m;
  row.n = inst.n;
  if (std::isfinite(r.best_cost)) {
    row.best_cost = r.best_cost;
    row.gap_pct = compare_reference(inst.name, r.best_cost);
  }
  row.seed = o.seed;
  row.params = run_params(o, inst, algorithm);
  row.runtime_s = r.runtime_s;
  row.trace_path = std::move(trace_path);
  return row;
}

void write_json(const std::string& path, BenchReport report) {
  summarize(report);
  write_file(path, [&](std::ostream& out) { out << nlohmann::json(report).dump(2) << '\n'; });
}

int cmd_solve(const Options& o, const std::string& algorithm) {
  auto inst = load_instance(o.path);
  auto r = run_algorithm(inst, o, algorithm);
  if (!o.trace.empty()) write_file(o.trace, [&](std::ostream& out) { write_trace_csv(r, out); });
  if (!o.history.empty()) write_file(o.history, [&](std::ostream& out) { write_config_history_csv(r, out); });
  if (std::isfinite(r.best_cost)) {
    if (!o.assignment.empty()) {
      write_file(o.assignment, [&](std::ostream& out) { write_assignment_csv(r.best_assignment.y, out); });
    }
    if (!o.solution.empty()) {
      write_file(o.solution, [&](std::ostream& out) { write_solution(r.best_open, r.best_assignment.y, out); });
    }
  }
  if (!o.json.empty()) {
    auto trace = o.trace.empty() ? std::nullopt : std::optional<std::string>(o.trace);
    write_json(o.json, BenchReport{{make_result(inst, o, algorithm, r, trace)}, {}, {}});
  }

  std::cout << "instance " << inst.name << " (m=" << inst.m << ", n=" << inst.n << ")\n";
  std::cout << "best_cost " << format_cost(r.best_cost) << '\n';
  if (auto gap = compare_reference(inst.name, r.best_cost); gap && std::isfinite(r.best_cost)) {
    std::cout << "gap_pct " << std::fixed << std::setprecision(4) << *gap << std::defaultfloat << '\n';
  }
  if (std::isfinite(r.best_cost)) {
    std::cout << "open";
    for (auto j : r.best_open.open_sites()) std::cout << ' ' << j + 1;
    std::cout << '\n';
  }
  std::cout << "trials " << r.trials << " accepted " << r.accepted << " inner_fallbacks " << r.inner_fallbacks << '\n';
  return 0;
}

int cmd_bench(const Options& o) {
  if (!fs::is_directory(o.path)) throw UsageError(o.path + " is not a directory");
  static const std::regex cap_name(R"(cap\d+)");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(o.path)) {
    if (entry.is_regular_file() && std::regex_match(entry.path().stem().string(), cap_name)) {
      files.push_back(entry.path());
    }
  }
  // numeric order: cap71 < cap101
  std::sort(files.begin(), files.end(), [](const fs::path& a, const fs::path& b) {
    auto key = [](const fs::path& p) { return std::stoul(p.stem().string().substr(3)); };
    return key(a) < key(b);
  });
  if (files.empty()) {
    std::cerr << "no capNNN files in " << o.path << '\n';
    return 1;
  }
  if (!o.trace.empty()) fs::create_directories(o.trace);

  BenchReport report;
  std::printf("%-8s %-7s %16s %16s %10s %9s\n", "instance", "size", "best_cost", "reference", "gap_pct", "time_s");
  for (const auto& file : files) {
    auto inst = load_instance(file.string());
    if (!inst.globally_feasible()) {
      std::cerr << inst.name << ": infeasible instance, skipped\n";
      continue;
    }
    auto r = run_algorithm(inst, o, o.algorithm);
    std::optional<std::string> trace_path;
    if (!o.trace.empty()) {
      trace_path = (fs::path(o.trace) / (inst.name + "_trace.csv")).string();
      write_file(*trace_path, [&](std::ostream& out) { write_trace_csv(r, out); });
    }
    auto row = make_result(inst, o, o.algorithm, r, trace_path);
    auto ref = find_reference(inst.name);
    char gap[32] = "n/a";
    if (row.gap_pct) std::snprintf(gap, sizeof(gap), "%.4f", *row.gap_pct);
    char ref_text[32] = "n/a";
    if (ref) std::snprintf(ref_text, sizeof(ref_text), "%.3f", ref->lindo_opt);
    std::string size = std::to_string(inst.m) + "x" + std::to_string(inst.n);
    std::printf("%-8s %-7s %16.3f %16s %10s %9.2f\n", inst.name.c_str(), size.c_str(), r.best_cost, ref_text, gap,
                r.runtime_s);
    std::fflush(stdout);
    report.instances.push_back(std::move(row));
  }
  summarize(report);
  if (report.mean_gap_pct) std::printf("mean gap %.4f%%  max gap %.4f%%\n", *report.mean_gap_pct, *report.max_gap_pct);
  if (!o.json.empty()) write_json(o.json, report);
  return 0;
}

int cmd_solve_qubo(const Options& o) {
  std::ifstream in(o.path);
  if (!in) throw UsageError("cannot open " + o.path);
  Qubo q = read_qubo(in);
  auto sp = solver_params(o);
  auto set = solve(QuboGraph(q), sp);
  const auto& best = set.best();
  std::cout << "energy " << detail::format_g17(best.energy) << '\n';
  std::cout << "bits ";
  for (auto b : best.bits) std::cout << int(b);
  std::cout << '\n';
  if (!o.json.empty()) {
    std::string bits;
    for (auto b : best.bits) bits.push_back(b ? '1' : '0');
    nlohmann::json j{{"file", fs::path(o.path).filename().string()},
                     {"nvars", q.nvars()},
                     {"backend", o.inner},
                     {"seed", o.seed},
                     {"restarts", o.restarts},
                     {"energy", best.energy},
                     {"bits", bits},
                     {"distinct_samples", set.size()}};
    write_file(o.json, [&](std::ostream& out) { out << j.dump(2) << '\n'; });
  }
  return 0;
}

int cmd_export(const Options& o) {
  auto inst = load_instance(o.path);
  auto pen = default_penalties(inst, penalty_mode(o));
  EncodingOptions enc{o.paper_slack_width};
  Qubo q = o.direct ? build_direct_qubo(inst, pen, enc) : build_inner_qubo(inst, parse_open(o.open, inst), pen, enc);
  if (o.output.empty() || o.output == "-") {
    write_qubo(q, std::cout);
  } else {
    write_file(o.output, [&](std::ostream& out) { write_qubo(q, out); });
  }
  if (!o.map.empty()) write_file(o.map, [&](std::ostream& out) { write_varmap(q, out); });
  std::cerr << "nvars " << q.nvars() << " terms " << q.terms().size() << '\n';
  return 0;
}

int cmd_resources(const Options& o) {
  auto inst = load_instance(o.path);
  auto open = parse_open(o.open, inst);
  EncodingOptions enc{o.paper_slack_width};
  auto rc = count_resources(inst, open, enc);
  std::cout << "qubits " << rc.qubits << '\n' << "couplers " << rc.couplers << '\n';
  auto q = build_inner_qubo(inst, open, default_penalties(inst, PenaltyMode::Strict), enc);
  std::cout << "structural_qubits " << q.nvars() << '\n' << "structural_couplers " << q.coupler_count() << '\n';
  return 0;
}

int cmd_evaluate(const Options& o) {
  auto inst = load_instance(o.path);
  std::ifstream in(o.solution);
  if (!in) throw UsageError("cannot open " + o.solution);
  auto s = read_solution(in, inst.m, inst.n);
  auto a = check_feasibility(inst, s.open, s.y);
  std::cout << "total_cost " << format_cost(total_cost(inst, s.open, s.y)) << '\n';
  std::cout << "feasible " << (a.feasible ? "yes" : "no") << '\n';
  for (const auto& v : a.violations) {
    std::cout << "violation " << to_string(v.constraint);
    if (v.constraint != Constraint::Capacity) std::cout << " customer " << v.customer + 1;
    if (v.constraint != Constraint::OneHot) std::cout << " site " << v.site + 1;
    std::cout << '\n';
  }
  return a.feasible ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Capacitated facility location by two-layer annealing"};
  app.require_subcommand(1);
  Options o;

  auto* solve_cmd = app.add_subcommand("solve", "Hybrid solve of one cap file");
  auto* base_cmd = app.add_subcommand("baseline", "Classical SA with greedy assignment");
  auto* bench_cmd = app.add_subcommand("bench", "Run every capNNN file in a directory");
  for (auto* cmd : {solve_cmd, base_cmd}) {
    cmd->add_option("file", o.path, "Instance file")->required();
    add_run_flags(cmd, o);
    cmd->add_option("--history", o.history, "Per-step configuration CSV path");
    cmd->add_option("--assignment", o.assignment, "Best assignment CSV path");
    cmd->add_option("--solution", o.solution, "Solution file path");
  }
  bench_cmd->add_option("dir", o.path, "Directory of cap files")->required();
  add_run_flags(bench_cmd, o);
  bench_cmd->add_option("--algorithm", o.algorithm, "hybrid or baseline")
      ->check(CLI::IsMember({"hybrid", "baseline"}))
      ->capture_default_str();

  auto* qsolve_cmd = app.add_subcommand("solve-qubo", "Minimize an exported QUBO file");
  qsolve_cmd->add_option("file", o.path, "QUBO file")->required();
  qsolve_cmd->add_option("--seed", o.seed, "Random seed")->capture_default_str();
  qsolve_cmd->add_option("--inner", o.inner, "Backend")
      ->check(CLI::IsMember({"exact", "sa", "tabu", "sqa", "decomposed"}))
      ->capture_default_str();
  qsolve_cmd->add_option("--restarts", o.restarts, "Restarts")->check(CLI::PositiveNumber)->capture_default_str();
  qsolve_cmd->add_option("--sweeps", o.sweeps, "Sweeps per restart")->check(CLI::PositiveNumber)->capture_default_str();
  qsolve_cmd->add_option("--sub-size", o.sub_size, "Decomposition block size")
      ->check(CLI::Range(8, 1 << 30))
      ->capture_default_str();
  qsolve_cmd->add_option("--threads", o.threads, "Worker threads")->check(CLI::PositiveNumber);
  qsolve_cmd->add_option("--json", o.json, "JSON result path");

  auto* export_cmd = app.add_subcommand("export-qubo", "Write the assignment or direct QUBO");
  export_cmd->add_option("file", o.path, "Instance file")->required();
  export_cmd->add_flag("--direct", o.direct, "Single-shot encoding over all sites");
  export_cmd->add_option("--open", o.open, "Open sites as a 0/1 string (default all)");
  export_cmd->add_option("--penalty", o.penalty, "Penalty mode")->check(CLI::IsMember({"paper", "strict"}));
  export_cmd->add_flag("--paper-slack-width", o.paper_slack_width, "Slack registers of ceil(log2 v) bits");
  export_cmd->add_option("-o,--output", o.output, "QUBO output path (default stdout)");
  export_cmd->add_option("--map", o.map, "Variable map output path");

  auto* res_cmd = app.add_subcommand("resources", "Qubit and coupler counts of the assignment QUBO");
  res_cmd->add_option("file", o.path, "Instance file")->required();
  res_cmd->add_option("--open", o.open, "Open sites as a 0/1 string (default all)");
  res_cmd->add_flag("--paper-slack-width", o.paper_slack_width, "Slack registers of ceil(log2 v) bits");

  auto* eval_cmd = app.add_subcommand("evaluate", "Cost and feasibility of a solution file");
  eval_cmd->add_option("file", o.path, "Instance file")->required();
  eval_cmd->add_option("--solution", o.solution, "Solution file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*solve_cmd) return cmd_solve(o, "hybrid");
    if (*base_cmd) return cmd_solve(o, "baseline");
    if (*bench_cmd) return cmd_bench(o);
    if (*qsolve_cmd) return cmd_solve_qubo(o);
    if (*export_cmd) return cmd_export(o);
    if (*res_cmd) return cmd_resources(o);
    if (*eval_cmd) return cmd_evaluate(o);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return 3;
  } catch (const InfeasibleInstance& e) {
    std::cerr << "infeasible: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
