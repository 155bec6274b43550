#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cflqa/cflqa.hpp"

namespace fs = std::filesystem;

namespace cflqa {
namespace {

struct RunResult {
  int code = -1;
  std::string out;
};

RunResult run(const std::string& args) {
  RunResult r;
  std::string cmd = std::string("\"") + CFLQA_CLI_PATH + "\" " + args + " 2>/dev/null";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[256];
  while (fgets(buf, sizeof buf, pipe)) r.out += buf;
  int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("cflqa-cli-" + std::to_string(getpid()) + "-" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string write(const std::string& name, const std::string& text) {
    auto p = dir_ / name;
    std::ofstream(p) << text;
    return "\"" + p.string() + "\"";
  }
  std::string path(const std::string& name) const { return "\"" + (dir_ / name).string() + "\""; }
  std::string read(const std::string& name) const {
    std::ifstream in(dir_ / name);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
  }

  fs::path dir_;
};

const char* kTiny = "2 3\n10 5\n10 3\n2\n4 6\n3\n5 5\n1\n2 9\n";

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("solve").code, 2);
  EXPECT_EQ(run("solve " + path("missing.txt")).code, 2);
  auto f = write("tiny.txt", kTiny);
  EXPECT_EQ(run("solve " + f + " --inner quantum").code, 2);
  EXPECT_EQ(run("resources " + f + " --open 1").code, 2);
  EXPECT_EQ(run("bench " + path("nowhere")).code, 2);
}

TEST_F(Cli, MalformedInstanceExitsThree) {
  auto f = write("bad.txt", "2 3\n10 5\n10 x\n");
  EXPECT_EQ(run("solve " + f).code, 3);
  EXPECT_EQ(run("baseline " + f).code, 3);
}

TEST_F(Cli, InfeasibleInstanceExitsFour) {
  auto f = write("short.txt", "1 2\n3 1\n2\n1\n2\n1\n");
  EXPECT_EQ(run("solve " + f).code, 4);
  EXPECT_EQ(run("baseline " + f).code, 4);
}

TEST_F(Cli, SolveWritesConsistentReportAndSolution) {
  auto f = write("tiny.txt", kTiny);
  auto r = run("solve " + f + " --seed 3 --restarts 4 --json " + path("r.json") + " --solution " + path("s.txt"));
  ASSERT_EQ(r.code, 0);
  auto report = nlohmann::json::parse(read("r.json")).get<BenchReport>();
  ASSERT_EQ(report.instances.size(), 1u);
  const auto& row = report.instances[0];
  EXPECT_EQ(row.instance, "tiny");
  EXPECT_EQ(row.seed, 3u);
  EXPECT_EQ(row.params.restarts, 4u);
  EXPECT_EQ(row.params.penalty, "paper");
  EXPECT_EQ(row.params.iters_per_step, 2u);
  EXPECT_FALSE(row.gap_pct.has_value());
  ASSERT_TRUE(row.best_cost.has_value());

  auto inst = parse_orlib(kTiny);
  std::istringstream sol(read("s.txt"));
  auto s = read_solution(sol, inst.m, inst.n);
  EXPECT_TRUE(check_feasibility(inst, s.open, s.y).feasible);
  EXPECT_DOUBLE_EQ(total_cost(inst, s.open, s.y), *row.best_cost);
  EXPECT_NE(r.out.find("best_cost"), std::string::npos);

  auto e = run("evaluate " + f + " --solution " + path("s.txt"));
  EXPECT_EQ(e.code, 0);
  EXPECT_NE(e.out.find("feasible yes"), std::string::npos);
}

TEST_F(Cli, BenchMarksUnknownReferenceNotAvailable) {
  fs::create_directories(dir_ / "set");
  write("set/cap900.txt", kTiny);
  write("set/notes.txt", "ignored");
  auto r = run("bench " + path("set") + " --restarts 2 --json " + path("b.json"));
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("n/a"), std::string::npos);
  auto report = nlohmann::json::parse(read("b.json")).get<BenchReport>();
  ASSERT_EQ(report.instances.size(), 1u);
  EXPECT_EQ(report.instances[0].instance, "cap900");
  EXPECT_FALSE(report.mean_gap_pct.has_value());
}

TEST_F(Cli, ResourcesMatchLibraryCounts) {
  auto f = write("tiny.txt", kTiny);
  auto inst = parse_orlib(kTiny);
  for (bool paper : {false, true}) {
    auto r = run("resources " + f + (paper ? " --paper-slack-width" : ""));
    ASSERT_EQ(r.code, 0);
    auto rc = count_resources(inst, OpenConfig(inst.m, true), {paper});
    std::ostringstream expected;
    expected << "qubits " << rc.qubits << "\ncouplers " << rc.couplers << '\n';
    EXPECT_EQ(r.out.substr(0, expected.str().size()), expected.str());
  }
}

TEST_F(Cli, ExportedQuboMatchesLibrary) {
  auto f = write("tiny.txt", kTiny);
  ASSERT_EQ(run("export-qubo " + f + " --open 01 --penalty strict -o " + path("q.txt")).code, 0);
  std::istringstream in(read("q.txt"));
  auto q = read_qubo(in);
  auto inst = parse_orlib(kTiny);
  auto expected = build_inner_qubo(inst, OpenConfig(std::vector<std::uint8_t>{0, 1}),
                                   default_penalties(inst, PenaltyMode::Strict));
  ASSERT_EQ(q.nvars(), expected.nvars());
  std::vector<std::uint8_t> x(q.nvars());
  for (std::uint64_t code = 0; code < (std::uint64_t{1} << q.nvars()); ++code) {
    for (std::size_t p = 0; p < q.nvars(); ++p) x[p] = (code >> p) & 1u;
    EXPECT_NEAR(q.energy(x), expected.energy(x), 1e-9 * std::max(1.0, std::abs(expected.energy(x))));
  }
}

}  // namespace
}  // namespace cflqa
