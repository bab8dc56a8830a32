#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace {

namespace fs = std::filesystem;

struct RunResult {
  int exit_code = -1;
  std::string output;  // stdout only
};

RunResult run_cli(const std::string& args) {
  const std::string tmp = (fs::temp_directory_path() / "pmuplace_cli_out.txt").string();
  const std::string cmd = std::string(PMUPLACE_CLI_PATH) + " " + args + " > " + tmp + " 2>/dev/null";
  RunResult r;
  const int status = std::system(cmd.c_str());
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(tmp);
  std::stringstream ss;
  ss << in.rdbuf();
  r.output = ss.str();
  std::remove(tmp.c_str());
  return r;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("pmuplace_cli_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int count_lines(const std::string& s) {
  return static_cast<int>(std::count(s.begin(), s.end(), '\n'));
}

}  // namespace

TEST(CliGenGrid, WritesDeterministicFile) {
  TempDir dir;
  const std::string g1 = dir.file("a.grid");
  const std::string g2 = dir.file("b.grid");
  EXPECT_EQ(run_cli("gen-grid --buses 20 --seed 3 -o " + g1).exit_code, 0);
  EXPECT_EQ(run_cli("gen-grid --buses 20 --seed 3 -o " + g2).exit_code, 0);
  ASSERT_TRUE(fs::exists(g1));
  EXPECT_EQ(slurp(g1), slurp(g2));
  // a different seed changes the bytes
  const std::string g3 = dir.file("c.grid");
  EXPECT_EQ(run_cli("gen-grid --buses 20 --seed 4 -o " + g3).exit_code, 0);
  EXPECT_NE(slurp(g1), slurp(g3));
}

TEST(CliGenGrid, RejectsSingleBus) {
  TempDir dir;
  const RunResult r = run_cli("gen-grid --buses 1 -o " + dir.file("x.grid"));
  EXPECT_EQ(r.exit_code, 2);
}

TEST(CliGenGrid, MissingRequiredOptionIsUsageError) {
  EXPECT_EQ(run_cli("gen-grid").exit_code, 2);
}

TEST(Cli, HelpExitsZero) {
  const RunResult r = run_cli("--help");
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_NE(r.output.find("gen-grid"), std::string::npos);
  EXPECT_NE(r.output.find("bounds"), std::string::npos);
}

TEST(Cli, MissingGridFileExitsOne) {
  const RunResult r = run_cli("candidates --grid /nonexistent/feeder.grid");
  EXPECT_EQ(r.exit_code, 1);
}

TEST(CliCandidates, ExportsTable) {
  TempDir dir;
  const std::string grid = dir.file("feeder.grid");
  ASSERT_EQ(run_cli("gen-grid --buses 10 --seed 1 -o " + grid).exit_code, 0);
  const RunResult r = run_cli("candidates --grid " + grid + " --cost-rule fixed");
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_EQ(r.output.rfind("id\tkind\tbus", 0), 0u);
  EXPECT_GT(count_lines(r.output), 10);
  // file output matches stdout
  const std::string out = dir.file("cands.tsv");
  ASSERT_EQ(run_cli("candidates --grid " + grid + " --cost-rule fixed -o " + out).exit_code, 0);
  EXPECT_EQ(slurp(out), r.output);
}

TEST(CliBounds, PrintsOneRowPerCell) {
  TempDir dir;
  const std::string grid = dir.file("feeder.grid");
  ASSERT_EQ(run_cli("gen-grid --buses 8 --seed 2 -o " + grid).exit_code, 0);
  const RunResult r = run_cli("bounds --grid " + grid +
                              " --metric A,D --budgets 2,4 --max-iter 60 --threads 2");
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_EQ(count_lines(r.output), 5);  // header + 4 cells
  // bound sandwich per printed row: f_lb <= min(f_feas, f_greedy)
  std::stringstream ss(r.output);
  std::string line;
  std::getline(ss, line);  // header
  while (std::getline(ss, line)) {
    std::stringstream row(line);
    std::string metric;
    double budget, f_lb, f_convex, f_feas, f_greedy, gap;
    row >> metric >> budget >> f_lb >> f_convex >> f_feas >> f_greedy >> gap;
    EXPECT_TRUE(metric == "A" || metric == "D");
    EXPECT_LE(f_lb, std::min(f_feas, f_greedy) + 1e-9);
    EXPECT_LE(f_lb, f_convex + 1e-9);
    // columns are printed with 9 significant digits
    EXPECT_NEAR(gap, std::min(f_feas, f_greedy) - f_lb, 1e-6 * std::max(1.0, std::abs(gap)));
  }
}

TEST(CliBounds, ReportFileAppendsWithSingleHeader) {
  TempDir dir;
  const std::string grid = dir.file("feeder.grid");
  const std::string report = dir.file("report.tsv");
  ASSERT_EQ(run_cli("gen-grid --buses 8 --seed 2 -o " + grid).exit_code, 0);
  const std::string base = "bounds --grid " + grid + " --max-iter 40 --budgets 2 -o " + report;
  ASSERT_EQ(run_cli(base + " --metric A").exit_code, 0);
  ASSERT_EQ(run_cli(base + " --metric D").exit_code, 0);
  const std::string text = slurp(report);
  EXPECT_EQ(count_lines(text), 3);  // one header, two data rows
  EXPECT_EQ(text.rfind("metric\tbudget", 0), 0u);
  EXPECT_EQ(text.find("metric\tbudget", 1), std::string::npos);
}

TEST(CliBounds, RejectsUnknownMetric) {
  TempDir dir;
  const std::string grid = dir.file("feeder.grid");
  ASSERT_EQ(run_cli("gen-grid --buses 6 --seed 2 -o " + grid).exit_code, 0);
  EXPECT_EQ(run_cli("bounds --grid " + grid + " --metric Q --budgets 1").exit_code, 1);
}

TEST(CliPlace, GreedyListsSelection) {
  TempDir dir;
  const std::string grid = dir.file("feeder.grid");
  ASSERT_EQ(run_cli("gen-grid --buses 10 --seed 5 -o " + grid).exit_code, 0);
  const RunResult r = run_cli("place --grid " + grid +
                              " --cost-rule fixed --budget 3 --metric D");
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_EQ(r.output.rfind("id\tkind\tbus", 0), 0u);
  EXPECT_NE(r.output.find("total_cost\t3"), std::string::npos);
  EXPECT_NE(r.output.find("f_D\t"), std::string::npos);
  EXPECT_EQ(count_lines(r.output), 6);  // header + 3 sensors + total + value
}

TEST(CliPlace, ConvexRoundStaysWithinBudget) {
  TempDir dir;
  const std::string grid = dir.file("feeder.grid");
  ASSERT_EQ(run_cli("gen-grid --buses 10 --seed 5 -o " + grid).exit_code, 0);
  const RunResult r = run_cli("place --grid " + grid +
                              " --cost-rule fixed --budget 3 --method convex-round --max-iter 80");
  EXPECT_EQ(r.exit_code, 0);
  std::stringstream ss(r.output);
  std::string line;
  double total = -1.0;
  while (std::getline(ss, line))
    if (line.rfind("total_cost\t", 0) == 0) total = std::stod(line.substr(11));
  EXPECT_GE(total, 0.0);
  EXPECT_LE(total, 3.0 + 1e-9);
}

TEST(CliPlace, ZeroBudgetReportsPriorMetric) {
  TempDir dir;
  const std::string grid = dir.file("feeder.grid");
  ASSERT_EQ(run_cli("gen-grid --buses 8 --seed 6 -o " + grid).exit_code, 0);
  const RunResult r = run_cli("place --grid " + grid + " --budget 0");
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_NE(r.output.find("total_cost\t0"), std::string::npos);
  EXPECT_NE(r.output.find("f_A\t"), std::string::npos);
  EXPECT_EQ(count_lines(r.output), 3);  // header + total + value, no sensors
}

TEST(CliValidate, ReportsDeviation) {
  TempDir dir;
  const std::string grid = dir.file("feeder.grid");
  ASSERT_EQ(run_cli("gen-grid --buses 8 --seed 7 -o " + grid).exit_code, 0);
  const RunResult r = run_cli("validate --grid " + grid +
                              " --trials 500 --seed 9 --select 0,1,2");
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_NE(r.output.find("trials\t"), std::string::npos);
  EXPECT_NE(r.output.find("sensors\t3"), std::string::npos);
  std::stringstream ss(r.output);
  std::string line;
  double deviation = -1.0;
  while (std::getline(ss, line))
    if (line.rfind("deviation\t", 0) == 0) deviation = std::stod(line.substr(10));
  EXPECT_GE(deviation, 0.0);
  EXPECT_LT(deviation, 1.0);
}

TEST(CliValidate, ZeroTrialsIsUsageError) {
  TempDir dir;
  const std::string grid = dir.file("feeder.grid");
  ASSERT_EQ(run_cli("gen-grid --buses 6 --seed 7 -o " + grid).exit_code, 0);
  EXPECT_EQ(run_cli("validate --grid " + grid + " --trials 0").exit_code, 2);
}

TEST(CliValidate, GreedySelectionViaBudget) {
  TempDir dir;
  const std::string grid = dir.file("feeder.grid");
  ASSERT_EQ(run_cli("gen-grid --buses 8 --seed 8 -o " + grid).exit_code, 0);
  const RunResult r = run_cli("validate --grid " + grid +
                              " --cost-rule fixed --trials 300 --budget 2 --metric A");
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_NE(r.output.find("sensors\t2"), std::string::npos);
}
