#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "klx/errors.hpp"
#include "klx/exact.hpp"
#include "klx/generators.hpp"
#include "klx/harness/config.hpp"
#include "klx/harness/runner.hpp"
#include "klx/harness/verify.hpp"

namespace klx::harness {
namespace {

namespace fs = std::filesystem;

Json spanner_doc() {
  return Json::parse(R"({
    "name": "tiny",
    "instance": {"generator": "random", "d": 3, "prompts": 2, "responses": 6, "beta": 0.5},
    "learner": {"name": "spanner", "t_exp": 40},
    "seeds": [1, 2]
  })");
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("klx-test-" + name);
  fs::remove_all(p);
  return p;
}

std::string schema_path(const Json& doc) {
  try {
    parse_experiment(doc);
  } catch (const SchemaError& e) {
    return e.path;
  }
  return "";
}

TEST(Config, DefaultsFilled) {
  const ExperimentConfig cfg = parse_experiment(spanner_doc());
  EXPECT_EQ(cfg.name, "tiny");
  EXPECT_EQ(cfg.instance.params.at("B").get<double>(), 1.0);
  EXPECT_EQ(cfg.instance.params.at("noise").get<std::string>(), "deterministic");
  EXPECT_EQ(cfg.learner.params.at("c_stat").get<double>(), 0.05);
  EXPECT_EQ(cfg.seeds, (std::vector<std::uint64_t>{1, 2}));
}

TEST(Config, ErrorsCarryJsonPath) {
  Json d = spanner_doc();
  d["instance"]["bogus"] = 1;
  EXPECT_EQ(schema_path(d), "$.instance.bogus");

  d = spanner_doc();
  d["instance"]["d"] = "three";
  EXPECT_EQ(schema_path(d), "$.instance.d");

  d = spanner_doc();
  d["learner"].erase("t_exp");
  EXPECT_EQ(schema_path(d), "$.learner.t_exp");

  d = spanner_doc();
  d["colour"] = "red";
  EXPECT_EQ(schema_path(d), "$.colour");

  d = spanner_doc();
  d.erase("seeds");
  EXPECT_EQ(schema_path(d), "$.seeds");

  d = spanner_doc();
  d["instance"]["beta"] = -0.5;
  EXPECT_EQ(schema_path(d), "$.instance.beta");

  d = spanner_doc();
  d["instance"]["generator"] = "nope";
  EXPECT_EQ(schema_path(d), "$.instance.generator");
}

TEST(Run, CsvIsByteIdenticalAcrossRuns) {
  const fs::path a = scratch("run-a"), b = scratch("run-b");
  const Json doc = spanner_doc();
  const ExperimentConfig cfg = parse_experiment(doc);
  EXPECT_TRUE(run(cfg, doc, a.string(), 1).ok);
  EXPECT_TRUE(run(cfg, doc, b.string(), 1).ok);
  for (const char* f : {"seed_1.csv", "seed_2.csv", "summary.csv"}) {
    const std::string x = slurp(a / "tiny" / f);
    EXPECT_FALSE(x.empty()) << f;
    EXPECT_EQ(x, slurp(b / "tiny" / f)) << f;
  }
  EXPECT_TRUE(fs::exists(a / "tiny" / "manifest.json"));
  const std::string metrics = slurp(a / "tiny" / "seed_1.csv");
  EXPECT_EQ(metrics.substr(0, metrics.find('\n')),
            "seed,round,t_data,t_comp_weak,t_comp_strong,t_prompt,resets,exact_regret,estimation_error,objective,"
            "accepted,clamped,core_size,trigger,certified");
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Run, JobsDoNotChangeResults) {
  const ExperimentConfig cfg = parse_experiment(spanner_doc());
  std::vector<RunSummary> one, two;
  for (const SeedRun& r : run_seeds(cfg, 1)) one.push_back(r.summary);
  for (const SeedRun& r : run_seeds(cfg, 2)) two.push_back(r.summary);
  EXPECT_EQ(summary_csv(one), summary_csv(two));
}

TEST(Run, FailedSeedIsReportedNotThrown) {
  Json d = spanner_doc();
  d["learner"] = Json::parse(R"({"name": "mtss"})");  // mtss needs an MDP
  const SeedRun r = run_seed(parse_experiment(d), 3);
  EXPECT_EQ(r.summary.status, "failed");
  EXPECT_FALSE(r.summary.error.empty());
}

TEST(Run, DpoExactRegretMatchesOracle) {
  Json d = spanner_doc();
  d["learner"] = Json::parse(R"({"name": "online_dpo", "rounds": 5})");
  const ExperimentConfig cfg = parse_experiment(d);
  const SeedRun r = run_seed(cfg, 4);
  ASSERT_EQ(r.summary.status, "ok");
  ASSERT_EQ(r.rows.size(), 5u);
  for (const MetricsRow& row : r.rows) {
    ASSERT_TRUE(row.exact_regret.has_value());
    EXPECT_GE(*row.exact_regret, -1e-12);
  }
  EXPECT_EQ(r.summary.ledger.t_data, 10u);
  const AnyInstance any = build_instance(cfg.instance, 4);
  const auto& inst = std::get<AlignmentInstance>(any);
  EXPECT_NEAR(*r.summary.c_cov, coverage_coefficients(inst, exact_optimal(inst).policy).c_cov, 1e-12);
}

TEST(Sweep, OnePointEqualsRun) {
  const Json base = spanner_doc();
  Json sw = {{"base", base}, {"grid", {{"instance.beta", {0.5}}}}};
  const fs::path dir = scratch("sweep-one");
  const std::vector<CellAggregate> cells = sweep(parse_sweep(sw), dir.string(), 1);
  ASSERT_EQ(cells.size(), 1u);
  std::vector<RunSummary> direct;
  for (const SeedRun& r : run_seeds(parse_experiment(base), 1)) direct.push_back(r.summary);
  const CellAggregate a = aggregate(direct, 0.25);
  EXPECT_EQ(cells[0].regret_mean, a.regret_mean);
  EXPECT_EQ(cells[0].t_data_mean, a.t_data_mean);
  EXPECT_TRUE(fs::exists(dir / "tiny" / "aggregate.csv"));
  EXPECT_TRUE(fs::exists(dir / "tiny" / "runs.csv"));
  fs::remove_all(dir);
}

TEST(Sweep, RefusesOversizedGrid) {
  Json sw = {{"base", spanner_doc()},
             {"grid", {{"instance.beta", {0.1, 0.2, 0.3}}, {"learner.t_exp", {10, 20, 30}}}},
             {"max_cells", 8}};
  try {
    parse_sweep(sw);
    FAIL() << "expected refusal";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("9 cells"), std::string::npos);
  }
  sw["max_cells"] = 9;
  EXPECT_EQ(parse_sweep(sw).cells(), 9u);
}

TEST(Sweep, BadCellReportsCell) {
  Json sw = {{"base", spanner_doc()}, {"grid", {{"instance.beta", {0.5, "x"}}}}};
  try {
    parse_sweep(sw);
    FAIL() << "expected a schema error";
  } catch (const SchemaError& e) {
    EXPECT_EQ(e.path, "$.grid[cell 1]");
  }
}

TEST(Sweep, CoverageGridTracksCStar) {
  Json base = Json::parse(R"({
    "name": "cov",
    "instance": {"generator": "coverage_hard", "c_star": 2, "responses": 16, "beta": 0.1},
    "learner": {"name": "online_dpo", "rounds": 2},
    "seeds": [0]
  })");
  Json sw = {{"base", base}, {"grid", {{"instance.c_star", {2.0, 8.0, 32.0}}}}};
  const fs::path dir = scratch("sweep-cov");
  const std::vector<CellAggregate> cells = sweep(parse_sweep(sw), dir.string(), 1);
  ASSERT_EQ(cells.size(), 3u);
  for (std::size_t i = 1; i < cells.size(); ++i) EXPECT_GT(*cells[i].c_cov_mean, *cells[i - 1].c_cov_mean);
  fs::remove_all(dir);
}

TEST(Sweep, BetaGridCoverageIsExact) {
  Json base = spanner_doc();
  base["seeds"] = {7};
  base["learner"] = Json::parse(R"({"name": "online_dpo", "rounds": 1})");
  const std::vector<double> betas = {0.25, 0.5, 1.0};
  Json sw = {{"base", base}, {"grid", {{"instance.beta", betas}}}};
  const fs::path dir = scratch("sweep-beta");
  const SweepConfig cfg = parse_sweep(sw);
  const std::vector<CellAggregate> cells = sweep(cfg, dir.string(), 1);
  for (std::size_t i = 0; i < betas.size(); ++i) {
    const ExperimentConfig e = parse_experiment(cfg.cell(i));
    const AnyInstance any = build_instance(e.instance, 7);
    const auto& inst = std::get<AlignmentInstance>(any);
    EXPECT_NEAR(*cells[i].c_cov_mean, coverage_coefficients(inst, exact_optimal(inst).policy).c_cov, 1e-12);
  }
  fs::remove_all(dir);
}

TEST(Aggregate, Quantiles) {
  EXPECT_EQ(quantile({3.0}, 0.9), 3.0);
  EXPECT_EQ(quantile({4.0, 1.0, 3.0, 2.0}, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile({1.0, 2.0, 3.0, 4.0, 5.0}, 0.1), 1.4);
  EXPECT_EQ(quantile({1.0, 2.0}, 1.0), 2.0);
  EXPECT_THROW(quantile({}, 0.5), ValidationError);
}

TEST(Aggregate, FailureRateAndFailedRuns) {
  std::vector<RunSummary> runs(4);
  runs[0].final_regret = 0.1;
  runs[1].final_regret = 0.3;
  runs[2].final_regret = 0.5;
  runs[3].status = "error";
  const CellAggregate a = aggregate(runs, 0.25);
  EXPECT_EQ(a.seeds, 4u);
  EXPECT_EQ(a.failed_runs, 1u);
  EXPECT_DOUBLE_EQ(a.regret_mean, 0.3);
  EXPECT_DOUBLE_EQ(a.failure_rate, 2.0 / 3.0);
}

TEST(Verify, SuiteTable) {
  EXPECT_EQ(suite_criteria("all").size(), 12u);
  EXPECT_EQ(suite_criteria("rejection"), (std::vector<int>{1, 2}));
  EXPECT_EQ(suite_criteria("multiturn"), (std::vector<int>{10}));
  for (const std::string& s : verify_suites()) EXPECT_FALSE(suite_criteria(s).empty()) << s;
}

TEST(Verify, LineFormat) {
  CheckResult r{3, "identities", true, "max residual 1e-15", "<= 1e-10", 0.25};
  const std::string line = format_check(r);
  EXPECT_EQ(line.rfind("[PASS] C03", 0), 0u);
  r.passed = false;
  EXPECT_EQ(format_check(r).rfind("[FAIL] C03", 0), 0u);
}

}  // namespace
}  // namespace klx::harness
