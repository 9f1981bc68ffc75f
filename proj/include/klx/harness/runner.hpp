#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "klx/harness/config.hpp"
#include "klx/oracle.hpp"
#include "klx/serialize.hpp"

namespace klx::harness {

inline constexpr const char* kVersion = "0.1.0";

struct MetricsRow {
  std::uint64_t seed = 0;
  int round = 0;
  QueryLedger ledger;
  std::optional<double> exact_regret;
  std::optional<double> estimation_error;
  std::optional<double> objective;
  std::optional<bool> accepted;
  std::optional<std::uint64_t> clamped;
  std::optional<std::size_t> core_size;
  std::optional<double> trigger;
  std::optional<bool> certified;
};

struct RunSummary {
  std::uint64_t seed = 0;
  std::string learner;
  int rounds = 0;
  QueryLedger ledger;
  std::optional<double> final_regret;
  std::optional<std::size_t> core_size;
  std::optional<double> c_cov;  // C_cov(pi*) for bandits, C_cond(pi*) for MDPs
  std::optional<bool> certified;
  std::string status = "ok";
  std::string error;
  double wall_seconds = 0.0;  // manifest only, never written to CSV
};

struct SeedRun {
  std::vector<MetricsRow> rows;
  RunSummary summary;
};

AnyInstance build_instance(const InstanceSpec& spec, std::uint64_t seed);

// One seed of one experiment. Exceptions are caught and reported through summary.status.
SeedRun run_seed(const ExperimentConfig& cfg, std::uint64_t seed);

std::string metrics_csv(const std::vector<MetricsRow>& rows);
std::string summary_csv(const std::vector<RunSummary>& runs);

// Runs seeds on a pool of `jobs` workers; results keep the seed order.
std::vector<SeedRun> run_seeds(const ExperimentConfig& cfg, int jobs);

struct RunReport {
  std::string directory;
  std::vector<RunSummary> summaries;
  bool ok = true;
};

// Writes <dir>/<name>/seed_<s>.csv, summary.csv and manifest.json.
RunReport run(const ExperimentConfig& cfg, const Json& doc, const std::string& output_dir, int jobs);

struct CellAggregate {
  std::size_t cell = 0;
  std::vector<std::pair<std::string, Json>> point;
  std::size_t seeds = 0, failed_runs = 0;
  double regret_mean = 0, regret_median = 0, regret_q10 = 0, regret_q90 = 0;
  double failure_rate = 0;  // fraction of runs with final regret above the threshold
  double t_data_mean = 0, t_comp_weak_mean = 0, t_comp_strong_mean = 0, resets_mean = 0;
  std::optional<double> c_cov_mean;
};

CellAggregate aggregate(const std::vector<RunSummary>& runs, double threshold);
std::string aggregate_csv(const std::vector<CellAggregate>& cells);

// Writes <dir>/<name>/aggregate.csv and runs.csv; returns the aggregate rows.
std::vector<CellAggregate> sweep(const SweepConfig& sw, const std::string& output_dir, int jobs);

// Type-7 quantile of an unsorted sample.
double quantile(std::vector<double> v, double q);

std::string format_number(double v);

}  // namespace klx::harness
