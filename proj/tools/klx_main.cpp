#include <CLI11.hpp>
#include <fmt/format.h>
#include <iostream>

#include "klx/errors.hpp"
#include "klx/harness/config.hpp"
#include "klx/harness/runner.hpp"
#include "klx/harness/verify.hpp"
#include "klx/serialize.hpp"

using namespace klx;
using namespace klx::harness;

namespace {

// Exit codes: 0 success, 1 a check or run failed, 2 bad config or usage.
int do_run(const std::string& path, std::optional<std::uint64_t> seed, std::optional<int> jobs) {
  Json doc = read_json_file(path);
  if (seed) doc["seeds"] = Json::array({*seed});
  ExperimentConfig cfg = parse_experiment(doc);
  const std::string out = cfg.output.empty() ? default_output_dir() : cfg.output;
  const RunReport rep = run(cfg, doc, out, jobs.value_or(cfg.jobs));
  for (const RunSummary& s : rep.summaries) {
    std::cout << fmt::format("seed {}: {} t_data={} t_comp_weak={} t_comp_strong={} resets={}", s.seed, s.status,
                             s.ledger.t_data, s.ledger.t_comp_weak, s.ledger.t_comp_strong, s.ledger.resets);
    if (s.final_regret) std::cout << fmt::format(" regret={:.6g}", *s.final_regret);
    if (!s.error.empty()) std::cout << " error: " << s.error;
    std::cout << '\n';
  }
  std::cout << "wrote " << rep.directory << '\n';
  return rep.ok ? 0 : 1;
}

int do_sweep(const std::string& path, std::optional<std::uint64_t> seed, std::optional<int> jobs) {
  Json doc = read_json_file(path);
  if (seed && doc.contains("base") && doc["base"].is_object()) doc["base"]["seeds"] = Json::array({*seed});
  const SweepConfig sw = parse_sweep(doc);
  const ExperimentConfig base = parse_experiment(sw.base);
  const std::string out = base.output.empty() ? default_output_dir() : base.output;
  const auto cells = sweep(sw, out, jobs.value_or(base.jobs));
  std::cout << aggregate_csv(cells);
  bool ok = true;
  for (const CellAggregate& c : cells) ok = ok && c.failed_runs == 0;
  return ok ? 0 : 1;
}

int do_verify(const std::string& suite) {
  bool ok = true;
  for (const CheckResult& r : verify(suite, &std::cout)) ok = ok && r.passed;
  std::cout << (ok ? "all checks passed" : "some checks FAILED") << '\n';
  return ok ? 0 : 1;
}

int do_gen(const std::string& spec_path, const std::string& out, std::optional<std::uint64_t> seed) {
  const Json doc = read_json_file(spec_path);
  const InstanceSpec spec = parse_instance(doc.contains("instance") ? doc.at("instance") : doc);
  save_instance_file(out, build_instance(spec, seed.value_or(0)));
  std::cout << "wrote " << out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"klx: KL-regularized alignment simulators, learners and checks"};
  app.require_subcommand(1);
  app.fallthrough();
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  app.add_option("--seed", seed, "override the seed list with a single seed");
  app.add_option("--jobs", jobs, "worker threads for seeds and grid cells")->check(CLI::PositiveNumber);

  std::string config, suite = "all", spec, out;
  auto* run_cmd = app.add_subcommand("run", "run one experiment config");
  run_cmd->add_option("config", config, "experiment JSON")->required();
  auto* sweep_cmd = app.add_subcommand("sweep", "run a parameter grid and aggregate");
  sweep_cmd->add_option("config", config, "sweep JSON")->required();
  auto* verify_cmd = app.add_subcommand("verify", "run acceptance checks");
  verify_cmd->add_option("suite", suite, "all or a module name")->check(CLI::IsMember(verify_suites()));
  auto* gen_cmd = app.add_subcommand("gen-instance", "generate and save an instance");
  gen_cmd->add_option("spec", spec, "instance spec JSON")->required();
  gen_cmd->add_option("-o,--output", out, "output path")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run_cmd) return do_run(config, seed, jobs);
    if (*sweep_cmd) return do_sweep(config, seed, jobs);
    if (*verify_cmd) return do_verify(suite);
    if (*gen_cmd) return do_gen(spec, out, seed);
  } catch (const SchemaError& e) {
    std::cerr << "config error at " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}
