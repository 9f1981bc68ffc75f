#include "klx/harness/runner.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <atomic>
#include <chrono>
#include <filesystem>
#include <fmt/format.h>
#include <fstream>
#include <thread>

#include "klx/baselines.hpp"
#include "klx/dnf.hpp"
#include "klx/errors.hpp"
#include "klx/generators.hpp"
#include "klx/mtss.hpp"
#include "klx/spanner.hpp"

namespace klx::harness {

namespace fs = std::filesystem;

namespace {

double num(const Json& p, const char* k) { return p.at(k).get<double>(); }
int integer(const Json& p, const char* k) { return p.at(k).get<int>(); }

std::uint64_t instance_seed(const Json& p, std::uint64_t run_seed) {
  return p.contains("instance_seed") ? p.at("instance_seed").get<std::uint64_t>() : run_seed;
}

const AlignmentInstance& as_bandit(const AnyInstance& any, AlignmentInstance& scratch, const std::string& learner) {
  if (const auto* a = std::get_if<AlignmentInstance>(&any)) return *a;
  const TokenMdp& m = std::get<TokenMdp>(any);
  if (m.horizon != 1) throw ValidationError(learner + " needs a bandit instance or a horizon-one MDP");
  scratch = bandit_from_mdp(m);
  return scratch;
}

double c_cov_star(const AlignmentInstance& inst) {
  return coverage_coefficients(inst, exact_optimal(inst).policy).c_cov;
}

void write_file(const fs::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError(fmt::format("cannot write '{}'", path.string()));
  out << body;
}

template <class T>
std::string opt(const std::optional<T>& v) {
  if (!v) return "";
  if constexpr (std::is_same_v<T, double>) return format_number(*v);
  else if constexpr (std::is_same_v<T, bool>) return *v ? "1" : "0";
  else return std::to_string(*v);
}

void run_spanner(const AlignmentInstance& inst, const Json& p, const ExperimentConfig& cfg, std::uint64_t seed,
                 SeedRun& out) {
  QueryLedger ledger;
  AlignmentOracle oracle(inst, ledger, Rng(seed, "oracle"), OracleMode::Weak);
  Rng rng(seed, "learner");
  const double c_cov = p.contains("c_cov") ? num(p, "c_cov") : c_cov_star(inst);
  const int t_exp = integer(p, "t_exp");
  auto [tp, ns] = proof_ratio_schedule(t_exp, inst.beta, inst.r_max, c_cov, num(p, "prompt_scale"), num(p, "span_scale"));
  if (p.contains("t_prompt")) tp = integer(p, "t_prompt");
  if (p.contains("n_span")) ns = integer(p, "n_span");
  SpannerParams params = SpannerParams::derive(inst.dim, inst.r_max, inst.param_radius, inst.beta, tp, ns, t_exp,
                                               num(p, "c_stat"), c_cov, num(p, "delta"));

  Rng span_rng = rng.split("spanner-phase"), exp_rng = rng.split("exploration-phase");
  SpannerState state = run_spanner_phase(oracle, params, span_rng);
  if (p.contains("reward_budget")) {
    const long long left = integer(p, "reward_budget") / 2 - static_cast<long long>(state.core_set.size());
    if (left < 1) throw BudgetError("spanner: the spanner phase used the whole reward budget");
    params.t_exp = static_cast<int>(left);
    params.delta_rej = 1.0 / params.t_exp;
  }
  const AlignmentInstance* exact = cfg.oracle_checks ? &inst : nullptr;
  std::vector<SpannerRound> rounds;
  PolicyMixture mix = run_exploration_phase(oracle, state, params, exp_rng, &rounds, exact);

  std::vector<double> regrets;
  if (exact) regrets = SnapshotEvaluator(inst, *state.design, params.nu, mix.sampler).regrets_parallel(mix.snapshots);
  for (std::size_t i = 0; i < rounds.size(); ++i) {
    MetricsRow r;
    r.seed = seed;
    r.round = rounds[i].round;
    r.ledger = rounds[i].ledger;
    r.estimation_error = rounds[i].estimation_error;
    r.accepted = rounds[i].accepted;
    r.clamped = rounds[i].clamped;
    r.core_size = state.core_set.size();
    if (exact) r.exact_regret = regrets[i];
    out.rows.push_back(r);
  }
  out.summary.rounds = params.t_exp;
  out.summary.ledger = ledger;
  out.summary.core_size = state.core_set.size();
  if (exact) {
    KahanSum s;
    for (double v : regrets) s.add(v);
    out.summary.final_regret = s.value() / static_cast<double>(regrets.size());
    out.summary.c_cov = c_cov_star(inst);
  }
}

void run_baseline(const AlignmentInstance& inst, const std::string& name, const Json& p, const ExperimentConfig& cfg,
                  std::uint64_t seed, SeedRun& out) {
  QueryLedger ledger;
  AlignmentOracle oracle(inst, ledger, Rng(seed, "oracle"), OracleMode::Strong);
  Rng rng(seed, "learner");
  const AlignmentInstance* exact = cfg.oracle_checks ? &inst : nullptr;
  BaselineResult res;
  if (name == "online_dpo") {
    res = online_dpo(oracle, integer(p, "rounds"), num(p, "lambda"), rng, exact);
  } else {
    GdConfig gd;
    gd.alpha = num(p, "alpha");
    gd.lambda = num(p, "lambda");
    gd.step_size = num(p, "step_size");
    gd.iterations = integer(p, "iterations");
    res = xpo(oracle, integer(p, "rounds"), gd, exact_partition(inst), rng, exact);
  }
  for (const BaselineRound& b : res.rounds) {
    MetricsRow r;
    r.seed = seed;
    r.round = b.round;
    r.ledger = b.ledger;
    r.exact_regret = b.exact_regret;
    r.objective = b.objective;
    out.rows.push_back(r);
  }
  out.summary.rounds = static_cast<int>(res.rounds.size());
  out.summary.ledger = ledger;
  if (exact) {
    out.summary.final_regret = linear_policy_regret(inst, res.final_theta);
    out.summary.c_cov = c_cov_star(inst);
  }
}

void run_mtss(const TokenMdp& mdp, const Json& p, const ExperimentConfig& cfg, std::uint64_t seed, SeedRun& out) {
  QueryLedger ledger;
  MdpEnv env(mdp, ledger, Rng(seed, "oracle"));
  const double c_cond = p.contains("c_cond") ? num(p, "c_cond") : exact_c_cond(mdp);
  MtssParams params = MtssParams::desk(mdp.dim, mdp.horizon, mdp.param_radius, num(p, "eps"), num(p, "c_log"), c_cond);
  if (p.contains("t_iters")) params.t_iters = integer(p, "t_iters");
  if (p.contains("n_reg")) params.n_reg = integer(p, "n_reg");
  if (p.contains("n_span")) params.n_span = integer(p, "n_span");
  if (p.contains("n_span_bar")) params.n_span_bar = integer(p, "n_span_bar");
  const MtssResult res = mtss(env, params, Rng(seed, "learner"), cfg.oracle_checks);
  for (const MtssIteration& it : res.iterations) {
    MetricsRow r;
    r.seed = seed;
    r.round = it.round;
    r.ledger = it.ledger;
    r.exact_regret = it.exact_regret;
    if (!it.estimation_error.empty())
      r.estimation_error = *std::max_element(it.estimation_error.begin(), it.estimation_error.end());
    r.core_size = it.core_sizes.front();
    r.trigger = it.trigger;
    r.certified = it.certified;
    out.rows.push_back(r);
  }
  out.summary.rounds = params.t_iters;
  out.summary.ledger = res.ledger;
  out.summary.certified = res.certified;
  out.summary.core_size = res.state.core_sets.back().size();
  out.summary.final_regret = res.exact_regret;
  if (cfg.oracle_checks) out.summary.c_cov = exact_c_cond(mdp);
}

}  // namespace

std::string format_number(double v) { return fmt::format("{:.17g}", v); }

AnyInstance build_instance(const InstanceSpec& spec, std::uint64_t seed) {
  const Json& p = spec.params;
  const std::string& g = spec.generator;
  if (g == "file") return load_instance_file(p.at("path").get<std::string>());
  if (g == "autoregressive_gap") return gen_autoregressive_gap_instance(num(p, "delta"));
  const std::uint64_t s = instance_seed(p, seed);
  if (g == "random") {
    RandomInstanceOptions o{num(p, "r_max"), num(p, "ref_spread"), noise_from_string(p.at("noise").get<std::string>())};
    return gen_random_instance(integer(p, "d"), integer(p, "prompts"), integer(p, "responses"), num(p, "beta"),
                               num(p, "B"), s, o);
  }
  if (g == "coverage_hard")
    return gen_coverage_hard_instance(num(p, "c_star"), integer(p, "responses"), num(p, "beta"), integer(p, "d"), s);
  if (g == "dnf") {
    Rng rng(s, "dnf");
    const DnfFormula phi = random_dnf(integer(p, "n"), integer(p, "m"), integer(p, "k"), rng);
    return gen_dnf_instance(serial_repetition(phi, integer(p, "repeat")), num(p, "beta"));
  }
  if (g == "token_mdp") {
    TokenMdpOptions o;
    o.states_per_layer = integer(p, "states_per_layer");
    o.r_max = num(p, "r_max");
    o.ref_spread = num(p, "ref_spread");
    o.noise = noise_from_string(p.at("noise").get<std::string>());
    return gen_token_mdp(integer(p, "H"), integer(p, "A"), integer(p, "d"), num(p, "beta"), num(p, "B"), s,
                         p.at("realizable").get<bool>(), o);
  }
  throw ValidationError("unknown generator " + g);
}

SeedRun run_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  SeedRun out;
  out.summary.seed = seed;
  out.summary.learner = cfg.learner.name;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    const AnyInstance any = build_instance(cfg.instance, seed);
    const std::string& name = cfg.learner.name;
    AlignmentInstance scratch;
    if (name == "spanner") {
      run_spanner(as_bandit(any, scratch, name), cfg.learner.params, cfg, seed, out);
    } else if (name == "online_dpo" || name == "xpo") {
      run_baseline(as_bandit(any, scratch, name), name, cfg.learner.params, cfg, seed, out);
    } else if (name == "mtss") {
      const auto* mdp = std::get_if<TokenMdp>(&any);
      if (!mdp) throw ValidationError("mtss needs a token_mdp instance");
      run_mtss(*mdp, cfg.learner.params, cfg, seed, out);
    } else {
      throw ValidationError("unknown learner " + name);
    }
  } catch (const std::exception& e) {
    out.summary.status = "failed";
    out.summary.error = e.what();
  }
  out.summary.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string s =
      "seed,round,t_data,t_comp_weak,t_comp_strong,t_prompt,resets,exact_regret,estimation_error,objective,"
      "accepted,clamped,core_size,trigger,certified\n";
  for (const MetricsRow& r : rows)
    s += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", r.seed, r.round, r.ledger.t_data,
                     r.ledger.t_comp_weak, r.ledger.t_comp_strong, r.ledger.t_prompt, r.ledger.resets,
                     opt(r.exact_regret), opt(r.estimation_error), opt(r.objective), opt(r.accepted), opt(r.clamped),
                     opt(r.core_size), opt(r.trigger), opt(r.certified));
  return s;
}

std::string summary_csv(const std::vector<RunSummary>& runs) {
  std::string s =
      "seed,learner,rounds,t_data,t_comp_weak,t_comp_strong,t_prompt,resets,final_regret,core_size,c_cov,certified,"
      "status\n";
  for (const RunSummary& r : runs)
    s += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{}\n", r.seed, r.learner, r.rounds, r.ledger.t_data,
                     r.ledger.t_comp_weak, r.ledger.t_comp_strong, r.ledger.t_prompt, r.ledger.resets,
                     opt(r.final_regret), opt(r.core_size), opt(r.c_cov), opt(r.certified), r.status);
  return s;
}

std::vector<SeedRun> run_seeds(const ExperimentConfig& cfg, int jobs) {
  std::vector<SeedRun> runs(cfg.seeds.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next++) < runs.size();) runs[i] = run_seed(cfg, cfg.seeds[i]);
  };
  const int n = std::max(1, std::min<int>(jobs, static_cast<int>(runs.size())));
  std::vector<std::thread> pool;
  for (int i = 1; i < n; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return runs;
}

RunReport run(const ExperimentConfig& cfg, const Json& doc, const std::string& output_dir, int jobs) {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path dir = fs::path(output_dir) / cfg.name;
  fs::create_directories(dir);
  std::vector<SeedRun> runs = run_seeds(cfg, jobs);

  RunReport rep;
  rep.directory = dir.string();
  Json seeds = Json::array();
  for (SeedRun& r : runs) {
    write_file(dir / fmt::format("seed_{}.csv", r.summary.seed), metrics_csv(r.rows));
    rep.ok = rep.ok && r.summary.status == "ok";
    seeds.push_back({{"seed", r.summary.seed},
                     {"status", r.summary.status},
                     {"error", r.summary.error},
                     {"wall_seconds", r.summary.wall_seconds}});
    rep.summaries.push_back(r.summary);
  }
  write_file(dir / "summary.csv", summary_csv(rep.summaries));
  Json manifest = {{"name", cfg.name},
                   {"config", doc},
                   {"config_hash", config_hash(doc)},
                   {"versions",
                    {{"klx", kVersion},
                     {"eigen", fmt::format("{}.{}.{}", EIGEN_WORLD_VERSION, EIGEN_MAJOR_VERSION, EIGEN_MINOR_VERSION)},
                     {"compiler", __VERSION__}}},
                   {"jobs", jobs},
                   {"partial", !rep.ok},
                   {"seeds", seeds},
                   {"wall_seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()}};
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
  return rep;
}

double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw ValidationError("quantile of an empty sample");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

CellAggregate aggregate(const std::vector<RunSummary>& runs, double threshold) {
  CellAggregate a;
  a.seeds = runs.size();
  std::vector<double> regrets, cov;
  for (const RunSummary& r : runs) {
    if (r.status != "ok") {
      ++a.failed_runs;
      continue;
    }
    a.t_data_mean += r.ledger.t_data;
    a.t_comp_weak_mean += r.ledger.t_comp_weak;
    a.t_comp_strong_mean += r.ledger.t_comp_strong;
    a.resets_mean += r.ledger.resets;
    if (r.final_regret) regrets.push_back(*r.final_regret);
    if (r.c_cov) cov.push_back(*r.c_cov);
  }
  const double ok = static_cast<double>(a.seeds - a.failed_runs);
  if (ok > 0) {
    a.t_data_mean /= ok, a.t_comp_weak_mean /= ok, a.t_comp_strong_mean /= ok, a.resets_mean /= ok;
  }
  if (!regrets.empty()) {
    double s = 0.0;
    std::size_t bad = 0;
    for (double r : regrets) s += r, bad += r > threshold;
    a.regret_mean = s / regrets.size();
    a.regret_median = quantile(regrets, 0.5);
    a.regret_q10 = quantile(regrets, 0.1);
    a.regret_q90 = quantile(regrets, 0.9);
    a.failure_rate = static_cast<double>(bad) / regrets.size();
  }
  if (!cov.empty()) {
    double s = 0.0;
    for (double c : cov) s += c;
    a.c_cov_mean = s / cov.size();
  }
  return a;
}

std::string aggregate_csv(const std::vector<CellAggregate>& cells) {
  std::string s = "cell";
  if (!cells.empty())
    for (const auto& [key, _] : cells.front().point) s += "," + key;
  s += ",seeds,failed_runs,regret_mean,regret_median,regret_q10,regret_q90,failure_rate,t_data_mean,"
       "t_comp_weak_mean,t_comp_strong_mean,resets_mean,c_cov\n";
  for (const CellAggregate& c : cells) {
    s += std::to_string(c.cell);
    for (const auto& [_, v] : c.point) s += "," + (v.is_number() ? format_number(v.get<double>()) : v.dump());
    s += fmt::format(",{},{},{},{},{},{},{},{},{},{},{},{}\n", c.seeds, c.failed_runs, format_number(c.regret_mean),
                     format_number(c.regret_median), format_number(c.regret_q10), format_number(c.regret_q90),
                     format_number(c.failure_rate), format_number(c.t_data_mean), format_number(c.t_comp_weak_mean),
                     format_number(c.t_comp_strong_mean), format_number(c.resets_mean), opt(c.c_cov_mean));
  }
  return s;
}

std::vector<CellAggregate> sweep(const SweepConfig& sw, const std::string& output_dir, int jobs) {
  const ExperimentConfig base = parse_experiment(sw.base);
  const fs::path dir = fs::path(output_dir) / base.name;
  fs::create_directories(dir);
  std::vector<CellAggregate> cells;
  std::string runs_csv = "cell," + summary_csv({});
  for (std::size_t i = 0; i < sw.cells(); ++i) {
    const Json doc = sw.cell(i);
    const ExperimentConfig cfg = parse_experiment(doc);
    std::vector<RunSummary> summaries;
    for (SeedRun& r : run_seeds(cfg, jobs)) summaries.push_back(r.summary);
    CellAggregate a = aggregate(summaries, sw.success_threshold);
    a.cell = i;
    for (const auto& [key, _] : sw.grid) {
      const auto dot = key.find('.');
      a.point.emplace_back(key, doc.at(key.substr(0, dot)).at(key.substr(dot + 1)));
    }
    cells.push_back(std::move(a));
    const std::string body = summary_csv(summaries);
    for (std::size_t pos = body.find('\n') + 1; pos < body.size();) {
      const std::size_t end = body.find('\n', pos);
      runs_csv += std::to_string(i) + "," + body.substr(pos, end - pos + 1);
      pos = end + 1;
    }
  }
  write_file(dir / "aggregate.csv", aggregate_csv(cells));
  write_file(dir / "runs.csv", runs_csv);
  return cells;
}

}  // namespace klx::harness
