#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace klx::harness {

using Json = nlohmann::json;

// Generators: random, coverage_hard, dnf, token_mdp, autoregressive_gap, file.
struct InstanceSpec {
  std::string generator;
  Json params;  // validated, defaults filled in
};

// Learners: spanner, online_dpo, xpo, mtss.
struct LearnerSpec {
  std::string name;
  Json params;  // validated, defaults filled in
};

struct ExperimentConfig {
  std::string name = "run";
  InstanceSpec instance;
  LearnerSpec learner;
  std::vector<std::uint64_t> seeds;
  std::string output;  // empty: $KLX_OUTPUT_DIR, else ./klx-out
  bool oracle_checks = true;
  int jobs = 1;
};

struct SweepConfig {
  Json base;  // an experiment document
  std::vector<std::pair<std::string, std::vector<Json>>> grid;  // "instance.beta" -> values
  std::size_t max_cells = 256;
  double success_threshold = 0.25;

  std::size_t cells() const;
  Json cell(std::size_t index) const;  // base with the index-th grid point substituted
};

InstanceSpec parse_instance(const Json& doc, const std::string& path = "$");
ExperimentConfig parse_experiment(const Json& doc);
SweepConfig parse_sweep(const Json& doc);

Json read_json_file(const std::string& path);
ExperimentConfig load_experiment(const std::string& path);
SweepConfig load_sweep(const std::string& path);

// Canonical dump used for hashing and manifests.
std::string canonical(const Json& doc);
std::string config_hash(const Json& doc);

std::string default_output_dir();

}  // namespace klx::harness
