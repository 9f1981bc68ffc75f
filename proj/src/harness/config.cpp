#include "klx/harness/config.hpp"

#include <cstdlib>
#include <fmt/format.h>
#include <fstream>
#include <map>
#include <set>

#include "klx/errors.hpp"
#include "klx/rng.hpp"

namespace klx::harness {

namespace {

enum class Kind { Int, Num, Bool, Str, IntList };

struct Field {
  Kind kind;
  bool required = false;
  Json fallback = nullptr;  // null: optional without default
};

using Schema = std::map<std::string, Field>;

const char* kind_name(Kind k) {
  switch (k) {
    case Kind::Int: return "integer";
    case Kind::Num: return "number";
    case Kind::Bool: return "boolean";
    case Kind::Str: return "string";
    case Kind::IntList: return "list of integers";
  }
  return "?";
}

bool matches(Kind k, const Json& v) {
  switch (k) {
    case Kind::Int: return v.is_number_integer();
    case Kind::Num: return v.is_number();
    case Kind::Bool: return v.is_boolean();
    case Kind::Str: return v.is_string();
    case Kind::IntList:
      if (!v.is_array()) return false;
      for (const auto& e : v)
        if (!e.is_number_integer() || e.get<long long>() < 0) return false;
      return true;
  }
  return false;
}

Json check(const Json& obj, const Schema& schema, const std::string& path) {
  if (!obj.is_object()) throw SchemaError(path, "expected an object");
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!schema.count(it.key())) throw SchemaError(path + "." + it.key(), "unknown key");
  Json out = Json::object();
  for (const auto& [key, field] : schema) {
    const std::string p = path + "." + key;
    if (obj.contains(key)) {
      if (!matches(field.kind, obj.at(key))) throw SchemaError(p, fmt::format("expected {}", kind_name(field.kind)));
      out[key] = obj.at(key);
    } else if (field.required) {
      throw SchemaError(p, "missing required key");
    } else if (!field.fallback.is_null()) {
      out[key] = field.fallback;
    }
  }
  return out;
}

const Field req_int{Kind::Int, true}, req_num{Kind::Num, true};
Field opt_int(Json v = nullptr) { return {Kind::Int, false, std::move(v)}; }
Field opt_num(Json v = nullptr) { return {Kind::Num, false, std::move(v)}; }

const std::map<std::string, Schema>& generator_schemas() {
  static const std::map<std::string, Schema> s = {
      {"random",
       {{"d", req_int}, {"prompts", req_int}, {"responses", req_int}, {"beta", req_num}, {"B", opt_num(1.0)},
        {"r_max", opt_num(1.0)}, {"ref_spread", opt_num(1.0)}, {"noise", {Kind::Str, false, "deterministic"}},
        {"instance_seed", opt_int()}}},
      {"coverage_hard",
       {{"c_star", req_num}, {"responses", req_int}, {"beta", req_num}, {"d", opt_int(2)}, {"instance_seed", opt_int()}}},
      {"dnf",
       {{"n", req_int}, {"m", req_int}, {"k", req_int}, {"beta", req_num}, {"repeat", opt_int(1)},
        {"instance_seed", opt_int()}}},
      {"token_mdp",
       {{"H", req_int}, {"A", req_int}, {"d", req_int}, {"beta", req_num}, {"B", opt_num(1.0)},
        {"realizable", {Kind::Bool, false, true}}, {"states_per_layer", opt_int(4)}, {"r_max", opt_num(1.0)},
        {"ref_spread", opt_num(1.0)}, {"noise", {Kind::Str, false, "deterministic"}}, {"instance_seed", opt_int()}}},
      {"autoregressive_gap", {{"delta", req_num}}},
      {"file", {{"path", {Kind::Str, true}}}},
  };
  return s;
}

const std::map<std::string, Schema>& learner_schemas() {
  static const std::map<std::string, Schema> s = {
      {"spanner",
       {{"t_exp", req_int}, {"t_prompt", opt_int()}, {"n_span", opt_int()}, {"prompt_scale", opt_num(0.01)},
        {"span_scale", opt_num(0.01)}, {"c_stat", opt_num(0.05)}, {"delta", opt_num(0.1)}, {"c_cov", opt_num()},
        {"reward_budget", opt_int()}}},
      {"online_dpo", {{"rounds", req_int}, {"lambda", opt_num(1.0)}}},
      {"xpo",
       {{"rounds", req_int}, {"alpha", opt_num(0.1)}, {"lambda", opt_num(1.0)}, {"step_size", opt_num(0.5)},
        {"iterations", opt_int(100)}}},
      {"mtss",
       {{"eps", opt_num(0.15)}, {"c_log", opt_num(1.0)}, {"c_cond", opt_num()}, {"t_iters", opt_int()},
        {"n_reg", opt_int()}, {"n_span", opt_int()}, {"n_span_bar", opt_int()}}},
  };
  return s;
}

std::pair<std::string, Json> tagged(const Json& obj, const std::string& path, const std::string& tag,
                                    const std::map<std::string, Schema>& schemas) {
  if (!obj.is_object()) throw SchemaError(path, "expected an object");
  if (!obj.contains(tag) || !obj.at(tag).is_string()) throw SchemaError(path + "." + tag, "missing or not a string");
  const std::string name = obj.at(tag).get<std::string>();
  const auto it = schemas.find(name);
  if (it == schemas.end()) throw SchemaError(path + "." + tag, fmt::format("unknown value '{}'", name));
  Json rest = obj;
  rest.erase(tag);
  return {name, check(rest, it->second, path)};
}

void check_positive(const Json& params, const std::string& path, std::initializer_list<const char*> keys) {
  for (const char* k : keys)
    if (params.contains(k) && !(params.at(k).get<double>() > 0.0))
      throw SchemaError(path + "." + k, "must be positive");
}

}  // namespace

std::size_t SweepConfig::cells() const {
  std::size_t n = 1;
  for (const auto& [_, values] : grid) n *= values.size();
  return n;
}

Json SweepConfig::cell(std::size_t index) const {
  Json doc = base;
  for (auto it = grid.rbegin(); it != grid.rend(); ++it) {
    const auto& [key, values] = *it;
    const Json& v = values[index % values.size()];
    index /= values.size();
    const auto dot = key.find('.');
    doc[key.substr(0, dot)][key.substr(dot + 1)] = v;
  }
  return doc;
}

InstanceSpec parse_instance(const Json& doc, const std::string& path) {
  auto [gen, gparams] = tagged(doc, path, "generator", generator_schemas());
  check_positive(gparams, path, {"beta", "B", "r_max", "c_star", "delta", "d", "prompts", "responses", "H", "A"});
  if (gparams.contains("noise")) {
    const auto n = gparams.at("noise").get<std::string>();
    if (n != "deterministic" && n != "uniform" && n != "bernoulli")
      throw SchemaError(path + ".noise", "expected deterministic, uniform or bernoulli");
  }
  return {gen, gparams};
}

ExperimentConfig parse_experiment(const Json& doc) {
  static const std::set<std::string> top = {"name", "instance", "learner", "seeds", "output", "oracle_checks", "jobs"};
  if (!doc.is_object()) throw SchemaError("$", "expected an object");
  for (auto it = doc.begin(); it != doc.end(); ++it)
    if (!top.count(it.key())) throw SchemaError("$." + it.key(), "unknown key");

  ExperimentConfig cfg;
  if (doc.contains("name")) {
    if (!doc.at("name").is_string()) throw SchemaError("$.name", "expected string");
    cfg.name = doc.at("name").get<std::string>();
    if (cfg.name.empty() || cfg.name.find_first_of("/\\") != std::string::npos)
      throw SchemaError("$.name", "must be a plain non-empty file name");
  }
  if (!doc.contains("instance")) throw SchemaError("$.instance", "missing required key");
  if (!doc.contains("learner")) throw SchemaError("$.learner", "missing required key");
  cfg.instance = parse_instance(doc.at("instance"), "$.instance");
  auto [lname, lparams] = tagged(doc.at("learner"), "$.learner", "name", learner_schemas());
  check_positive(lparams, "$.learner", {"t_exp", "rounds", "c_stat", "delta", "eps", "c_log", "step_size"});
  cfg.learner = {lname, lparams};

  if (!doc.contains("seeds")) throw SchemaError("$.seeds", "missing required key");
  if (!matches(Kind::IntList, doc.at("seeds")) || doc.at("seeds").empty())
    throw SchemaError("$.seeds", "expected a non-empty list of non-negative integers");
  for (const auto& s : doc.at("seeds")) cfg.seeds.push_back(s.get<std::uint64_t>());

  if (doc.contains("output")) {
    if (!doc.at("output").is_string()) throw SchemaError("$.output", "expected string");
    cfg.output = doc.at("output").get<std::string>();
  }
  if (doc.contains("oracle_checks")) {
    if (!doc.at("oracle_checks").is_boolean()) throw SchemaError("$.oracle_checks", "expected boolean");
    cfg.oracle_checks = doc.at("oracle_checks").get<bool>();
  }
  if (doc.contains("jobs")) {
    if (!doc.at("jobs").is_number_integer() || doc.at("jobs").get<int>() < 1)
      throw SchemaError("$.jobs", "expected a positive integer");
    cfg.jobs = doc.at("jobs").get<int>();
  }
  return cfg;
}

SweepConfig parse_sweep(const Json& doc) {
  static const std::set<std::string> top = {"base", "grid", "max_cells", "success_threshold"};
  if (!doc.is_object()) throw SchemaError("$", "expected an object");
  for (auto it = doc.begin(); it != doc.end(); ++it)
    if (!top.count(it.key())) throw SchemaError("$." + it.key(), "unknown key");
  if (!doc.contains("base")) throw SchemaError("$.base", "missing required key");
  if (!doc.contains("grid") || !doc.at("grid").is_object()) throw SchemaError("$.grid", "expected an object");

  SweepConfig sw;
  sw.base = doc.at("base");
  parse_experiment(sw.base);
  if (doc.contains("max_cells")) {
    if (!doc.at("max_cells").is_number_integer() || doc.at("max_cells").get<long long>() < 1)
      throw SchemaError("$.max_cells", "expected a positive integer");
    sw.max_cells = doc.at("max_cells").get<std::size_t>();
  }
  if (doc.contains("success_threshold")) {
    if (!doc.at("success_threshold").is_number()) throw SchemaError("$.success_threshold", "expected number");
    sw.success_threshold = doc.at("success_threshold").get<double>();
  }
  const Json& grid = doc.at("grid");
  for (auto it = grid.begin(); it != grid.end(); ++it) {
    const std::string p = "$.grid." + it.key();
    const auto dot = it.key().find('.');
    if (dot == std::string::npos) throw SchemaError(p, "expected 'instance.<key>' or 'learner.<key>'");
    const std::string section = it.key().substr(0, dot);
    if (section != "instance" && section != "learner") throw SchemaError(p, "expected 'instance.<key>' or 'learner.<key>'");
    if (!it.value().is_array() || it.value().empty()) throw SchemaError(p, "expected a non-empty list");
    sw.grid.emplace_back(it.key(), std::vector<Json>(it.value().begin(), it.value().end()));
  }
  const std::size_t n = sw.cells();
  if (n > sw.max_cells) throw ValidationError(fmt::format("sweep: grid has {} cells, limit is {}", n, sw.max_cells));
  for (std::size_t i = 0; i < n; ++i) {
    try {
      parse_experiment(sw.cell(i));
    } catch (const SchemaError& e) {
      throw SchemaError(fmt::format("$.grid[cell {}]", i), e.what());
    }
  }
  return sw;
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(fmt::format("cannot open '{}'", path));
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw SchemaError("$", fmt::format("{}: {}", path, e.what()));
  }
}

ExperimentConfig load_experiment(const std::string& path) { return parse_experiment(read_json_file(path)); }
SweepConfig load_sweep(const std::string& path) { return parse_sweep(read_json_file(path)); }

std::string canonical(const Json& doc) { return doc.dump(); }  // object keys are kept sorted

std::string config_hash(const Json& doc) { return fmt::format("{:016x}", Rng::hash_name(canonical(doc))); }

std::string default_output_dir() {
  if (const char* env = std::getenv("KLX_OUTPUT_DIR"); env && *env) return env;
  return "klx-out";
}

}  // namespace klx::harness
