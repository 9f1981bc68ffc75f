#include "klx/serialize.hpp"

#include <charconv>
#include <fmt/format.h>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <vector>

#include "klx/errors.hpp"

namespace klx {

namespace {

void put(std::ostream& os, const char* key, double v) { os << key << ' ' << fmt::format("{:.17g}", v) << '\n'; }
void put(std::ostream& os, const char* key, long long v) { os << key << ' ' << v << '\n'; }
void put(std::ostream& os, const char* key, const std::string& v) { os << key << ' ' << v << '\n'; }

template <class M>
void put_table(std::ostream& os, const char* key, const M& t) {
  os << key << ' ' << t.rows() << ' ' << t.cols() << '\n';
  for (Eigen::Index i = 0; i < t.rows(); ++i) {
    for (Eigen::Index j = 0; j < t.cols(); ++j) os << (j ? " " : "") << fmt::format("{:.17g}", t(i, j));
    os << '\n';
  }
}

class Reader {
 public:
  explicit Reader(std::istream& is) : is_(is) {}

  std::string word() {
    std::string w;
    if (!(is_ >> w)) throw ValidationError("instance file: unexpected end of input");
    return w;
  }
  void expect(const std::string& key) {
    const std::string w = word();
    if (w != key) throw ValidationError("instance file: expected '" + key + "', found '" + w + "'");
  }
  double number() {
    const std::string w = word();
    double v = 0.0;
    auto [p, ec] = std::from_chars(w.data(), w.data() + w.size(), v);
    if (ec != std::errc() || p != w.data() + w.size()) throw ValidationError("instance file: bad number '" + w + "'");
    return v;
  }
  long long integer() {
    const std::string w = word();
    long long v = 0;
    auto [p, ec] = std::from_chars(w.data(), w.data() + w.size(), v);
    if (ec != std::errc() || p != w.data() + w.size()) throw ValidationError("instance file: bad integer '" + w + "'");
    return v;
  }
  double number(const std::string& key) { return expect(key), number(); }
  long long integer(const std::string& key) { return expect(key), integer(); }
  std::string word(const std::string& key) { return expect(key), word(); }
  RowMat table(const std::string& key) {
    expect(key);
    const long long r = integer(), c = integer();
    if (r < 0 || c < 0 || r * c > (1LL << 30)) throw ValidationError("instance file: bad table size");
    RowMat t(r, c);
    for (long long i = 0; i < r; ++i)
      for (long long j = 0; j < c; ++j) t(i, j) = number();
    return t;
  }
  Vec vector(const std::string& key) {
    RowMat t = table(key);
    if (t.rows() != 1 && t.rows() != 0) throw ValidationError("instance file: '" + key + "' is not a vector");
    return t.rows() == 0 ? Vec() : Vec(t.row(0).transpose());
  }

 private:
  std::istream& is_;
};

void header(std::ostream& os, const char* kind) {
  os << "klx-instance " << kInstanceFormatVersion << '\n';
  put(os, "kind", std::string(kind));
}

}  // namespace

void save_instance(std::ostream& os, const AlignmentInstance& inst) {
  header(os, "alignment");
  put(os, "num_prompts", static_cast<long long>(inst.num_prompts));
  put(os, "num_responses", static_cast<long long>(inst.num_responses));
  put(os, "dim", static_cast<long long>(inst.dim));
  put(os, "beta", inst.beta);
  put(os, "r_max", inst.r_max);
  put(os, "param_radius", inst.param_radius);
  put(os, "geometry", std::string(to_string(inst.geometry)));
  put(os, "reward_lo", inst.reward_lo);
  put(os, "reward_hi", inst.reward_hi);
  put(os, "noise", std::string(to_string(inst.noise)));
  put_table(os, "rho", inst.prompt_dist.transpose());
  put_table(os, "pi_ref", inst.pi_ref);
  put_table(os, "features", inst.features);
  put_table(os, "theta_star", inst.theta_star.transpose());
  put_table(os, "reward_mean", inst.reward_mean);
  os << "end\n";
}

void save_instance(std::ostream& os, const TokenMdp& m) {
  header(os, "token_mdp");
  put(os, "horizon", static_cast<long long>(m.horizon));
  put(os, "num_actions", static_cast<long long>(m.num_actions));
  put(os, "dim", static_cast<long long>(m.dim));
  put(os, "beta", m.beta);
  put(os, "r_max", m.r_max);
  put(os, "param_radius", m.param_radius);
  put(os, "anchor", static_cast<long long>(m.anchor));
  put(os, "noise", std::string(to_string(m.noise)));
  put(os, "realizable", static_cast<long long>(m.realizable));
  put(os, "has_theta_star", static_cast<long long>(!m.theta_star.empty()));
  put_table(os, "initial", m.initial.transpose());
  for (int h = 0; h < m.horizon; ++h) {
    put(os, "layer", static_cast<long long>(h));
    put(os, "num_states", static_cast<long long>(m.num_states[h]));
    put_table(os, "pi_ref", m.pi_ref[h]);
    put_table(os, "features", m.features[h]);
    put_table(os, "reward_mean", m.reward_mean[h]);
    if (h + 1 < m.horizon) put_table(os, "transitions", m.transitions[h]);
    if (!m.theta_star.empty()) put_table(os, "theta_star", m.theta_star[h].transpose());
  }
  os << "end\n";
}

AnyInstance load_instance(std::istream& is) {
  Reader r(is);
  const long long version = r.integer("klx-instance");
  if (version != kInstanceFormatVersion)
    throw ValidationError(fmt::format("instance file: unsupported version {}", version));
  const std::string kind = r.word("kind");
  if (kind == "alignment") {
    AlignmentInstance inst;
    inst.num_prompts = static_cast<int>(r.integer("num_prompts"));
    inst.num_responses = static_cast<int>(r.integer("num_responses"));
    inst.dim = static_cast<int>(r.integer("dim"));
    inst.beta = r.number("beta");
    inst.r_max = r.number("r_max");
    inst.param_radius = r.number("param_radius");
    inst.geometry = geometry_from_string(r.word("geometry"));
    inst.reward_lo = r.number("reward_lo");
    inst.reward_hi = r.number("reward_hi");
    inst.noise = noise_from_string(r.word("noise"));
    inst.prompt_dist = r.vector("rho");
    inst.pi_ref = r.table("pi_ref");
    inst.features = r.table("features");
    inst.theta_star = r.vector("theta_star");
    inst.reward_mean = r.table("reward_mean");
    r.expect("end");
    inst.validate();
    return inst;
  }
  if (kind == "token_mdp") {
    TokenMdp m;
    m.horizon = static_cast<int>(r.integer("horizon"));
    m.num_actions = static_cast<int>(r.integer("num_actions"));
    m.dim = static_cast<int>(r.integer("dim"));
    m.beta = r.number("beta");
    m.r_max = r.number("r_max");
    m.param_radius = r.number("param_radius");
    m.anchor = static_cast<int>(r.integer("anchor"));
    m.noise = noise_from_string(r.word("noise"));
    m.realizable = r.integer("realizable") != 0;
    const bool has_theta = r.integer("has_theta_star") != 0;
    m.initial = r.vector("initial");
    if (m.horizon < 1 || m.horizon > 1000) throw ValidationError("instance file: bad horizon");
    for (int h = 0; h < m.horizon; ++h) {
      if (r.integer("layer") != h) throw ValidationError("instance file: layers out of order");
      m.num_states.push_back(static_cast<int>(r.integer("num_states")));
      m.pi_ref.push_back(r.table("pi_ref"));
      m.features.push_back(r.table("features"));
      m.reward_mean.push_back(r.table("reward_mean"));
      if (h + 1 < m.horizon) m.transitions.push_back(r.table("transitions"));
      if (has_theta) m.theta_star.push_back(r.vector("theta_star"));
    }
    r.expect("end");
    m.validate();
    return m;
  }
  throw ValidationError("instance file: unknown kind '" + kind + "'");
}

void save_instance_file(const std::string& path, const AnyInstance& inst) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ValidationError("cannot open '" + path + "' for writing");
  std::visit([&](const auto& i) { save_instance(os, i); }, inst);
}

AnyInstance load_instance_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot open '" + path + "'");
  return load_instance(is);
}

}  // namespace klx
