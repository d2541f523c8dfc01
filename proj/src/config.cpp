#include "hamflow/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <toml.hpp>

#include "hamflow/random.hpp"

namespace hamflow {

namespace {

std::string join(const std::string &prefix, const std::string &key) { return prefix.empty() ? key : prefix + "." + key; }

void check_keys(const toml::table &t, const std::set<std::string> &allowed, const std::string &prefix)
{
  for (const auto &[k, v] : t) {
    const std::string key(k.str());
    if (!allowed.count(key)) {
      throw ParseError("unknown key '" + join(prefix, key) + "'");
    }
  }
}

std::optional<double> real(const toml::table &t, const std::string &key, const std::string &prefix)
{
  const toml::node *n = t.get(key);
  if (!n) {
    return std::nullopt;
  }
  if (auto i = n->value_exact<int64_t>()) {
    return double(*i);
  }
  if (auto d = n->value_exact<double>()) {
    return *d;
  }
  throw ParseError("'" + join(prefix, key) + "' must be a number");
}

std::optional<int64_t> integer(const toml::table &t, const std::string &key, const std::string &prefix)
{
  const toml::node *n = t.get(key);
  if (!n) {
    return std::nullopt;
  }
  if (auto i = n->value_exact<int64_t>()) {
    return *i;
  }
  throw ParseError("'" + join(prefix, key) + "' must be an integer");
}

std::optional<std::string> string(const toml::table &t, const std::string &key, const std::string &prefix)
{
  const toml::node *n = t.get(key);
  if (!n) {
    return std::nullopt;
  }
  if (auto s = n->value_exact<std::string>()) {
    return *s;
  }
  throw ParseError("'" + join(prefix, key) + "' must be a string");
}

std::optional<bool> boolean(const toml::table &t, const std::string &key, const std::string &prefix)
{
  const toml::node *n = t.get(key);
  if (!n) {
    return std::nullopt;
  }
  if (auto b = n->value_exact<bool>()) {
    return *b;
  }
  throw ParseError("'" + join(prefix, key) + "' must be true or false");
}

std::vector<double> number_list(const toml::node &n, const std::string &name)
{
  const toml::array *arr = n.as_array();
  if (!arr) {
    throw ParseError("'" + name + "' must be an array of numbers");
  }
  std::vector<double> out;
  for (const auto &e : *arr) {
    if (auto i = e.value_exact<int64_t>()) {
      out.push_back(double(*i));
    } else if (auto d = e.value_exact<double>()) {
      out.push_back(*d);
    } else {
      throw ParseError("'" + name + "' must be an array of numbers");
    }
  }
  return out;
}

std::optional<std::vector<double>> list(const toml::table &t, const std::string &key, const std::string &prefix)
{
  const toml::node *n = t.get(key);
  if (!n) {
    return std::nullopt;
  }
  return number_list(*n, join(prefix, key));
}

// Array of equal-length rows, returned with one row per column (D x n).
std::optional<Matrix<double>> rows(const toml::table &t, const std::string &key, const std::string &prefix)
{
  const toml::node *n = t.get(key);
  if (!n) {
    return std::nullopt;
  }
  const std::string name = join(prefix, key);
  const toml::array *arr = n->as_array();
  if (!arr || arr->empty()) {
    throw ParseError("'" + name + "' must be a non-empty array of rows");
  }
  std::vector<std::vector<double>> r;
  for (const auto &e : *arr) {
    r.push_back(number_list(e, name));
    if (r.back().empty() || r.back().size() != r.front().size()) {
      throw ParseError("'" + name + "' rows must be non-empty and of equal length");
    }
  }
  Matrix<double> m(Index(r.front().size()), Index(r.size()));
  for (std::size_t j = 0; j < r.size(); ++j) {
    for (std::size_t i = 0; i < r[j].size(); ++i) {
      m(Index(i), Index(j)) = r[j][i];
    }
  }
  return m;
}

const toml::table *subtable(const toml::table &t, const std::string &key, const std::string &prefix)
{
  const toml::node *n = t.get(key);
  if (!n) {
    return nullptr;
  }
  if (!n->is_table()) {
    throw ParseError("'" + join(prefix, key) + "' must be a table");
  }
  return n->as_table();
}

MeasureSpec parse_measure(const toml::table &t, const std::string &prefix, const std::filesystem::path &base)
{
  check_keys(t, {"points", "weights", "csv", "random", "dim", "scale", "equal_weights"}, prefix);
  MeasureSpec m;
  m.points = rows(t, "points", prefix);
  if (auto w = list(t, "weights", prefix)) {
    m.weights = Eigen::Map<Vector<double>>(w->data(), Index(w->size()));
  }
  if (auto c = string(t, "csv", prefix)) {
    std::filesystem::path p(*c);
    m.csv = p.is_relative() ? base / p : p;
  }
  m.random = Index(integer(t, "random", prefix).value_or(0));
  m.dim = Index(integer(t, "dim", prefix).value_or(2));
  m.scale = real(t, "scale", prefix).value_or(1.0);
  m.equal_weights = boolean(t, "equal_weights", prefix).value_or(false);

  const int sources = int(m.points.has_value()) + int(m.csv.has_value()) + int(m.random > 0);
  if (sources != 1) {
    throw ParseError("'" + prefix + "' needs exactly one of points, csv, random");
  }
  if (m.random < 0 || (t.get("random") && m.random == 0)) {
    throw ParseError("'" + join(prefix, "random") + "' must be positive");
  }
  if (m.dim < 1) {
    throw ParseError("'" + join(prefix, "dim") + "' must be at least 1");
  }
  if (m.weights && !m.points) {
    throw ParseError("'" + join(prefix, "weights") + "' requires inline points");
  }
  if (m.weights && m.weights->size() != m.points->cols()) {
    throw ParseError("'" + join(prefix, "weights") + "' has " + std::to_string(m.weights->size()) + " entries for " +
                     std::to_string(m.points->cols()) + " points");
  }
  if (!(m.scale > 0)) {
    throw ParseError("'" + join(prefix, "scale") + "' must be positive");
  }
  return m;
}

std::optional<double> potential_modulus(const std::string &name)
{
  if (name == "quadratic") {
    return 1.0;
  }
  if (name == "linear" || name == "zero") {
    return 0.0;
  }
  return std::nullopt;
}

void guard_tau(const ExperimentConfig &cfg, double tau, const std::string &key)
{
  if (!(tau > 0) || !std::isfinite(tau)) {
    throw ParseError("'" + key + "' must be positive, got " + format_number(tau));
  }
  if (auto lambda = cfg.hamiltonian.convexity_modulus(); lambda && *lambda < 0 && *lambda * tau <= -1) {
    throw ParseError("'" + key + "' = " + format_number(tau) + " violates lambda*tau > -1 (lambda = " +
                     format_number(*lambda) + ")");
  }
}

} // namespace

std::optional<double> HamiltonianSpec::convexity_modulus() const
{
  if (kind == "zero" || kind == "interaction") {
    return 0.0;
  }
  const std::optional<double> lv = lambda_V ? lambda_V : potential_modulus(potential);
  if (kind == "potential") {
    return lv;
  }
  if (lv) {
    return *lv - a;
  }
  return std::nullopt;
}

ExperimentConfig parse_config(const std::string &text, const std::filesystem::path &base_dir, const std::string &source)
{
  toml::table root;
  try {
    root = toml::parse(text, source);
  } catch (const toml::parse_error &e) {
    std::ostringstream msg;
    msg << source << ":" << e.source().begin.line << ":" << e.source().begin.column << ": " << e.description();
    throw ParseError(msg.str());
  }
  check_keys(root, {"seed", "out", "measure", "hamiltonian", "flow", "prox", "study"}, "");

  ExperimentConfig cfg;
  if (auto s = integer(root, "seed", "")) {
    if (*s < 0) {
      throw ParseError("'seed' must be nonnegative");
    }
    cfg.seed = std::uint64_t(*s);
  }
  if (auto o = string(root, "out", "")) {
    std::filesystem::path p(*o);
    cfg.out = p.is_relative() ? base_dir / p : p;
  }
  if (const auto *m = subtable(root, "measure", "")) {
    cfg.measure = parse_measure(*m, "measure", base_dir);
  }

  if (const auto *h = subtable(root, "hamiltonian", "")) {
    const std::string p = "hamiltonian";
    check_keys(*h, {"kind", "a", "lambda_V", "potential", "potential_center", "interaction", "reference"}, p);
    auto &hs = cfg.hamiltonian;
    hs.kind = string(*h, "kind", p).value_or("zero");
    if (hs.kind != "zero" && hs.kind != "potential" && hs.kind != "interaction" && hs.kind != "example") {
      throw ParseError("'hamiltonian.kind' must be zero, potential, interaction or example, got '" + hs.kind + "'");
    }
    hs.a = real(*h, "a", p).value_or(0.0);
    if (!(hs.a >= 0)) {
      throw ParseError("'hamiltonian.a' must be nonnegative");
    }
    hs.lambda_V = real(*h, "lambda_V", p);
    hs.potential = string(*h, "potential", p).value_or("quadratic");
    if (hs.potential != "quadratic" && hs.potential != "double_well" && hs.potential != "linear" && hs.potential != "zero") {
      throw ParseError("'hamiltonian.potential' must be quadratic, double_well, linear or zero, got '" + hs.potential + "'");
    }
    if (auto c = list(*h, "potential_center", p)) {
      hs.potential_center = Eigen::Map<Vector<double>>(c->data(), Index(c->size()));
    }
    hs.interaction = string(*h, "interaction", p).value_or(hs.kind == "interaction" ? "quadratic" : "zero");
    if (hs.interaction != "quadratic" && hs.interaction != "zero") {
      throw ParseError("'hamiltonian.interaction' must be quadratic or zero, got '" + hs.interaction + "'");
    }
    if (const auto *r = subtable(*h, "reference", p)) {
      hs.reference = parse_measure(*r, "hamiltonian.reference", base_dir);
    }
    if (hs.kind == "example" && !hs.reference) {
      throw ParseError("'hamiltonian.reference' is required for kind = example");
    }
  }

  if (const auto *f = subtable(root, "flow", "")) {
    const std::string p = "flow";
    check_keys(*f, {"tau", "T", "N", "snapshots", "structure", "C_o", "k_hat"}, p);
    auto &fs = cfg.flow;
    fs.tau = real(*f, "tau", p).value_or(fs.tau);
    fs.T = real(*f, "T", p).value_or(fs.T);
    fs.N = Index(integer(*f, "N", p).value_or(fs.N));
    fs.snapshots = list(*f, "snapshots", p).value_or(std::vector<double>{});
    if (const toml::node *s = f->get("structure")) {
      if (auto name = s->value_exact<std::string>()) {
        if (*name != "canonical") {
          throw ParseError("'flow.structure' must be \"canonical\" or a matrix");
        }
      } else {
        fs.structure = rows(*f, "structure", p);
      }
    }
    fs.C_o = real(*f, "C_o", p);
    fs.k_hat = real(*f, "k_hat", p);
  }
  if (!(cfg.flow.T > 0) || !std::isfinite(cfg.flow.T)) {
    throw ParseError("'flow.T' must be positive");
  }
  if (cfg.flow.N < 1) {
    throw ParseError("'flow.N' must be at least 1");
  }
  for (double t : cfg.flow.snapshots) {
    if (!(t >= 0 && t <= cfg.flow.T)) {
      throw ParseError("'flow.snapshots' entry " + format_number(t) + " outside [0, T]");
    }
  }
  if (cfg.flow.C_o && !(*cfg.flow.C_o > 0)) {
    throw ParseError("'flow.C_o' must be positive");
  }
  if (cfg.flow.k_hat && !(*cfg.flow.k_hat >= 0)) {
    throw ParseError("'flow.k_hat' must be nonnegative");
  }
  guard_tau(cfg, cfg.flow.tau, "flow.tau");

  if (const auto *x = subtable(root, "prox", "")) {
    const std::string p = "prox";
    check_keys(*x, {"tol", "grad_tol", "max_iter", "restarts"}, p);
    cfg.prox.tol = real(*x, "tol", p).value_or(cfg.prox.tol);
    cfg.prox.grad_tol = real(*x, "grad_tol", p).value_or(cfg.prox.grad_tol);
    cfg.prox.max_iter = Index(integer(*x, "max_iter", p).value_or(cfg.prox.max_iter));
    if (!(cfg.prox.tol >= 0) || !(cfg.prox.grad_tol >= 0)) {
      throw ParseError("'prox.tol' and 'prox.grad_tol' must be nonnegative");
    }
    cfg.prox.restarts = Index(integer(*x, "restarts", p).value_or(cfg.prox.restarts));
    if (cfg.prox.max_iter < 0) {
      throw ParseError("'prox.max_iter' must be nonnegative");
    }
    if (cfg.prox.restarts < 0) {
      throw ParseError("'prox.restarts' must be nonnegative");
    }
  }

  if (const auto *s = subtable(root, "study", "")) {
    const std::string p = "study";
    check_keys(*s, {"taus", "threads", "probe_radius", "probe_count"}, p);
    cfg.study.taus = list(*s, "taus", p).value_or(std::vector<double>{});
    cfg.study.threads = Index(integer(*s, "threads", p).value_or(1));
    cfg.study.probe_radius = real(*s, "probe_radius", p).value_or(cfg.study.probe_radius);
    cfg.study.probe_count = Index(integer(*s, "probe_count", p).value_or(cfg.study.probe_count));
    for (std::size_t i = 0; i < cfg.study.taus.size(); ++i) {
      guard_tau(cfg, cfg.study.taus[i], "study.taus");
      if (i > 0 && !(cfg.study.taus[i] < cfg.study.taus[i - 1])) {
        throw ParseError("'study.taus' must be strictly decreasing");
      }
    }
    if (cfg.study.threads < 1) {
      throw ParseError("'study.threads' must be at least 1");
    }
    if (!(cfg.study.probe_radius > 0) || cfg.study.probe_count < 1) {
      throw ParseError("'study.probe_radius' and 'study.probe_count' must be positive");
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path &path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ParseError("cannot open config " + path.string());
  }
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path(),
                      path.string());
}

DiscreteMeasure<double> build_measure(const MeasureSpec &spec, std::uint64_t seed, std::uint64_t stream)
{
  if (spec.csv) {
    return read_measure_csv(*spec.csv);
  }
  if (spec.points) {
    try {
      if (spec.weights) {
        return DiscreteMeasure<double>(*spec.points, *spec.weights);
      }
      return DiscreteMeasure<double>::uniform(*spec.points);
    } catch (const std::invalid_argument &e) {
      throw ParseError(std::string("measure: ") + e.what());
    }
  }
  CounterRng rng(seed, stream);
  return random_measure<double>(rng, spec.dim, spec.random, spec.scale, spec.equal_weights);
}

Experiment build_experiment(const ExperimentConfig &cfg, bool with_structure)
{
  if (!cfg.measure) {
    throw ParseError("missing [measure] section");
  }
  auto mu_bar = build_measure(*cfg.measure, cfg.seed, 1);
  const Index dim = mu_bar.dim();
  const auto &hs = cfg.hamiltonian;

  Vector<double> center = hs.potential_center ? *hs.potential_center : Vector<double>::Zero(dim);
  if (center.size() != dim) {
    throw ParseError("'hamiltonian.potential_center' has " + std::to_string(center.size()) +
                     " entries for dimension " + std::to_string(dim));
  }
  Potential<double> v = hs.potential == "quadratic"     ? quadratic_potential<double>(center)
                        : hs.potential == "double_well" ? double_well_potential<double>()
                        : hs.potential == "linear"      ? linear_potential<double>(center)
                                                        : zero_potential<double>();
  if (hs.lambda_V) {
    v.lambda = hs.lambda_V;
  }
  Interaction<double> w = hs.interaction == "quadratic" ? quadratic_interaction<double>() : zero_interaction<double>();

  HamiltonianOracle<double> h = zero_hamiltonian<double>();
  if (hs.kind == "potential") {
    h = potential_hamiltonian(v);
  } else if (hs.kind == "interaction") {
    h = interaction_hamiltonian(w);
  } else if (hs.kind == "example") {
    auto mu_o = build_measure(*hs.reference, cfg.seed, 2);
    if (mu_o.dim() != dim) {
      throw ParseError("'hamiltonian.reference' has dimension " + std::to_string(mu_o.dim()) + ", measure has " +
                       std::to_string(dim));
    }
    if (!v.lambda) {
      throw ParseError("'hamiltonian.lambda_V' is required for potential '" + hs.potential + "' in kind = example");
    }
    h = example_oracle(ExampleHamiltonian<double>{hs.a, std::move(mu_o), v, w, *v.lambda});
  }

  FlowConfig<double> fc;
  fc.tau = cfg.flow.tau;
  fc.T = cfg.flow.T;
  fc.N = cfg.flow.N;
  fc.snapshots = cfg.flow.snapshots;
  fc.C_o = cfg.flow.C_o;
  fc.k_hat = cfg.flow.k_hat;
  fc.prox.tol = cfg.prox.tol;
  fc.prox.grad_tol = cfg.prox.grad_tol;
  fc.prox.max_iter = cfg.prox.max_iter;
  fc.prox.restarts = cfg.prox.restarts;
  fc.prox.restart_seed = cfg.seed;
  if (!with_structure) {
    return {std::move(mu_bar), std::move(h), std::move(fc)};
  }
  try {
    fc.structure = cfg.flow.structure ? SymplecticStructure<double>(*cfg.flow.structure)
                                      : SymplecticStructure<double>::canonical(dim);
  } catch (const std::invalid_argument &e) {
    throw ParseError(std::string("'flow.structure': ") + e.what());
  }
  if (fc.structure.dim() != dim) {
    throw ParseError("'flow.structure' has dimension " + std::to_string(fc.structure.dim()) + ", measure has " +
                     std::to_string(dim));
  }
  return {std::move(mu_bar), std::move(h), std::move(fc)};
}

std::vector<std::pair<std::string, std::string>> config_echo(const ExperimentConfig &cfg)
{
  std::vector<std::pair<std::string, std::string>> m;
  m.emplace_back("seed", std::to_string(cfg.seed));
  m.emplace_back("hamiltonian.kind", cfg.hamiltonian.kind);
  m.emplace_back("hamiltonian.a", format_number(cfg.hamiltonian.a));
  m.emplace_back("hamiltonian.potential", cfg.hamiltonian.potential);
  m.emplace_back("hamiltonian.interaction", cfg.hamiltonian.interaction);
  if (auto l = cfg.hamiltonian.convexity_modulus()) {
    m.emplace_back("hamiltonian.lambda", format_number(*l));
  }
  m.emplace_back("flow.tau", format_number(cfg.flow.tau));
  m.emplace_back("flow.T", format_number(cfg.flow.T));
  m.emplace_back("flow.N", std::to_string(cfg.flow.N));
  m.emplace_back("flow.h", format_number(cfg.flow.T / double(cfg.flow.N)));
  if (cfg.flow.C_o) {
    m.emplace_back("flow.C_o", format_number(*cfg.flow.C_o));
  }
  if (cfg.flow.k_hat) {
    m.emplace_back("flow.k_hat", format_number(*cfg.flow.k_hat));
  }
  m.emplace_back("prox.tol", format_number(cfg.prox.tol));
  m.emplace_back("prox.grad_tol", format_number(cfg.prox.grad_tol));
  m.emplace_back("prox.max_iter", std::to_string(cfg.prox.max_iter));
  m.emplace_back("prox.restarts", std::to_string(cfg.prox.restarts));
  return m;
}

} // namespace hamflow
