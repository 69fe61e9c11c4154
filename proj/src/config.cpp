#include "dk/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>
#include <yaml-cpp/yaml.h>

#include "dk/rng.hpp"

namespace dk {

using ojson = nlohmann::ordered_json;

namespace {

std::string format_issues(const std::string& source, const std::vector<ConfigIssue>& issues) {
  std::ostringstream os;
  for (std::size_t i = 0; i < issues.size(); ++i) {
    if (i) os << '\n';
    os << source << ':';
    if (issues[i].line) os << issues[i].line << ':';
    os << ' ' << issues[i].message;
  }
  return os.str();
}

} // namespace

ConfigError::ConfigError(std::string source, std::vector<ConfigIssue> issues)
    : std::runtime_error(format_issues(source, issues)), issues_(std::move(issues)) {}

std::string to_string(Suite suite) {
  switch (suite) {
  case Suite::Simulate: return "simulate";
  case Suite::Martingale: return "martingale";
  case Suite::Duality: return "duality";
  case Suite::Mgf: return "mgf";
  case Suite::Girsanov: return "girsanov";
  case Suite::Moments: return "moments";
  case Suite::Exhaustion: return "exhaustion";
  }
  return "?";
}

const std::vector<Suite>& all_suites() {
  static const std::vector<Suite> s{Suite::Simulate, Suite::Martingale, Suite::Duality, Suite::Mgf,
                                    Suite::Girsanov, Suite::Moments, Suite::Exhaustion};
  return s;
}

std::optional<Suite> suite_from_string(const std::string& name) {
  for (Suite s : all_suites())
    if (to_string(s) == name) return s;
  return std::nullopt;
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

// Collects issues while walking the document; getters return defaults on error
// so validation continues and reports everything at once.
class Reader {
public:
  std::vector<ConfigIssue> issues;

  static std::size_t line_of(const YAML::Node& n) {
    if (!n.IsDefined()) return 0;
    const YAML::Mark m = n.Mark();
    return m.line >= 0 ? static_cast<std::size_t>(m.line) + 1 : 0;
  }

  void error(const YAML::Node& at, const std::string& msg) { issues.push_back({line_of(at), msg}); }
  void error(std::size_t line, const std::string& msg) { issues.push_back({line, msg}); }

  bool expect_map(const YAML::Node& n, const std::string& what) {
    if (n.IsMap()) return true;
    error(n, what + " must be an object");
    return false;
  }

  void check_keys(const YAML::Node& n, const std::string& what, const std::set<std::string>& allowed) {
    if (!n.IsMap()) return;
    for (const auto& kv : n) {
      const std::string key = kv.first.Scalar();
      if (!allowed.count(key)) error(kv.first, "unknown key '" + key + "' in " + what);
    }
  }

  double number(const YAML::Node& n, const std::string& what) {
    double v = 0.0;
    if (!n.IsScalar() || !YAML::convert<double>::decode(n, v) || !std::isfinite(v)) {
      error(n, what + " must be a finite number");
      return 0.0;
    }
    return v;
  }

  double number(const YAML::Node& parent, const std::string& key, const std::string& what,
                double fallback) {
    const YAML::Node n = parent[key];
    return n ? number(n, what + "." + key) : fallback;
  }

  std::uint64_t unsigned_int(const YAML::Node& n, const std::string& what) {
    std::uint64_t v = 0;
    const std::string& s = n.IsScalar() ? n.Scalar() : std::string();
    if (!n.IsScalar() || s.empty() || s[0] == '-' || !YAML::convert<std::uint64_t>::decode(n, v)) {
      error(n, what + " must be a non-negative integer");
      return 0;
    }
    return v;
  }

  std::size_t count(const YAML::Node& parent, const std::string& key, const std::string& what,
                    std::size_t fallback) {
    const YAML::Node n = parent[key];
    return n ? static_cast<std::size_t>(unsigned_int(n, what + "." + key)) : fallback;
  }

  bool boolean(const YAML::Node& parent, const std::string& key, const std::string& what,
               bool fallback) {
    const YAML::Node n = parent[key];
    if (!n) return fallback;
    bool v = false;
    if (!n.IsScalar() || !YAML::convert<bool>::decode(n, v)) {
      error(n, what + "." + key + " must be true or false");
      return fallback;
    }
    return v;
  }

  std::string string(const YAML::Node& n, const std::string& what) {
    if (!n.IsScalar()) {
      error(n, what + " must be a string");
      return {};
    }
    return n.Scalar();
  }

  std::vector<double> vector(const YAML::Node& n, const std::string& what) {
    std::vector<double> out;
    if (!n.IsSequence()) {
      error(n, what + " must be a list of numbers");
      return out;
    }
    for (std::size_t i = 0; i < n.size(); ++i) out.push_back(number(n[i], what));
    return out;
  }
};

std::string kind_list() {
  return "InertialLangevin, ActiveMatter, InteractingVFP, Flocking, LinearOU";
}

PotentialSpec read_potential(Reader& r, const YAML::Node& n, const std::string& what) {
  if (!n) return PotentialSpec::zero();
  if (!r.expect_map(n, what)) return {};
  const std::string kind = n["kind"] ? r.string(n["kind"], what + ".kind") : "zero";
  if (kind == "zero") {
    r.check_keys(n, what, {"kind"});
    return PotentialSpec::zero();
  }
  if (kind == "quadratic") {
    r.check_keys(n, what, {"kind", "stiffness"});
    return PotentialSpec::quadratic(r.number(n, "stiffness", what, 1.0));
  }
  if (kind == "double_well") {
    r.check_keys(n, what, {"kind", "a", "b"});
    return PotentialSpec::double_well(r.number(n, "a", what, 1.0), r.number(n, "b", what, 1.0));
  }
  r.error(n["kind"], what + ".kind must be one of zero, quadratic, double_well");
  return {};
}

std::optional<ModelSpec> read_model(Reader& r, const YAML::Node& n) {
  const std::string what = "model";
  if (!n) {
    r.error(std::size_t{0}, "missing model section");
    return std::nullopt;
  }
  if (!r.expect_map(n, what)) return std::nullopt;
  if (!n["kind"]) {
    r.error(n, "model.kind is required (" + kind_list() + ")");
    return std::nullopt;
  }
  ModelKind kind;
  try {
    std::string name = r.string(n["kind"], "model.kind");
    if (name == "LinearOU-test") name = "LinearOU";
    kind = model_kind_from_string(name);
  } catch (const std::exception&) {
    r.error(n["kind"], "model.kind must be one of " + kind_list());
    return std::nullopt;
  }
  const std::size_t before = r.issues.size();
  const double alpha = r.number(n, "alpha", what, 1.0);
  ModelSpec m;
  try {
    switch (kind) {
    case ModelKind::InertialLangevin:
      r.check_keys(n, what, {"kind", "alpha", "d", "gamma", "potential", "allow_unbounded_hessian"});
      m = ModelSpec::inertial_langevin(r.count(n, "d", what, 1), r.number(n, "gamma", what, 1.0),
                                       read_potential(r, n["potential"], "model.potential"), alpha);
      break;
    case ModelKind::InteractingVFP: {
      r.check_keys(n, what,
                   {"kind", "alpha", "d", "gamma", "potential", "pair", "allow_unbounded_hessian"});
      PairForceSpec pair;
      if (const YAML::Node p = n["pair"]; p && r.expect_map(p, "model.pair")) {
        r.check_keys(p, "model.pair", {"strength", "range"});
        pair.strength = r.number(p, "strength", "model.pair", 0.0);
        pair.range = r.number(p, "range", "model.pair", 1.0);
      }
      m = ModelSpec::interacting_vfp(r.count(n, "d", what, 1), r.number(n, "gamma", what, 1.0),
                                     read_potential(r, n["potential"], "model.potential"), pair,
                                     alpha);
      break;
    }
    case ModelKind::ActiveMatter:
      r.check_keys(n, what, {"kind", "alpha", "speed"});
      m = ModelSpec::active_matter(r.number(n, "speed", what, 1.0), alpha);
      break;
    case ModelKind::Flocking: {
      r.check_keys(n, what, {"kind", "alpha", "speed", "flocking"});
      FlockingSpec fs;
      if (const YAML::Node f = n["flocking"]; f && r.expect_map(f, "model.flocking")) {
        r.check_keys(f, "model.flocking", {"coupling", "radius", "width"});
        fs.coupling = r.number(f, "coupling", "model.flocking", 0.0);
        fs.radius = r.number(f, "radius", "model.flocking", 1.0);
        fs.width = r.number(f, "width", "model.flocking", 0.25);
      }
      m = ModelSpec::flocking_model(r.number(n, "speed", what, 1.0), fs, alpha);
      break;
    }
    case ModelKind::LinearOU:
      r.check_keys(n, what, {"kind", "alpha", "gamma", "drift_matrix", "sigma", "k", "l"});
      if (n["drift_matrix"] || n["sigma"]) {
        if (n["gamma"]) r.error(n["gamma"], "model.gamma cannot be combined with drift_matrix/sigma");
        if (!n["drift_matrix"] || !n["sigma"] || !n["k"] || !n["l"]) {
          r.error(n, "LinearOU needs drift_matrix, sigma, k and l together");
          return std::nullopt;
        }
        m = ModelSpec::linear_ou(r.vector(n["drift_matrix"], "model.drift_matrix"),
                                 r.vector(n["sigma"], "model.sigma"), r.count(n, "k", what, 2),
                                 r.count(n, "l", what, 1), alpha);
      } else {
        for (const char* key : {"k", "l"})
          if (n[key]) r.error(n[key], std::string("model.") + key + " requires drift_matrix and sigma");
        m = ModelSpec::linear_ou_kinetic(r.number(n, "gamma", what, 1.0), alpha);
      }
      break;
    }
    m.allow_unbounded_hessian = r.boolean(n, "allow_unbounded_hessian", what, false);
    if (r.issues.size() != before) return std::nullopt;
    m.validate();
  } catch (const std::exception& e) {
    r.error(n, std::string("invalid model: ") + e.what());
    return std::nullopt;
  }
  return m;
}

std::optional<InitialSpec> read_initial(Reader& r, const YAML::Node& n, std::size_t k) {
  if (!n) {
    r.error(std::size_t{0}, "missing initial section");
    return std::nullopt;
  }
  if (!r.expect_map(n, "initial")) return std::nullopt;
  r.check_keys(n, "initial", {"atoms", "sampler"});
  InitialSpec s;
  if (n["atoms"] && n["sampler"]) {
    r.error(n, "initial takes either atoms or sampler, not both");
    return std::nullopt;
  }
  if (const YAML::Node a = n["atoms"]) {
    if (!a.IsSequence()) {
      r.error(a, "initial.atoms must be a list of points");
      return std::nullopt;
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
      auto z = r.vector(a[i], "initial.atoms");
      if (z.size() != k) {
        std::ostringstream os;
        os << "initial.atoms[" << i << "] has " << z.size() << " coordinates, model needs " << k;
        r.error(a[i], os.str());
      }
      s.atoms.push_back(std::move(z));
    }
    return s;
  }
  const YAML::Node sm = n["sampler"];
  if (!sm || !r.expect_map(sm, "initial.sampler")) {
    if (!sm) r.error(n, "initial needs atoms or sampler");
    return std::nullopt;
  }
  const std::string kind = sm["kind"] ? r.string(sm["kind"], "initial.sampler.kind") : "";
  s.n = r.count(sm, "n", "initial.sampler", 0);
  if (s.n == 0) r.error(sm, "initial.sampler.n must be positive");
  auto dim_check = [&](const std::vector<double>& v, const char* key) {
    if (v.size() != k) r.error(sm[key], std::string("initial.sampler.") + key + " must have k entries");
  };
  if (kind == "gaussian") {
    r.check_keys(sm, "initial.sampler", {"kind", "n", "mean", "std"});
    s.kind = InitialSpec::Kind::Gaussian;
    s.mean = sm["mean"] ? r.vector(sm["mean"], "initial.sampler.mean") : std::vector<double>(k, 0.0);
    s.std = sm["std"] ? r.vector(sm["std"], "initial.sampler.std") : std::vector<double>(k, 1.0);
    dim_check(s.mean, "mean");
    dim_check(s.std, "std");
    for (double x : s.std)
      if (x < 0) r.error(sm["std"], "initial.sampler.std must be >= 0");
  } else if (kind == "uniform") {
    r.check_keys(sm, "initial.sampler", {"kind", "n", "lower", "upper"});
    s.kind = InitialSpec::Kind::Uniform;
    if (!sm["lower"] || !sm["upper"]) {
      r.error(sm, "uniform sampler needs lower and upper");
      return std::nullopt;
    }
    s.lower = r.vector(sm["lower"], "initial.sampler.lower");
    s.upper = r.vector(sm["upper"], "initial.sampler.upper");
    dim_check(s.lower, "lower");
    dim_check(s.upper, "upper");
  } else {
    r.error(sm["kind"] ? sm["kind"] : sm, "initial.sampler.kind must be gaussian or uniform");
    return std::nullopt;
  }
  return s;
}

std::optional<TestFunction> read_test_function(Reader& r, const YAML::Node& n, std::size_t k,
                                               const std::string& what) {
  if (!r.expect_map(n, what)) return std::nullopt;
  const std::string fam = n["family"] ? r.string(n["family"], what + ".family") : "";
  const std::size_t before = r.issues.size();
  try {
    if (fam == "constant") {
      r.check_keys(n, what, {"family", "value"});
      return TestFunction::constant(k, r.number(n, "value", what, 1.0));
    }
    if (fam == "gaussian") {
      r.check_keys(n, what, {"family", "center", "width", "amplitude"});
      auto c = n["center"] ? r.vector(n["center"], what + ".center") : std::vector<double>(k, 0.0);
      if (c.size() != k) r.error(n["center"], what + ".center must have k entries");
      const double w = r.number(n, "width", what, 1.0), a = r.number(n, "amplitude", what, 1.0);
      if (r.issues.size() != before) return std::nullopt;
      return TestFunction::gaussian_bump(c, w, a);
    }
    if (fam == "cosine") {
      r.check_keys(n, what, {"family", "wavevector", "amplitude", "phase"});
      if (!n["wavevector"]) {
        r.error(n, what + ".wavevector is required");
        return std::nullopt;
      }
      auto kv = r.vector(n["wavevector"], what + ".wavevector");
      if (kv.size() != k) r.error(n["wavevector"], what + ".wavevector must have k entries");
      const double a = r.number(n, "amplitude", what, 1.0), p = r.number(n, "phase", what, 0.0);
      if (r.issues.size() != before) return std::nullopt;
      return TestFunction::cosine(kv, a, p);
    }
    if (fam == "product") {
      r.check_keys(n, what, {"family", "factors"});
      const YAML::Node f = n["factors"];
      if (!f || !f.IsSequence() || f.size() != 2) {
        r.error(f ? f : n, what + ".factors must be a list of two test functions");
        return std::nullopt;
      }
      auto a = read_test_function(r, f[0], k, what + ".factors[0]");
      auto b = read_test_function(r, f[1], k, what + ".factors[1]");
      if (!a || !b) return std::nullopt;
      return TestFunction::product(*a, *b);
    }
  } catch (const std::exception& e) {
    r.error(n, what + ": " + e.what());
    return std::nullopt;
  }
  r.error(n["family"] ? n["family"] : n, what + ".family must be constant, gaussian, cosine or product");
  return std::nullopt;
}

ojson test_function_json(const TestFunction& f) {
  ojson j;
  switch (f.family()) {
  case TestFunction::Family::Constant:
    j["family"] = "constant";
    j["value"] = f.amplitude();
    break;
  case TestFunction::Family::GaussianBump:
    j["family"] = "gaussian";
    j["center"] = f.center();
    j["width"] = f.width();
    j["amplitude"] = f.amplitude();
    break;
  case TestFunction::Family::Cosine:
    j["family"] = "cosine";
    j["wavevector"] = f.wavevector();
    j["amplitude"] = f.amplitude();
    j["phase"] = f.phase();
    break;
  case TestFunction::Family::Product:
    j["family"] = "product";
    j["factors"] = ojson::array({test_function_json(f.factor(0)), test_function_json(f.factor(1))});
    break;
  }
  return j;
}

ojson potential_json(const PotentialSpec& p) {
  ojson j;
  switch (p.kind) {
  case PotentialSpec::Kind::Zero: j["kind"] = "zero"; break;
  case PotentialSpec::Kind::Quadratic:
    j["kind"] = "quadratic";
    j["stiffness"] = p.stiffness;
    break;
  case PotentialSpec::Kind::DoubleWell:
    j["kind"] = "double_well";
    j["a"] = p.a;
    j["b"] = p.b;
    break;
  }
  return j;
}

ojson model_json(const ModelSpec& m) {
  ojson j;
  j["kind"] = to_string(m.kind);
  j["alpha"] = m.alpha;
  switch (m.kind) {
  case ModelKind::InertialLangevin:
  case ModelKind::InteractingVFP:
    j["d"] = m.d;
    j["gamma"] = m.gamma;
    j["potential"] = potential_json(m.potential);
    if (m.kind == ModelKind::InteractingVFP)
      j["pair"] = {{"strength", m.pair.strength}, {"range", m.pair.range}};
    if (m.allow_unbounded_hessian) j["allow_unbounded_hessian"] = true;
    break;
  case ModelKind::ActiveMatter:
  case ModelKind::Flocking:
    j["speed"] = m.speed;
    if (m.kind == ModelKind::Flocking)
      j["flocking"] = {{"coupling", m.flocking.coupling},
                       {"radius", m.flocking.radius},
                       {"width", m.flocking.width}};
    break;
  case ModelKind::LinearOU:
    j["drift_matrix"] = m.drift_matrix;
    j["sigma"] = m.sigma;
    j["k"] = m.k;
    j["l"] = m.l;
    break;
  }
  return j;
}

ojson initial_json(const InitialSpec& s) {
  ojson j;
  switch (s.kind) {
  case InitialSpec::Kind::Atoms: j["atoms"] = s.atoms; break;
  case InitialSpec::Kind::Gaussian:
    j["sampler"] = {{"kind", "gaussian"}, {"n", s.n}, {"mean", s.mean}, {"std", s.std}};
    break;
  case InitialSpec::Kind::Uniform:
    j["sampler"] = {{"kind", "uniform"}, {"n", s.n}, {"lower", s.lower}, {"upper", s.upper}};
    break;
  }
  return j;
}

ojson run_json(const SuiteRun& run) {
  ojson j;
  j["label"] = run.label;
  j["model"] = model_json(run.model);
  j["initial"] = initial_json(run.initial);
  j["integrator"] = {{"scheme", to_string(run.integrator.scheme)},
                     {"dt", run.integrator.dt},
                     {"t_end", run.integrator.t_end}};
  j["budgets"] = {{"replicas", run.budgets.replicas}, {"inner_samples", run.budgets.inner_samples}};
  switch (run.suite) {
  case Suite::Simulate: j["record_replicas"] = run.record_replicas; break;
  case Suite::Martingale: {
    ojson fs = ojson::array();
    for (const auto& f : run.test_functions) fs.push_back(test_function_json(f));
    j["test_functions"] = fs;
    j["checkpoints"] = run.checkpoints;
    j["qv_constant"] = run.qv_constant;
    break;
  }
  case Suite::Duality:
    j["t"] = run.t;
    j["phi"] = test_function_json(*run.phi);
    j["allowance_per_dt"] = run.allowance_per_dt;
    break;
  case Suite::Mgf: {
    j["t"] = run.t;
    if (const auto* b = std::get_if<Ball>(&*run.set))
      j["set"] = {{"center", b->center}, {"radius", b->radius}};
    else {
      const auto& bx = std::get<Box>(*run.set);
      j["set"] = {{"lower", bx.lower}, {"upper", bx.upper}};
    }
    j["lambdas"] = run.lambdas;
    break;
  }
  case Suite::Girsanov:
    j["t"] = run.t;
    j["phi"] = test_function_json(*run.phi);
    j["observable"] = run.observable;
    j["allowance_per_dt"] = run.allowance_per_dt;
    j["fault_injection"] = run.fault_injection;
    j["fault_sigmas"] = run.fault_sigmas;
    break;
  case Suite::Moments: break;
  case Suite::Exhaustion:
    j["t"] = run.t;
    j["radius"] = run.radius;
    j["grid"] = {{"lower", run.grid_lower}, {"upper", run.grid_upper}, {"points", run.grid_points}};
    break;
  }
  return j;
}

bool divides(double t, double dt) {
  try {
    (void)step_count(t, dt);
    return true;
  } catch (const std::exception&) {
    return false;
  }
}

const std::set<std::string> kCommonRunKeys{"label", "model", "initial", "integrator", "budgets"};

std::set<std::string> run_keys(Suite s) {
  std::set<std::string> keys = kCommonRunKeys;
  auto add = [&](std::initializer_list<const char*> ks) {
    for (const char* k : ks) keys.insert(k);
  };
  switch (s) {
  case Suite::Simulate: add({"record_replicas"}); break;
  case Suite::Martingale: add({"test_functions", "checkpoints", "qv_constant"}); break;
  case Suite::Duality: add({"t", "phi", "allowance_per_dt"}); break;
  case Suite::Mgf: add({"t", "set", "lambdas"}); break;
  case Suite::Girsanov:
    add({"t", "phi", "observable", "allowance_per_dt", "fault_injection", "fault_sigmas"});
    break;
  case Suite::Moments: break;
  case Suite::Exhaustion: add({"t", "radius", "grid"}); break;
  }
  return keys;
}

// Section-level value if present, else the top-level default.
YAML::Node pick(const YAML::Node& section, const YAML::Node& top, const char* key) {
  if (section && section.IsMap() && section[key]) return section[key];
  return top[key];
}

std::optional<SuiteRun> read_run(Reader& r, Suite suite, const YAML::Node& section,
                                 const YAML::Node& top, const std::string& label) {
  const std::string what = label;
  const bool has_section = section.IsDefined() && !section.IsNull();
  if (has_section && !r.expect_map(section, what)) return std::nullopt;
  if (has_section) r.check_keys(section, what, run_keys(suite));
  const YAML::Node sec = has_section ? section : YAML::Node(YAML::NodeType::Map);
  const std::size_t before = r.issues.size();

  SuiteRun run;
  run.suite = suite;
  run.label = sec["label"] ? r.string(sec["label"], what + ".label") : label;

  auto model = read_model(r, pick(sec, top, "model"));
  if (!model) return std::nullopt;
  run.model = *model;
  const std::size_t k = run.model.k;
  auto init = read_initial(r, pick(sec, top, "initial"), k);
  if (!init) return std::nullopt;
  run.initial = *init;

  if (const YAML::Node in = pick(sec, top, "integrator")) {
    if (r.expect_map(in, "integrator")) {
      r.check_keys(in, "integrator", {"scheme", "dt", "t_end"});
      if (in["scheme"]) {
        try {
          run.integrator.scheme = scheme_from_string(r.string(in["scheme"], "integrator.scheme"));
        } catch (const std::exception&) {
          r.error(in["scheme"], "integrator.scheme must be euler or split");
        }
      }
      run.integrator.dt = r.number(in, "dt", "integrator", run.integrator.dt);
      run.integrator.t_end = r.number(in, "t_end", "integrator", run.integrator.t_end);
    }
  }
  const auto& ig = run.integrator;
  const YAML::Node in_node = pick(sec, top, "integrator");
  if (!(ig.dt > 0.0)) r.error(in_node, "integrator.dt must be positive");
  if (!(ig.t_end > 0.0)) r.error(in_node, "integrator.t_end must be positive");
  if (ig.dt > 0.0 && ig.t_end > 0.0 && !divides(ig.t_end, ig.dt))
    r.error(in_node, "integrator.dt must divide integrator.t_end");
  if (ig.scheme == Scheme::KineticSplit && !run.model.kinetic)
    r.error(in_node, "the split scheme needs a kinetic (position, velocity) model");

  if (const YAML::Node b = pick(sec, top, "budgets")) {
    if (r.expect_map(b, "budgets")) {
      r.check_keys(b, "budgets", {"replicas", "inner_samples"});
      run.budgets.replicas = r.count(b, "replicas", "budgets", run.budgets.replicas);
      run.budgets.inner_samples = r.count(b, "inner_samples", "budgets", run.budgets.inner_samples);
    }
  }
  if (run.budgets.replicas < 2) r.error(pick(sec, top, "budgets"), "budgets.replicas must be >= 2");
  if (run.budgets.inner_samples < 2)
    r.error(pick(sec, top, "budgets"), "budgets.inner_samples must be >= 2");

  auto read_time = [&](const char* key) {
    const double t = r.number(sec, key, what, ig.t_end);
    if (!(t > 0.0)) r.error(sec[key], what + "." + key + " must be positive");
    else if (ig.dt > 0.0 && !divides(t, ig.dt))
      r.error(sec[key] ? sec[key] : sec, what + "." + key + " must be a multiple of integrator.dt");
    return t;
  };
  auto read_phi = [&](const TestFunction& fallback) -> std::optional<TestFunction> {
    if (!sec["phi"]) return fallback;
    return read_test_function(r, sec["phi"], k, what + ".phi");
  };
  std::vector<double> zeros(k, 0.0), e_last(k, 0.0), e_first(k, 0.0);
  e_last[k - 1] = 1.0;
  e_first[0] = 1.0;
  const bool free = !run.model.interacting();

  switch (suite) {
  case Suite::Simulate:
    run.record_replicas = r.count(sec, "record_replicas", what, 1);
    if (run.record_replicas > run.budgets.replicas)
      r.error(sec["record_replicas"], what + ".record_replicas exceeds budgets.replicas");
    break;
  case Suite::Martingale: {
    if (const YAML::Node fs = sec["test_functions"]) {
      if (!fs.IsSequence() || fs.size() == 0)
        r.error(fs, what + ".test_functions must be a non-empty list");
      else
        for (std::size_t i = 0; i < fs.size(); ++i)
          if (auto f = read_test_function(r, fs[i], k, what + ".test_functions[" + std::to_string(i) + "]"))
            run.test_functions.push_back(*f);
    } else {
      run.test_functions = {TestFunction::gaussian_bump(zeros, 1.0),
                            TestFunction::cosine(e_last, 1.0, 0.3),
                            TestFunction::product(TestFunction::gaussian_bump(zeros, 1.5),
                                                  TestFunction::cosine(e_first, 1.0, 0.5))};
    }
    if (sec["checkpoints"]) {
      run.checkpoints = r.vector(sec["checkpoints"], what + ".checkpoints");
      for (double c : run.checkpoints)
        if (c < 0.0 || c > ig.t_end + 1e-12 || (c > 0.0 && ig.dt > 0.0 && !divides(c, ig.dt)))
          r.error(sec["checkpoints"], what + ".checkpoints must be grid times in [0, t_end]");
      if (run.checkpoints.size() < 2) r.error(sec["checkpoints"], what + ".checkpoints needs two times");
    } else {
      run.checkpoints = {0.0, 0.5 * ig.t_end, ig.t_end};
      if (!divides(0.5 * ig.t_end, ig.dt)) run.checkpoints = {0.0, ig.t_end};
    }
    run.qv_constant = r.number(sec, "qv_constant", what, 10.0);
    if (run.qv_constant < 0.0) r.error(sec["qv_constant"], what + ".qv_constant must be >= 0");
    if (run.budgets.replicas < 100) r.error(sec, what + " needs budgets.replicas >= 100");
    break;
  }
  case Suite::Duality:
    if (!free) r.error(sec, what + ": duality is only defined for models with F = 0");
    run.t = read_time("t");
    run.phi = read_phi(TestFunction::gaussian_bump(zeros, 1.0));
    if (run.phi && !run.phi->nonnegative()) r.error(sec["phi"], what + ".phi must be nonnegative");
    run.allowance_per_dt = r.number(sec, "allowance_per_dt", what, 2.0);
    break;
  case Suite::Mgf: {
    if (!free) r.error(sec, what + ": the MGF identity is only defined for models with F = 0");
    run.t = read_time("t");
    if (const YAML::Node s = sec["set"]) {
      if (r.expect_map(s, what + ".set")) {
        r.check_keys(s, what + ".set", {"center", "radius", "lower", "upper"});
        if (s["radius"] || s["center"]) {
          Ball b{s["center"] ? r.vector(s["center"], what + ".set.center") : zeros,
                 r.number(s, "radius", what + ".set", 1.0)};
          if (b.center.size() != k) r.error(s, what + ".set.center must have k entries");
          if (!(b.radius > 0.0)) r.error(s, what + ".set.radius must be positive");
          run.set = b;
        } else if (s["lower"] && s["upper"]) {
          Box bx{r.vector(s["lower"], what + ".set.lower"), r.vector(s["upper"], what + ".set.upper")};
          if (bx.lower.size() != k || bx.upper.size() != k)
            r.error(s, what + ".set bounds must have k entries");
          run.set = bx;
        } else {
          r.error(s, what + ".set needs center/radius or lower/upper");
        }
      }
    } else {
      run.set = Ball{zeros, 1.0};
    }
    if (sec["lambdas"]) {
      run.lambdas = r.vector(sec["lambdas"], what + ".lambdas");
      for (double l : run.lambdas)
        if (l < 0.0) r.error(sec["lambdas"], what + ".lambdas must be >= 0");
    } else {
      run.lambdas = {0.5, 1.0, 2.0};
    }
    break;
  }
  case Suite::Girsanov:
    if (free) r.error(sec, what + ": girsanov needs an interacting model");
    run.t = read_time("t");
    run.phi = read_phi(TestFunction::gaussian_bump(zeros, 1.0));
    run.observable = sec["observable"] ? r.string(sec["observable"], what + ".observable") : "laplace";
    if (run.observable != "laplace" && run.observable != "linear")
      r.error(sec["observable"], what + ".observable must be laplace or linear");
    run.allowance_per_dt = r.number(sec, "allowance_per_dt", what, 2.0);
    run.fault_injection = r.boolean(sec, "fault_injection", what, true);
    run.fault_sigmas = r.number(sec, "fault_sigmas", what, 5.0);
    break;
  case Suite::Moments:
    try {
      (void)growth_constants(run.model, 1.0);
    } catch (const std::exception& e) {
      r.error(sec, what + ": " + e.what());
    }
    break;
  case Suite::Exhaustion: {
    if (!free) r.error(sec, what + ": exhaustion probes the free semigroup; use a model with F = 0");
    run.t = read_time("t");
    run.radius = r.number(sec, "radius", what, 1.0);
    if (!(run.radius > 0.0)) r.error(sec["radius"], what + ".radius must be positive");
    run.grid_lower.assign(k, -3.0);
    run.grid_upper.assign(k, 3.0);
    if (const YAML::Node g = sec["grid"]; g && r.expect_map(g, what + ".grid")) {
      r.check_keys(g, what + ".grid", {"lower", "upper", "points"});
      if (g["lower"]) run.grid_lower = r.vector(g["lower"], what + ".grid.lower");
      if (g["upper"]) run.grid_upper = r.vector(g["upper"], what + ".grid.upper");
      run.grid_points = r.count(g, "points", what + ".grid", 13);
      if (run.grid_lower.size() != k || run.grid_upper.size() != k)
        r.error(g, what + ".grid bounds must have k entries");
      if (run.grid_points < 1) r.error(g, what + ".grid.points must be >= 1");
    }
    std::size_t total = 1;
    for (std::size_t i = 0; i < k; ++i) total *= run.grid_points;
    if (total > 1000000) r.error(sec, what + ".grid has more than 10^6 points");
    break;
  }
  }
  if (r.issues.size() != before) return std::nullopt;
  return run;
}

} // namespace

ExperimentConfig parse_config(const std::string& text, const std::string& source) {
  YAML::Node loaded;
  try {
    loaded = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(source, {{static_cast<std::size_t>(e.mark.line + 1), "parse error: " + e.msg}});
  }
  const YAML::Node& root = loaded;
  Reader r;
  if (!root.IsMap()) throw ConfigError(source, {{1, "configuration must be an object"}});

  std::set<std::string> top_keys{"seed", "output", "suites", "model", "initial", "integrator", "budgets"};
  for (Suite s : all_suites()) top_keys.insert(to_string(s));
  r.check_keys(root, "configuration", top_keys);

  ExperimentConfig cfg;
  if (root["seed"])
    cfg.seed = r.unsigned_int(root["seed"], "seed");
  else
    r.error(std::size_t{0}, "seed is required");
  if (root["output"]) cfg.output = r.string(root["output"], "output");

  std::set<Suite> seen;
  if (const YAML::Node s = root["suites"]) {
    if (!s.IsSequence()) {
      r.error(s, "suites must be a list");
    } else {
      for (std::size_t i = 0; i < s.size(); ++i) {
        const std::string name = r.string(s[i], "suites[" + std::to_string(i) + "]");
        const auto suite = suite_from_string(name);
        if (!suite)
          r.error(s[i], "unknown suite '" + name +
                            "' (simulate, martingale, duality, mgf, girsanov, moments, exhaustion)");
        else if (!seen.insert(*suite).second)
          r.error(s[i], "suite '" + name + "' listed twice");
        else
          cfg.suites.push_back(*suite);
      }
    }
  }

  // Every suite section is validated, selected or not.
  for (Suite suite : all_suites()) {
    const std::string name = to_string(suite);
    const YAML::Node sec = root[name];
    std::vector<YAML::Node> sections;
    if (sec && sec.IsSequence()) {
      for (std::size_t i = 0; i < sec.size(); ++i) sections.push_back(sec[i]);
      if (sections.empty()) r.error(sec, name + " must not be an empty list");
    } else if (sec) {
      sections.push_back(sec);
    } else if (seen.count(suite)) {
      sections.push_back(YAML::Node(YAML::NodeType::Null));
    }
    std::vector<SuiteRun> runs;
    for (std::size_t i = 0; i < sections.size(); ++i) {
      const std::string label = sections.size() == 1 ? name : name + "[" + std::to_string(i) + "]";
      if (auto run = read_run(r, suite, sections[i], root, label)) runs.push_back(std::move(*run));
    }
    if (seen.count(suite))
      for (auto& run : runs) cfg.runs.push_back(std::move(run));
  }
  // Shared sections are validated even when no run uses them.
  if (root["model"]) {
    const auto model = read_model(r, root["model"]);
    if (model && root["initial"]) read_initial(r, root["initial"], model->k);
  }
  if (!r.issues.empty()) {
    std::vector<ConfigIssue> unique;
    for (const auto& i : r.issues)
      if (std::none_of(unique.begin(), unique.end(),
                       [&](const ConfigIssue& u) { return u.line == i.line && u.message == i.message; }))
        unique.push_back(i);
    throw ConfigError(source, unique);
  }

  // Runs follow the order of the suite list.
  std::stable_sort(cfg.runs.begin(), cfg.runs.end(), [&](const SuiteRun& a, const SuiteRun& b) {
    auto pos = [&](Suite s) { return std::find(cfg.suites.begin(), cfg.suites.end(), s) - cfg.suites.begin(); };
    return pos(a.suite) < pos(b.suite);
  });

  ojson eff;
  eff["seed"] = cfg.seed;
  eff["output"] = cfg.output;
  ojson names = ojson::array();
  for (Suite s : cfg.suites) names.push_back(to_string(s));
  eff["suites"] = names;
  for (Suite s : cfg.suites) {
    ojson arr = ojson::array();
    for (const auto& run : cfg.runs)
      if (run.suite == s) arr.push_back(run_json(run));
    eff[to_string(s)] = arr;
  }
  cfg.effective_json = eff.dump(2);
  cfg.hash = fnv1a64(cfg.effective_json);
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path, {{0, "cannot read configuration file"}});
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

Ensemble build_initial(const InitialSpec& spec, const ModelSpec& model, std::uint64_t seed) {
  const std::size_t k = model.k;
  if (spec.kind == InitialSpec::Kind::Atoms) return Ensemble::from_atoms(spec.atoms, k, model.alpha);
  std::vector<double> flat(spec.n * k);
  const NoiseStream noise(seed, 0, StreamPurpose::InitialState);
  for (std::size_t i = 0; i < spec.n; ++i) {
    for (std::size_t c = 0; c < k; ++c) {
      if (spec.kind == InitialSpec::Kind::Gaussian) {
        const auto [g, unused] = noise.gaussian_pair(i, 0, static_cast<std::uint32_t>(c));
        (void)unused;
        flat[i * k + c] = spec.mean[c] + spec.std[c] * g;
      } else {
        const double u = noise.uniform(i, 0, static_cast<std::uint32_t>(c));
        flat[i * k + c] = spec.lower[c] + (spec.upper[c] - spec.lower[c]) * u;
      }
    }
  }
  return Ensemble(k, model.alpha, std::move(flat));
}

} // namespace dk
