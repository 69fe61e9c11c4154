#include "dk/models.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace dk {

// ---------------------------------------------------------------------------
// Ensemble / EmpiricalMeasure

Ensemble::Ensemble(std::size_t dim, double alpha_, std::vector<double> flat_coords)
    : k(dim), alpha(alpha_), coords(std::move(flat_coords)) {
  if (k == 0) throw std::invalid_argument("ensemble dimension must be positive");
  if (coords.size() % k != 0) throw std::invalid_argument("ensemble coordinates not a multiple of k");
  ids.resize(size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
  validate();
}

Ensemble Ensemble::from_atoms(const std::vector<std::vector<double>>& atoms, std::size_t dim,
                              double alpha) {
  std::vector<double> flat;
  flat.reserve(atoms.size() * dim);
  for (const auto& a : atoms) {
    if (a.size() != dim) throw std::invalid_argument("atom has wrong dimension");
    flat.insert(flat.end(), a.begin(), a.end());
  }
  return Ensemble(dim, alpha, std::move(flat));
}

void Ensemble::validate() const {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw std::invalid_argument("alpha must be positive");
  if (k == 0 || k > kMaxDim) throw std::invalid_argument("ensemble dimension out of range");
  if (coords.size() % k != 0) throw std::invalid_argument("ensemble coordinates not a multiple of k");
  if (ids.size() != size()) throw std::invalid_argument("ensemble ids do not match particle count");
  if (!all_finite(coords)) throw std::invalid_argument("ensemble contains non-finite coordinates");
}

EmpiricalMeasure::EmpiricalMeasure(ConstVec atoms, std::size_t dim, double alpha)
    : atoms_(atoms), k_(dim), n_(dim == 0 ? 0 : atoms.size() / dim), alpha_(alpha) {
  if (dim == 0 || atoms.size() % dim != 0)
    throw std::invalid_argument("measure atoms not a multiple of the dimension");
  if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
}

// ---------------------------------------------------------------------------
// Potentials and cutoff

double PotentialSpec::value(ConstVec x) const {
  const double r2 = squared_norm(x);
  switch (kind) {
  case Kind::Zero: return 0.0;
  case Kind::Quadratic: return 0.5 * stiffness * r2;
  case Kind::DoubleWell: return a * (r2 - b) * (r2 - b);
  }
  return 0.0;
}

void PotentialSpec::gradient(ConstVec x, MutVec out) const {
  const double r2 = squared_norm(x);
  for (std::size_t i = 0; i < x.size(); ++i) {
    switch (kind) {
    case Kind::Zero: out[i] = 0.0; break;
    case Kind::Quadratic: out[i] = stiffness * x[i]; break;
    case Kind::DoubleWell: out[i] = 4.0 * a * (r2 - b) * x[i]; break;
    }
  }
}

void PotentialSpec::hessian(ConstVec x, MutVec out) const {
  const std::size_t d = x.size();
  const double r2 = squared_norm(x);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const double delta = i == j ? 1.0 : 0.0;
      switch (kind) {
      case Kind::Zero: out[i * d + j] = 0.0; break;
      case Kind::Quadratic: out[i * d + j] = stiffness * delta; break;
      case Kind::DoubleWell:
        out[i * d + j] = 4.0 * a * ((r2 - b) * delta + 2.0 * x[i] * x[j]);
        break;
      }
    }
}

double Cutoff::value(double r) const {
  if (r <= radius) return 1.0;
  if (r >= radius + width) return 0.0;
  const double s = (r - radius) / width;
  return 1.0 - s * s * (3.0 - 2.0 * s);
}

double Cutoff::derivative(double r) const {
  if (r <= radius || r >= radius + width) return 0.0;
  const double s = (r - radius) / width;
  return -6.0 * s * (1.0 - s) / width;
}

double Cutoff::second_derivative(double r) const {
  if (r <= radius || r >= radius + width) return 0.0;
  const double s = (r - radius) / width;
  return (-6.0 + 12.0 * s) / (width * width);
}

// ---------------------------------------------------------------------------
// ModelSpec

std::string to_string(ModelKind kind) {
  switch (kind) {
  case ModelKind::InertialLangevin: return "InertialLangevin";
  case ModelKind::ActiveMatter: return "ActiveMatter";
  case ModelKind::InteractingVFP: return "InteractingVFP";
  case ModelKind::Flocking: return "Flocking";
  case ModelKind::LinearOU: return "LinearOU";
  }
  return "?";
}

ModelKind model_kind_from_string(const std::string& name) {
  for (ModelKind k : {ModelKind::InertialLangevin, ModelKind::ActiveMatter,
                      ModelKind::InteractingVFP, ModelKind::Flocking, ModelKind::LinearOU})
    if (to_string(k) == name) return k;
  if (name == "LinearOU-test") return ModelKind::LinearOU;
  throw std::invalid_argument("unknown model kind '" + name + "'");
}

namespace {

std::vector<double> kinetic_sigma(std::size_t d) {
  std::vector<double> s(2 * d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) s[(d + i) * d + i] = std::numbers::sqrt2;
  return s;
}

std::vector<double> angle_sigma() { return {0.0, 0.0, 1.0}; }

} // namespace

void ModelSpec::finalize() {
  sigma_sigma_t.assign(k * k, 0.0);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      double s = 0.0;
      for (std::size_t m = 0; m < l; ++m) s += sigma[i * l + m] * sigma[j * l + m];
      sigma_sigma_t[i * k + j] = s;
    }
}

ModelSpec ModelSpec::inertial_langevin(std::size_t d, double gamma, PotentialSpec potential,
                                       double alpha) {
  ModelSpec m;
  m.kind = ModelKind::InertialLangevin;
  m.d = d;
  m.k = 2 * d;
  m.l = d;
  m.alpha = alpha;
  m.gamma = gamma;
  m.potential = potential;
  m.sigma = kinetic_sigma(d);
  m.kinetic = true;
  m.finalize();
  return m;
}

ModelSpec ModelSpec::active_matter(double speed, double alpha) {
  ModelSpec m;
  m.kind = ModelKind::ActiveMatter;
  m.d = 2;
  m.k = 3;
  m.l = 1;
  m.alpha = alpha;
  m.speed = speed;
  m.sigma = angle_sigma();
  m.finalize();
  return m;
}

ModelSpec ModelSpec::interacting_vfp(std::size_t d, double gamma, PotentialSpec potential,
                                     PairForceSpec pair, double alpha) {
  ModelSpec m = inertial_langevin(d, gamma, potential, alpha);
  m.kind = ModelKind::InteractingVFP;
  m.pair = pair;
  return m;
}

ModelSpec ModelSpec::flocking_model(double speed, FlockingSpec flocking, double alpha) {
  ModelSpec m = active_matter(speed, alpha);
  m.kind = ModelKind::Flocking;
  m.flocking = flocking;
  return m;
}

ModelSpec ModelSpec::linear_ou(std::vector<double> drift_matrix, std::vector<double> sigma,
                               std::size_t k, std::size_t l, double alpha) {
  ModelSpec m;
  m.kind = ModelKind::LinearOU;
  m.k = k;
  m.l = l;
  m.d = k;
  m.alpha = alpha;
  m.drift_matrix = std::move(drift_matrix);
  m.sigma = std::move(sigma);
  if (m.drift_matrix.size() != k * k || m.sigma.size() != k * l)
    throw std::invalid_argument("LinearOU: matrix shapes do not match k and l");
  // Recognise the kinetic oscillator [[0, I], [-kappa I, -gamma I]], S = s (0; I).
  if (k % 2 == 0 && l == k / 2) {
    const std::size_t d = k / 2;
    const double kappa = -m.drift_matrix[d * k];
    const double g = -m.drift_matrix[d * k + d];
    const double s = m.sigma[d * l];
    bool ok = s > 0.0;
    for (std::size_t i = 0; i < k && ok; ++i)
      for (std::size_t j = 0; j < k && ok; ++j) {
        double expect = 0.0;
        if (i < d && j == i + d) expect = 1.0;
        if (i >= d && j == i - d) expect = -kappa;
        if (i >= d && j == i) expect = -g;
        ok = m.drift_matrix[i * k + j] == expect;
      }
    for (std::size_t i = 0; i < k && ok; ++i)
      for (std::size_t j = 0; j < l && ok; ++j)
        ok = m.sigma[i * l + j] == ((i >= d && j == i - d) ? s : 0.0);
    if (ok && kappa >= 0.0 && g >= 0.0) {
      m.kinetic = true;
      m.d = d;
      m.gamma = g;
      m.potential = PotentialSpec::quadratic(kappa);
    }
  }
  m.finalize();
  return m;
}

ModelSpec ModelSpec::linear_ou_kinetic(double gamma, double alpha) {
  return linear_ou({0.0, 1.0, -1.0, -gamma}, {0.0, std::numbers::sqrt2}, 2, 1, alpha);
}

ModelSpec ModelSpec::without_interaction() const {
  ModelSpec m = *this;
  if (kind == ModelKind::InteractingVFP) m.kind = ModelKind::InertialLangevin;
  if (kind == ModelKind::Flocking) m.kind = ModelKind::ActiveMatter;
  m.pair = {};
  m.flocking = {};
  return m;
}

ModelSpec ModelSpec::with_alpha(double new_alpha) const {
  ModelSpec m = *this;
  m.alpha = new_alpha;
  return m;
}

void ModelSpec::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument(msg); };
  if (!(alpha > 0.0) || !std::isfinite(alpha)) fail("alpha must be a positive finite number");
  if (k == 0 || k > kMaxDim) fail("state dimension k out of range");
  if (l == 0 || l > k) fail("noise dimension l must satisfy 1 <= l <= k");
  if (sigma.size() != k * l) fail("sigma has wrong shape");
  if (!all_finite(sigma)) fail("sigma must be finite");
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) fail("friction gamma must be >= 0");
  switch (kind) {
  case ModelKind::InertialLangevin:
  case ModelKind::InteractingVFP:
    if (k != 2 * d) fail("kinetic models need k = 2d");
    if (potential.kind == PotentialSpec::Kind::DoubleWell && !allow_unbounded_hessian)
      fail("double-well potential has unbounded Hessian; set allow_unbounded_hessian to use it");
    if (potential.kind == PotentialSpec::Kind::Quadratic && !(potential.stiffness >= 0.0))
      fail("quadratic stiffness must be >= 0");
    if (potential.kind == PotentialSpec::Kind::DoubleWell && !(potential.a > 0.0))
      fail("double-well depth a must be positive");
    if (kind == ModelKind::InteractingVFP && !(pair.range > 0.0))
      fail("pair interaction range must be positive");
    break;
  case ModelKind::ActiveMatter:
  case ModelKind::Flocking:
    if (k != 3 || l != 1) fail("active matter models use k = 3, l = 1");
    if (!std::isfinite(speed)) fail("propulsion speed must be finite");
    if (kind == ModelKind::Flocking) {
      if (!(flocking.radius > 0.0)) fail("flocking cutoff radius R must be positive");
      if (!(flocking.width > 0.0)) fail("flocking cutoff width epsilon must be positive");
      if (!std::isfinite(flocking.coupling)) fail("flocking coupling must be finite");
    }
    break;
  case ModelKind::LinearOU:
    if (drift_matrix.size() != k * k) fail("LinearOU drift matrix has wrong shape");
    if (!all_finite(drift_matrix)) fail("LinearOU drift matrix must be finite");
    break;
  }
}

std::string ModelSpec::describe() const {
  std::ostringstream os;
  os << to_string(kind) << " (k=" << k << ", l=" << l << ", alpha=" << alpha << ")";
  return os.str();
}

// ---------------------------------------------------------------------------
// Coefficients

namespace {

void require_finite(ConstVec z, std::size_t k) {
  if (z.size() != k) throw std::invalid_argument("state has wrong dimension");
  if (!all_finite(z)) throw std::invalid_argument("state contains non-finite values");
}

} // namespace

void drift_into(const ModelSpec& model, ConstVec z, MutVec out) {
  const std::size_t k = model.k;
  switch (model.kind) {
  case ModelKind::InertialLangevin:
  case ModelKind::InteractingVFP: {
    const std::size_t d = model.d;
    std::array<double, kMaxDim> grad{};
    model.potential.gradient(z.first(d), MutVec(grad.data(), d));
    for (std::size_t i = 0; i < d; ++i) {
      out[i] = z[d + i];
      out[d + i] = -model.gamma * z[d + i] - grad[i];
    }
    break;
  }
  case ModelKind::ActiveMatter:
  case ModelKind::Flocking:
    out[0] = model.speed * std::cos(z[2]);
    out[1] = model.speed * std::sin(z[2]);
    out[2] = 0.0;
    break;
  case ModelKind::LinearOU:
    for (std::size_t i = 0; i < k; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < k; ++j) s += model.drift_matrix[i * k + j] * z[j];
      out[i] = s;
    }
    break;
  }
}

std::vector<double> drift(const ModelSpec& model, ConstVec z) {
  require_finite(z, model.k);
  std::vector<double> out(model.k);
  drift_into(model, z, out);
  return out;
}

std::vector<double> diffusion(const ModelSpec& model, ConstVec z) {
  require_finite(z, model.k);
  return model.sigma;
}

double apply_generator(const ModelSpec& model, const Jet& phi, ConstVec z) {
  const std::size_t k = model.k;
  std::array<double, kMaxDim> b{};
  drift_into(model, z, MutVec(b.data(), k));
  double first = 0.0;
  for (std::size_t i = 0; i < k; ++i) first += b[i] * phi.grad[i];
  double second = 0.0;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      const double a = model.sigma_sigma_t[i * k + j];
      if (a != 0.0) second += a * phi.h(i, j);
    }
  return first + 0.5 * second;
}

double apply_generator(const ModelSpec& model, const TestFunction& phi, ConstVec z) {
  require_finite(z, model.k);
  if (phi.dim() != model.k) throw std::invalid_argument("test function dimension differs from model");
  return apply_generator(model, phi.evaluate(z), z);
}

double sigma_t_norm2(const ModelSpec& model, ConstVec grad) {
  double s = 0.0;
  for (std::size_t m = 0; m < model.l; ++m) {
    double c = 0.0;
    for (std::size_t i = 0; i < model.k; ++i) c += model.sigma[i * model.l + m] * grad[i];
    s += c * c;
  }
  return s;
}

double carre_du_champ(const ModelSpec& model, const TestFunction& phi, ConstVec z) {
  require_finite(z, model.k);
  if (phi.dim() != model.k) throw std::invalid_argument("test function dimension differs from model");
  const Jet j = phi.evaluate(z);
  return 0.5 * sigma_t_norm2(model, ConstVec(j.grad.data(), model.k));
}

// ---------------------------------------------------------------------------
// Interactions

namespace {

struct GaussianPair {
  // g(y) = strength * y * exp(-|y|^2 / (2 range^2)); f_int(x, x') = g(x' - x).
  double strength;
  double range;

  void value(ConstVec y, MutVec out) const {
    const double e = strength * std::exp(-0.5 * squared_norm(y) / (range * range));
    for (std::size_t a = 0; a < y.size(); ++a) out[a] = e * y[a];
  }
  // J_ab = d g_a / d y_b
  double jacobian(ConstVec y, std::size_t a, std::size_t b, double e) const {
    return e * ((a == b ? 1.0 : 0.0) - y[a] * y[b] / (range * range));
  }
  // d^2 g_a / d y_b d y_c
  double second(ConstVec y, std::size_t a, std::size_t b, std::size_t c, double e) const {
    const double il2 = 1.0 / (range * range);
    const double dab = a == b ? 1.0 : 0.0, dac = a == c ? 1.0 : 0.0, dbc = b == c ? 1.0 : 0.0;
    return e * (-y[c] * il2 * (dab - y[a] * y[b] * il2) - (dac * y[b] + y[a] * dbc) * il2);
  }
  double envelope(ConstVec y) const {
    return strength * std::exp(-0.5 * squared_norm(y) / (range * range));
  }
};

void require_interacting(const ModelSpec& model, const char* what) {
  if (!model.interacting())
    throw std::invalid_argument(std::string(what) + ": model " + to_string(model.kind) +
                                " has no interaction functional");
}

double vfp_scale(const ModelSpec& model) {
  // G = c <mu, v . F_mu> with c chosen so that sigma sigma^T grad dG/dmu = F.
  return 1.0 / model.diffusion_matrix_at(model.d, model.d);
}

double flock_h(const FlockingSpec& f, double t) { return -f.coupling * std::cos(t); }
double flock_dh(const FlockingSpec& f, double t) { return f.coupling * std::sin(t); }
double flock_d2h(const FlockingSpec& f, double t) { return f.coupling * std::cos(t); }

} // namespace

void interaction_force_into(const ModelSpec& model, const EmpiricalMeasure& mu, ConstVec z,
                            MutVec out) {
  const std::size_t k = model.k;
  for (std::size_t i = 0; i < k; ++i) out[i] = 0.0;
  if (!model.interacting() || mu.size() == 0) return;
  const double w = mu.weight();
  if (model.kind == ModelKind::InteractingVFP) {
    const std::size_t d = model.d;
    const GaussianPair g{model.pair.strength, model.pair.range};
    std::array<double, kMaxDim> y{}, gy{};
    for (std::size_t j = 0; j < mu.size(); ++j) {
      const ConstVec zj = mu.atom(j);
      for (std::size_t a = 0; a < d; ++a) y[a] = zj[a] - z[a];
      g.value(ConstVec(y.data(), d), MutVec(gy.data(), d));
      for (std::size_t a = 0; a < d; ++a) out[d + a] += w * gy[a];
    }
  } else {
    const Cutoff chi{model.flocking.radius, model.flocking.width};
    double acc = 0.0;
    for (std::size_t j = 0; j < mu.size(); ++j) {
      const ConstVec zj = mu.atom(j);
      const double r = std::hypot(z[0] - zj[0], z[1] - zj[1]);
      const double c = chi.value(r);
      if (c != 0.0) acc += c * flock_dh(model.flocking, z[2] - zj[2]);
    }
    out[2] = w * acc;
  }
}

std::vector<double> interaction_force(const ModelSpec& model, const EmpiricalMeasure& mu,
                                      ConstVec z) {
  require_finite(z, model.k);
  if (mu.dim() != model.k) throw std::invalid_argument("measure dimension differs from model");
  std::vector<double> out(model.k);
  interaction_force_into(model, mu, z, out);
  return out;
}

void interaction_forces_at_atoms(const ModelSpec& model, const EmpiricalMeasure& mu,
                                 MutVec out) {
  const std::size_t k = model.k;
  for (std::size_t i = 0; i < mu.size(); ++i)
    interaction_force_into(model, mu, mu.atom(i), out.subspan(i * k, k));
}

double interaction_functional(const ModelSpec& model, const EmpiricalMeasure& mu) {
  require_interacting(model, "interaction_functional");
  if (mu.dim() != model.k) throw std::invalid_argument("measure dimension differs from model");
  const double w = mu.weight();
  double total = 0.0;
  if (model.kind == ModelKind::Flocking) {
    const Cutoff chi{model.flocking.radius, model.flocking.width};
    for (std::size_t i = 0; i < mu.size(); ++i)
      for (std::size_t j = 0; j < mu.size(); ++j) {
        const ConstVec zi = mu.atom(i), zj = mu.atom(j);
        const double c = chi.value(std::hypot(zi[0] - zj[0], zi[1] - zj[1]));
        if (c != 0.0) total += c * flock_h(model.flocking, zi[2] - zj[2]);
      }
    return 0.5 * w * w * total;
  }
  const std::size_t d = model.d, k = model.k;
  std::array<double, kMaxDim> f{};
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const ConstVec zi = mu.atom(i);
    interaction_force_into(model, mu, zi, MutVec(f.data(), k));
    for (std::size_t a = 0; a < d; ++a) total += zi[d + a] * f[d + a];
  }
  return vfp_scale(model) * w * total;
}

Jet variation_G(const ModelSpec& model, const EmpiricalMeasure& mu, ConstVec z) {
  require_interacting(model, "variation_G");
  if (z.size() != model.k) throw std::invalid_argument("state has wrong dimension");
  const std::size_t k = model.k;
  const double w = mu.weight();
  Jet jet;
  jet.dim = k;
  if (model.kind == ModelKind::Flocking) {
    const Cutoff chi{model.flocking.radius, model.flocking.width};
    const FlockingSpec& fs = model.flocking;
    for (std::size_t j = 0; j < mu.size(); ++j) {
      const ConstVec zj = mu.atom(j);
      const double y0 = z[0] - zj[0], y1 = z[1] - zj[1];
      const double r = std::hypot(y0, y1);
      const double c = chi.value(r);
      const double dc = chi.derivative(r);
      const double ddc = chi.second_derivative(r);
      if (c == 0.0 && dc == 0.0) continue;
      const double t = z[2] - zj[2];
      const double h = flock_h(fs, t), dh = flock_dh(fs, t), ddh = flock_d2h(fs, t);
      jet.value += w * c * h;
      jet.grad[2] += w * c * dh;
      jet.h(2, 2) += w * c * ddh;
      if (dc != 0.0 && r > 0.0) {
        const double u[2] = {y0 / r, y1 / r};
        for (std::size_t a = 0; a < 2; ++a) {
          jet.grad[a] += w * dc * u[a] * h;
          jet.h(a, 2) += w * dc * u[a] * dh;
          jet.h(2, a) += w * dc * u[a] * dh;
          for (std::size_t b = 0; b < 2; ++b) {
            const double proj = u[a] * u[b];
            const double hxx = ddc * proj + dc / r * ((a == b ? 1.0 : 0.0) - proj);
            jet.h(a, b) += w * hxx * h;
          }
        }
      }
    }
    return jet;
  }

  // InteractingVFP: psi(x, v) = c [ v . F_mu(x) + w sum_j v_j . g(x - x_j) ].
  const std::size_t d = model.d;
  const double scale = vfp_scale(model);
  const GaussianPair g{model.pair.strength, model.pair.range};
  std::array<double, kMaxDim> y{}, gy{};
  for (std::size_t j = 0; j < mu.size(); ++j) {
    const ConstVec zj = mu.atom(j);
    const ConstVec vj = zj.subspan(d, d);
    const ConstVec v = z.subspan(d, d);
    // term 1: v . g(x_j - x)
    for (std::size_t a = 0; a < d; ++a) y[a] = zj[a] - z[a];
    ConstVec yv(y.data(), d);
    double e = g.envelope(yv);
    g.value(yv, MutVec(gy.data(), d));
    for (std::size_t a = 0; a < d; ++a) {
      jet.value += scale * w * v[a] * gy[a];
      jet.grad[d + a] += scale * w * gy[a];
    }
    for (std::size_t b = 0; b < d; ++b) {
      double gx = 0.0;
      for (std::size_t a = 0; a < d; ++a) {
        const double jab = g.jacobian(yv, a, b, e);
        gx -= v[a] * jab;
        // d/dv_a d/dx_b
        jet.h(d + a, b) -= scale * w * jab;
        jet.h(b, d + a) -= scale * w * jab;
      }
      jet.grad[b] += scale * w * gx;
      for (std::size_t c = 0; c < d; ++c) {
        double hx = 0.0;
        for (std::size_t a = 0; a < d; ++a) hx += v[a] * g.second(yv, a, b, c, e);
        jet.h(b, c) += scale * w * hx;
      }
    }
    // term 2: v_j . g(x - x_j)
    for (std::size_t a = 0; a < d; ++a) y[a] = z[a] - zj[a];
    e = g.envelope(yv);
    g.value(yv, MutVec(gy.data(), d));
    for (std::size_t a = 0; a < d; ++a) jet.value += scale * w * vj[a] * gy[a];
    for (std::size_t b = 0; b < d; ++b) {
      double gx = 0.0;
      for (std::size_t a = 0; a < d; ++a) gx += vj[a] * g.jacobian(yv, a, b, e);
      jet.grad[b] += scale * w * gx;
      for (std::size_t c = 0; c < d; ++c) {
        double hx = 0.0;
        for (std::size_t a = 0; a < d; ++a) hx += vj[a] * g.second(yv, a, b, c, e);
        jet.h(b, c) += scale * w * hx;
      }
    }
  }
  return jet;
}

SecondVariation second_variation_G(const ModelSpec& model, ConstVec z1, ConstVec z2) {
  require_interacting(model, "second_variation_G");
  if (z1.size() != model.k || z2.size() != model.k)
    throw std::invalid_argument("state has wrong dimension");
  const std::size_t k = model.k;
  SecondVariation out;
  out.mixed.assign(k * k, 0.0);
  auto m = [&](std::size_t i, std::size_t j) -> double& { return out.mixed[i * k + j]; };
  if (model.kind == ModelKind::Flocking) {
    const Cutoff chi{model.flocking.radius, model.flocking.width};
    const FlockingSpec& fs = model.flocking;
    const double y[2] = {z1[0] - z2[0], z1[1] - z2[1]};
    const double r = std::hypot(y[0], y[1]);
    const double c = chi.value(r), dc = chi.derivative(r), ddc = chi.second_derivative(r);
    const double t = z1[2] - z2[2];
    const double h = flock_h(fs, t), dh = flock_dh(fs, t), ddh = flock_d2h(fs, t);
    out.value = c * h;
    m(2, 2) = -c * ddh;
    if (dc != 0.0 && r > 0.0) {
      const double u[2] = {y[0] / r, y[1] / r};
      for (std::size_t a = 0; a < 2; ++a) {
        m(a, 2) = -dc * u[a] * dh;
        m(2, a) = -dc * u[a] * dh;
        for (std::size_t b = 0; b < 2; ++b) {
          const double proj = u[a] * u[b];
          m(a, b) = -(ddc * proj + dc / r * ((a == b ? 1.0 : 0.0) - proj)) * h;
        }
      }
    }
    return out;
  }
  const std::size_t d = model.d;
  const double scale = vfp_scale(model);
  const GaussianPair g{model.pair.strength, model.pair.range};
  std::array<double, kMaxDim> y12{}, y21{}, gy{};
  for (std::size_t a = 0; a < d; ++a) {
    y12[a] = z2[a] - z1[a];
    y21[a] = z1[a] - z2[a];
  }
  const ConstVec ya(y12.data(), d), yb(y21.data(), d);
  const double ea = g.envelope(ya), eb = g.envelope(yb);
  g.value(ya, MutVec(gy.data(), d));
  for (std::size_t a = 0; a < d; ++a) out.value += scale * z1[d + a] * gy[a];
  g.value(yb, MutVec(gy.data(), d));
  for (std::size_t a = 0; a < d; ++a) out.value += scale * z2[d + a] * gy[a];
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = 0; b < d; ++b) {
      m(d + a, b) = scale * g.jacobian(ya, a, b, ea);
      m(a, d + b) = scale * g.jacobian(yb, b, a, eb);
      double xx = 0.0;
      for (std::size_t c = 0; c < d; ++c)
        xx -= z1[d + c] * g.second(ya, c, a, b, ea) + z2[d + c] * g.second(yb, c, a, b, eb);
      m(a, b) = scale * xx;
    }
  return out;
}

double second_variation_trace(const ModelSpec& model, ConstVec z) {
  const SecondVariation sv = second_variation_G(model, z, z);
  double s = 0.0;
  for (std::size_t i = 0; i < model.k * model.k; ++i) s += model.sigma_sigma_t[i] * sv.mixed[i];
  return s;
}

} // namespace dk
