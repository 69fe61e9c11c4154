#include "dk/duality.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "dk/parallel.hpp"

namespace dk {

namespace {

constexpr std::size_t kChunks = 64;

void require_free(const ModelSpec& model, const char* op) {
  if (model.interacting())
    throw std::invalid_argument(std::string(op) + " is only defined for models with F = 0");
}

void require_positive_time(double t, double dt) {
  if (!(t >= 0.0) || !std::isfinite(t)) throw std::invalid_argument("t must be >= 0");
  if (t > 0.0 && !(dt > 0.0)) throw std::invalid_argument("dt must be positive");
}

} // namespace

BoundedFunction BoundedFunction::from(const TestFunction& phi) {
  return {[phi](ConstVec z) { return phi.value(z); }, phi.sup_norm(), phi.is_constant()};
}

BoundedFunction BoundedFunction::indicator(const ProbeSet& set) {
  return {[set](ConstVec z) { return contains(set, z) ? 1.0 : 0.0; }, 1.0, false};
}

BoundedFunction BoundedFunction::one() {
  return {[](ConstVec) { return 1.0; }, 1.0, true};
}

SemigroupEstimate semigroup_mc(const ModelSpec& model, const BoundedFunction& f, ConstVec z,
                               double t, std::size_t n_inner, double dt, std::uint64_t seed,
                               std::uint64_t stream, unsigned workers) {
  if (z.size() != model.k) throw std::invalid_argument("semigroup_mc: z has wrong dimension");
  require_positive_time(t, dt);
  SemigroupEstimate out;
  out.n_inner = n_inner;
  out.dt = dt;
  if (t == 0.0 || f.constant) {
    out.value = f.f(z);
    return out;
  }
  if (n_inner < 2) throw std::invalid_argument("semigroup_mc needs at least 2 inner samples");
  const std::size_t chunks = std::min(kChunks, n_inner);
  std::vector<StreamingMoments> partial(chunks);
  parallel_for(chunks, workers, [&](std::size_t c) {
    const std::size_t lo = n_inner * c / chunks, hi = n_inner * (c + 1) / chunks;
    std::array<double, kMaxDim> x{};
    for (std::size_t i = lo; i < hi; ++i) {
      const NoiseStream noise(seed, i, StreamPurpose::LDiffusion);
      l_diffusion_endpoint(model, z, t, dt, noise, stream, MutVec(x.data(), model.k));
      partial[c].push(f.f(ConstVec(x.data(), model.k)));
    }
  });
  StreamingMoments all;
  for (const auto& p : partial) all.merge(p);
  const MCEstimate est = all.estimate();
  out.value = est.mean;
  out.std_error = est.std_error;
  return out;
}

ColeHopfEstimate cole_hopf(const ModelSpec& model, const TestFunction& phi, ConstVec z, double t,
                           double alpha, std::size_t n_inner, double dt, std::uint64_t seed,
                           std::uint64_t stream, unsigned workers) {
  if (!(alpha > 0.0)) throw std::invalid_argument("cole_hopf: alpha must be positive");
  if (!phi.nonnegative()) throw std::invalid_argument("cole_hopf: phi must be nonnegative");
  require_positive_time(t, dt);
  ColeHopfEstimate out;
  if (t == 0.0 || phi.is_constant()) {
    out.value = phi.value(z);
    out.inner.value = std::exp(-out.value / alpha);
    out.inner.n_inner = n_inner;
    out.inner.dt = dt;
    return out;
  }
  const BoundedFunction g{[&phi, alpha](ConstVec x) { return std::exp(-phi.value(x) / alpha); },
                          1.0, false};
  out.inner = semigroup_mc(model, g, z, alpha * t, n_inner, alpha * dt, seed, stream, workers);
  if (!(out.inner.value > 0.0)) {
    std::ostringstream os;
    os << "cole_hopf: inner estimate " << out.inner.value << " is not positive";
    throw NumericalError(os.str(), stream, 0);
  }
  out.value = -alpha * std::log(out.inner.value);
  out.std_error = alpha * out.inner.std_error / out.inner.value;
  return out;
}

namespace {

// Runs one particle replica of a free model to time t and returns the endpoint.
Ensemble run_to(const ModelSpec& model, const Ensemble& mu0, double t, double dt,
                std::uint64_t seed, std::uint64_t replica, Scheme scheme) {
  Ensemble ens = mu0;
  if (t == 0.0) return ens;
  const std::size_t steps = step_count(t, dt);
  const NoiseStream noise(seed, replica, StreamPurpose::Particles);
  for (std::size_t s = 0; s < steps; ++s) advance(model, ens, dt, scheme, noise, s);
  return ens;
}

// Per-replica values reduced in fixed chunks so any worker count gives the same sums.
template <typename Fn>
std::vector<StreamingMoments> replica_moments(std::size_t replicas, std::size_t outputs,
                                              unsigned workers, Fn&& fn) {
  const std::size_t chunks = std::max<std::size_t>(1, std::min(kChunks, replicas));
  std::vector<std::vector<StreamingMoments>> partial(chunks,
                                                     std::vector<StreamingMoments>(outputs));
  parallel_for(chunks, workers, [&](std::size_t c) {
    const std::size_t lo = replicas * c / chunks, hi = replicas * (c + 1) / chunks;
    std::vector<double> vals(outputs);
    for (std::size_t r = lo; r < hi; ++r) {
      fn(r, vals);
      for (std::size_t o = 0; o < outputs; ++o) partial[c][o].push(vals[o]);
    }
  });
  std::vector<StreamingMoments> all(outputs);
  for (const auto& p : partial)
    for (std::size_t o = 0; o < outputs; ++o) all[o].merge(p[o]);
  return all;
}

MCEstimate safe_estimate(const StreamingMoments& sm) {
  if (sm.count() >= 2) return sm.estimate();
  return {sm.mean(), 0.0, sm.count()};
}

} // namespace

LaplaceResult laplace_check(const ModelSpec& model, const Ensemble& mu0, const TestFunction& phi,
                            double t, std::size_t outer_replicas, std::size_t inner_samples,
                            double dt, std::uint64_t seed, unsigned workers, Scheme scheme) {
  require_free(model, "laplace_check");
  if (mu0.k != model.k || mu0.alpha != model.alpha)
    throw std::invalid_argument("laplace_check: initial ensemble does not match model");
  if (!phi.nonnegative()) throw std::invalid_argument("laplace_check: phi must be nonnegative");
  require_positive_time(t, dt);
  LaplaceResult res;
  res.allowance = t == 0.0 ? 0.0 : kLaplaceAllowancePerDt * dt;

  if (t == 0.0) {
    const double v = std::exp(-pair(EmpiricalMeasure(mu0), phi));
    res.lhs = {v, 0.0, outer_replicas};
    res.rhs = {v, 0.0, inner_samples};
    res.pass = true;
    return res;
  }

  const auto moments = replica_moments(outer_replicas, 1, workers, [&](std::size_t r, auto& out) {
    const Ensemble end = run_to(model, mu0, t, dt, seed, r, scheme);
    out[0] = std::exp(-pair(EmpiricalMeasure(end), phi));
  });
  res.lhs = safe_estimate(moments[0]);

  double exponent = 0.0, var = 0.0;
  const double w = 1.0 / model.alpha;
  for (std::size_t i = 0; i < mu0.size(); ++i) {
    auto v = cole_hopf(model, phi, mu0.particle(i), t, model.alpha, inner_samples, dt, seed,
                       mu0.ids[i], workers);
    exponent += w * v.value;
    var += w * w * v.std_error * v.std_error;
    res.per_atom.push_back(v);
  }
  res.rhs = delta_method_exp({-exponent, std::sqrt(var), inner_samples});
  const double se = combined_stderr(res.lhs.std_error, res.rhs.std_error);
  const double diff = res.lhs.mean - res.rhs.mean;
  res.z = z_score(res.lhs.mean, res.lhs.std_error, res.rhs.mean, res.rhs.std_error);
  res.pass = std::abs(diff) <= kSigmaThreshold * se + res.allowance;
  return res;
}

bool MgfReport::pass() const {
  if (!integrality_exact) return false;
  for (const auto& r : rows)
    if (!r.pass || (r.has_factorization && !r.factor_pass)) return false;
  return true;
}

MgfReport mgf_identity(const ModelSpec& model, const Ensemble& mu0, const ProbeSet& set, double t,
                       const std::vector<double>& lambdas, std::size_t replicas,
                       std::size_t inner_samples, double dt, std::uint64_t seed,
                       unsigned workers) {
  require_free(model, "mgf_identity");
  if (mu0.k != model.k || mu0.alpha != model.alpha)
    throw std::invalid_argument("mgf_identity: initial ensemble does not match model");
  if (probe_set_dim(set) != model.k) throw std::invalid_argument("mgf_identity: probe set dimension");
  for (double lam : lambdas)
    if (!(lam >= 0.0) || !std::isfinite(lam))
      throw std::invalid_argument("mgf_identity: lambda must be >= 0");
  require_positive_time(t, dt);

  const std::size_t n = mu0.size(), L = lambdas.size();
  const bool factor = n >= 2;
  MgfReport rep;
  rep.replicas = replicas;

  // Outputs per replica: joint value per lambda, then per-atom factor per lambda.
  const std::size_t outputs = L + (factor ? L * n : 0);
  std::vector<unsigned char> integral(replicas, 1);
  std::vector<std::size_t> counts(replicas, 0);
  const auto moments = replica_moments(replicas, outputs, workers, [&](std::size_t r, auto& out) {
    const Ensemble end = run_to(model, mu0, t, dt, seed, r, Scheme::EulerMaruyama);
    const EmpiricalMeasure mu(end);
    const double scaled = model.alpha * set_mass(mu, set);
    const std::size_t count = set_count(mu, set);
    integral[r] = scaled == std::round(scaled) && scaled == static_cast<double>(count);
    counts[r] = count;
    for (std::size_t j = 0; j < L; ++j) out[j] = std::exp(-lambdas[j] * scaled);
    if (factor)
      for (std::size_t i = 0; i < n; ++i) {
        const bool hit = contains(set, end.particle(i));
        for (std::size_t j = 0; j < L; ++j) out[L + i * L + j] = hit ? std::exp(-lambdas[j]) : 1.0;
      }
  });
  for (std::size_t r = 0; r < replicas; ++r) {
    rep.integrality_exact = rep.integrality_exact && integral[r];
    rep.max_count = std::max(rep.max_count, counts[r]);
  }

  const BoundedFunction ind = BoundedFunction::indicator(set);
  for (std::size_t i = 0; i < n; ++i)
    rep.hit_probabilities.push_back(semigroup_mc(model, ind, mu0.particle(i), model.alpha * t,
                                                 inner_samples, model.alpha * dt, seed,
                                                 mu0.ids[i], workers));

  for (std::size_t j = 0; j < L; ++j) {
    MgfRow row;
    row.lambda = lambdas[j];
    row.lhs = safe_estimate(moments[j]);
    const double s = std::exp(-lambdas[j]);
    double log_rhs = 0.0, var = 0.0;
    for (const auto& p : rep.hit_probabilities) {
      const double base = 1.0 + (s - 1.0) * p.value;
      if (!(base > 0.0)) throw NumericalError("mgf_identity: non-positive factor", 0, 0);
      log_rhs += std::log(base);
      const double g = (s - 1.0) / base;
      var += g * g * p.std_error * p.std_error;
    }
    row.rhs = delta_method_exp({log_rhs, std::sqrt(var), inner_samples});
    row.z = z_score(row.lhs.mean, row.lhs.std_error, row.rhs.mean, row.rhs.std_error);
    row.pass = std::abs(row.z) <= kSigmaThreshold;
    if (factor) {
      double prod = 1.0;
      std::vector<MCEstimate> f(n);
      for (std::size_t i = 0; i < n; ++i) {
        f[i] = safe_estimate(moments[L + i * L + j]);
        prod *= f[i].mean;
      }
      double pvar = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (f[i].mean == 0.0) continue;
        const double rel = prod / f[i].mean * f[i].std_error;
        pvar += rel * rel;
      }
      row.has_factorization = true;
      row.factor_product = {prod, std::sqrt(pvar), replicas};
      row.factor_z = z_score(row.lhs.mean, row.lhs.std_error, prod, std::sqrt(pvar));
      row.factor_pass = std::abs(row.factor_z) <= kSigmaThreshold;
    }
    rep.rows.push_back(row);
  }
  return rep;
}

ExhaustionResult exhaustion_probe(const ModelSpec& model, double r, double t,
                                  const std::vector<std::vector<double>>& grid,
                                  std::size_t n_inner, double dt, std::uint64_t seed,
                                  unsigned workers) {
  if (!(t > 0.0)) throw std::invalid_argument("exhaustion_probe: t must be positive");
  if (!(r >= 0.0)) throw std::invalid_argument("exhaustion_probe: r must be >= 0");
  if (grid.empty()) throw std::invalid_argument("exhaustion_probe: empty probe grid");
  const BoundedFunction ind =
      BoundedFunction::indicator(Ball{std::vector<double>(model.k, 0.0), r});
  ExhaustionResult res;
  res.per_point.resize(grid.size());
  for (std::size_t p = 0; p < grid.size(); ++p)
    res.per_point[p] = semigroup_mc(model, ind, grid[p], t, n_inner, dt, seed, p, workers);
  for (std::size_t p = 1; p < grid.size(); ++p)
    if (res.per_point[p].value > res.per_point[res.argmax].value) res.argmax = p;
  res.sup = res.per_point[res.argmax];
  res.sigmas_below_one = res.sup.std_error > 0.0 ? (1.0 - res.sup.value) / res.sup.std_error
                                                 : (res.sup.value < 1.0 ? INFINITY : 0.0);
  return res;
}

} // namespace dk
