#include "dk/integrate.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace dk {

std::string to_string(Scheme scheme) {
  return scheme == Scheme::EulerMaruyama ? "euler" : "split";
}

Scheme scheme_from_string(const std::string& name) {
  if (name == "euler" || name == "euler-maruyama") return Scheme::EulerMaruyama;
  if (name == "split" || name == "kinetic-split") return Scheme::KineticSplit;
  throw std::invalid_argument("unknown integrator scheme '" + name + "'");
}

std::size_t step_count(double t_end, double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("dt must be positive");
  if (!(t_end > 0.0) || !std::isfinite(t_end)) throw std::invalid_argument("t_end must be positive");
  const double ratio = t_end / dt;
  const double rounded = std::round(ratio);
  if (std::abs(ratio - rounded) > 1e-6 * std::max(1.0, ratio))
    throw std::invalid_argument("dt does not divide t_end");
  return static_cast<std::size_t>(rounded);
}

namespace {

void check_step_inputs(const ModelSpec& model, const Ensemble& ens, double dt) {
  if (!(dt >= 0.0) || !std::isfinite(dt)) throw std::invalid_argument("dt must be >= 0");
  if (ens.k != model.k) throw std::invalid_argument("ensemble dimension differs from model");
  if (ens.alpha != model.alpha)
    throw std::invalid_argument("ensemble alpha differs from model alpha");
}

void check_finite_after(const Ensemble& ens, std::uint64_t replica, std::uint64_t step) {
  if (!all_finite(ens.coords)) {
    std::ostringstream os;
    os << "non-finite state after step " << step << " (replica " << replica << ")";
    throw NumericalError(os.str(), replica, step);
  }
}

// Fills xi (l values) for particle slot i.
template <typename NoiseFn>
void euler_step(const ModelSpec& model, Ensemble& ens, double dt, NoiseFn&& noise_for) {
  const std::size_t n = ens.size(), k = model.k, l = model.l;
  std::vector<double> forces;
  if (model.interacting() && n > 0) {
    forces.assign(n * k, 0.0);
    interaction_forces_at_atoms(model, EmpiricalMeasure(ens), forces);
  }
  const double a = model.alpha;
  const double noise_scale = std::sqrt(a * dt);
  std::array<double, kMaxDim> b{}, xi{};
  for (std::size_t i = 0; i < n; ++i) {
    MutVec z = ens.particle(i);
    drift_into(model, z, MutVec(b.data(), k));
    noise_for(i, MutVec(xi.data(), l));
    for (std::size_t r = 0; r < k; ++r) {
      double inc = a * b[r];
      if (!forces.empty()) inc += forces[i * k + r];
      double sx = 0.0;
      for (std::size_t m = 0; m < l; ++m) sx += model.sigma[r * l + m] * xi[m];
      z[r] += inc * dt + noise_scale * sx;
    }
  }
  ens.time += dt;
}

void velocity_kick(const ModelSpec& model, Ensemble& ens, double half_dt) {
  const std::size_t n = ens.size(), k = model.k, d = model.d;
  std::vector<double> forces;
  if (model.interacting() && n > 0) {
    forces.assign(n * k, 0.0);
    interaction_forces_at_atoms(model, EmpiricalMeasure(ens), forces);
  }
  std::array<double, kMaxDim> grad{};
  for (std::size_t i = 0; i < n; ++i) {
    MutVec z = ens.particle(i);
    model.potential.gradient(z.first(d), MutVec(grad.data(), d));
    for (std::size_t a = 0; a < d; ++a) {
      double acc = -model.alpha * grad[a];
      if (!forces.empty()) acc += forces[i * k + d + a];
      z[d + a] += half_dt * acc;
    }
  }
}

void position_drift(const ModelSpec& model, Ensemble& ens, double half_dt) {
  const std::size_t d = model.d;
  for (std::size_t i = 0; i < ens.size(); ++i) {
    MutVec z = ens.particle(i);
    for (std::size_t a = 0; a < d; ++a) z[a] += half_dt * model.alpha * z[d + a];
  }
}

template <typename NoiseFn>
void split_step(const ModelSpec& model, Ensemble& ens, double dt, NoiseFn&& noise_for) {
  if (!model.kinetic)
    throw std::invalid_argument("kinetic_split_step: model " + to_string(model.kind) +
                                " has no position/velocity structure");
  const std::size_t d = model.d, l = model.l;
  const double s = model.sigma_at(d, 0);
  const double c = model.alpha * model.gamma * dt;
  const double decay = std::exp(-c);
  const double spread = model.gamma > 0.0
                            ? s * std::sqrt(-std::expm1(-2.0 * c) / (2.0 * model.gamma))
                            : s * std::sqrt(model.alpha * dt);
  velocity_kick(model, ens, 0.5 * dt);
  position_drift(model, ens, 0.5 * dt);
  std::array<double, kMaxDim> xi{};
  for (std::size_t i = 0; i < ens.size(); ++i) {
    MutVec z = ens.particle(i);
    noise_for(i, MutVec(xi.data(), l));
    for (std::size_t a = 0; a < d; ++a) z[d + a] = decay * z[d + a] + spread * xi[a];
  }
  position_drift(model, ens, 0.5 * dt);
  velocity_kick(model, ens, 0.5 * dt);
  ens.time += dt;
}

auto stream_noise(const NoiseStream& noise, const Ensemble& ens, std::uint64_t step) {
  return [&noise, &ens, step](std::size_t i, MutVec out) {
    noise.gaussians(ens.ids[i], step, out.data(), out.size());
  };
}

auto explicit_noise(ConstVec xi, std::size_t l) {
  return [xi, l](std::size_t i, MutVec out) {
    for (std::size_t m = 0; m < l; ++m) out[m] = xi[i * l + m];
  };
}

} // namespace

Ensemble em_step(const ModelSpec& model, const Ensemble& ens, double dt,
                 const NoiseStream& noise, std::uint64_t step) {
  check_step_inputs(model, ens, dt);
  Ensemble out = ens;
  euler_step(model, out, dt, stream_noise(noise, out, step));
  check_finite_after(out, noise.replica(), step);
  return out;
}

Ensemble em_step(const ModelSpec& model, const Ensemble& ens, double dt, ConstVec xi) {
  check_step_inputs(model, ens, dt);
  if (xi.size() != ens.size() * model.l) throw std::invalid_argument("em_step: noise has wrong size");
  Ensemble out = ens;
  euler_step(model, out, dt, explicit_noise(xi, model.l));
  check_finite_after(out, 0, 0);
  return out;
}

Ensemble kinetic_split_step(const ModelSpec& model, const Ensemble& ens, double dt,
                            const NoiseStream& noise, std::uint64_t step) {
  check_step_inputs(model, ens, dt);
  Ensemble out = ens;
  split_step(model, out, dt, stream_noise(noise, out, step));
  check_finite_after(out, noise.replica(), step);
  return out;
}

Ensemble kinetic_split_step(const ModelSpec& model, const Ensemble& ens, double dt, ConstVec xi) {
  check_step_inputs(model, ens, dt);
  if (xi.size() != ens.size() * model.l)
    throw std::invalid_argument("kinetic_split_step: noise has wrong size");
  Ensemble out = ens;
  split_step(model, out, dt, explicit_noise(xi, model.l));
  check_finite_after(out, 0, 0);
  return out;
}

void advance(const ModelSpec& model, Ensemble& ens, double dt, Scheme scheme,
             const NoiseStream& noise, std::uint64_t step) {
  if (scheme == Scheme::EulerMaruyama)
    euler_step(model, ens, dt, stream_noise(noise, ens, step));
  else
    split_step(model, ens, dt, stream_noise(noise, ens, step));
  check_finite_after(ens, noise.replica(), step);
}

Trajectory simulate(const ModelSpec& model, const Ensemble& ens0, double t_end, double dt,
                    std::uint64_t seed, std::uint64_t replica, Scheme scheme) {
  model.validate();
  ens0.validate();
  check_step_inputs(model, ens0, dt);
  if (scheme == Scheme::KineticSplit && !model.kinetic)
    throw std::invalid_argument("simulate: split scheme needs a kinetic model");
  const std::size_t steps = step_count(t_end, dt);
  Trajectory traj;
  traj.dt = dt;
  traj.seed = seed;
  traj.replica = replica;
  traj.scheme = scheme;
  traj.times.reserve(steps + 1);
  traj.snapshots.reserve(steps + 1);
  const NoiseStream noise(seed, replica, StreamPurpose::Particles);
  Ensemble cur = ens0;
  cur.time = 0.0;
  traj.times.push_back(0.0);
  traj.snapshots.push_back(cur);
  for (std::size_t s = 0; s < steps; ++s) {
    advance(model, cur, dt, scheme, noise, s);
    // Grid times are j * dt exactly rather than accumulated sums.
    cur.time = static_cast<double>(s + 1) * dt;
    traj.times.push_back(cur.time);
    traj.snapshots.push_back(cur);
  }
  return traj;
}

void l_diffusion_endpoint(const ModelSpec& model, ConstVec z0, double t, double dt,
                          const NoiseStream& noise, std::uint64_t stream, MutVec out) {
  const std::size_t k = model.k, l = model.l;
  for (std::size_t i = 0; i < k; ++i) out[i] = z0[i];
  if (t == 0.0) return;
  const std::size_t steps =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(t / dt - 1e-9)));
  const double h = t / static_cast<double>(steps);
  const double sq = std::sqrt(h);
  std::array<double, kMaxDim> b{}, xi{};
  for (std::size_t s = 0; s < steps; ++s) {
    drift_into(model, out, MutVec(b.data(), k));
    noise.gaussians(stream, s, xi.data(), l);
    for (std::size_t r = 0; r < k; ++r) {
      double sx = 0.0;
      for (std::size_t m = 0; m < l; ++m) sx += model.sigma[r * l + m] * xi[m];
      out[r] += b[r] * h + sq * sx;
    }
  }
  if (!all_finite(ConstVec(out.data(), k)))
    throw NumericalError("non-finite L-diffusion sample", noise.replica(), steps);
}

std::vector<std::vector<double>> sample_l_diffusion(const ModelSpec& model, ConstVec z0,
                                                    double t, std::size_t n_samples, double dt,
                                                    std::uint64_t seed, std::uint64_t stream) {
  if (z0.size() != model.k) throw std::invalid_argument("sample_l_diffusion: z0 has wrong dimension");
  if (!(t >= 0.0)) throw std::invalid_argument("sample_l_diffusion: t must be >= 0");
  if (t > 0.0 && !(dt > 0.0)) throw std::invalid_argument("sample_l_diffusion: dt must be positive");
  std::vector<std::vector<double>> out(n_samples, std::vector<double>(model.k));
  for (std::size_t i = 0; i < n_samples; ++i) {
    const NoiseStream noise(seed, i, StreamPurpose::LDiffusion);
    l_diffusion_endpoint(model, z0, t, dt, noise, stream, out[i]);
  }
  return out;
}

} // namespace dk
