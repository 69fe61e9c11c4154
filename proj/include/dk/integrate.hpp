#pragma once

#include <cstdint>
#include <vector>

#include "dk/ensemble.hpp"
#include "dk/models.hpp"
#include "dk/rng.hpp"

namespace dk {

enum class Scheme { EulerMaruyama, KineticSplit };

std::string to_string(Scheme scheme);
Scheme scheme_from_string(const std::string& name);

/// Snapshots of one replica on a uniform grid t_j = j dt.
struct Trajectory {
  std::vector<double> times;
  std::vector<Ensemble> snapshots;
  double dt = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t replica = 0;
  Scheme scheme = Scheme::EulerMaruyama;

  std::size_t size() const { return times.size(); }
};

/// Number of steps for [0, t_end] at step dt; throws unless dt divides t_end
/// up to rounding.
std::size_t step_count(double t_end, double dt);

/// One explicit Euler-Maruyama step of the particle SDE
///   z <- z + [alpha b(z) + F_mu(z)] dt + sqrt(alpha dt) sigma(z) xi,
/// with F evaluated on the pre-step ensemble. `step` keys the noise.
Ensemble em_step(const ModelSpec& model, const Ensemble& ens, double dt,
                 const NoiseStream& noise, std::uint64_t step);
/// Same step with explicit standard normals xi (n x l, particle-major).
Ensemble em_step(const ModelSpec& model, const Ensemble& ens, double dt, ConstVec xi);

/// BAOAB splitting for kinetic models: half kick, half drift, exact
/// Ornstein-Uhlenbeck velocity update, half drift, half kick.
Ensemble kinetic_split_step(const ModelSpec& model, const Ensemble& ens, double dt,
                            const NoiseStream& noise, std::uint64_t step);
Ensemble kinetic_split_step(const ModelSpec& model, const Ensemble& ens, double dt, ConstVec xi);

/// In-place stepping used by the replica loops.
void advance(const ModelSpec& model, Ensemble& ens, double dt, Scheme scheme,
             const NoiseStream& noise, std::uint64_t step);

/// Full trajectory of ceil(t_end/dt) + 1 snapshots; a deterministic function of
/// (model, ens0, dt, seed, replica).
Trajectory simulate(const ModelSpec& model, const Ensemble& ens0, double t_end, double dt,
                    std::uint64_t seed, std::uint64_t replica = 0,
                    Scheme scheme = Scheme::EulerMaruyama);

/// Endpoint of the bare L-diffusion dz = b dt + sigma dW (alpha = 1, F = 0)
/// started at z0 and run to time t with ceil(t/dt) Euler steps.
void l_diffusion_endpoint(const ModelSpec& model, ConstVec z0, double t, double dt,
                          const NoiseStream& noise, std::uint64_t stream, MutVec out);

/// n_samples independent draws of X_t^{z0}. Sample i uses replica i of the
/// L-diffusion stream; `stream` separates independent estimates sharing a seed.
std::vector<std::vector<double>> sample_l_diffusion(const ModelSpec& model, ConstVec z0,
                                                    double t, std::size_t n_samples, double dt,
                                                    std::uint64_t seed,
                                                    std::uint64_t stream = 0);

} // namespace dk
