#pragma once

#include <variant>
#include <vector>

#include "dk/ensemble.hpp"
#include "dk/models.hpp"
#include "dk/test_function.hpp"

namespace dk {

/// Closed Euclidean ball.
struct Ball {
  std::vector<double> center;
  double radius = 1.0;
  bool contains(ConstVec z) const;
};

/// Closed axis-aligned box.
struct Box {
  std::vector<double> lower;
  std::vector<double> upper;
  bool contains(ConstVec z) const;
};

using ProbeSet = std::variant<Ball, Box>;

bool contains(const ProbeSet& set, ConstVec z);
/// Distance from z to the boundary of the set.
double boundary_distance(const ProbeSet& set, ConstVec z);
std::size_t probe_set_dim(const ProbeSet& set);

/// <mu, phi> = (1/alpha) sum_i phi(z_i).
double pair(const EmpiricalMeasure& mu, const TestFunction& phi);
double mass(const EmpiricalMeasure& mu);
/// Number of atoms inside A (exact integer); set_mass = count / alpha.
std::size_t set_count(const EmpiricalMeasure& mu, const ProbeSet& set);
double set_mass(const EmpiricalMeasure& mu, const ProbeSet& set);
/// <mu, |z|^2>
double second_moment(const EmpiricalMeasure& mu);

/// Constants entering the second-moment bound.
struct GrowthConstants {
  double drift = 0.0;    // K_b: z . b(z) <= K_b (1 + |z|^2)
  double diffusion = 0.0; // |sigma|_F
  double force = 0.0;    // K_F = sup |F_mu| over measures of the given mass
  double K = 0.0;        // max(K_b, |sigma|_F)
  double c = 0.0;        // 2 alpha K + alpha K^2 + K_F
};

/// Throws std::invalid_argument for models with unbounded coefficients
/// (double-well override).
GrowthConstants growth_constants(const ModelSpec& model, double total_mass);

/// (<mu0, 1 + e2> + c t) e^{c t}.
double gronwall_bound(const ModelSpec& model, const EmpiricalMeasure& mu0, double t);

/// Largest singular value of a small row-major matrix.
double spectral_norm(std::span<const double> a, std::size_t rows, std::size_t cols);

} // namespace dk
