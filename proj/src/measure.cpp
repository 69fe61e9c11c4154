#include "dk/measure.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dk {

bool Ball::contains(ConstVec z) const {
  double r2 = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double d = z[i] - center[i];
    r2 += d * d;
  }
  return r2 <= radius * radius;
}

bool Box::contains(ConstVec z) const {
  for (std::size_t i = 0; i < z.size(); ++i)
    if (z[i] < lower[i] || z[i] > upper[i]) return false;
  return true;
}

bool contains(const ProbeSet& set, ConstVec z) {
  return std::visit([&](const auto& s) { return s.contains(z); }, set);
}

std::size_t probe_set_dim(const ProbeSet& set) {
  if (const auto* b = std::get_if<Ball>(&set)) return b->center.size();
  return std::get<Box>(set).lower.size();
}

double boundary_distance(const ProbeSet& set, ConstVec z) {
  if (const auto* b = std::get_if<Ball>(&set)) {
    double r2 = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) r2 += (z[i] - b->center[i]) * (z[i] - b->center[i]);
    return std::abs(std::sqrt(r2) - b->radius);
  }
  const Box& box = std::get<Box>(set);
  double best = INFINITY;
  for (std::size_t i = 0; i < z.size(); ++i)
    best = std::min({best, std::abs(z[i] - box.lower[i]), std::abs(z[i] - box.upper[i])});
  return best;
}

double pair(const EmpiricalMeasure& mu, const TestFunction& phi) {
  if (mu.size() > 0 && phi.dim() != mu.dim())
    throw std::invalid_argument("pair: test function dimension differs from measure");
  double s = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) s += phi.value(mu.atom(i));
  return s * mu.weight();
}

double mass(const EmpiricalMeasure& mu) { return static_cast<double>(mu.size()) * mu.weight(); }

std::size_t set_count(const EmpiricalMeasure& mu, const ProbeSet& set) {
  std::size_t c = 0;
  for (std::size_t i = 0; i < mu.size(); ++i)
    if (contains(set, mu.atom(i))) ++c;
  return c;
}

double set_mass(const EmpiricalMeasure& mu, const ProbeSet& set) {
  return static_cast<double>(set_count(mu, set)) * mu.weight();
}

double second_moment(const EmpiricalMeasure& mu) {
  double s = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) s += squared_norm(mu.atom(i));
  return s * mu.weight();
}

double spectral_norm(std::span<const double> a, std::size_t rows, std::size_t cols) {
  // Largest eigenvalue of A^T A by cyclic Jacobi; matrices here are tiny.
  std::vector<double> m(cols * cols, 0.0);
  for (std::size_t i = 0; i < cols; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      for (std::size_t r = 0; r < rows; ++r) m[i * cols + j] += a[r * cols + i] * a[r * cols + j];
  const std::size_t n = cols;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += m[p * n + q] * m[p * n + q];
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = m[p * n + q];
        if (std::abs(apq) < 1e-300) continue;
        const double theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
        const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (std::size_t r = 0; r < n; ++r) {
          const double mrp = m[r * n + p], mrq = m[r * n + q];
          m[r * n + p] = c * mrp - s * mrq;
          m[r * n + q] = s * mrp + c * mrq;
        }
        for (std::size_t r = 0; r < n; ++r) {
          const double mpr = m[p * n + r], mqr = m[q * n + r];
          m[p * n + r] = c * mpr - s * mqr;
          m[q * n + r] = s * mpr + c * mqr;
        }
      }
  }
  double best = 0.0;
  for (std::size_t i = 0; i < n; ++i) best = std::max(best, m[i * n + i]);
  return std::sqrt(best);
}

GrowthConstants growth_constants(const ModelSpec& model, double total_mass) {
  GrowthConstants g;
  double sigma2 = 0.0;
  for (double s : model.sigma) sigma2 += s * s;
  g.diffusion = std::sqrt(sigma2);
  switch (model.kind) {
  case ModelKind::InertialLangevin:
  case ModelKind::InteractingVFP: {
    if (!model.potential.has_bounded_hessian())
      throw std::invalid_argument("gronwall_bound: potential with unbounded Hessian is not covered");
    const double kappa =
        model.potential.kind == PotentialSpec::Kind::Quadratic ? model.potential.stiffness : 0.0;
    // Per-coordinate block [[0, 1], [-kappa, -gamma]] of the linear drift.
    const double block[4] = {0.0, 1.0, -kappa, -model.gamma};
    g.drift = spectral_norm(block, 2, 2);
    break;
  }
  case ModelKind::ActiveMatter:
  case ModelKind::Flocking:
    // |b| <= speed, so z . b <= speed |z| <= speed/2 (1 + |z|^2).
    g.drift = 0.5 * std::abs(model.speed);
    break;
  case ModelKind::LinearOU:
    g.drift = spectral_norm(model.drift_matrix, model.k, model.k);
    break;
  }
  if (model.kind == ModelKind::InteractingVFP) {
    // sup_y |y| e^{-|y|^2/(2 l^2)} = l e^{-1/2}
    g.force = total_mass * std::abs(model.pair.strength) * model.pair.range * std::exp(-0.5);
  } else if (model.kind == ModelKind::Flocking) {
    g.force = total_mass * std::abs(model.flocking.coupling);
  }
  g.K = std::max(g.drift, g.diffusion);
  g.c = 2.0 * model.alpha * g.K + model.alpha * g.K * g.K + g.force;
  return g;
}

double gronwall_bound(const ModelSpec& model, const EmpiricalMeasure& mu0, double t) {
  if (!(t >= 0.0)) throw std::invalid_argument("gronwall_bound: t must be >= 0");
  const GrowthConstants g = growth_constants(model, mass(mu0));
  const double start = mass(mu0) + second_moment(mu0);
  return (start + g.c * t) * std::exp(g.c * t);
}

} // namespace dk
