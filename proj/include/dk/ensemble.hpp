#pragma once

#include <cstdint>
#include <vector>

#include "dk/types.hpp"

namespace dk {

/// n particle states in R^k carrying weight 1/alpha each.
struct Ensemble {
  std::size_t k = 0;
  double alpha = 1.0;
  double time = 0.0;
  std::vector<double> coords; // n * k, particle-major
  std::vector<std::uint64_t> ids; // identity used to key noise streams

  Ensemble() = default;
  Ensemble(std::size_t dim, double alpha_, std::vector<double> flat_coords);

  static Ensemble from_atoms(const std::vector<std::vector<double>>& atoms, std::size_t dim,
                             double alpha);

  std::size_t size() const { return k == 0 ? 0 : coords.size() / k; }
  bool empty() const { return coords.empty(); }
  ConstVec particle(std::size_t i) const { return {coords.data() + i * k, k}; }
  MutVec particle(std::size_t i) { return {coords.data() + i * k, k}; }

  /// Throws if alpha <= 0, coordinates are non-finite or shapes disagree.
  void validate() const;
};

/// Atomic measure (1/alpha) sum_i delta_{z_i}; a non-owning view.
class EmpiricalMeasure {
public:
  EmpiricalMeasure(ConstVec atoms, std::size_t dim, double alpha);
  explicit EmpiricalMeasure(const Ensemble& ens)
      : EmpiricalMeasure(ens.coords, ens.k, ens.alpha) {}

  std::size_t size() const { return n_; }
  std::size_t dim() const { return k_; }
  double alpha() const { return alpha_; }
  double weight() const { return 1.0 / alpha_; }
  ConstVec atom(std::size_t i) const { return atoms_.subspan(i * k_, k_); }
  ConstVec atoms() const { return atoms_; }

private:
  ConstVec atoms_;
  std::size_t k_;
  std::size_t n_;
  double alpha_;
};

} // namespace dk
