#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "dk/ensemble.hpp"
#include "dk/integrate.hpp"
#include "dk/measure.hpp"
#include "dk/models.hpp"
#include "dk/statistics.hpp"
#include "dk/test_function.hpp"

namespace dk {

/// A bounded measurable function with a stated bound sup |f| <= bound.
struct BoundedFunction {
  std::function<double(ConstVec)> f;
  double bound = 1.0;
  bool constant = false; // f takes the single value f(anything)

  static BoundedFunction from(const TestFunction& phi);
  static BoundedFunction indicator(const ProbeSet& set);
  static BoundedFunction one();
};

/// P_t f(z) = E f(X_t^z) by Monte Carlo over the bare L-diffusion.
struct SemigroupEstimate {
  double value = 0.0;
  double std_error = 0.0;
  std::size_t n_inner = 0;
  double dt = 0.0;
};

/// Inner samples are reduced in fixed chunks, so the result does not depend on
/// `workers`. `stream` separates independent estimates sharing one seed.
SemigroupEstimate semigroup_mc(const ModelSpec& model, const BoundedFunction& f, ConstVec z,
                               double t, std::size_t n_inner, double dt, std::uint64_t seed,
                               std::uint64_t stream = 0, unsigned workers = 1);

struct ColeHopfEstimate {
  double value = 0.0;
  double std_error = 0.0; // delta method through -alpha ln
  SemigroupEstimate inner;
};

/// V_t phi(z) = -alpha ln P_{alpha t} e^{-phi/alpha}; the diffusion runs to time
/// alpha t with step alpha dt. Throws NumericalError if the inner mean is not
/// positive.
ColeHopfEstimate cole_hopf(const ModelSpec& model, const TestFunction& phi, ConstVec z,
                           double t, double alpha, std::size_t n_inner, double dt,
                           std::uint64_t seed, std::uint64_t stream = 0, unsigned workers = 1);

/// Weak-error allowance of laplace_check: allowance_per_dt * dt.
inline constexpr double kLaplaceAllowancePerDt = 2.0;

struct LaplaceResult {
  MCEstimate lhs;
  MCEstimate rhs;
  std::vector<ColeHopfEstimate> per_atom;
  double allowance = 0.0;
  double z = 0.0;
  bool pass = false;
};

/// E exp(-<mu_t, phi>) from particle replicas against exp(-<mu_0, V_t phi>).
/// Rejects interacting models.
LaplaceResult laplace_check(const ModelSpec& model, const Ensemble& mu0, const TestFunction& phi,
                            double t, std::size_t outer_replicas, std::size_t inner_samples,
                            double dt, std::uint64_t seed, unsigned workers = 1,
                            Scheme scheme = Scheme::EulerMaruyama);

struct MgfRow {
  double lambda = 0.0;
  MCEstimate lhs;
  MCEstimate rhs;
  double z = 0.0;
  bool pass = false;
  // Independence factorization: joint mean against product of per-atom means.
  bool has_factorization = false;
  MCEstimate factor_product;
  double factor_z = 0.0;
  bool factor_pass = false;
};

struct MgfReport {
  std::vector<MgfRow> rows;
  std::vector<SemigroupEstimate> hit_probabilities; // P_{alpha t} 1_A(z_i)
  std::size_t replicas = 0;
  bool integrality_exact = true; // alpha mu_t(A) is an integer on every replica
  std::size_t max_count = 0;
  bool pass() const;
};

/// lhs(lambda) = E exp(-lambda alpha mu_t(A)) against
/// prod_i (1 + (e^{-lambda} - 1) P_{alpha t} 1_A(z_i)). Rejects lambda < 0 and
/// interacting models.
MgfReport mgf_identity(const ModelSpec& model, const Ensemble& mu0, const ProbeSet& set, double t,
                       const std::vector<double>& lambdas, std::size_t replicas,
                       std::size_t inner_samples, double dt, std::uint64_t seed,
                       unsigned workers = 1);

struct ExhaustionResult {
  std::vector<SemigroupEstimate> per_point;
  std::size_t argmax = 0;
  SemigroupEstimate sup;
  double sigmas_below_one = 0.0; // (1 - sup) / stderr
};

/// max over the probe grid of P_t 1_{B(0, r)}(z).
ExhaustionResult exhaustion_probe(const ModelSpec& model, double r, double t,
                                  const std::vector<std::vector<double>>& grid,
                                  std::size_t n_inner, double dt, std::uint64_t seed,
                                  unsigned workers = 1);

} // namespace dk
