#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "dk/ensemble.hpp"
#include "dk/integrate.hpp"
#include "dk/models.hpp"
#include "dk/statistics.hpp"
#include "dk/test_function.hpp"

namespace dk {

/// Ito-formula martingale of the interaction functional G along one path and
/// the density of the free law with respect to the interacting law,
///   weight = exp(-M^G - 1/2 [M^G]),   [M^G]_t = int <mu_s, |sigma^T grad dG/dmu|^2> ds.
struct FunctionalTrace {
  std::vector<double> times;
  std::vector<double> G;
  std::vector<double> M;
  std::vector<double> qv;
  std::vector<double> realized_qv;
  std::vector<double> weight;

  std::size_t size() const { return times.size(); }
};

/// Snapshot-at-a-time construction of a FunctionalTrace. With
/// drop_compensator the 1/2 [M^G] term is left out of the weight.
class FunctionalBuilder {
public:
  explicit FunctionalBuilder(const ModelSpec& model, bool drop_compensator = false);

  void add(const Ensemble& snapshot);
  FunctionalTrace finish() &&;
  const FunctionalTrace& trace() const { return trace_; }

private:
  ModelSpec model_;
  bool drop_compensator_;
  FunctionalTrace trace_;
  double last_rate_ = 0.0;
  double last_qv_rate_ = 0.0;
  double integral_ = 0.0;
  std::vector<double> forces_;
};

/// Requires an interacting model; trapezoidal integrals on the trajectory grid.
FunctionalTrace ito_functional_trace(const ModelSpec& model, const Trajectory& traj,
                                     bool drop_compensator = false);

enum class Observable { Laplace, Linear };
std::string to_string(Observable obs);
Observable observable_from_string(const std::string& name);

/// Phi(mu) = exp(-<mu, phi>) or <mu, phi>.
double observable_value(Observable obs, const EmpiricalMeasure& mu, const TestFunction& phi);

inline constexpr double kGirsanovAllowancePerDt = 2.0;

struct ReweightingResult {
  MCEstimate weighted; // E_P[weight Phi] over interacting replicas
  MCEstimate free;     // E_Q[Phi] over free replicas
  MCEstimate mean_weight;
  double ess = 0.0;
  double allowance = 0.0;
  double z = 0.0;
  bool pass = false;
  double weight_z = 0.0;
  bool weight_pass = false;
  // Converse direction: E_Q[Phi / weight] against E_P[Phi].
  MCEstimate converse_weighted;
  MCEstimate interacting;
  double converse_z = 0.0;
  bool converse_pass = false;
  // Predicted against realized quadratic variation of M^G at t.
  double qv_ratio = 0.0;
  double qv_ratio_stderr = 0.0;
  std::string warning;
};

struct ReweightingOptions {
  Observable observable = Observable::Laplace;
  bool drop_compensator = false;
  unsigned workers = 1;
  double allowance_per_dt = kGirsanovAllowancePerDt;
};

/// model_free must be model_interacting.without_interaction().
ReweightingResult reweighting_check(const ModelSpec& model_interacting, const ModelSpec& model_free,
                                    const Ensemble& mu0, const TestFunction& phi, double t,
                                    std::size_t replicas, double dt, std::uint64_t seed,
                                    const ReweightingOptions& options = {});

/// Columns: time, G, M, QV, weight.
void write_trace_csv(std::ostream& out, const FunctionalTrace& trace);

} // namespace dk
