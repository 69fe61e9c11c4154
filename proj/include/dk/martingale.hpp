#pragma once

#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "dk/integrate.hpp"
#include "dk/models.hpp"
#include "dk/statistics.hpp"
#include "dk/test_function.hpp"

namespace dk {

/// M_t(phi) = <mu_t, phi> - int_0^t <mu_s, alpha L phi + F_mu . grad phi> ds on
/// the simulation grid, with the predicted quadratic variation
/// int_0^t <mu_s, |sigma^T grad phi|^2> ds and the realized sum of squared
/// grid increments.
struct MartingaleTrace {
  std::vector<double> times;
  std::vector<double> values;
  std::vector<double> predicted_qv;
  std::vector<double> realized_qv;
  double grid_dt = 0.0;      // step of the simulation grid the trace was built on
  bool uniform_grid = true;

  std::size_t size() const { return times.size(); }
  double dt() const { return grid_dt; }
  /// Index of the stored time equal to t (within 1e-9 relative); throws otherwise.
  std::size_t index_of(double t) const;
};

/// Keeps only the points at the given times; running sums are unchanged, so
/// the thinned trace answers increment_test and qv_test at those times.
MartingaleTrace thin(const MartingaleTrace& trace, std::span<const double> keep_times);

/// Time integrals use the trapezoidal rule on the trajectory grid.
MartingaleTrace martingale_statistic(const ModelSpec& model, const Trajectory& traj,
                                     const TestFunction& phi);

/// Incremental form of martingale_statistic fed one snapshot at a time, so
/// replica loops need not keep the whole trajectory.
class MartingaleBuilder {
public:
  MartingaleBuilder(const ModelSpec& model, TestFunction phi);

  void add(const Ensemble& snapshot);
  /// Throws if fewer than 2 snapshots were added.
  MartingaleTrace finish() &&;
  const MartingaleTrace& trace() const { return trace_; }

private:
  ModelSpec model_;
  TestFunction phi_;
  MartingaleTrace trace_;
  double last_drift_ = 0.0;
  double last_qv_rate_ = 0.0;
  double drift_integral_ = 0.0;
  std::vector<double> forces_;
};

struct TestEntry {
  std::string label;
  double statistic = 0.0; // z-score or ratio
  double std_error = 0.0;
  double lower = 0.0;     // pass band
  double upper = 0.0;
  bool pass = false;
  bool degenerate = false;
  std::string note;
};

struct TestReport {
  std::vector<TestEntry> entries;
  bool pass() const;
};

inline constexpr std::size_t kMinReplicas = 100;
/// Discretization allowance of qv_test: delta(dt) = C dt.
inline constexpr double kQvDiscretizationConstant = 10.0;

/// z-score of mean(M_t - M_s) for every checkpoint pair s < t; pass iff |z| <= 3.
TestReport increment_test(std::span<const MartingaleTrace> replicas,
                          std::span<const double> checkpoints);

/// rho = mean(realized_qv(t)) / mean(predicted_qv(t)); pass iff
/// |rho - 1| <= C dt + 3 stderr(rho).
TestReport qv_test(std::span<const MartingaleTrace> replicas, double t,
                   double discretization_constant = kQvDiscretizationConstant);

/// Columns: time, M, predicted_qv, realized_qv.
void write_trace_csv(std::ostream& out, const MartingaleTrace& trace);

} // namespace dk
