#include "dk/martingale.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "dk/csv.hpp"
#include "dk/measure.hpp"

namespace dk {

std::size_t MartingaleTrace::index_of(double t) const {
  const double tol = 1e-9 * std::max({1.0, std::abs(t), grid_dt});
  const auto it = std::lower_bound(times.begin(), times.end(), t - tol);
  if (it != times.end() && std::abs(*it - t) <= tol) return static_cast<std::size_t>(it - times.begin());
  std::ostringstream os;
  os << "time " << t << " is not on the trace grid";
  throw std::invalid_argument(os.str());
}

MartingaleTrace thin(const MartingaleTrace& trace, std::span<const double> keep_times) {
  MartingaleTrace out;
  out.grid_dt = trace.grid_dt;
  out.uniform_grid = trace.uniform_grid;
  std::vector<std::size_t> idx;
  for (double t : keep_times) idx.push_back(trace.index_of(t));
  std::sort(idx.begin(), idx.end());
  idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
  for (std::size_t j : idx) {
    out.times.push_back(trace.times[j]);
    out.values.push_back(trace.values[j]);
    out.predicted_qv.push_back(trace.predicted_qv[j]);
    out.realized_qv.push_back(trace.realized_qv[j]);
  }
  return out;
}

MartingaleBuilder::MartingaleBuilder(const ModelSpec& model, TestFunction phi)
    : model_(model), phi_(std::move(phi)) {
  if (phi_.dim() != model.k) throw std::invalid_argument("test function dimension differs from model");
}

void MartingaleBuilder::add(const Ensemble& snapshot) {
  const std::size_t n = snapshot.size(), k = model_.k;
  const EmpiricalMeasure mu(snapshot);
  const bool interacting = model_.interacting() && n > 0;
  if (interacting) {
    forces_.assign(n * k, 0.0);
    interaction_forces_at_atoms(model_, mu, forces_);
  }
  double pairing = 0.0, drift = 0.0, qv_rate = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ConstVec z = snapshot.particle(i);
    const Jet jet = phi_.evaluate(z);
    pairing += jet.value;
    double rate = model_.alpha * apply_generator(model_, jet, z);
    if (interacting)
      for (std::size_t r = 0; r < k; ++r) rate += forces_[i * k + r] * jet.grad[r];
    drift += rate;
    qv_rate += sigma_t_norm2(model_, ConstVec(jet.grad.data(), k));
  }
  const double w = mu.weight();
  pairing *= w;
  drift *= w;
  qv_rate *= w;

  if (trace_.times.empty()) {
    trace_.times.push_back(snapshot.time);
    trace_.values.push_back(pairing);
    trace_.predicted_qv.push_back(0.0);
    trace_.realized_qv.push_back(0.0);
  } else {
    const double h = snapshot.time - trace_.times.back();
    if (!(h > 0.0)) throw std::invalid_argument("snapshot times must increase");
    if (trace_.times.size() == 1)
      trace_.grid_dt = h;
    else if (std::abs(h - trace_.grid_dt) > 1e-9 * std::max(1.0, trace_.grid_dt))
      trace_.uniform_grid = false;
    drift_integral_ += 0.5 * h * (last_drift_ + drift);
    const double m = pairing - drift_integral_;
    const double dm = m - trace_.values.back();
    trace_.times.push_back(snapshot.time);
    trace_.values.push_back(m);
    trace_.predicted_qv.push_back(trace_.predicted_qv.back() + 0.5 * h * (last_qv_rate_ + qv_rate));
    trace_.realized_qv.push_back(trace_.realized_qv.back() + dm * dm);
  }
  last_drift_ = drift;
  last_qv_rate_ = qv_rate;
}

MartingaleTrace MartingaleBuilder::finish() && {
  if (trace_.times.size() < 2) throw std::invalid_argument("martingale trace needs at least 2 grid points");
  return std::move(trace_);
}

MartingaleTrace martingale_statistic(const ModelSpec& model, const Trajectory& traj,
                                     const TestFunction& phi) {
  if (traj.size() < 2) throw std::invalid_argument("martingale trace needs at least 2 grid points");
  MartingaleBuilder builder(model, phi);
  for (const auto& snap : traj.snapshots) builder.add(snap);
  return std::move(builder).finish();
}

bool TestReport::pass() const {
  for (const auto& e : entries)
    if (!e.pass) return false;
  return true;
}

TestReport increment_test(std::span<const MartingaleTrace> replicas,
                          std::span<const double> checkpoints) {
  if (replicas.size() < kMinReplicas) {
    std::ostringstream os;
    os << "increment_test needs at least " << kMinReplicas << " replicas, got " << replicas.size();
    throw std::invalid_argument(os.str());
  }
  std::vector<std::size_t> idx;
  for (double t : checkpoints) idx.push_back(replicas.front().index_of(t));
  TestReport report;
  for (std::size_t a = 0; a < idx.size(); ++a) {
    for (std::size_t b = a + 1; b < idx.size(); ++b) {
      std::size_t s = idx[a], t = idx[b];
      double ts = checkpoints[a], tt = checkpoints[b];
      if (s > t) {
        std::swap(s, t);
        std::swap(ts, tt);
      }
      if (s == t) continue;
      StreamingMoments sm;
      for (const auto& tr : replicas) {
        if (tr.size() != replicas.front().size()) throw std::invalid_argument("replica grids differ");
        sm.push(tr.values[t] - tr.values[s]);
      }
      const MCEstimate est = sm.estimate();
      TestEntry e;
      std::ostringstream label;
      label << "increment[" << ts << "," << tt << "]";
      e.label = label.str();
      e.std_error = est.std_error;
      e.lower = -kSigmaThreshold;
      e.upper = kSigmaThreshold;
      if (est.std_error == 0.0) {
        e.degenerate = true;
        e.pass = est.mean == 0.0;
        e.statistic = est.mean == 0.0 ? 0.0 : std::copysign(INFINITY, est.mean);
        e.note = "zero sample variance";
      } else {
        e.statistic = est.mean / est.std_error;
        e.pass = std::abs(e.statistic) <= kSigmaThreshold;
      }
      report.entries.push_back(e);
    }
  }
  return report;
}

TestReport qv_test(std::span<const MartingaleTrace> replicas, double t,
                   double discretization_constant) {
  if (replicas.size() < 2) throw std::invalid_argument("qv_test needs at least 2 replicas");
  const MartingaleTrace& first = replicas.front();
  const double dt = first.dt();
  if (!(dt > 0.0)) throw std::invalid_argument("qv_test needs a recorded grid step");
  for (const auto& tr : replicas)
    if (!tr.uniform_grid) throw std::invalid_argument("qv_test needs a uniform grid");
  const std::size_t j = first.index_of(t);

  const std::size_t n = replicas.size();
  double sum_r = 0.0, sum_p = 0.0;
  for (const auto& tr : replicas) {
    if (tr.size() != first.size()) throw std::invalid_argument("replica grids differ");
    sum_r += tr.realized_qv[j];
    sum_p += tr.predicted_qv[j];
  }
  const double mean_r = sum_r / n, mean_p = sum_p / n;

  TestEntry e;
  std::ostringstream label;
  label << "qv_ratio[" << t << "]";
  e.label = label.str();
  const double delta = discretization_constant * dt;
  const double tolerance = 1e-14;
  if (mean_p <= tolerance) {
    e.degenerate = true;
    e.statistic = mean_r <= tolerance ? 1.0 : INFINITY;
    e.lower = 1.0 - delta;
    e.upper = 1.0 + delta;
    e.pass = mean_r <= tolerance;
    e.note = e.pass ? "zero quadratic variation" : "predicted QV is zero but realized QV is positive";
    TestReport report;
    report.entries.push_back(e);
    return report;
  }
  const double rho = mean_r / mean_p;
  StreamingMoments resid;
  for (const auto& tr : replicas) resid.push(tr.realized_qv[j] - rho * tr.predicted_qv[j]);
  const double se = std::sqrt(resid.variance() / n) / mean_p;
  e.statistic = rho;
  e.std_error = se;
  e.lower = 1.0 - delta - kSigmaThreshold * se;
  e.upper = 1.0 + delta + kSigmaThreshold * se;
  e.pass = rho >= e.lower && rho <= e.upper;
  TestReport report;
  report.entries.push_back(e);
  return report;
}

void write_trace_csv(std::ostream& out, const MartingaleTrace& trace) {
  CsvWriter w(out, {"time", "M", "predicted_qv", "realized_qv"});
  for (std::size_t j = 0; j < trace.size(); ++j)
    w.row({trace.times[j], trace.values[j], trace.predicted_qv[j], trace.realized_qv[j]});
}

} // namespace dk
