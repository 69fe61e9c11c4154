#include "dk/girsanov.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "dk/csv.hpp"
#include "dk/measure.hpp"
#include "dk/parallel.hpp"
#include "dk/rng.hpp"

namespace dk {

FunctionalBuilder::FunctionalBuilder(const ModelSpec& model, bool drop_compensator)
    : model_(model), drop_compensator_(drop_compensator) {
  if (!model.interacting())
    throw std::invalid_argument("ito_functional_trace requires an interacting model with G");
}

void FunctionalBuilder::add(const Ensemble& snapshot) {
  const std::size_t n = snapshot.size(), k = model_.k;
  const EmpiricalMeasure mu(snapshot);
  forces_.assign(n * k, 0.0);
  if (n > 0) interaction_forces_at_atoms(model_, mu, forces_);
  double rate = 0.0, qv_rate = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ConstVec z = snapshot.particle(i);
    const Jet psi = variation_G(model_, mu, z);
    double r = model_.alpha * apply_generator(model_, psi, z);
    for (std::size_t c = 0; c < k; ++c) r += forces_[i * k + c] * psi.grad[c];
    r += 0.5 * second_variation_trace(model_, z);
    rate += r;
    qv_rate += sigma_t_norm2(model_, ConstVec(psi.grad.data(), k));
  }
  const double w = mu.weight();
  rate *= w;
  qv_rate *= w;
  const double g = interaction_functional(model_, mu);

  if (trace_.times.empty()) {
    trace_.times.push_back(snapshot.time);
    trace_.G.push_back(g);
    trace_.M.push_back(0.0);
    trace_.qv.push_back(0.0);
    trace_.realized_qv.push_back(0.0);
    trace_.weight.push_back(1.0);
  } else {
    const double h = snapshot.time - trace_.times.back();
    if (!(h > 0.0)) throw std::invalid_argument("snapshot times must increase");
    integral_ += 0.5 * h * (last_rate_ + rate);
    const double m = g - trace_.G.front() - integral_;
    const double dm = m - trace_.M.back();
    const double qv = trace_.qv.back() + 0.5 * h * (last_qv_rate_ + qv_rate);
    trace_.times.push_back(snapshot.time);
    trace_.G.push_back(g);
    trace_.M.push_back(m);
    trace_.qv.push_back(qv);
    trace_.realized_qv.push_back(trace_.realized_qv.back() + dm * dm);
    trace_.weight.push_back(std::exp(-m - (drop_compensator_ ? 0.0 : 0.5 * qv)));
  }
  last_rate_ = rate;
  last_qv_rate_ = qv_rate;
}

FunctionalTrace FunctionalBuilder::finish() && {
  if (trace_.times.empty()) throw std::invalid_argument("functional trace is empty");
  return std::move(trace_);
}

FunctionalTrace ito_functional_trace(const ModelSpec& model, const Trajectory& traj,
                                     bool drop_compensator) {
  FunctionalBuilder builder(model, drop_compensator);
  for (const auto& snap : traj.snapshots) builder.add(snap);
  return std::move(builder).finish();
}

std::string to_string(Observable obs) { return obs == Observable::Laplace ? "laplace" : "linear"; }

Observable observable_from_string(const std::string& name) {
  if (name == "laplace") return Observable::Laplace;
  if (name == "linear") return Observable::Linear;
  throw std::invalid_argument("unknown observable '" + name + "'");
}

double observable_value(Observable obs, const EmpiricalMeasure& mu, const TestFunction& phi) {
  const double p = pair(mu, phi);
  return obs == Observable::Laplace ? std::exp(-p) : p;
}

namespace {

void check_model_pair(const ModelSpec& a, const ModelSpec& f) {
  const ModelSpec expected = a.without_interaction();
  const bool same = !f.interacting() && expected.kind == f.kind && expected.k == f.k &&
                    expected.l == f.l && expected.d == f.d && expected.alpha == f.alpha &&
                    expected.gamma == f.gamma && expected.speed == f.speed &&
                    expected.potential.kind == f.potential.kind &&
                    expected.potential.stiffness == f.potential.stiffness &&
                    expected.potential.a == f.potential.a && expected.potential.b == f.potential.b &&
                    expected.sigma == f.sigma && expected.drift_matrix == f.drift_matrix;
  if (!same)
    throw std::invalid_argument(
        "reweighting_check: free model is not the interacting model with F removed");
}

constexpr std::size_t kChunks = 64;

struct ReplicaOut {
  double phi = 0.0;
  double weight = 1.0;
  double qv = 0.0;
  double realized_qv = 0.0;
};

} // namespace

ReweightingResult reweighting_check(const ModelSpec& model_interacting, const ModelSpec& model_free,
                                    const Ensemble& mu0, const TestFunction& phi, double t,
                                    std::size_t replicas, double dt, std::uint64_t seed,
                                    const ReweightingOptions& options) {
  check_model_pair(model_interacting, model_free);
  if (mu0.k != model_interacting.k || mu0.alpha != model_interacting.alpha)
    throw std::invalid_argument("reweighting_check: initial ensemble does not match model");
  if (replicas < 2) throw std::invalid_argument("reweighting_check needs at least 2 replicas");
  const std::size_t steps = step_count(t, dt);
  const std::uint64_t free_seed = splitmix64(seed ^ 0x5f7265776569676cULL);

  // Both samples carry the G-functional weight: on interacting paths it is the
  // density dQ/dP, on free paths its inverse is dP/dQ.
  auto run = [&](const ModelSpec& dyn, std::uint64_t s, std::size_t r) {
    Ensemble ens = mu0;
    const NoiseStream noise(s, r, StreamPurpose::Particles);
    FunctionalBuilder fb(model_interacting, options.drop_compensator);
    fb.add(ens);
    for (std::size_t j = 0; j < steps; ++j) {
      advance(dyn, ens, dt, Scheme::EulerMaruyama, noise, j);
      fb.add(ens);
    }
    const FunctionalTrace& tr = fb.trace();
    return ReplicaOut{observable_value(options.observable, EmpiricalMeasure(ens), phi),
                      tr.weight.back(), tr.qv.back(), tr.realized_qv.back()};
  };
  std::vector<ReplicaOut> inter(replicas), freev(replicas);
  const std::size_t chunks = std::min(kChunks, replicas);
  parallel_for(2 * chunks, options.workers, [&](std::size_t c) {
    const bool is_free = c >= chunks;
    const std::size_t cc = c % chunks;
    const std::size_t lo = replicas * cc / chunks, hi = replicas * (cc + 1) / chunks;
    for (std::size_t r = lo; r < hi; ++r) {
      if (is_free)
        freev[r] = run(model_free, free_seed, r);
      else
        inter[r] = run(model_interacting, seed, r);
    }
  });

  ReweightingResult res;
  res.allowance = options.allowance_per_dt * dt;
  std::vector<double> wp(replicas), w(replicas), pf(replicas), pi(replicas), inv(replicas);
  for (std::size_t r = 0; r < replicas; ++r) {
    w[r] = inter[r].weight;
    wp[r] = inter[r].weight * inter[r].phi;
    pi[r] = inter[r].phi;
    pf[r] = freev[r].phi;
    inv[r] = freev[r].phi / freev[r].weight;
  }
  res.weighted = moments_of(wp).estimate();
  res.free = moments_of(pf).estimate();
  res.mean_weight = moments_of(w).estimate();
  res.interacting = moments_of(pi).estimate();
  res.converse_weighted = moments_of(inv).estimate();
  res.ess = effective_sample_size(w);
  double sum_qv = 0.0, sum_real = 0.0;
  for (const auto& o : inter) {
    sum_qv += o.qv;
    sum_real += o.realized_qv;
  }
  if (sum_qv > 0.0) {
    res.qv_ratio = sum_real / sum_qv;
    StreamingMoments resid;
    for (const auto& o : inter) resid.push(o.realized_qv - res.qv_ratio * o.qv);
    res.qv_ratio_stderr = std::sqrt(resid.variance() / replicas) / (sum_qv / replicas);
  } else {
    res.qv_ratio = sum_real == 0.0 ? 1.0 : INFINITY;
  }

  const Band band{kSigmaThreshold, res.allowance};
  res.z = z_score(res.weighted.mean, res.weighted.std_error, res.free.mean, res.free.std_error);
  res.pass = band.contains(res.weighted.mean - res.free.mean,
                           combined_stderr(res.weighted.std_error, res.free.std_error));
  res.weight_z = z_score(res.mean_weight.mean, res.mean_weight.std_error, 1.0, 0.0);
  res.weight_pass = std::abs(res.weight_z) <= kSigmaThreshold;
  res.converse_z = z_score(res.converse_weighted.mean, res.converse_weighted.std_error,
                           res.interacting.mean, res.interacting.std_error);
  res.converse_pass = band.contains(
      res.converse_weighted.mean - res.interacting.mean,
      combined_stderr(res.converse_weighted.std_error, res.interacting.std_error));
  if (res.ess < 0.5 * static_cast<double>(replicas)) {
    std::ostringstream os;
    os << "effective sample size " << res.ess << " is below half of " << replicas << " replicas";
    res.warning = os.str();
  }
  return res;
}

void write_trace_csv(std::ostream& out, const FunctionalTrace& trace) {
  CsvWriter w(out, {"time", "G", "M", "QV", "weight"});
  for (std::size_t j = 0; j < trace.size(); ++j)
    w.row({trace.times[j], trace.G[j], trace.M[j], trace.qv[j], trace.weight[j]});
}

} // namespace dk
