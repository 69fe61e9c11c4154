#include "dk/runner.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include <json.hpp>

#include "dk/csv.hpp"
#include "dk/duality.hpp"
#include "dk/girsanov.hpp"
#include "dk/martingale.hpp"
#include "dk/measure.hpp"
#include "dk/parallel.hpp"

#ifndef DK_VERSION
#define DK_VERSION "0.0.0"
#endif

namespace dk {

using ojson = nlohmann::ordered_json;

std::string version_string() { return DK_VERSION; }

bool RunOutcome::pass() const {
  for (const auto& e : entries)
    if (!e.pass) return false;
  return true;
}

namespace {

constexpr std::size_t kChunks = 64;

// Output files of one experiment; every suite appends to its own CSV.
struct Outputs {
  std::map<std::string, std::ostringstream> files;
  std::ostream& file(const std::string& name) { return files[name]; }
};

std::uint64_t run_seed(std::uint64_t seed, const std::string& label) {
  return splitmix64(seed ^ fnv1a64(label));
}

ResultEntry entry(const SuiteRun& run, std::string stat, double value, double se, double lo,
                  double hi, bool pass, std::string note = {}) {
  return {run.label, std::move(stat), value, se, lo, hi, pass, std::move(note)};
}

std::string fmt(double x) {
  std::ostringstream os;
  os << x;
  return os.str();
}

// Replica r of a free or interacting model, stepping snapshot by snapshot.
template <typename OnSnapshot>
void walk_replica(const SuiteRun& run, const Ensemble& mu0, std::uint64_t seed, std::size_t r,
                  double t, OnSnapshot&& on_snapshot) {
  const std::size_t steps = step_count(t, run.integrator.dt);
  const NoiseStream noise(seed, r, StreamPurpose::Particles);
  Ensemble ens = mu0;
  on_snapshot(std::size_t{0}, ens);
  for (std::size_t s = 0; s < steps; ++s) {
    try {
      advance(run.model, ens, run.integrator.dt, run.integrator.scheme, noise, s);
    } catch (const NumericalError& e) {
      throw NumericalError(e.what(), r, s);
    }
    on_snapshot(s + 1, ens);
  }
}

// Calls body(r) for every replica in fixed chunks; body writes only into slot r
// or into the per-chunk accumulator `chunk`.
template <typename Body>
void for_replicas(std::size_t replicas, unsigned workers, Body&& body) {
  const std::size_t chunks = std::max<std::size_t>(1, std::min(kChunks, replicas));
  parallel_for(chunks, workers, [&](std::size_t c) {
    const std::size_t lo = replicas * c / chunks, hi = replicas * (c + 1) / chunks;
    for (std::size_t r = lo; r < hi; ++r) body(c, r);
  });
}

std::size_t chunk_count(std::size_t replicas) {
  return std::max<std::size_t>(1, std::min(kChunks, replicas));
}

// ---------------------------------------------------------------- simulate

void suite_simulate(const SuiteRun& run, std::uint64_t seed, unsigned workers, Outputs& out,
                    std::vector<ResultEntry>& entries, bool header) {
  const Ensemble mu0 = build_initial(run.initial, run.model, seed);
  const double mass0 = mass(EmpiricalMeasure(mu0));
  const Ball unit{std::vector<double>(run.model.k, 0.0), 1.0};
  const std::size_t R = run.budgets.replicas;
  std::vector<std::size_t> mass_bad(R, 0), integral_bad(R, 0);
  std::vector<double> final_e2(R, 0.0);
  std::vector<std::vector<std::string>> recorded(run.record_replicas);
  const std::uint64_t sim_seed = seed;
  for_replicas(R, workers, [&](std::size_t, std::size_t r) {
    std::ostringstream rows;
    walk_replica(run, mu0, sim_seed, r, run.integrator.t_end, [&](std::size_t step, const Ensemble& e) {
      const EmpiricalMeasure mu(e);
      if (mass(mu) != mass0 || e.size() != mu0.size()) ++mass_bad[r];
      const double scaled = run.model.alpha * set_mass(mu, unit);
      if (scaled != std::round(scaled) || scaled != static_cast<double>(set_count(mu, unit)))
        ++integral_bad[r];
      if (r < run.record_replicas) {
        for (std::size_t i = 0; i < e.size(); ++i)
          for (std::size_t c = 0; c < e.k; ++c)
            rows << csv_escape(run.label) << ',' << r << ',' << step << ',' << format_real(e.time)
                 << ',' << e.ids[i] << ',' << c << ',' << format_real(e.coords[i * e.k + c]) << '\n';
      }
      if (step == step_count(run.integrator.t_end, run.integrator.dt))
        final_e2[r] = second_moment(mu);
    });
    if (r < run.record_replicas) recorded[r].push_back(rows.str());
  });
  std::ostream& csv = out.file("simulate.csv");
  if (header) csv << "run,replica,step,time,particle,coordinate,value\n";
  for (const auto& rec : recorded)
    for (const auto& s : rec) csv << s;

  std::size_t mb = 0, ib = 0;
  for (std::size_t r = 0; r < R; ++r) {
    mb += mass_bad[r];
    ib += integral_bad[r];
  }
  entries.push_back(entry(run, "mass_conservation_violations", static_cast<double>(mb), 0, 0, 0,
                          mb == 0, "snapshots whose mass differs from the initial mass"));
  entries.push_back(entry(run, "set_mass_integrality_violations", static_cast<double>(ib), 0, 0, 0,
                          ib == 0, "alpha * mu_t(B(0,1)) not an integer"));
  const MCEstimate e2 = moments_of(final_e2).estimate();
  entries.push_back(entry(run, "mean_second_moment_t_end", e2.mean, e2.std_error, -INFINITY,
                          INFINITY, true, "informational"));
}

// -------------------------------------------------------------- martingale

void suite_martingale(const SuiteRun& run, std::uint64_t seed, unsigned workers, Outputs& out,
                      std::vector<ResultEntry>& entries, bool header) {
  const Ensemble mu0 = build_initial(run.initial, run.model, seed);
  const std::size_t R = run.budgets.replicas, F = run.test_functions.size();
  const double t_end = run.integrator.t_end;
  std::vector<double> keep = run.checkpoints;
  keep.push_back(t_end);
  std::vector<std::vector<MartingaleTrace>> traces(F, std::vector<MartingaleTrace>(R));
  std::vector<MartingaleTrace> first(F);
  for_replicas(R, workers, [&](std::size_t, std::size_t r) {
    std::vector<MartingaleBuilder> builders;
    builders.reserve(F);
    for (const auto& phi : run.test_functions) builders.emplace_back(run.model, phi);
    walk_replica(run, mu0, seed, r, t_end, [&](std::size_t, const Ensemble& e) {
      for (auto& b : builders) b.add(e);
    });
    for (std::size_t f = 0; f < F; ++f) {
      MartingaleTrace tr = std::move(builders[f]).finish();
      traces[f][r] = thin(tr, keep);
      if (r == 0) first[f] = std::move(tr);
    }
  });

  std::ostream& csv = out.file("martingale.csv");
  std::ostream& tcsv = out.file("martingale_traces.csv");
  if (header) {
    csv << "run,phi,test,statistic,stderr,lower,upper,pass,note\n";
    tcsv << "run,phi,time,M,predicted_qv,realized_qv\n";
  }
  for (std::size_t f = 0; f < F; ++f) {
    const std::string id = "phi" + std::to_string(f);
    TestReport rep = increment_test(traces[f], run.checkpoints);
    for (const auto& e : qv_test(traces[f], t_end, run.qv_constant).entries) rep.entries.push_back(e);
    for (const auto& e : rep.entries) {
      csv << csv_escape(run.label) << ',' << id << ',' << csv_escape(e.label) << ','
          << format_real(e.statistic) << ',' << format_real(e.std_error) << ','
          << format_real(e.lower) << ',' << format_real(e.upper) << ',' << (e.pass ? 1 : 0) << ','
          << csv_escape(e.note) << '\n';
      entries.push_back(entry(run, id + "." + e.label, e.statistic, e.std_error, e.lower, e.upper,
                              e.pass, e.note.empty() ? run.test_functions[f].describe() : e.note));
    }
    const MartingaleTrace& tr = first[f];
    for (std::size_t j = 0; j < tr.size(); ++j)
      tcsv << csv_escape(run.label) << ',' << id << ',' << format_real(tr.times[j]) << ','
           << format_real(tr.values[j]) << ',' << format_real(tr.predicted_qv[j]) << ','
           << format_real(tr.realized_qv[j]) << '\n';
  }
}

// ---------------------------------------------------------------- duality

void suite_duality(const SuiteRun& run, std::uint64_t seed, unsigned workers, Outputs& out,
                   std::vector<ResultEntry>& entries, bool header) {
  const Ensemble mu0 = build_initial(run.initial, run.model, seed);
  const TestFunction& phi = *run.phi;
  const LaplaceResult res = laplace_check(run.model, mu0, phi, run.t, run.budgets.replicas,
                                          run.budgets.inner_samples, run.integrator.dt, seed,
                                          workers, run.integrator.scheme);
  const double se = combined_stderr(res.lhs.std_error, res.rhs.std_error);
  const double allowance = run.allowance_per_dt * run.integrator.dt;
  const double dev = res.lhs.mean - res.rhs.mean;
  const double width = kSigmaThreshold * se + allowance;
  const bool pass = std::abs(dev) <= width;
  std::ostream& csv = out.file("duality.csv");
  if (header) csv << "run,id,lhs,lhs_se,rhs,rhs_se,z,pass\n";
  csv << csv_escape(run.label) << ",laplace," << format_real(res.lhs.mean) << ','
      << format_real(res.lhs.std_error) << ',' << format_real(res.rhs.mean) << ','
      << format_real(res.rhs.std_error) << ',' << format_real(res.z) << ',' << (pass ? 1 : 0) << '\n';
  entries.push_back(entry(run, "laplace.lhs", res.lhs.mean, res.lhs.std_error, -INFINITY, INFINITY,
                          true, "E exp(-<mu_t, phi>)"));
  entries.push_back(entry(run, "laplace.rhs", res.rhs.mean, res.rhs.std_error, -INFINITY, INFINITY,
                          true, "exp(-<mu_0, V_t phi>)"));
  entries.push_back(entry(run, "laplace.lhs_minus_rhs", dev, se, -width, width, pass,
                          "band 3 * combined stderr + " + fmt(run.allowance_per_dt) + " dt"));
  const double sup = phi.sup_norm();
  for (std::size_t i = 0; i < res.per_atom.size(); ++i) {
    const auto& v = res.per_atom[i];
    const double lo = -kSigmaThreshold * v.std_error, hi = sup + kSigmaThreshold * v.std_error;
    const bool ok = v.value >= lo && v.value <= hi;
    entries.push_back(entry(run, "cole_hopf.atom" + std::to_string(i), v.value, v.std_error, lo, hi,
                            ok, "contraction 0 <= V_t phi <= |phi|_inf"));
    csv << csv_escape(run.label) << ",V" << i << ',' << format_real(v.value) << ','
        << format_real(v.std_error) << ',' << format_real(sup) << ",0,"
        << format_real(v.std_error > 0 ? (v.value - sup) / v.std_error : 0.0) << ',' << (ok ? 1 : 0)
        << '\n';
  }
}

// -------------------------------------------------------------------- mgf

void suite_mgf(const SuiteRun& run, std::uint64_t seed, unsigned workers, Outputs& out,
               std::vector<ResultEntry>& entries, bool header) {
  const Ensemble mu0 = build_initial(run.initial, run.model, seed);
  const MgfReport rep = mgf_identity(run.model, mu0, *run.set, run.t, run.lambdas,
                                     run.budgets.replicas, run.budgets.inner_samples,
                                     run.integrator.dt, seed, workers);
  std::ostream& csv = out.file("mgf.csv");
  if (header)
    csv << "run,lambda,lhs,lhs_se,rhs,rhs_se,z,pass,factor_product,factor_se,factor_z,factor_pass\n";
  entries.push_back(entry(run, "integrality", rep.integrality_exact ? 1.0 : 0.0, 0, 1, 1,
                          rep.integrality_exact, "alpha mu_t(A) integer on every replica"));
  for (std::size_t i = 0; i < rep.hit_probabilities.size(); ++i)
    entries.push_back(entry(run, "hit_probability.atom" + std::to_string(i),
                            rep.hit_probabilities[i].value, rep.hit_probabilities[i].std_error, 0,
                            1, true, "P_{alpha t} 1_A(z_i), informational"));
  for (const auto& row : rep.rows) {
    csv << csv_escape(run.label) << ',' << format_real(row.lambda) << ','
        << format_real(row.lhs.mean) << ',' << format_real(row.lhs.std_error) << ','
        << format_real(row.rhs.mean) << ',' << format_real(row.rhs.std_error) << ','
        << format_real(row.z) << ',' << (row.pass ? 1 : 0) << ',';
    if (row.has_factorization)
      csv << format_real(row.factor_product.mean) << ',' << format_real(row.factor_product.std_error)
          << ',' << format_real(row.factor_z) << ',' << (row.factor_pass ? 1 : 0) << '\n';
    else
      csv << ",,,\n";
    const std::string lam = "[" + fmt(row.lambda) + "]";
    entries.push_back(entry(run, "mgf" + lam + ".z", row.z, 1.0, -kSigmaThreshold, kSigmaThreshold,
                            row.pass, "lhs " + fmt(row.lhs.mean) + ", rhs " + fmt(row.rhs.mean)));
    if (row.has_factorization)
      entries.push_back(entry(run, "factorization" + lam + ".z", row.factor_z, 1.0, -kSigmaThreshold,
                              kSigmaThreshold, row.factor_pass,
                              "joint against product of per-atom factors"));
  }
}

// --------------------------------------------------------------- girsanov

void suite_girsanov(const SuiteRun& run, std::uint64_t seed, unsigned workers, Outputs& out,
                    std::vector<ResultEntry>& entries, std::vector<std::string>& warnings,
                    bool header) {
  const Ensemble mu0 = build_initial(run.initial, run.model, seed);
  const ModelSpec free = run.model.without_interaction();
  ReweightingOptions opt;
  opt.observable = observable_from_string(run.observable);
  opt.workers = workers;
  opt.allowance_per_dt = run.allowance_per_dt;
  const ReweightingResult res = reweighting_check(run.model, free, mu0, *run.phi, run.t,
                                                  run.budgets.replicas, run.integrator.dt, seed, opt);
  const double dt = run.integrator.dt;
  const double allowance = run.allowance_per_dt * dt;
  auto band_entry = [&](const std::string& stat, double a, double sa, double b, double sb,
                        bool pass, const std::string& note) {
    const double se = combined_stderr(sa, sb);
    const double w = kSigmaThreshold * se + allowance;
    entries.push_back(entry(run, stat, a - b, se, -w, w, pass, note));
  };
  entries.push_back(entry(run, "mean_weight", res.mean_weight.mean, res.mean_weight.std_error,
                          1 - kSigmaThreshold * res.mean_weight.std_error,
                          1 + kSigmaThreshold * res.mean_weight.std_error, res.weight_pass,
                          "E_P exp(-M^G - [M^G]/2) = 1"));
  band_entry("weighted_minus_free", res.weighted.mean, res.weighted.std_error, res.free.mean,
             res.free.std_error, res.pass, "E_P[weight Phi] - E_Q[Phi]");
  band_entry("converse_minus_interacting", res.converse_weighted.mean,
             res.converse_weighted.std_error, res.interacting.mean, res.interacting.std_error,
             res.converse_pass, "E_Q[Phi / weight] - E_P[Phi]");
  const double qv_w = kQvDiscretizationConstant * dt + kSigmaThreshold * res.qv_ratio_stderr;
  const bool qv_pass = std::abs(res.qv_ratio - 1.0) <= qv_w;
  entries.push_back(entry(run, "qv_ratio", res.qv_ratio, res.qv_ratio_stderr, 1 - qv_w, 1 + qv_w,
                          qv_pass, "realized / predicted [M^G]_t"));
  entries.push_back(entry(run, "ess", res.ess, 0, 0.5 * run.budgets.replicas,
                          static_cast<double>(run.budgets.replicas), true,
                          res.warning.empty() ? "effective sample size" : res.warning));
  if (!res.warning.empty()) warnings.push_back(run.label + ": " + res.warning);

  std::ostream& csv = out.file("girsanov.csv");
  if (header) csv << "run,statistic,value,stderr,reference,reference_stderr,z,pass\n";
  auto row = [&](const std::string& stat, const MCEstimate& a, const MCEstimate& b, double z, bool p) {
    csv << csv_escape(run.label) << ',' << stat << ',' << format_real(a.mean) << ','
        << format_real(a.std_error) << ',' << format_real(b.mean) << ',' << format_real(b.std_error)
        << ',' << format_real(z) << ',' << (p ? 1 : 0) << '\n';
  };
  row("mean_weight", res.mean_weight, {1.0, 0.0, 0}, res.weight_z, res.weight_pass);
  row("weighted_vs_free", res.weighted, res.free, res.z, res.pass);
  row("converse_vs_interacting", res.converse_weighted, res.interacting, res.converse_z,
      res.converse_pass);

  if (run.fault_injection) {
    ReweightingOptions fopt = opt;
    fopt.drop_compensator = true;
    const ReweightingResult fault = reweighting_check(run.model, free, mu0, *run.phi, run.t,
                                                      run.budgets.replicas, dt, seed, fopt);
    const bool detected = std::abs(fault.weight_z) >= run.fault_sigmas;
    entries.push_back(entry(run, "fault.mean_weight_z", fault.weight_z, 1.0, -run.fault_sigmas,
                            run.fault_sigmas, detected,
                            "compensator dropped; pass means |z| >= " + fmt(run.fault_sigmas)));
    row("fault_mean_weight", fault.mean_weight, {1.0, 0.0, 0}, fault.weight_z, detected);
  }

  // Replica 0 trace for plotting.
  std::ostream& tcsv = out.file("girsanov_traces.csv");
  if (header) tcsv << "run,time,G,M,QV,weight\n";
  FunctionalBuilder fb(run.model);
  walk_replica(run, mu0, seed, 0, run.t, [&](std::size_t, const Ensemble& e) { fb.add(e); });
  const FunctionalTrace tr = std::move(fb).finish();
  for (std::size_t j = 0; j < tr.size(); ++j)
    tcsv << csv_escape(run.label) << ',' << format_real(tr.times[j]) << ',' << format_real(tr.G[j])
         << ',' << format_real(tr.M[j]) << ',' << format_real(tr.qv[j]) << ','
         << format_real(tr.weight[j]) << '\n';
}

// ---------------------------------------------------------------- moments

void suite_moments(const SuiteRun& run, std::uint64_t seed, unsigned workers, Outputs& out,
                   std::vector<ResultEntry>& entries, bool header) {
  const Ensemble mu0 = build_initial(run.initial, run.model, seed);
  const std::size_t R = run.budgets.replicas;
  const std::size_t steps = step_count(run.integrator.t_end, run.integrator.dt);
  const std::size_t chunks = chunk_count(R);
  std::vector<std::vector<StreamingMoments>> partial(chunks,
                                                     std::vector<StreamingMoments>(steps + 1));
  std::vector<double> times(steps + 1);
  for_replicas(R, workers, [&](std::size_t c, std::size_t r) {
    walk_replica(run, mu0, seed, r, run.integrator.t_end, [&](std::size_t j, const Ensemble& e) {
      partial[c][j].push(second_moment(EmpiricalMeasure(e)));
      if (r == 0) times[j] = e.time;
    });
  });
  const EmpiricalMeasure m0(mu0);
  std::ostream& csv = out.file("moments.csv");
  if (header) csv << "run,time,mean_second_moment,stderr,bound,pass\n";
  double worst = -INFINITY, worst_t = 0.0;
  bool all_ok = true;
  for (std::size_t j = 0; j <= steps; ++j) {
    StreamingMoments sm;
    for (std::size_t c = 0; c < chunks; ++c) sm.merge(partial[c][j]);
    const MCEstimate est = sm.count() >= 2 ? sm.estimate() : MCEstimate{sm.mean(), 0.0, sm.count()};
    const double bound = gronwall_bound(run.model, m0, times[j]);
    const bool ok = est.mean - kSigmaThreshold * est.std_error <= bound;
    all_ok = all_ok && ok;
    const double ratio = (est.mean - kSigmaThreshold * est.std_error) / bound;
    if (ratio > worst) {
      worst = ratio;
      worst_t = times[j];
    }
    csv << csv_escape(run.label) << ',' << format_real(times[j]) << ',' << format_real(est.mean)
        << ',' << format_real(est.std_error) << ',' << format_real(bound) << ',' << (ok ? 1 : 0)
        << '\n';
  }
  entries.push_back(entry(run, "max_slack_ratio", worst, 0.0, -INFINITY, 1.0, all_ok,
                          "max over grid of (mean - 3 se) / bound, at t = " + fmt(worst_t)));
}

// ------------------------------------------------------------- exhaustion

void suite_exhaustion(const SuiteRun& run, std::uint64_t seed, unsigned workers, Outputs& out,
                      std::vector<ResultEntry>& entries, bool header) {
  const std::size_t k = run.model.k, P = run.grid_points;
  std::vector<std::vector<double>> grid;
  std::size_t total = 1;
  for (std::size_t i = 0; i < k; ++i) total *= P;
  for (std::size_t idx = 0; idx < total; ++idx) {
    std::vector<double> z(k);
    std::size_t rest = idx;
    for (std::size_t c = 0; c < k; ++c) {
      const std::size_t m = rest % P;
      rest /= P;
      z[c] = P == 1 ? 0.5 * (run.grid_lower[c] + run.grid_upper[c])
                    : run.grid_lower[c] + (run.grid_upper[c] - run.grid_lower[c]) * m / (P - 1.0);
    }
    grid.push_back(std::move(z));
  }
  const ExhaustionResult res = exhaustion_probe(run.model, run.radius, run.t, grid,
                                                run.budgets.inner_samples, run.integrator.dt, seed,
                                                workers);
  std::ostream& csv = out.file("exhaustion.csv");
  if (header) csv << "run,point,z,value,stderr\n";
  for (std::size_t p = 0; p < grid.size(); ++p) {
    std::string zs;
    for (std::size_t c = 0; c < k; ++c) zs += (c ? " " : "") + format_real(grid[p][c]);
    csv << csv_escape(run.label) << ',' << p << ',' << csv_escape(zs) << ','
        << format_real(res.per_point[p].value) << ',' << format_real(res.per_point[p].std_error)
        << '\n';
  }
  const double sigmas = 5.0;
  const bool ok = res.sigmas_below_one >= sigmas;
  entries.push_back(entry(run, "sup_hit_probability", res.sup.value, res.sup.std_error, 0.0,
                          1.0 - sigmas * res.sup.std_error, ok,
                          "sup over grid of P_t 1_{B(0,r)}; below 1 by " +
                              fmt(res.sigmas_below_one) + " stderr"));
}

std::string hex64(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

ojson number_or_string(double x) {
  if (std::isfinite(x)) return x;
  if (std::isnan(x)) return "nan";
  return x > 0 ? "inf" : "-inf";
}

} // namespace

RunOutcome run_experiment(const ExperimentConfig& config, const std::string& out_dir,
                          unsigned workers, std::ostream* log) {
  RunOutcome outcome;
  Outputs out;
  std::map<std::string, bool> header_written;
  for (const SuiteRun& run : config.runs) {
    const std::string suite = to_string(run.suite);
    const bool header = !header_written[suite];
    header_written[suite] = true;
    const std::uint64_t seed = run_seed(config.seed, run.label);
    if (log) *log << "running " << run.label << " (" << to_string(run.model.kind) << ")\n";
    std::vector<ResultEntry> entries;
    try {
      switch (run.suite) {
      case Suite::Simulate: suite_simulate(run, seed, workers, out, entries, header); break;
      case Suite::Martingale: suite_martingale(run, seed, workers, out, entries, header); break;
      case Suite::Duality: suite_duality(run, seed, workers, out, entries, header); break;
      case Suite::Mgf: suite_mgf(run, seed, workers, out, entries, header); break;
      case Suite::Girsanov:
        suite_girsanov(run, seed, workers, out, entries, outcome.warnings, header);
        break;
      case Suite::Moments: suite_moments(run, seed, workers, out, entries, header); break;
      case Suite::Exhaustion: suite_exhaustion(run, seed, workers, out, entries, header); break;
      }
    } catch (const NumericalError& e) {
      std::ostringstream os;
      os << run.label << ": " << e.what() << " [replica " << e.replica() << ", step " << e.step()
         << "]";
      throw NumericalError(os.str(), e.replica(), e.step());
    }
    for (auto& e : entries) outcome.entries.push_back(std::move(e));
  }

  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  for (auto& [name, body] : out.files) {
    std::ofstream f(fs::path(out_dir) / name, std::ios::binary);
    f << body.str();
    if (!f) throw std::runtime_error("cannot write " + (fs::path(out_dir) / name).string());
  }

  ojson summary;
  summary["version"] = version_string();
  summary["config_hash"] = hex64(config.hash);
  summary["seed"] = config.seed;
  summary["config"] = ojson::parse(config.effective_json);
  ojson results = ojson::array();
  for (const auto& e : outcome.entries) {
    ojson r;
    r["suite"] = e.suite;
    r["statistic"] = e.statistic;
    r["value"] = number_or_string(e.value);
    r["stderr"] = number_or_string(e.std_error);
    r["band"] = ojson::array({number_or_string(e.lower), number_or_string(e.upper)});
    r["pass"] = e.pass;
    if (!e.note.empty()) r["note"] = e.note;
    results.push_back(r);
  }
  summary["results"] = results;
  summary["warnings"] = outcome.warnings;
  summary["pass"] = outcome.pass();
  std::ofstream f(fs::path(out_dir) / "summary.json", std::ios::binary);
  f << summary.dump(2) << '\n';
  if (!f) throw std::runtime_error("cannot write summary.json");
  return outcome;
}

int run_command(const std::string& config_path, const std::string& out_override, unsigned workers,
                std::ostream& out, std::ostream& err) {
  ExperimentConfig cfg;
  try {
    cfg = load_config(config_path);
  } catch (const ConfigError& e) {
    err << e.what() << '\n';
    return kExitConfig;
  }
  const std::string dir = out_override.empty() ? cfg.output : out_override;
  try {
    const RunOutcome res = run_experiment(cfg, dir, workers, &err);
    for (const auto& e : res.entries)
      out << (e.pass ? "PASS " : "FAIL ") << e.suite << ' ' << e.statistic << " = "
          << format_real(e.value) << " (stderr " << format_real(e.std_error) << ")\n";
    for (const auto& w : res.warnings) err << "warning: " << w << '\n';
    out << (res.pass() ? "all suites passed" : "some checks failed") << " -> " << dir << '\n';
    return res.pass() ? kExitPass : kExitFail;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::invalid_argument& e) {
    err << config_path << ": " << e.what() << '\n';
    return kExitConfig;
  }
}

std::string describe_model(const std::string& kind_name) {
  std::string name = kind_name == "LinearOU-test" ? "LinearOU" : kind_name;
  const ModelKind kind = model_kind_from_string(name);
  std::ostringstream os;
  switch (kind) {
  case ModelKind::InertialLangevin:
    os << "InertialLangevin: kinetic Langevin particles, z = (x, v) in R^{2d}\n"
          "  SDE   dx = alpha v dt\n"
          "        dv = -alpha (grad U(x) + gamma v) dt + sqrt(2 alpha) dW\n"
          "  SPDE  d mu = alpha (-v . grad_x mu + div_v((grad U + gamma v) mu) + Lap_v mu) dt\n"
          "              + sqrt(2) div_v(sqrt(mu) xi)\n"
          "  params  d (default 1), gamma >= 0 friction (default 1), potential U:\n"
          "          zero | quadratic(stiffness): U = stiffness |x|^2 / 2 |\n"
          "          double_well(a, b): U = a (|x|^2 - b)^2\n"
          "  caveats U must be bounded below with bounded Hessian; the double well\n"
          "          violates this and needs allow_unbounded_hessian = true.\n"
          "          Noise acts on v only (hypoelliptic).\n";
    break;
  case ModelKind::ActiveMatter:
    os << "ActiveMatter: self-propelled particles, z = (x1, x2, theta)\n"
          "  SDE   dx = alpha speed (cos theta, sin theta) dt\n"
          "        dtheta = sqrt(alpha) dW\n"
          "  SPDE  d mu = alpha (-g(theta) . grad_x mu + 1/2 d_theta^2 mu) dt + d_theta(sqrt(mu) xi)\n"
          "  params  speed |g| (default 1)\n"
          "  caveats noise acts on the angle only (hypoelliptic); theta is unwrapped.\n";
    break;
  case ModelKind::InteractingVFP:
    os << "InteractingVFP: kinetic Langevin particles with a mean-field pair force\n"
          "  SDE   dx = alpha v dt\n"
          "        dv = [-alpha (grad U + gamma v) + F_mu(x)] dt + sqrt(2 alpha) dW\n"
          "        F_mu(x) = <mu, f_int(x, .)>,\n"
          "        f_int(x, x') = strength (x' - x) exp(-|x - x'|^2 / (2 range^2))\n"
          "  SPDE  Vlasov-Fokker-Planck Dean-Kawasaki equation with the extra transport\n"
          "        term -div_v(F_mu mu) dt\n"
          "  G     G(mu) = 1/2 <mu, v . F_mu>, so that F = sigma sigma^T grad dG/dmu\n"
          "  params  d, gamma, potential (as InertialLangevin), pair {strength, range}\n"
          "  caveats Girsanov reweighting assumes small |strength|.\n";
    break;
  case ModelKind::Flocking:
    os << "Flocking: active particles with angular alignment, z = (x1, x2, theta)\n"
          "  SDE   dx = alpha speed (cos theta, sin theta) dt\n"
          "        dtheta = F_mu(z) dt + sqrt(alpha) dW\n"
          "        F_mu(z) = <mu, chi_R(|x - x'|) H'(theta - theta')>,  H(theta) = -coupling cos theta\n"
          "  cutoff chi_R(r) = 1 for r <= R, 0 for r >= R + eps, C^1 smoothstep in between\n"
          "  SPDE  active-matter Dean-Kawasaki equation with the alignment transport\n"
          "        term -d_theta(F_mu mu) dt\n"
          "  G     G(mu) = 1/2 <mu (x) mu, chi_R H>\n"
          "  params  speed, flocking {coupling, radius R (default 1), width eps (default 0.25)}\n"
          "  caveats small coupling keeps the Girsanov weights well conditioned.\n";
    break;
  case ModelKind::LinearOU:
    os << "LinearOU: linear test diffusion dz = alpha A z dt + sqrt(alpha) S dW\n"
          "  default kinetic oscillator A = [[0, 1], [-1, -gamma]], S = (0, sqrt 2)^T\n"
          "  SPDE  d mu = alpha (-div(A z mu) + 1/2 S S^T : Hess mu) dt + div(sqrt(mu) S xi)\n"
          "  params  gamma, or a general drift_matrix (k x k), sigma (k x l), k, l\n"
          "  caveats closed-form mean and covariance are available for oracle tests.\n";
    break;
  }
  os << "  alpha: mass scale; mu_t = (1/alpha) sum_i delta_{z_i(t)}\n";
  return os.str();
}

} // namespace dk
