#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "dk/integrate.hpp"
#include "dk/martingale.hpp"
#include "dk/measure.hpp"
#include "dk/rng.hpp"

using namespace dk;

namespace {

ModelSpec langevin() { return ModelSpec::inertial_langevin(1, 1.0, PotentialSpec::quadratic(1.0)); }

Ensemble five_atoms() {
  return Ensemble::from_atoms({{-1.0, 0.5}, {-0.5, -0.5}, {0.0, 0.0}, {0.5, 1.0}, {1.0, -1.0}}, 2, 1.0);
}

// Random-walk traces M_j = sum of N(drift dt, dt) increments with predicted QV t.
std::vector<MartingaleTrace> random_walks(std::size_t replicas, std::size_t steps, double dt,
                                          double drift, std::uint64_t seed) {
  std::vector<MartingaleTrace> out(replicas);
  for (std::size_t r = 0; r < replicas; ++r) {
    const NoiseStream noise(seed, r, StreamPurpose::Synthetic);
    MartingaleTrace& tr = out[r];
    tr.grid_dt = dt;
    double m = 0.0, q = 0.0;
    for (std::size_t j = 0; j <= steps; ++j) {
      if (j > 0) {
        const double inc = drift * dt + std::sqrt(dt) * noise.gaussian_pair(0, j, 0).first;
        m += inc;
        q += inc * inc;
      }
      tr.times.push_back(static_cast<double>(j) * dt);
      tr.values.push_back(m);
      tr.predicted_qv.push_back(static_cast<double>(j) * dt);
      tr.realized_qv.push_back(q);
    }
  }
  return out;
}

std::vector<MartingaleTrace> model_traces(const ModelSpec& m, const Ensemble& e, const TestFunction& phi,
                                          double t, double dt, std::size_t replicas, std::uint64_t seed) {
  std::vector<MartingaleTrace> out;
  out.reserve(replicas);
  for (std::size_t r = 0; r < replicas; ++r)
    out.push_back(martingale_statistic(m, simulate(m, e, t, dt, seed, r), phi));
  return out;
}

} // namespace

TEST(MartingaleStatistic, StartsAtPairing) {
  const TestFunction phi = TestFunction::gaussian_bump({0.0, 0.0}, 1.0);
  const Trajectory tr = simulate(langevin(), five_atoms(), 0.1, 0.01, 1);
  const MartingaleTrace m = martingale_statistic(langevin(), tr, phi);
  EXPECT_EQ(m.values[0], pair(EmpiricalMeasure(five_atoms()), phi));
  EXPECT_EQ(m.predicted_qv[0], 0.0);
  EXPECT_EQ(m.realized_qv[0], 0.0);
  EXPECT_EQ(m.dt(), 0.01);
  EXPECT_TRUE(m.uniform_grid);
}

TEST(MartingaleStatistic, ConstantFunction) {
  const TestFunction c = TestFunction::constant(2, 2.5);
  const Trajectory tr = simulate(langevin(), five_atoms(), 0.5, 0.01, 2);
  const MartingaleTrace m = martingale_statistic(langevin(), tr, c);
  for (std::size_t j = 0; j < m.size(); ++j) {
    EXPECT_EQ(m.values[j], 2.5 * 5.0);
    EXPECT_EQ(m.realized_qv[j], 0.0);
    EXPECT_EQ(m.predicted_qv[j], 0.0);
  }
}

TEST(MartingaleStatistic, IndependentRecomputationWithInteraction) {
  const ModelSpec m = ModelSpec::flocking_model(1.0, {0.4, 1.0, 0.25}, 2.0);
  const Ensemble e = Ensemble::from_atoms({{0, 0, 0}, {0.3, 0.1, 1}, {0.5, -0.2, 2}}, 3, 2.0);
  const TestFunction phi = TestFunction::product(TestFunction::gaussian_bump({0, 0, 0}, 1.5),
                                                 TestFunction::cosine({0, 0, 1}, 1.0, 0.3));
  const Trajectory tr = simulate(m, e, 0.2, 0.01, 3);
  const MartingaleTrace trace = martingale_statistic(m, tr, phi);

  auto rates = [&](const Ensemble& s, double& drift_rate, double& qv_rate) {
    const EmpiricalMeasure mu(s);
    drift_rate = qv_rate = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const auto z = s.particle(i);
      const auto f = interaction_force(m, mu, z);
      const auto g = phi.gradient(z);
      double fg = 0.0;
      for (std::size_t a = 0; a < 3; ++a) fg += f[a] * g[a];
      drift_rate += (m.alpha * apply_generator(m, phi, z) + fg) / m.alpha;
      qv_rate += g[2] * g[2] / m.alpha;
    }
  };
  double integral = 0.0, qv = 0.0, realized = 0.0, pd = 0.0, pq = 0.0;
  rates(tr.snapshots[0], pd, pq);
  for (std::size_t j = 0; j < tr.size(); ++j) {
    double d, q;
    rates(tr.snapshots[j], d, q);
    if (j > 0) {
      integral += 0.5 * tr.dt * (pd + d);
      qv += 0.5 * tr.dt * (pq + q);
    }
    pd = d;
    pq = q;
    const double M = pair(EmpiricalMeasure(tr.snapshots[j]), phi) - integral;
    if (j > 0) realized += (M - trace.values[j - 1]) * (M - trace.values[j - 1]);
    EXPECT_NEAR(trace.values[j], M, 1e-12);
    EXPECT_NEAR(trace.predicted_qv[j], qv, 1e-12);
    EXPECT_NEAR(trace.realized_qv[j], realized, 1e-12);
  }
}

TEST(MartingaleStatistic, BuilderMatchesBatch) {
  const TestFunction phi = TestFunction::cosine({0.0, 1.0}, 1.0, 0.3);
  const Trajectory tr = simulate(langevin(), five_atoms(), 0.2, 0.01, 4);
  MartingaleBuilder b(langevin(), phi);
  for (const auto& s : tr.snapshots) b.add(s);
  const MartingaleTrace x = std::move(b).finish();
  const MartingaleTrace y = martingale_statistic(langevin(), tr, phi);
  EXPECT_EQ(x.values, y.values);
  EXPECT_EQ(x.predicted_qv, y.predicted_qv);
  EXPECT_EQ(x.realized_qv, y.realized_qv);
}

TEST(MartingaleStatistic, RejectsShortGrid) {
  MartingaleBuilder b(langevin(), TestFunction::constant(2, 1.0));
  b.add(five_atoms());
  EXPECT_THROW(std::move(b).finish(), std::invalid_argument);
}

TEST(MartingaleStatistic, QuadraticVariationNondecreasing) {
  const TestFunction phi = TestFunction::gaussian_bump({0.0, 0.0}, 1.0);
  const MartingaleTrace m = martingale_statistic(langevin(), simulate(langevin(), five_atoms(), 1.0, 0.01, 5), phi);
  for (std::size_t j = 1; j < m.size(); ++j) {
    EXPECT_GE(m.predicted_qv[j], m.predicted_qv[j - 1]);
    EXPECT_GE(m.realized_qv[j], m.realized_qv[j - 1]);
  }
}

TEST(MartingaleStatistic, AlphaScalesPredictedQv) {
  // Same atoms read with weight 1/alpha: predicted QV scales by exactly 1/alpha.
  const TestFunction phi = TestFunction::gaussian_bump({0.0, 0.0}, 1.0);
  const Trajectory tr = simulate(langevin(), five_atoms(), 0.5, 0.01, 6);
  Trajectory heavy = tr;
  for (auto& s : heavy.snapshots) s.alpha = 2.0;
  const MartingaleTrace a = martingale_statistic(langevin(), tr, phi);
  const MartingaleTrace b = martingale_statistic(langevin().with_alpha(2.0), heavy, phi);
  for (std::size_t j = 0; j < a.size(); ++j)
    EXPECT_NEAR(b.predicted_qv[j], 0.5 * a.predicted_qv[j], 1e-15 * std::max(1.0, a.predicted_qv[j]));
}

TEST(Thin, KeepsRunningSums) {
  const TestFunction phi = TestFunction::gaussian_bump({0.0, 0.0}, 1.0);
  const MartingaleTrace m = martingale_statistic(langevin(), simulate(langevin(), five_atoms(), 1.0, 0.01, 7), phi);
  const std::vector<double> keep{0.0, 0.5, 1.0};
  const MartingaleTrace t = thin(m, keep);
  ASSERT_EQ(t.size(), 3u);
  EXPECT_EQ(t.values[1], m.values[50]);
  EXPECT_EQ(t.realized_qv[2], m.realized_qv[100]);
  EXPECT_EQ(t.dt(), 0.01);
  EXPECT_THROW(m.index_of(0.505), std::invalid_argument);
}

TEST(IncrementTest, NeedsEnoughReplicas) {
  const auto walks = random_walks(50, 10, 0.1, 0.0, 1);
  const std::vector<double> cp{0.0, 1.0};
  EXPECT_THROW(increment_test(walks, cp), std::invalid_argument);
}

TEST(IncrementTest, ConstantTracesAreDegeneratePass) {
  std::vector<MartingaleTrace> traces(100);
  for (auto& t : traces) {
    t.times = {0.0, 0.5, 1.0};
    t.values = {3.0, 3.0, 3.0};
    t.predicted_qv = t.realized_qv = {0.0, 0.0, 0.0};
    t.grid_dt = 0.5;
  }
  const std::vector<double> cp{0.0, 0.5, 1.0};
  const TestReport r = increment_test(traces, cp);
  ASSERT_EQ(r.entries.size(), 3u);
  for (const auto& e : r.entries) {
    EXPECT_TRUE(e.degenerate);
    EXPECT_TRUE(e.pass);
  }
  const TestReport q = qv_test(traces, 1.0);
  EXPECT_TRUE(q.pass());
  EXPECT_TRUE(q.entries[0].degenerate);
}

TEST(IncrementTest, RandomWalkPassRate) {
  const std::vector<double> cp{0.0, 1.0};
  int passes = 0;
  const int batches = 400;
  for (int b = 0; b < batches; ++b)
    passes += increment_test(random_walks(100, 10, 0.1, 0.0, 1000 + b), cp).pass();
  // Nominal 99.73%; a binomial 4-sigma floor.
  EXPECT_GE(passes, 393);
}

TEST(IncrementTest, InjectedDriftFails) {
  // Drift of 10 standard errors: se of the mean increment over [0, 1] is 1/sqrt(400).
  const std::vector<double> cp{0.0, 1.0};
  const TestReport r = increment_test(random_walks(400, 10, 0.1, 10.0 / 20.0, 5), cp);
  EXPECT_FALSE(r.pass());
  EXPECT_GT(r.entries[0].statistic, 6.0);
}

TEST(QvTest, RandomWalkRatioNearOne) {
  const TestReport r = qv_test(random_walks(1000, 100, 0.01, 0.0, 9), 1.0);
  ASSERT_EQ(r.entries.size(), 1u);
  EXPECT_TRUE(r.pass());
  EXPECT_NEAR(r.entries[0].statistic, 1.0, 0.05);
}

TEST(QvTest, ZeroPredictionWithPositiveRealizedFails) {
  auto walks = random_walks(100, 10, 0.1, 0.0, 10);
  for (auto& t : walks) std::fill(t.predicted_qv.begin(), t.predicted_qv.end(), 0.0);
  const TestReport r = qv_test(walks, 1.0);
  EXPECT_FALSE(r.pass());
  EXPECT_FALSE(r.entries[0].note.empty());
}

TEST(QvTest, RequiresUniformGrid) {
  auto walks = random_walks(100, 10, 0.1, 0.0, 11);
  walks[3].uniform_grid = false;
  EXPECT_THROW(qv_test(walks, 1.0), std::invalid_argument);
}

TEST(QvTest, BrownianParticleRatioApproachesOne) {
  // Brownian particles with phi = cos: the realized QV bias shrinks with dt.
  const ModelSpec m = ModelSpec::linear_ou({0.0}, {1.0}, 1, 1);
  const Ensemble e = Ensemble::from_atoms({{0.3}, {-0.7}, {1.1}}, 1, 1.0);
  const TestFunction phi = TestFunction::cosine({1.0});
  double prev = INFINITY;
  for (double dt : {0.2, 0.1, 0.05}) {
    const auto traces = model_traces(m, e, phi, 1.0, dt, 4000, 12);
    const TestEntry q = qv_test(traces, 1.0).entries[0];
    const double dev = std::abs(q.statistic - 1.0);
    EXPECT_LT(dev, prev + 3.0 * q.std_error);
    prev = dev;
  }
  EXPECT_LT(prev, 0.05);
}

TEST(QvTest, RefinementOnLinearOscillator) {
  // |rho - 1| at dt/2 is at most 0.75 |rho - 1| at dt, averaged over 5 seeds.
  const ModelSpec m = ModelSpec::linear_ou_kinetic(1.0);
  const Ensemble e = Ensemble::from_atoms({{0.5, 0.0}, {-0.5, 0.5}, {0.0, -1.0}}, 2, 1.0);
  const TestFunction phi = TestFunction::gaussian_bump({0.0, 0.0}, 1.0);
  auto mean_dev = [&](double dt) {
    double s = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto traces = model_traces(m, e, phi, 1.0, dt, 2000, 100 + seed);
      s += std::abs(qv_test(traces, 1.0).entries[0].statistic - 1.0);
    }
    return s / 5.0;
  };
  const double coarse = mean_dev(0.1), fine = mean_dev(0.05);
  EXPECT_LE(fine, 0.75 * coarse) << "coarse " << coarse << " fine " << fine;
}

TEST(ModelMartingale, LangevinIncrementsAndQv) {
  const TestFunction phi = TestFunction::gaussian_bump({0.0, 0.0}, 1.0);
  const auto traces = model_traces(langevin(), five_atoms(), phi, 1.0, 0.01, 2000, 13);
  const std::vector<double> cp{0.0, 0.5, 1.0};
  const TestReport inc = increment_test(traces, cp);
  EXPECT_TRUE(inc.pass());
  EXPECT_TRUE(qv_test(traces, 1.0).pass());
}

TEST(TraceCsv, HeaderAndRows) {
  const TestFunction phi = TestFunction::gaussian_bump({0.0, 0.0}, 1.0);
  const MartingaleTrace m = martingale_statistic(langevin(), simulate(langevin(), five_atoms(), 0.02, 0.01, 14), phi);
  std::ostringstream os;
  write_trace_csv(os, m);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "time,M,predicted_qv,realized_qv");
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  EXPECT_EQ(rows, 3);
}
