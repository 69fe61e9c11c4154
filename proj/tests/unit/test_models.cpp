#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

#include "dk/ensemble.hpp"
#include "dk/models.hpp"
#include "dk/test_function.hpp"

using namespace dk;

namespace {

constexpr double kPi = std::numbers::pi;

ModelSpec langevin() { return ModelSpec::inertial_langevin(1, 1.0, PotentialSpec::quadratic(1.0)); }

ModelSpec flocking(double coupling, double alpha = 1.0) {
  return ModelSpec::flocking_model(1.0, {coupling, 1.0, 0.25}, alpha);
}

ModelSpec vfp() {
  return ModelSpec::interacting_vfp(2, 0.5, PotentialSpec::quadratic(0.7), {0.3, 1.2}, 2.0);
}

std::vector<TestFunction> catalogue(std::size_t k) {
  std::vector<double> c(k, 0.2), w(k, 0.0), w2(k, 0.0);
  w[0] = 1.3;
  w[k - 1] = -0.4;
  w2[k - 1] = 0.9;
  const TestFunction bump = TestFunction::gaussian_bump(c, 0.8, 1.5);
  const TestFunction cosine = TestFunction::cosine(w, 0.7, 0.3);
  return {bump, cosine, TestFunction::product(bump, TestFunction::cosine(w2, 1.0, -0.2)),
          TestFunction::constant(k, 2.5)};
}

std::vector<double> random_point(std::mt19937_64& gen, std::size_t k, double scale = 1.5) {
  std::normal_distribution<double> nd(0.0, scale);
  std::vector<double> z(k);
  for (double& x : z) x = nd(gen);
  return z;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

} // namespace

TEST(Drift, CatalogueExamples) {
  const std::vector<double> z{1.0, 2.0};
  const auto b = drift(langevin(), z);
  EXPECT_DOUBLE_EQ(b[0], 2.0);
  EXPECT_DOUBLE_EQ(b[1], -3.0);

  const auto ba = drift(ModelSpec::active_matter(1.0), std::vector<double>{0, 0, 0});
  EXPECT_DOUBLE_EQ(ba[0], 1.0);
  EXPECT_DOUBLE_EQ(ba[1], 0.0);
  EXPECT_DOUBLE_EQ(ba[2], 0.0);

  const auto b0 = drift(ModelSpec::inertial_langevin(1, 0.0, PotentialSpec::zero()),
                        std::vector<double>{0.4, -1.7});
  EXPECT_DOUBLE_EQ(b0[0], -1.7);
  EXPECT_DOUBLE_EQ(b0[1], 0.0);

  const auto bo = drift(ModelSpec::linear_ou_kinetic(1.0), std::vector<double>{1.0, 2.0});
  EXPECT_DOUBLE_EQ(bo[0], 2.0);
  EXPECT_DOUBLE_EQ(bo[1], -3.0);
}

TEST(Drift, RejectsNonFinite) {
  EXPECT_THROW(drift(langevin(), std::vector<double>{NAN, 0.0}), std::invalid_argument);
  EXPECT_THROW(drift(langevin(), std::vector<double>{0.0, INFINITY}), std::invalid_argument);
}

TEST(Diffusion, CatalogueExamples) {
  const auto s = diffusion(langevin(), std::vector<double>{0, 0});
  ASSERT_EQ(s.size(), 2u);
  EXPECT_DOUBLE_EQ(s[0], 0.0);
  EXPECT_DOUBLE_EQ(s[1], std::sqrt(2.0));

  const auto sa = diffusion(ModelSpec::active_matter(1.0), std::vector<double>{0, 0, 0});
  EXPECT_EQ(sa, (std::vector<double>{0.0, 0.0, 1.0}));

  const ModelSpec m3 = ModelSpec::inertial_langevin(3, 1.0, PotentialSpec::zero());
  const auto s3 = diffusion(m3, std::vector<double>(6, 0.0));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(s3[i * 3 + j], 0.0);
}

TEST(Generator, ConstantIsExactlyZero) {
  std::mt19937_64 gen(1);
  for (const ModelSpec& m : {langevin(), ModelSpec::active_matter(1.0), vfp(),
                             ModelSpec::linear_ou_kinetic(0.5)}) {
    const TestFunction c = TestFunction::constant(m.k, 3.0);
    for (int i = 0; i < 20; ++i) EXPECT_EQ(apply_generator(m, c, random_point(gen, m.k)), 0.0);
  }
}

TEST(Generator, CatalogueExamples) {
  const TestFunction sin_v = TestFunction::cosine({0.0, 1.0}, 1.0, -kPi / 2);
  EXPECT_NEAR(apply_generator(langevin(), sin_v, std::vector<double>{1.0, 0.0}), -1.0, 1e-14);
  const TestFunction cos_x = TestFunction::cosine({1.0, 0.0});
  EXPECT_NEAR(apply_generator(langevin(), cos_x, std::vector<double>{kPi / 2, 2.0}), -2.0, 1e-14);
}

TEST(Generator, MatchesFiniteDifferenceOperator) {
  // L phi assembled from central differences of phi.
  std::mt19937_64 gen(2);
  const ModelSpec m = langevin();
  const TestFunction phi = catalogue(2)[2];
  const double h = 1e-4;
  for (int trial = 0; trial < 20; ++trial) {
    const auto z = random_point(gen, 2);
    auto at = [&](double dx, double dv) { return phi.value(std::vector<double>{z[0] + dx, z[1] + dv}); };
    const double px = (at(h, 0) - at(-h, 0)) / (2 * h);
    const double pv = (at(0, h) - at(0, -h)) / (2 * h);
    const double pvv = (at(0, h) - 2 * at(0, 0) + at(0, -h)) / (h * h);
    const double expect = z[1] * px + (-z[0] - z[1]) * pv + pvv;
    EXPECT_NEAR(apply_generator(m, phi, z), expect, 1e-5);
  }
}

TEST(CarreDuChamp, ExamplesAndSign) {
  const TestFunction sin_v = TestFunction::cosine({0.0, 1.0}, 1.0, -kPi / 2);
  EXPECT_NEAR(carre_du_champ(langevin(), sin_v, std::vector<double>{0.3, 0.0}), 1.0, 1e-14);
  EXPECT_EQ(carre_du_champ(langevin(), TestFunction::constant(2, 1.0), std::vector<double>{1, 1}), 0.0);
  std::mt19937_64 gen(3);
  for (const auto& phi : catalogue(2))
    for (int i = 0; i < 50; ++i) EXPECT_GE(carre_du_champ(langevin(), phi, random_point(gen, 2)), 0.0);
}

TEST(TestFunctions, GradientAndHessianMatchFiniteDifferences) {
  std::mt19937_64 gen(4);
  const double h = 1e-5;
  for (std::size_t k : {2u, 3u, 4u}) {
    for (const auto& phi : catalogue(k)) {
      for (int trial = 0; trial < 100; ++trial) {
        auto z = random_point(gen, k);
        const auto g = phi.gradient(z);
        const auto H = phi.hessian(z);
        for (std::size_t i = 0; i < k; ++i) {
          auto zp = z, zm = z;
          zp[i] += h;
          zm[i] -= h;
          const double fd = (phi.value(zp) - phi.value(zm)) / (2 * h);
          EXPECT_LE(rel_err(g[i], fd), 1e-6) << phi.describe();
          const auto gp = phi.gradient(zp), gm = phi.gradient(zm);
          for (std::size_t j = 0; j < k; ++j)
            EXPECT_LE(rel_err(H[j * k + i], (gp[j] - gm[j]) / (2 * h)), 1e-6) << phi.describe();
        }
        const Jet jet = phi.evaluate(z);
        EXPECT_DOUBLE_EQ(jet.value, phi.value(z));
      }
    }
  }
}

TEST(TestFunctions, SupNormBoundsValues) {
  std::mt19937_64 gen(5);
  for (const auto& phi : catalogue(3))
    for (int i = 0; i < 200; ++i) EXPECT_LE(std::abs(phi.value(random_point(gen, 3))), phi.sup_norm() + 1e-15);
  EXPECT_TRUE(TestFunction::gaussian_bump({0.0}, 1.0).nonnegative());
  EXPECT_FALSE(TestFunction::cosine({1.0}).nonnegative());
}

TEST(Potential, DerivativesMatchFiniteDifferences) {
  std::mt19937_64 gen(6);
  const double h = 1e-5;
  for (const PotentialSpec& U : {PotentialSpec::quadratic(1.7), PotentialSpec::double_well(0.5, 1.2)}) {
    for (int trial = 0; trial < 50; ++trial) {
      auto x = random_point(gen, 2);
      std::vector<double> g(2), H(4);
      U.gradient(x, g);
      U.hessian(x, H);
      for (std::size_t i = 0; i < 2; ++i) {
        auto xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        EXPECT_LE(rel_err(g[i], (U.value(xp) - U.value(xm)) / (2 * h)), 1e-6);
        std::vector<double> gp(2), gm(2);
        U.gradient(xp, gp);
        U.gradient(xm, gm);
        for (std::size_t j = 0; j < 2; ++j) EXPECT_LE(rel_err(H[j * 2 + i], (gp[j] - gm[j]) / (2 * h)), 1e-6);
      }
    }
  }
}

TEST(Cutoff, SmoothstepShape) {
  const Cutoff chi{1.0, 0.25};
  EXPECT_EQ(chi.value(0.0), 1.0);
  EXPECT_EQ(chi.value(1.0), 1.0);
  EXPECT_EQ(chi.value(1.25), 0.0);
  EXPECT_EQ(chi.value(3.0), 0.0);
  EXPECT_NEAR(chi.value(1.125), 0.5, 1e-15);
  double prev = 1.0;
  for (double r = 0.0; r < 1.5; r += 0.01) {
    EXPECT_LE(chi.value(r), prev + 1e-15);
    prev = chi.value(r);
  }
  const double h = 1e-6;
  for (double r : {1.05, 1.1, 1.2}) {
    EXPECT_NEAR(chi.derivative(r), (chi.value(r + h) - chi.value(r - h)) / (2 * h), 1e-6);
    EXPECT_NEAR(chi.second_derivative(r), (chi.derivative(r + h) - chi.derivative(r - h)) / (2 * h), 1e-5);
  }
}

TEST(Interaction, FlockingExamples) {
  const ModelSpec m = flocking(1.0);
  // Beyond the cutoff.
  {
    const Ensemble e = Ensemble::from_atoms({{0, 0, 0.3}, {2, 0, 1.4}}, 3, 1.0);
    const EmpiricalMeasure mu(e);
    const auto f = interaction_force(m, mu, e.particle(0));
    for (double x : f) EXPECT_EQ(x, 0.0);
    EXPECT_NEAR(interaction_functional(m, mu), -1.0, 1e-15);
  }
  // One neighbour in range at angle difference pi/2.
  {
    const Ensemble e = Ensemble::from_atoms({{0.5, 0, 0}}, 3, 1.0);
    const EmpiricalMeasure mu(e);
    const auto f = interaction_force(m, mu, std::vector<double>{0, 0, kPi / 2});
    EXPECT_EQ(f[0], 0.0);
    EXPECT_EQ(f[1], 0.0);
    EXPECT_NEAR(f[2], 1.0, 1e-15);
  }
  // Equal angles.
  {
    const Ensemble e = Ensemble::from_atoms({{0, 0, 0.7}, {0.3, 0.2, 0.7}, {0.1, -0.4, 0.7}}, 3, 1.0);
    const EmpiricalMeasure mu(e);
    for (std::size_t i = 0; i < e.size(); ++i)
      for (double x : interaction_force(m, mu, e.particle(i))) EXPECT_EQ(x, 0.0);
  }
  // Single atom, alpha = 2: G = 1/2 (1/alpha^2) chi(0) H(0).
  {
    const ModelSpec m2 = flocking(0.6, 2.0);
    const Ensemble e = Ensemble::from_atoms({{0.1, 0.2, 0.3}}, 3, 2.0);
    EXPECT_NEAR(interaction_functional(m2, EmpiricalMeasure(e)), 0.5 * 0.25 * (-0.6), 1e-15);
  }
  // Empty measure.
  {
    const Ensemble e(3, 1.0, {});
    EXPECT_EQ(interaction_functional(m, EmpiricalMeasure(e)), 0.0);
  }
}

TEST(Interaction, NonInteractingModelsHaveZeroForce) {
  const Ensemble e = Ensemble::from_atoms({{0.5, 0.1}, {0.3, 0.2}}, 2, 1.0);
  for (double x : interaction_force(langevin(), EmpiricalMeasure(e), e.particle(0))) EXPECT_EQ(x, 0.0);
}

namespace {

Ensemble random_ensemble(std::mt19937_64& gen, const ModelSpec& m, std::size_t n, double scale) {
  std::vector<double> c;
  for (std::size_t i = 0; i < n; ++i)
    for (double x : random_point(gen, m.k, scale)) c.push_back(x);
  return Ensemble(m.k, m.alpha, c);
}

} // namespace

TEST(Variation, ForceIdentity) {
  std::mt19937_64 gen(7);
  for (const ModelSpec& m : {flocking(0.4, 1.0), flocking(0.2, 3.0), vfp()}) {
    for (int trial = 0; trial < 50; ++trial) {
      const Ensemble e = random_ensemble(gen, m, 6, 0.7);
      const EmpiricalMeasure mu(e);
      const auto z = random_point(gen, m.k, 0.7);
      const Jet jet = variation_G(m, mu, z);
      const auto f = interaction_force(m, mu, z);
      for (std::size_t i = 0; i < m.k; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < m.k; ++j) s += m.diffusion_matrix_at(i, j) * jet.grad[j];
        EXPECT_NEAR(s, f[i], 1e-10);
      }
    }
  }
}

TEST(Variation, FlatDerivativeOfQuadraticFunctional) {
  // G(mu + w delta_z) - G(mu) = w dG/dmu(mu, z) + w^2/2 d2G/dmu2(z, z), exactly.
  std::mt19937_64 gen(8);
  for (const ModelSpec& m : {flocking(0.4, 2.0), vfp()}) {
    for (int trial = 0; trial < 30; ++trial) {
      const Ensemble e = random_ensemble(gen, m, 5, 0.7);
      const auto z = random_point(gen, m.k, 0.7);
      Ensemble grown = e;
      grown.coords.insert(grown.coords.end(), z.begin(), z.end());
      grown.ids.push_back(99);
      const double w = 1.0 / m.alpha;
      const double lhs = interaction_functional(m, EmpiricalMeasure(grown)) -
                         interaction_functional(m, EmpiricalMeasure(e));
      const double rhs = w * variation_G(m, EmpiricalMeasure(e), z).value +
                         0.5 * w * w * second_variation_G(m, z, z).value;
      EXPECT_NEAR(lhs, rhs, 1e-12 * std::max(1.0, std::abs(lhs)));
    }
  }
}

TEST(Variation, SecondVariationIsDerivativeOfFirst) {
  std::mt19937_64 gen(9);
  for (const ModelSpec& m : {flocking(0.4, 2.0), vfp()}) {
    for (int trial = 0; trial < 30; ++trial) {
      const Ensemble e = random_ensemble(gen, m, 4, 0.7);
      const auto z = random_point(gen, m.k, 0.7);
      const auto y = random_point(gen, m.k, 0.7);
      Ensemble grown = e;
      grown.coords.insert(grown.coords.end(), y.begin(), y.end());
      grown.ids.push_back(99);
      const double diff = variation_G(m, EmpiricalMeasure(grown), z).value -
                          variation_G(m, EmpiricalMeasure(e), z).value;
      EXPECT_NEAR(diff, second_variation_G(m, z, y).value / m.alpha, 1e-12);
    }
  }
}

TEST(Variation, JetMatchesFiniteDifferences) {
  std::mt19937_64 gen(10);
  const double h = 1e-5;
  for (const ModelSpec& m : {flocking(0.4, 1.0), vfp()}) {
    for (int trial = 0; trial < 30; ++trial) {
      const Ensemble e = random_ensemble(gen, m, 5, 0.6);
      const EmpiricalMeasure mu(e);
      const auto z = random_point(gen, m.k, 0.6);
      const Jet jet = variation_G(m, mu, z);
      for (std::size_t i = 0; i < m.k; ++i) {
        auto zp = z, zm = z;
        zp[i] += h;
        zm[i] -= h;
        const Jet jp = variation_G(m, mu, zp), jm = variation_G(m, mu, zm);
        EXPECT_LE(rel_err(jet.grad[i], (jp.value - jm.value) / (2 * h)), 1e-6);
        for (std::size_t j = 0; j < m.k; ++j)
          EXPECT_LE(rel_err(jet.h(j, i), (jp.grad[j] - jm.grad[j]) / (2 * h)), 1e-6);
      }
    }
  }
}

TEST(Variation, MixedBlockMatchesFiniteDifferences) {
  std::mt19937_64 gen(11);
  const double h = 1e-4;
  for (const ModelSpec& m : {flocking(0.4, 1.0), vfp()}) {
    for (int trial = 0; trial < 20; ++trial) {
      const auto z1 = random_point(gen, m.k, 0.6);
      const auto z2 = random_point(gen, m.k, 0.6);
      const SecondVariation s = second_variation_G(m, z1, z2);
      for (std::size_t i = 0; i < m.k; ++i)
        for (std::size_t j = 0; j < m.k; ++j) {
          auto val = [&](double a, double b) {
            auto p = z1, q = z2;
            p[i] += a;
            q[j] += b;
            return second_variation_G(m, p, q).value;
          };
          const double fd = (val(h, h) - val(h, -h) - val(-h, h) + val(-h, -h)) / (4 * h * h);
          EXPECT_NEAR(s.mixed[i * m.k + j], fd, 1e-5);
        }
    }
  }
}

TEST(Variation, RejectsNonInteracting) {
  const Ensemble e = Ensemble::from_atoms({{0.0, 0.0}}, 2, 1.0);
  EXPECT_THROW(variation_G(langevin(), EmpiricalMeasure(e), e.particle(0)), std::invalid_argument);
  EXPECT_THROW(interaction_functional(langevin(), EmpiricalMeasure(e)), std::invalid_argument);
}

TEST(ModelSpec, DoubleWellNeedsOverride) {
  ModelSpec m = ModelSpec::inertial_langevin(1, 1.0, PotentialSpec::double_well(1.0, 1.0));
  EXPECT_THROW(m.validate(), std::invalid_argument);
  m.allow_unbounded_hessian = true;
  EXPECT_NO_THROW(m.validate());
}

TEST(ModelSpec, ValidationRejectsBadFields) {
  EXPECT_THROW(langevin().with_alpha(0.0).validate(), std::invalid_argument);
  EXPECT_THROW(ModelSpec::inertial_langevin(1, -1.0, PotentialSpec::zero()).validate(), std::invalid_argument);
  EXPECT_THROW(flocking(0.2).with_alpha(-1.0).validate(), std::invalid_argument);
  ModelSpec f = flocking(0.2);
  f.flocking.width = 0.0;
  EXPECT_THROW(f.validate(), std::invalid_argument);
  EXPECT_THROW(model_kind_from_string("Nope"), std::invalid_argument);
}

TEST(ModelSpec, WithoutInteraction) {
  const ModelSpec f = flocking(0.2).without_interaction();
  EXPECT_EQ(f.kind, ModelKind::ActiveMatter);
  EXPECT_FALSE(f.interacting());
  EXPECT_EQ(vfp().without_interaction().kind, ModelKind::InertialLangevin);
  EXPECT_TRUE(ModelSpec::linear_ou_kinetic(1.0).kinetic);
}
