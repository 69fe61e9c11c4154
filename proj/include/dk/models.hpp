#pragma once

#include <string>
#include <vector>

#include "dk/ensemble.hpp"
#include "dk/test_function.hpp"
#include "dk/types.hpp"

namespace dk {

enum class ModelKind { InertialLangevin, ActiveMatter, InteractingVFP, Flocking, LinearOU };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

/// Isotropic confining potential U on R^d.
struct PotentialSpec {
  enum class Kind { Zero, Quadratic, DoubleWell };
  Kind kind = Kind::Zero;
  double stiffness = 1.0; // Quadratic: U = stiffness/2 |x|^2
  double a = 1.0;         // DoubleWell: U = a (|x|^2 - b)^2
  double b = 1.0;

  static PotentialSpec zero() { return {}; }
  static PotentialSpec quadratic(double stiffness) { return {Kind::Quadratic, stiffness, 1.0, 1.0}; }
  static PotentialSpec double_well(double a, double b) { return {Kind::DoubleWell, 1.0, a, b}; }

  double value(ConstVec x) const;
  void gradient(ConstVec x, MutVec out) const;
  /// Row-major d x d.
  void hessian(ConstVec x, MutVec out) const;
  bool has_bounded_hessian() const { return kind != Kind::DoubleWell; }
};

/// Smooth pair force f_int(x, x') = strength (x' - x) exp(-|x - x'|^2 / (2 range^2)).
struct PairForceSpec {
  double strength = 0.0;
  double range = 1.0;
};

/// Alignment interaction H(theta) = -coupling cos(theta) under the cutoff chi_R.
struct FlockingSpec {
  double coupling = 0.0;
  double radius = 1.0; // R
  double width = 0.25; // epsilon
};

/// Polynomial smoothstep cutoff: 1 on [0, R], 0 on [R + eps, inf), C^1.
struct Cutoff {
  double radius = 1.0;
  double width = 0.25;

  double value(double r) const;
  double derivative(double r) const;
  double second_derivative(double r) const;
};

/// A diffusion model dz = b dt + sigma dW with optional mean-field force F_mu.
///
/// State layouts:
///   InertialLangevin, InteractingVFP   z = (x, v) in R^{2d}, sigma = sqrt(2) (0; I)
///   ActiveMatter, Flocking             z = (x1, x2, theta),  sigma = (0, 0, 1)^T
///   LinearOU                           b(z) = A z, constant sigma = S
struct ModelSpec {
  ModelKind kind = ModelKind::InertialLangevin;
  std::size_t d = 1; // spatial dimension
  std::size_t k = 2; // state dimension
  std::size_t l = 1; // noise dimension
  double alpha = 1.0;

  double gamma = 0.0;
  PotentialSpec potential;
  double speed = 1.0; // propulsion |g|
  PairForceSpec pair;
  FlockingSpec flocking;
  std::vector<double> drift_matrix; // LinearOU only, k x k

  std::vector<double> sigma;   // k x l, row-major
  std::vector<double> sigma_sigma_t; // k x k
  bool allow_unbounded_hessian = false;
  bool kinetic = false; // position/velocity split available

  static ModelSpec inertial_langevin(std::size_t d, double gamma, PotentialSpec potential,
                                     double alpha = 1.0);
  static ModelSpec active_matter(double speed, double alpha = 1.0);
  static ModelSpec interacting_vfp(std::size_t d, double gamma, PotentialSpec potential,
                                   PairForceSpec pair, double alpha = 1.0);
  static ModelSpec flocking_model(double speed, FlockingSpec flocking, double alpha = 1.0);
  /// General linear SDE dz = A z dt + S dW.
  static ModelSpec linear_ou(std::vector<double> drift_matrix, std::vector<double> sigma,
                             std::size_t k, std::size_t l, double alpha = 1.0);
  /// The kinetic oscillator dx = v dt, dv = (-x - gamma v) dt + sqrt(2) dW.
  static ModelSpec linear_ou_kinetic(double gamma, double alpha = 1.0);

  bool interacting() const {
    return kind == ModelKind::InteractingVFP || kind == ModelKind::Flocking;
  }
  /// Same model with the interaction removed (F = 0).
  ModelSpec without_interaction() const;
  ModelSpec with_alpha(double new_alpha) const;

  double sigma_at(std::size_t row, std::size_t col) const { return sigma[row * l + col]; }
  double diffusion_matrix_at(std::size_t i, std::size_t j) const {
    return sigma_sigma_t[i * k + j];
  }

  /// Throws std::invalid_argument on inconsistent fields.
  void validate() const;
  std::string describe() const;

private:
  void finalize();
};

/// b(z). Throws std::invalid_argument for non-finite input.
std::vector<double> drift(const ModelSpec& model, ConstVec z);
void drift_into(const ModelSpec& model, ConstVec z, MutVec out);

/// sigma(z), k x l row-major (constant for all catalogued models).
std::vector<double> diffusion(const ModelSpec& model, ConstVec z);

/// L phi(z) = b . grad phi + 1/2 sigma sigma^T : hess phi.
double apply_generator(const ModelSpec& model, const TestFunction& phi, ConstVec z);
double apply_generator(const ModelSpec& model, const Jet& phi, ConstVec z);

/// Gamma(phi)(z) = 1/2 |sigma^T grad phi|^2.
double carre_du_champ(const ModelSpec& model, const TestFunction& phi, ConstVec z);
/// |sigma^T g|^2 for a gradient vector g.
double sigma_t_norm2(const ModelSpec& model, ConstVec grad);

/// F_mu(z); zero for non-interacting models.
std::vector<double> interaction_force(const ModelSpec& model, const EmpiricalMeasure& mu,
                                      ConstVec z);
void interaction_force_into(const ModelSpec& model, const EmpiricalMeasure& mu, ConstVec z,
                            MutVec out);
/// F_mu at every atom of mu, n x k row-major.
void interaction_forces_at_atoms(const ModelSpec& model, const EmpiricalMeasure& mu,
                                 MutVec out);

/// G(mu): 1/2 double sum of chi_R H (flocking) or c <mu, v . F_mu> (VFP).
double interaction_functional(const ModelSpec& model, const EmpiricalMeasure& mu);

/// First flat derivative dG/dmu(mu, z) with spatial gradient and Hessian.
Jet variation_G(const ModelSpec& model, const EmpiricalMeasure& mu, ConstVec z);

struct SecondVariation {
  double value = 0.0;
  /// Mixed block d^2 / dz1_i dz2_j, row-major k x k.
  std::vector<double> mixed;
};

/// Second flat derivative d^2G/dmu^2(z1, z2); both catalogued G are quadratic,
/// so this does not depend on mu.
SecondVariation second_variation_G(const ModelSpec& model, ConstVec z1, ConstVec z2);

/// sigma sigma^T : D d^2G/dmu^2 at z, where D takes the mixed block on the diagonal.
double second_variation_trace(const ModelSpec& model, ConstVec z);

} // namespace dk
