#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dk/integrate.hpp"
#include "dk/measure.hpp"
#include "dk/models.hpp"
#include "dk/test_function.hpp"

namespace dk {

/// One diagnostic per offending config location; line is 1-based, 0 if unknown.
struct ConfigIssue {
  std::size_t line = 0;
  std::string message;
};

class ConfigError : public std::runtime_error {
public:
  ConfigError(std::string source, std::vector<ConfigIssue> issues);
  const std::vector<ConfigIssue>& issues() const { return issues_; }

private:
  std::vector<ConfigIssue> issues_;
};

enum class Suite { Simulate, Martingale, Duality, Mgf, Girsanov, Moments, Exhaustion };
std::string to_string(Suite suite);
std::optional<Suite> suite_from_string(const std::string& name);
const std::vector<Suite>& all_suites();

struct InitialSpec {
  enum class Kind { Atoms, Gaussian, Uniform };
  Kind kind = Kind::Atoms;
  std::vector<std::vector<double>> atoms;
  std::size_t n = 0;
  std::vector<double> mean, std;   // Gaussian
  std::vector<double> lower, upper; // Uniform
};

struct IntegratorSpec {
  Scheme scheme = Scheme::EulerMaruyama;
  double dt = 1e-3;
  double t_end = 1.0;
};

struct BudgetSpec {
  std::size_t replicas = 10000;
  std::size_t inner_samples = 10000;
};

/// A suite run with its resolved model, initial state, integrator and budget.
struct SuiteRun {
  Suite suite = Suite::Simulate;
  std::string label;
  ModelSpec model;
  InitialSpec initial;
  IntegratorSpec integrator;
  BudgetSpec budgets;

  // simulate
  std::size_t record_replicas = 1;
  // martingale
  std::vector<TestFunction> test_functions;
  std::vector<double> checkpoints;
  double qv_constant = 10.0;
  // duality, mgf, girsanov, exhaustion
  double t = 0.0;
  std::optional<TestFunction> phi;
  double allowance_per_dt = 2.0;
  // mgf
  std::optional<ProbeSet> set;
  std::vector<double> lambdas;
  // girsanov
  std::string observable = "laplace";
  bool fault_injection = true;
  double fault_sigmas = 5.0;
  // exhaustion
  double radius = 1.0;
  std::vector<double> grid_lower, grid_upper;
  std::size_t grid_points = 13;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string output = "dk-out";
  std::vector<Suite> suites;
  std::vector<SuiteRun> runs; // in suite-list order
  std::string effective_json; // canonical effective configuration
  std::uint64_t hash = 0;     // FNV-1a of effective_json
};

/// Parses and validates a JSON-compatible configuration. Every issue found is
/// reported with its line; throws ConfigError if any.
ExperimentConfig parse_config(const std::string& text, const std::string& source = "<config>");
ExperimentConfig load_config(const std::string& path);

std::uint64_t fnv1a64(const std::string& bytes);

/// Materialises the initial atoms; samplers draw from the InitialState stream.
Ensemble build_initial(const InitialSpec& spec, const ModelSpec& model, std::uint64_t seed);

} // namespace dk
