#pragma once

#include <cstddef>
#include <span>
#include <string>

namespace dk {

/// Pass threshold, in standard errors, used by every statistical check.
inline constexpr double kSigmaThreshold = 3.0;

/// Monte Carlo estimate: sample mean, standard error and sample count.
struct MCEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t n = 0;
};

/// Welford accumulator; mergeable so parallel workers can reduce partial states.
class StreamingMoments {
public:
  void push(double x);
  void merge(const StreamingMoments& other);

  std::size_t count() const { return count_; }
  double mean() const { return mean_; }
  double m2() const { return m2_; }
  /// Unbiased sample variance; requires count >= 2.
  double variance() const;
  /// Requires count >= 2.
  MCEstimate estimate() const;

private:
  std::size_t count_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

StreamingMoments moments_of(std::span<const double> values);

/// First-order propagation through exp: stderr -> exp(mean) * stderr.
MCEstimate delta_method_exp(const MCEstimate& est);
/// First-order propagation through ln; mean must be positive.
MCEstimate delta_method_log(const MCEstimate& est);

struct WeightedMean {
  MCEstimate estimate;
  double ess = 0.0;
};

/// Self-normalised weighted mean sum(w x) / sum(w) with its delta-method
/// standard error and the effective sample size (sum w)^2 / sum w^2.
WeightedMean weighted_mean(std::span<const double> values, std::span<const double> weights);

double effective_sample_size(std::span<const double> weights);

/// z = (a - b) / sqrt(se_a^2 + se_b^2). Returns 0 when both sides agree
/// exactly with zero standard error (degenerate case).
double z_score(double a, double se_a, double b, double se_b);

double combined_stderr(double se_a, double se_b);

/// A symmetric pass band |deviation| <= sigmas * stderr + allowance.
struct Band {
  double sigmas = 3.0;
  double allowance = 0.0;

  double width(double std_error) const { return sigmas * std_error + allowance; }
  bool contains(double deviation, double std_error) const;
  std::string describe(double std_error) const;
};

} // namespace dk
