#include "dk/statistics.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace dk {

void StreamingMoments::push(double x) {
  ++count_;
  const double delta = x - mean_;
  mean_ += delta / static_cast<double>(count_);
  m2_ += delta * (x - mean_);
}

void StreamingMoments::merge(const StreamingMoments& other) {
  if (other.count_ == 0) return;
  if (count_ == 0) {
    *this = other;
    return;
  }
  const double na = static_cast<double>(count_);
  const double nb = static_cast<double>(other.count_);
  const double n = na + nb;
  const double delta = other.mean_ - mean_;
  mean_ = (na * mean_ + nb * other.mean_) / n;
  m2_ += other.m2_ + delta * delta * na * nb / n;
  count_ += other.count_;
}

double StreamingMoments::variance() const {
  if (count_ < 2) throw std::invalid_argument("variance needs at least two samples");
  return std::max(0.0, m2_ / static_cast<double>(count_ - 1));
}

MCEstimate StreamingMoments::estimate() const {
  if (count_ < 2) throw std::invalid_argument("estimate needs at least two samples");
  return {mean_, std::sqrt(variance() / static_cast<double>(count_)), count_};
}

StreamingMoments moments_of(std::span<const double> values) {
  StreamingMoments sm;
  for (double v : values) sm.push(v);
  return sm;
}

MCEstimate delta_method_exp(const MCEstimate& est) {
  const double m = std::exp(est.mean);
  return {m, m * est.std_error, est.n};
}

MCEstimate delta_method_log(const MCEstimate& est) {
  if (!(est.mean > 0.0)) throw std::domain_error("delta_method_log: mean must be positive");
  return {std::log(est.mean), est.std_error / est.mean, est.n};
}

double effective_sample_size(std::span<const double> weights) {
  double s = 0.0, s2 = 0.0;
  for (double w : weights) {
    s += w;
    s2 += w * w;
  }
  return s2 > 0.0 ? s * s / s2 : 0.0;
}

WeightedMean weighted_mean(std::span<const double> values, std::span<const double> weights) {
  if (values.size() != weights.size())
    throw std::invalid_argument("weighted_mean: size mismatch");
  if (values.size() < 2) throw std::invalid_argument("weighted_mean: need at least two samples");
  double sw = 0.0, swx = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (weights[i] < 0.0) throw std::invalid_argument("weighted_mean: negative weight");
    sw += weights[i];
    swx += weights[i] * values[i];
  }
  if (!(sw > 0.0)) throw std::invalid_argument("weighted_mean: zero total weight");
  const double mean = swx / sw;
  // Ratio estimator variance: sum w_i^2 (x_i - mean)^2 / (sum w)^2.
  double acc = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double r = weights[i] * (values[i] - mean);
    acc += r * r;
  }
  const double n = static_cast<double>(values.size());
  const double se = std::sqrt(acc * n / (n - 1.0)) / sw;
  return {{mean, se, values.size()}, effective_sample_size(weights)};
}

double combined_stderr(double se_a, double se_b) { return std::hypot(se_a, se_b); }

double z_score(double a, double se_a, double b, double se_b) {
  const double se = combined_stderr(se_a, se_b);
  const double diff = a - b;
  if (se == 0.0) return diff == 0.0 ? 0.0 : std::copysign(INFINITY, diff);
  return diff / se;
}

bool Band::contains(double deviation, double std_error) const {
  return std::abs(deviation) <= width(std_error);
}

std::string Band::describe(double std_error) const {
  std::ostringstream os;
  os << "|dev| <= " << sigmas << "*" << std_error;
  if (allowance != 0.0) os << " + " << allowance;
  return os.str();
}

} // namespace dk
