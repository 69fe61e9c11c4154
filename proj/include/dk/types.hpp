#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dk {

/// Largest state dimension k supported by the fixed-size scratch buffers.
inline constexpr std::size_t kMaxDim = 8;

using ConstVec = std::span<const double>;
using MutVec = std::span<double>;

/// Value, gradient and row-major Hessian of a scalar field at one point.
struct Jet {
  std::size_t dim = 0;
  double value = 0.0;
  std::array<double, kMaxDim> grad{};
  std::array<double, kMaxDim * kMaxDim> hess{};

  double& h(std::size_t i, std::size_t j) { return hess[i * dim + j]; }
  double h(std::size_t i, std::size_t j) const { return hess[i * dim + j]; }
};

/// Raised when a simulation produces a non-finite state.
class NumericalError : public std::runtime_error {
public:
  NumericalError(const std::string& what, std::size_t replica, std::size_t step)
      : std::runtime_error(what), replica_(replica), step_(step) {}
  std::size_t replica() const { return replica_; }
  std::size_t step() const { return step_; }

private:
  std::size_t replica_;
  std::size_t step_;
};

bool all_finite(ConstVec z);

inline double dot(ConstVec a, ConstVec b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double squared_norm(ConstVec a) { return dot(a, a); }

} // namespace dk
