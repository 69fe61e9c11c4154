#pragma once

#include <array>
#include <cstdint>
#include <utility>

namespace dk {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
/// Pure function of (counter, key); no hidden state.
using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

PhiloxCounter philox4x32(PhiloxCounter counter, PhiloxKey key);

std::uint64_t splitmix64(std::uint64_t x);

/// Maps two 32-bit words onto a double in (0, 1].
double uniform_open_closed(std::uint32_t hi, std::uint32_t lo);

/// Purpose tags keep independent uses of one master seed apart.
enum class StreamPurpose : std::uint32_t {
  Particles = 1,
  LDiffusion = 2,
  InitialState = 3,
  Synthetic = 4,
};

/// A keyed noise stream. Every Gaussian is addressed by
/// (seed, purpose, replica, particle, step, component), so results do not
/// depend on the order in which replicas or particles are visited.
class NoiseStream {
public:
  NoiseStream(std::uint64_t seed, std::uint64_t replica,
              StreamPurpose purpose = StreamPurpose::Particles);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t replica() const { return replica_; }
  StreamPurpose purpose() const { return purpose_; }

  /// Two independent standard normals for the given block.
  std::pair<double, double> gaussian_pair(std::uint64_t particle,
                                          std::uint64_t step,
                                          std::uint32_t block) const;

  /// Fills `out[0..count)` with standard normals for (particle, step).
  void gaussians(std::uint64_t particle, std::uint64_t step, double* out,
                 std::size_t count) const;

  /// Uniform in (0, 1] addressed the same way.
  double uniform(std::uint64_t particle, std::uint64_t step,
                 std::uint32_t block) const;

private:
  PhiloxCounter counter(std::uint64_t particle, std::uint64_t step,
                        std::uint32_t block) const;

  std::uint64_t seed_;
  std::uint64_t replica_;
  StreamPurpose purpose_;
  PhiloxKey key_;
};

} // namespace dk
