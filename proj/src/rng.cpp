#include "dk/rng.hpp"

#include <cmath>
#include <numbers>

namespace dk {

namespace {

constexpr std::uint32_t kMulA = 0xD2511F53u;
constexpr std::uint32_t kMulB = 0xCD9E8D57u;
constexpr std::uint32_t kWeylA = 0x9E3779B9u;
constexpr std::uint32_t kWeylB = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi,
                    std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

inline PhiloxCounter round(const PhiloxCounter& c, const PhiloxKey& k) {
  std::uint32_t hi0, lo0, hi1, lo1;
  mulhilo(kMulA, c[0], hi0, lo0);
  mulhilo(kMulB, c[2], hi1, lo1);
  return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
}

} // namespace

PhiloxCounter philox4x32(PhiloxCounter counter, PhiloxKey key) {
  for (int r = 0; r < 10; ++r) {
    if (r > 0) {
      key[0] += kWeylA;
      key[1] += kWeylB;
    }
    counter = round(counter, key);
  }
  return counter;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

double uniform_open_closed(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t bits =
      (static_cast<std::uint64_t>(hi) << 21) ^ (static_cast<std::uint64_t>(lo) >> 11);
  return (static_cast<double>(bits) + 1.0) * 0x1.0p-53;
}

NoiseStream::NoiseStream(std::uint64_t seed, std::uint64_t replica,
                         StreamPurpose purpose)
    : seed_(seed), replica_(replica), purpose_(purpose) {
  const std::uint64_t mixed =
      splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(purpose)));
  key_ = {static_cast<std::uint32_t>(mixed), static_cast<std::uint32_t>(mixed >> 32)};
}

PhiloxCounter NoiseStream::counter(std::uint64_t particle, std::uint64_t step,
                                   std::uint32_t block) const {
  // step and replica get 32 bits each, particle 24, block 8.
  return {static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(replica_),
          static_cast<std::uint32_t>(particle & 0xFFFFFFu) |
              (static_cast<std::uint32_t>(block & 0xFFu) << 24),
          static_cast<std::uint32_t>(step >> 32) ^
              static_cast<std::uint32_t>(replica_ >> 32) * 0x9E3779B9u};
}

std::pair<double, double> NoiseStream::gaussian_pair(std::uint64_t particle,
                                                     std::uint64_t step,
                                                     std::uint32_t block) const {
  const PhiloxCounter bits = philox4x32(counter(particle, step, block), key_);
  const double u1 = uniform_open_closed(bits[0], bits[1]);
  const double u2 = uniform_open_closed(bits[2], bits[3]);
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  return {r * std::cos(angle), r * std::sin(angle)};
}

void NoiseStream::gaussians(std::uint64_t particle, std::uint64_t step, double* out,
                            std::size_t count) const {
  std::uint32_t block = 0;
  std::size_t i = 0;
  while (i < count) {
    const auto [a, b] = gaussian_pair(particle, step, block++);
    out[i++] = a;
    if (i < count) out[i++] = b;
  }
}

double NoiseStream::uniform(std::uint64_t particle, std::uint64_t step,
                            std::uint32_t block) const {
  const PhiloxCounter bits = philox4x32(counter(particle, step, block), key_);
  return uniform_open_closed(bits[0], bits[1]);
}

} // namespace dk
