#include "curvebound/rng.hpp"

#include <cmath>
#include <numbers>

namespace curvebound {

namespace {
constexpr std::uint32_t kM0 = 0xD2511F53u;
constexpr std::uint32_t kM1 = 0xCD9E8D57u;
constexpr std::uint32_t kW0 = 0x9E3779B9u;
constexpr std::uint32_t kW1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}
}  // namespace

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> c,
                                        std::array<std::uint32_t, 2> k) {
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      k[0] += kW0;
      k[1] += kW1;
    }
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kM0, c[0], hi0, lo0);
    mulhilo(kM1, c[2], hi1, lo1);
    c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
  }
  return c;
}

double uniform_open(std::uint32_t hi, std::uint32_t lo) {
  // 52 random bits plus half a step: the largest value is 1 - 2^-53, still below 1.
  const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 12;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-52;
}

std::array<double, 2> NormalSource::pair(std::uint64_t path, std::uint32_t step,
                                         std::uint32_t block) const {
  const std::array<std::uint32_t, 4> ctr{step, (stream_ << 16) ^ block,
                                         static_cast<std::uint32_t>(path),
                                         static_cast<std::uint32_t>(path >> 32)};
  const auto w = philox4x32(ctr, key_);
  const double u1 = uniform_open(w[0], w[1]);
  const double u2 = uniform_open(w[2], w[3]);
  const double rad = std::sqrt(-2.0 * std::log(u1));
  const double ang = 2.0 * std::numbers::pi * u2;
  return {rad * std::cos(ang), rad * std::sin(ang)};
}

}  // namespace curvebound
