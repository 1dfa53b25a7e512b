#pragma once

#include <array>
#include <cstdint>

namespace curvebound {

/// Philox4x32-10 block function (Salmon et al. counter-based generator).
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                        std::array<std::uint32_t, 2> key);

/// Uniform in (0, 1) from 64 bits; never returns 0 or 1.
double uniform_open(std::uint32_t hi, std::uint32_t lo);

/// Standard normals as a pure function of their coordinates, so simulations
/// are reproducible under any path-to-thread assignment.
class NormalSource {
 public:
  explicit NormalSource(std::uint64_t seed, std::uint32_t stream = 0)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        stream_(stream) {}

  /// Two independent normals for (path, step, block).
  [[nodiscard]] std::array<double, 2> pair(std::uint64_t path, std::uint32_t step,
                                           std::uint32_t block) const;

  /// Normal for (path, step, component).
  [[nodiscard]] double normal(std::uint64_t path, std::uint32_t step, std::uint32_t comp) const {
    return pair(path, step, comp / 2)[comp % 2];
  }

  [[nodiscard]] NormalSource substream(std::uint32_t stream) const {
    NormalSource s = *this;
    s.stream_ = stream;
    return s;
  }

 private:
  std::array<std::uint32_t, 2> key_;
  std::uint32_t stream_;
};

}  // namespace curvebound
