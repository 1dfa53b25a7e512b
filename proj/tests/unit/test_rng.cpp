#include <doctest.h>

#include <cmath>
#include <cstdint>

#include "curvebound/rng.hpp"

using namespace curvebound;

// Known-answer vectors published with the Random123 reference implementation.
TEST_CASE("philox4x32-10 known answers") {
  using A4 = std::array<std::uint32_t, 4>;
  using A2 = std::array<std::uint32_t, 2>;
  CHECK(philox4x32(A4{0, 0, 0, 0}, A2{0, 0}) ==
        A4{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(philox4x32(A4{0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff},
                   A2{0xffffffff, 0xffffffff}) ==
        A4{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(philox4x32(A4{0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344},
                   A2{0xa4093822, 0x299f31d0}) ==
        A4{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("uniform_open stays inside (0,1)") {
  CHECK(uniform_open(0, 0) > 0.0);
  CHECK(uniform_open(0xffffffff, 0xffffffff) < 1.0);
  CHECK(uniform_open(0x80000000, 0) == doctest::Approx(0.5));
}

TEST_CASE("normals are pure functions of their coordinates") {
  const NormalSource a(123), b(123), c(124);
  CHECK(a.normal(5, 7, 1) == b.normal(5, 7, 1));
  CHECK(a.normal(5, 7, 1) != c.normal(5, 7, 1));
  CHECK(a.normal(5, 7, 0) != a.normal(5, 7, 1));
  CHECK(a.normal(5, 7, 0) != a.substream(1).normal(5, 7, 0));
  const auto pr = a.pair(9, 2, 0);
  CHECK(pr[0] == a.normal(9, 2, 0));
  CHECK(pr[1] == a.normal(9, 2, 1));
}

TEST_CASE("normal moments") {
  const NormalSource s(2024);
  const int n = 200000;
  double m1 = 0, m2 = 0, m4 = 0;
  for (int i = 0; i < n; ++i) {
    const double z = s.normal(i, 0, 0);
    m1 += z;
    m2 += z * z;
    m4 += z * z * z * z;
  }
  m1 /= n;
  m2 /= n;
  m4 /= n;
  // Standard errors: 1/sqrt(n), sqrt(2/n), sqrt(96/n).
  CHECK(std::abs(m1) < 4.0 / std::sqrt(n));
  CHECK(std::abs(m2 - 1.0) < 4.0 * std::sqrt(2.0 / n));
  CHECK(std::abs(m4 - 3.0) < 4.0 * std::sqrt(96.0 / n));
}
