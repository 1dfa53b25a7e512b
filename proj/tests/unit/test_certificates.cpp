#include <doctest.h>

#include <cmath>
#include <numbers>

#include "curvebound/certificates.hpp"
#include "curvebound/errors.hpp"

using namespace curvebound;

TEST_CASE("constructors") {
  const auto p = from_poincare(2.5);
  CHECK(p.cost == CostKind::hamming);
  CHECK(p.C == 2.5);
  CHECK(p.source == CertSource::poincare);

  const auto l = from_logsobolev(3.0);
  CHECK(l.cost == CostKind::euclidean);
  CHECK(l.C == doctest::Approx(9.0).epsilon(1e-15));
  CHECK(l.input_constant == 3.0);

  CHECK_THROWS_AS(from_poincare(0.0), PreconditionError);
  CHECK_THROWS_AS(from_logsobolev(-1.0), PreconditionError);
  CHECK_THROWS_AS(user_certificate(std::nan(""), CostKind::hamming), PreconditionError);
  CHECK(to_string(CertSource::logsobolev) == "logsobolev");
}

TEST_CASE("alpha and its conjugate satisfy Young with equality at l = 2s/C") {
  for (double C : {0.3, 1.0, 4.0}) {
    const auto c = user_certificate(C, CostKind::hamming);
    for (int i = 0; i <= 40; ++i) {
      const double s = 0.1 * i;
      for (int j = 0; j <= 40; ++j) {
        const double l = 0.15 * j;
        CHECK(l * s <= c.alpha(s) + c.alpha_star(l) + 1e-12);
      }
      const double l = 2.0 * s / C;
      CHECK(l * s == doctest::Approx(c.alpha(s) + c.alpha_star(l)).epsilon(1e-12));
    }
    CHECK(c.alpha_star(-1.0) == 0.0);
  }
}

TEST_CASE("laplace moment bound") {
  const auto c = user_certificate(1.0, CostKind::hamming);
  FunctionalStats fs{0.0, 1.0, 1.0, 1.0};
  CHECK(laplace_moment_bound(c, fs, 1.0, 1.0) ==
        doctest::Approx(std::exp(-0.75)).epsilon(1e-14));
  CHECK(laplace_moment_bound(c, fs, 1.0, 1.0) == doctest::Approx(0.4724).epsilon(1e-4));

  SUBCASE("constant functional uses the exact value") {
    FunctionalStats k{2.0, 2.0, 0.0, 1.5};
    CHECK(laplace_moment_bound(c, k, 0.7, 3.0) ==
          doctest::Approx(1.5 * std::exp(-0.7 * 2.0 * 3.0)).epsilon(1e-14));
  }
  SUBCASE("shifting u by c multiplies the bound by exp(-l c t)") {
    const auto e = from_logsobolev(1.3);
    FunctionalStats g{0.2, 0.9, 0.6, 1.2};
    for (double shift : {-0.5, 0.3, 2.0}) {
      FunctionalStats h = g;
      h.u0 += shift;
      h.mean += shift;
      const double lam = 0.8, t = 1.7;
      CHECK(laplace_moment_bound(e, h, lam, t) ==
            doctest::Approx(laplace_moment_bound(e, g, lam, t) * std::exp(-lam * shift * t))
                .epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS(laplace_moment_bound(c, fs, -1.0, 1.0), PreconditionError);
}

TEST_CASE("laplace split bound") {
  const auto c = user_certificate(1.0, CostKind::hamming);
  FunctionalStats fs{0.0, 1.0, 1.0, 1.0};
  const double b = laplace_split_bound(c, fs, 1.0, 2.0, 0.5);
  // Both exponents: -1*0.5*1*2 = -1 and -2*(0 + (0.5)^2) = -0.5.
  CHECK(b == doctest::Approx(2.0 * std::max(std::exp(-1.0), std::exp(-0.5))).epsilon(1e-14));
  CHECK(b == doctest::Approx(1.2131).epsilon(1e-4));

  FunctionalStats k{0.8, 0.8, 0.0, 1.0};
  CHECK(laplace_split_bound(c, k, 1.0, 2.0, 0.5) ==
        doctest::Approx(2.0 * std::exp(-1.6)).epsilon(1e-14));

  CHECK_THROWS_AS(laplace_split_bound(c, fs, 1.0, 2.0, 1.0), PreconditionError);
  FunctionalStats bad{0.0, -0.1, 1.0, 1.0};
  CHECK_THROWS_AS(laplace_split_bound(c, bad, 1.0, 2.0, 0.5), PreconditionError);
}

TEST_CASE("entropy deviation bound") {
  const auto c = user_certificate(1.0, CostKind::hamming);
  FunctionalStats fs;
  CHECK(entropy_deviation_bound(c, fs, 0.0, 1.0, 1.0) ==
        doctest::Approx(std::numbers::ln2).epsilon(1e-15));
  CHECK(entropy_deviation_bound(c, fs, std::numbers::ln2, 1.0, 2.0) ==
        doctest::Approx(std::numbers::ln2).epsilon(1e-15));
  CHECK_THROWS_AS(entropy_deviation_bound(c, fs, 0.0, 1.0, 0.0), PreconditionError);
  CHECK_THROWS_AS(entropy_deviation_bound(c, fs, 0.0, 0.0, 1.0), PreconditionError);
}

TEST_CASE("dilated certificates") {
  const double lam = 1.6;
  const auto p = dilate_certificate(from_poincare(2.0), lam);
  CHECK(p.C == doctest::Approx(2.0 * lam * lam).epsilon(1e-15));
  const auto l = dilate_certificate(from_logsobolev(2.0), lam);
  // C_LS scales by lam^2, so C = C_LS^2 scales by lam^4.
  CHECK(l.input_constant == doctest::Approx(2.0 * lam * lam).epsilon(1e-15));
  CHECK(l.C == doctest::Approx(std::pow(2.0 * lam * lam, 2)).epsilon(1e-14));
  CHECK(dilate_certificate(from_poincare(2.0), 1.0).C == 2.0);
  CHECK_THROWS_AS(dilate_certificate(p, 0.0), PreconditionError);
}
