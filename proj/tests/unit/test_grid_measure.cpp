#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "curvebound/errors.hpp"
#include "curvebound/grid_measure.hpp"

using namespace curvebound;

TEST_CASE("gaussian normalizer matches ln sqrt(2 pi)") {
  const auto p = make_gaussian(1.0, 1, {{-8, 8}});
  const auto m = build_grid_measure(p, 2048);
  const double oracle = 0.5 * std::log(2.0 * std::numbers::pi);
  CHECK(oracle == doctest::Approx(0.918939).epsilon(1e-6));
  CHECK(m.log_norm == doctest::Approx(oracle).epsilon(1e-9));
  double total = 0.0;
  for (double w : m.weights) {
    CHECK(w >= 0.0);
    total += w;
  }
  CHECK(std::abs(total - 1.0) <= 1e-12);
  CHECK(m.tail_mass_bound <= 1e-10);
}

TEST_CASE("2D product gaussian normalizer") {
  const auto p = make_product_gaussian({1.0, 4.0}, {{-9, 9}, {-5, 5}});
  const auto m = build_grid_measure(p, 257);
  // Z = 2 pi / sqrt(1 * 4)
  CHECK(m.log_norm == doctest::Approx(std::log(std::numbers::pi)).epsilon(1e-7));
  const auto cov = covariance(m);
  CHECK(cov[0] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(cov[3] == doctest::Approx(0.25).epsilon(1e-6));
  CHECK(std::abs(cov[1]) < 1e-12);
}

TEST_CASE("flat potential gives uniform interior weights") {
  const auto p = make_flat(1, {{0, 1}});
  const auto m = build_grid_measure(p, 64);
  for (std::size_t i = 1; i + 1 < m.size(); ++i) {
    CHECK(m.weights[i] == doctest::Approx(m.weights[1]).epsilon(1e-14));
  }
  CHECK(m.weights[0] == doctest::Approx(0.5 * m.weights[1]).epsilon(1e-14));
  CHECK(m.tail_mass_bound == 0.0);
  CHECK(m.log_norm == doctest::Approx(std::log(1.0) - p.value(std::vector<double>{0.5})));
}

TEST_CASE("box too small is a domain error") {
  const auto p = make_gaussian(1.0, 1, {{-1, 1}});
  CHECK_THROWS_AS(build_grid_measure(p, 256), DomainError);
  // Gaussian tail oracle: mass outside [-1,1] is about 0.317.
  boost::math::normal_distribution<> nd;
  CHECK(2.0 * boost::math::cdf(nd, -1.0) == doctest::Approx(0.3173).epsilon(1e-3));
}

TEST_CASE("large potential offset is shifted away before exponentiation") {
  auto p = make_polynomial({5000.0, 0.0, 0.5}, {{-9, 9}});
  const auto m = build_grid_measure(p, 1024);
  CHECK(std::isfinite(m.log_norm));
  CHECK(m.log_norm == doctest::Approx(0.5 * std::log(2 * std::numbers::pi) - 5000.0).epsilon(1e-12));
}

TEST_CASE("resolution below 16 is rejected") {
  CHECK_THROWS_AS(build_grid_measure(make_gaussian(1.0, 1, {{-8, 8}}), 8), PreconditionError);
}

TEST_CASE("gaussian stats are constant") {
  for (auto cost : {CostKind::hamming, CostKind::euclidean}) {
    const auto p = make_gaussian(2.0, 1, {{-6, 6}});
    const auto m = build_grid_measure(p, 512);
    const auto s = curvature_stats(m, p, cost);
    CHECK(s.rho0 == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(s.mean == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(s.median == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(s.osc == 0.0);
    CHECK(s.lip == 0.0);
    CHECK(s.norm_c == 0.0);
    CHECK(s.mean_src == Provenance::analytic);
  }
}

TEST_CASE("integration by parts: mu(V'') = mu(V'^2)") {
  for (const auto& p : {make_cosine_perturbed_gaussian(0.1, 2.0, {{-10, 10}}),
                        make_polynomial({0, 0, 0.5, 0, 0.25}, {{-5, 5}}),
                        make_quartic(1, {{-3, 3}})}) {
    const auto m = build_grid_measure(p, 4096);
    double lhs = 0, rhs = 0;
    std::vector<double> g(1), h(1);
    for (std::size_t i = 0; i < m.size(); ++i) {
      p.gradient(m.node(i), g);
      p.hessian(m.node(i), h);
      lhs += m.weights[i] * h[0];
      rhs += m.weights[i] * g[0] * g[0];
    }
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-6));
  }
}

TEST_CASE("cosine-perturbed gaussian: rho0 = 0.6, osc = 0.8") {
  const auto p = make_cosine_perturbed_gaussian(0.1, 2.0, {{-10, 10}});
  const auto m = build_grid_measure(p, 4096);
  const auto s = curvature_stats(m, p, CostKind::hamming);
  CHECK(s.rho0 == doctest::Approx(0.6).epsilon(1e-5));
  CHECK(s.osc == doctest::Approx(0.8).epsilon(1e-5));
  CHECK(s.norm_c == s.osc);
  CHECK(s.rho0 <= s.mean);
  CHECK(s.mean <= s.rho0 + s.osc);
  CHECK(s.rho0 <= s.median);
  CHECK(s.median <= s.rho0 + s.osc);
  // The factory ships |a| k^3 = 0.8; the grid estimate approaches it from below.
  const auto a = curvature_stats(m, p, CostKind::euclidean);
  CHECK(a.lip == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(a.lip_src == Provenance::analytic);
  auto q = p;
  q.analytic_lip.reset();
  const auto e = curvature_stats(m, q, CostKind::euclidean);
  CHECK(e.lip <= 0.8);
  CHECK(e.lip == doctest::Approx(0.8).epsilon(1e-4));
  CHECK(e.lip_src == Provenance::grid_estimate);
  CHECK(e.norm_c == e.lip);
}

TEST_CASE("analytic lip takes precedence") {
  auto p = make_cosine_perturbed_gaussian(0.1, 2.0, {{-10, 10}});
  p.analytic_lip = 0.9;
  const auto m = build_grid_measure(p, 1024);
  const auto e = curvature_stats(m, p, CostKind::euclidean);
  CHECK(e.lip == 0.9);
  CHECK(e.lip_src == Provenance::analytic);
}

TEST_CASE("clip_curvature") {
  const auto p = make_cosine_perturbed_gaussian(0.1, 2.0, {{-10, 10}});
  const auto m = build_grid_measure(p, 4096);
  const auto s = curvature_stats(m, p, CostKind::hamming);

  SUBCASE("K above sup rho leaves stats unchanged") {
    const auto c = clip_curvature(s, m, p, 5.0);
    CHECK(c.rho0 == s.rho0);
    CHECK(c.mean == s.mean);
    CHECK(c.osc == s.osc);
  }
  SUBCASE("K = 1 halves the oscillation") {
    const auto c = clip_curvature(s, m, p, 1.0);
    CHECK(c.osc == doctest::Approx(0.4).epsilon(1e-5));
  }
  SUBCASE("K = median keeps mean above median / 2") {
    const auto c = clip_curvature(s, m, p, s.median);
    CHECK(c.mean >= 0.5 * s.median);
    // mean(rho_K) >= K mu(rho >= K)
    const auto field = curvature_field(m, p);
    double above = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (field[i] >= s.median) above += m.weights[i];
    }
    CHECK(c.mean >= s.median * above - 1e-12);
  }
  SUBCASE("clipping never increases mean, osc or norm and never decreases rho0") {
    for (double K : {0.7, 0.9, 1.0, 1.2, 1.4}) {
      const auto c = clip_curvature(s, m, p, K);
      CHECK(c.mean <= s.mean + 1e-15);
      CHECK(c.osc <= s.osc + 1e-15);
      CHECK(c.norm_c <= s.norm_c + 1e-15);
      CHECK(c.rho0 >= s.rho0 - 1e-15);
    }
  }
}

TEST_CASE("kappa stats for |x|^4 and its Lipschitz minorant") {
  const auto p = make_quartic(1, {{-3, 3}});
  const auto m = build_grid_measure(p, 2048);
  const auto k = kappa_stats_for_radial(m, p, CostKind::hamming);
  for (std::size_t i = 0; i < m.size(); i += 97) {
    const double x = m.node(i)[0];
    CHECK(k.values[i] == doctest::Approx(2 * x * x).epsilon(1e-14));
  }
  // kappa~(x) = 2 min(|x|^2, |x|): grid slope oracle gives Lipschitz constant 4 on [-3,3]
  // (the slope of 2|x|^2 at |x| -> 1).
  std::vector<double> minorant(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double r = std::abs(m.node(i)[0]);
    minorant[i] = 2.0 * std::min(r * r, r);
  }
  const auto ms = field_stats(m, minorant, CostKind::euclidean);
  CHECK(ms.lip == doctest::Approx(4.0).epsilon(5e-3));
  CHECK(ms.lip <= 4.0);
  // Beyond |x| = 1 the minorant is 2|x|, slope 2.
  double tail_slope = 0.0;
  for (std::size_t i = 0; i + 1 < m.size(); ++i) {
    const double a = m.node(i)[0], b = m.node(i + 1)[0];
    if (a >= 1.0) tail_slope = std::max(tail_slope, std::abs(minorant[i + 1] - minorant[i]) / (b - a));
  }
  CHECK(tail_slope == doctest::Approx(2.0).epsilon(1e-10));
}

TEST_CASE("weighted quantile") {
  std::vector<double> v{1, 2, 3, 4};
  std::vector<double> w{0.25, 0.25, 0.25, 0.25};
  CHECK(weighted_quantile(v, w, 0.5) == doctest::Approx(2.5));
  CHECK(weighted_quantile(v, w, 0.125) == doctest::Approx(1.0));
  CHECK(weighted_quantile(v, w, 0.875) == doctest::Approx(4.0));
  std::vector<double> v2{3, 1, 2};
  std::vector<double> w2{0.2, 0.6, 0.2};
  CHECK(weighted_quantile(v2, w2, 0.3) == doctest::Approx(1.0));
  CHECK_THROWS_AS(weighted_quantile(v, w, 1.0), PreconditionError);
}

TEST_CASE("dilate_stats matches stats of the dilated potential") {
  const auto p = make_cosine_perturbed_gaussian(0.1, 2.0, {{-10, 10}});
  const double lam = 1.5;
  const auto q = dilate(p, lam);
  const auto mp = build_grid_measure(p, 1024);
  const auto mq = build_grid_measure(q, 1024);  // nodes are lam times those of mp
  for (auto cost : {CostKind::hamming, CostKind::euclidean}) {
    const auto sp = curvature_stats(mp, p, cost);
    const auto sq = curvature_stats(mq, q, cost);
    const auto d = dilate_stats(sp, lam);
    CHECK(sq.rho0 == doctest::Approx(d.rho0).epsilon(1e-10));
    CHECK(sq.mean == doctest::Approx(d.mean).epsilon(1e-10));
    CHECK(sq.osc == doctest::Approx(d.osc).epsilon(1e-10));
    CHECK(sq.lip == doctest::Approx(d.lip).epsilon(1e-10));
    CHECK(sq.median == doctest::Approx(d.median).epsilon(1e-10));
    CHECK(sq.norm_c == doctest::Approx(d.norm_c).epsilon(1e-10));
  }
}

TEST_CASE("floor_to_zero") {
  const auto s = CurvatureStats::make(0.6, 0.97, 0.8, 0.8);
  const auto f = floor_to_zero(s);
  CHECK(f.rho0 == 0.0);
  CHECK(f.osc == doctest::Approx(1.4));
  CHECK(f.norm_c == doctest::Approx(1.4));
  CHECK_THROWS_AS(floor_to_zero(CurvatureStats::make(-0.1, 1, 1, 1)), PreconditionError);
}

TEST_CASE("cumulative and equilibrium quantiles of the standard gaussian") {
  const auto p = make_gaussian(1.0, 1, {{-8, 8}});
  const auto m = build_grid_measure(p, 4096);
  const auto F = cumulative(m);
  boost::math::normal_distribution<> nd;
  for (std::size_t i = 0; i < m.size(); i += 301) {
    CHECK(F[i] == doctest::Approx(boost::math::cdf(nd, m.node(i)[0])).epsilon(1e-5));
  }
  const auto q = equilibrium_quantiles(m, 1000);
  CHECK(std::is_sorted(q.begin(), q.end()));
  for (std::size_t i = 0; i < q.size(); i += 111) {
    const double level = (i + 0.5) / 1000.0;
    CHECK(q[i] == doctest::Approx(boost::math::quantile(nd, level)).epsilon(1e-4));
  }
}
