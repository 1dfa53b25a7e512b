// Acceptance checks: one line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "curvebound/bound_engine.hpp"
#include "curvebound/errors.hpp"
#include "curvebound/grid_measure.hpp"
#include "curvebound/potential.hpp"
#include "curvebound/rng.hpp"
#include "curvebound/sde.hpp"
#include "curvebound/spectral.hpp"

using namespace curvebound;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "[violated: " << what << "] ";
    }
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

bool rel_close(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max(std::abs(a), std::abs(b));
}

SimConfig sim(double dt, double T, std::size_t n, std::uint64_t seed) {
  SimConfig c;
  c.dt = dt;
  c.T = T;
  c.n_paths = n;
  c.seed = seed;
  return c;
}

struct Scenario {
  std::string name;
  Potential pot;
};

std::vector<Scenario> one_dim_scenarios() {
  return {
      {"gaussian rho=1", make_gaussian(1.0, 1, {{-10, 10}})},
      {"cosine a=0.05", make_cosine_perturbed_gaussian(0.05, 2.0, {{-10, 10}})},
      {"cosine a=0.1", make_cosine_perturbed_gaussian(0.1, 2.0, {{-10, 10}})},
      {"quartic", make_quartic(1, {{-3, 3}})},
      {"radial |x|^3", make_radial_power(3.0, 1, {{-4, 4}})},
      {"x^4/4 + x^2/2", make_polynomial({0, 0, 0.5, 0, 0.25}, {{-5, 5}})},
  };
}

// C1: Gaussian constants and the constant-curvature reduction.
void gaussian_reduction(Outcome& o) {
  for (double rho : {0.5, 1.0, 2.0}) {
    const double w = 10.0 / std::sqrt(rho);
    const auto p = make_gaussian(rho, 1, {{-w, w}});
    const auto t0 = Clock::now();
    const auto m = build_grid_measure(p, 4096);
    const auto sr = spectral_gap_1d(m, p);
    const double secs = seconds_since(t0);
    o.detail << "rho=" << rho << ": C_P=" << sr.cp_true << " (" << secs << "s); ";
    o.require(rel_close(sr.cp_true, 1.0 / rho, 1e-3), "C_P = 1/rho within 1e-3");
    o.require(secs < 5.0, "spectral solve under 5 s");

    const auto hs = curvature_stats(m, p, CostKind::hamming);
    const auto es = curvature_stats(m, p, CostKind::euclidean);
    const auto ks = kappa_stats_for_radial(m, p, CostKind::hamming).stats;
    const double cp = 1.0 / rho;
    const std::vector<WICertificate> certs{from_poincare(sr.cp_true), from_logsobolev(2.0 / rho)};
    const double tol = 1e-12;
    for (const auto& c : certs) {
      const auto& s = c.cost == CostKind::hamming ? hs : es;
      for (auto st : {Strategy::alpha_star, Strategy::alpha_optimal}) {
        const auto pb = poincare_bound(s, c, st);
        o.require(pb.valid && rel_close(pb.value, cp, tol), "poincare " + to_string(pb.branch));
        const auto wr = w1_rate_rho(s, c, st);
        o.require(wr.valid && rel_close(wr.value, rho, tol), "w1 rho " + to_string(wr.branch));
        const auto wk = w1_rate_kappa(ks.with_cost(c.cost), c, st, {.r = 4.0});
        o.require(wk.valid && rel_close(wk.value, rho, tol), "w1 kappa " + to_string(wk.branch));
      }
    }
    for (auto w : {PositiveWhich::osc, PositiveWhich::lip}) {
      const auto pb = poincare_bound_positive_curvature(hs, w);
      o.require(pb.valid && pb.knobs.at("eps_prime") == 0.0 && rel_close(pb.value, cp, tol),
                "positive-curvature eps' = 0");
      const auto wr = w1_rate_positive_curvature(hs, w);
      o.require(wr.valid && rel_close(wr.value, rho, tol), "positive-curvature theta = rho");
    }
    const auto t = best_poincare(hs, {certs[0]});
    o.require(t.winner.branch == Branch::be_baseline, "tournament winner is the baseline");
  }
}

// C2: self-improvement sandwich on the cosine perturbation.
void sandwich(Outcome& o) {
  for (double a : {0.05, 0.1}) {
    const auto p = make_cosine_perturbed_gaussian(a, 2.0, {{-10, 10}});
    const auto m = build_grid_measure(p, 4096);
    const double cp_true = spectral_gap_1d(m, p).cp_true;
    const auto s = curvature_stats(m, p, CostKind::hamming);
    o.detail << "a=" << a << ": rho0=" << s.rho0 << " cp_true=" << cp_true;
    for (auto w : {PositiveWhich::osc, PositiveWhich::lip}) {
      const auto r = poincare_bound_positive_curvature(s, w);
      o.detail << " " << to_string(r.branch) << "=" << r.value;
      o.require(r.valid, "branch valid");
      o.require(r.value < 1.0 / s.rho0, "strictly below 1/rho0");
      o.require(r.value >= cp_true - 1e-3, "not below cp_true - 1e-3");
    }
    o.detail << "; ";
  }
}

// C3: quadratic root identity and the beta / beta* crossover.
void quadratic_root(Outcome& o) {
  std::mt19937_64 gen(20240601);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  double worst_agree = 0.0, worst_resid = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double mu = 0.05 + 5.0 * U(gen);
    const double g0 = mu * (0.01 + 0.98 * U(gen));
    const double n = 0.01 + 3.0 * U(gen);
    const double C = 0.05 + 5.0 * U(gen);
    const int a = U(gen) < 0.5 ? 1 : 2;
    const auto r = solve_epsilon_quadratic(mu, g0, n, C, a);
    if (!r || !r->eta_shifted) {
      o.require(false, "admissible input without a root");
      continue;
    }
    worst_agree = std::max(worst_agree, std::abs(r->eta - *r->eta_shifted) / r->eta);
    worst_resid = std::max(worst_resid, std::abs(epsilon_quadratic(r->eta, mu, g0, n, C, a)));
  }
  o.detail << "max rel disagreement " << worst_agree << ", max |h| " << worst_resid << "; ";
  o.require(worst_agree <= 1e-12, "forms agree to 1e-12");
  o.require(worst_resid <= 1e-10, "|h(eta)| <= 1e-10");

  int compared = 0, mismatched = 0, below = 0, above = 0;
  for (int a : {1, 2}) {
    for (double C : {0.5, 1.0, 2.0}) {
      for (double g0 : {0.0, 0.2, 0.6}) {
        const double n = 0.9;
        const double cross = (5.0 * a / 16.0) * C * n * n + g0;
        for (int k = 0; k <= 80; ++k) {
          const double mu = cross * (0.6 + 0.01 * k);
          if (mu < g0) continue;  // a lower bound cannot exceed the mean
          const auto b = compare_beta_branches(mu, g0, n, C, a);
          if (b.case_id != 4 || b.winner == BetaWinner::either) continue;
          // On the crossover itself both rates coincide; rounding decides the sign.
          if (std::abs(mu - cross) <= 1e-9 * cross) continue;
          const double beta = solve_epsilon_quadratic(mu, g0, n, C, a)->eta;
          const bool star_le = b.beta_star <= beta;
          ++compared;
          (mu <= cross ? below : above) += 1;
          if ((b.winner == BetaWinner::beta) != star_le) ++mismatched;
        }
      }
    }
  }
  o.detail << "crossover sweep " << compared << " points (" << below << " below, " << above
           << " above), " << mismatched << " mismatches";
  o.require(below > 0 && above > 0, "sweep crosses the crossover");
  o.require(mismatched == 0, "crossover agrees with direct comparison");
}

// C4: dilation homogeneity of every formula.
void dilation(Outcome& o) {
  std::mt19937_64 gen(77);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  int checks = 0;
  double worst = 0.0;
  auto cmp = [&](double scaled, double expect) {
    ++checks;
    worst = std::max(worst, std::abs(scaled - expect) / std::abs(expect));
  };
  for (int i = 0; i < 100; ++i) {
    const double rho0 = 0.1 + U(gen);
    const auto s = CurvatureStats::make(rho0, rho0 + 0.5 * U(gen), 0.6 * U(gen), 0.5 * U(gen));
    const double lam = std::exp(2.0 * U(gen) - 1.0);
    const double l2 = lam * lam;
    const auto d = dilate_stats(s, lam);
    cmp(be_baseline(d.rho0).first.value, l2 * be_baseline(s.rho0).first.value);
    const std::vector<WICertificate> certs{from_poincare((1.0 + U(gen)) / rho0),
                                           from_logsobolev((2.0 + U(gen)) / rho0)};
    for (const auto& c : certs) {
      const auto dc = dilate_certificate(c, lam);
      const auto sc = s.with_cost(c.cost), dsc = d.with_cost(c.cost);
      for (auto st : {Strategy::alpha_star, Strategy::alpha_optimal}) {
        const auto a = poincare_bound(sc, c, st), b = poincare_bound(dsc, dc, st);
        if (a.valid != b.valid) o.require(false, "validity changes under dilation");
        if (a.valid && b.valid) cmp(b.value, l2 * a.value);
        const auto wa = w1_rate_rho(sc, c, st), wb = w1_rate_rho(dsc, dc, st);
        if (wa.valid && wb.valid) cmp(wb.value, wa.value / l2);
        const auto ka = w1_rate_kappa(sc, c, st, {.r = 3.0});
        const auto kb = w1_rate_kappa(dsc, dc, st, {.r = 3.0});
        if (ka.valid && kb.valid) cmp(kb.value, ka.value / l2);
      }
    }
    for (auto w : {PositiveWhich::osc, PositiveWhich::lip}) {
      cmp(poincare_bound_positive_curvature(d, w).value,
          l2 * poincare_bound_positive_curvature(s, w).value);
      cmp(w1_rate_positive_curvature(d, w).value, w1_rate_positive_curvature(s, w).value / l2);
    }
  }
  o.detail << checks << " comparisons, worst relative error " << worst;
  o.require(worst <= 1e-10, "homogeneity to 1e-10");
}

// C5: pathwise contraction at dt and dt/2, 10^4 pairs each.
void contraction(Outcome& o) {
  struct Case {
    std::string name;
    Potential pot;
    ContractionMode mode;
    double spread;
  };
  const std::vector<Case> cases{
      {"gaussian", make_gaussian(1.0, 1, {{-10, 10}}), ContractionMode::rho_interpolated, 3.0},
      {"x^4/4+x^2/2", make_polynomial({0, 0, 0.5, 0, 0.25}, {{-6, 6}}),
       ContractionMode::rho_interpolated, 2.5},
      {"|x|^4 2D kappa", make_quartic(2, {{-3, 3}, {-3, 3}}), ContractionMode::kappa_sum, 1.5},
  };
  for (const auto& c : cases) {
    auto cfg = sim(1e-3, 2.0, 10000, 31);
    cfg.save_times = {0.5, 1.0, 1.5, 2.0};
    const int dim = c.pot.dim;
    const double spread = c.spread;
    PairSampler pairs = [dim, spread](std::uint64_t i, std::span<double> x, std::span<double> y) {
      for (int k = 0; k < dim; ++k) {
        const auto u = philox4x32(
            {static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(k), 5u, 0u}, {0x1234u, 0x9876u});
        x[k] = spread * (2.0 * uniform_open(u[0], u[1]) - 1.0);
        y[k] = spread * (2.0 * uniform_open(u[2], u[3]) - 1.0);
      }
    };
    std::size_t order_violations = 0;
    for (const auto& run : {cfg, cfg.halved()}) {
      const auto e = simulate_coupled(c.pot, run, pairs);
      const auto r = check_pathwise_contraction(e, c.mode, run.contraction_c1);
      o.detail << c.name << " dt=" << run.dt << ": " << r.violations << "/" << r.checked
               << " violations, max ratio " << r.max_ratio << ", flagged " << e.n_flagged << "; ";
      o.require(r.pass(), c.name + " contraction holds on every pair");
      o.require(e.n_flagged == 0, c.name + " no escaped paths");
      if (dim == 1) order_violations += e.order_violations;
    }
    if (dim == 1) o.require(order_violations == 0, c.name + " monotone coupling keeps order");
  }
}

// C6: gradient commutation.
void commutation(Outcome& o) {
  const double dt = 1e-3;
  {
    const auto p = make_gaussian(1.0, 1, {{-10, 10}});
    SmoothFunction f{[](std::span<const double> x) { return x[0]; },
                     [](std::span<const double>, std::span<double> g) { g[0] = 1.0; }};
    const double t = 1.0;
    const auto r = check_gradient_commutation(p, sim(dt, t, 100000, 41), f, {0.5}, t);
    const double exact = std::exp(-t);
    // Euler-Maruyama contracts by (1 - dt)^n instead of exp(-t); allow twice that bias.
    const double allowance = t * dt * exact;
    o.detail << "OU lhs " << r.lhs.mean << " +- " << r.lhs.se << ", rhs " << r.rhs.mean << " +- "
             << r.rhs.se << " vs " << exact << " (allowance " << allowance << "); ";
    o.require(std::abs(r.lhs.mean - exact) <= 2.0 * r.lhs.se + allowance, "OU lhs = e^{-t}");
    o.require(std::abs(r.rhs.mean - exact) <= 2.0 * r.rhs.se + allowance, "OU rhs = e^{-t}");
  }
  {
    const auto p = make_polynomial({0, 0, 0.5, 0, 0.25}, {{-6, 6}});
    SmoothFunction f{[](std::span<const double> x) { return std::sin(x[0]); },
                     [](std::span<const double> x, std::span<double> g) { g[0] = std::cos(x[0]); }};
    for (double t : {0.5, 1.0, 2.0}) {
      const auto r = check_gradient_commutation(p, sim(dt, t, 100000, 43), f, {0.5}, t);
      const double sigma = std::hypot(r.lhs.se, r.rhs.se);
      o.detail << "quartic t=" << t << ": " << r.lhs.mean << " <= " << r.rhs.mean << " + 2*"
               << sigma << "; ";
      o.require(r.lhs.mean <= r.rhs.mean + 2.0 * sigma, "quartic commutation at t");
    }
  }
}

// C7: W1 decay rates.
void w1_decay(Outcome& o) {
  std::vector<double> times;
  for (int i = 1; i <= 10; ++i) times.push_back(0.2 * i);
  {
    const auto p = make_gaussian(1.0, 1, {{-10, 10}});
    const auto m = build_grid_measure(p, 4096);
    const auto eq = equilibrium_quantiles(m, 10000);
    const auto c = w1_decay_curve(p, sim(1e-3, 2.0, 10000, 51), point_sampler({2.0}), times, eq);
    o.detail << "OU fitted rate " << c.fitted_rate << " +- " << c.fitted_rate_se << "; ";
    o.require(std::abs(c.fitted_rate - 1.0) <= 0.05, "OU rate 1.0 +- 0.05");
  }
  {
    const auto p = make_cosine_perturbed_gaussian(0.1, 2.0, {{-10, 10}});
    const auto m = build_grid_measure(p, 4096);
    const auto eq = equilibrium_quantiles(m, 10000);
    const auto s = curvature_stats(m, p, CostKind::hamming);
    double theta = 0.0;
    for (auto w : {PositiveWhich::osc, PositiveWhich::lip}) {
      const auto r = w1_rate_positive_curvature(s, w);
      if (r.valid) theta = std::max(theta, r.value);
    }
    const auto c = w1_decay_curve(p, sim(1e-3, 2.0, 10000, 53), point_sampler({2.0}), times, eq);
    o.detail << "cosine fitted rate " << c.fitted_rate << " +- " << c.fitted_rate_se
             << " vs theta " << theta;
    o.require(theta > 0.0, "positive-curvature theta available");
    o.require(c.fitted_rate >= theta - 2.0 * c.fitted_rate_se, "cosine rate >= theta - 2 se");
  }
}

// C8: Laplace bounds dominate the Monte Carlo upper confidence limit.
void laplace(Outcome& o) {
  const double lambda = 1.0, t = 1.0, eps = 0.5;
  for (const auto& sc : one_dim_scenarios()) {
    const auto m = build_grid_measure(sc.pot, 2048);
    const double cp = spectral_gap_1d(m, sc.pot).cp_true;
    const auto cert = from_poincare(cp);
    const auto s = curvature_stats(m, sc.pot, CostKind::hamming);
    const auto fs = FunctionalStats::from_curvature(s, 1.0);
    const double moment = laplace_moment_bound(cert, fs, lambda, t);
    const double split = laplace_split_bound(cert, fs, lambda, t, eps);
    ExpFunctionalSpec spec;
    spec.g = [&p = sc.pot](std::span<const double> x) { return p.rho(x); };
    spec.lambda = lambda;
    spec.t = t;
    const auto init = list_sampler(equilibrium_quantiles(m, 10000), 1);
    const auto cfg = sim(1e-3, t, 10000, 61);
    auto mc = estimate_exp_functional(sc.pot, cfg, init, spec);
    bool ok = moment >= mc.hi && split >= mc.hi;
    if (!ok) {
      // A miss at dt alone is inconclusive; rerun on the refined path.
      mc = estimate_exp_functional(sc.pot, cfg.halved(), init, spec);
      ok = moment >= mc.hi && split >= mc.hi;
    }
    o.detail << sc.name << ": MC hi " << mc.hi << ", moment " << moment << ", split " << split
             << "; ";
    o.require(ok, sc.name + " bounds above the MC upper limit");
  }
}

// C9: variance decay.
void variance(Outcome& o) {
  const std::vector<double> times{0.5, 1.0, 2.0};
  PointFn id = [](std::span<const double> x) { return x[0]; };
  {
    const auto p = make_gaussian(1.0, 1, {{-10, 10}});
    const auto m = build_grid_measure(p, 4096);
    const auto outer = equilibrium_quantiles(m, 2000);
    const double dt = 1e-3;
    const auto v = variance_decay(p, sim(dt, 2.0, 2000, 71), id, times, outer, 16);
    for (std::size_t k = 0; k < times.size(); ++k) {
      const double exact = std::exp(-2.0 * times[k]);
      // Euler-Maruyama bias of (1 - dt)^{2n} against exp(-2t), doubled.
      const double allowance = 2.0 * times[k] * dt * exact;
      o.detail << "OU t=" << times[k] << ": " << v.variance[k] << " +- " << v.se[k] << " vs "
               << exact << "; ";
      o.require(std::abs(v.variance[k] - exact) <= 2.0 * v.se[k] + allowance, "OU Var = e^{-2t}");
    }
  }
  {
    const auto p = make_cosine_perturbed_gaussian(0.1, 2.0, {{-10, 10}});
    const auto m = build_grid_measure(p, 4096);
    const double cp_true = spectral_gap_1d(m, p).cp_true;
    const auto s = curvature_stats(m, p, CostKind::hamming);
    const auto best = best_poincare(s, {from_poincare(cp_true)});
    const auto outer = equilibrium_quantiles(m, 2000);
    double mean = 0.0, var_f = 0.0;
    for (double x : outer) mean += x;
    mean /= static_cast<double>(outer.size());
    for (double x : outer) var_f += (x - mean) * (x - mean);
    var_f /= static_cast<double>(outer.size() - 1);
    const auto v = variance_decay(p, sim(1e-3, 2.0, 2000, 73), id, times, outer, 16);
    for (std::size_t k = 0; k < times.size(); ++k) {
      const double bound = std::exp(-times[k] / best.winner.value) * var_f;
      const double sigma = v.se[k] / bound;
      o.detail << "cosine t=" << times[k] << ": " << v.variance[k] << " <= " << bound
               << " (1 + 2*" << sigma << "); ";
      o.require(v.variance[k] <= bound * (1.0 + 2.0 * sigma), "generic variance decay");
    }
  }
}

// C10: re-feeding the optimal constant does not improve the bound.
void fixed_point(Outcome& o) {
  auto check = [&](const std::string& name, const CurvatureStats& s, double cp,
                   const TournamentOptions& opts) {
    const auto first = best_poincare(s, {from_poincare(cp)}, opts);
    if (!first.winner.valid) {
      o.require(false, name + " has a valid bound");
      return;
    }
    const auto again = best_poincare(s, {from_poincare(cp), from_poincare(first.winner.value)}, opts);
    o.detail << name << ": " << first.winner.value << " -> " << again.winner.value << "; ";
    o.require(again.winner.value >= first.winner.value * (1.0 - 1e-12), name + " no strict improvement");
  };
  for (const auto& sc : one_dim_scenarios()) {
    const auto m = build_grid_measure(sc.pot, 1024);
    const double cp = spectral_gap_1d(m, sc.pot).cp_true;
    check(sc.name, curvature_stats(m, sc.pot, CostKind::hamming), cp, {&m, &sc.pot, {}});
  }
  // Product Gaussian: the constant is the largest axis variance.
  const auto pg = make_product_gaussian({1.0, 0.25}, {{-10, 10}, {-16, 16}});
  const auto mg = build_grid_measure(pg, 128);
  check("product gaussian", curvature_stats(mg, pg, CostKind::hamming), 4.0, {&mg, &pg, {}});
}

struct Criterion {
  int id;
  std::string name;
  double budget_s;
  std::function<void(Outcome&)> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "gaussian constants and constant-curvature reduction", 30.0, gaussian_reduction},
      {2, "self-improvement sandwich", 30.0, sandwich},
      {3, "quadratic-root identity and beta crossover", 5.0, quadratic_root},
      {4, "dilation homogeneity", 1.0, dilation},
      {5, "pathwise contraction", 120.0, contraction},
      {6, "gradient commutation", 120.0, commutation},
      {7, "W1 decay rates", 180.0, w1_decay},
      {8, "Laplace bound dominance", 120.0, laplace},
      {9, "variance decay", 120.0, variance},
      {10, "not-self-improving fixed point", 1.0, fixed_point},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    Outcome o;
    const auto t0 = Clock::now();
    try {
      c.run(o);
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    const double secs = seconds_since(t0);
    o.require(secs < c.budget_s, "runtime budget");
    if (!o.pass) ++failures;
    std::printf("%s  criterion %2d  %s  (%.2f s / %.0f s)\n    %s\n", o.pass ? "PASS" : "FAIL",
                c.id, c.name.c_str(), secs, c.budget_s, o.detail.str().c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
