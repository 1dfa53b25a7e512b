#include "curvebound/bound_engine.hpp"

#include <Eigen/Dense>
#include <boost/math/tools/minima.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "curvebound/errors.hpp"

namespace curvebound {

std::string to_string(BoundKind k) {
  switch (k) {
    case BoundKind::w1_rate:
      return "w1_rate";
    case BoundKind::poincare:
      return "poincare";
    case BoundKind::log_sobolev:
      return "log_sobolev";
    case BoundKind::laplace:
      return "laplace";
    case BoundKind::direct_ultrabounded:
      return "direct_ultrabounded";
  }
  return "unknown";
}

std::string to_string(Branch b) {
  switch (b) {
    case Branch::be_baseline:
      return "be_baseline";
    case Branch::alpha_star:
      return "alpha_star";
    case Branch::alpha_optimal:
      return "alpha_optimal";
    case Branch::positive_curvature_osc:
      return "positive_curvature_osc";
    case Branch::positive_curvature_lip:
      return "positive_curvature_lip";
    case Branch::logconcave_lsi_lip:
      return "logconcave_lsi_lip";
    case Branch::logconcave_poincare_osc:
      return "logconcave_poincare_osc";
    case Branch::logconcave_universal:
      return "logconcave_universal";
    case Branch::entropic:
      return "entropic";
    case Branch::kls_variance:
      return "kls_variance";
    case Branch::brascamp_lieb:
      return "brascamp_lieb";
    case Branch::lee_vempala:
      return "lee_vempala";
    case Branch::ultrabounded:
      return "ultrabounded";
  }
  return "unknown";
}

std::string to_string(BetaWinner w) {
  switch (w) {
    case BetaWinner::beta_star:
      return "beta_star";
    case BetaWinner::beta:
      return "beta";
    case BetaWinner::none:
      return "none";
    case BetaWinner::either:
      return "either";
  }
  return "none";
}

namespace {

constexpr double kRootAgreement = 1e-12;
constexpr double kBoundaryTol = 1e-9;

BoundReport make_report(BoundKind kind, Branch branch) {
  BoundReport r;
  r.kind = kind;
  r.branch = branch;
  return r;
}

BoundReport invalid(BoundReport r, std::string reason) {
  r.valid = false;
  r.reason = std::move(reason);
  return r;
}

// Validity contract: rates must be positive, constants in (0, inf).
BoundReport finish(BoundReport r) {
  if (!std::isfinite(r.value) || !(r.value > 0.0)) {
    std::ostringstream os;
    os << "non-positive or non-finite result " << r.value;
    return invalid(std::move(r), os.str());
  }
  r.valid = true;
  return r;
}

void note_cost_caveats(BoundReport& r, const CurvatureStats& s) {
  if (s.cost == CostKind::euclidean && s.lip_src == Provenance::grid_estimate) {
    r.notes.emplace_back("lip is a grid estimate (a lower bound on the true constant)");
  }
}

// Smallest root of eta^2 - eta(2 mu + aCn^2) + mu^2 + aC g0 n^2 for real a > 0.
// 1 - sqrt(1 - x) is evaluated as x / (1 + sqrt(1 - x)).
struct RootPair {
  double direct;
  double shifted;
};

std::optional<RootPair> smallest_root(double mean, double g0, double norm, double C, double a) {
  const double q = a * C * norm * norm;
  const double h0 = mean * mean + q * g0;
  if (!(h0 > 0.0)) return std::nullopt;
  const double B = mean + 0.5 * q;
  const double disc = q * (mean - g0) + 0.25 * q * q;  // B^2 - h0
  if (disc < 0.0) return std::nullopt;
  const double s = std::sqrt(disc);
  RootPair rp{};
  rp.direct = h0 / (B + s);
  const double d = mean - g0;
  const double b = d + 0.5 * q;
  rp.shifted = b + s > 0.0 ? g0 + d * d / (b + s) : g0;
  return rp;
}

void check_lower_bound(double mean, double g0) {
  if (g0 > mean + 1e-12 * std::max(1.0, std::abs(mean))) {
    throw PreconditionError("lower bound g0 exceeds the mean of g");
  }
}

std::optional<EpsilonRoot> solve_root(double mean, double g0, double norm, double C, double a) {
  if (!(mean > 0.0)) throw PreconditionError("mean of g must be positive");
  if (!(C > 0.0)) throw PreconditionError("certificate constant must be positive");
  check_lower_bound(mean, g0);
  EpsilonRoot out;
  if (norm == 0.0) {
    out.eta = mean;
    out.eps = 1.0;
    out.degenerate = true;
    return out;
  }
  const auto rp = smallest_root(mean, g0, norm, C, a);
  if (!rp) return std::nullopt;
  out.eta = rp->direct;
  out.eps = out.eta / mean;
  if (g0 > 0.0) {
    out.eta_shifted = rp->shifted;
    const double scale = std::max(std::abs(rp->direct), std::abs(rp->shifted));
    if (std::abs(rp->direct - rp->shifted) > kRootAgreement * scale) {
      std::ostringstream os;
      os.precision(17);
      os << "root forms disagree: " << rp->direct << " vs " << rp->shifted;
      throw EvaluationError(os.str());
    }
  }
  return out;
}

void check_a(int a) {
  if (a != 1 && a != 2) throw PreconditionError("a must be 1 or 2");
}

BoundReport cost_mismatch(BoundReport r, const CurvatureStats& s, const WICertificate& c) {
  return invalid(std::move(r), "cost mismatch: stats use " + to_string(s.cost) +
                                   ", certificate uses " + to_string(c.cost));
}

void echo(BoundReport& r, const CurvatureStats& s, const WICertificate& c) {
  r.stats = s;
  r.cert = c;
  note_cost_caveats(r, s);
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

}  // namespace

std::pair<BoundReport, BoundReport> be_baseline(double rho0) {
  auto cp = make_report(BoundKind::poincare, Branch::be_baseline);
  auto ls = make_report(BoundKind::log_sobolev, Branch::be_baseline);
  cp.knobs["rho0"] = rho0;
  ls.knobs["rho0"] = rho0;
  if (!(rho0 > 0.0)) {
    return {invalid(cp, "rho0 must be positive"), invalid(ls, "rho0 must be positive")};
  }
  cp.value = 1.0 / rho0;
  ls.value = 2.0 / rho0;
  return {finish(cp), finish(ls)};
}

double epsilon_quadratic(double eta, double mean, double g0, double norm, double C, int a) {
  const double q = a * C * norm * norm;
  return eta * eta - eta * (2.0 * mean + q) + mean * mean + q * g0;
}

std::optional<EpsilonRoot> solve_epsilon_quadratic(double mean, double g0, double norm, double C,
                                                   int a) {
  check_a(a);
  return solve_root(mean, g0, norm, C, a);
}

BoundReport poincare_bound(const CurvatureStats& s, const WICertificate& cert, Strategy strategy) {
  auto r = make_report(BoundKind::poincare, strategy == Strategy::alpha_star ? Branch::alpha_star
                                                                             : Branch::alpha_optimal);
  echo(r, s, cert);
  if (s.cost != cert.cost) return cost_mismatch(std::move(r), s, cert);
  if (!(s.mean > 0.0)) return invalid(std::move(r), "mean curvature not positive");
  const double n = s.norm_c;

  if (strategy == Strategy::alpha_star) {
    const double denom = s.mean - 0.5 * cert.C * n * n;
    r.knobs["denominator"] = denom;
    if (!(denom > 0.0)) {
      return invalid(std::move(r), "mu(rho) <= alpha*(2||rho||_c)/2 (denominator " + fmt(denom) +
                                       ")");
    }
    r.value = 1.0 / denom;
    return finish(std::move(r));
  }

  if (s.cost == CostKind::hamming) {
    r.notes.emplace_back("optimal-epsilon characterization assumes a continuous cost");
  }
  const auto root = solve_root(s.mean, s.rho0, n, cert.C, 2.0);
  if (!root) return invalid(std::move(r), "h(0) <= 0: 2 rho0 + alpha(mu/||rho||_c) not positive");
  r.epsilon = root->eps;
  if (root->degenerate) {
    r.notes.emplace_back("zero oscillation: constant-curvature limit");
    r.value = 1.0 / s.mean;
    return finish(std::move(r));
  }
  const double gap = root->eta - s.rho0;
  const double rr = cert.alpha((1.0 - root->eps) * s.mean / n) / gap;
  r.r = rr;
  if (!(gap > 0.0) || rr < 2.0 * (1.0 - kBoundaryTol)) {
    return invalid(std::move(r), "balanced r(eps) = " + fmt(rr) + " below 2");
  }
  r.value = 1.0 / root->eta;
  return finish(std::move(r));
}

namespace {

// Shared core of the positive-curvature displays: theta or eps' through both
// root forms with C = 1/rho0 (osc) or 4/rho0^2 (lip).
struct PositiveCore {
  double improvement = 0.0;
  double C = 0.0;
  double norm = 0.0;
};

std::optional<PositiveCore> positive_core(const CurvatureStats& s, PositiveWhich which, double a) {
  PositiveCore pc;
  pc.C = which == PositiveWhich::osc ? 1.0 / s.rho0 : 4.0 / (s.rho0 * s.rho0);
  pc.norm = which == PositiveWhich::osc ? s.osc : s.lip;
  if (pc.norm == 0.0 || s.mean <= s.rho0) return pc;
  const auto root = solve_root(s.mean, s.rho0, pc.norm, pc.C, a);
  if (!root) return std::nullopt;
  pc.improvement = root->eta_shifted.value_or(root->eta) - s.rho0;
  return pc;
}

}  // namespace

BoundReport poincare_bound_positive_curvature(const CurvatureStats& s, PositiveWhich which) {
  auto r = make_report(BoundKind::poincare, which == PositiveWhich::osc
                                                ? Branch::positive_curvature_osc
                                                : Branch::positive_curvature_lip);
  r.stats = s;
  if (which == PositiveWhich::lip && s.lip_src == Provenance::grid_estimate) {
    r.notes.emplace_back("lip is a grid estimate (a lower bound on the true constant)");
  }
  if (!(s.rho0 > 0.0)) return invalid(std::move(r), "rho0 must be positive");
  if (s.mean < s.rho0) return invalid(std::move(r), "mu(rho) below rho0");
  const auto pc = positive_core(s, which, 2.0);
  if (!pc) return invalid(std::move(r), "no admissible root");
  r.knobs["C"] = pc->C;
  r.knobs["eps_prime"] = pc->improvement;
  r.epsilon = (s.rho0 + pc->improvement) / s.mean;
  r.value = 1.0 / (s.rho0 + pc->improvement);
  return finish(std::move(r));
}

namespace {

Prefactor kappa_prefactor(double N, double rr, bool one_plus_N) {
  Prefactor pf;
  const double base = one_plus_N ? 1.0 + N : N;
  pf.symbolic = one_plus_N ? "(1+N)^(1/r) * W_p(nu,mu)" : "N^(1/r) * W_p(nu,mu)";
  pf.factors.emplace_back(one_plus_N ? "(1+N)^(1/r)" : "N^(1/r)", std::pow(base, 1.0 / rr));
  pf.wasserstein_order = rr > 2.0 ? rr / (rr - 2.0) : std::numeric_limits<double>::infinity();
  return pf;
}

}  // namespace

BoundReport w1_rate_kappa(const CurvatureStats& s, const WICertificate& cert, Strategy strategy,
                          const KappaOptions& opts) {
  auto rep = make_report(BoundKind::w1_rate, strategy == Strategy::alpha_star
                                                 ? Branch::alpha_star
                                                 : Branch::alpha_optimal);
  echo(rep, s, cert);
  rep.knobs["N"] = opts.N;
  if (s.cost != cert.cost) return cost_mismatch(std::move(rep), s, cert);
  if (!(s.mean > 0.0)) return invalid(std::move(rep), "mu(kappa) not positive");
  if (opts.N < 1.0) return invalid(std::move(rep), "L2 prefactor N must be >= 1");
  if (opts.r && !(*opts.r > 2.0)) return invalid(std::move(rep), "r must exceed 2");
  const double n = s.norm_c;
  const double mu = s.mean;

  if (strategy == Strategy::alpha_star) {
    if (!(mu > 0.5 * cert.alpha_star(2.0 * n))) {
      return invalid(std::move(rep), "mu(kappa) <= alpha*(2||kappa||_c)/2");
    }
    auto theta_of = [&](double rr) { return 2.0 * (mu - cert.alpha_star(rr * n) / rr); };
    double rr = 0.0;
    if (opts.r) {
      rr = *opts.r;
    } else if (n == 0.0) {
      rr = 4.0;
    } else {
      // theta(r) decreases in r; trade it against the N^(1/r) factor over `horizon`.
      const double r_zero = 4.0 * mu / (cert.C * n * n);
      const double hi = std::min(1000.0, r_zero);
      const double lo = 2.0 + 1e-6;
      if (hi <= lo) return invalid(std::move(rep), "no r > 2 with positive rate");
      const double logN = std::log(opts.N);
      auto objective = [&](double x) { return -(theta_of(x) * opts.horizon - logN / x); };
      rr = boost::math::tools::brent_find_minima(objective, lo, hi, 40).first;
      rep.notes.emplace_back("r chosen by bracketed search over (2, " + fmt(hi) + "]");
    }
    rep.r = rr;
    rep.p = rr / (rr - 2.0);
    rep.value = theta_of(rr);
    rep.prefactor = kappa_prefactor(opts.N, rr, false);
    return finish(std::move(rep));
  }

  if (n == 0.0) {
    rep.notes.emplace_back("zero oscillation: constant-curvature limit");
    rep.epsilon = 1.0;
    rep.value = 2.0 * mu;
    rep.prefactor = kappa_prefactor(opts.N, opts.r.value_or(4.0), true);
    return finish(std::move(rep));
  }
  if (s.cost == CostKind::hamming) {
    rep.notes.emplace_back("optimal-epsilon characterization assumes a continuous cost");
  }
  double eps = 0.0;
  double rr = 0.0;
  if (opts.eps) {
    eps = *opts.eps;
    if (!(eps > 0.0 && eps < 1.0)) return invalid(std::move(rep), "epsilon must lie in (0,1)");
    if (opts.r) {
      rr = *opts.r;
    } else {
      const double gap = eps * mu - s.rho0;
      if (!(gap > 0.0)) return invalid(std::move(rep), "eps mu(kappa) <= kappa0");
      rr = cert.alpha((1.0 - eps) * mu / n) / gap;
    }
  } else {
    // Balance both exponents: alpha((1-eps)mu/n) = a (eps mu - kappa0) with a = r.
    const double a = opts.r.value_or(2.0);
    const auto root = solve_root(mu, s.rho0, n, cert.C, a);
    if (!root) return invalid(std::move(rep), "h(0) <= 0: no balanced epsilon");
    eps = root->eps;
    const double gap = root->eta - s.rho0;
    rr = gap > 0.0 ? cert.alpha((1.0 - eps) * mu / n) / gap : 0.0;
  }
  rep.epsilon = eps;
  rep.r = rr;
  if (rr < 2.0 * (1.0 - kBoundaryTol)) {
    return invalid(std::move(rep), "r(eps) = " + fmt(rr) + " below 2");
  }
  if (rr <= 2.0) {
    rr = 2.0;
    rep.r = rr;
    rep.notes.emplace_back("r at the boundary value 2: W_p prefactor with p = infinity");
  }
  const double a_term = cert.alpha((1.0 - eps) * mu / n);
  if (!(rr * s.rho0 + a_term > 0.0)) {
    return invalid(std::move(rep), "r kappa0 + alpha((1-eps)mu/||kappa||_c) not positive");
  }
  rep.p = rr > 2.0 ? rr / (rr - 2.0) : std::numeric_limits<double>::infinity();
  rep.value = 2.0 * std::min(eps * mu, s.rho0 + a_term / rr);
  rep.prefactor = kappa_prefactor(opts.N, rr, true);
  return finish(std::move(rep));
}

namespace {

Prefactor rho_prefactor(double theta, double rho0, double rr, const RhoOptions& opts,
                        std::vector<std::string>& notes) {
  Prefactor pf;
  pf.symbolic = "2^(1/r) * K(2eta)^(1/(2r)) * exp((theta - rho0) eta)";
  const double two = std::pow(2.0, 1.0 / rr);
  const double ex = std::exp((theta - rho0) * opts.eta);
  pf.factors.emplace_back("2^(1/r)", two);
  pf.factors.emplace_back("exp((theta-rho0)eta)", ex);
  if (opts.K2eta) {
    const double k = std::pow(*opts.K2eta, 1.0 / (2.0 * rr));
    pf.factors.emplace_back("K(2eta)^(1/(2r))", k);
    pf.value = two * k * ex;
  } else {
    notes.emplace_back("conditional on sup-density finiteness");
  }
  pf.wasserstein_order = 1.0;
  return pf;
}

}  // namespace

BoundReport w1_rate_rho(const CurvatureStats& s, const WICertificate& cert, Strategy strategy,
                        const RhoOptions& opts) {
  auto rep = make_report(BoundKind::w1_rate, strategy == Strategy::alpha_star
                                                 ? Branch::alpha_star
                                                 : Branch::alpha_optimal);
  echo(rep, s, cert);
  rep.knobs["eta"] = opts.eta;
  if (opts.K2eta) rep.knobs["K2eta"] = *opts.K2eta;
  if (s.cost != cert.cost) return cost_mismatch(std::move(rep), s, cert);
  if (!(s.mean > 0.0)) return invalid(std::move(rep), "mu(rho) not positive");
  if (!(opts.r >= 1.0)) return invalid(std::move(rep), "r must be >= 1");
  if (!(opts.eta > 0.0)) return invalid(std::move(rep), "eta must be positive");
  const double n = s.norm_c;
  const double mu = s.mean;
  double rr = opts.r;

  if (strategy == Strategy::alpha_star) {
    if (!(mu > cert.alpha_star(n))) return invalid(std::move(rep), "mu(rho) <= alpha*(||rho||_c)");
    rep.r = rr;
    rep.value = mu - cert.alpha_star(rr * n) / rr;
  } else if (n == 0.0) {
    rep.notes.emplace_back("zero oscillation: constant-curvature limit");
    rep.epsilon = 1.0;
    rep.r = rr;
    rep.value = mu;
  } else {
    if (s.cost == CostKind::hamming) {
      rep.notes.emplace_back("optimal-epsilon characterization assumes a continuous cost");
    }
    double eps = 0.0;
    if (opts.eps) {
      eps = *opts.eps;
      if (!(eps > 0.0 && eps < 1.0)) return invalid(std::move(rep), "epsilon must lie in (0,1)");
    } else {
      const auto root = solve_root(mu, s.rho0, n, cert.C, rr);
      if (!root) return invalid(std::move(rep), "h(0) <= 0: no balanced epsilon");
      eps = root->eps;
    }
    const double a_term = cert.alpha((1.0 - eps) * mu / n);
    rep.epsilon = eps;
    rep.r = rr;
    if (!(rr * s.rho0 + a_term > 0.0)) {
      return invalid(std::move(rep), "r rho0 + alpha((1-eps)mu/||rho||_c) not positive");
    }
    rep.value = std::min(eps * mu, s.rho0 + a_term / rr);
  }
  if (std::isfinite(rep.value)) {
    rep.prefactor = rho_prefactor(rep.value, s.rho0, rr, opts, rep.notes);
  }
  return finish(std::move(rep));
}

BoundReport w1_rate_positive_curvature(const CurvatureStats& s, PositiveWhich which) {
  auto r = make_report(BoundKind::w1_rate, which == PositiveWhich::osc
                                               ? Branch::positive_curvature_osc
                                               : Branch::positive_curvature_lip);
  r.stats = s;
  if (which == PositiveWhich::lip && s.lip_src == Provenance::grid_estimate) {
    r.notes.emplace_back("lip is a grid estimate (a lower bound on the true constant)");
  }
  if (!(s.rho0 > 0.0)) return invalid(std::move(r), "rho0 must be positive (use w1_rate_rho)");
  if (s.mean < s.rho0) return invalid(std::move(r), "mu(rho) below rho0");
  const auto pc = positive_core(s, which, 1.0);
  if (!pc) return invalid(std::move(r), "no admissible root");
  r.knobs["C"] = pc->C;
  r.knobs["improvement"] = pc->improvement;
  r.epsilon = (s.rho0 + pc->improvement) / s.mean;
  r.r = 1.0;
  r.value = s.rho0 + pc->improvement;
  RhoOptions o;
  r.prefactor = rho_prefactor(r.value, s.rho0, 1.0, o, r.notes);
  return finish(std::move(r));
}

BetaComparison compare_beta_branches(double mean, double g0, double norm, double C, int a) {
  check_a(a);
  check_lower_bound(mean, g0);
  BetaComparison bc;
  const double q = a * C * norm * norm;
  bc.beta_star = mean - 0.25 * q;
  bc.h0 = mean * mean + q * g0;
  bc.crossover = (5.0 * a / 16.0) * C * norm * norm + g0;
  const bool star_ok = bc.beta_star > 0.0;
  const bool root_ok = bc.h0 > 0.0;
  if (!star_ok && !root_ok) {
    bc.case_id = 1;
    bc.winner = BetaWinner::none;
  } else if (!star_ok) {
    bc.case_id = 2;
    bc.winner = BetaWinner::beta;
  } else if (!root_ok) {
    bc.case_id = 3;
    bc.winner = BetaWinner::beta_star;
  } else {
    bc.case_id = 4;
    const double tol = 1e-12 * std::max(1.0, std::abs(mean));
    if (std::abs(mean - bc.crossover) <= tol) {
      bc.winner = BetaWinner::either;
    } else {
      bc.winner = mean < bc.crossover ? BetaWinner::beta : BetaWinner::beta_star;
    }
  }
  return bc;
}

BetaComparison compare_beta_branches(const CurvatureStats& s, const WICertificate& cert, int a) {
  return compare_beta_branches(s.mean, s.rho0, s.norm(cert.cost), cert.C, a);
}

BoundReport w1_rate_logconcave(const CurvatureStats& s, const WICertificate& cert,
                               LogConcaveWhich which) {
  const Branch b = which == LogConcaveWhich::lsi_lip        ? Branch::logconcave_lsi_lip
                   : which == LogConcaveWhich::poincare_osc ? Branch::logconcave_poincare_osc
                                                            : Branch::logconcave_universal;
  auto r = make_report(BoundKind::w1_rate, b);
  r.stats = s;
  r.cert = cert;
  if (std::abs(s.rho0) > 1e-12) {
    return invalid(std::move(r), "requires rho0 = 0 (apply floor_to_zero first)");
  }
  if (!(s.mean > 0.0)) return invalid(std::move(r), "mu(rho) not positive");
  const bool want_ls = which == LogConcaveWhich::lsi_lip;
  if (want_ls && cert.cost != CostKind::euclidean) {
    return invalid(std::move(r), "lsi_lip needs a Euclidean (log-Sobolev) certificate");
  }
  if (!want_ls && cert.cost != CostKind::hamming) {
    return invalid(std::move(r), "needs a Hamming (Poincare) certificate");
  }
  switch (which) {
    case LogConcaveWhich::lsi_lip: {
      if (s.lip_src == Provenance::grid_estimate) {
        r.notes.emplace_back("lip is a grid estimate (a lower bound on the true constant)");
      }
      const double d = s.lip * s.lip * cert.C;
      r.value = d > 0.0 ? std::min(0.5 * s.mean, s.mean * s.mean / d) : 0.5 * s.mean;
      break;
    }
    case LogConcaveWhich::poincare_osc: {
      const double d = s.osc * s.osc * cert.C;
      r.value = d > 0.0 ? std::min(0.5 * s.mean, s.mean * s.mean / d) : 0.5 * s.mean;
      break;
    }
    case LogConcaveWhich::universal_min:
      r.knobs["median"] = s.median;
      r.value = 0.25 * std::min(s.median, 1.0 / cert.C);
      break;
  }
  r.r = 1.0;
  RhoOptions o;
  r.prefactor = rho_prefactor(r.value, 0.0, 1.0, o, r.notes);
  return finish(std::move(r));
}

EntropicResult entropic_w1_rate(const CurvatureStats& s, const WICertificate& cert,
                                const EntropicInputs& in) {
  EntropicResult out;
  out.notes.emplace_back(
      "H1 uses alpha((1-eps) mu(kappa)/||kappa||_c); exponent uses alpha*(q||kappa||_c)/q");
  out.notes.emplace_back("exponents satisfy 1/p + 1/q + 1/r = 1");
  auto fail = [&](std::string why) {
    out.valid = false;
    out.reason = std::move(why);
    return out;
  };
  if (s.cost != cert.cost) return fail("cost mismatch between stats and certificate");
  if (!(in.q > 1.0)) return fail("q must exceed 1");
  if (!(in.r > 0.0)) return fail("r must be positive");
  if (!(in.eps > 0.0 && in.eps < 1.0)) return fail("epsilon must lie in (0,1)");
  if (!(in.t > 0.0)) return fail("t must be positive");
  if (in.H < 0.0) return fail("relative entropy must be nonnegative");
  const double inv_p = 1.0 - 1.0 / in.q - 1.0 / in.r;
  if (!(inv_p > 0.0)) return fail("1/q + 1/r must be below 1");
  out.p = 1.0 / inv_p;
  const double n = s.norm_c;
  const double mu = s.mean;
  if (n == 0.0) {
    out.notes.emplace_back("zero oscillation: H1 term dropped");
    out.exponent_H2 = (1.0 + in.eps) * mu;
    out.H1 = 0.0;
    out.H2 = std::exp(-out.exponent_H2 * in.t);
    out.valid = true;
    return out;
  }
  const double A = cert.alpha_star(in.q * n) / in.q;
  if (!(A <= mu + s.rho0)) return fail("alpha*(q||kappa||)/q exceeds mu(kappa) + kappa0");
  if (!((1.0 - in.eps) * mu > A)) return fail("(1-eps) mu(kappa) <= alpha*(q||kappa||)/q");
  const double a = cert.alpha((1.0 - in.eps) * mu / n);
  out.exponent_H1 = mu + s.rho0 - A;
  out.exponent_H2 = (1.0 + in.eps) * mu - A;
  const double dev = (std::log(2.0) + in.H) / (in.t * a);
  out.H1 = std::pow(dev, 1.0 / in.r) * std::exp(-out.exponent_H1 * in.t);
  out.H2 = std::exp(-out.exponent_H2 * in.t);
  out.valid = true;
  return out;
}

std::vector<BoundReport> auxiliary_poincare_bounds(const GridMeasure& m, const Potential& p,
                                                   const CurvatureStats& stats,
                                                   const AuxiliaryInputs& in) {
  std::vector<BoundReport> out;
  const auto cov = covariance(m);
  const int n = m.dim;
  Eigen::Map<const Eigen::MatrixXd> M(cov.data(), n, n);
  const double trace = M.trace();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M, Eigen::EigenvaluesOnly);
  const double lstar = es.eigenvalues().maxCoeff();

  auto kls = make_report(BoundKind::poincare, Branch::kls_variance);
  kls.knobs["variance"] = trace;
  kls.knobs["lambda_star"] = lstar;
  kls.knobs["chain_bound"] = 4.0 * n * lstar;
  kls.value = 4.0 * trace;
  if (stats.rho0 < -1e-12) {
    out.push_back(invalid(kls, "requires a log-concave measure (rho0 >= 0)"));
  } else {
    out.push_back(finish(kls));
  }

  auto bl = make_report(BoundKind::poincare, Branch::brascamp_lieb);
  const auto field = curvature_field(m, p);
  bool positive = true;
  double inv_mean = 0.0;
  for (std::size_t i = 0; i < field.size(); ++i) {
    if (!(field[i] > 0.0)) {
      positive = false;
      break;
    }
    inv_mean += m.weights[i] / field[i];
  }
  if (!positive) {
    out.push_back(invalid(bl, "rho not positive on every node"));
  } else {
    bl.knobs["mean_inverse_rho"] = inv_mean;
    if (!in.brascamp_lieb_constant) {
      bl.prefactor.symbolic = "C * mu(1/rho)";
      out.push_back(invalid(bl, "universal constant not supplied"));
    } else {
      bl.knobs["C"] = *in.brascamp_lieb_constant;
      bl.value = *in.brascamp_lieb_constant * inv_mean;
      out.push_back(finish(bl));
    }
  }

  auto lv = make_report(BoundKind::poincare, Branch::lee_vempala);
  lv.prefactor.symbolic = "C * n^(1/2) * lambda*";
  lv.prefactor.factors.emplace_back("n^(1/2) * lambda*", std::sqrt(double(n)) * lstar);
  lv.knobs["lambda_star"] = lstar;
  out.push_back(invalid(lv, "universal constant unknown; reported symbolically"));
  return out;
}

BoundReport ultrabounded_direct_bound(double K_eta, double eta, double cp, double second_moment,
                                      double tv, double t) {
  auto r = make_report(BoundKind::direct_ultrabounded, Branch::ultrabounded);
  r.knobs = {{"K_eta", K_eta}, {"eta", eta},  {"C_P", cp},
             {"second_moment", second_moment}, {"tv", tv}, {"t", t}};
  if (!(t > eta && eta > 0.0)) return invalid(std::move(r), "requires t > eta > 0");
  if (!(cp > 0.0)) return invalid(std::move(r), "C_P must be positive");
  if (tv < 0.0 || tv > 2.0) return invalid(std::move(r), "total variation must lie in [0,2]");
  if (second_moment < 0.0) return invalid(std::move(r), "second moment must be nonnegative");
  r.knobs["rate"] = 1.0 / cp;
  r.valid = true;
  if (K_eta <= 1.0) {
    r.value = 0.0;
    r.notes.emplace_back("K(eta) <= 1: degenerate, bound is zero");
    return r;
  }
  r.value = std::sqrt(K_eta - 1.0) * std::sqrt(second_moment) * std::exp(eta / cp) *
            std::sqrt(tv) * std::exp(-t / cp);
  return r;
}

PoincareTournament best_poincare(const CurvatureStats& stats,
                                 const std::vector<WICertificate>& certs,
                                 const TournamentOptions& opts) {
  PoincareTournament t;
  t.candidates.push_back(be_baseline(stats.rho0).first);
  for (auto strategy : {Strategy::alpha_star, Strategy::alpha_optimal}) {
    for (const auto& c : certs) {
      t.candidates.push_back(poincare_bound(stats.with_cost(c.cost), c, strategy));
    }
  }
  t.candidates.push_back(poincare_bound_positive_curvature(stats, PositiveWhich::osc));
  t.candidates.push_back(poincare_bound_positive_curvature(stats, PositiveWhich::lip));
  if (opts.measure != nullptr && opts.potential != nullptr) {
    for (auto& r : auxiliary_poincare_bounds(*opts.measure, *opts.potential, stats, opts.aux)) {
      t.candidates.push_back(std::move(r));
    }
  }
  // Values equal up to rounding count as ties and keep the earlier branch.
  const BoundReport* best = nullptr;
  for (const auto& c : t.candidates) {
    if (c.valid && (best == nullptr || c.value < best->value * (1.0 - 1e-12))) best = &c;
  }
  if (best != nullptr) {
    t.winner = *best;
    return t;
  }
  t.winner = make_report(BoundKind::poincare, Branch::be_baseline);
  std::string why = "no valid branch:";
  for (const auto& c : t.candidates) why += " [" + to_string(c.branch) + ": " + c.reason + "]";
  t.winner.valid = false;
  t.winner.reason = why;
  return t;
}

}  // namespace curvebound
