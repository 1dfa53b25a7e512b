#pragma once

#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "curvebound/certificates.hpp"
#include "curvebound/grid_measure.hpp"

namespace curvebound {

enum class BoundKind { w1_rate, poincare, log_sobolev, laplace, direct_ultrabounded };

enum class Branch {
  be_baseline,
  alpha_star,
  alpha_optimal,
  positive_curvature_osc,
  positive_curvature_lip,
  logconcave_lsi_lip,
  logconcave_poincare_osc,
  logconcave_universal,
  entropic,
  kls_variance,
  brascamp_lieb,
  lee_vempala,
  ultrabounded,
};

std::string to_string(BoundKind k);
std::string to_string(Branch b);

/// Constant in front of the exponential. Each factor is kept by name; `value`
/// is only filled when every ingredient was supplied numerically.
struct Prefactor {
  std::string symbolic;
  std::optional<double> wasserstein_order;  // p of W_p(nu, mu)
  std::vector<std::pair<std::string, double>> factors;
  std::optional<double> value;
};

struct BoundReport {
  BoundKind kind = BoundKind::poincare;
  Branch branch = Branch::be_baseline;
  // theta for rates, the C_P (or C_LS) bound for constants.
  double value = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> epsilon;
  std::optional<double> r;
  std::optional<double> p;
  Prefactor prefactor;

  std::optional<CurvatureStats> stats;
  std::optional<WICertificate> cert;
  std::map<std::string, double> knobs;

  bool valid = false;
  std::string reason;
  std::vector<std::string> notes;

  [[nodiscard]] double theta() const { return value; }
  [[nodiscard]] double cp_bound() const { return value; }
};

/// Bakry-Emery: C_P <= 1/rho0 and C_LS <= 2/rho0.
std::pair<BoundReport, BoundReport> be_baseline(double rho0);

/// Smallest root eta = eps mu(g) of
/// h(eta) = eta^2 - eta(2 mu + aC n^2) + mu^2 + aC g0 n^2.
struct EpsilonRoot {
  double eta = 0.0;
  double eps = 0.0;
  std::optional<double> eta_shifted;  // same root through the rho0-shifted form
  bool degenerate = false;            // n == 0
};

std::optional<EpsilonRoot> solve_epsilon_quadratic(double mean, double g0, double norm, double C,
                                                   int a);

/// h evaluated directly, for residual checks.
double epsilon_quadratic(double eta, double mean, double g0, double norm, double C, int a);

enum class Strategy { alpha_star, alpha_optimal };

BoundReport poincare_bound(const CurvatureStats& stats, const WICertificate& cert,
                           Strategy strategy);

enum class PositiveWhich { osc, lip };

BoundReport poincare_bound_positive_curvature(const CurvatureStats& stats, PositiveWhich which);

struct KappaOptions {
  std::optional<double> r;
  std::optional<double> eps;
  double N = 1.0;        // ||d nu / d mu||_{L2(mu)}
  double horizon = 1.0;  // t used by the r search
};

BoundReport w1_rate_kappa(const CurvatureStats& kappa, const WICertificate& cert,
                          Strategy strategy, const KappaOptions& opts = {});

struct RhoOptions {
  double r = 1.0;
  std::optional<double> eps;
  std::optional<double> K2eta;  // sup_x r(2 eta, x, x)
  double eta = 1.0;
};

BoundReport w1_rate_rho(const CurvatureStats& rho, const WICertificate& cert, Strategy strategy,
                        const RhoOptions& opts = {});

BoundReport w1_rate_positive_curvature(const CurvatureStats& stats, PositiveWhich which);

enum class BetaWinner { beta_star, beta, none, either };
std::string to_string(BetaWinner w);

struct BetaComparison {
  int case_id = 1;
  BetaWinner winner = BetaWinner::none;
  double beta_star = 0.0;
  double h0 = 0.0;
  double crossover = 0.0;  // (5a/16) C n^2 + g0
};

BetaComparison compare_beta_branches(double mean, double g0, double norm, double C, int a);
BetaComparison compare_beta_branches(const CurvatureStats& stats, const WICertificate& cert, int a);

enum class LogConcaveWhich { lsi_lip, poincare_osc, universal_min };

/// Log-concave rates. lsi_lip needs a log-Sobolev certificate, the other two a
/// Poincare one (C = C_P).
BoundReport w1_rate_logconcave(const CurvatureStats& stats, const WICertificate& cert,
                               LogConcaveWhich which);

struct EntropicResult {
  double H1 = 0.0;
  double H2 = 0.0;
  double p = 0.0;
  double exponent_H1 = 0.0;
  double exponent_H2 = 0.0;
  bool valid = false;
  std::string reason;
  std::vector<std::string> notes;
};

struct EntropicInputs {
  double q = 2.0;
  double r = 4.0;
  double eps = 0.5;
  double t = 1.0;
  double H = 0.0;  // H(nu | mu)
};

EntropicResult entropic_w1_rate(const CurvatureStats& kappa, const WICertificate& cert,
                                const EntropicInputs& in);

struct AuxiliaryInputs {
  std::optional<double> brascamp_lieb_constant;
};

/// KLS variance bound, Brascamp-Lieb bound and the symbolic Lee-Vempala line.
std::vector<BoundReport> auxiliary_poincare_bounds(const GridMeasure& m, const Potential& p,
                                                   const CurvatureStats& stats,
                                                   const AuxiliaryInputs& in = {});

BoundReport ultrabounded_direct_bound(double K_eta, double eta, double cp, double second_moment,
                                      double tv, double t);

struct TournamentOptions {
  const GridMeasure* measure = nullptr;
  const Potential* potential = nullptr;
  AuxiliaryInputs aux;
};

struct PoincareTournament {
  BoundReport winner;
  std::vector<BoundReport> candidates;
};

/// Minimum valid C_P bound over every applicable branch and certificate. Ties go
/// to the earlier branch in the order be_baseline, alpha_star, alpha_optimal,
/// positive_curvature_osc, positive_curvature_lip, kls_variance, brascamp_lieb.
PoincareTournament best_poincare(const CurvatureStats& stats,
                                 const std::vector<WICertificate>& certs,
                                 const TournamentOptions& opts = {});

}  // namespace curvebound
