#pragma once

#include <string>

#include "curvebound/grid_measure.hpp"

namespace curvebound {

enum class CertSource { poincare, logsobolev, user };

std::string to_string(CertSource s);

/// Quadratic transport-information certificate: alpha(s) = s^2 / C,
/// alpha*(l) = C l^2 / 4 on l >= 0.
struct WICertificate {
  CostKind cost = CostKind::hamming;
  double C = 1.0;
  CertSource source = CertSource::user;
  double input_constant = 1.0;  // C_P, C_LS, or C as supplied

  [[nodiscard]] double alpha(double s) const { return s * s / C; }
  [[nodiscard]] double alpha_star(double l) const { return l <= 0.0 ? 0.0 : 0.25 * C * l * l; }
};

WICertificate from_poincare(double cp);
WICertificate from_logsobolev(double cls);
WICertificate user_certificate(double C, CostKind cost);

/// Certificate for the push-forward under x -> lambda x. Hamming constants
/// scale like C_P (lambda^2); Euclidean constants C = C_LS^2 scale by lambda^4.
WICertificate dilate_certificate(const WICertificate& c, double lambda);

/// Scalars of an additive functional u entering the Laplace bounds.
struct FunctionalStats {
  double u0 = 0.0;
  double mean = 0.0;
  double norm_c = 0.0;
  double N = 1.0;  // ||d beta / d mu||_{L2(mu)}

  static FunctionalStats from_curvature(const CurvatureStats& s, double N = 1.0);
};

/// N exp[t(-lambda mu(u) + alpha*(lambda ||u||_c))], a bound on
/// E_beta[exp(-lambda int_0^t u(X_s) ds)].
double laplace_moment_bound(const WICertificate& cert, const FunctionalStats& fs, double lambda,
                            double t);

/// (1+N) max(exp(-lambda eps mu(u) t), exp(-t(lambda u0 + alpha((1-eps) mu(u)/||u||_c)))).
double laplace_split_bound(const WICertificate& cert, const FunctionalStats& fs, double lambda,
                           double t, double eps);

/// (ln 2 + H) / (t alpha(r_dev)).
double entropy_deviation_bound(const WICertificate& cert, const FunctionalStats& fs, double H,
                               double r_dev, double t);

}  // namespace curvebound
