#include "curvebound/certificates.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "curvebound/errors.hpp"

namespace curvebound {

std::string to_string(CertSource s) {
  switch (s) {
    case CertSource::poincare:
      return "poincare";
    case CertSource::logsobolev:
      return "logsobolev";
    case CertSource::user:
      break;
  }
  return "user";
}

namespace {
void require_constant(double c, const char* what) {
  if (!(c > 0.0) || !std::isfinite(c)) {
    throw PreconditionError(std::string(what) + " must be positive and finite");
  }
}
}  // namespace

WICertificate from_poincare(double cp) {
  require_constant(cp, "Poincare constant");
  return {CostKind::hamming, cp, CertSource::poincare, cp};
}

WICertificate from_logsobolev(double cls) {
  require_constant(cls, "log-Sobolev constant");
  return {CostKind::euclidean, cls * cls, CertSource::logsobolev, cls};
}

WICertificate user_certificate(double C, CostKind cost) {
  require_constant(C, "certificate constant");
  return {cost, C, CertSource::user, C};
}

WICertificate dilate_certificate(const WICertificate& c, double lambda) {
  if (!(lambda > 0.0)) throw PreconditionError("dilation factor must be positive");
  WICertificate d = c;
  const double l2 = lambda * lambda;
  d.C = c.cost == CostKind::hamming ? c.C * l2 : c.C * l2 * l2;
  d.input_constant = c.input_constant * l2;
  if (c.source == CertSource::user && c.cost == CostKind::euclidean) d.input_constant = d.C;
  return d;
}

FunctionalStats FunctionalStats::from_curvature(const CurvatureStats& s, double N) {
  return {s.rho0, s.mean, s.norm_c, N};
}

double laplace_moment_bound(const WICertificate& cert, const FunctionalStats& fs, double lambda,
                            double t) {
  if (lambda < 0.0 || t < 0.0) throw PreconditionError("lambda and t must be nonnegative");
  if (!std::isfinite(fs.norm_c)) throw PreconditionError("functional norm must be finite");
  if (fs.norm_c == 0.0) return fs.N * std::exp(-lambda * fs.mean * t);
  return fs.N * std::exp(t * (-lambda * fs.mean + cert.alpha_star(lambda * fs.norm_c)));
}

double laplace_split_bound(const WICertificate& cert, const FunctionalStats& fs, double lambda,
                           double t, double eps) {
  if (!(eps > 0.0 && eps < 1.0)) throw PreconditionError("epsilon must lie in (0, 1)");
  if (lambda < 0.0 || t < 0.0) throw PreconditionError("lambda and t must be nonnegative");
  if (!(fs.mean > 0.0)) throw PreconditionError("mean curvature not positive");
  const double pre = 1.0 + fs.N;
  if (fs.norm_c == 0.0) return pre * std::exp(-lambda * fs.mean * t);
  const double first = -lambda * eps * fs.mean * t;
  const double second = -t * (lambda * fs.u0 + cert.alpha((1.0 - eps) * fs.mean / fs.norm_c));
  return pre * std::exp(std::max(first, second));
}

double entropy_deviation_bound(const WICertificate& cert, const FunctionalStats& /*fs*/, double H,
                               double r_dev, double t) {
  if (!(t > 0.0)) throw PreconditionError("deviation bound needs t > 0");
  if (H < 0.0) throw PreconditionError("relative entropy must be nonnegative");
  const double a = cert.alpha(r_dev);
  if (!(a > 0.0)) throw PreconditionError("alpha(r) must be positive");
  return (std::numbers::ln2 + H) / (t * a);
}

}  // namespace curvebound
