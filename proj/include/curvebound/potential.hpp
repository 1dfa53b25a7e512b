#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace curvebound {

/// Closed interval [lo, hi] for one coordinate axis.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  [[nodiscard]] double width() const { return hi - lo; }
  [[nodiscard]] double center() const { return 0.5 * (lo + hi); }
};

using Box = std::vector<Interval>;

enum class PotentialKind { quadratic, radial_convex, custom };

/// A potential V on R^n with closed-form derivatives.
///
/// The measure of interest is mu(dx) = exp(-V(x)) dx / Z. `hessian` writes the
/// row-major n x n matrix. `analytic_curvature`, when present, must equal the
/// smallest Hessian eigenvalue; `kappa` is a reinforced curvature satisfying
/// <grad V(x) - grad V(y), x - y> >= (kappa(x) + kappa(y)) |x - y|^2.
struct Potential {
  using ScalarFn = std::function<double(std::span<const double>)>;
  using VectorFn = std::function<void(std::span<const double>, std::span<double>)>;
  using RadialFn = std::function<double(double)>;

  std::string name;
  int dim = 1;
  PotentialKind kind = PotentialKind::custom;

  ScalarFn value;
  VectorFn gradient;
  VectorFn hessian;

  std::optional<ScalarFn> analytic_curvature;
  std::optional<double> analytic_lip;
  std::optional<ScalarFn> kappa;

  // kind == quadratic: V = rho |x|^2 / 2 (+ const).
  double quadratic_rho = 0.0;
  // kind == radial_convex: V = g(|x|^2) (+ const), with g' supplied.
  RadialFn radial_g;
  RadialFn radial_gprime;

  Box domain_box;
  // The measure lives on the box only (V = +inf outside); no tail mass.
  bool confined = false;

  [[nodiscard]] double operator()(std::span<const double> x) const { return value(x); }

  /// Pointwise curvature without cross-checking: analytic when available,
  /// otherwise smallest eigenvalue of the Hessian.
  [[nodiscard]] double rho(std::span<const double> x) const;

  [[nodiscard]] bool inside(std::span<const double> x) const;
};

/// lambda_min(Hess V(x)); cross-checks analytic curvature to 1e-8 relative.
double curvature_at(const Potential& p, std::span<const double> x);

/// Smallest eigenvalue of a symmetric row-major n x n matrix.
double min_eigenvalue(std::span<const double> matrix, int n);

/// V(x) = rho |x|^2 / 2.
Potential make_gaussian(double rho, int dim, Box box);
/// V(x) = sum_i rho_i x_i^2 / 2 (anisotropic product Gaussian).
Potential make_product_gaussian(std::vector<double> rho_axes, Box box);
/// V(x) = |x|^4, radial convex with g(u) = u^2.
Potential make_quartic(int dim, Box box);
/// V(x) = |x|^beta, beta >= 2, radial convex with g(u) = u^(beta/2).
Potential make_radial_power(double beta, int dim, Box box);
/// V(x) = x^2/2 + a cos(k x), one dimension.
Potential make_cosine_perturbed_gaussian(double a, double k, Box box);
/// V(x) = sum_k c_k x^k, one dimension.
Potential make_polynomial(std::vector<double> coeffs, Box box);
/// V = const on the box (confined uniform measure).
Potential make_flat(int dim, Box box);
/// V(x) = x^2/2 + y^4 in two dimensions.
Potential make_mixed_quadratic_quartic(Box box);

/// V_lambda(x) = n ln(lambda) + V(x / lambda): the push-forward of mu by x -> lambda x.
Potential dilate(const Potential& p, double lambda);

/// kappa(x) = g'(|x|^2) for radial convex potentials.
Potential::ScalarFn kappa_for_radial(const Potential& p);

/// Checks Hessian symmetry and gradient/value finite-difference consistency at
/// each point; returns an empty string on success, else a description.
std::string check_potential_consistency(const Potential& p,
                                        const std::vector<std::vector<double>>& points);

}  // namespace curvebound
