#pragma once

#include <functional>
#include <span>
#include <vector>

#include "curvebound/grid_measure.hpp"
#include "curvebound/potential.hpp"

namespace curvebound {

struct SpectralResult {
  double lambda1 = 0.0;  // smallest nonzero eigenvalue of -L on the finest grid
  double cp_true = 0.0;
  int resolution = 0;
  double coarse_lambda1 = 0.0;
  double richardson_estimate = 0.0;
  bool converged = false;
  double orthogonality_residual = 0.0;  // |mu(f1)| / ||f1||_{L2(mu)}
  std::vector<double> eigenvector;      // f1 on the nodes, mu-normalized
};

/// Spectral gap of L = d^2 - V' d on a 1D grid: finite-volume Dirichlet form
/// with weights exp(-V) at cell midpoints against the trapezoid mass. Runs at
/// the grid resolution and at about half of it for a Richardson check.
SpectralResult spectral_gap_1d(const GridMeasure& m, const Potential& p);

/// Trapezoid integral of |F_a - F_b| over the nodes x. Repeated nodes are
/// allowed so that step functions can be represented exactly.
double w1_exact_1d(std::span<const double> x, std::span<const double> cdf_a,
                   std::span<const double> cdf_b);

/// Test function with its gradient and row-major Hessian.
struct TestFunction {
  std::function<void(std::span<const double>, std::span<double>)> gradient;
  std::function<void(std::span<const double>, std::span<double>)> hessian;
};

/// mu(|Hess f|_F^2) + mu(<grad f, Hess V grad f>) - C mu(|grad f|^2).
double gamma2_integral_margin(const GridMeasure& m, const Potential& p, const TestFunction& f,
                              double C);

}  // namespace curvebound
