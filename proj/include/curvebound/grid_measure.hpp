#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "curvebound/potential.hpp"

namespace curvebound {

/// Tensor-product trapezoid quadrature for mu = exp(-V) dx / Z on a box.
///
/// Nodes are stored flat (node i occupies coordinates [i*dim, (i+1)*dim)),
/// ordered with the last axis fastest. Weights are normalized to sum to one.
struct GridMeasure {
  int dim = 1;
  std::vector<int> shape;               // nodes per axis
  std::vector<std::vector<double>> axes;  // node coordinates per axis
  std::vector<double> nodes;
  std::vector<double> weights;
  std::vector<double> potential;  // V at nodes
  double log_norm = 0.0;          // ln Z
  double tail_mass_bound = 0.0;

  [[nodiscard]] std::size_t size() const { return weights.size(); }
  [[nodiscard]] std::span<const double> node(std::size_t i) const {
    return {nodes.data() + i * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
  }
  /// Weighted sum of f over nodes.
  [[nodiscard]] double expect(const std::function<double(std::span<const double>)>& f) const;
  /// Weighted sum of a per-node field.
  [[nodiscard]] double expect_field(std::span<const double> field) const;
};

struct GridOptions {
  double tail_threshold = 1e-10;
};

GridMeasure build_grid_measure(const Potential& p, int resolution, const GridOptions& opts = {});

enum class CostKind { euclidean, hamming };
enum class Provenance { analytic, grid_estimate };

std::string to_string(CostKind c);
std::string to_string(Provenance p);

/// Every scalar of a curvature-like function g (rho or kappa) entering the
/// bound formulas.
struct CurvatureStats {
  double rho0 = 0.0;    // inf g
  double mean = 0.0;    // mu(g)
  double osc = 0.0;     // sup g - inf g
  double lip = 0.0;     // Lipschitz constant for the Euclidean cost
  double median = 0.0;  // mu-quantile of g at `quantile_level`
  double quantile_level = 0.5;
  CostKind cost = CostKind::hamming;
  double norm_c = 0.0;  // osc for hamming, lip for euclidean

  Provenance rho0_src = Provenance::grid_estimate;
  Provenance mean_src = Provenance::grid_estimate;
  Provenance osc_src = Provenance::grid_estimate;
  Provenance lip_src = Provenance::grid_estimate;
  Provenance median_src = Provenance::grid_estimate;

  /// Stats with only the named scalars (cost norm derived from `cost`).
  static CurvatureStats make(double rho0, double mean, double osc, double lip,
                             CostKind cost = CostKind::hamming);
  static CurvatureStats make_with_median(double rho0, double mean, double osc, double lip,
                                         double median, CostKind cost = CostKind::hamming);

  [[nodiscard]] double norm(CostKind c) const { return c == CostKind::hamming ? osc : lip; }
  [[nodiscard]] CurvatureStats with_cost(CostKind c) const;
};

/// rho at every node of the grid (analytic curvature cross-checked per node).
std::vector<double> curvature_field(const GridMeasure& m, const Potential& p);

/// Stats of an arbitrary per-node field. When `analytic_lip` is absent the
/// Lipschitz constant is the largest finite-difference slope along grid edges.
CurvatureStats field_stats(const GridMeasure& m, std::span<const double> field, CostKind cost,
                           std::optional<double> analytic_lip = std::nullopt,
                           double quantile_level = 0.5);

CurvatureStats curvature_stats(const GridMeasure& m, const Potential& p, CostKind cost,
                               double quantile_level = 0.5);

/// Stats of rho_K = min(rho, K).
CurvatureStats clip_curvature(const CurvatureStats& s, const GridMeasure& m, const Potential& p,
                              double K);

/// kappa(x) = g'(|x|^2) evaluated on the grid, with its stats.
struct KappaField {
  Potential::ScalarFn kappa;
  std::vector<double> values;
  CurvatureStats stats;
};
KappaField kappa_stats_for_radial(const GridMeasure& m, const Potential& p, CostKind cost);

/// Weighted q-quantile with linear interpolation between midpoint-cumulative nodes.
double weighted_quantile(std::span<const double> values, std::span<const double> weights,
                         double q);

/// Stats that replace rho0 by 0 and osc by sup(g), i.e. the log-concave
/// convention inf rho = 0. Valid whenever rho0 >= 0.
CurvatureStats floor_to_zero(const CurvatureStats& s);

/// Stats of the push-forward under x -> lambda x: rho0, mean, osc and median
/// scale by 1/lambda^2, lip by 1/lambda^3.
CurvatureStats dilate_stats(const CurvatureStats& s, double lambda);

/// Covariance matrix of mu under the grid (row-major dim x dim).
std::vector<double> covariance(const GridMeasure& m);

/// Cumulative distribution at the nodes of a 1D grid measure.
std::vector<double> cumulative(const GridMeasure& m);

/// n equilibrium points at the mid-quantiles (i + 1/2)/n of a 1D grid measure,
/// by inverse-CDF with linear interpolation.
std::vector<double> equilibrium_quantiles(const GridMeasure& m, std::size_t n);

}  // namespace curvebound
