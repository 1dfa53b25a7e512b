#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "curvebound/grid_measure.hpp"
#include "curvebound/potential.hpp"
#include "curvebound/rng.hpp"

namespace curvebound {

struct SimConfig {
  double dt = 1e-3;
  double T = 1.0;
  std::size_t n_paths = 1000;
  std::uint64_t seed = 1;
  bool richardson = false;  // callers rerun at dt/2 when set
  int refine = 0;           // Brownian refinement level relative to the base dt
  int gl_order = 8;
  double contraction_c1 = 10.0;
  double safety_factor = 3.0;
  std::vector<double> save_times;  // defaults to {T}

  [[nodiscard]] std::size_t n_steps() const;
  [[nodiscard]] SimConfig halved() const;
};

struct EstimateCI {
  double mean = 0.0;
  double se = 0.0;
  std::size_t n = 0;
  double lo = 0.0;
  double hi = 0.0;

  static EstimateCI from_mean_se(double mean, double se, std::size_t n);
  static EstimateCI from_samples(std::span<const double> xs);
};

/// Writes the starting point of path `path` into `out`.
using Sampler = std::function<void(std::uint64_t path, std::span<double> out)>;
using PairSampler =
    std::function<void(std::uint64_t path, std::span<double> x, std::span<double> y)>;

Sampler point_sampler(std::vector<double> x);
/// Cycles through a fixed list of points (flat, dim-strided).
Sampler list_sampler(std::vector<double> points, int dim);

/// Gauss-Legendre nodes and weights on [0, 1].
struct GaussLegendre {
  std::vector<double> nodes;
  std::vector<double> weights;
};
GaussLegendre gauss_legendre_01(int order);

struct Ensemble {
  int dim = 1;
  std::size_t n_paths = 0;
  std::vector<double> times;                // saved times
  std::vector<std::vector<double>> states;  // per saved time, n_paths * dim
  std::vector<char> flagged;
  std::size_t n_flagged = 0;

  [[nodiscard]] std::vector<double> component(std::size_t time_index, int axis) const;
};

/// Euler-Maruyama for dX = -grad V(X) dt + sqrt(2) dB.
Ensemble simulate(const Potential& p, const SimConfig& cfg, const Sampler& init);

struct CoupledEnsemble {
  int dim = 1;
  std::size_t n_paths = 0;
  std::vector<double> times;
  std::vector<double> x0, y0;  // initial points, n_paths * dim
  // Per saved time, per path:
  std::vector<std::vector<double>> x, y;  // n_paths * dim
  std::vector<std::vector<double>> int_rho_x, int_rho_y, int_kappa_sum, int_interp;
  std::vector<char> flagged;
  std::size_t n_flagged = 0;
  std::size_t order_violations = 0;  // 1D only: sign changes of Y - X
  std::size_t identical_breaks = 0;  // pairs started equal that separated
  bool has_kappa = false;
  double dt = 0.0;
};

/// Both paths share every Brownian increment. Running integrals use the
/// trapezoid rule in time and Gauss-Legendre in the interpolation parameter.
CoupledEnsemble simulate_coupled(const Potential& p, const SimConfig& cfg,
                                 const PairSampler& pairs);
CoupledEnsemble simulate_coupled(const Potential& p, const SimConfig& cfg, std::vector<double> x,
                                 std::vector<double> y);

enum class ContractionMode { rho_interpolated, kappa_sum };

struct ContractionReport {
  std::size_t checked = 0;
  std::size_t violations = 0;
  double max_ratio = 0.0;  // max |X-Y| / (|x-y| exp(-I)), 1 means saturated
  double tolerance = 0.0;
  [[nodiscard]] bool pass() const { return violations == 0; }
};

ContractionReport check_pathwise_contraction(const CoupledEnsemble& e, ContractionMode mode,
                                             double c1 = 10.0);

enum class Verdict { pass, fail, inconclusive };
std::string to_string(Verdict v);

/// Runs the coupling at dt and dt/2; fails only if both violate.
struct TwoStepContraction {
  ContractionReport coarse;
  ContractionReport fine;
  Verdict verdict = Verdict::pass;
};
TwoStepContraction contraction_two_step(const Potential& p, const SimConfig& cfg,
                                        const PairSampler& pairs, ContractionMode mode);

using PointFn = std::function<double(std::span<const double>)>;

struct ExpFunctionalSpec {
  PointFn g;
  double lambda = 1.0;
  double t = 1.0;
  std::optional<std::function<bool(std::span<const double>)>> mask;
  std::optional<PointFn> terminal_weight;  // multiplies exp(-...) by w(X_t)
};

/// Monte Carlo mean of w(X_t) exp(-lambda int_0^t g(X_s) 1[mask(X_s)] ds).
EstimateCI estimate_exp_functional(const Potential& p, const SimConfig& cfg, const Sampler& init,
                                   const ExpFunctionalSpec& spec);

struct SmoothFunction {
  PointFn value;
  std::function<void(std::span<const double>, std::span<double>)> gradient;
};

struct CommutationResult {
  EstimateCI lhs;
  EstimateCI rhs;
  double h = 0.0;
  double slack = 0.0;
  Verdict verdict = Verdict::pass;
};

/// |grad P_t f|(x) by central differences with common random numbers, against
/// E_x[exp(-int_0^t rho(X_s) ds) |grad f|(X_t)].
CommutationResult check_gradient_commutation(const Potential& p, const SimConfig& cfg,
                                             const SmoothFunction& f, std::vector<double> x,
                                             double t);

struct DerivativeFlowReport {
  std::size_t checked = 0;
  std::size_t violations = 0;
  double max_ratio = 0.0;  // max ||J_t||_2 / exp(-int rho)
};

/// Variational flow J_{k+1} = (I - dt Hess V(X_k)) J_k along each path.
DerivativeFlowReport check_derivative_flow(const Potential& p, const SimConfig& cfg,
                                           std::vector<double> x, double t, double c1 = 10.0);

/// Exact empirical W1 between equal-size samples (flat, dim-strided).
double empirical_w1(std::span<const double> a, std::span<const double> b, int dim);
/// Optimal assignment cost (Euclidean) by the Hungarian method, n <= 512.
double assignment_w1(std::span<const double> a, std::span<const double> b, int dim);

struct DecayCurve {
  std::vector<double> times;
  std::vector<double> estimate;
  std::vector<double> se;
  double fitted_rate = 0.0;
  double fitted_rate_se = 0.0;
};

/// Weighted least-squares rate of log(estimate) over the tail half of times.
void fit_exponential_rate(DecayCurve& c);

/// Empirical W1(P_t^* nu, mu) against fixed equilibrium samples. Standard errors
/// from 10 batch means.
DecayCurve w1_decay_curve(const Potential& p, const SimConfig& cfg, const Sampler& nu,
                          const std::vector<double>& times, std::span<const double> equilibrium);

/// Equilibrium points for dim >= 2 by running from `start` for `burn_in` time.
std::vector<double> equilibrium_by_burn_in(const Potential& p, const SimConfig& cfg,
                                           std::vector<double> start, double burn_in);

struct VarianceDecay {
  std::vector<double> times;
  std::vector<double> variance;
  std::vector<double> se;
  std::vector<bool> inconclusive;
};

/// Var_mu(P_t f) by nested Monte Carlo: outer points from `outer`, `n_inner`
/// paths each, with the inner-noise bias removed.
VarianceDecay variance_decay(const Potential& p, const SimConfig& cfg, const PointFn& f,
                             const std::vector<double>& times, std::span<const double> outer,
                             std::size_t n_inner);

}  // namespace curvebound
