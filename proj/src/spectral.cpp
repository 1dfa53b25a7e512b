#include "curvebound/spectral.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include <cmath>
#include <limits>

#include "curvebound/errors.hpp"

namespace curvebound {

namespace {

// Symmetrized generator D^{-1/2} K D^{-1/2} on the nodes x.
struct Tridiagonal {
  Eigen::VectorXd diag;
  Eigen::VectorXd sub;
  Eigen::VectorXd sqrt_mass;
};

Tridiagonal assemble(const std::vector<double>& x, const Potential& p) {
  const auto n = static_cast<Eigen::Index>(x.size());
  std::vector<double> v(x.size());
  std::vector<double> vm(x.size() - 1);
  double vmin = std::numeric_limits<double>::infinity();
  double pt = 0.0;
  std::span<const double> one(&pt, 1);
  for (std::size_t i = 0; i < x.size(); ++i) {
    pt = x[i];
    v[i] = p.value(one);
    vmin = std::min(vmin, v[i]);
  }
  for (std::size_t i = 0; i + 1 < x.size(); ++i) {
    pt = 0.5 * (x[i] + x[i + 1]);
    vm[i] = p.value(one);
    vmin = std::min(vmin, vm[i]);
  }
  Eigen::VectorXd mass(n);
  Eigen::VectorXd edge(n - 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const double left = i > 0 ? x[k] - x[k - 1] : 0.0;
    const double right = i + 1 < n ? x[k + 1] - x[k] : 0.0;
    mass(i) = 0.5 * (left + right) * std::exp(-(v[k] - vmin));
  }
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    edge(i) = std::exp(-(vm[k] - vmin)) / (x[k + 1] - x[k]);
  }
  Tridiagonal t;
  t.sqrt_mass = mass.cwiseSqrt();
  t.diag.setZero(n);
  t.sub.resize(n - 1);
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    t.diag(i) += edge(i) / mass(i);
    t.diag(i + 1) += edge(i) / mass(i + 1);
    t.sub(i) = -edge(i) / (t.sqrt_mass(i) * t.sqrt_mass(i + 1));
  }
  return t;
}

double second_eigenvalue(const Tridiagonal& t) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(t.diag, t.sub, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw EvaluationError("tridiagonal eigensolve failed");
  return es.eigenvalues()(1);
}

// Inverse iteration at a shift just below lambda; no deflation of the
// constant mode so the orthogonality residual is a genuine check.
Eigen::VectorXd inverse_iteration(const Tridiagonal& t, double lambda) {
  const Eigen::Index n = t.diag.size();
  const double shift = lambda * (1.0 - 1e-9);
  Eigen::SparseMatrix<double> A(n, n);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(3 * n));
  for (Eigen::Index i = 0; i < n; ++i) trip.emplace_back(i, i, t.diag(i) - shift);
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    trip.emplace_back(i, i + 1, t.sub(i));
    trip.emplace_back(i + 1, i, t.sub(i));
  }
  A.setFromTriplets(trip.begin(), trip.end());
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(A);
  if (lu.info() != Eigen::Success) throw EvaluationError("shifted factorization failed");
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y(i) = std::sin(0.37 * static_cast<double>(i) + 0.1) + 0.5;
  y.normalize();
  for (int it = 0; it < 4; ++it) {
    y = lu.solve(y);
    y.normalize();
  }
  return y;
}

std::vector<double> uniform_nodes(double lo, double hi, int n) {
  std::vector<double> x(static_cast<std::size_t>(n));
  const double h = (hi - lo) / (n - 1);
  for (int i = 0; i < n; ++i) x[static_cast<std::size_t>(i)] = lo + h * i;
  x.back() = hi;
  return x;
}

}  // namespace

SpectralResult spectral_gap_1d(const GridMeasure& m, const Potential& p) {
  if (m.dim != 1 || p.dim != 1) throw PreconditionError("spectral gap oracle is one-dimensional");
  const auto& x = m.axes[0];
  const int n = static_cast<int>(x.size());
  const int nc = n / 2;
  if (nc < 16) throw PreconditionError("grid too coarse for the Richardson check");

  SpectralResult r;
  r.resolution = n;
  const auto fine = assemble(x, p);
  r.lambda1 = second_eigenvalue(fine);
  r.cp_true = 1.0 / r.lambda1;

  const auto xc = uniform_nodes(x.front(), x.back(), nc);
  r.coarse_lambda1 = second_eigenvalue(assemble(xc, p));
  const double hf = (x.back() - x.front()) / (n - 1);
  const double hc = (x.back() - x.front()) / (nc - 1);
  r.richardson_estimate =
      (hc * hc * r.lambda1 - hf * hf * r.coarse_lambda1) / (hc * hc - hf * hf);
  r.converged = r.lambda1 > 0.0 &&
                std::abs(r.richardson_estimate - r.lambda1) <= 0.01 * std::abs(r.lambda1);

  const Eigen::VectorXd y = inverse_iteration(fine, r.lambda1);
  r.orthogonality_residual = std::abs(y.dot(fine.sqrt_mass)) / fine.sqrt_mass.norm();
  // f = D^{-1/2} y, normalized so that mu(f^2) = 1.
  const double total_mass = fine.sqrt_mass.squaredNorm();
  r.eigenvector.resize(x.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    r.eigenvector[static_cast<std::size_t>(i)] = y(i) / fine.sqrt_mass(i) * std::sqrt(total_mass);
  }
  return r;
}

double w1_exact_1d(std::span<const double> x, std::span<const double> cdf_a,
                   std::span<const double> cdf_b) {
  if (x.size() != cdf_a.size() || x.size() != cdf_b.size()) {
    throw PreconditionError("CDFs must live on a common grid");
  }
  constexpr double tol = 1e-12;
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < x.size(); ++i) {
    if (x[i + 1] < x[i]) throw PreconditionError("grid must be nondecreasing");
    if (cdf_a[i + 1] < cdf_a[i] - tol || cdf_b[i + 1] < cdf_b[i] - tol) {
      throw PreconditionError("non-monotone CDF");
    }
    const double dl = std::abs(cdf_a[i] - cdf_b[i]);
    const double dr = std::abs(cdf_a[i + 1] - cdf_b[i + 1]);
    s += 0.5 * (x[i + 1] - x[i]) * (dl + dr);
  }
  return s;
}

double gamma2_integral_margin(const GridMeasure& m, const Potential& p, const TestFunction& f,
                              double C) {
  const auto n = static_cast<std::size_t>(m.dim);
  std::vector<double> g(n);
  std::vector<double> hf(n * n);
  std::vector<double> hv(n * n);
  double hess_sq = 0.0;
  double curv = 0.0;
  double grad_sq = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    const auto x = m.node(i);
    f.gradient(x, g);
    f.hessian(x, hf);
    p.hessian(x, hv);
    double h2 = 0.0;
    for (double e : hf) h2 += e * e;
    double q = 0.0;
    double g2 = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
      g2 += g[a] * g[a];
      for (std::size_t b = 0; b < n; ++b) q += g[a] * hv[a * n + b] * g[b];
    }
    const double w = m.weights[i];
    hess_sq += w * h2;
    curv += w * q;
    grad_sq += w * g2;
  }
  return hess_sq + curv - C * grad_sq;
}

}  // namespace curvebound
