#include "curvebound/grid_measure.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "curvebound/errors.hpp"

namespace curvebound {

namespace {

std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  const double h = (hi - lo) / (n - 1);
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = lo + h * i;
  v.back() = hi;
  return v;
}

std::vector<double> trapezoid_weights(int n, double h) {
  std::vector<double> w(static_cast<std::size_t>(n), h);
  w.front() = 0.5 * h;
  w.back() = 0.5 * h;
  return w;
}

// Flat index -> multi-index, last axis fastest.
void unravel(std::size_t flat, const std::vector<int>& shape, std::vector<int>& idx) {
  for (int a = static_cast<int>(shape.size()) - 1; a >= 0; --a) {
    const auto s = static_cast<std::size_t>(shape[static_cast<std::size_t>(a)]);
    idx[static_cast<std::size_t>(a)] = static_cast<int>(flat % s);
    flat /= s;
  }
}

std::size_t stride_of(const std::vector<int>& shape, std::size_t axis) {
  std::size_t s = 1;
  for (std::size_t a = axis + 1; a < shape.size(); ++a) s *= static_cast<std::size_t>(shape[a]);
  return s;
}

}  // namespace

double GridMeasure::expect(const std::function<double(std::span<const double>)>& f) const {
  double s = 0.0;
  for (std::size_t i = 0; i < size(); ++i) s += weights[i] * f(node(i));
  return s;
}

double GridMeasure::expect_field(std::span<const double> field) const {
  double s = 0.0;
  for (std::size_t i = 0; i < size(); ++i) s += weights[i] * field[i];
  return s;
}

GridMeasure build_grid_measure(const Potential& p, int resolution, const GridOptions& opts) {
  if (resolution < 16) throw PreconditionError("grid resolution must be at least 16");
  if (p.dim > 2) throw PreconditionError("full quadrature grids support dim <= 2");
  if (static_cast<int>(p.domain_box.size()) != p.dim) {
    throw PreconditionError("domain box does not match potential dimension");
  }

  GridMeasure m;
  m.dim = p.dim;
  const auto n = static_cast<std::size_t>(p.dim);
  std::vector<std::vector<double>> trap(n);
  std::size_t total = 1;
  for (std::size_t a = 0; a < n; ++a) {
    const auto& iv = p.domain_box[a];
    m.axes.push_back(linspace(iv.lo, iv.hi, resolution));
    m.shape.push_back(resolution);
    trap[a] = trapezoid_weights(resolution, iv.width() / (resolution - 1));
    total *= static_cast<std::size_t>(resolution);
  }

  m.nodes.resize(total * n);
  m.potential.resize(total);
  std::vector<double> trap_w(total);
  std::vector<int> idx(n);
  double vmin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < total; ++i) {
    unravel(i, m.shape, idx);
    double w = 1.0;
    for (std::size_t a = 0; a < n; ++a) {
      const auto k = static_cast<std::size_t>(idx[a]);
      m.nodes[i * n + a] = m.axes[a][k];
      w *= trap[a][k];
    }
    trap_w[i] = w;
    const double v = p.value(m.node(i));
    if (!std::isfinite(v)) throw EvaluationError("non-finite potential value in " + p.name);
    m.potential[i] = v;
    vmin = std::min(vmin, v);
  }

  // exp(-V) is evaluated after shifting by min V so the largest term is exactly 1.
  m.weights.resize(total);
  std::vector<double> density(total);
  double mass = 0.0;
  for (std::size_t i = 0; i < total; ++i) {
    density[i] = std::exp(-(m.potential[i] - vmin));
    m.weights[i] = trap_w[i] * density[i];
    mass += m.weights[i];
  }
  for (double& w : m.weights) w /= mass;
  m.log_norm = std::log(mass) - vmin;

  if (p.confined) {
    m.tail_mass_bound = 0.0;
    return m;
  }

  // Tail beyond each face: int_b^inf exp(-V) ~ exp(-V(b)) / dV/dn(b) per face node,
  // integrated along the face with the trapezoid weights of the other axes.
  double tail = 0.0;
  std::vector<double> grad(n);
  for (std::size_t a = 0; a < n; ++a) {
    for (int side = 0; side < 2; ++side) {
      const int k_face = side == 0 ? 0 : resolution - 1;
      const double outward = side == 0 ? -1.0 : 1.0;
      for (std::size_t i = 0; i < total; ++i) {
        unravel(i, m.shape, idx);
        if (idx[a] != k_face) continue;
        const double dens = density[i] / mass;
        if (dens == 0.0) continue;
        double face_w = 1.0;
        for (std::size_t b = 0; b < n; ++b) {
          if (b != a) face_w *= trap[b][static_cast<std::size_t>(idx[b])];
        }
        p.gradient(m.node(i), grad);
        const double slope = outward * grad[a];
        if (!(slope > 0.0)) {
          tail = std::numeric_limits<double>::infinity();
          break;
        }
        tail += face_w * dens / slope;
      }
    }
  }
  m.tail_mass_bound = tail;
  if (!(tail <= opts.tail_threshold)) {
    std::ostringstream os;
    os << "domain too small: estimated tail mass " << tail << " exceeds " << opts.tail_threshold;
    throw DomainError(os.str());
  }
  return m;
}

std::string to_string(CostKind c) { return c == CostKind::hamming ? "hamming" : "euclidean"; }
std::string to_string(Provenance p) {
  return p == Provenance::analytic ? "analytic" : "grid_estimate";
}

CurvatureStats CurvatureStats::make(double rho0, double mean, double osc, double lip,
                                    CostKind cost) {
  return make_with_median(rho0, mean, osc, lip, mean, cost);
}

CurvatureStats CurvatureStats::make_with_median(double rho0, double mean, double osc, double lip,
                                                double median, CostKind cost) {
  CurvatureStats s;
  s.rho0 = rho0;
  s.mean = mean;
  s.osc = osc;
  s.lip = lip;
  s.median = median;
  s.cost = cost;
  s.norm_c = s.norm(cost);
  s.rho0_src = s.mean_src = s.osc_src = s.lip_src = s.median_src = Provenance::analytic;
  return s;
}

CurvatureStats CurvatureStats::with_cost(CostKind c) const {
  CurvatureStats s = *this;
  s.cost = c;
  s.norm_c = s.norm(c);
  return s;
}

std::vector<double> curvature_field(const GridMeasure& m, const Potential& p) {
  std::vector<double> field(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) field[i] = curvature_at(p, m.node(i));
  return field;
}

double weighted_quantile(std::span<const double> values, std::span<const double> weights,
                         double q) {
  if (!(q > 0.0 && q < 1.0)) throw PreconditionError("quantile level must lie in (0, 1)");
  if (values.empty()) throw PreconditionError("quantile of an empty set");
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  double total = 0.0;
  for (double w : weights) total += w;
  double below = 0.0;
  double prev_c = -1.0;
  double prev_v = values[order.front()];
  for (std::size_t k = 0; k < order.size(); ++k) {
    const double w = weights[order[k]] / total;
    const double c = below + 0.5 * w;
    const double v = values[order[k]];
    if (c >= q) {
      if (prev_c < 0.0 || c <= prev_c) return v;
      return prev_v + (v - prev_v) * (q - prev_c) / (c - prev_c);
    }
    below += w;
    prev_c = c;
    prev_v = v;
  }
  return values[order.back()];
}

CurvatureStats field_stats(const GridMeasure& m, std::span<const double> field, CostKind cost,
                           std::optional<double> analytic_lip, double quantile_level) {
  CurvatureStats s;
  const auto [lo, hi] = std::minmax_element(field.begin(), field.end());
  s.rho0 = *lo;
  s.osc = *hi - *lo;
  s.mean = m.expect_field(field);
  s.quantile_level = quantile_level;
  s.median = weighted_quantile(field, m.weights, quantile_level);
  if (analytic_lip) {
    s.lip = *analytic_lip;
    s.lip_src = Provenance::analytic;
  } else {
    double lip = 0.0;
    std::vector<int> idx(static_cast<std::size_t>(m.dim));
    for (std::size_t a = 0; a < static_cast<std::size_t>(m.dim); ++a) {
      const std::size_t stride = stride_of(m.shape, a);
      for (std::size_t i = 0; i < m.size(); ++i) {
        unravel(i, m.shape, idx);
        const auto k = static_cast<std::size_t>(idx[a]);
        if (k + 1 >= m.axes[a].size()) continue;
        const double dx = m.axes[a][k + 1] - m.axes[a][k];
        lip = std::max(lip, std::abs(field[i + stride] - field[i]) / dx);
      }
    }
    s.lip = lip;
    s.lip_src = Provenance::grid_estimate;
  }
  s.cost = cost;
  s.norm_c = s.norm(cost);
  return s;
}

CurvatureStats curvature_stats(const GridMeasure& m, const Potential& p, CostKind cost,
                               double quantile_level) {
  const auto field = curvature_field(m, p);
  auto s = field_stats(m, field, cost, p.analytic_lip, quantile_level);
  if (p.kind == PotentialKind::quadratic) {
    s.rho0_src = s.mean_src = s.osc_src = s.median_src = Provenance::analytic;
  }
  return s;
}

CurvatureStats clip_curvature(const CurvatureStats& s, const GridMeasure& m, const Potential& p,
                              double K) {
  if (!std::isfinite(K)) throw PreconditionError("clip level must be finite");
  auto field = curvature_field(m, p);
  for (double& v : field) v = std::min(v, K);
  // min(rho, K) is no steeper than rho, so an analytic Lipschitz bound carries over.
  std::optional<double> lip;
  if (s.lip_src == Provenance::analytic) lip = s.lip;
  return field_stats(m, field, s.cost, lip, s.quantile_level);
}

KappaField kappa_stats_for_radial(const GridMeasure& m, const Potential& p, CostKind cost) {
  KappaField out;
  out.kappa = kappa_for_radial(p);
  out.values.resize(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) out.values[i] = out.kappa(m.node(i));
  std::optional<double> lip;
  if (p.kind == PotentialKind::quadratic) lip = 0.0;
  out.stats = field_stats(m, out.values, cost, lip);
  return out;
}

CurvatureStats floor_to_zero(const CurvatureStats& s) {
  if (s.rho0 < 0.0) throw PreconditionError("floor_to_zero requires rho0 >= 0");
  CurvatureStats t = s;
  t.osc = s.rho0 + s.osc;
  t.rho0 = 0.0;
  t.norm_c = t.norm(t.cost);
  return t;
}

CurvatureStats dilate_stats(const CurvatureStats& s, double lambda) {
  if (!(lambda > 0.0)) throw PreconditionError("dilation factor must be positive");
  const double l2 = lambda * lambda;
  CurvatureStats d = s;
  d.rho0 = s.rho0 / l2;
  d.mean = s.mean / l2;
  d.osc = s.osc / l2;
  d.median = s.median / l2;
  d.lip = s.lip / (l2 * lambda);
  d.norm_c = d.norm(d.cost);
  return d;
}

std::vector<double> covariance(const GridMeasure& m) {
  const auto n = static_cast<std::size_t>(m.dim);
  std::vector<double> mean(n, 0.0);
  for (std::size_t i = 0; i < m.size(); ++i) {
    for (std::size_t a = 0; a < n; ++a) mean[a] += m.weights[i] * m.nodes[i * n + a];
  }
  std::vector<double> cov(n * n, 0.0);
  for (std::size_t i = 0; i < m.size(); ++i) {
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = 0; b < n; ++b) {
        cov[a * n + b] +=
            m.weights[i] * (m.nodes[i * n + a] - mean[a]) * (m.nodes[i * n + b] - mean[b]);
      }
    }
  }
  return cov;
}

std::vector<double> cumulative(const GridMeasure& m) {
  if (m.dim != 1) throw PreconditionError("cumulative distribution needs a 1D grid");
  const auto& x = m.axes[0];
  const std::size_t n = x.size();
  // Recover the density from the trapezoid weights, then integrate it by trapezoid.
  std::vector<double> dens(n);
  const double h = x[1] - x[0];
  for (std::size_t i = 0; i < n; ++i) {
    const double tw = (i == 0 || i + 1 == n) ? 0.5 * h : h;
    dens[i] = m.weights[i] / tw;
  }
  std::vector<double> F(n, 0.0);
  for (std::size_t i = 1; i < n; ++i) F[i] = F[i - 1] + 0.5 * h * (dens[i - 1] + dens[i]);
  const double total = F.back();
  for (double& f : F) f /= total;
  return F;
}

std::vector<double> equilibrium_quantiles(const GridMeasure& m, std::size_t count) {
  const auto F = cumulative(m);
  const auto& x = m.axes[0];
  std::vector<double> out(count);
  std::size_t k = 0;
  for (std::size_t i = 0; i < count; ++i) {
    const double q = (static_cast<double>(i) + 0.5) / static_cast<double>(count);
    while (k + 1 < F.size() && F[k + 1] < q) ++k;
    const double span = F[k + 1] - F[k];
    const double t = span > 0.0 ? (q - F[k]) / span : 0.0;
    out[i] = x[k] + t * (x[k + 1] - x[k]);
  }
  return out;
}

}  // namespace curvebound
