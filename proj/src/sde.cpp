#include "curvebound/sde.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "curvebound/errors.hpp"

namespace curvebound {

std::size_t SimConfig::n_steps() const {
  if (!(dt > 0.0) || !(T > 0.0)) throw PreconditionError("dt and T must be positive");
  if (dt > T) throw PreconditionError("dt must not exceed T");
  return static_cast<std::size_t>(std::llround(T / dt));
}

SimConfig SimConfig::halved() const {
  SimConfig c = *this;
  c.dt = 0.5 * dt;
  c.refine = refine + 1;
  return c;
}

EstimateCI EstimateCI::from_mean_se(double mean, double se, std::size_t n) {
  return {mean, se, n, mean - 1.96 * se, mean + 1.96 * se};
}

EstimateCI EstimateCI::from_samples(std::span<const double> xs) {
  const std::size_t n = xs.size();
  if (n < 2) throw PreconditionError("need at least two samples for a confidence interval");
  // Two-pass mean and variance in index order: independent of scheduling.
  double mean = 0.0;
  for (double v : xs) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : xs) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  return from_mean_se(mean, sd / std::sqrt(static_cast<double>(n)), n);
}

Sampler point_sampler(std::vector<double> x) {
  return [x = std::move(x)](std::uint64_t, std::span<double> out) {
    std::copy(x.begin(), x.end(), out.begin());
  };
}

Sampler list_sampler(std::vector<double> points, int dim) {
  const auto d = static_cast<std::size_t>(dim);
  if (points.empty() || points.size() % d != 0) throw PreconditionError("bad point list");
  return [points = std::move(points), d](std::uint64_t path, std::span<double> out) {
    const std::size_t count = points.size() / d;
    const std::size_t i = static_cast<std::size_t>(path % count);
    std::copy_n(points.begin() + static_cast<std::ptrdiff_t>(i * d), d, out.begin());
  };
}

GaussLegendre gauss_legendre_01(int order) {
  if (order < 1 || order > 64) throw PreconditionError("Gauss-Legendre order must be in [1, 64]");
  GaussLegendre gl;
  const int n = order;
  gl.nodes.resize(static_cast<std::size_t>(n));
  gl.weights.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0;
      double p1 = z;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (z * p1 - p0) / (z * z - 1.0);
      const double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    const double w = 2.0 / ((1.0 - z * z) * dp * dp);
    const auto lo = static_cast<std::size_t>(i);
    const auto hi = static_cast<std::size_t>(n - 1 - i);
    gl.nodes[lo] = 0.5 * (1.0 - z);
    gl.nodes[hi] = 0.5 * (1.0 + z);
    gl.weights[lo] = 0.5 * w;
    gl.weights[hi] = 0.5 * w;
  }
  return gl;
}

std::vector<double> Ensemble::component(std::size_t time_index, int axis) const {
  std::vector<double> out;
  out.reserve(n_paths);
  const auto d = static_cast<std::size_t>(dim);
  for (std::size_t i = 0; i < n_paths; ++i) {
    if (!flagged[i]) out.push_back(states[time_index][i * d + static_cast<std::size_t>(axis)]);
  }
  return out;
}

namespace {

constexpr double kFlagLimit = 0.01;

// Brownian increments at refinement level L: each coarse normal splits into
// two children (c +/- z)/sqrt(2), so every level sees the same Brownian path.
double brownian_normal(const NormalSource& ns, std::uint64_t path, std::uint32_t step,
                       std::uint32_t comp, int level) {
  if (level == 0) return ns.normal(path, step, comp);
  const double c = brownian_normal(ns, path, step / 2, comp, level - 1);
  const double z = ns.substream(static_cast<std::uint32_t>(100 + level)).normal(path, step / 2,
                                                                                 comp);
  return (c + ((step % 2 == 0) ? z : -z)) * (0.5 * std::numbers::sqrt2);
}

struct Stepper {
  const Potential& p;
  double dt;
  double sq;
  NormalSource ns;
  int level;
  std::size_t dim;
  Box safety;

  Stepper(const Potential& pot, const SimConfig& cfg, std::uint32_t stream = 0)
      : p(pot),
        dt(cfg.dt),
        sq(std::sqrt(2.0 * cfg.dt)),
        ns(NormalSource(cfg.seed).substream(stream)),
        level(cfg.refine),
        dim(static_cast<std::size_t>(pot.dim)) {
    for (const auto& iv : pot.domain_box) {
      const double c = iv.center();
      const double hw = 0.5 * iv.width() * cfg.safety_factor;
      safety.push_back({c - hw, c + hw});
    }
  }

  void noise(std::uint64_t path, std::size_t step, std::span<double> xi) const {
    for (std::size_t a = 0; a < dim; ++a) {
      xi[a] = brownian_normal(ns, path, static_cast<std::uint32_t>(step),
                              static_cast<std::uint32_t>(a), level);
    }
  }

  // x <- x - grad V(x) dt + sqrt(2 dt) xi; returns false when x leaves the safety box.
  bool advance(std::span<double> x, std::span<const double> xi, std::span<double> g) const {
    p.gradient(x, g);
    bool ok = true;
    for (std::size_t a = 0; a < dim; ++a) {
      x[a] += -g[a] * dt + sq * xi[a];
      if (!(x[a] >= safety[a].lo && x[a] <= safety[a].hi)) ok = false;
    }
    return ok;
  }
};

std::vector<std::size_t> save_indices(const SimConfig& cfg, std::vector<double>& times) {
  times = cfg.save_times.empty() ? std::vector<double>{cfg.T} : cfg.save_times;
  const std::size_t n = cfg.n_steps();
  std::vector<std::size_t> idx;
  for (double t : times) {
    if (t < 0.0 || t > cfg.T * (1.0 + 1e-12)) throw PreconditionError("save time outside [0, T]");
    idx.push_back(std::min(n, static_cast<std::size_t>(std::llround(t / cfg.dt))));
  }
  if (!std::is_sorted(idx.begin(), idx.end())) throw PreconditionError("save times must be sorted");
  return idx;
}

void check_flags(std::size_t flagged, std::size_t n) {
  if (static_cast<double>(flagged) > kFlagLimit * static_cast<double>(n)) {
    throw SimulationError("possible non-conservativity or box too small: " +
                          std::to_string(flagged) + " of " + std::to_string(n) +
                          " paths left the safety box");
  }
}

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double e : v) s += e * e;
  return std::sqrt(s);
}

double distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

}  // namespace

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::pass:
      return "pass";
    case Verdict::fail:
      return "fail";
    case Verdict::inconclusive:
      return "inconclusive";
  }
  return "inconclusive";
}

Ensemble simulate(const Potential& p, const SimConfig& cfg, const Sampler& init) {
  if (cfg.n_paths < 1) throw PreconditionError("need at least one path");
  Ensemble e;
  e.dim = p.dim;
  e.n_paths = cfg.n_paths;
  const auto idx = save_indices(cfg, e.times);
  const std::size_t n_steps = cfg.n_steps();
  const std::size_t d = static_cast<std::size_t>(p.dim);
  e.states.assign(idx.size(), std::vector<double>(cfg.n_paths * d, 0.0));
  e.flagged.assign(cfg.n_paths, 0);
  const Stepper st(p, cfg);

#pragma omp parallel for schedule(static)
  for (std::int64_t ip = 0; ip < static_cast<std::int64_t>(cfg.n_paths); ++ip) {
    const auto i = static_cast<std::size_t>(ip);
    std::vector<double> x(d), g(d), xi(d);
    init(i, x);
    std::size_t next = 0;
    bool ok = true;
    for (std::size_t k = 0; k <= n_steps && next < idx.size(); ++k) {
      while (next < idx.size() && idx[next] == k) {
        std::copy(x.begin(), x.end(), e.states[next].begin() + static_cast<std::ptrdiff_t>(i * d));
        ++next;
      }
      if (k == n_steps || next == idx.size()) break;
      st.noise(i, k, xi);
      if (!st.advance(x, xi, g)) {
        ok = false;
        break;
      }
    }
    e.flagged[i] = ok ? 0 : 1;
  }
  e.n_flagged = static_cast<std::size_t>(std::count(e.flagged.begin(), e.flagged.end(), 1));
  check_flags(e.n_flagged, cfg.n_paths);
  return e;
}

CoupledEnsemble simulate_coupled(const Potential& p, const SimConfig& cfg,
                                 const PairSampler& pairs) {
  CoupledEnsemble e;
  e.dim = p.dim;
  e.n_paths = cfg.n_paths;
  e.dt = cfg.dt;
  e.has_kappa = p.kappa.has_value();
  const auto idx = save_indices(cfg, e.times);
  const std::size_t n_steps = cfg.n_steps();
  const std::size_t d = static_cast<std::size_t>(p.dim);
  const std::size_t ns = idx.size();
  const std::size_t np = cfg.n_paths;
  e.x0.assign(np * d, 0.0);
  e.y0.assign(np * d, 0.0);
  e.x.assign(ns, std::vector<double>(np * d));
  e.y.assign(ns, std::vector<double>(np * d));
  for (auto* v : {&e.int_rho_x, &e.int_rho_y, &e.int_kappa_sum, &e.int_interp}) {
    v->assign(ns, std::vector<double>(np, 0.0));
  }
  e.flagged.assign(np, 0);
  std::vector<std::size_t> order_viol(np, 0);
  std::vector<char> broke(np, 0);
  const auto gl = gauss_legendre_01(cfg.gl_order);
  const Stepper st(p, cfg);

#pragma omp parallel for schedule(static)
  for (std::int64_t ip = 0; ip < static_cast<std::int64_t>(np); ++ip) {
    const auto i = static_cast<std::size_t>(ip);
    std::vector<double> x(d), y(d), g(d), xi(d), z(d);
    pairs(i, x, y);
    std::copy(x.begin(), x.end(), e.x0.begin() + static_cast<std::ptrdiff_t>(i * d));
    std::copy(y.begin(), y.end(), e.y0.begin() + static_cast<std::ptrdiff_t>(i * d));
    const bool same = x == y;
    const double sign0 = d == 1 ? y[0] - x[0] : 0.0;

    auto interp = [&]() {
      if (x == y) return p.rho(x);
      double s = 0.0;
      for (std::size_t q = 0; q < gl.nodes.size(); ++q) {
        const double l = gl.nodes[q];
        for (std::size_t a = 0; a < d; ++a) z[a] = l * x[a] + (1.0 - l) * y[a];
        s += gl.weights[q] * p.rho(z);
      }
      return s;
    };
    auto ksum = [&]() { return e.has_kappa ? (*p.kappa)(x) + (*p.kappa)(y) : 0.0; };

    double rx = p.rho(x), ry = p.rho(y), kk = ksum(), ri = interp();
    double Irx = 0.0, Iry = 0.0, Ik = 0.0, Ii = 0.0;
    std::size_t next = 0;
    bool ok = true;
    for (std::size_t k = 0; k <= n_steps && next < ns; ++k) {
      while (next < ns && idx[next] == k) {
        std::copy(x.begin(), x.end(), e.x[next].begin() + static_cast<std::ptrdiff_t>(i * d));
        std::copy(y.begin(), y.end(), e.y[next].begin() + static_cast<std::ptrdiff_t>(i * d));
        e.int_rho_x[next][i] = Irx;
        e.int_rho_y[next][i] = Iry;
        e.int_kappa_sum[next][i] = Ik;
        e.int_interp[next][i] = Ii;
        ++next;
      }
      if (k == n_steps || next == ns) break;
      st.noise(i, k, xi);
      const bool okx = st.advance(x, xi, g);
      const bool oky = st.advance(y, xi, g);
      if (!okx || !oky) {
        ok = false;
        break;
      }
      const double rx1 = p.rho(x), ry1 = p.rho(y), kk1 = ksum(), ri1 = interp();
      const double h = 0.5 * cfg.dt;
      Irx += h * (rx + rx1);
      Iry += h * (ry + ry1);
      Ik += h * (kk + kk1);
      Ii += h * (ri + ri1);
      rx = rx1, ry = ry1, kk = kk1, ri = ri1;
      if (d == 1) {
        const double s = y[0] - x[0];
        if ((sign0 >= 0.0 && s < 0.0) || (sign0 <= 0.0 && s > 0.0)) ++order_viol[i];
      }
      if (same && x != y) broke[i] = 1;
    }
    e.flagged[i] = ok ? 0 : 1;
  }
  e.n_flagged = static_cast<std::size_t>(std::count(e.flagged.begin(), e.flagged.end(), 1));
  e.order_violations = std::accumulate(order_viol.begin(), order_viol.end(), std::size_t{0});
  e.identical_breaks = static_cast<std::size_t>(std::count(broke.begin(), broke.end(), 1));
  check_flags(e.n_flagged, np);
  return e;
}

CoupledEnsemble simulate_coupled(const Potential& p, const SimConfig& cfg, std::vector<double> x,
                                 std::vector<double> y) {
  return simulate_coupled(p, cfg, [x = std::move(x), y = std::move(y)](
                                      std::uint64_t, std::span<double> ox, std::span<double> oy) {
    std::copy(x.begin(), x.end(), ox.begin());
    std::copy(y.begin(), y.end(), oy.begin());
  });
}

ContractionReport check_pathwise_contraction(const CoupledEnsemble& e, ContractionMode mode,
                                             double c1) {
  if (mode == ContractionMode::kappa_sum && !e.has_kappa) {
    throw PreconditionError("kappa mode needs a potential with reinforced curvature");
  }
  ContractionReport r;
  r.tolerance = c1 * e.dt;
  const auto d = static_cast<std::size_t>(e.dim);
  for (std::size_t i = 0; i < e.n_paths; ++i) {
    if (e.flagged[i]) continue;
    const std::span<const double> x0(e.x0.data() + i * d, d);
    const std::span<const double> y0(e.y0.data() + i * d, d);
    const double d0 = distance(x0, y0);
    for (std::size_t s = 0; s < e.times.size(); ++s) {
      const std::span<const double> xs(e.x[s].data() + i * d, d);
      const std::span<const double> ys(e.y[s].data() + i * d, d);
      const double dt_ = distance(xs, ys);
      const double I = mode == ContractionMode::kappa_sum ? e.int_kappa_sum[s][i]
                                                           : e.int_interp[s][i];
      ++r.checked;
      if (d0 == 0.0) {
        if (dt_ != 0.0) ++r.violations;
        continue;
      }
      const double ratio = dt_ / (d0 * std::exp(-I));
      r.max_ratio = std::max(r.max_ratio, ratio);
      if (ratio > 1.0 + r.tolerance) ++r.violations;
    }
  }
  return r;
}

TwoStepContraction contraction_two_step(const Potential& p, const SimConfig& cfg,
                                        const PairSampler& pairs, ContractionMode mode) {
  TwoStepContraction out;
  out.coarse = check_pathwise_contraction(simulate_coupled(p, cfg, pairs), mode,
                                          cfg.contraction_c1);
  out.fine = check_pathwise_contraction(simulate_coupled(p, cfg.halved(), pairs), mode,
                                        cfg.contraction_c1);
  if (out.coarse.pass() && out.fine.pass()) {
    out.verdict = Verdict::pass;
  } else if (!out.coarse.pass() && !out.fine.pass()) {
    out.verdict = Verdict::fail;
  } else {
    out.verdict = Verdict::inconclusive;
  }
  return out;
}

EstimateCI estimate_exp_functional(const Potential& p, const SimConfig& cfg, const Sampler& init,
                                   const ExpFunctionalSpec& spec) {
  if (spec.t > cfg.T * (1.0 + 1e-12)) throw PreconditionError("t exceeds the horizon");
  const std::size_t n_steps = static_cast<std::size_t>(std::llround(spec.t / cfg.dt));
  const std::size_t d = static_cast<std::size_t>(p.dim);
  const std::size_t np = cfg.n_paths;
  std::vector<double> samples(np, 0.0);
  std::vector<char> flagged(np, 0);
  const Stepper st(p, cfg);
  auto integrand = [&](std::span<const double> x) {
    if (spec.mask && !(*spec.mask)(x)) return 0.0;
    return spec.g(x);
  };

#pragma omp parallel for schedule(static)
  for (std::int64_t ip = 0; ip < static_cast<std::int64_t>(np); ++ip) {
    const auto i = static_cast<std::size_t>(ip);
    std::vector<double> x(d), g(d), xi(d);
    init(i, x);
    double prev = integrand(x);
    double I = 0.0;
    bool ok = true;
    for (std::size_t k = 0; k < n_steps; ++k) {
      st.noise(i, k, xi);
      if (!st.advance(x, xi, g)) {
        ok = false;
        break;
      }
      const double cur = integrand(x);
      I += 0.5 * cfg.dt * (prev + cur);
      prev = cur;
    }
    flagged[i] = ok ? 0 : 1;
    const double w = spec.terminal_weight ? (*spec.terminal_weight)(x) : 1.0;
    samples[i] = w * std::exp(-spec.lambda * I);
  }
  const auto n_flagged = static_cast<std::size_t>(std::count(flagged.begin(), flagged.end(), 1));
  check_flags(n_flagged, np);
  std::vector<double> kept;
  kept.reserve(np);
  for (std::size_t i = 0; i < np; ++i) {
    if (!flagged[i]) kept.push_back(samples[i]);
  }
  return EstimateCI::from_samples(kept);
}

CommutationResult check_gradient_commutation(const Potential& p, const SimConfig& cfg,
                                             const SmoothFunction& f, std::vector<double> x,
                                             double t) {
  if (p.dim > 2) throw PreconditionError("gradient commutation check supports dim <= 2");
  if (t > cfg.T * (1.0 + 1e-12)) throw PreconditionError("t exceeds the horizon");
  const std::size_t d = static_cast<std::size_t>(p.dim);
  const std::size_t np = cfg.n_paths;
  const std::size_t n_steps = static_cast<std::size_t>(std::llround(t / cfg.dt));
  CommutationResult res;
  res.h = 1e-3 * (1.0 + norm(x));
  const double h = res.h;
  std::vector<double> diffs(np * d, 0.0);
  std::vector<double> rhs(np, 0.0);
  std::vector<char> flagged(np, 0);
  const Stepper st(p, cfg);

#pragma omp parallel for schedule(static)
  for (std::int64_t ip = 0; ip < static_cast<std::int64_t>(np); ++ip) {
    const auto i = static_cast<std::size_t>(ip);
    // Slots: 0 = x, then (x + h e_a, x - h e_a) for each axis; all share noise.
    const std::size_t slots = 1 + 2 * d;
    std::vector<std::vector<double>> pts(slots, x);
    for (std::size_t a = 0; a < d; ++a) {
      pts[1 + 2 * a][a] += h;
      pts[2 + 2 * a][a] -= h;
    }
    std::vector<double> g(d), xi(d), grad(d);
    double prev = p.rho(pts[0]);
    double I = 0.0;
    bool ok = true;
    for (std::size_t k = 0; k < n_steps && ok; ++k) {
      st.noise(i, k, xi);
      for (auto& q : pts) ok = st.advance(q, xi, g) && ok;
      const double cur = p.rho(pts[0]);
      I += 0.5 * cfg.dt * (prev + cur);
      prev = cur;
    }
    flagged[i] = ok ? 0 : 1;
    for (std::size_t a = 0; a < d; ++a) {
      diffs[i * d + a] = (f.value(pts[1 + 2 * a]) - f.value(pts[2 + 2 * a])) / (2.0 * h);
    }
    f.gradient(pts[0], grad);
    rhs[i] = std::exp(-I) * norm(grad);
  }
  const auto n_flagged = static_cast<std::size_t>(std::count(flagged.begin(), flagged.end(), 1));
  check_flags(n_flagged, np);

  std::vector<double> mean(d, 0.0);
  std::size_t kept = 0;
  for (std::size_t i = 0; i < np; ++i) {
    if (flagged[i]) continue;
    ++kept;
    for (std::size_t a = 0; a < d; ++a) mean[a] += diffs[i * d + a];
  }
  for (double& m : mean) m /= static_cast<double>(kept);
  const double lhs = norm(mean);
  std::vector<double> u(d, 0.0);
  if (lhs > 0.0) {
    for (std::size_t a = 0; a < d; ++a) u[a] = mean[a] / lhs;
  } else {
    u[0] = 1.0;
  }
  std::vector<double> proj, rkept;
  for (std::size_t i = 0; i < np; ++i) {
    if (flagged[i]) continue;
    double s = 0.0;
    for (std::size_t a = 0; a < d; ++a) s += u[a] * diffs[i * d + a];
    proj.push_back(s);
    rkept.push_back(rhs[i]);
  }
  const auto pci = EstimateCI::from_samples(proj);
  res.lhs = EstimateCI::from_mean_se(lhs, pci.se, kept);
  res.rhs = EstimateCI::from_samples(rkept);
  res.slack = 2.0 * (res.lhs.se + res.rhs.se) + 10.0 * h * h;
  const double excess = res.lhs.mean - res.rhs.mean;
  if (excess <= res.slack) {
    res.verdict = Verdict::pass;
  } else if (excess <= 2.0 * res.slack) {
    res.verdict = Verdict::inconclusive;
  } else {
    res.verdict = Verdict::fail;
  }
  return res;
}

namespace {
// Largest singular value of a row-major dim x dim matrix (dim <= 2).
double spectral_norm(const std::vector<double>& J, std::size_t d) {
  if (d == 1) return std::abs(J[0]);
  const double a = J[0], b = J[1], c = J[2], e = J[3];
  // Eigenvalues of J^T J.
  const double p = a * a + c * c;
  const double q = a * b + c * e;
  const double r = b * b + e * e;
  const double half_tr = 0.5 * (p + r);
  const double lmax = half_tr + std::hypot(0.5 * (p - r), q);
  return std::sqrt(std::max(lmax, 0.0));
}
}  // namespace

DerivativeFlowReport check_derivative_flow(const Potential& p, const SimConfig& cfg,
                                           std::vector<double> x, double t, double c1) {
  if (p.dim > 2) throw PreconditionError("derivative flow check supports dim <= 2");
  if (t > cfg.T * (1.0 + 1e-12)) throw PreconditionError("t exceeds the horizon");
  const std::size_t d = static_cast<std::size_t>(p.dim);
  const std::size_t np = cfg.n_paths;
  const std::size_t n_steps = static_cast<std::size_t>(std::llround(t / cfg.dt));
  std::vector<double> ratio(np, 0.0);
  std::vector<char> flagged(np, 0);
  const Stepper st(p, cfg);

#pragma omp parallel for schedule(static)
  for (std::int64_t ip = 0; ip < static_cast<std::int64_t>(np); ++ip) {
    const auto i = static_cast<std::size_t>(ip);
    std::vector<double> X = x, g(d), xi(d), H(d * d), J(d * d, 0.0), Jn(d * d);
    for (std::size_t a = 0; a < d; ++a) J[a * d + a] = 1.0;
    double prev = p.rho(X);
    double I = 0.0;
    bool ok = true;
    for (std::size_t k = 0; k < n_steps; ++k) {
      p.hessian(X, H);
      for (std::size_t a = 0; a < d; ++a) {
        for (std::size_t b = 0; b < d; ++b) {
          double s = J[a * d + b];
          for (std::size_t c = 0; c < d; ++c) s -= cfg.dt * H[a * d + c] * J[c * d + b];
          Jn[a * d + b] = s;
        }
      }
      J.swap(Jn);
      st.noise(i, k, xi);
      if (!st.advance(X, xi, g)) {
        ok = false;
        break;
      }
      const double cur = p.rho(X);
      I += 0.5 * cfg.dt * (prev + cur);
      prev = cur;
    }
    flagged[i] = ok ? 0 : 1;
    ratio[i] = spectral_norm(J, d) / std::exp(-I);
  }
  const auto n_flagged = static_cast<std::size_t>(std::count(flagged.begin(), flagged.end(), 1));
  check_flags(n_flagged, np);
  DerivativeFlowReport r;
  for (std::size_t i = 0; i < np; ++i) {
    if (flagged[i]) continue;
    ++r.checked;
    r.max_ratio = std::max(r.max_ratio, ratio[i]);
    if (ratio[i] > 1.0 + c1 * cfg.dt) ++r.violations;
  }
  return r;
}

double empirical_w1(std::span<const double> a, std::span<const double> b, int dim) {
  if (a.size() != b.size()) throw PreconditionError("equal sample counts required");
  if (dim == 1) {
    std::vector<double> sa(a.begin(), a.end()), sb(b.begin(), b.end());
    std::sort(sa.begin(), sa.end());
    std::sort(sb.begin(), sb.end());
    double s = 0.0;
    for (std::size_t i = 0; i < sa.size(); ++i) s += std::abs(sa[i] - sb[i]);
    return sa.empty() ? 0.0 : s / static_cast<double>(sa.size());
  }
  return assignment_w1(a, b, dim);
}

double assignment_w1(std::span<const double> a, std::span<const double> b, int dim) {
  const auto d = static_cast<std::size_t>(dim);
  if (a.size() != b.size() || a.size() % d != 0) throw PreconditionError("bad sample sizes");
  const std::size_t n = a.size() / d;
  if (n > 512) throw PreconditionError("subsample required");
  if (n == 0) return 0.0;
  auto cost = [&](std::size_t i, std::size_t j) {
    return distance(a.subspan(i * d, d), b.subspan(j * d, d));
  };
  // Hungarian method with row/column potentials, 1-based with a virtual column 0.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = match[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  double total = 0.0;
  for (std::size_t j = 1; j <= n; ++j) total += cost(match[j] - 1, j - 1);
  return total / static_cast<double>(n);
}

namespace {

// W1 between two 1D empirical measures of any sizes: integral of |F_a - F_b|.
double w1_1d_unequal(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double prev = std::min(a.front(), b.front());
  double s = 0.0;
  while (i < a.size() || j < b.size()) {
    double next;
    if (j >= b.size() || (i < a.size() && a[i] <= b[j])) {
      next = a[i];
    } else {
      next = b[j];
    }
    s += std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb) * (next - prev);
    prev = next;
    if (j >= b.size() || (i < a.size() && a[i] <= b[j])) {
      ++i;
    } else {
      ++j;
    }
  }
  return s;
}

}  // namespace

void fit_exponential_rate(DecayCurve& c) {
  const std::size_t n = c.times.size();
  if (n < 2) throw PreconditionError("need at least two times to fit a rate");
  const std::size_t start = std::min(n / 2, n - 2);
  std::vector<double> t, y, w;
  for (std::size_t k = start; k < n; ++k) {
    const double est = std::max(c.estimate[k], 1e-300);
    t.push_back(c.times[k]);
    y.push_back(std::log(est));
    const double rel = c.se[k] > 0.0 ? c.se[k] / est : 0.0;
    w.push_back(rel > 0.0 ? 1.0 / (rel * rel) : 1.0);
  }
  double sw = 0, st = 0, sy = 0;
  for (std::size_t k = 0; k < t.size(); ++k) {
    sw += w[k];
    st += w[k] * t[k];
    sy += w[k] * y[k];
  }
  const double tb = st / sw;
  const double yb = sy / sw;
  double stt = 0, sty = 0;
  for (std::size_t k = 0; k < t.size(); ++k) {
    stt += w[k] * (t[k] - tb) * (t[k] - tb);
    sty += w[k] * (t[k] - tb) * (y[k] - yb);
  }
  const double slope = sty / stt;
  c.fitted_rate = -slope;
  // Inverse-variance weights give Var(slope) = 1 / stt; fall back to residuals
  // when the standard errors were unavailable.
  const bool have_se = std::all_of(c.se.begin(), c.se.end(), [](double s) { return s > 0.0; });
  if (have_se) {
    c.fitted_rate_se = std::sqrt(1.0 / stt);
  } else if (t.size() > 2) {
    double rss = 0.0;
    for (std::size_t k = 0; k < t.size(); ++k) {
      const double r = y[k] - (yb + slope * (t[k] - tb));
      rss += w[k] * r * r;
    }
    c.fitted_rate_se = std::sqrt(rss / static_cast<double>(t.size() - 2) / stt);
  } else {
    c.fitted_rate_se = 0.0;
  }
}

DecayCurve w1_decay_curve(const Potential& p, const SimConfig& cfg, const Sampler& nu,
                          const std::vector<double>& times, std::span<const double> equilibrium) {
  constexpr std::size_t kBatches = 10;
  if (times.empty()) throw PreconditionError("no times requested");
  SimConfig c = cfg;
  c.save_times = times;
  c.T = std::max(cfg.T, times.back());
  const auto ens = simulate(p, c, nu);
  const std::size_t d = static_cast<std::size_t>(p.dim);
  DecayCurve curve;
  curve.times = ens.times;
  for (std::size_t s = 0; s < ens.times.size(); ++s) {
    // Samples at this time (flagged paths excluded), flat dim-strided.
    std::vector<double> pts;
    for (std::size_t i = 0; i < ens.n_paths; ++i) {
      if (ens.flagged[i]) continue;
      for (std::size_t a = 0; a < d; ++a) pts.push_back(ens.states[s][i * d + a]);
    }
    const std::size_t n = pts.size() / d;
    const std::size_t ne = equilibrium.size() / d;
    std::vector<double> batch(kBatches, 0.0);
    double full = 0.0;
    if (d == 1) {
      full = w1_1d_unequal(pts, std::vector<double>(equilibrium.begin(), equilibrium.end()));
      for (std::size_t b = 0; b < kBatches; ++b) {
        std::vector<double> pa, pb;
        for (std::size_t i = b; i < n; i += kBatches) pa.push_back(pts[i]);
        for (std::size_t j = b; j < ne; j += kBatches) pb.push_back(equilibrium[j]);
        batch[b] = w1_1d_unequal(pa, pb);
      }
    } else {
      const std::size_t m = std::min<std::size_t>({512, n / kBatches, ne / kBatches});
      if (m < 2) throw PreconditionError("too few samples for batched multi-d W1");
      for (std::size_t b = 0; b < kBatches; ++b) {
        std::vector<double> pa(pts.begin() + static_cast<std::ptrdiff_t>(b * m * d),
                               pts.begin() + static_cast<std::ptrdiff_t>((b + 1) * m * d));
        std::vector<double> pb(equilibrium.begin() + static_cast<std::ptrdiff_t>(b * m * d),
                               equilibrium.begin() + static_cast<std::ptrdiff_t>((b + 1) * m * d));
        batch[b] = assignment_w1(pa, pb, p.dim);
      }
      full = std::accumulate(batch.begin(), batch.end(), 0.0) / kBatches;
    }
    const auto ci = EstimateCI::from_samples(batch);
    double est = full;
    if (!(est > 0.0)) est = std::max(ci.se, 1e-300);
    curve.estimate.push_back(est);
    curve.se.push_back(ci.se);
  }
  fit_exponential_rate(curve);
  return curve;
}

std::vector<double> equilibrium_by_burn_in(const Potential& p, const SimConfig& cfg,
                                           std::vector<double> start, double burn_in) {
  SimConfig c = cfg;
  c.T = burn_in;
  c.save_times = {burn_in};
  const auto e = simulate(p, c, point_sampler(std::move(start)));
  std::vector<double> out;
  const auto d = static_cast<std::size_t>(p.dim);
  for (std::size_t i = 0; i < e.n_paths; ++i) {
    if (e.flagged[i]) continue;
    for (std::size_t a = 0; a < d; ++a) out.push_back(e.states[0][i * d + a]);
  }
  return out;
}

VarianceDecay variance_decay(const Potential& p, const SimConfig& cfg, const PointFn& f,
                             const std::vector<double>& times, std::span<const double> outer,
                             std::size_t n_inner) {
  constexpr std::size_t kBatches = 10;
  const std::size_t d = static_cast<std::size_t>(p.dim);
  const std::size_t n_outer = outer.size() / d;
  if (n_outer < 2 * kBatches) throw PreconditionError("need at least 20 outer points");
  if (n_inner < 2) throw PreconditionError("need at least two inner paths");
  SimConfig c = cfg;
  c.save_times = times;
  c.T = std::max(cfg.T, times.back());
  c.n_paths = n_outer * n_inner;
  const auto ens = simulate(p, c, [&](std::uint64_t path, std::span<double> out) {
    const std::size_t i = static_cast<std::size_t>(path) / n_inner;
    std::copy_n(outer.begin() + static_cast<std::ptrdiff_t>(i * d), d, out.begin());
  });
  VarianceDecay vd;
  vd.times = ens.times;
  for (std::size_t s = 0; s < ens.times.size(); ++s) {
    std::vector<double> m(n_outer, 0.0), v(n_outer, 0.0);
    for (std::size_t i = 0; i < n_outer; ++i) {
      double sum = 0.0, sum2 = 0.0;
      std::size_t cnt = 0;
      for (std::size_t j = 0; j < n_inner; ++j) {
        const std::size_t path = i * n_inner + j;
        if (ens.flagged[path]) continue;
        const double fx = f(std::span<const double>(ens.states[s].data() + path * d, d));
        sum += fx;
        sum2 += fx * fx;
        ++cnt;
      }
      if (cnt < 2) throw SimulationError("inner sample lost to escapes");
      m[i] = sum / static_cast<double>(cnt);
      v[i] = (sum2 - sum * m[i]) / static_cast<double>(cnt - 1) / static_cast<double>(cnt);
    }
    // Unbiased Var over outer points of P_t f, minus the inner-noise contribution.
    auto corrected = [&](std::size_t b0, std::size_t step) {
      double mm = 0.0, noise = 0.0;
      std::size_t k = 0;
      for (std::size_t i = b0; i < n_outer; i += step, ++k) {
        mm += m[i];
        noise += v[i];
      }
      mm /= static_cast<double>(k);
      noise /= static_cast<double>(k);
      double ss = 0.0;
      for (std::size_t i = b0; i < n_outer; i += step) ss += (m[i] - mm) * (m[i] - mm);
      return std::pair{ss / static_cast<double>(k - 1) - noise, noise};
    };
    const auto [var, noise] = corrected(0, 1);
    std::vector<double> batch(kBatches);
    for (std::size_t b = 0; b < kBatches; ++b) batch[b] = corrected(b, kBatches).first;
    const auto ci = EstimateCI::from_samples(batch);
    vd.variance.push_back(var);
    vd.se.push_back(ci.se);
    vd.inconclusive.push_back(noise > std::abs(var) && noise > 0.0);
  }
  return vd;
}

}  // namespace curvebound
