#include "curvebound/potential.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>

#include "curvebound/errors.hpp"

namespace curvebound {

namespace {

double squared_norm(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s;
}

void require_box(const Box& box, int dim) {
  if (static_cast<int>(box.size()) != dim) {
    throw PreconditionError("domain box has " + std::to_string(box.size()) +
                            " axes, potential has dimension " + std::to_string(dim));
  }
  for (const auto& iv : box) {
    if (!(iv.hi > iv.lo)) throw PreconditionError("domain box axis must satisfy lo < hi");
  }
}

// Radial potential V = g(|x|^2): grad = 2 g' x, Hess = 2 g' I + 4 g'' x x^T.
Potential make_radial(std::string name, int dim, Box box, Potential::RadialFn g,
                      Potential::RadialFn gp, Potential::RadialFn gpp) {
  require_box(box, dim);
  Potential p;
  p.name = std::move(name);
  p.dim = dim;
  p.kind = PotentialKind::radial_convex;
  p.radial_g = g;
  p.radial_gprime = gp;
  p.value = [g](std::span<const double> x) { return g(squared_norm(x)); };
  p.gradient = [gp](std::span<const double> x, std::span<double> out) {
    const double d = 2.0 * gp(squared_norm(x));
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = d * x[i];
  };
  p.hessian = [gp, gpp](std::span<const double> x, std::span<double> out) {
    const std::size_t n = x.size();
    const double u = squared_norm(x);
    const double a = 2.0 * gp(u);
    const double b = 4.0 * gpp(u);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        out[i * n + j] = b * x[i] * x[j] + (i == j ? a : 0.0);
      }
    }
  };
  p.kappa = [gp](std::span<const double> x) { return gp(squared_norm(x)); };
  p.domain_box = std::move(box);
  return p;
}

}  // namespace

double min_eigenvalue(std::span<const double> m, int n) {
  if (n == 1) return m[0];
  if (n == 2) {
    const double a = m[0];
    const double b = 0.5 * (m[1] + m[2]);
    const double d = m[3];
    const double half_tr = 0.5 * (a + d);
    const double half_diff = 0.5 * (a - d);
    return half_tr - std::hypot(half_diff, b);
  }
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> mat(
      m.data(), n, n);
  Eigen::MatrixXd sym = 0.5 * (mat + mat.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

double Potential::rho(std::span<const double> x) const {
  if (analytic_curvature) return (*analytic_curvature)(x);
  double buf[4];
  std::vector<double> heap;
  std::span<double> h;
  if (dim <= 2) {
    h = std::span<double>(buf, static_cast<std::size_t>(dim * dim));
  } else {
    heap.resize(static_cast<std::size_t>(dim * dim));
    h = heap;
  }
  hessian(x, h);
  return min_eigenvalue(h, dim);
}

bool Potential::inside(std::span<const double> x) const {
  for (std::size_t i = 0; i < domain_box.size(); ++i) {
    if (x[i] < domain_box[i].lo || x[i] > domain_box[i].hi) return false;
  }
  return true;
}

double curvature_at(const Potential& p, std::span<const double> x) {
  const auto n = static_cast<std::size_t>(p.dim);
  std::vector<double> h(n * n);
  p.hessian(x, h);
  for (double v : h) {
    if (!std::isfinite(v)) throw EvaluationError("non-finite Hessian entry in " + p.name);
  }
  const double eig = min_eigenvalue(h, p.dim);
  if (!p.analytic_curvature) return eig;
  const double analytic = (*p.analytic_curvature)(x);
  if (std::abs(analytic - eig) > 1e-8 * std::max(1.0, std::abs(eig))) {
    std::ostringstream os;
    os << "analytic curvature " << analytic << " disagrees with Hessian eigensolve " << eig
       << " for " << p.name;
    throw EvaluationError(os.str());
  }
  return analytic;
}

Potential make_gaussian(double rho, int dim, Box box) {
  require_box(box, dim);
  Potential p;
  p.name = "gaussian";
  p.dim = dim;
  p.kind = PotentialKind::quadratic;
  p.quadratic_rho = rho;
  p.value = [rho](std::span<const double> x) { return 0.5 * rho * squared_norm(x); };
  p.gradient = [rho](std::span<const double> x, std::span<double> out) {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = rho * x[i];
  };
  p.hessian = [rho](std::span<const double> x, std::span<double> out) {
    const std::size_t n = x.size();
    for (std::size_t i = 0; i < n * n; ++i) out[i] = 0.0;
    for (std::size_t i = 0; i < n; ++i) out[i * n + i] = rho;
  };
  p.analytic_curvature = [rho](std::span<const double>) { return rho; };
  p.analytic_lip = 0.0;
  p.kappa = [rho](std::span<const double>) { return 0.5 * rho; };
  p.radial_g = [rho](double u) { return 0.5 * rho * u; };
  p.radial_gprime = [rho](double) { return 0.5 * rho; };
  p.domain_box = std::move(box);
  return p;
}

Potential make_product_gaussian(std::vector<double> rho_axes, Box box) {
  const int dim = static_cast<int>(rho_axes.size());
  require_box(box, dim);
  const double rho_min = *std::min_element(rho_axes.begin(), rho_axes.end());
  Potential p;
  p.name = "product_gaussian";
  p.dim = dim;
  p.kind = PotentialKind::custom;
  p.value = [rho_axes](std::span<const double> x) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += 0.5 * rho_axes[i] * x[i] * x[i];
    return s;
  };
  p.gradient = [rho_axes](std::span<const double> x, std::span<double> out) {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = rho_axes[i] * x[i];
  };
  p.hessian = [rho_axes](std::span<const double> x, std::span<double> out) {
    const std::size_t n = x.size();
    for (std::size_t i = 0; i < n * n; ++i) out[i] = 0.0;
    for (std::size_t i = 0; i < n; ++i) out[i * n + i] = rho_axes[i];
  };
  p.analytic_curvature = [rho_min](std::span<const double>) { return rho_min; };
  p.analytic_lip = 0.0;
  p.kappa = [rho_min](std::span<const double>) { return 0.5 * rho_min; };
  p.domain_box = std::move(box);
  return p;
}

Potential make_quartic(int dim, Box box) {
  auto p = make_radial(
      "quartic", dim, std::move(box), [](double u) { return u * u; },
      [](double u) { return 2.0 * u; }, [](double) { return 2.0; });
  // Hess = 4|x|^2 I + 8 x x^T: eigenvalues 4|x|^2 (tangential, n >= 2) and 12|x|^2.
  p.analytic_curvature = [dim](std::span<const double> x) {
    return (dim == 1 ? 12.0 : 4.0) * squared_norm(x);
  };
  return p;
}

Potential make_radial_power(double beta, int dim, Box box) {
  if (beta < 2.0) throw PreconditionError("radial_power requires beta >= 2");
  const double e = 0.5 * beta;
  auto p = make_radial(
      "radial_power", dim, std::move(box), [e](double u) { return std::pow(u, e); },
      [e](double u) { return e == 1.0 ? 1.0 : e * std::pow(u, e - 1.0); },
      [e](double u) {
        if (e == 1.0) return 0.0;
        if (e == 2.0) return 2.0;
        return u > 0.0 ? e * (e - 1.0) * std::pow(u, e - 2.0) : 0.0;
      });
  p.analytic_curvature = [beta, dim](std::span<const double> x) {
    const double r = std::sqrt(squared_norm(x));
    const double base = beta == 2.0 ? 1.0 : std::pow(r, beta - 2.0);
    return (dim == 1 ? beta * (beta - 1.0) : beta) * base;
  };
  if (beta == 2.0) p.analytic_lip = 0.0;
  return p;
}

Potential make_cosine_perturbed_gaussian(double a, double k, Box box) {
  require_box(box, 1);
  Potential p;
  p.name = "cosine_perturbed_gaussian";
  p.dim = 1;
  p.kind = PotentialKind::custom;
  p.value = [a, k](std::span<const double> x) {
    return 0.5 * x[0] * x[0] + a * std::cos(k * x[0]);
  };
  p.gradient = [a, k](std::span<const double> x, std::span<double> out) {
    out[0] = x[0] - a * k * std::sin(k * x[0]);
  };
  p.hessian = [a, k](std::span<const double> x, std::span<double> out) {
    out[0] = 1.0 - a * k * k * std::cos(k * x[0]);
  };
  p.analytic_curvature = [a, k](std::span<const double> x) {
    return 1.0 - a * k * k * std::cos(k * x[0]);
  };
  p.analytic_lip = std::abs(a) * k * k * k;
  p.domain_box = std::move(box);
  return p;
}

Potential make_polynomial(std::vector<double> coeffs, Box box) {
  require_box(box, 1);
  if (coeffs.empty()) throw PreconditionError("custom_polynomial needs coefficients");
  auto horner = [](const std::vector<double>& c, double x) {
    double s = 0.0;
    for (auto it = c.rbegin(); it != c.rend(); ++it) s = s * x + *it;
    return s;
  };
  std::vector<double> d1;
  std::vector<double> d2;
  for (std::size_t k = 1; k < coeffs.size(); ++k) d1.push_back(static_cast<double>(k) * coeffs[k]);
  for (std::size_t k = 1; k < d1.size(); ++k) d2.push_back(static_cast<double>(k) * d1[k]);
  if (d1.empty()) d1.push_back(0.0);
  if (d2.empty()) d2.push_back(0.0);
  Potential p;
  p.name = "custom_polynomial";
  p.dim = 1;
  p.kind = PotentialKind::custom;
  p.value = [horner, coeffs](std::span<const double> x) { return horner(coeffs, x[0]); };
  p.gradient = [horner, d1](std::span<const double> x, std::span<double> out) {
    out[0] = horner(d1, x[0]);
  };
  p.hessian = [horner, d2](std::span<const double> x, std::span<double> out) {
    out[0] = horner(d2, x[0]);
  };
  p.analytic_curvature = [horner, d2](std::span<const double> x) { return horner(d2, x[0]); };
  p.domain_box = std::move(box);
  return p;
}

Potential make_flat(int dim, Box box) {
  require_box(box, dim);
  Potential p;
  p.name = "flat";
  p.dim = dim;
  p.kind = PotentialKind::custom;
  p.value = [](std::span<const double>) { return 0.0; };
  p.gradient = [](std::span<const double> x, std::span<double> out) {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = 0.0;
  };
  p.hessian = [](std::span<const double> x, std::span<double> out) {
    for (std::size_t i = 0; i < x.size() * x.size(); ++i) out[i] = 0.0;
  };
  p.analytic_curvature = [](std::span<const double>) { return 0.0; };
  p.analytic_lip = 0.0;
  p.confined = true;
  p.domain_box = std::move(box);
  return p;
}

Potential make_mixed_quadratic_quartic(Box box) {
  require_box(box, 2);
  Potential p;
  p.name = "mixed_quadratic_quartic";
  p.dim = 2;
  p.kind = PotentialKind::custom;
  p.value = [](std::span<const double> x) {
    return 0.5 * x[0] * x[0] + x[1] * x[1] * x[1] * x[1];
  };
  p.gradient = [](std::span<const double> x, std::span<double> out) {
    out[0] = x[0];
    out[1] = 4.0 * x[1] * x[1] * x[1];
  };
  p.hessian = [](std::span<const double> x, std::span<double> out) {
    out[0] = 1.0;
    out[1] = 0.0;
    out[2] = 0.0;
    out[3] = 12.0 * x[1] * x[1];
  };
  p.domain_box = std::move(box);
  return p;
}

Potential dilate(const Potential& p, double lambda) {
  if (!(lambda > 0.0)) throw PreconditionError("dilation factor must be positive");
  auto base = std::make_shared<const Potential>(p);
  const int n = p.dim;
  const double log_shift = static_cast<double>(n) * std::log(lambda);
  const double inv = 1.0 / lambda;
  auto shrink = [inv](std::span<const double> x, double* buf) {
    for (std::size_t i = 0; i < x.size(); ++i) buf[i] = x[i] * inv;
  };

  Potential q;
  q.name = p.name + "_dilated";
  q.dim = n;
  q.kind = p.kind;
  q.confined = p.confined;
  q.value = [base, log_shift, shrink](std::span<const double> x) {
    std::vector<double> y(x.size());
    shrink(x, y.data());
    return log_shift + base->value(y);
  };
  q.gradient = [base, shrink, inv](std::span<const double> x, std::span<double> out) {
    std::vector<double> y(x.size());
    shrink(x, y.data());
    base->gradient(y, out);
    for (double& v : out) v *= inv;
  };
  q.hessian = [base, shrink, inv](std::span<const double> x, std::span<double> out) {
    std::vector<double> y(x.size());
    shrink(x, y.data());
    base->hessian(y, out);
    for (double& v : out) v *= inv * inv;
  };
  if (p.analytic_curvature) {
    q.analytic_curvature = [base, shrink, inv](std::span<const double> x) {
      std::vector<double> y(x.size());
      shrink(x, y.data());
      return (*base->analytic_curvature)(y)*inv * inv;
    };
  }
  if (p.analytic_lip) q.analytic_lip = *p.analytic_lip * inv * inv * inv;
  if (p.kappa) {
    q.kappa = [base, shrink, inv](std::span<const double> x) {
      std::vector<double> y(x.size());
      shrink(x, y.data());
      return (*base->kappa)(y)*inv * inv;
    };
  }
  q.quadratic_rho = p.quadratic_rho * inv * inv;
  if (p.radial_g) {
    q.radial_g = [base, inv, log_shift](double u) {
      return base->radial_g(u * inv * inv) + log_shift;
    };
  }
  if (p.radial_gprime) {
    q.radial_gprime = [base, inv](double u) { return base->radial_gprime(u * inv * inv) * inv * inv; };
  }
  for (const auto& iv : p.domain_box) q.domain_box.push_back({iv.lo * lambda, iv.hi * lambda});
  return q;
}

Potential::ScalarFn kappa_for_radial(const Potential& p) {
  if (p.kind != PotentialKind::radial_convex && p.kind != PotentialKind::quadratic) {
    throw PreconditionError("kappa_for_radial requires a radial convex potential");
  }
  if (!p.radial_gprime) throw PreconditionError("g' not available for " + p.name);
  auto gp = p.radial_gprime;
  return [gp](std::span<const double> x) { return gp(squared_norm(x)); };
}

std::string check_potential_consistency(const Potential& p,
                                        const std::vector<std::vector<double>>& points) {
  const auto n = static_cast<std::size_t>(p.dim);
  const double step = 1e-4;
  std::ostringstream err;
  std::vector<double> g(n);
  std::vector<double> h(n * n);
  for (const auto& x : points) {
    p.gradient(x, g);
    p.hessian(x, h);
    double hscale = 0.0;
    for (double v : h) hscale = std::max(hscale, std::abs(v));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        if (std::abs(h[i * n + j] - h[j * n + i]) > 1e-10 * std::max(1.0, hscale)) {
          err << "Hessian not symmetric at point " << x[0] << "; ";
        }
      }
    }
    double gscale = 0.0;
    for (double v : g) gscale = std::max(gscale, std::abs(v));
    for (std::size_t i = 0; i < n; ++i) {
      auto xp = x;
      auto xm = x;
      xp[i] += step;
      xm[i] -= step;
      const double fd = (p.value(xp) - p.value(xm)) / (2.0 * step);
      if (std::abs(fd - g[i]) > 1e-5 * std::max(1.0, gscale)) {
        err << "gradient component " << i << " off by " << std::abs(fd - g[i]) << "; ";
      }
    }
  }
  return err.str();
}

}  // namespace curvebound
