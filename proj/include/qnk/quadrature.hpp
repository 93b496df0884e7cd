#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "qnk/error.hpp"

namespace qnk::quad {

struct Options {
  double rel_tol = 1e-13;
  unsigned max_depth = 18;
  // absolute error that counts as converged regardless of rel_tol
  double abs_floor = 1e-15;
};

// `scale` is an absolute size the error may be measured against instead of |integral|,
// e.g. the L1 mass of all panels when this is one piece of a sum
template <class F>
auto integrate(F&& f, double a, double b, const Options& opt = {}, double scale = 0) {
  using boost::math::quadrature::gauss_kronrod;
  if (std::abs(b - a) <= 1e-14 * std::max(std::abs(a), std::abs(b))) return decltype(f(a)){};
  double err = 0, l1 = 0;
  // integrate over [0, 1] so the error estimate carries the interval length; boost leaves it unscaled
  const double w = b - a;
  auto g = [&](double t) { return f(a + w * t) * w; };
  // boost targets tol * |estimate|; convert our absolute target into that form
  const double est = std::abs(gauss_kronrod<double, 31>::integrate(g, 0.0, 1.0, 0, 0.0, &err, &l1));
  const double target = opt.rel_tol * std::max({est, scale, 1e-3 * std::abs(l1)});
  const double tol = est > 0 ? std::min(1.0, target / est) : opt.rel_tol;
  auto r = gauss_kronrod<double, 31>::integrate(g, 0.0, 1.0, opt.max_depth, tol, &err, &l1);
  l1 = std::abs(l1);
  if (!(err <= std::max({1e-7 * l1, 1e-7 * scale, 1e3 * opt.abs_floor})))
    fail(Errc::quadrature, "adaptive quadrature did not converge on [" + std::to_string(a) + ", " +
                               std::to_string(b) + "], error estimate " + std::to_string(err));
  return r;
}

// Sum of integrals over consecutive panels of a sorted breakpoint list.
template <class F>
auto integrate_panels(F&& f, std::vector<double> pts, const Options& opt = {}) {
  using boost::math::quadrature::gauss_kronrod;
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end(),
                        [](double x, double y) { return std::abs(x - y) <= 1e-13 * std::max(std::abs(x), std::abs(y)); }),
            pts.end());
  // panels are judged against the L1 mass of the whole range, so a near-zero sliver doesn't recurse forever
  double scale = 0;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    double e = 0, l1 = 0;
    gauss_kronrod<double, 31>::integrate(f, pts[i], pts[i + 1], 0, 0.0, &e, &l1);
    scale += std::abs(l1);
  }
  decltype(f(pts.front())) sum{};
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) sum += integrate(f, pts[i], pts[i + 1], opt, scale);
  return sum;
}

// int_a^b g(u) / sqrt((b-u)(u-a)) du with u = (a+b)/2 - (b-a)/2 cos(phi).
template <class G>
double integrate_inv_sqrt_both(G&& g, double a, double b, const Options& opt = {}) {
  if (!(a < b)) fail(Errc::domain, "singular quadrature needs a < b");
  const double c = 0.5 * (a + b), h = 0.5 * (b - a);
  return integrate([&](double phi) { return g(c - h * std::cos(phi)); }, 0.0, std::numbers::pi, opt);
}

// int_0^r h(u) / sqrt(r^2 - u^2) du with u = r sin(theta).
template <class H>
double integrate_abel(H&& h, double r, const Options& opt = {}) {
  if (!(r > 0)) return 0.0;
  return integrate([&](double th) { return h(r * std::sin(th)); }, 0.0, 0.5 * std::numbers::pi, opt);
}

}  // namespace qnk::quad
