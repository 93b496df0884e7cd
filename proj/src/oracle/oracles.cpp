#include "qnk/oracle.hpp"

#include <cmath>
#include <numbers>

#include <boost/math/quadrature/gauss.hpp>

#include "qnk/dispersion.hpp"
#include "qnk/error.hpp"

namespace qnk::oracle {

using GL = boost::math::quadrature::gauss<double, 20>;

std::complex<double> G_fixed_grid(const Profile& p, std::complex<double> zeta, int panels) {
  const auto [lo, hi] = p.range();
  std::complex<double> s = 0;
  const double h = (hi - lo) / panels;
  for (int k = 0; k < panels; ++k) {
    const double a = lo + k * h;
    const double re = GL::integrate([&](double v) { return (p.dmu(v) / (std::complex<double>(v) - zeta)).real(); }, a, a + h);
    const double im = GL::integrate([&](double v) { return (p.dmu(v) / (std::complex<double>(v) - zeta)).imag(); }, a, a + h);
    s += std::complex<double>(re, im);
  }
  return s;
}

double penrose_fixed_grid(const Profile& p, double vbar, int panels) {
  const auto [lo, hi] = p.range();
  const double D = std::max(vbar - lo, hi - vbar);
  const double m0 = p.mu(vbar);
  auto mu = [&](double v) { return v < lo || v > hi ? 0.0 : p.mu(v); };
  double s = 0;
  const double h = D / panels;
  for (int k = 0; k < panels; ++k)
    s += GL::integrate([&](double d) { return (mu(vbar + d) + mu(vbar - d) - 2 * m0) / (d * d); }, k * h, (k + 1) * h);
  // |d| > D: mu vanishes there, leaving -2 m0 / D
  return s - 2 * m0 / D;
}

int winding_count(const Profile& p, double M, int n, double re_lo, double re_hi, double im_lo, double im_hi) {
  if (!(re_lo < re_hi) || !(im_lo < im_hi)) fail(Errc::invalid_argument, "winding box must be nondegenerate");
  const std::complex<double> c[4] = {{re_lo, im_lo}, {re_hi, im_lo}, {re_hi, im_hi}, {re_lo, im_hi}};
  auto D = [&](std::complex<double> z) { return eval_dispersion(p, n, z, M); };
  double total = 0;
  // accumulate arg D along each edge, bisecting until successive samples turn by less than pi/8
  auto edge = [&](auto&& self, std::complex<double> a, std::complex<double> b, std::complex<double> Da,
                  std::complex<double> Db, int depth) -> double {
    const double d = std::arg(Db / Da);
    if (std::abs(d) < std::numbers::pi / 8 || depth > 40) {
      if (depth > 40) fail(Errc::numerical, "winding oracle: D vanishes on or near the box boundary");
      return d;
    }
    const std::complex<double> m = 0.5 * (a + b);
    const std::complex<double> Dm = D(m);
    return self(self, a, m, Da, Dm, depth + 1) + self(self, m, b, Dm, Db, depth + 1);
  };
  for (int e = 0; e < 4; ++e) {
    const std::complex<double> a = c[e], b = c[(e + 1) % 4];
    const int pieces = 32;
    std::complex<double> prev = a, Dprev = D(a);
    for (int k = 1; k <= pieces; ++k) {
      const std::complex<double> z = a + (b - a) * (double(k) / pieces);
      const std::complex<double> Dz = D(z);
      total += edge(edge, prev, z, Dprev, Dz, 0);
      prev = z;
      Dprev = Dz;
    }
  }
  return int(std::lround(total / (2 * std::numbers::pi)));
}

}  // namespace qnk::oracle
