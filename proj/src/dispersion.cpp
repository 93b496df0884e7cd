#include "qnk/dispersion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/quadrature/gauss.hpp>

#include "qnk/error.hpp"
#include "qnk/quadrature.hpp"

namespace qnk {

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<double> g_panels(const Profile& p, double center, double width) {
  auto [lo, hi] = p.range();
  std::vector<double> pts{lo, hi};
  for (double b : p.breakpoints())
    if (b > lo && b < hi) pts.push_back(b);
  if (center > lo && center < hi) pts.push_back(center);
  for (double m : {1.0, 4.0, 16.0})
    for (double s : {-1.0, 1.0}) {
      const double b = center + s * m * width;
      if (b > lo && b < hi) pts.push_back(b);
    }
  return pts;
}

double mu2(const Profile& p, double v) {
  const double h = 1e-5 * p.feature_width();
  return (p.dmu(v + h) - p.dmu(v - h)) / (2 * h);
}

}  // namespace

namespace {

cplx G_offaxis(const Profile& p, cplx zeta, const quad::Options& opt) {
  if (zeta.imag() == 0) fail(Errc::domain, "G needs Im zeta != 0; use eval_G_real on the real axis");
  auto f = [&](double v) { return p.dmu(v) / (cplx(v) - zeta); };
  return quad::integrate_panels(f, g_panels(p, zeta.real(), std::abs(zeta.imag())), opt);
}

// the coarse scan only needs a few digits of log|D|
cplx scan_dispersion(const Profile& p, int n, cplx lambda, double M) {
  quad::Options opt;
  opt.rel_tol = 1e-6;
  const double s = M / (2 * kPi * n);
  return 1.0 - s * s * G_offaxis(p, zeta_of(n, lambda, M), opt);
}

}  // namespace

cplx eval_G_offaxis(const Profile& p, cplx zeta) { return G_offaxis(p, zeta, {}); }

cplx eval_G(const Profile& p, cplx zeta) {
  if (!(zeta.imag() > 0)) fail(Errc::domain, "eval_G needs Im zeta > 0 (use eval_G_real for the boundary)");
  return eval_G_offaxis(p, zeta);
}

cplx eval_G_real(const Profile& p, double xi, double plemelj_c) {
  auto [lo, hi] = p.range();
  const double d0 = p.dmu(xi);
  double L = 0.5 * p.feature_width();
  L = std::min({L, xi - lo, hi - xi});
  double pv = 0;
  if (L > 0) {
    // symmetric window: int_0^L (mu'(xi+d) - mu'(xi-d))/d dd, fixed Gauss-Legendre panels (no node reaches d = 0)
    using GL = boost::math::quadrature::gauss<double, 30>;
    const int panels = 16;
    for (int k = 0; k < panels; ++k) {
      const double a = L * k / panels, b = L * (k + 1) / panels;
      pv += GL::integrate([&](double d) { return (p.dmu(xi + d) - p.dmu(xi - d)) / d; }, a, b);
    }
  } else {
    L = 0;
  }
  auto f = [&](double v) { return p.dmu(v) / (v - xi); };
  std::vector<double> left{lo, xi - L}, right{xi + L, hi};
  for (double b : p.breakpoints()) {
    if (b > lo && b < xi - L) left.push_back(b);
    if (b > xi + L && b < hi) right.push_back(b);
  }
  if (xi - L > lo) pv += quad::integrate_panels(f, left);
  if (hi > xi + L) pv += quad::integrate_panels(f, right);
  return {pv, plemelj_c * d0};
}

cplx eval_dispersion(const Profile& p, int n, cplx lambda, double M) {
  if (n == 0) fail(Errc::invalid_argument, "dispersion relation needs a nonzero mode n");
  if (!(M > 0)) fail(Errc::invalid_argument, "dispersion relation needs M > 0");
  const cplx zeta = zeta_of(n, lambda, M);
  const double s = M / (2 * kPi * n);
  cplx G;
  if (lambda.real() == 0) {
    // limit Re lambda -> 0+: Im zeta -> 0 from the side of sign(n)
    G = eval_G_real(p, zeta.real());
    if (n < 0) G = std::conj(G);
  } else {
    G = eval_G_offaxis(p, zeta);
  }
  return 1.0 - s * s * G;
}

double critical_length(const Profile& p) {
  const auto rep = check_penrose(p);
  double best = 0;
  for (const auto& m : rep.minima)
    if (m.satisfies) best = std::max(best, m.integral);
  if (!(best > 0)) return std::numeric_limits<double>::infinity();
  return 2 * std::numbers::pi / std::sqrt(best);
}

double default_length(const Profile& p) {
  const double mc = critical_length(p);
  if (!std::isfinite(mc)) fail(Errc::domain, "profile is Penrose stable: no torus length carries an unstable mode");
  return 10 * std::ceil(1.5 * mc / 10);
}

RootSearchResult find_unstable_roots(const Profile& p, double M, const std::vector<int>& modes, const SearchBox& box,
                                     const RootSearchOptions& opt) {
  if (!(box.re_max > 0) || !(box.im_max >= 0)) fail(Errc::invalid_argument, "search box must have re_max > 0");
  if (opt.scan < 4) fail(Errc::invalid_argument, "root scan needs at least 4 cells per axis");
  RootSearchResult out;
  const int N = opt.scan;
  for (int n : modes) {
    if (n == 0) fail(Errc::invalid_argument, "mode n = 0 has no dispersion relation");
    // coarse scan of log|D| at cell centres
    std::vector<double> logd(std::size_t(N) * N);
    auto lam_at = [&](int a, int b) {
      return cplx(box.re_max * (a + 0.5) / N, -box.im_max + 2 * box.im_max * (b + 0.5) / N);
    };
    for (int a = 0; a < N; ++a)
      for (int b = 0; b < N; ++b) logd[std::size_t(a) * N + b] = std::log(std::abs(scan_dispersion(p, n, lam_at(a, b), M)));
    std::vector<cplx> found;
    for (int a = 0; a < N; ++a)
      for (int b = 0; b < N; ++b) {
        const double c = logd[std::size_t(a) * N + b];
        bool is_min = true;
        for (int da = -1; da <= 1 && is_min; ++da)
          for (int db = -1; db <= 1; ++db) {
            const int aa = a + da, bb = b + db;
            if ((da == 0 && db == 0) || aa < 0 || bb < 0 || aa >= N || bb >= N) continue;
            if (logd[std::size_t(aa) * N + bb] < c) {
              is_min = false;
              break;
            }
          }
        if (!is_min) continue;
        // minima on the scan border are usually just |D| decreasing out of the box
        const bool border = a == 0 || b == 0 || a == N - 1 || b == N - 1;
        if (border && c > std::log(0.1)) continue;
        // Newton with a central-difference derivative
        cplx lam = lam_at(a, b);
        cplx D = eval_dispersion(p, n, lam, M);
        bool ok = false;
        // below this the integrand is nearly singular on the real axis and nothing is resolvable
        const double re_floor = box.re_max / (8.0 * N);
        for (int it = 0; it < opt.max_newton; ++it) {
          if (!(lam.real() > re_floor)) break;
          const double h = 1e-6 * std::max(1.0, std::abs(lam));
          const double hh = std::min(h, 0.5 * lam.real());
          const cplx dD = (eval_dispersion(p, n, lam + hh, M) - eval_dispersion(p, n, lam - hh, M)) / (2 * hh);
          if (dD == 0.0) break;
          const cplx step = D / dD;
          lam -= step;
          if (!(lam.real() > re_floor)) break;
          D = eval_dispersion(p, n, lam, M);
          if (std::abs(D) <= 1e-2 * opt.tol || std::abs(step) <= 1e-15 * std::abs(lam)) {
            ok = std::abs(D) <= opt.tol;
            break;
          }
        }
        if (!ok) {
          out.warnings.push_back("n=" + std::to_string(n) + ": Newton from (" + std::to_string(lam_at(a, b).real()) +
                                   ", " + std::to_string(lam_at(a, b).imag()) + ") did not converge; discarded");
          continue;
        }
        if (lam.real() > box.re_max * (1 + 1e-9) || std::abs(lam.imag()) > box.im_max * (1 + 1e-9)) continue;
        bool dup = false;
        for (const auto& f : found)
          if (std::abs(f - lam) <= 1e-7 * (1 + std::abs(lam))) dup = true;
        if (!dup) found.push_back(lam);
      }
    for (const auto& lam : found)
      out.roots.push_back({n, lam, zeta_of(n, lam, M), std::abs(eval_dispersion(p, n, lam, M)), M, false});
  }
  std::sort(out.roots.begin(), out.roots.end(), [](const DispersionRoot& a, const DispersionRoot& b) {
    if (a.n != b.n) return a.n < b.n;
    if (a.lambda.real() != b.lambda.real()) return a.lambda.real() < b.lambda.real();
    return a.lambda.imag() < b.lambda.imag();
  });
  if (!out.roots.empty()) {
    auto it = std::max_element(out.roots.begin(), out.roots.end(), [](const DispersionRoot& a, const DispersionRoot& b) {
      return a.lambda.real() < b.lambda.real();
    });
    it->leading = true;
  }
  return out;
}

Eigenmode build_eigenmode(const Profile& p, const DispersionRoot& root, const PhaseGrid& grid) {
  validate_grid(grid);
  if (std::abs(grid.Lx - root.M) > 1e-12 * root.M)
    fail(Errc::invalid_argument, "eigenmode grid period must equal the torus length M");
  if (!(root.residual <= 1e-8)) fail(Errc::invalid_argument, "eigenmode needs a converged root");
  Eigenmode m;
  m.root = root;
  m.grid = grid;
  m.k = 2 * kPi * root.n / root.M;
  m.xi = -root.zeta;
  const cplx z = root.zeta;
  // v-range check: L1 mass of mu'/(v - zeta) outside [-vmax, vmax]
  auto a1 = [&](double v) { return std::abs(p.dmu(v) / (v - z)); };
  const auto [lo, hi] = p.range();
  const double total = quad::integrate_panels(a1, g_panels(p, z.real(), std::abs(z.imag())));
  double outside = 0;
  if (lo < -grid.vmax) outside += quad::integrate(a1, lo, -grid.vmax);
  if (hi > grid.vmax) outside += quad::integrate(a1, grid.vmax, hi);
  if (outside > 1e-8 * total)
    fail(Errc::resolution, "eigenmode: v-range too small to capture ||h1||_1 (relative tail " + std::to_string(outside / total) + ")");

  std::vector<cplx> prof(grid.Nv);
  double s = 0;
  for (int j = 0; j < grid.Nv; ++j) {
    prof[j] = p.dmu(grid.v(j)) / (grid.v(j) - z);
    s += std::abs(prof[j]);
  }
  m.c = 1.0 / (grid.Lx * grid.dv() * s);
  // rho1 from the dispersion relation: int mu'/(v-zeta) = G(zeta) = k^2 at a root
  m.kappa = m.c * m.k * m.k;
  m.h1.resize(grid.size());
  m.rho1.resize(grid.Nx);
  for (int i = 0; i < grid.Nx; ++i) {
    const cplx e = std::exp(cplx(0, m.k * grid.x(i)));
    m.rho1[i] = m.kappa * e;
    for (int j = 0; j < grid.Nv; ++j) m.h1[grid.idx(i, j)] = m.c * e * prof[j];
  }
  const double a = m.xi.real(), b = m.xi.imag();
  m.ell.resize(grid.Nv);
  m.ell_prime.resize(grid.Nv);
  for (int j = 0; j < grid.Nv; ++j) {
    const double v = grid.v(j), q = (v + a) * (v + a) + b * b;
    const double d1 = p.dmu(v);
    m.ell[j] = b * d1 / q;
    m.ell_prime[j] = b * (mu2(p, v) / q - d1 * 2 * (v + a) / (q * q));
  }
  return m;
}

H2Coefficient h2_xaverage_coefficient(const Eigenmode& mode) {
  const double re = mode.root.lambda.real();
  if (!(re > 0)) fail(Errc::invalid_argument, "h2 coefficient needs Re lambda > 0");
  return {-mode.kappa * mode.root.M / (4 * kPi * mode.root.n * re), mode.ell_prime};
}

}  // namespace qnk
