#pragma once

#include <complex>
#include <numbers>
#include <string>
#include <vector>

#include "qnk/grid.hpp"
#include "qnk/profile.hpp"

namespace qnk {

using cplx = std::complex<double>;

// Constant in front of mu'(xi) in the boundary value of G; see eval_G_real.
inline constexpr double PLEMELJ_C = std::numbers::pi;

// G(zeta) = int mu'(v) / (v - zeta) dv, Im zeta > 0
cplx eval_G(const Profile& p, cplx zeta);
// Same integral for any zeta off the real axis (no analytic continuation).
cplx eval_G_offaxis(const Profile& p, cplx zeta);
// P.V. int mu'(v)/(v - xi) dv + i c mu'(xi)
cplx eval_G_real(const Profile& p, double xi, double plemelj_c = PLEMELJ_C);

// D(n, lambda) = 1 - (M / 2 pi n)^2 G(i M lambda / (2 pi n)); Re lambda = 0 uses the boundary value
cplx eval_dispersion(const Profile& p, int n, cplx lambda, double M);
inline cplx zeta_of(int n, cplx lambda, double M) { return cplx(0, 1) * M * lambda / (2 * std::numbers::pi * n); }

struct DispersionRoot {
  int n = 1;
  cplx lambda;
  cplx zeta;
  double residual = 0;
  double M = 0;
  bool leading = false;  // maximal Re lambda over the returned set
};

struct SearchBox {
  double re_max = 2.0;  // Re lambda in (0, re_max]
  double im_max = 2.0;  // |Im lambda| <= im_max
};

struct RootSearchOptions {
  int scan = 64;
  double tol = 1e-10;
  int max_newton = 60;
};

struct RootSearchResult {
  std::vector<DispersionRoot> roots;  // sorted by (n, Re lambda)
  std::vector<std::string> warnings;
};

RootSearchResult find_unstable_roots(const Profile& p, double M, const std::vector<int>& modes, const SearchBox& box = {},
                                     const RootSearchOptions& opt = {});

// Smallest torus length carrying an unstable n = 1 mode: (M / 2 pi)^2 I(vbar) = 1 at the minimum with the
// largest Penrose integral (D tends to 1 - (M / 2 pi n)^2 I as zeta approaches the minimum). Infinity if stable.
double critical_length(const Profile& p);
// 1.5 x critical length, rounded up to a multiple of 10
double default_length(const Profile& p);

struct Eigenmode {
  DispersionRoot root;
  PhaseGrid grid;
  double k = 0;      // 2 pi n / M
  double c = 0;      // h1 = c e^{ikx} mu'/(v - zeta), L1-normalized on the grid
  double kappa = 0;  // rho1 = kappa e^{ikx}
  cplx xi;           // -zeta, so that h1 ~ mu'/(v + xi)
  std::vector<cplx> h1;    // grid.size()
  std::vector<cplx> rho1;  // Nx
  std::vector<double> ell, ell_prime;  // Nv
};

// grid.Lx must equal the root's M
Eigenmode build_eigenmode(const Profile& p, const DispersionRoot& root, const PhaseGrid& grid);

struct H2Coefficient {
  double coef = 0;  // predicted x-average of h2 is coef (e^{2 Re lambda t} - 1) ell'(v)
  std::vector<double> ell_prime;
};
H2Coefficient h2_xaverage_coefficient(const Eigenmode& mode);

}  // namespace qnk
