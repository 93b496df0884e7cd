#pragma once

// Independent reference computations used by tests, the acceptance binary and `qnk selftest`.
// None of these share a code path with the production routines they check.

#include <complex>

#include "qnk/profile.hpp"

namespace qnk::oracle {

// G(zeta) by composite 20-point Gauss-Legendre on `panels` uniform panels over the profile range
std::complex<double> G_fixed_grid(const Profile& p, std::complex<double> zeta, int panels);

// Penrose integral from the even-in-d form (mu(vbar+d) + mu(vbar-d) - 2 mu(vbar))/d^2, same fixed rule
double penrose_fixed_grid(const Profile& p, double vbar, int panels);

// Number of zeros of D(n, .) inside the box [re_lo, re_hi] x [im_lo, im_hi], by the argument principle.
int winding_count(const Profile& p, double M, int n, double re_lo, double re_hi, double im_lo, double im_hi);

}  // namespace qnk::oracle
