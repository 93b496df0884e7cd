#pragma once

#include <cstddef>
#include <string>

#include "qnk/error.hpp"

namespace qnk {

// Periodic x in [0, Lx) with nodes x_i = i Lx / Nx; cell-centred v_j = -vmax + (j + 1/2) dv.
// Values are stored row-major: index i * Nv + j.
struct PhaseGrid {
  double Lx = 1.0;
  int Nx = 64;
  double vmax = 6.0;
  int Nv = 128;

  double dx() const { return Lx / Nx; }
  double dv() const { return 2 * vmax / Nv; }
  double x(int i) const { return i * dx(); }
  double v(int j) const { return -vmax + (j + 0.5) * dv(); }
  std::size_t size() const { return std::size_t(Nx) * std::size_t(Nv); }
  std::size_t idx(int i, int j) const { return std::size_t(i) * std::size_t(Nv) + std::size_t(j); }
};

inline bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

inline void validate_grid(const PhaseGrid& g) {
  if (!is_pow2(g.Nx) || !is_pow2(g.Nv))
    fail(Errc::invalid_argument, "grid sizes must be powers of two (Nx=" + std::to_string(g.Nx) +
                                     ", Nv=" + std::to_string(g.Nv) + ")");
  if (!(g.Lx > 0) || !(g.vmax > 0)) fail(Errc::invalid_argument, "grid extents must be positive");
}

}  // namespace qnk
