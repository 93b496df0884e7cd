#pragma once

#include <string>
#include <variant>
#include <vector>

#include "qnk/grid.hpp"

namespace qnk::bgk {

// Components of a one-sided boundary density, written as functions of s = |v| >= 0.
// mass is the integral over s in [0, inf).
struct HalfMaxwellian {
  double T = 1.0;
  double mass = 1.0;
};

// c (1 + s^2/width^2)^(-power/2) on [0, cut], zero beyond
struct TruncatedPowerLaw {
  double width = 1.0;
  double power = 4.0;
  double cut = 10.0;
  double mass = 1.0;
};

// Uniform s-grid starting at 0; linear in between, zero past the last node. Used as given (no rescaling).
struct TabulatedSide {
  std::vector<double> s;
  std::vector<double> f;
};

using SideComponent = std::variant<HalfMaxwellian, TruncatedPowerLaw, TabulatedSide>;

// f0+(v) for v >= 0 is the sum of `plus`; f0-(v) for v <= 0 is the sum of `minus` evaluated at -v.
// The default minus side is empty (f0- = 0).
class BoundaryData {
 public:
  BoundaryData(std::vector<SideComponent> plus, std::vector<SideComponent> minus = {});

  double plus(double s) const;
  double minus(double s) const;
  // F(s) = f0+(s) + f0-(-s)
  double F(double s) const { return plus(s) + minus(s); }
  double total_mass() const;
  // beyond this s both sides are zero or below 1e-300 relative
  double support() const { return support_; }
  // jump locations of truncated components
  const std::vector<double>& breakpoints() const { return breaks_; }

 private:
  std::vector<SideComponent> plus_, minus_;
  std::vector<double> plus_scale_, minus_scale_;
  double support_ = 0;
  std::vector<double> breaks_;
};

// Sum of terms coef * x^p * (1-x)^q * sin^2(k pi x)^m, m in {0, 1}.
struct WellTerm {
  double coef = 0;
  int p = 0, q = 0;
  int k = 0;
  bool sin2 = false;
};

class PotentialWell {
 public:
  // Grammar: terms joined by + or -, each a product of a number, x, x^p, (1-x), (1-x)^q, sin^2(pi*x), sin^2(k*pi*x).
  static PotentialWell parse(const std::string& expr);
  explicit PotentialWell(std::vector<WellTerm> terms, std::string source = {});

  double V(double x) const;
  double dV(double x) const;
  double V_min() const { return vmin_; }
  const std::string& source() const { return src_; }

 private:
  std::vector<WellTerm> terms_;
  std::string src_;
  double vmin_ = 0;
};

// f_T(u) = (1/pi) int_0^{pi/2} F(u tan t) dt, the inverse of the neutrality Abel equation
double trapped_density(const BoundaryData& bd, double u);
double trapped_density_deriv(const BoundaryData& bd, double u);
double trapped_density_ion(const BoundaryData& bd, double alpha, double u);
// first zero of the ion trapped density; 0 if it is already negative at the origin
double ubar(const BoundaryData& bd, double alpha);

// 512 log-spaced nodes on [1e-4 u_ref, u_ref], monotone cubic Hermite between nodes; direct evaluation elsewhere.
class TrappedTable {
 public:
  TrappedTable(BoundaryData bd, double u_ref, double alpha = 0.0, int nodes = 512);
  double operator()(double u) const;
  double u_ref() const { return u_.back(); }
  double alpha() const { return alpha_; }
  const std::vector<double>& u_nodes() const { return u_; }
  const std::vector<double>& f_nodes() const { return f_; }

 private:
  BoundaryData bd_;
  double alpha_;
  std::vector<double> u_, f_, d_;
  double direct(double u) const;
};

enum class WaveModel { quasineutral, ion };

struct BGKWave {
  BoundaryData bd;
  PotentialWell well;
  WaveModel model;
  double alpha;
  double ubar;  // ion only
  PhaseGrid grid;
  TrappedTable fT;
  std::vector<double> f;  // grid.size() samples
};

// Quasineutral tables use u_ref (independent of the well); ion tables use ubar.
BGKWave assemble_wave(const BoundaryData& bd, const PotentialWell& well, const PhaseGrid& grid,
                      WaveModel model = WaveModel::quasineutral, double alpha = 0.0, double u_ref = 4.0);

// rho(x) at one point using the wave's trapped table; trapped_scale multiplies the trapped branch.
double wave_density(const BGKWave& w, double x, double trapped_scale = 1.0);

struct NeutralityReport {
  std::vector<double> x, deviation;  // rho - 1 (quasineutral) or rho - 1 - alpha V (ion)
  double max_dev = 0;
};
NeutralityReport verify_neutrality(const BGKWave& w, int points = 201, double trapped_scale = 1.0);

// g(r) = 1 - int_0^inf F(u) u / sqrt(r^2 + u^2) du
double g_function(const BoundaryData& bd, double r);
// Product-integration Abel inversion on a uniform r-grid of step h, linearly interpolated to u_grid.
std::vector<double> abel_invert_oracle(const BoundaryData& bd, const std::vector<double>& u_grid, double h = 5e-4);

// int_a^b u du / sqrt((b^2-u^2)(u^2-a^2)); equals pi/2
double quad_identity(double a, double b);
bool quad_identity_selftest(double tol = 1e-8);

}  // namespace qnk::bgk
