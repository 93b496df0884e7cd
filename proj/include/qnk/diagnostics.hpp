#pragma once

#include <complex>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "qnk/profile.hpp"
#include "qnk/solver.hpp"

namespace qnk {

// V0(x) = sum a_k cos(2 pi k x / L) + b_k sin(2 pi k x / L), exact derivatives of any order
struct FourierPotential {
  struct Mode {
    int k = 1;
    double a = 0, b = 0;
  };
  double L = 1.0;
  std::vector<Mode> modes;

  double eval(double x, int deriv = 0) const;
  // sup over a fine sample of |d^deriv V0|
  double sup_norm(int deriv) const;
  bool zero() const;
  // "0.1*cos(2*pi*x) - 0.02*sin(4*pi*x)"; an empty string or "0" is the zero potential
  static FourierPotential parse(const std::string& expr, double L = 1.0);
};

// Casimir functional relative to the S-stable mu; Q'(mu(v)) is taken as -|v - vbar|^2/2 exactly.
double casimir_H(const DistributionField& f, const SStableProfile& s, const CasimirQ& Q);

// int Q(mu(v)) dv over the line, adaptive quadrature of the tabulated Q
double casimir_mu_integral(const SStableProfile& s, const CasimirQ& Q);
// int_{-inf}^0 sqrt(-u) phi(u) du; integrating by parts twice gives int Q(mu) = -3 sqrt(2) times this
double casimir_phi_moment(const SStableProfile& s);

struct CKPResult {
  double lhs = 0;  // ||f - mu||_{L1}^2
  double rhs = 0;  // constant * H
  bool holds = false;
};
// ||f - mu||_1^2 <= constant * H, with slack 1e-12 (1 + rhs)
CKPResult ckp_check(const DistributionField& f, const Profile& mu, double H, double constant = 0.5);

struct EnergyParts {
  double kinetic = 0;     // 1/2 int f v^2
  double pot_field = 0;   // eps^2/2 int E^2
  double pot_screen = 0;  // alpha/2 int V^2, ion only
  double total() const { return kinetic + pot_field + pot_screen; }
};
EnergyParts energy_parts(const DistributionField& f, const FieldState& F, const Model& m);

// H_Q(f) + eps^2/2 int (V')^2, plus alpha/2 int V^2 for ions
double modulated_energy(const DistributionField& f, const FieldState& F, const Model& m, const SStableProfile& s,
                        const CasimirQ& Q);

// H_Q[f(x, v - V0'(x - vbar t) sin(t/eps))] + 1/2 int [eps V_eps' - V0'(x - vbar t) cos(t/eps)]^2
double filtered_energy(const DistributionField& f, const FieldState& F, double eps, const FourierPotential& V0, double vbar,
                       const SStableProfile& s, const CasimirQ& Q);

// K = C (1 + |V0''|^2)(1 + |V0'''| / |V0''|) with C = 1
double ill_prepared_K(const FourierPotential& V0);

// int (|Q|(f) + Q(f)^2 / f), with Q(0)^2/0 := 0
double q_moment(const DistributionField& f, const CasimirQ& Q);

struct OscillationState {
  double t = 0;
  std::vector<double> J, epsV;
  std::vector<std::complex<double>> O, U, target;
  double residual = 0;  // ||U - target||_{L2}
};
OscillationState oscillation_filter(const FieldState& F, const PhaseGrid& g, double eps, double t, const FourierPotential& V0,
                                    double vbar);

// |<g, ell'>| / ||ell||_{W^{r+1,inf}} on a uniform v grid; a lower bound for ||g||_{W^{-r,1}}, not the norm.
// Derivatives by centred differences; the W norm is the sum of sup norms of ell, ..., ell^(r+1).
double weak_norm_proxy(const std::vector<double>& g, int r, const std::vector<double>& ell, double dv);

// x-average of f - mu as a function of v
std::vector<double> xaverage_deviation(const DistributionField& f, const Profile& mu);

// (sum_{k != 0} |rho_k|^2 / k^2)^{1/2}, continuous Fourier normalization
double rho_Hminus1(const std::vector<double>& rho, const PhaseGrid& g);

struct GrowthFit {
  double rate = 0;
  double r_squared = 0;
  double t0 = 0, t1 = 0;
  int points = 0;
};
struct FitWindow {
  double t0, t1;
};
// Least squares slope of log(value). Without a window: the first run of samples with
// 10 floor <= value <= 0.1 saturation, floor = first value, saturation = max value.
GrowthFit growth_fit(const std::vector<double>& t, const std::vector<double>& value,
                     std::optional<FitWindow> window = std::nullopt);
FitWindow auto_window(const std::vector<double>& t, const std::vector<double>& value);

struct DiagnosticsRecord {
  double t = 0, mass = 0, momentum = 0, kinetic = 0, pot_field = 0, pot_screen = 0;
  double HQ = 0, L_eps = 0, LO_eps = 0, rho_L1 = 0, epsE_L1 = 0;
  double wproxy[3] = {0, 0, 0};
  double clipped_mass = 0, osc_residual = 0;
};

// Everything optional is NaN when its input is absent.
struct DiagnosticsContext {
  const Profile* mu = nullptr;                  // for x-averaged deviation
  const SStableProfile* sstable = nullptr;      // HQ, L_eps
  const CasimirQ* Q = nullptr;
  const FourierPotential* V0 = nullptr;         // LO_eps and the oscillation residual
  double vbar = 0;
  const std::vector<double>* ell = nullptr;     // weak-norm proxies
};

DiagnosticsRecord record_diagnostics(const Simulation& sim, const DiagnosticsContext& ctx);

extern const char* const kDiagHeader;
void write_diag_row(std::ostream& os, const DiagnosticsRecord& r);

}  // namespace qnk
