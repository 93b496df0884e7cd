#pragma once

#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace qnk {

struct Maxwellian {
  double T = 1.0;
  double u = 0.0;
};

// w_plus * N(+u, T) + w_minus * N(-u, T); weights are renormalized to sum 1.
struct TwoStream {
  double T = 1.0;
  double u = 2.0;
  double w_plus = 0.5;
  double w_minus = 0.5;
};

// (1 - amp) N(0, T) + amp N(center, width^2)
struct BumpOnTail {
  double T = 1.0;
  double amp = 0.1;
  double center = 4.0;
  double width = 0.5;
};

// Supported on (a, b). edge_order == 0: exp(-1/((b-v)(v-a))) edges, flat to all orders.
// edge_order == m > 0: ((b-v)(v-a))^m, a zero of order m at each edge.
struct CompactBump {
  double a = -1.0;
  double b = 1.0;
  int edge_order = 0;
};

// c (1 + v^2/width^2)^(-power/2), power > 1
struct PowerLaw {
  double width = 1.0;
  double power = 4.0;
};

// Uniform v-grid samples; mu' from 4th-order centered differences, cubic Hermite in between.
struct Tabulated {
  std::vector<double> v;
  std::vector<double> mu;
};

using ProfileKind = std::variant<Maxwellian, TwoStream, BumpOnTail, CompactBump, PowerLaw, Tabulated>;

class Profile {
 public:
  explicit Profile(ProfileKind kind);

  static Profile from_csv(const std::string& path);

  const ProfileKind& kind() const { return kind_; }
  std::string kind_name() const;

  double mu(double v) const;
  double dmu(double v) const;
  std::pair<double, double> eval(double v) const { return {mu(v), dmu(v)}; }

  // Interval outside of which mu is negligible (or exactly zero) for quadrature purposes.
  std::pair<double, double> range() const;
  // Interior feature locations that help adaptive quadrature.
  std::vector<double> breakpoints() const;
  // Width of the narrowest feature, used for default grid resolutions.
  double feature_width() const;

  double mass() const;
  double moment1() const;
  double moment2() const;
  bool is_even() const;

 private:
  ProfileKind kind_;
  double norm_ = 1.0;
  std::vector<double> tab_dmu_;
};

struct MinimumReport {
  double vbar = 0;
  double integral = 0;
  bool satisfies = false;
  bool flat = false;
  double flat_lo = 0, flat_hi = 0;
};

struct DeltaConditionReport {
  bool holds = false;
  double sup = 0;
  std::optional<double> vanishing_at;
};

struct DeltaPrimeReport {
  std::vector<double> deltas;
  std::vector<double> w_integrals;  // int_{W_delta} |mu'| dv
  std::vector<int> orders;          // n = 1..n_max
  std::vector<bool> trend_to_zero;  // per n
  bool holds_heuristic = false;     // all tested n pass
};

struct PenroseReport {
  double alpha = 0;
  std::vector<MinimumReport> minima;
  bool unstable = false;
  DeltaConditionReport delta_condition;
  DeltaPrimeReport delta_prime;
};

struct PenroseOptions {
  int scan_points = 20000;
  double flat_tol = 1e-13;  // relative to max |mu'|
  std::vector<double> delta_grid{1e-2, 3e-3, 1e-3, 3e-4, 1e-4};
  int n_max = 3;
};

// I(vbar) = int (mu(v) - mu(vbar)) / (v - vbar)^2 dv
double penrose_integral(const Profile& p, double vbar);

std::vector<double> local_minima_strict(const Profile& p, int scan_points = 20000);

PenroseReport check_penrose(const Profile& p, const PenroseOptions& opt = {});
PenroseReport check_alpha_penrose(const Profile& p, double alpha, const PenroseOptions& opt = {});
DeltaConditionReport check_delta_condition(const Profile& p, double threshold = 1e6, int points = 20001);
DeltaPrimeReport check_delta_prime(const Profile& p, const std::vector<double>& delta_grid, int n_max);

struct SStableProfile {
  Profile base;
  double vbar = 0;
  double T = 0;  // (1/2) int mu |v - vbar|^2
  double sym_residual = 0;
  double mono_residual = 0;
  std::vector<double> u_table;  // increasing, ends at 0
  std::vector<double> phi_table;

  double phi(double u) const;
  // w >= 0 with mu(vbar + w) = s, for 0 < s <= phi(0)
  double inverse_width(double s) const;
};

struct SStableOptions {
  double tol_sym = 1e-9;   // relative to mu(vbar)
  double tol_mono = 1e-9;  // relative to max |mu'|
  int table_points = 400;
};

SStableProfile build_s_stable(const Profile& p, const SStableOptions& opt = {});

class CasimirQ {
 public:
  CasimirQ(const SStableProfile& s, double s_max, int nodes = 4000);

  double a() const { return a_; }
  double s_max() const { return s_max_; }
  double Q(double s) const;
  double dQ(double s) const;
  // slope of Q' to the right of a
  double extension_slope() const { return slope_; }

  const std::vector<double>& s_nodes() const { return s_; }
  const std::vector<double>& Q_nodes() const { return q_; }
  const std::vector<double>& dQ_nodes() const { return dq_; }

 private:
  double a_, s_max_, slope_;
  std::vector<double> s_, q_, dq_;
};

CasimirQ build_casimir(const SStableProfile& s, double s_max);

}  // namespace qnk
