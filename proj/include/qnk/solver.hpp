#pragma once

#include <optional>
#include <string>
#include <vector>

#include "qnk/dispersion.hpp"
#include "qnk/grid.hpp"
#include "qnk/profile.hpp"

namespace qnk {

// electron: -eps^2 V'' = rho - 1; ion: alpha V - eps^2 V'' = rho - 1; rescaled: electron with eps = 1 on the M-torus
struct Model {
  enum class Kind { electron, ion, rescaled };
  Kind kind = Kind::rescaled;
  double eps = 1.0;
  double alpha = 0.0;

  static Model electron(double eps) { return {Kind::electron, eps, 0.0}; }
  static Model ion(double eps, double alpha) { return {Kind::ion, eps, alpha}; }
  static Model rescaled() { return {Kind::rescaled, 1.0, 0.0}; }
};

void validate_model(const Model& m);
std::string model_name(const Model& m);

struct DistributionField {
  PhaseGrid grid;
  std::vector<double> f;  // grid.size(), row-major in x
  double t = 0;
};

struct FieldState {
  std::vector<double> rho, j, V, E, J;
  double jbar = 0;
};

// rho_i = sum_j f dv, j_i = sum_j f v dv
void compute_moments(const DistributionField& f, std::vector<double>& rho, std::vector<double>& j);

// Spectral solve; mean(rho) must be 1 within 1e-10. j may be empty (J, jbar then zero).
FieldState solve_poisson(const std::vector<double>& rho, const Model& m, const PhaseGrid& g,
                         const std::vector<double>& j = {});
FieldState compute_fields(const DistributionField& f, const Model& m);

// mean density dx dv sum f / Lx; the solver keeps it at 1
double mean_density(const DistributionField& f);

// Cubic B-spline interpolation of shifted data, the two kernels of the advection step.
// periodic: out[i] = S(i - s) with S the periodic spline through in[0..n).
void spline_shift_periodic(const double* in, double* out, int n, double s);
// out(x_i, v) = in(x_i, v - a_i) with zero data outside [-vmax, vmax]; returns mass pushed out of the box
double advect_v(const PhaseGrid& g, const std::vector<double>& in, const std::vector<double>& a, std::vector<double>& out);
// out(x, v_j) = in(x - b_j, v_j), periodic
void advect_x(const PhaseGrid& g, const std::vector<double>& in, const std::vector<double>& b, std::vector<double>& out);

struct StepStats {
  double clipped_mass = 0;   // mass added by clipping negative values this step
  double mass_drift = 0;     // relative drift before renormalization
  bool renormalized = false;
};

class Simulation {
 public:
  // With frozen_E the field is never solved for: every step advects under that E (empty vector: E = 0).
  Simulation(DistributionField f, Model m, double dt, std::optional<std::vector<double>> frozen_E = std::nullopt);

  const StepStats& step();
  void run(int steps);

  const DistributionField& state() const { return f_; }
  const FieldState& fields() const { return fields_; }
  const Model& model() const { return model_; }
  double dt() const { return dt_; }
  long steps_taken() const { return steps_; }
  double clipped_mass_total() const { return clipped_total_; }
  int renormalizations() const { return renorms_; }
  // renormalization and clipping events, one line each
  const std::vector<std::string>& log() const { return log_; }

 private:
  void refresh_fields();

  DistributionField f_;
  Model model_;
  double dt_;
  FieldState fields_;
  bool frozen_ = false;
  double mass0_ = 1;
  std::vector<double> buf_, shift_x_, shift_v_;
  StepStats last_;
  double clipped_total_ = 0;
  int renorms_ = 0;
  long steps_ = 0;
  std::vector<std::string> log_;
};

// Default time steps: 1/16 for the rescaled system, eps/16 otherwise.
double default_dt(const Model& m);
// 6 (thermal width + |mean velocity|), widened until mu(+-vmax) < 1e-12 (at most 4x)
double default_vmax(const Profile& p);

// mu on the grid, scaled so the discrete mean density is exactly 1
DistributionField sample_homogeneous(const Profile& p, const PhaseGrid& g);

struct PerturbedInitial {
  DistributionField field;
  bool truncated = false;
  double truncation_l1 = 0;   // ||f0 - (mu + delta Re h1)||_1
  double w_mu_prime = 0;      // int over the cut set of |mu'|, the bound's integrand
  double min_value = 0;
};

// f0 = mu + delta Re h1; with truncate, the perturbation is cut off where delta |h1| > mu (smoothly over sqrt(delta))
PerturbedInitial make_perturbed_initial(const Profile& p, const Eigenmode& mode, double delta, bool truncate);

// Bookkeeping between the rescaled M-torus system and the original eps system, eps = 1/(k M).
struct RescalingMaps {
  double eps = 0, M = 0;
  int k = 0;
  // ||rho_eps - 1||_{L1(T)} from ||Lambda - 1||_{L1(T_M)}
  double l1_original(double c) const { return c / M; }
  // W^{s,1} norms pick up eps^{-s} / M
  double ws1_factor(double s) const;
  double time_original(double t) const { return eps * t; }
};
RescalingMaps rescaling_maps(double eps, double M);

// Flat little-endian doubles: Nx, Nv, Lx, vmax, t, then the values; `path`.meta holds the same header as text.
void write_snapshot(const std::string& path, const DistributionField& f, const std::string& note = {});
DistributionField read_snapshot(const std::string& path);

}  // namespace qnk
