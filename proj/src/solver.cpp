#include "qnk/solver.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <numbers>
#include <sstream>

#include <fftw3.h>

#include "qnk/error.hpp"

namespace qnk {

namespace {

constexpr double kPi = std::numbers::pi;

// fftw planning is not thread safe; executing a plan on fresh arrays is
std::mutex& plan_mutex() {
  static std::mutex m;
  return m;
}

class RealFft {
 public:
  explicit RealFft(int n) : n_(n) {
    std::vector<double> r(n);
    std::vector<std::complex<double>> c(n / 2 + 1);
    std::lock_guard lock(plan_mutex());
    fwd_ = fftw_plan_dft_r2c_1d(n, r.data(), reinterpret_cast<fftw_complex*>(c.data()), FFTW_ESTIMATE | FFTW_UNALIGNED);
    bwd_ = fftw_plan_dft_c2r_1d(n, reinterpret_cast<fftw_complex*>(c.data()), r.data(),
                                FFTW_ESTIMATE | FFTW_UNALIGNED | FFTW_DESTROY_INPUT);
    if (!fwd_ || !bwd_) fail(Errc::numerical, "fftw plan creation failed");
  }
  ~RealFft() {
    std::lock_guard lock(plan_mutex());
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(bwd_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  std::vector<std::complex<double>> forward(std::vector<double> in) const {
    std::vector<std::complex<double>> out(n_ / 2 + 1);
    fftw_execute_dft_r2c(fwd_, in.data(), reinterpret_cast<fftw_complex*>(out.data()));
    return out;
  }
  // normalized inverse
  std::vector<double> inverse(std::vector<std::complex<double>> in) const {
    std::vector<double> out(n_);
    fftw_execute_dft_c2r(bwd_, reinterpret_cast<fftw_complex*>(in.data()), out.data());
    for (double& x : out) x /= n_;
    return out;
  }

 private:
  int n_;
  fftw_plan fwd_ = nullptr, bwd_ = nullptr;
};

const RealFft& fft_for(int n) {
  // one plan pair per size, kept for the process lifetime
  static std::mutex m;
  static std::vector<std::pair<int, std::unique_ptr<RealFft>>> cache;
  std::lock_guard lock(m);
  for (auto& [k, p] : cache)
    if (k == n) return *p;
  cache.emplace_back(n, std::make_unique<RealFft>(n));
  return *cache.back().second;
}

// B-spline coefficients of the periodic interpolant: (c[i-1] + 4 c[i] + c[i+1]) / 6 = s[i]
void prefilter_periodic(const double* s, double* c, int n) {
  const double z = std::sqrt(3.0) - 2;
  constexpr int K = 40;  // z^40 ~ 1e-23
  double acc = 0, zk = 1;
  for (int k = 0; k < K; ++k) {
    acc += zk * s[((-k) % n + n) % n];
    zk *= z;
  }
  c[0] = acc;
  for (int i = 1; i < n; ++i) c[i] = s[i] + z * c[i - 1];
  acc = 0;
  zk = 1;
  for (int k = 0; k < K; ++k) {
    acc += zk * c[(n - 1 + k) % n];
    zk *= z;
  }
  c[n - 1] = -z * acc;
  for (int i = n - 2; i >= 0; --i) c[i] = z * (c[i + 1] - c[i]);
  for (int i = 0; i < n; ++i) c[i] *= 6;
}

}  // namespace

void validate_model(const Model& m) {
  switch (m.kind) {
    case Model::Kind::electron:
      if (!(m.eps > 0)) fail(Errc::invalid_argument, "electron model needs eps > 0");
      break;
    case Model::Kind::ion:
      if (!(m.eps > 0)) fail(Errc::invalid_argument, "ion model needs eps > 0");
      if (!(m.alpha > 0)) fail(Errc::invalid_argument, "ion model needs alpha > 0");
      break;
    case Model::Kind::rescaled:
      if (m.eps != 1.0) fail(Errc::invalid_argument, "rescaled model has no eps");
      break;
  }
}

std::string model_name(const Model& m) {
  switch (m.kind) {
    case Model::Kind::electron: return "electron";
    case Model::Kind::ion: return "ion";
    case Model::Kind::rescaled: return "rescaled";
  }
  return "?";
}

void compute_moments(const DistributionField& f, std::vector<double>& rho, std::vector<double>& j) {
  const auto& g = f.grid;
  rho.assign(g.Nx, 0.0);
  j.assign(g.Nx, 0.0);
  const double dv = g.dv();
  for (int i = 0; i < g.Nx; ++i) {
    double r = 0, c = 0;
    const double* row = f.f.data() + g.idx(i, 0);
    for (int k = 0; k < g.Nv; ++k) {
      r += row[k];
      c += row[k] * g.v(k);
    }
    rho[i] = r * dv;
    j[i] = c * dv;
  }
}

double mean_density(const DistributionField& f) {
  double s = 0;
  for (double x : f.f) s += x;
  return s * f.grid.dx() * f.grid.dv() / f.grid.Lx;
}

FieldState solve_poisson(const std::vector<double>& rho, const Model& m, const PhaseGrid& g,
                         const std::vector<double>& j) {
  validate_model(m);
  if (int(rho.size()) != g.Nx || (!j.empty() && int(j.size()) != g.Nx))
    fail(Errc::invalid_argument, "moment arrays must have Nx entries");
  const int N = g.Nx;
  double mean = 0;
  for (double r : rho) mean += r;
  mean /= N;
  if (m.kind != Model::Kind::ion && std::abs(mean - 1) > 1e-10) {
    std::ostringstream os;
    os << "Poisson solvability: mean density " << std::setprecision(17) << mean << " differs from 1";
    fail(Errc::solvability, os.str());
  }
  const auto& fft = fft_for(N);
  std::vector<double> d(N);
  for (int i = 0; i < N; ++i) d[i] = rho[i] - 1;
  const auto rh = fft.forward(d);
  const double eps2 = m.eps * m.eps;
  std::vector<std::complex<double>> Vh(N / 2 + 1), Eh(N / 2 + 1);
  for (int k = 0; k <= N / 2; ++k) {
    const double kk = 2 * kPi * k / g.Lx;
    if (k == 0)
      Vh[k] = m.kind == Model::Kind::ion ? rh[0] / m.alpha : 0.0;
    else
      Vh[k] = rh[k] / ((m.kind == Model::Kind::ion ? m.alpha : 0.0) + eps2 * kk * kk);
    // no derivative on the Nyquist mode of a real signal
    Eh[k] = (k == N / 2) ? 0.0 : -std::complex<double>(0, kk) * Vh[k];
  }
  FieldState s;
  s.rho = rho;
  s.V = fft.inverse(Vh);
  s.E = fft.inverse(Eh);
  if (!j.empty()) {
    s.j = j;
    double jb = 0;
    for (double x : j) jb += x;
    s.jbar = jb / N;
    auto jh = fft.forward(j);
    for (int k = 0; k <= N / 2; ++k) {
      const double kk = 2 * kPi * k / g.Lx;
      jh[k] = (k == 0 || k == N / 2) ? 0.0 : jh[k] / std::complex<double>(0, kk);
    }
    s.J = fft.inverse(jh);
  } else {
    s.j.assign(N, 0.0);
    s.J.assign(N, 0.0);
  }
  return s;
}

FieldState compute_fields(const DistributionField& f, const Model& m) {
  std::vector<double> rho, j;
  compute_moments(f, rho, j);
  return solve_poisson(rho, m, f.grid, j);
}

void spline_shift_periodic(const double* in, double* out, int n, double s) {
  if (n < 4) fail(Errc::invalid_argument, "spline interpolation needs at least 4 points");
  thread_local std::vector<double> c;
  c.resize(n);
  prefilter_periodic(in, c.data(), n);
  const double p = -s;
  const double fl = std::floor(p);
  const double t = p - fl;
  const long m = long(fl);
  const double w0 = (1 - t) * (1 - t) * (1 - t) / 6;
  const double w1 = (3 * t * t * t - 6 * t * t + 4) / 6;
  const double w2 = (-3 * t * t * t + 3 * t * t + 3 * t + 1) / 6;
  const double w3 = t * t * t / 6;
  long base = ((m - 1) % n + n) % n;
  for (int i = 0; i < n; ++i) {
    const long i0 = (base + i) % n;
    const long i1 = (i0 + 1) % n, i2 = (i0 + 2) % n, i3 = (i0 + 3) % n;
    out[i] = w0 * c[i0] + w1 * c[i1] + w2 * c[i2] + w3 * c[i3];
  }
}

double advect_v(const PhaseGrid& g, const std::vector<double>& in, const std::vector<double>& a, std::vector<double>& out) {
  if (int(a.size()) != g.Nx) fail(Errc::invalid_argument, "advect_v needs one shift per x node");
  out.resize(g.size());
  const double dv = g.dv();
  thread_local std::vector<double> pin, pout;
  double lost = 0;
  for (int i = 0; i < g.Nx; ++i) {
    const double s = a[i] / dv;
    if (!std::isfinite(s)) fail(Errc::numerical, "non-finite velocity shift");
    // zero padding wide enough that the periodic spline never wraps data back into the box
    const int P = int(std::ceil(std::abs(s))) + 40;
    const int n = g.Nv + 2 * P;
    pin.assign(n, 0.0);
    pout.resize(n);
    const double* row = in.data() + g.idx(i, 0);
    double before = 0, after = 0;
    for (int k = 0; k < g.Nv; ++k) {
      pin[P + k] = row[k];
      before += row[k];
    }
    spline_shift_periodic(pin.data(), pout.data(), n, s);
    double* orow = out.data() + g.idx(i, 0);
    for (int k = 0; k < g.Nv; ++k) {
      orow[k] = pout[P + k];
      after += orow[k];
    }
    lost += before - after;
  }
  return lost * g.dx() * dv;
}

void advect_x(const PhaseGrid& g, const std::vector<double>& in, const std::vector<double>& b, std::vector<double>& out) {
  if (int(b.size()) != g.Nv) fail(Errc::invalid_argument, "advect_x needs one shift per v node");
  out.resize(g.size());
  const double dx = g.dx();
  thread_local std::vector<double> col, res;
  col.resize(g.Nx);
  res.resize(g.Nx);
  for (int k = 0; k < g.Nv; ++k) {
    for (int i = 0; i < g.Nx; ++i) col[i] = in[g.idx(i, k)];
    spline_shift_periodic(col.data(), res.data(), g.Nx, b[k] / dx);
    for (int i = 0; i < g.Nx; ++i) out[g.idx(i, k)] = res[i];
  }
}

Simulation::Simulation(DistributionField f, Model m, double dt, std::optional<std::vector<double>> frozen_E)
    : f_(std::move(f)), model_(m), dt_(dt) {
  validate_grid(f_.grid);
  validate_model(model_);
  if (f_.f.size() != f_.grid.size()) fail(Errc::invalid_argument, "distribution size does not match the grid");
  if (!(dt_ > 0)) fail(Errc::invalid_argument, "time step must be positive");
  for (double x : f_.f)
    if (!(x >= 0)) fail(Errc::invalid_argument, "initial distribution must be nonnegative and finite");
  mass0_ = mean_density(f_);
  if (frozen_E) {
    frozen_ = true;
    fields_.E = frozen_E->empty() ? std::vector<double>(f_.grid.Nx, 0.0) : std::move(*frozen_E);
    if (int(fields_.E.size()) != f_.grid.Nx) fail(Errc::invalid_argument, "frozen field needs Nx entries");
  }
  const auto& g = f_.grid;
  shift_x_.resize(g.Nv);
  for (int k = 0; k < g.Nv; ++k) shift_x_[k] = 0.5 * dt_ * g.v(k);
  shift_v_.resize(g.Nx);
  refresh_fields();
}

void Simulation::refresh_fields() {
  if (frozen_) {
    compute_moments(f_, fields_.rho, fields_.j);
    if (fields_.V.empty()) fields_.V.assign(f_.grid.Nx, 0.0);
    if (fields_.J.empty()) fields_.J.assign(f_.grid.Nx, 0.0);
    return;
  }
  fields_ = compute_fields(f_, model_);
}

const StepStats& Simulation::step() {
  const auto& g = f_.grid;
  last_ = {};
  advect_x(g, f_.f, shift_x_, buf_);
  std::swap(f_.f, buf_);
  if (!frozen_) {
    std::vector<double> rho, j;
    compute_moments(f_, rho, j);
    fields_ = solve_poisson(rho, model_, g);
  }
  for (int i = 0; i < g.Nx; ++i) shift_v_[i] = fields_.E[i] * dt_;
  advect_v(g, f_.f, shift_v_, buf_);
  std::swap(f_.f, buf_);
  advect_x(g, f_.f, shift_x_, buf_);
  std::swap(f_.f, buf_);
  f_.t += dt_;
  ++steps_;

  double mx = 0, neg = 0, worst = 0;
  for (double x : f_.f) mx = std::max(mx, x);
  for (double& x : f_.f)
    if (x < 0) {
      neg -= x;
      worst = std::min(worst, x);
      x = 0;
    }
  last_.clipped_mass = neg * g.dx() * g.dv() / g.Lx;
  clipped_total_ += last_.clipped_mass;
  if (worst < -1e-10 * mx) {
    std::ostringstream os;
    os << "t=" << f_.t << " clipped negative values (min " << worst << "), added mass " << last_.clipped_mass;
    log_.push_back(os.str());
  }
  const double m = mean_density(f_);
  last_.mass_drift = (m - mass0_) / mass0_;
  if (std::abs(last_.mass_drift) > 1e-12) {
    const double r = mass0_ / m;
    for (double& x : f_.f) x *= r;
    last_.renormalized = true;
    ++renorms_;
    std::ostringstream os;
    os << "t=" << f_.t << " renormalized mass, relative drift " << last_.mass_drift;
    log_.push_back(os.str());
  }
  refresh_fields();
  return last_;
}

void Simulation::run(int steps) {
  for (int s = 0; s < steps; ++s) step();
}

double default_dt(const Model& m) { return m.kind == Model::Kind::rescaled ? 1.0 / 16 : m.eps / 16; }

double default_vmax(const Profile& p) {
  const double m1 = p.moment1(), m2 = p.moment2();
  const double v0 = 6 * (std::sqrt(std::max(m2 - m1 * m1, 0.0)) + std::abs(m1));
  // widen until the boundary density is below 1e-12 (Maxwellian T=1 needs ~7.4, not 6); heavy tails stop at 4 v0
  double v = v0;
  while (std::max(p.mu(v), p.mu(-v)) >= 1e-12 && v < 4 * v0) v *= 1.02;
  return v;
}

DistributionField sample_homogeneous(const Profile& p, const PhaseGrid& g) {
  validate_grid(g);
  DistributionField d{g, std::vector<double>(g.size()), 0};
  std::vector<double> mu(g.Nv);
  double s = 0;
  for (int k = 0; k < g.Nv; ++k) {
    mu[k] = p.mu(g.v(k));
    s += mu[k];
  }
  if (!(s > 0)) fail(Errc::resolution, "profile has no mass on the velocity grid");
  for (double& x : mu) x /= s * g.dv();
  for (int i = 0; i < g.Nx; ++i) std::copy(mu.begin(), mu.end(), d.f.begin() + g.idx(i, 0));
  return d;
}

PerturbedInitial make_perturbed_initial(const Profile& p, const Eigenmode& mode, double delta, bool truncate) {
  if (!(delta >= 0)) fail(Errc::invalid_argument, "perturbation amplitude must be nonnegative");
  const auto& g = mode.grid;
  PerturbedInitial out;
  out.field = sample_homogeneous(p, g);
  if (delta == 0) return out;
  auto& f = out.field.f;
  std::vector<double> chi(g.Nv, 1.0);
  if (truncate) {
    // cut set W = {delta |h1| > mu}; |h1| does not depend on x
    std::vector<char> W(g.Nv, 0);
    bool any = false;
    for (int k = 0; k < g.Nv; ++k) {
      W[k] = delta * std::abs(mode.h1[g.idx(0, k)]) > f[g.idx(0, k)];
      any = any || W[k];
    }
    if (any) {
      const double r = std::sqrt(delta);
      // grow W by r, then mollify with radius r/2: the result is 1 on W and 0 beyond 2r
      std::vector<double> grown(g.Nv, 0.0);
      for (int k = 0; k < g.Nv; ++k)
        for (int q = 0; q < g.Nv && !grown[k]; ++q)
          if (W[q] && std::abs(g.v(k) - g.v(q)) <= r) grown[k] = 1;
      const double rho = 0.5 * r;
      const int w = int(rho / g.dv());
      std::vector<double> ker(2 * w + 1);
      double ks = 0;
      for (int q = -w; q <= w; ++q) {
        const double d = q * g.dv() / rho;
        ker[q + w] = d * d < 1 ? std::exp(-1 / (1 - d * d)) : 0.0;
        ks += ker[q + w];
      }
      for (int k = 0; k < g.Nv; ++k) {
        double s = 0;
        for (int q = -w; q <= w; ++q)
          if (k + q >= 0 && k + q < g.Nv) s += ker[q + w] * grown[k + q];
        chi[k] = 1 - std::clamp(s / ks, 0.0, 1.0);
        if (W[k]) chi[k] = 0;
      }
      out.truncated = true;
      for (int k = 0; k < g.Nv; ++k)
        if (chi[k] < 1) out.w_mu_prime += std::abs(p.dmu(g.v(k))) * g.dv();
    }
  }
  double mn = 1e300, cut = 0;
  for (int i = 0; i < g.Nx; ++i)
    for (int k = 0; k < g.Nv; ++k) {
      const double pert = delta * mode.h1[g.idx(i, k)].real();
      f[g.idx(i, k)] += chi[k] * pert;
      cut += std::abs((1 - chi[k]) * pert);
      mn = std::min(mn, f[g.idx(i, k)]);
    }
  out.truncation_l1 = cut * g.dx() * g.dv();
  out.min_value = mn;
  if (mn < 0)
    fail(Errc::domain, "mu + delta Re h1 is negative (delta |h1| <= mu fails for this profile and delta); enable truncation");
  return out;
}

double RescalingMaps::ws1_factor(double s) const { return std::pow(eps, -s) / M; }

RescalingMaps rescaling_maps(double eps, double M) {
  if (!(eps > 0) || !(M > 0)) fail(Errc::invalid_argument, "rescaling needs eps > 0 and M > 0");
  const double kf = 1 / (eps * M);
  const long k = std::lround(kf);
  if (k < 1 || std::abs(kf - double(k)) > 1e-9 * kf) {
    std::ostringstream os;
    os << "rescaling parameter: eps = " << eps << " is not of the form 1/(k M) with integer k for M = " << M;
    fail(Errc::invalid_argument, os.str());
  }
  return {eps, M, int(k)};
}

namespace {
void put_le(std::ostream& os, double x) {
  std::uint64_t u;
  std::memcpy(&u, &x, 8);
  if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap64(u);
  os.write(reinterpret_cast<const char*>(&u), 8);
}
double get_le(std::istream& is) {
  std::uint64_t u = 0;
  is.read(reinterpret_cast<char*>(&u), 8);
  if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap64(u);
  double x;
  std::memcpy(&x, &u, 8);
  return x;
}
}  // namespace

void write_snapshot(const std::string& path, const DistributionField& f, const std::string& note) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(Errc::io, "cannot write snapshot " + path);
  const auto& g = f.grid;
  for (double h : {double(g.Nx), double(g.Nv), g.Lx, g.vmax, f.t}) put_le(os, h);
  for (double x : f.f) put_le(os, x);
  if (!os) fail(Errc::io, "short write on snapshot " + path);
  std::ofstream meta(path + ".meta");
  if (!meta) fail(Errc::io, "cannot write " + path + ".meta");
  meta << std::setprecision(17) << "format=f64le\nheader=Nx,Nv,Lx,vmax,t\nlayout=row-major, index i*Nv+j, x_i=i*Lx/Nx, "
       << "v_j=-vmax+(j+1/2)*2*vmax/Nv\nNx=" << g.Nx << "\nNv=" << g.Nv << "\nLx=" << g.Lx << "\nvmax=" << g.vmax
       << "\nt=" << f.t << "\n";
  if (!note.empty()) meta << "note=" << note << "\n";
}

DistributionField read_snapshot(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(Errc::io, "cannot read snapshot " + path);
  DistributionField d;
  d.grid.Nx = int(get_le(is));
  d.grid.Nv = int(get_le(is));
  d.grid.Lx = get_le(is);
  d.grid.vmax = get_le(is);
  d.t = get_le(is);
  if (!is) fail(Errc::io, "truncated snapshot header in " + path);
  validate_grid(d.grid);
  d.f.resize(d.grid.size());
  for (double& x : d.f) x = get_le(is);
  if (!is) fail(Errc::io, "truncated snapshot data in " + path);
  return d;
}

}  // namespace qnk
