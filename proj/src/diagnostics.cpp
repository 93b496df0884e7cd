#include "qnk/diagnostics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>

#include "qnk/error.hpp"
#include "qnk/quadrature.hpp"

namespace qnk {

namespace {
constexpr double kPi = std::numbers::pi;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}  // namespace

double FourierPotential::eval(double x, int deriv) const {
  double s = 0;
  for (const auto& m : modes) {
    const double w = 2 * kPi * m.k / L;
    const double th = w * x + 0.5 * kPi * deriv;  // d/dx cos(wx) = w cos(wx + pi/2)
    s += std::pow(w, deriv) * (m.a * std::cos(th) + m.b * std::sin(th));
  }
  return s;
}

double FourierPotential::sup_norm(int deriv) const {
  double s = 0;
  int kmax = 1;
  for (const auto& m : modes) kmax = std::max(kmax, std::abs(m.k));
  const int n = 256 * kmax;
  for (int i = 0; i < n; ++i) s = std::max(s, std::abs(eval(L * i / n, deriv)));
  return s;
}

bool FourierPotential::zero() const {
  for (const auto& m : modes)
    if (m.a != 0 || m.b != 0) return false;
  return true;
}

FourierPotential FourierPotential::parse(const std::string& expr, double L) {
  FourierPotential V;
  V.L = L;
  std::string s;
  for (char c : expr)
    if (!std::isspace(static_cast<unsigned char>(c))) s += c;
  if (s.empty() || s == "0") return V;
  std::size_t p = 0;
  auto bad = [&](const std::string& why) {
    fail(Errc::config, "potential '" + expr + "': " + why + " at position " + std::to_string(p));
  };
  auto eat = [&](const std::string& tok) {
    if (s.compare(p, tok.size(), tok) == 0) {
      p += tok.size();
      return true;
    }
    return false;
  };
  auto number = [&]() {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(s.substr(p), &used);
    } catch (...) {
      bad("expected a number");
    }
    p += used;
    return v;
  };
  while (p < s.size()) {
    double sign = 1;
    if (eat("+")) {
    } else if (eat("-")) {
      sign = -1;
    } else if (p > 0) {
      bad("expected + or -");
    }
    double coef = 1;
    if (std::isdigit(static_cast<unsigned char>(s[p])) || s[p] == '.') {
      coef = number();
      if (!eat("*")) bad("expected *");
    }
    bool is_cos;
    if (eat("cos("))
      is_cos = true;
    else if (eat("sin("))
      is_cos = false;
    else
      bad("expected cos( or sin(");
    double m = 1;
    if (std::isdigit(static_cast<unsigned char>(s[p]))) {
      m = number();
      if (!eat("*")) bad("expected *");
    }
    if (!eat("pi*x)")) bad("expected pi*x)");
    // cos(m pi x) has period 2/m; it must fit the unit interval
    const double k = m / 2;
    if (std::abs(k - std::round(k)) > 1e-12 || k < 1) bad("the multiple of pi must be a positive even integer");
    Mode md;
    md.k = int(std::lround(k));
    (is_cos ? md.a : md.b) = sign * coef;
    V.modes.push_back(md);
  }
  return V;
}

double casimir_H(const DistributionField& f, const SStableProfile& s, const CasimirQ& Q) {
  const auto& g = f.grid;
  std::vector<double> mu(g.Nv), qmu(g.Nv), dq(g.Nv);
  for (int j = 0; j < g.Nv; ++j) {
    mu[j] = s.base.mu(g.v(j));
    qmu[j] = Q.Q(mu[j]);
    const double w = g.v(j) - s.vbar;
    dq[j] = -0.5 * w * w;
  }
  double h = 0;
  for (int i = 0; i < g.Nx; ++i)
    for (int j = 0; j < g.Nv; ++j) {
      const double x = f.f[g.idx(i, j)];
      h += Q.Q(x) - qmu[j] - dq[j] * (x - mu[j]);
    }
  return h * g.dx() * g.dv();
}

double casimir_mu_integral(const SStableProfile& s, const CasimirQ& Q) {
  const auto [lo, hi] = s.base.range();
  std::vector<double> pts{lo, hi};
  if (s.vbar > lo && s.vbar < hi) pts.push_back(s.vbar);
  for (double b : s.base.breakpoints())
    if (b > lo && b < hi) pts.push_back(b);
  return quad::integrate_panels([&](double v) { return Q.Q(s.base.mu(v)); }, pts);
}

double casimir_phi_moment(const SStableProfile& s) {
  // u = -w^2/2 turns it into int_0^inf phi(-w^2/2) w^2 / sqrt(2) dw
  const auto [lo, hi] = s.base.range();
  const double wmax = std::max(hi - s.vbar, s.vbar - lo);
  return quad::integrate([&](double w) { return s.phi(-0.5 * w * w) * w * w / std::sqrt(2.0); }, 0.0, wmax);
}

CKPResult ckp_check(const DistributionField& f, const Profile& mu, double H, double constant) {
  const auto& g = f.grid;
  double l1 = 0;
  for (int j = 0; j < g.Nv; ++j) {
    const double m = mu.mu(g.v(j));
    for (int i = 0; i < g.Nx; ++i) l1 += std::abs(f.f[g.idx(i, j)] - m);
  }
  l1 *= g.dx() * g.dv();
  CKPResult r;
  r.lhs = l1 * l1;
  r.rhs = constant * H;
  r.holds = r.lhs <= r.rhs + 1e-12 * (1 + r.rhs);
  return r;
}

EnergyParts energy_parts(const DistributionField& f, const FieldState& F, const Model& m) {
  const auto& g = f.grid;
  EnergyParts e;
  for (int i = 0; i < g.Nx; ++i)
    for (int j = 0; j < g.Nv; ++j) e.kinetic += f.f[g.idx(i, j)] * g.v(j) * g.v(j);
  e.kinetic *= 0.5 * g.dx() * g.dv();
  for (int i = 0; i < g.Nx; ++i) {
    e.pot_field += F.E[i] * F.E[i];
    if (m.kind == Model::Kind::ion) e.pot_screen += F.V[i] * F.V[i];
  }
  e.pot_field *= 0.5 * m.eps * m.eps * g.dx();
  e.pot_screen *= 0.5 * m.alpha * g.dx();
  return e;
}

double modulated_energy(const DistributionField& f, const FieldState& F, const Model& m, const SStableProfile& s,
                        const CasimirQ& Q) {
  const auto e = energy_parts(f, F, m);
  return casimir_H(f, s, Q) + e.pot_field + e.pot_screen;
}

double filtered_energy(const DistributionField& f, const FieldState& F, double eps, const FourierPotential& V0, double vbar,
                       const SStableProfile& s, const CasimirQ& Q) {
  const auto& g = f.grid;
  const double t = f.t;
  std::vector<double> a(g.Nx), d1(g.Nx);
  for (int i = 0; i < g.Nx; ++i) {
    d1[i] = V0.eval(g.x(i) - vbar * t, 1);
    a[i] = d1[i] * std::sin(t / eps);
  }
  DistributionField shifted{g, {}, t};
  const double lost = advect_v(g, f.f, a, shifted.f);
  if (std::abs(lost) > 1e-9 * g.Lx)
  {
    char b[160];
    std::snprintf(b, sizeof b, "filtered energy: velocity shift pushes mass %.3g past vmax = %g at t = %g", lost, g.vmax, t);
    fail(Errc::resolution, b);
  }
  for (double& x : shifted.f) x = std::max(x, 0.0);
  double field = 0;
  for (int i = 0; i < g.Nx; ++i) {
    const double d = eps * (-F.E[i]) - d1[i] * std::cos(t / eps);
    field += d * d;
  }
  return casimir_H(shifted, s, Q) + 0.5 * field * g.dx();
}

double ill_prepared_K(const FourierPotential& V0) {
  const double v2 = V0.sup_norm(2), v3 = V0.sup_norm(3);
  if (v2 == 0) return 1.0;
  return (1 + v2 * v2) * (1 + v3 / v2);
}

double q_moment(const DistributionField& f, const CasimirQ& Q) {
  double s = 0;
  for (double x : f.f) {
    if (x <= 0) continue;
    const double q = Q.Q(x);
    s += std::abs(q) + q * q / x;
  }
  return s * f.grid.dx() * f.grid.dv();
}

OscillationState oscillation_filter(const FieldState& F, const PhaseGrid& g, double eps, double t, const FourierPotential& V0,
                                    double vbar) {
  OscillationState o;
  o.t = t;
  o.J = F.J;
  o.epsV.resize(g.Nx);
  o.O.resize(g.Nx);
  o.U.resize(g.Nx);
  o.target.resize(g.Nx);
  const std::complex<double> rot = std::exp(std::complex<double>(0, -t / eps));
  double r = 0;
  for (int i = 0; i < g.Nx; ++i) {
    o.epsV[i] = eps * F.V[i];
    o.O[i] = {F.J[i], o.epsV[i]};
    o.U[i] = rot * o.O[i];
    o.target[i] = {0, V0.eval(g.x(i) - vbar * t)};
    r += std::norm(o.U[i] - o.target[i]);
  }
  o.residual = std::sqrt(r * g.dx());
  return o;
}

namespace {
std::vector<double> centred_diff(const std::vector<double>& u, double h) {
  const std::size_t n = u.size();
  std::vector<double> d(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double lo = j > 0 ? u[j - 1] : 0.0, hi = j + 1 < n ? u[j + 1] : 0.0;
    d[j] = (hi - lo) / (2 * h);
  }
  return d;
}
double sup(const std::vector<double>& u) {
  double m = 0;
  for (double x : u) m = std::max(m, std::abs(x));
  return m;
}
}  // namespace

double weak_norm_proxy(const std::vector<double>& g, int r, const std::vector<double>& ell, double dv) {
  if (g.size() != ell.size()) fail(Errc::invalid_argument, "weak_norm_proxy: g and ell sizes differ");
  if (r < 0) fail(Errc::invalid_argument, "weak_norm_proxy: r must be >= 0");
  std::vector<double> d = ell;
  double norm = sup(d);
  std::vector<double> d1;
  for (int m = 1; m <= r + 1; ++m) {
    d = centred_diff(d, dv);
    if (m == 1) d1 = d;
    norm += sup(d);
  }
  if (!(norm > 0)) fail(Errc::invalid_argument, "weak_norm_proxy: ell vanishes");
  double pair = 0;
  for (std::size_t j = 0; j < g.size(); ++j) pair += g[j] * d1[j];
  return std::abs(pair * dv) / norm;
}

std::vector<double> xaverage_deviation(const DistributionField& f, const Profile& mu) {
  const auto& g = f.grid;
  std::vector<double> out(g.Nv, 0.0);
  for (int i = 0; i < g.Nx; ++i)
    for (int j = 0; j < g.Nv; ++j) out[j] += f.f[g.idx(i, j)];
  for (int j = 0; j < g.Nv; ++j) out[j] = out[j] / g.Nx - mu.mu(g.v(j));
  return out;
}

double rho_Hminus1(const std::vector<double>& rho, const PhaseGrid& g) {
  // with -V'' = rho - 1, int V (rho - 1) dx = sum |rho_k|^2 / k^2
  double mean = 0;
  for (double r : rho) mean += r;
  mean /= double(rho.size());
  std::vector<double> centred(rho.size());
  for (std::size_t i = 0; i < rho.size(); ++i) centred[i] = rho[i] - mean + 1;
  const auto F = solve_poisson(centred, Model::rescaled(), g);
  double s = 0;
  for (std::size_t i = 0; i < rho.size(); ++i) s += F.V[i] * (centred[i] - 1);
  return std::sqrt(std::max(s * g.dx(), 0.0));
}

FitWindow auto_window(const std::vector<double>& t, const std::vector<double>& value) {
  if (t.size() != value.size() || t.empty()) fail(Errc::invalid_argument, "growth fit: series sizes differ or are empty");
  double floor = 0;
  for (double v : value)
    if (v > 0) {
      floor = v;
      break;
    }
  const double sat = *std::max_element(value.begin(), value.end());
  std::size_t a = 0;
  while (a < value.size() && !(value[a] >= 10 * floor)) ++a;
  std::size_t b = a;
  while (b < value.size() && value[b] <= 0.1 * sat) ++b;
  if (a >= value.size() || b == a) fail(Errc::numerical, "growth fit: no samples between 10 x floor and 0.1 x saturation");
  return {t[a], t[b - 1]};
}

GrowthFit growth_fit(const std::vector<double>& t, const std::vector<double>& value, std::optional<FitWindow> window) {
  if (t.size() != value.size()) fail(Errc::invalid_argument, "growth fit: series sizes differ");
  const FitWindow w = window ? *window : auto_window(t, value);
  double n = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::vector<std::pair<double, double>> pts;
  for (std::size_t k = 0; k < t.size(); ++k) {
    if (t[k] < w.t0 || t[k] > w.t1) continue;
    if (!(value[k] > 0)) fail(Errc::numerical, "growth fit: nonpositive value inside the window");
    const double y = std::log(value[k]);
    pts.emplace_back(t[k], y);
    n += 1;
    sx += t[k];
    sy += y;
    sxx += t[k] * t[k];
    sxy += t[k] * y;
  }
  if (pts.size() < 8) fail(Errc::numerical, "growth fit: fewer than 8 points in the window");
  const double mx = sx / n, my = sy / n;
  double cxx = 0, cxy = 0, cyy = 0;
  for (auto [x, y] : pts) {
    cxx += (x - mx) * (x - mx);
    cxy += (x - mx) * (y - my);
    cyy += (y - my) * (y - my);
  }
  GrowthFit f;
  f.rate = cxy / cxx;
  double res = 0;
  for (auto [x, y] : pts) {
    const double e = y - (my + f.rate * (x - mx));
    res += e * e;
  }
  f.r_squared = cyy > 0 ? 1 - res / cyy : 1.0;
  f.t0 = w.t0;
  f.t1 = w.t1;
  f.points = int(pts.size());
  return f;
}

DiagnosticsRecord record_diagnostics(const Simulation& sim, const DiagnosticsContext& ctx) {
  const auto& f = sim.state();
  const auto& F = sim.fields();
  const auto& g = f.grid;
  const auto& m = sim.model();
  DiagnosticsRecord r;
  r.t = f.t;
  r.mass = mean_density(f);
  for (int i = 0; i < g.Nx; ++i)
    for (int j = 0; j < g.Nv; ++j) r.momentum += f.f[g.idx(i, j)] * g.v(j);
  r.momentum *= g.dx() * g.dv();
  const auto e = energy_parts(f, F, m);
  r.kinetic = e.kinetic;
  r.pot_field = e.pot_field;
  r.pot_screen = m.kind == Model::Kind::ion ? e.pot_screen : 0.0;
  if (ctx.sstable && ctx.Q) {
    r.HQ = casimir_H(f, *ctx.sstable, *ctx.Q);
    r.L_eps = r.HQ + e.pot_field + e.pot_screen;
  } else {
    r.HQ = r.L_eps = kNaN;
  }
  const bool eps_model = m.kind != Model::Kind::rescaled;
  r.LO_eps = (ctx.V0 && ctx.sstable && ctx.Q && eps_model)
                 ? filtered_energy(f, F, m.eps, *ctx.V0, ctx.vbar, *ctx.sstable, *ctx.Q)
                 : kNaN;
  for (int i = 0; i < g.Nx; ++i) {
    r.rho_L1 += std::abs(F.rho[i] - 1);
    r.epsE_L1 += std::abs(F.E[i]);
  }
  r.rho_L1 *= g.dx();
  r.epsE_L1 *= m.eps * g.dx();
  if (ctx.ell && ctx.mu) {
    const auto dev = xaverage_deviation(f, *ctx.mu);
    for (int k = 0; k < 3; ++k) r.wproxy[k] = weak_norm_proxy(dev, k, *ctx.ell, g.dv());
  } else {
    r.wproxy[0] = r.wproxy[1] = r.wproxy[2] = kNaN;
  }
  r.clipped_mass = sim.clipped_mass_total();
  r.osc_residual = (ctx.V0 && eps_model) ? oscillation_filter(F, g, m.eps, f.t, *ctx.V0, ctx.vbar).residual : kNaN;
  return r;
}

const char* const kDiagHeader =
    "t,mass,momentum,kinetic,pot_field,pot_screen,HQ,L_eps,LO_eps,rho_L1,epsE_L1,wproxy_r0,wproxy_r1,wproxy_r2,"
    "clipped_mass,osc_residual";

void write_diag_row(std::ostream& os, const DiagnosticsRecord& r) {
  const double v[] = {r.t,      r.mass,    r.momentum,   r.kinetic,    r.pot_field,  r.pot_screen,
                      r.HQ,     r.L_eps,   r.LO_eps,     r.rho_L1,     r.epsE_L1,    r.wproxy[0],
                      r.wproxy[1], r.wproxy[2], r.clipped_mass, r.osc_residual};
  char buf[40];
  for (std::size_t k = 0; k < std::size(v); ++k) {
    if (std::isnan(v[k]))
      std::snprintf(buf, sizeof buf, "nan");
    else
      std::snprintf(buf, sizeof buf, "%.17g", v[k]);
    os << (k ? "," : "") << buf;
  }
  os << "\n";
}

}  // namespace qnk
