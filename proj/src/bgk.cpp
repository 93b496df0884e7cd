#include "qnk/bgk.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>

#include "qnk/error.hpp"
#include "qnk/quadrature.hpp"

namespace qnk::bgk {

namespace {

constexpr double kPi = std::numbers::pi;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

double powerlaw_shape(const TruncatedPowerLaw& p, double s) {
  return std::pow(1 + s * s / (p.width * p.width), -0.5 * p.power);
}

double eval_component(const SideComponent& c, double s) {
  return std::visit(overloaded{
                        [s](const HalfMaxwellian& h) {
                          return h.mass * 2 / std::sqrt(2 * kPi * h.T) * std::exp(-0.5 * s * s / h.T);
                        },
                        [s](const TruncatedPowerLaw& p) { return s <= p.cut ? powerlaw_shape(p, s) : 0.0; },
                        [s](const TabulatedSide& t) {
                          const double h = t.s[1] - t.s[0];
                          const double pos = s / h;
                          if (pos >= double(t.s.size() - 1)) return s <= t.s.back() ? t.f.back() : 0.0;
                          const std::size_t i = std::size_t(pos);
                          const double w = pos - double(i);
                          return (1 - w) * t.f[i] + w * t.f[i + 1];
                        },
                    },
                    c);
}

double component_support(const SideComponent& c) {
  return std::visit(overloaded{
                        [](const HalfMaxwellian& h) { return 12 * std::sqrt(h.T); },
                        [](const TruncatedPowerLaw& p) { return p.cut; },
                        [](const TabulatedSide& t) { return t.s.back(); },
                    },
                    c);
}

double component_mass(const SideComponent& c) {
  return std::visit(overloaded{
                        [](const HalfMaxwellian& h) { return h.mass; },
                        [](const TruncatedPowerLaw& p) { return p.mass; },
                        [](const TabulatedSide& t) {
                          double m = 0;
                          for (std::size_t i = 0; i + 1 < t.s.size(); ++i) m += 0.5 * (t.s[i + 1] - t.s[i]) * (t.f[i] + t.f[i + 1]);
                          return m;
                        },
                    },
                    c);
}

void validate_component(SideComponent& c) {
  std::visit(overloaded{
                 [](const HalfMaxwellian& h) {
                   if (!(h.T > 0) || !(h.mass >= 0)) fail(Errc::invalid_argument, "half_maxwellian: need T > 0, mass >= 0");
                 },
                 [](TruncatedPowerLaw& p) {
                   if (!(p.width > 0) || !(p.power > 1) || !(p.cut > 0) || !(p.mass >= 0))
                     fail(Errc::invalid_argument, "truncated power law: need width > 0, power > 1, cut > 0, mass >= 0");
                 },
                 [](const TabulatedSide& t) {
                   if (t.s.size() < 2 || t.s.size() != t.f.size()) fail(Errc::invalid_argument, "tabulated side: need >= 2 (s, f) pairs");
                   if (t.s.front() != 0.0) fail(Errc::invalid_argument, "tabulated side: s-grid must start at 0");
                   const double h = t.s[1] - t.s[0];
                   for (std::size_t i = 0; i < t.s.size(); ++i) {
                     if (std::abs(t.s[i] - h * double(i)) > 1e-9 * std::max(1.0, t.s[i]))
                       fail(Errc::invalid_argument, "tabulated side: s-grid must be uniform");
                     if (!(t.f[i] >= 0)) fail(Errc::invalid_argument, "tabulated side: values must be nonnegative");
                   }
                 },
             },
             c);
}

// panels for integrands of F(v) times a kernel of scale `scale`
std::vector<double> panels(const BoundaryData& bd, double scale) {
  std::vector<double> pts{0.0};
  const double S = bd.support();
  if (scale > 0)
    for (double p = scale; p < S; p *= 4) pts.push_back(p);
  for (double q : {0.25, 0.5, 1.0, 2.0, 4.0})
    if (q < S) pts.push_back(q);
  for (double q : bd.breakpoints())
    if (q < S) pts.push_back(q);
  pts.push_back(S);
  return pts;
}

}  // namespace

BoundaryData::BoundaryData(std::vector<SideComponent> plus, std::vector<SideComponent> minus)
    : plus_(std::move(plus)), minus_(std::move(minus)) {
  if (plus_.empty() && minus_.empty()) fail(Errc::invalid_argument, "boundary data: no components");
  for (auto [side, scale] : {std::pair{&plus_, &plus_scale_}, std::pair{&minus_, &minus_scale_}})
    for (auto& c : *side) {
      validate_component(c);
      double k = 1.0;
      if (const auto* p = std::get_if<TruncatedPowerLaw>(&c))
        k = p->mass / quad::integrate([&](double s) { return powerlaw_shape(*p, s); }, 0.0, p->cut);
      scale->push_back(k);
      if (const auto* p = std::get_if<TruncatedPowerLaw>(&c)) breaks_.push_back(p->cut);
      if (const auto* t = std::get_if<TabulatedSide>(&c))
        if (t->s.size() <= 256) breaks_.insert(breaks_.end(), t->s.begin(), t->s.end());
      support_ = std::max(support_, component_support(c));
    }
  const double m = total_mass();
  if (std::abs(m - 1) > 1e-10)
    fail(Errc::invalid_argument, "boundary data must have unit total mass (got " + std::to_string(m) + ")");
}

double BoundaryData::plus(double s) const {
  if (s < 0) fail(Errc::domain, "boundary data evaluated at negative speed");
  double r = 0;
  for (std::size_t k = 0; k < plus_.size(); ++k) r += plus_scale_[k] * eval_component(plus_[k], s);
  return r;
}

double BoundaryData::minus(double s) const {
  if (s < 0) fail(Errc::domain, "boundary data evaluated at negative speed");
  double r = 0;
  for (std::size_t k = 0; k < minus_.size(); ++k) r += minus_scale_[k] * eval_component(minus_[k], s);
  return r;
}

double BoundaryData::total_mass() const {
  double m = 0;
  for (const auto* side : {&plus_, &minus_})
    for (const auto& c : *side) m += component_mass(c);
  return m;
}

// ---- potential well ----

namespace {

struct WellParser {
  const std::string& s;
  std::size_t i = 0;

  [[noreturn]] void error(const std::string& what) const {
    fail(Errc::config, "well expression '" + s + "': " + what + " at position " + std::to_string(i));
  }
  void skip() {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
  }
  bool eat(const std::string& tok) {
    skip();
    if (s.compare(i, tok.size(), tok) == 0) {
      i += tok.size();
      return true;
    }
    return false;
  }
  void expect(const std::string& tok) {
    if (!eat(tok)) error("expected '" + tok + "'");
  }
  bool at_number() {
    skip();
    return i < s.size() && (std::isdigit(static_cast<unsigned char>(s[i])) || s[i] == '.');
  }
  double number() {
    skip();
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(s.substr(i), &used);
    } catch (const std::exception&) {
      error("expected a number");
    }
    i += used;
    return v;
  }
  int integer() {
    const double v = number();
    if (v != std::floor(v) || v < 0 || v > 64) error("expected a small nonnegative integer");
    return int(v);
  }

  void factor(WellTerm& t) {
    if (at_number()) {
      t.coef *= number();
    } else if (eat("x")) {
      t.p += eat("^") ? integer() : 1;
    } else if (eat("(")) {
      expect("1");
      expect("-");
      expect("x");
      expect(")");
      t.q += eat("^") ? integer() : 1;
    } else if (eat("sin^2(")) {
      if (t.sin2) error("at most one sin^2 factor per term");
      t.sin2 = true;
      t.k = 1;
      if (at_number()) {
        t.k = integer();
        expect("*");
      }
      expect("pi");
      expect("*");
      expect("x");
      expect(")");
    } else {
      error("unexpected token");
    }
  }

  WellTerm term(double sign) {
    WellTerm t;
    t.coef = sign;
    factor(t);
    while (eat("*")) factor(t);
    return t;
  }

  std::vector<WellTerm> parse() {
    std::vector<WellTerm> out;
    double sign = 1;
    if (eat("-"))
      sign = -1;
    else
      eat("+");
    out.push_back(term(sign));
    for (;;) {
      if (eat("+"))
        out.push_back(term(1));
      else if (eat("-"))
        out.push_back(term(-1));
      else
        break;
    }
    skip();
    if (i != s.size()) error("trailing characters");
    return out;
  }
};

double ipow(double x, int n) {
  double r = 1;
  for (int k = 0; k < n; ++k) r *= x;
  return r;
}

}  // namespace

PotentialWell PotentialWell::parse(const std::string& expr) {
  WellParser p{expr};
  return PotentialWell(p.parse(), expr);
}

PotentialWell::PotentialWell(std::vector<WellTerm> terms, std::string source)
    : terms_(std::move(terms)), src_(std::move(source)) {
  if (terms_.empty()) fail(Errc::config, "well: no terms");
  double scale = 0;
  for (const auto& t : terms_) scale += std::abs(t.coef);
  const double tol = 1e-14 * std::max(1.0, scale);
  if (std::abs(V(0)) > tol || std::abs(V(1)) > tol) fail(Errc::config, "well must satisfy V(0) = V(1) = 0");
  const int n = 4000;
  int imin = 0;
  for (int k = 0; k <= n; ++k) {
    const double v = V(k / double(n));
    if (v > tol) fail(Errc::config, "well must satisfy V <= 0 on [0,1] (V(" + std::to_string(k / double(n)) + ") > 0)");
    if (v < V(imin / double(n))) imin = k;
  }
  // golden-section refinement of the minimum
  double a = std::max(0, imin - 1) / double(n), b = std::min(n, imin + 1) / double(n);
  const double g = 0.5 * (std::sqrt(5.0) - 1);
  for (int it = 0; it < 80; ++it) {
    const double c = b - g * (b - a), d = a + g * (b - a);
    if (V(c) < V(d))
      b = d;
    else
      a = c;
  }
  vmin_ = std::min(V(0.5 * (a + b)), V(imin / double(n)));
}

double PotentialWell::V(double x) const {
  double r = 0;
  for (const auto& t : terms_) {
    double v = t.coef * ipow(x, t.p) * ipow(1 - x, t.q);
    if (t.sin2) {
      const double s = std::sin(t.k * kPi * x);
      v *= s * s;
    }
    r += v;
  }
  return r;
}

double PotentialWell::dV(double x) const {
  double r = 0;
  for (const auto& t : terms_) {
    const double a = ipow(x, t.p), b = ipow(1 - x, t.q);
    const double da = t.p > 0 ? t.p * ipow(x, t.p - 1) : 0.0;
    const double db = t.q > 0 ? -t.q * ipow(1 - x, t.q - 1) : 0.0;
    double c = 1, dc = 0;
    if (t.sin2) {
      const double s = std::sin(t.k * kPi * x);
      c = s * s;
      dc = t.k * kPi * std::sin(2 * t.k * kPi * x);
    }
    r += t.coef * (da * b * c + a * db * c + a * b * dc);
  }
  return r;
}

// ---- trapped density ----

double trapped_density(const BoundaryData& bd, double u) {
  if (!(u > 0)) fail(Errc::domain, "trapped density needs u > 0");
  auto k = [&](double v) { return bd.F(v) * u / (u * u + v * v); };
  return quad::integrate_panels(k, panels(bd, u)) / kPi;
}

double trapped_density_deriv(const BoundaryData& bd, double u) {
  if (!(u > 0)) fail(Errc::domain, "trapped density needs u > 0");
  auto k = [&](double v) {
    const double q = u * u + v * v;
    return bd.F(v) * (v * v - u * u) / (q * q);
  };
  return quad::integrate_panels(k, panels(bd, u)) / kPi;
}

double trapped_density_ion(const BoundaryData& bd, double alpha, double u) {
  return trapped_density(bd, u) - alpha * u / kPi;
}

double ubar(const BoundaryData& bd, double alpha) {
  if (!(alpha > 0)) fail(Errc::invalid_argument, "ubar needs alpha > 0");
  auto f = [&](double u) { return trapped_density_ion(bd, alpha, u); };
  // f_T(u) < 1/(pi u), so the first zero lies below 1/sqrt(alpha)
  const double hi = 1 / std::sqrt(alpha);
  const double lo = 1e-8 * hi;
  if (f(lo) < 0) return 0.0;
  const int n = 400;
  double a = lo;
  for (int k = 1; k <= n; ++k) {
    double b = lo * std::pow(hi / lo, k / double(n));
    if (f(b) < 0) {
      for (int it = 0; it < 200 && b - a > 1e-15 * b; ++it) {
        const double m = 0.5 * (a + b);
        (f(m) < 0 ? b : a) = m;
      }
      return a;
    }
    a = b;
  }
  fail(Errc::numerical, "ubar: no sign change below 1/sqrt(alpha)");
}

TrappedTable::TrappedTable(BoundaryData bd, double u_ref, double alpha, int nodes) : bd_(std::move(bd)), alpha_(alpha) {
  if (!(u_ref > 0) || nodes < 4) fail(Errc::invalid_argument, "trapped table needs u_ref > 0 and >= 4 nodes");
  const double u0 = 1e-4 * u_ref;
  u_.resize(nodes);
  f_.resize(nodes);
  d_.resize(nodes);
  for (int k = 0; k < nodes; ++k) {
    u_[k] = k + 1 == nodes ? u_ref : u0 * std::pow(u_ref / u0, k / double(nodes - 1));
    f_[k] = direct(u_[k]);
    d_[k] = trapped_density_deriv(bd_, u_[k]) - alpha_ / kPi;
  }
  // Fritsch-Carlson: keep the interpolant monotone where the data are
  for (int k = 0; k + 1 < nodes; ++k) {
    const double delta = (f_[k + 1] - f_[k]) / (u_[k + 1] - u_[k]);
    if (delta == 0) {
      d_[k] = d_[k + 1] = 0;
      continue;
    }
    const double a = d_[k] / delta, b = d_[k + 1] / delta;
    if (a < 0) d_[k] = 0;
    if (b < 0) d_[k + 1] = 0;
    const double r = a * a + b * b;
    if (r > 9) {
      const double t = 3 / std::sqrt(r);
      d_[k] = t * a * delta;
      d_[k + 1] = t * b * delta;
    }
  }
}

double TrappedTable::direct(double u) const {
  return alpha_ > 0 ? trapped_density_ion(bd_, alpha_, u) : trapped_density(bd_, u);
}

double TrappedTable::operator()(double u) const {
  if (u < u_.front() || u > u_.back()) return direct(u);
  std::size_t i = std::size_t(std::upper_bound(u_.begin(), u_.end(), u) - u_.begin());
  i = std::min(std::max<std::size_t>(i, 1), u_.size() - 1) - 1;
  const double h = u_[i + 1] - u_[i], t = (u - u_[i]) / h;
  const double h00 = (1 + 2 * t) * (1 - t) * (1 - t), h10 = t * (1 - t) * (1 - t);
  const double h01 = t * t * (3 - 2 * t), h11 = t * t * (t - 1);
  return h00 * f_[i] + h10 * h * d_[i] + h01 * f_[i + 1] + h11 * h * d_[i + 1];
}

// ---- assembled waves ----

BGKWave assemble_wave(const BoundaryData& bd, const PotentialWell& well, const PhaseGrid& grid, WaveModel model,
                      double alpha, double u_ref) {
  validate_grid(grid);
  double ub = 0;
  if (model == WaveModel::ion) {
    ub = ubar(bd, alpha);
    if (!(-2 * well.V_min() < ub * ub - 1e-12))
      fail(Errc::domain, "well too deep for the ion model: need -2 V_min < ubar^2 (V_min = " +
                             std::to_string(well.V_min()) + ", ubar = " + std::to_string(ub) + ")");
    u_ref = ub;
  } else {
    alpha = 0;
  }
  BGKWave w{bd, well, model, alpha, ub, grid, TrappedTable(bd, u_ref, alpha), {}};
  w.f.resize(grid.size());
  for (int i = 0; i < grid.Nx; ++i) {
    const double V = well.V(grid.x(i) / grid.Lx);
    for (int j = 0; j < grid.Nv; ++j) {
      const double v = grid.v(j);
      const double e = v * v + 2 * V;
      double val;
      if (e >= 0)
        val = v >= 0 ? bd.plus(std::sqrt(e)) : bd.minus(std::sqrt(e));
      else
        val = w.fT(std::sqrt(-e));
      w.f[grid.idx(i, j)] = val;
    }
  }
  return w;
}

double wave_density(const BGKWave& w, double x, double trapped_scale) {
  const double V = w.well.V(x);
  const double r = std::sqrt(std::max(0.0, -2 * V));
  auto pass = [&](double s) { return w.bd.F(s) * s / std::sqrt(s * s + r * r); };
  double rho = quad::integrate_panels(pass, panels(w.bd, r));
  // the table is only C^1 across nodes, so ask for what the interpolant can deliver
  quad::Options opt;
  opt.rel_tol = 1e-10;
  if (r > 0) rho += trapped_scale * 2 * quad::integrate_abel([&](double u) { return w.fT(u) * u; }, r, opt);
  return rho;
}

NeutralityReport verify_neutrality(const BGKWave& w, int points, double trapped_scale) {
  if (points < 2) fail(Errc::invalid_argument, "verify_neutrality needs >= 2 points");
  NeutralityReport rep;
  for (int k = 0; k < points; ++k) {
    const double x = k / double(points - 1);
    double d = wave_density(w, x, trapped_scale) - 1;
    if (w.model == WaveModel::ion) d -= w.alpha * w.well.V(x);
    rep.x.push_back(x);
    rep.deviation.push_back(d);
    rep.max_dev = std::max(rep.max_dev, std::abs(d));
  }
  return rep;
}

double g_function(const BoundaryData& bd, double r) {
  if (r < 0) fail(Errc::domain, "g(r) needs r >= 0");
  auto k = [&](double u) { return bd.F(u) * u / std::sqrt(r * r + u * u); };
  return 1 - quad::integrate_panels(k, panels(bd, r));
}

std::vector<double> abel_invert_oracle(const BoundaryData& bd, const std::vector<double>& u_grid, double h) {
  if (!(h > 0)) fail(Errc::invalid_argument, "abel oracle needs h > 0");
  double umax = 0;
  for (double u : u_grid) {
    if (u < 0) fail(Errc::domain, "abel oracle: negative u");
    umax = std::max(umax, u);
  }
  const int K = int(std::ceil(umax / h)) + 1;
  std::vector<double> f(K + 1);
  // f(0) = g'(0)/2, Richardson on g(r)/r
  const double r0 = 4 * h;
  f[0] = 0.5 * (2 * g_function(bd, 0.5 * r0) / (0.5 * r0) - g_function(bd, r0) / r0);
  // int_0^{r_k} f(u) u / sqrt(r_k^2 - u^2) du = g(r_k)/2, f piecewise linear on u_j = j h
  for (int k = 1; k <= K; ++k) {
    const double r = k * h, r2 = r * r;
    auto A = [&](double u) { return -std::sqrt(std::max(0.0, r2 - u * u)); };
    auto B = [&](double u) {
      const double q = std::min(1.0, u / r);
      return 0.5 * r2 * std::asin(q) - 0.5 * u * std::sqrt(std::max(0.0, r2 - u * u));
    };
    double lhs = 0, coef_last = 0;
    double Aj = A(0), Bj = B(0);
    for (int j = 0; j < k; ++j) {
      const double uj = j * h, uj1 = (j + 1) * h;
      const double Aj1 = A(uj1), Bj1 = B(uj1);
      const double I0 = Aj1 - Aj, I1 = Bj1 - Bj;
      lhs += f[j] * (uj1 * I0 - I1) / h;
      const double c1 = (I1 - uj * I0) / h;
      if (j + 1 < k)
        lhs += f[j + 1] * c1;
      else
        coef_last = c1;
      Aj = Aj1;
      Bj = Bj1;
    }
    f[k] = (0.5 * g_function(bd, r) - lhs) / coef_last;
  }
  std::vector<double> out;
  out.reserve(u_grid.size());
  for (double u : u_grid) {
    const int j = std::min(int(u / h), K - 1);
    const double t = u / h - j;
    out.push_back((1 - t) * f[j] + t * f[j + 1]);
  }
  return out;
}

double quad_identity(double a, double b) {
  if (!(0 <= a && a < b)) fail(Errc::domain, "quad identity needs 0 <= a < b");
  // 1/sqrt((b-u)(u-a)) carries both endpoint singularities; the rest is smooth
  return quad::integrate_inv_sqrt_both([&](double u) { return u / std::sqrt((b + u) * (u + a)); }, a, b);
}

bool quad_identity_selftest(double tol) {
  for (auto [a, b] : {std::pair{1.0, 2.0}, std::pair{0.5, 3.0}, std::pair{0.1, 10.0}})
    if (std::abs(quad_identity(a, b) - 0.5 * kPi) > tol) return false;
  return true;
}

}  // namespace qnk::bgk
