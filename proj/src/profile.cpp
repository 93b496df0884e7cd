#include "qnk/profile.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "qnk/error.hpp"
#include "qnk/quadrature.hpp"

namespace qnk {

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014327;

double gauss(double v, double c, double var) {
  const double d = v - c;
  return kInvSqrt2Pi / std::sqrt(var) * std::exp(-0.5 * d * d / var);
}

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

double tab_step(const Tabulated& t) { return (t.v.back() - t.v.front()) / double(t.v.size() - 1); }

std::vector<double> fd4_derivative(const std::vector<double>& f, double h) {
  const std::size_t n = f.size();
  std::vector<double> d(n);
  for (std::size_t i = 2; i + 2 < n; ++i)
    d[i] = (-f[i + 2] + 8 * f[i + 1] - 8 * f[i - 1] + f[i - 2]) / (12 * h);
  d[0] = (-25 * f[0] + 48 * f[1] - 36 * f[2] + 16 * f[3] - 3 * f[4]) / (12 * h);
  d[1] = (-3 * f[0] - 10 * f[1] + 18 * f[2] - 6 * f[3] + f[4]) / (12 * h);
  d[n - 1] = (25 * f[n - 1] - 48 * f[n - 2] + 36 * f[n - 3] - 16 * f[n - 4] + 3 * f[n - 5]) / (12 * h);
  d[n - 2] = (3 * f[n - 1] + 10 * f[n - 2] - 18 * f[n - 3] + 6 * f[n - 4] - f[n - 5]) / (12 * h);
  return d;
}

}  // namespace

Profile::Profile(ProfileKind kind) : kind_(std::move(kind)) {
  std::visit(overloaded{
                 [](const Maxwellian& m) {
                   if (!(m.T > 0)) fail(Errc::invalid_argument, "maxwellian: T must be positive");
                 },
                 [](TwoStream& t) {
                   if (!(t.T > 0)) fail(Errc::invalid_argument, "two_stream: T must be positive");
                   if (t.w_plus < 0 || t.w_minus < 0 || t.w_plus + t.w_minus <= 0)
                     fail(Errc::invalid_argument, "two_stream: weights must be nonnegative with positive sum");
                   const double s = t.w_plus + t.w_minus;
                   t.w_plus /= s;
                   t.w_minus /= s;
                 },
                 [](const BumpOnTail& b) {
                   if (!(b.T > 0) || !(b.width > 0) || b.amp < 0 || b.amp > 1)
                     fail(Errc::invalid_argument, "bump_on_tail: need T > 0, width > 0, 0 <= amp <= 1");
                 },
                 [](const CompactBump& c) {
                   if (!(c.a < c.b) || c.edge_order < 0)
                     fail(Errc::invalid_argument, "compact_bump: need a < b and edge_order >= 0");
                 },
                 [](const PowerLaw& p) {
                   if (!(p.width > 0) || !(p.power > 1))
                     fail(Errc::invalid_argument, "power_law: need width > 0 and power > 1");
                 },
                 [this](Tabulated& t) {
                   if (t.v.size() != t.mu.size() || t.v.size() < 8)
                     fail(Errc::invalid_argument, "tabulated: need at least 8 (v, mu) pairs");
                   const double h = tab_step(t);
                   for (std::size_t i = 0; i < t.v.size(); ++i) {
                     if (std::abs(t.v[i] - (t.v.front() + h * double(i))) > 1e-9 * std::max(1.0, std::abs(t.v[i])))
                       fail(Errc::invalid_argument, "tabulated: v-grid must be uniform");
                     if (!(t.mu[i] >= 0)) fail(Errc::invalid_argument, "tabulated: mu must be nonnegative");
                   }
                   tab_dmu_ = fd4_derivative(t.mu, h);
                 },
             },
             kind_);

  if (std::holds_alternative<CompactBump>(kind_) || std::holds_alternative<Tabulated>(kind_)) {
    norm_ = 1.0;
    const double m = mass();
    if (!(m > 0)) fail(Errc::invalid_argument, "profile has zero mass");
    norm_ = 1.0 / m;
  }
}

Profile Profile::from_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::io, "cannot open tabulated profile '" + path + "'");
  std::string line;
  std::getline(in, line);
  line.erase(std::remove_if(line.begin(), line.end(), ::isspace), line.end());
  if (line != "v,mu") fail(Errc::config, "tabulated profile '" + path + "' must start with header 'v,mu'");
  Tabulated t;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    double v, m;
    if (!(ss >> v >> m)) fail(Errc::config, "bad row in '" + path + "': " + line);
    t.v.push_back(v);
    t.mu.push_back(m);
  }
  return Profile(std::move(t));
}

std::string Profile::kind_name() const {
  return std::visit(overloaded{
                        [](const Maxwellian&) { return std::string("maxwellian"); },
                        [](const TwoStream&) { return std::string("two_stream"); },
                        [](const BumpOnTail&) { return std::string("bump_on_tail"); },
                        [](const CompactBump&) { return std::string("compact_bump"); },
                        [](const PowerLaw&) { return std::string("power_law"); },
                        [](const Tabulated&) { return std::string("tabulated"); },
                    },
                    kind_);
}

double Profile::mu(double v) const {
  return std::visit(
      overloaded{
          [&](const Maxwellian& m) { return gauss(v, m.u, m.T); },
          [&](const TwoStream& t) { return t.w_plus * gauss(v, t.u, t.T) + t.w_minus * gauss(v, -t.u, t.T); },
          [&](const BumpOnTail& b) {
            return (1 - b.amp) * gauss(v, 0, b.T) + b.amp * gauss(v, b.center, b.width * b.width);
          },
          [&](const CompactBump& c) {
            if (v <= c.a || v >= c.b) return 0.0;
            const double q = (c.b - v) * (v - c.a);
            return norm_ * (c.edge_order == 0 ? std::exp(-1.0 / q) : std::pow(q, c.edge_order));
          },
          [&](const PowerLaw& p) {
            const double c = std::exp(std::lgamma(0.5 * p.power) - std::lgamma(0.5 * (p.power - 1))) /
                             (p.width * std::sqrt(std::numbers::pi));
            return c * std::pow(1 + v * v / (p.width * p.width), -0.5 * p.power);
          },
          [&](const Tabulated& t) {
            if (v < t.v.front() || v > t.v.back())
              fail(Errc::extrapolation, "tabulated profile evaluated outside its grid at v=" + std::to_string(v));
            const double h = tab_step(t);
            std::size_t i = std::min<std::size_t>(std::size_t((v - t.v.front()) / h), t.v.size() - 2);
            const double s = (v - t.v[i]) / h;
            const double h00 = (1 + 2 * s) * (1 - s) * (1 - s), h10 = s * (1 - s) * (1 - s);
            const double h01 = s * s * (3 - 2 * s), h11 = s * s * (s - 1);
            return norm_ * (h00 * t.mu[i] + h10 * h * tab_dmu_[i] + h01 * t.mu[i + 1] + h11 * h * tab_dmu_[i + 1]);
          },
      },
      kind_);
}

double Profile::dmu(double v) const {
  return std::visit(
      overloaded{
          [&](const Maxwellian& m) { return -(v - m.u) / m.T * gauss(v, m.u, m.T); },
          [&](const TwoStream& t) {
            return -t.w_plus * (v - t.u) / t.T * gauss(v, t.u, t.T) -
                   t.w_minus * (v + t.u) / t.T * gauss(v, -t.u, t.T);
          },
          [&](const BumpOnTail& b) {
            const double w2 = b.width * b.width;
            return -(1 - b.amp) * v / b.T * gauss(v, 0, b.T) - b.amp * (v - b.center) / w2 * gauss(v, b.center, w2);
          },
          [&](const CompactBump& c) {
            if (v <= c.a || v >= c.b) return 0.0;
            const double q = (c.b - v) * (v - c.a), dq = c.a + c.b - 2 * v;
            if (c.edge_order == 0) return norm_ * std::exp(-1.0 / q) * dq / (q * q);
            return norm_ * c.edge_order * std::pow(q, c.edge_order - 1) * dq;
          },
          [&](const PowerLaw& p) {
            const double w2 = p.width * p.width;
            return -p.power * v / w2 / (1 + v * v / w2) * mu(v);
          },
          [&](const Tabulated& t) {
            if (v < t.v.front() || v > t.v.back())
              fail(Errc::extrapolation, "tabulated profile evaluated outside its grid at v=" + std::to_string(v));
            const double h = tab_step(t);
            std::size_t i = std::min<std::size_t>(std::size_t((v - t.v.front()) / h), t.v.size() - 2);
            const double s = (v - t.v[i]) / h;
            const double d00 = 6 * s * s - 6 * s, d10 = 3 * s * s - 4 * s + 1;
            const double d01 = -6 * s * s + 6 * s, d11 = 3 * s * s - 2 * s;
            return norm_ * (d00 * t.mu[i] / h + d10 * tab_dmu_[i] + d01 * t.mu[i + 1] / h + d11 * tab_dmu_[i + 1]);
          },
      },
      kind_);
}

std::pair<double, double> Profile::range() const {
  return std::visit(overloaded{
                        [](const Maxwellian& m) {
                          const double s = 12 * std::sqrt(m.T);
                          return std::pair{m.u - s, m.u + s};
                        },
                        [](const TwoStream& t) {
                          const double s = 12 * std::sqrt(t.T), u = std::abs(t.u);
                          return std::pair{-u - s, u + s};
                        },
                        [](const BumpOnTail& b) {
                          const double s = 12 * std::sqrt(b.T);
                          return std::pair{std::min(-s, b.center - 12 * b.width), std::max(s, b.center + 12 * b.width)};
                        },
                        [](const CompactBump& c) { return std::pair{c.a, c.b}; },
                        [](const PowerLaw& p) {
                          const double L = p.width * std::min(1e8, std::pow(10.0, 12.0 / (p.power - 1)));
                          return std::pair{-L, L};
                        },
                        [](const Tabulated& t) { return std::pair{t.v.front(), t.v.back()}; },
                    },
                    kind_);
}

std::vector<double> Profile::breakpoints() const {
  std::vector<double> pts;
  auto hump = [&](double c, double s) {
    for (double k : {-6.0, -3.0, -1.0, 0.0, 1.0, 3.0, 6.0}) pts.push_back(c + k * s);
  };
  std::visit(overloaded{
                 [&](const Maxwellian& m) { hump(m.u, std::sqrt(m.T)); },
                 [&](const TwoStream& t) {
                   hump(t.u, std::sqrt(t.T));
                   hump(-t.u, std::sqrt(t.T));
                   pts.push_back(0.0);
                 },
                 [&](const BumpOnTail& b) {
                   hump(0, std::sqrt(b.T));
                   hump(b.center, b.width);
                 },
                 [&](const CompactBump& c) {
                   const double L = c.b - c.a;
                   for (double k : {0.05, 0.25, 0.5, 0.75, 0.95}) pts.push_back(c.a + k * L);
                 },
                 [&](const PowerLaw& p) {
                   pts.push_back(0.0);
                   for (double s = p.width; s < range().second; s *= 10) {
                     pts.push_back(s);
                     pts.push_back(-s);
                   }
                 },
                 [&](const Tabulated& t) {
                   for (int k = 1; k < 16; ++k) pts.push_back(t.v.front() + (t.v.back() - t.v.front()) * k / 16.0);
                 },
             },
             kind_);
  const auto [lo, hi] = range();
  std::vector<double> out{lo, hi};
  for (double x : pts)
    if (x > lo && x < hi) out.push_back(x);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

double Profile::feature_width() const {
  return std::visit(overloaded{
                        [](const Maxwellian& m) { return std::sqrt(m.T); },
                        [](const TwoStream& t) { return std::sqrt(t.T); },
                        [](const BumpOnTail& b) { return std::min(std::sqrt(b.T), b.width); },
                        [](const CompactBump& c) { return (c.b - c.a) / 8; },
                        [](const PowerLaw& p) { return p.width; },
                        [](const Tabulated& t) { return 10 * tab_step(t); },
                    },
                    kind_);
}

double Profile::mass() const {
  return quad::integrate_panels([&](double v) { return mu(v); }, breakpoints());
}

double Profile::moment1() const {
  return quad::integrate_panels([&](double v) { return v * mu(v); }, breakpoints());
}

double Profile::moment2() const {
  return quad::integrate_panels([&](double v) { return v * v * mu(v); }, breakpoints());
}

bool Profile::is_even() const {
  return std::visit(overloaded{
                        [](const Maxwellian& m) { return m.u == 0; },
                        [](const TwoStream& t) { return t.w_plus == t.w_minus || t.u == 0; },
                        [](const BumpOnTail& b) { return b.amp == 0; },
                        [](const CompactBump& c) { return c.a == -c.b; },
                        [](const PowerLaw&) { return true; },
                        [this](const Tabulated& t) {
                          if (std::abs(t.v.front() + t.v.back()) > 1e-12) return false;
                          for (std::size_t i = 0; i < t.v.size(); ++i)
                            if (std::abs(t.mu[i] - t.mu[t.v.size() - 1 - i]) > 1e-14 * (1 + t.mu[i])) return false;
                          return true;
                        },
                    },
                    kind_);
}

// ---------------------------------------------------------------------------
// Penrose

double penrose_integral(const Profile& p, double vbar) {
  auto [lo, hi] = p.range();
  const double w = p.feature_width();
  const double L = 0.5 * w;
  lo = std::min(lo, vbar - 2 * L);
  hi = std::max(hi, vbar + 2 * L);
  const double m0 = p.mu(vbar);
  // near vbar: integrate by parts, the symmetric slope difference is regular at d = 0
  const double inner = quad::integrate([&](double d) { return (p.dmu(vbar + d) - p.dmu(vbar - d)) / d; }, 0.0, L) -
                       (p.mu(vbar + L) - m0) / L - (p.mu(vbar - L) - m0) / L;
  auto g = [&](double v) {
    const double d = v - vbar;
    return (p.mu(v) - m0) / (d * d);
  };
  std::vector<double> left{lo, vbar - L}, right{vbar + L, hi};
  for (double x : p.breakpoints()) {
    if (x > lo && x < vbar - L) left.push_back(x);
    if (x > vbar + L && x < hi) right.push_back(x);
  }
  const double outer = quad::integrate_panels(g, left) + quad::integrate_panels(g, right);
  // outside [lo, hi] mu is negligible and the integrand is -mu(vbar)/(v - vbar)^2
  return inner + outer - m0 / (vbar - lo) - m0 / (hi - vbar);
}

namespace {

struct ScanResult {
  std::vector<double> v, d;
  double dmax = 0;
};

ScanResult scan_slope(const Profile& p, int n) {
  const auto [lo, hi] = p.range();
  ScanResult r;
  r.v.resize(n);
  r.d.resize(n);
  for (int i = 0; i < n; ++i) {
    r.v[i] = lo + (hi - lo) * i / double(n - 1);
    r.d[i] = p.dmu(r.v[i]);
    r.dmax = std::max(r.dmax, std::abs(r.d[i]));
  }
  return r;
}

// Root of mu' between a (mu' < 0) and b (mu' > 0), or the reverse for maxima.
double bisect_slope(const Profile& p, double a, double b) {
  const double sa = p.dmu(a) < 0 ? -1 : 1;
  for (int it = 0; it < 200 && b - a > 1e-15 * std::max(1.0, std::abs(a)); ++it) {
    const double m = 0.5 * (a + b);
    const double dm = p.dmu(m);
    if (dm == 0) return m;
    if ((dm < 0 ? -1 : 1) == sa)
      a = m;
    else
      b = m;
  }
  return 0.5 * (a + b);
}

struct Candidate {
  bool flat;
  double lo, hi;  // strict: bracketing points; flat: interval ends
};

std::vector<Candidate> find_minima(const Profile& p, int n, double flat_tol) {
  const ScanResult s = scan_slope(p, n);
  std::vector<int> sign(n);
  for (int i = 0; i < n; ++i) sign[i] = std::abs(s.d[i]) <= flat_tol * s.dmax ? 0 : (s.d[i] < 0 ? -1 : 1);
  std::vector<Candidate> out;
  int i = 0;
  while (i < n && sign[i] != -1) ++i;
  while (i < n) {
    // i is the last index of a descending run
    while (i + 1 < n && sign[i + 1] == -1) ++i;
    int j = i + 1;
    while (j < n && sign[j] == 0) ++j;
    if (j >= n) break;
    if (sign[j] == 1) {
      if (j - i - 1 >= 2)
        out.push_back({true, s.v[i + 1], s.v[j - 1]});
      else
        out.push_back({false, s.v[i], s.v[j]});
    }
    i = j;
    while (i < n && sign[i] != -1) ++i;
  }
  return out;
}

}  // namespace

std::vector<double> local_minima_strict(const Profile& p, int scan_points) {
  std::vector<double> out;
  for (const auto& c : find_minima(p, scan_points, 1e-13))
    out.push_back(c.flat ? 0.5 * (c.lo + c.hi) : bisect_slope(p, c.lo, c.hi));
  return out;
}

PenroseReport check_alpha_penrose(const Profile& p, double alpha, const PenroseOptions& opt) {
  if (!(alpha >= 0)) fail(Errc::invalid_argument, "alpha must be nonnegative");
  PenroseReport rep;
  rep.alpha = alpha;
  for (const auto& c : find_minima(p, opt.scan_points, opt.flat_tol)) {
    MinimumReport m;
    m.flat = c.flat;
    if (!c.flat) {
      m.vbar = bisect_slope(p, c.lo, c.hi);
      m.integral = penrose_integral(p, m.vbar);
      m.satisfies = m.integral > alpha;
    } else {
      m.flat_lo = c.lo;
      m.flat_hi = c.hi;
      m.vbar = 0.5 * (c.lo + c.hi);
      // every point of the flat interval must satisfy the criterion; test up to 33 of them
      m.satisfies = true;
      m.integral = std::numeric_limits<double>::infinity();
      for (int k = 0; k <= 32; ++k) {
        const double v = c.lo + (c.hi - c.lo) * k / 32.0;
        const double I = penrose_integral(p, v);
        m.integral = std::min(m.integral, I);
        if (!(I > alpha)) m.satisfies = false;
      }
    }
    rep.unstable = rep.unstable || m.satisfies;
    rep.minima.push_back(m);
  }
  rep.delta_condition = check_delta_condition(p);
  rep.delta_prime = check_delta_prime(p, opt.delta_grid, opt.n_max);
  return rep;
}

PenroseReport check_penrose(const Profile& p, const PenroseOptions& opt) { return check_alpha_penrose(p, 0.0, opt); }

DeltaConditionReport check_delta_condition(const Profile& p, double threshold, int points) {
  const auto [lo, hi] = p.range();
  DeltaConditionReport r;
  for (int i = 0; i < points; ++i) {
    const double v = lo + (hi - lo) * i / double(points - 1);
    const double m = p.mu(v);
    if (!(m > std::numeric_limits<double>::min())) {
      r.holds = false;
      r.sup = std::numeric_limits<double>::infinity();
      r.vanishing_at = v;
      return r;
    }
    r.sup = std::max(r.sup, std::abs(p.dmu(v)) / ((1 + std::abs(v)) * m));
  }
  r.holds = std::isfinite(r.sup) && r.sup <= threshold;
  return r;
}

DeltaPrimeReport check_delta_prime(const Profile& p, const std::vector<double>& delta_grid, int n_max) {
  DeltaPrimeReport r;
  r.deltas = delta_grid;
  for (std::size_t k = 0; k + 1 < delta_grid.size(); ++k)
    if (!(delta_grid[k] > delta_grid[k + 1] && delta_grid[k + 1] > 0))
      fail(Errc::invalid_argument, "delta grid must be positive and decreasing");
  const auto [lo0, hi0] = p.range();
  for (double delta : delta_grid) {
    const double fat = std::sqrt(delta);
    const double lo = lo0 - fat, hi = hi0 + fat;
    const double span = hi - lo;
    const double h = std::max(span / 4e6, std::min(span / 2e4, delta / 10));
    const std::size_t n = std::size_t(span / h) + 1;
    std::vector<double> dmu(n);
    std::vector<char> inV(n);
    bool any = false;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = lo + h * double(i);
      const bool inside = v >= lo0 && v <= hi0;
      const double m = inside ? p.mu(v) : 0.0;
      dmu[i] = inside ? std::abs(p.dmu(v)) : 0.0;
      inV[i] = delta * dmu[i] > (1 + std::abs(v)) * m;
      any = any || inV[i];
    }
    double integral = 0;
    if (any) {
      // distance to nearest V_delta point from the left and the right
      std::vector<double> dist(n, std::numeric_limits<double>::infinity());
      double last = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < n; ++i) {
        if (inV[i]) last = double(i);
        dist[i] = (double(i) - last) * h;
      }
      last = std::numeric_limits<double>::infinity();
      for (std::size_t i = n; i-- > 0;) {
        if (inV[i]) last = double(i);
        dist[i] = std::min(dist[i], (last - double(i)) * h);
      }
      for (std::size_t i = 0; i < n; ++i)
        if (dist[i] <= fat) integral += h * dmu[i];
    }
    r.w_integrals.push_back(integral);
  }
  r.holds_heuristic = true;
  for (int order = 1; order <= n_max; ++order) {
    std::vector<double> a;
    for (std::size_t k = 0; k < delta_grid.size(); ++k) a.push_back(std::pow(delta_grid[k], -order) * r.w_integrals[k]);
    const double amax = *std::max_element(a.begin(), a.end());
    bool ok;
    if (amax == 0)
      ok = true;
    else
      ok = a.back() <= 1e-3 * amax && (a.size() < 2 || a.back() < a[a.size() - 2]);
    r.orders.push_back(order);
    r.trend_to_zero.push_back(ok);
    r.holds_heuristic = r.holds_heuristic && ok;
  }
  return r;
}

// ---------------------------------------------------------------------------
// S-stable profiles and the Casimir function

double SStableProfile::phi(double u) const {
  if (u > 0) fail(Errc::domain, "phi is defined for u <= 0");
  return base.mu(vbar + std::sqrt(-2 * u));
}

double SStableProfile::inverse_width(double s) const {
  const double a = base.mu(vbar);
  if (s >= a) return 0.0;
  if (!(s > 0)) fail(Errc::domain, "inverse_width needs s > 0");
  const auto [lo, hi] = base.range();
  double w_hi = std::max(hi - vbar, vbar - lo);
  auto lmu = [&](double w) {
    const double m = base.mu(vbar + w);
    return m > 0 ? std::log(m) : -1e300;
  };
  const double ls = std::log(s);
  for (int k = 0; k < 60 && lmu(w_hi) > ls; ++k) w_hi *= 1.5;
  double w_lo = 0;
  for (int it = 0; it < 200 && w_hi - w_lo > 4e-16 * w_hi; ++it) {
    const double m = 0.5 * (w_lo + w_hi);
    if (lmu(m) > ls)
      w_lo = m;
    else
      w_hi = m;
  }
  return 0.5 * (w_lo + w_hi);
}

SStableProfile build_s_stable(const Profile& p, const SStableOptions& opt) {
  if (const auto* pl = std::get_if<PowerLaw>(&p.kind()); pl && pl->power <= 3)
    fail(Errc::s_stability, "S-stability condition (ii) finite energy fails: power_law power <= 3");

  const int n = 20001;
  const ScanResult s = scan_slope(p, n);
  int imax = 0;
  double best = -1;
  for (int i = 0; i < n; ++i) {
    const double m = p.mu(s.v[i]);
    if (m > best) {
      best = m;
      imax = i;
    }
  }
  double vbar = s.v[imax];
  if (imax > 0 && imax + 1 < n) {
    const double a = s.v[imax - 1], b = s.v[imax + 1];
    if (p.dmu(a) > 0 && p.dmu(b) < 0) vbar = bisect_slope(p, a, b);
  }

  SStableProfile out{p, 0, 0, 0, 0, {}, {}};
  out.vbar = vbar;
  double mono = 0;
  for (int i = 0; i < n; ++i) {
    const double d = s.d[i] / s.dmax;
    if (s.v[i] < vbar) mono = std::max(mono, -d);
    if (s.v[i] > vbar) mono = std::max(mono, d);
  }
  out.mono_residual = mono;
  if (mono > opt.tol_mono)
    fail(Errc::s_stability, "S-stability condition (iii) monotonicity fails: relative slope residual " +
                                std::to_string(mono));

  const double a = p.mu(vbar);
  const auto [lo, hi] = p.range();
  const double W = std::max(hi - vbar, vbar - lo);
  double sym = 0;
  for (int i = 0; i < n; ++i) {
    const double w = W * i / double(n - 1);
    double mp = 0, mm = 0;
    try {
      mp = p.mu(vbar + w);
      mm = p.mu(vbar - w);
    } catch (const Error&) {
      // outside a tabulated grid on one side only: compare against zero
      mp = (vbar + w <= hi) ? p.mu(vbar + w) : 0.0;
      mm = (vbar - w >= lo) ? p.mu(vbar - w) : 0.0;
    }
    sym = std::max(sym, std::abs(mp - mm) / a);
  }
  out.sym_residual = sym;
  if (sym > opt.tol_sym)
    fail(Errc::s_stability, "S-stability condition (iv) symmetry fails: relative residual " + std::to_string(sym));

  out.T = 0.5 * quad::integrate_panels(
                    [&](double v) {
                      const double d = v - vbar;
                      return d * d * p.mu(v);
                    },
                    p.breakpoints());

  const double w0 = 1e-6 * p.feature_width();
  for (int i = opt.table_points - 1; i >= 0; --i) {
    const double w = w0 * std::pow(W / w0, i / double(opt.table_points - 1));
    out.u_table.push_back(-0.5 * w * w);
    out.phi_table.push_back(p.mu(vbar + w));
  }
  out.u_table.push_back(0.0);
  out.phi_table.push_back(a);
  return out;
}

CasimirQ::CasimirQ(const SStableProfile& sp, double s_max, int nodes) : a_(sp.base.mu(sp.vbar)), s_max_(s_max) {
  if (!(s_max > a_)) fail(Errc::invalid_argument, "build_casimir: s_max must exceed a = phi(0)");
  const Profile& p = sp.base;
  const double vbar = sp.vbar;

  const double h = 1e-4 * p.feature_width();
  const double d2 = (p.dmu(vbar + h) - p.dmu(vbar - h)) / (2 * h);
  if (!(d2 < 0)) fail(Errc::s_stability, "build_casimir: mu''(vbar) must be negative for a continuous Q' extension");
  slope_ = -1.0 / d2;

  const double s0 = 1e-30 * a_;
  s_.resize(nodes);
  for (int i = 0; i < nodes; ++i) s_[i] = s0 * std::pow(a_ / s0, i / double(nodes - 1));
  s_.back() = a_;
  std::vector<double> W(nodes);
  for (int i = 0; i < nodes; ++i) W[i] = sp.inverse_width(s_[i]);

  // tail(W) = int_W^inf mu(vbar + w) w dw, accumulated from the outermost node inward
  auto mw = [&](double w) { return p.mu(vbar + w) * w; };
  std::vector<double> tail(nodes);
  {
    const auto [lo, hi] = p.range();
    const double far = std::max({W[0], hi - vbar, vbar - lo}) + 20 * p.feature_width();
    double end = far;
    if (const auto* cb = std::get_if<CompactBump>(&p.kind())) end = cb->b - vbar;
    tail[0] = end > W[0] ? quad::integrate(mw, W[0], end) : 0.0;
  }
  for (int i = 1; i < nodes; ++i) tail[i] = tail[i - 1] + (W[i - 1] > W[i] ? quad::integrate(mw, W[i], W[i - 1]) : 0.0);

  q_.resize(nodes);
  dq_.resize(nodes);
  for (int i = 0; i < nodes; ++i) {
    dq_[i] = -0.5 * W[i] * W[i];
    q_[i] = s_[i] * dq_[i] - tail[i];
  }
  // linear continuation of Q' past a
  const int ext = 200;
  for (int k = 1; k <= ext; ++k) {
    const double s = a_ + (s_max - a_) * k / double(ext);
    s_.push_back(s);
    dq_.push_back(slope_ * (s - a_));
    q_.push_back(q_[nodes - 1] + 0.5 * slope_ * (s - a_) * (s - a_));
  }
  for (std::size_t i = 1; i < dq_.size(); ++i)
    if (!(dq_[i] > dq_[i - 1])) fail(Errc::numerical, "Casimir table: Q' is not strictly increasing");
}

double CasimirQ::Q(double s) const {
  if (s < 0) fail(Errc::domain, "Q evaluated at negative argument");
  if (s > s_max_) fail(Errc::table_range, "Q evaluated beyond its table (s=" + std::to_string(s) + ")");
  if (s >= a_) {
    const double d = s - a_;
    return q_[std::size_t(std::lower_bound(s_.begin(), s_.end(), a_) - s_.begin())] + 0.5 * slope_ * d * d;
  }
  if (s <= s_[0]) return q_[0] * s / s_[0];
  const std::size_t i = std::size_t(std::upper_bound(s_.begin(), s_.end(), s) - s_.begin()) - 1;
  const double h = s_[i + 1] - s_[i], t = (s - s_[i]) / h;
  const double h00 = (1 + 2 * t) * (1 - t) * (1 - t), h10 = t * (1 - t) * (1 - t);
  const double h01 = t * t * (3 - 2 * t), h11 = t * t * (t - 1);
  return h00 * q_[i] + h10 * h * dq_[i] + h01 * q_[i + 1] + h11 * h * dq_[i + 1];
}

double CasimirQ::dQ(double s) const {
  if (s < 0) fail(Errc::domain, "Q' evaluated at negative argument");
  if (s > s_max_) fail(Errc::table_range, "Q' evaluated beyond its table (s=" + std::to_string(s) + ")");
  if (s >= a_) return slope_ * (s - a_);
  if (s <= 0) return dq_[0];
  std::size_t i;
  if (s <= s_[0])
    i = 0;
  else
    i = std::min<std::size_t>(std::size_t(std::upper_bound(s_.begin(), s_.end(), s) - s_.begin()) - 1, s_.size() - 2);
  const double t = std::log(s / s_[i]) / std::log(s_[i + 1] / s_[i]);
  return dq_[i] + t * (dq_[i + 1] - dq_[i]);
}

CasimirQ build_casimir(const SStableProfile& s, double s_max) { return CasimirQ(s, s_max); }

}  // namespace qnk
