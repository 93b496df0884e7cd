#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>

#include "qnk/error.hpp"
#include "qnk/profile.hpp"
#include "qnk/quadrature.hpp"

using namespace qnk;

namespace {
// I(0) for two_stream(T=0.25, u=2, 1/2, 1/2), 40-digit mpmath evaluation with a Taylor-patched origin
constexpr double kTwoStreamI0 = 0.32634073301443306;

Profile ts_fixture() { return Profile(TwoStream{0.25, 2.0, 0.5, 0.5}); }
}  // namespace

TEST_CASE("maxwellian and two-stream closed forms") {
  Profile m(Maxwellian{1, 0});
  CHECK(m.mu(0) == doctest::Approx(1 / std::sqrt(2 * std::numbers::pi)).epsilon(1e-15));
  Profile t(TwoStream{1, 2, 0.5, 0.5});
  CHECK(t.mu(0) == doctest::Approx(std::exp(-2.0) / std::sqrt(2 * std::numbers::pi)).epsilon(1e-15));
  CHECK(m.mass() == doctest::Approx(1).epsilon(1e-13));
  CHECK(t.moment2() == doctest::Approx(5).epsilon(1e-12));
}

TEST_CASE("even profiles are symmetric and analytic slopes match differences") {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> U(-5, 5);
  std::vector<Profile> ps{Profile(Maxwellian{0.7, 0}), ts_fixture(), Profile(CompactBump{-1.5, 1.5, 0}),
                          Profile(PowerLaw{1.0, 4.0})};
  for (const auto& p : ps) {
    for (int k = 0; k < 50; ++k) {
      const double v = U(rng);
      CHECK(p.mu(v) - p.mu(-v) == doctest::Approx(0).epsilon(1e-15));
      const double h = 1e-5;
      const double fd = (p.mu(v + h) - p.mu(v - h)) / (2 * h);
      CHECK(p.dmu(v) == doctest::Approx(fd).epsilon(1e-6).scale(1e-6));
    }
    CHECK(p.mass() == doctest::Approx(1).epsilon(1e-10));
  }
}

TEST_CASE("tabulated profile interpolates and refuses extrapolation") {
  Tabulated tab;
  for (int i = 0; i <= 400; ++i) {
    const double v = -10 + 0.05 * i;
    tab.v.push_back(v);
    tab.mu.push_back(std::exp(-0.5 * v * v) / std::sqrt(2 * std::numbers::pi));
  }
  Profile p(tab);
  Profile m(Maxwellian{1, 0});
  CHECK(p.mu(0.123) == doctest::Approx(m.mu(0.123)).epsilon(1e-6));
  CHECK(p.dmu(0.7) == doctest::Approx(m.dmu(0.7)).epsilon(1e-5));
  CHECK(p.is_even());
  CHECK_THROWS_AS(p.mu(10.5), Error);
  try {
    p.mu(-11);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::extrapolation);
  }
}

TEST_CASE("penrose classification") {
  SUBCASE("maxwellian is stable with no minima") {
    auto r = check_penrose(Profile(Maxwellian{1, 0}));
    CHECK_FALSE(r.unstable);
    CHECK(r.minima.empty());
  }
  SUBCASE("two-stream fixture is unstable at vbar = 0") {
    auto r = check_penrose(ts_fixture());
    REQUIRE(r.minima.size() == 1);
    CHECK(r.unstable);
    CHECK(std::abs(r.minima[0].vbar) < 1e-10);
    CHECK(r.minima[0].integral == doctest::Approx(kTwoStreamI0).epsilon(1e-10));
  }
  SUBCASE("nearly merged humps are stable") {
    auto r = check_penrose(Profile(TwoStream{1, 0.1, 0.5, 0.5}));
    CHECK_FALSE(r.unstable);
  }
  SUBCASE("far separated beams give a flat minimum that satisfies the criterion") {
    auto r = check_penrose(Profile(TwoStream{0.05, 4, 0.5, 0.5}));
    REQUIRE(r.minima.size() == 1);
    CHECK(r.minima[0].flat);
    CHECK(r.unstable);
  }
}

TEST_CASE("alpha-penrose thresholds") {
  const Profile p = ts_fixture();
  auto r0 = check_penrose(p);
  auto ra = check_alpha_penrose(p, 0.0);
  CHECK(r0.unstable == ra.unstable);
  CHECK(r0.minima[0].integral == ra.minima[0].integral);
  CHECK_FALSE(check_alpha_penrose(p, kTwoStreamI0 + 1).unstable);
  CHECK(check_alpha_penrose(p, kTwoStreamI0 / 2).unstable);
  CHECK_THROWS_AS(check_alpha_penrose(p, -1), Error);
  // monotone in alpha
  bool prev = true;
  for (double a = 0; a < 0.6; a += 0.05) {
    const bool u = check_alpha_penrose(p, a).unstable;
    if (u) CHECK(prev);
    prev = u;
  }
}

TEST_CASE("penrose integral converges as the exclusion window shrinks") {
  const Profile p = ts_fixture();
  const double m0 = p.mu(0);
  double prev = 0;
  for (double eta : {1e-2, 1e-3, 1e-4}) {
    // exclude |v| < eta and add the second-order Taylor estimate of the excluded part
    const double h = 1e-4;
    const double d2 = (p.dmu(h) - p.dmu(-h)) / (2 * h);
    auto g = [&](double v) { return (p.mu(v) - m0) / (v * v); };
    const double I = quad::integrate(g, eta, 40.0) + quad::integrate(g, -40.0, -eta) - 2 * m0 / 40 + eta * d2;
    if (eta < 1e-2) CHECK(std::abs(I - prev) < 1e-6);
    prev = I;
  }
  CHECK(prev == doctest::Approx(kTwoStreamI0).epsilon(1e-8));
}

TEST_CASE("delta condition") {
  auto m = check_delta_condition(Profile(Maxwellian{1, 0}));
  CHECK(m.holds);
  CHECK(m.sup <= 1.0);
  CHECK(check_delta_condition(Profile(PowerLaw{1.0, 4.0})).holds);
  auto c = check_delta_condition(Profile(CompactBump{-1, 1, 0}));
  CHECK_FALSE(c.holds);
  CHECK(c.vanishing_at.has_value());
}

TEST_CASE("delta-prime heuristic") {
  const std::vector<double> grid{1e-2, 3e-3, 1e-3, 3e-4, 1e-4};
  auto flat = check_delta_prime(Profile(CompactBump{-1, 1, 0}), grid, 3);
  CHECK(flat.holds_heuristic);
  auto poly = check_delta_prime(Profile(CompactBump{-1, 1, 2}), grid, 4);
  CHECK_FALSE(poly.trend_to_zero[2]);  // n = 3 > m = 2
  CHECK_FALSE(poly.trend_to_zero[3]);  // n = 4
  auto mx = check_delta_prime(Profile(Maxwellian{1, 0}), grid, 3);
  CHECK(mx.holds_heuristic);
  for (double w : mx.w_integrals) CHECK(w == 0.0);
  CHECK_THROWS_AS(check_delta_prime(Profile(Maxwellian{1, 0}), {1e-3, 1e-2}, 2), Error);
}

TEST_CASE("S-stable construction") {
  auto s = build_s_stable(Profile(Maxwellian{2, 0.5}));
  CHECK(s.vbar == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(s.T == doctest::Approx(1.0).epsilon(1e-12));  // (1/2) int mu |v - vbar|^2 = T/2
  for (double u : {-0.1, -1.0, -7.0}) CHECK(s.phi(u) == doctest::Approx(std::exp(u / 2) / std::sqrt(4 * std::numbers::pi)).epsilon(1e-14));
  try {
    build_s_stable(ts_fixture());
    FAIL("expected an S-stability error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::s_stability);
    CHECK(std::string(e.what()).find("(iii)") != std::string::npos);
  }
  try {
    build_s_stable(Profile(BumpOnTail{1, 0.0001, 0.3, 1.0}));
    FAIL("expected an S-stability error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("(iv)") != std::string::npos);
  }
  // int phi(u) sqrt(-u) du = T/(2 sqrt 2) for a maxwellian of temperature T
  const double I = quad::integrate([&](double w) { return s.phi(-0.5 * w * w) * w * w / std::sqrt(2.0); }, 0.0, 40.0);
  CHECK(I == doctest::Approx(2.0 / (2 * std::sqrt(2.0))).epsilon(1e-12));
}

TEST_CASE("Casimir function") {
  const double T = 1.0;
  auto s = build_s_stable(Profile(Maxwellian{T, 0}));
  const CasimirQ q = build_casimir(s, 2.0);
  CHECK(q.Q(0) == 0.0);
  CHECK_THROWS_AS(build_casimir(s, 0.1), Error);
  CHECK_THROWS_AS(q.Q(2.5), Error);
  // Q'(phi(u)) = u
  for (double u : {-1.0, -0.01, -5.0, -30.0}) CHECK(q.dQ(s.phi(u)) == doctest::Approx(u).epsilon(1e-9));
  // maxwellian: Q(s) = T (s ln s - s) + (T/2) ln(2 pi T) s on (0, a]
  const double c = 0.5 * T * std::log(2 * std::numbers::pi * T);
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> L(-60, std::log(q.a()));
  for (int k = 0; k < 40; ++k) {
    const double x = std::exp(L(rng));
    CHECK(q.Q(x) == doctest::Approx(T * (x * std::log(x) - x) + c * x).epsilon(1e-10).scale(1e-14));
  }
  // convexity on the table, and Q = int_0^s Q'
  const auto& dq = q.dQ_nodes();
  for (std::size_t i = 1; i < dq.size(); ++i) CHECK(dq[i] > dq[i - 1]);
  for (double x : {1e-20, 1e-6, 0.01, 0.2, q.a(), 1.5}) {
    // Q' is piecewise linear in ln s between table nodes, so panel on the nodes
    std::vector<double> pts{0.0};
    for (double b : q.s_nodes())
      if (b < x) pts.push_back(b);
    pts.push_back(x);
    const double cum = quad::integrate_panels([&](double r) { return q.dQ(r); }, pts);
    CHECK(std::abs(cum - q.Q(x)) <= 1e-10);
  }
}
