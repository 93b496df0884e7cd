#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <numbers>

#include "qnk/error.hpp"
#include "qnk/solver.hpp"

using namespace qnk;

namespace {
const double kPi = std::numbers::pi;

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

// f = mu(v - shift) (1 + a cos(2 pi x / Lx)), normalized to mean density 1
DistributionField perturbed_maxwellian(const PhaseGrid& g, double a, double shift = 0.0, double T = 1.0) {
  DistributionField d{g, std::vector<double>(g.size()), 0};
  double s = 0;
  for (int i = 0; i < g.Nx; ++i)
    for (int j = 0; j < g.Nv; ++j) {
      const double v = g.v(j) - shift;
      const double x = d.f[g.idx(i, j)] = std::exp(-v * v / (2 * T)) * (1 + a * std::cos(2 * kPi * g.x(i) / g.Lx));
      s += x;
    }
  const double norm = s * g.dx() * g.dv() / g.Lx;
  for (double& x : d.f) x /= norm;
  return d;
}

double energy(const Simulation& s) {
  const auto& d = s.state();
  const auto& g = d.grid;
  double kin = 0;
  for (int i = 0; i < g.Nx; ++i)
    for (int j = 0; j < g.Nv; ++j) kin += 0.5 * d.f[g.idx(i, j)] * g.v(j) * g.v(j);
  kin *= g.dx() * g.dv();
  double pot = 0;
  const auto& F = s.fields();
  for (int i = 0; i < g.Nx; ++i) {
    pot += 0.5 * s.model().eps * s.model().eps * F.E[i] * F.E[i];
    if (s.model().kind == Model::Kind::ion) pot += 0.5 * s.model().alpha * F.V[i] * F.V[i];
  }
  return kin + pot * g.dx();
}

double momentum(const DistributionField& d) {
  const auto& g = d.grid;
  double p = 0;
  for (int i = 0; i < g.Nx; ++i)
    for (int j = 0; j < g.Nv; ++j) p += d.f[g.idx(i, j)] * g.v(j);
  return p * g.dx() * g.dv();
}
}  // namespace

TEST_CASE("spectral Poisson single-mode closed forms") {
  PhaseGrid g{1.0, 64, 6.0, 16};
  const double a = 0.1, k = 2 * kPi;
  std::vector<double> rho(g.Nx, 1.0), j(g.Nx);
  auto s0 = solve_poisson(rho, Model::electron(0.1), g);
  for (int i = 0; i < g.Nx; ++i) {
    CHECK(std::abs(s0.V[i]) < 1e-15);
    CHECK(std::abs(s0.E[i]) < 1e-15);
  }
  for (int i = 0; i < g.Nx; ++i) {
    rho[i] = 1 + a * std::cos(k * g.x(i));
    j[i] = 0.3 + 0.2 * std::sin(3 * k * g.x(i));
  }
  const double eps = 0.1;
  auto se = solve_poisson(rho, Model::electron(eps), g, j);
  auto si = solve_poisson(rho, Model::ion(eps, 1.0), g);
  auto sr = solve_poisson(rho, Model::rescaled(), g);
  for (int i = 0; i < g.Nx; ++i) {
    const double c = std::cos(k * g.x(i)), s = std::sin(k * g.x(i));
    CHECK(se.V[i] == doctest::Approx(a * c / (eps * eps * k * k)).epsilon(1e-12).scale(1));
    CHECK(se.E[i] == doctest::Approx(a * s / (eps * eps * k)).epsilon(1e-12).scale(1));
    CHECK(si.V[i] == doctest::Approx(a * c / (1 + eps * eps * k * k)).epsilon(1e-12).scale(1));
    CHECK(sr.V[i] == doctest::Approx(a * c / (k * k)).epsilon(1e-12).scale(1));
    // J' = j - jbar with zero mean: J = -0.2 cos(3kx)/(3k)
    CHECK(se.J[i] == doctest::Approx(-0.2 * std::cos(3 * k * g.x(i)) / (3 * k)).epsilon(1e-12).scale(1));
  }
  CHECK(se.jbar == doctest::Approx(0.3).epsilon(1e-14));
  double emean = 0;
  for (double e : se.E) emean += e;
  CHECK(std::abs(emean) < 1e-14);

  rho[3] += 1e-6;
  try {
    solve_poisson(rho, Model::electron(eps), g);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::solvability);
  }
  CHECK_NOTHROW(solve_poisson(rho, Model::ion(eps, 2.0), g));
  CHECK_THROWS_AS(validate_model(Model::electron(0.0)), Error);
  CHECK_THROWS_AS(validate_model(Model::ion(0.1, 0.0)), Error);
}

TEST_CASE("periodic spline shift") {
  // integer shifts reproduce the data exactly
  std::vector<double> in(32), out(32);
  for (int i = 0; i < 32; ++i) in[i] = std::sin(0.3 * i) + (i % 5);
  spline_shift_periodic(in.data(), out.data(), 32, 5.0);
  for (int i = 0; i < 32; ++i) CHECK(out[i] == doctest::Approx(in[(i + 27) % 32]).epsilon(1e-13));
  // fourth-order accuracy on a smooth periodic function
  double prev = 0;
  for (int n : {32, 64, 128}) {
    std::vector<double> a(n), b(n);
    const double h = 1.0 / n, s = 10.5;  // same fractional offset at every n
    for (int i = 0; i < n; ++i) a[i] = std::exp(std::sin(2 * kPi * i * h));
    spline_shift_periodic(a.data(), b.data(), n, s);
    double err = 0;
    for (int i = 0; i < n; ++i) err = std::max(err, std::abs(b[i] - std::exp(std::sin(2 * kPi * (i - s) * h))));
    if (prev > 0) CHECK(prev / err > 12);
    prev = err;
  }
  // sum is conserved
  double s0 = 0, s1 = 0;
  spline_shift_periodic(in.data(), out.data(), 32, 2.71);
  for (int i = 0; i < 32; ++i) {
    s0 += in[i];
    s1 += out[i];
  }
  CHECK(s1 == doctest::Approx(s0).epsilon(1e-14));
}

TEST_CASE("homogeneous equilibrium stays put") {
  PhaseGrid g{1.0, 32, 6.0, 128};
  Profile p(Maxwellian{1.0, 0.0});
  const auto f0 = sample_homogeneous(p, g);
  CHECK(mean_density(f0) == doctest::Approx(1).epsilon(1e-14));
  for (const Model& m : {Model::rescaled(), Model::electron(0.1)}) {
    Simulation sim(f0, m, default_dt(m));
    sim.run(1000);
    CHECK(max_abs_diff(sim.state().f, f0.f) <= 1e-12);
    CHECK(sim.renormalizations() == 0);
  }
}

TEST_CASE("free transport is an exact shift on aligned steps") {
  PhaseGrid g{1.0, 64, 4.0, 32};
  const auto f0 = perturbed_maxwellian(g, 0.3);
  // half-step shifts v_j dt / 2 = (2j + 1 - Nv) dx: whole cells
  const double dt = 4 * g.dx() / g.dv();
  Simulation sim(f0, Model::rescaled(), dt, std::vector<double>{});
  sim.run(3);
  double err = 0;
  for (int i = 0; i < g.Nx; ++i)
    for (int j = 0; j < g.Nv; ++j) {
      const int cells = 3 * 2 * (2 * j + 1 - g.Nv);
      const int src = ((i - cells) % g.Nx + g.Nx) % g.Nx;
      err = std::max(err, std::abs(sim.state().f[g.idx(i, j)] - f0.f[g.idx(src, j)]));
    }
  CHECK(err <= 1e-12);
}

TEST_CASE("mass, momentum and energy") {
  auto run = [](int Nx, int Nv, double dt, double T) {
    PhaseGrid g{1.0, Nx, 7.0, Nv};
    Simulation sim(perturbed_maxwellian(g, 0.1, 0.4), Model::electron(0.5), dt);
    const double e0 = energy(sim), p0 = momentum(sim.state());
    double emax = 0, pmax = 0, mmax = 0;
    const int steps = int(std::lround(T / dt));
    for (int s = 0; s < steps; ++s) {
      mmax = std::max(mmax, std::abs(sim.step().mass_drift));
      emax = std::max(emax, std::abs(energy(sim) - e0) / e0);
      pmax = std::max(pmax, std::abs(momentum(sim.state()) - p0));
    }
    CHECK(sim.renormalizations() == 0);
    return std::array<double, 3>{mmax, emax, pmax};
  };
  const auto c = run(32, 64, 0.1, 10);
  const auto f = run(64, 128, 0.05, 10);
  CHECK(c[0] <= 1e-12);
  CHECK(f[0] <= 1e-12);
  CHECK(f[1] <= 1e-3);
  CHECK(c[1] / f[1] >= 4);
  // the scheme conserves momentum exactly (x-shifts conserve each v-row, v-shifts add dt int E rho = 0): only roundoff remains
  CHECK(c[2] <= 1e-11);
  CHECK(f[2] <= 1e-11);
}

TEST_CASE("linear growth of the two_stream mode") {
  Profile p(TwoStream{0.25, 2.0, 0.5, 0.5});
  const auto root = find_unstable_roots(p, 20, {1}).roots.at(0);
  PhaseGrid g{20.0, 64, default_vmax(p), 256};
  const auto mode = build_eigenmode(p, root, g);
  const auto init = make_perturbed_initial(p, mode, 1e-5, false);
  CHECK_FALSE(init.truncated);
  CHECK(init.min_value >= 0);
  Simulation sim(init.field, Model::rescaled(), 1.0 / 16);
  auto l1 = [&] {
    double s = 0;
    for (double r : sim.fields().rho) s += std::abs(r - 1);
    return s * g.dx();
  };
  sim.run(16 * 4);
  const double a = l1(), ta = sim.state().t;
  sim.run(16 * 24);
  const double b = l1(), tb = sim.state().t;
  const double rate = std::log(b / a) / (tb - ta);
  CHECK(rate == doctest::Approx(root.lambda.real()).epsilon(0.1));
}

TEST_CASE("perturbed initial data") {
  Profile p(TwoStream{0.25, 2.0, 0.5, 0.5});
  const auto root = find_unstable_roots(p, 20, {1}).roots.at(0);
  PhaseGrid g{20.0, 16, default_vmax(p), 256};
  const auto mode = build_eigenmode(p, root, g);
  const auto mu = sample_homogeneous(p, g);
  CHECK(max_abs_diff(make_perturbed_initial(p, mode, 0.0, false).field.f, mu.f) == 0.0);
  const auto small = make_perturbed_initial(p, mode, 1e-4, false);
  CHECK(small.min_value >= 0);
  CHECK(mean_density(small.field) == doctest::Approx(1).epsilon(1e-13));
  // large delta: the raw perturbation goes negative, the cutoff repairs it
  const double delta = 1e3;
  CHECK_THROWS_AS(make_perturbed_initial(p, mode, delta, false), Error);
  const auto cut = make_perturbed_initial(p, mode, delta, true);
  CHECK(cut.truncated);
  CHECK(cut.min_value >= 0);
  CHECK(cut.truncation_l1 > 0);
  // |Re h1| <= c |mu'| / Im zeta pointwise, so the removed mass obeys the bound with that constant
  const double C = delta * mode.c * g.Lx / std::abs(root.zeta.imag());
  CHECK(cut.truncation_l1 <= C * cut.w_mu_prime);
  CHECK(mean_density(cut.field) == doctest::Approx(1).epsilon(1e-12));
}

TEST_CASE("rescaling maps") {
  const auto r = rescaling_maps(1.0 / 60, 20);
  CHECK(r.k == 3);
  CHECK(r.l1_original(2.0) == doctest::Approx(0.1));
  CHECK(r.ws1_factor(0) == doctest::Approx(1.0 / 20));
  CHECK(r.ws1_factor(1) == doctest::Approx(60.0 / 20));
  // instability time O(|log delta|) maps to O(eps |log eps|)
  CHECK(r.time_original(36.0) == doctest::Approx(0.6));
  CHECK_THROWS_AS(rescaling_maps(0.013, 20), Error);
  CHECK_THROWS_AS(rescaling_maps(0.1, 20), Error);  // k = 1/2
}

TEST_CASE("snapshot round trip") {
  PhaseGrid g{2.0, 8, 3.0, 16};
  auto d = perturbed_maxwellian(g, 0.2);
  d.t = 1.25;
  const auto path = (std::filesystem::temp_directory_path() / "qnk_snapshot_test.bin").string();
  write_snapshot(path, d, "unit test");
  const auto back = read_snapshot(path);
  CHECK(back.grid.Nx == 8);
  CHECK(back.grid.Nv == 16);
  CHECK(back.grid.Lx == 2.0);
  CHECK(back.t == 1.25);
  CHECK(back.f == d.f);
  CHECK(std::filesystem::file_size(path) == 8 * (5 + g.size()));
  CHECK(std::filesystem::exists(path + ".meta"));
  std::filesystem::remove(path);
  std::filesystem::remove(path + ".meta");
  CHECK_THROWS_AS(read_snapshot(path), Error);
}
