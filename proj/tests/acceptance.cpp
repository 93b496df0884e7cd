// Acceptance run: one PASS/FAIL line per criterion, tolerances pinned below.
// Usage: acceptance [out_dir]   (scenario outputs land in out_dir, default ./acceptance_out)
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "qnk/bgk.hpp"
#include "qnk/diagnostics.hpp"
#include "qnk/dispersion.hpp"
#include "qnk/error.hpp"
#include "qnk/oracle.hpp"
#include "qnk/profile.hpp"
#include "qnk/scenario.hpp"

using namespace qnk;
namespace fs = std::filesystem;

namespace {

constexpr double kQuadTol = 1e-8;          // 1
constexpr double kQuadSeconds = 1.0;       // 1
constexpr double kPenroseTol = 1e-8;       // 2
constexpr double kRootResidual = 1e-10;    // 3
constexpr double kConjResidual = 1e-9;     // 3
constexpr double kGrowthRel = 0.10;        // 4
constexpr double kProxyRel = 0.15;         // 4
constexpr double kDriftRel = 1e-3;         // 5
constexpr double kDriftReduction = 4.0;    // 5
constexpr double kNeutrality = 1e-6;       // 7, 9
constexpr double kAbelTol = 1e-4;          // 7
constexpr double kOriginTol = 1e-4;        // 7
constexpr double kStationarity = 1e-6;     // 8
constexpr double kCasimirTol = 1e-8;       // 10

const double kPi = std::numbers::pi;

struct Line {
  int n;
  bool pass;
  std::string detail;
  double seconds;
};

std::string fmt(const char* f, double x) {
  char b[64];
  std::snprintf(b, sizeof b, f, x);
  return b;
}
std::string g(double x) { return fmt("%.4g", x); }

using Report = std::map<std::string, std::string>;

// runs every scenario of `cfg` (in parallel) and returns their report.txt key/values by scenario name
std::map<std::string, Report> run(const std::string& cfg, const fs::path& out) {
  const auto list = cli::parse_config(cfg);
  cli::RunOptions opt;
  opt.out_dir = out.string();
  opt.parallel = true;
  std::map<std::string, Report> res;
  for (const auto& r : cli::run_scenarios(list, opt)) {
    if (!r.completed) fail(Errc::numerical, "scenario " + r.name + ": " + r.error);
    std::ifstream in(fs::path(r.dir) / "report.txt");
    std::string line;
    auto& rep = res[r.name];
    while (std::getline(in, line)) {
      const auto eq = line.find(" = ");
      if (eq != std::string::npos) rep[line.substr(0, eq)] = line.substr(eq + 3);
    }
  }
  return res;
}

double num(const Report& r, const std::string& key) {
  auto it = r.find(key);
  if (it == r.end()) fail(Errc::numerical, "report has no key " + key);
  return std::stod(it->second);
}

Profile two_stream() { return Profile(TwoStream{0.25, 2.0, 0.5, 0.5}); }

Line c1() {
  const double pairs[3][2] = {{0.5, 1.0}, {0.1, 2.0}, {1.0, 1.001}};
  double worst = 0;
  for (const auto& p : pairs) worst = std::max(worst, std::abs(bgk::quad_identity(p[0], p[1]) - kPi / 2));
  return {1, worst <= kQuadTol, "max |I(a,b) - pi/2| = " + g(worst) + " over 3 pairs", 0};
}

Line c2() {
  const auto mx = check_penrose(Profile(Maxwellian{1, 0}));
  const Profile ts = two_stream();
  const auto tr = check_penrose(ts);
  double imax = -1, diff = 0;
  for (const auto& m : tr.minima) {
    imax = std::max(imax, m.integral);
    diff = std::max(diff, std::abs(m.integral - oracle::penrose_fixed_grid(ts, m.vbar, 2000)));
  }
  const bool ok = !mx.unstable && tr.unstable && imax > 0 && !tr.minima.empty() && diff <= kPenroseTol;
  return {2, ok,
          std::string("maxwellian ") + (mx.unstable ? "unstable" : "stable") + ", two-stream " +
              (tr.unstable ? "unstable" : "stable") + " with I = " + g(imax) + ", |I - oracle(2000 panels)| = " + g(diff),
          0};
}

Line c3() {
  const Profile ts = two_stream();
  const double M = default_length(ts);
  const auto res = find_unstable_roots(ts, M, {1});
  const int wind = oracle::winding_count(ts, M, 1, 0.01, 2, -2, 2);
  int in_box = 0;
  double worst = 0, conj = 0;
  for (const auto& r : res.roots) {
    in_box += r.lambda.real() > 0.01;
    worst = std::max(worst, r.residual);
    conj = std::max(conj, std::abs(eval_dispersion(ts, r.n, std::conj(r.lambda), M)));
  }
  const bool ok = M == 20 && !res.roots.empty() && worst <= kRootResidual && in_box == wind && conj <= kConjResidual;
  std::string lam = res.roots.empty() ? "none" : fmt("%.12g", res.roots.front().lambda.real());
  return {3, ok,
          "M = " + g(M) + " (critical " + g(critical_length(ts)) + "), roots " + std::to_string(res.roots.size()) +
              ", winding " + std::to_string(wind) + ", Re lambda1 = " + lam + ", max residual " + g(worst) +
              ", max |D(conj)| " + g(conj),
          0};
}

Line c4(const fs::path& out) {
  const auto r = run(
      "[growth]\nkind = instability\nprofile.kind = two_stream\nprofile.T = 0.25\nprofile.u = 2\n"
      "grid.Nx = 256\ngrid.Nv = 512\nmodel.delta = 1e-5\n",
      out)["growth"];
  const double re = num(r, "lambda1.re"), e1 = num(r, "fit.rho_L1.rel_err"), e2 = num(r, "fit.wproxy_r0.rel_err");
  return {4, e1 <= kGrowthRel && e2 <= kProxyRel,
          "Re lambda1 = " + g(re) + ", rho_L1 rate " + g(num(r, "fit.rho_L1.rate")) + " (rel err " + g(e1) +
              "), W^{-0,1} proxy rate " + g(num(r, "fit.wproxy_r0.rate")) + " vs 2 Re lambda1 (rel err " + g(e2) + ")",
          0};
}

Line c5(const fs::path& out) {
  const double eps = 0.05, dt = eps / 16;
  auto r = run("[main]\nkind = stable_well_prepared\nmodel.eps = 0.05\nrun.T_final = 5\n"
               "[coarse]\nkind = stable_well_prepared\nmodel.eps = 0.05\nrun.T_final = 5\ngrid.Nx = 32\ngrid.Nv = 128\n"
               "run.dt = " + fmt("%.17g", dt) + "\n"
               "[fine]\nkind = stable_well_prepared\nmodel.eps = 0.05\nrun.T_final = 5\ngrid.Nx = 64\ngrid.Nv = 256\n"
               "run.dt = " + fmt("%.17g", dt / 2) + "\n",
               out);
  const double rel = num(r["main"], "L_eps.rel_drift");
  const double dc = num(r["coarse"], "L_eps.max_abs_drift"), df = num(r["fine"], "L_eps.max_abs_drift");
  return {5, rel <= kDriftRel && dc / df >= kDriftReduction,
          "rel drift " + g(rel) + " (vs initial " + g(num(r["main"], "L_eps.rel_drift_vs_initial")) +
              "), drift 32x128 " + g(dc) + " -> 64x256 at dt/2 " + g(df) + " (x" + g(dc / df) + ")",
          0};
}

Line c6(const fs::path& out) {
  const double epss[3] = {0.1, 0.05, 0.025};
  std::string cfg;
  for (int k = 0; k < 3; ++k)
    cfg += "[ill" + std::to_string(k) + "]\nkind = stable_ill_prepared\nrun.T_final = 3\nmodel.eps = " + g(epss[k]) +
           "\nassert.envelope = on\n";
  auto r = run(cfg, out);
  double chat = 0, sup[3];
  bool env = true;
  for (int k = 0; k < 3; ++k) {
    const auto& x = r["ill" + std::to_string(k)];
    chat = std::max(chat, num(x, "C_fit"));
    sup[k] = num(x, "LO_eps.sup");
    env = env && x.at("envelope_K.holds") == "true";
  }
  // with the single C the fitted envelope holds at every sample by construction of the max
  const bool mono = sup[0] > sup[1] && sup[1] > sup[2];
  return {6, env && mono,
          "C_hat = " + g(chat) + ", K envelope " + (env ? "holds" : "violated") + " for all eps, sup L^O = " + g(sup[0]) +
              ", " + g(sup[1]) + ", " + g(sup[2]) + " at eps = 0.1, 0.05, 0.025" + (mono ? "" : " (not decreasing)"),
          0};
}

Line c7() {
  const bgk::BoundaryData bd({bgk::HalfMaxwellian{1, 1}});
  const PhaseGrid grid{1.0, 32, 6.0, 128};
  const char* wells[3] = {"-0.3*sin^2(pi*x)", "-0.1*sin^2(pi*x)", "-2*x*(1-x)"};
  double neut = 0;
  bool same = true;
  std::vector<double> first;
  for (const char* w : wells) {
    const auto wave = bgk::assemble_wave(bd, bgk::PotentialWell::parse(w), grid);
    neut = std::max(neut, bgk::verify_neutrality(wave).max_dev);
    const auto& fn = wave.fT.f_nodes();
    if (first.empty())
      first = fn;
    else
      same = same && fn.size() == first.size() && std::memcmp(fn.data(), first.data(), fn.size() * sizeof(double)) == 0;
  }
  std::vector<double> u;
  for (int k = 0; k <= 199; ++k) u.push_back(0.01 + k * (2.0 - 0.01) / 199);
  const auto ab = bgk::abel_invert_oracle(bd, u);
  double abel = 0;
  for (std::size_t k = 0; k < u.size(); ++k) abel = std::max(abel, std::abs(ab[k] - bgk::trapped_density(bd, u[k])));
  const double f0 = bgk::trapped_density(bd, 1e-8), edge = bd.plus(0);
  const bool origin = std::abs(f0 - edge) <= kOriginTol;
  return {7, neut <= kNeutrality && same && abel <= kAbelTol && origin,
          "neutrality " + g(neut) + " over 3 wells, f_T tables " + (same ? "identical" : "differ") + ", Abel oracle err " +
              g(abel) + ", f_T(0+) = " + g(f0) + " vs f0+(0) = " + g(edge) + (origin ? "" : " (equals (f0+(0) + f0-(0))/2)"),
          0};
}

Line c8(const fs::path& out) {
  auto r = run("[bgk]\nkind = bgk_build\nbgk.stationarity_steps = 100\n"
               "[bgk_symmetric]\nkind = bgk_build\nbgk.stationarity_steps = 100\n"
               "boundary.plus = half_maxwellian(T=1, mass=0.5)\nboundary.minus = half_maxwellian(T=1, mass=0.5)\n",
               out);
  const double l1 = num(r["bgk"], "stationarity.l1_change"), sym = num(r["bgk_symmetric"], "stationarity.l1_change");
  return {8, l1 <= kStationarity,
          "L1 change after 100 steps " + g(l1) + " (clipped " + g(num(r["bgk"], "stationarity.clipped_mass")) +
              "); symmetric boundary data, continuous at the separatrix: " + g(sym),
          0};
}

Line c9(const fs::path& out) {
  auto r = run("[ion_a]\nkind = ion_variant\nmodel.alpha = 0.5\nprofile.kind = two_stream\nprofile.T = 0.25\n"
               "[ion_b]\nkind = ion_variant\nmodel.alpha = 1\nprofile.kind = maxwellian\n"
               "[ion_c]\nkind = ion_variant\nmodel.alpha = 2\nprofile.kind = two_stream\nprofile.T = 0.25\n",
               out);
  double worst = 0, neut = 0;
  bool same = true;
  for (const auto& [name, rep] : r) {
    worst = std::max(worst, num(rep, "ion.max_ubar_over_bound"));
    neut = std::max(neut, num(rep, "neutrality.max_abs"));
    same = same && rep.at("alpha_zero_reduction") == "identical";
  }
  return {9, worst <= 1 && neut <= kNeutrality && same,
          "max ubar / sqrt(2/alpha) = " + g(worst) + " over 3 x 20 trials, neutrality " + g(neut) +
              ", alpha = 0 reduction " + (same ? "identical" : "differs") + " (two-stream, maxwellian)",
          0};
}

Line c10() {
  double lit = 0, cor = 0;
  for (const Profile& p : {Profile(Maxwellian{1, 0}), Profile(CompactBump{-1, 1, 0})}) {
    const auto s = build_s_stable(p);
    const auto Q = build_casimir(s, 2 * p.mu(s.vbar));
    const double lhs = casimir_mu_integral(s, Q), mom = casimir_phi_moment(s);
    lit = std::max(lit, std::abs(lhs + 3 * mom));
    cor = std::max(cor, std::abs(lhs + 3 * std::sqrt(2.0) * mom));
  }
  const Profile mu(Maxwellian{1, 0});
  const auto s = build_s_stable(mu);
  const auto Q = build_casimir(s, 1.0);
  const PhaseGrid grid{1.0, 32, 8.0, 256};
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> U(-0.2, 0.2);
  int half = 0, two = 0;
  for (int k = 0; k < 10; ++k) {
    const double a = U(rng), b = U(rng);
    DistributionField f{grid, std::vector<double>(grid.size()), 0};
    for (int i = 0; i < grid.Nx; ++i)
      for (int j = 0; j < grid.Nv; ++j)
        f.f[grid.idx(i, j)] = mu.mu(grid.v(j) - a * std::sin(2 * kPi * grid.x(i))) * (1 + b * std::cos(2 * kPi * grid.x(i)));
    const double H = casimir_H(f, s, Q);
    half += ckp_check(f, mu, H, 0.5).holds;
    two += ckp_check(f, mu, H, 2.0).holds;
  }
  return {10, lit <= kCasimirTol && half == 10,
          "int Q(mu) vs -3 int sqrt(-u) phi: err " + g(lit) + " (with -3 sqrt(2): " + g(cor) + "); CKP with 1/2 holds on " +
              std::to_string(half) + "/10 states, with 2 on " + std::to_string(two) + "/10",
          0};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path out = argc > 1 ? fs::path(argv[1]) : fs::path("acceptance_out");
  std::vector<std::function<Line()>> checks{c1,
                                            c2,
                                            c3,
                                            [&] { return c4(out); },
                                            [&] { return c5(out); },
                                            [&] { return c6(out); },
                                            c7,
                                            [&] { return c8(out); },
                                            [&] { return c9(out); },
                                            c10};
  int failed = 0;
  for (std::size_t k = 0; k < checks.size(); ++k) {
    const auto t0 = std::chrono::steady_clock::now();
    Line l;
    try {
      l = checks[k]();
    } catch (const std::exception& e) {
      l = {int(k + 1), false, std::string("error: ") + e.what(), 0};
    }
    l.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (l.n == 1 && l.seconds >= kQuadSeconds) {
      l.pass = false;
      l.detail += ", too slow";
    }
    failed += !l.pass;
    std::printf("criterion %2d: %s  %s  [%.2f s]\n", l.n, l.pass ? "PASS" : "FAIL", l.detail.c_str(), l.seconds);
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria pass\n", int(checks.size()) - failed, checks.size());
  return failed ? 1 : 0;
}
