#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "qnk/error.hpp"
#include "qnk/scenario.hpp"
#include "qnk/solver.hpp"

using namespace qnk;
using namespace qnk::cli;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("qnk_test_scenario_" + name);
  fs::remove_all(p);
  return p;
}

std::string config_error_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::config);
    return e.what();
  }
  return {};
}

bool contains(const std::string& s, const std::string& part) { return s.find(part) != std::string::npos; }

}  // namespace

TEST_CASE("minimal config fills defaults") {
  const auto list = parse_config("[m]\nkind = penrose_check\n");
  REQUIRE(list.size() == 1);
  const auto echo = resolved_echo(list[0]);
  CHECK(contains(echo, "profile.kind = maxwellian\n"));
  CHECK(contains(echo, "profile.T = 1\n"));
  CHECK(contains(echo, "roots.M = none\n"));
  CHECK(contains(echo, "seed = 0\n"));
  // the echo is itself a valid config resolving to the same thing
  const auto again = parse_config(echo);
  CHECK(resolved_echo(again[0]) == echo);

  const auto inst = parse_config("[g]\nkind = instability\nprofile.T = 0.25\n");
  CHECK(inst[0].str("model.M") == "20");
  CHECK(inst[0].number("model.eps") == doctest::Approx(0.05));
  CHECK(inst[0].str("run.dt") == "0.0625");
  CHECK(inst[0].number("grid.vmax") > 8);

  // ill-prepared boxes carry 3 sup|V0'| past the profile tail, and at small eps the plasma-wave resonance
  const auto ill = parse_config("[a]\nkind = stable_ill_prepared\nmodel.eps = 0.1\n"
                                "[b]\nkind = stable_ill_prepared\nmodel.eps = 0.025\n");
  const double tail = default_vmax(Profile(Maxwellian{1, 0}));
  CHECK(ill[0].number("grid.vmax") == doctest::Approx(tail + 0.6 * std::numbers::pi));
  const double vphi = std::sqrt(1 + 3 * std::pow(2 * std::numbers::pi * 0.025, 2)) / (2 * std::numbers::pi * 0.025);
  CHECK(ill[1].number("grid.vmax") == doctest::Approx(vphi + 2 * std::sqrt(0.1 / 0.025) + 2));
}

TEST_CASE("strict validation") {
  CHECK(contains(config_error_of("[a]\nkind = penrose_check\nprofile.Tt = 2\n"), "unknown key 'profile.Tt'"));
  CHECK(contains(config_error_of("[a]\nkind = penrose_check\nprofile.kind = two_stream\nprofile.center = 1\n"),
                 "unknown key 'profile.center'"));
  CHECK(contains(config_error_of("[a]\nkind = penrose\n"), "unknown kind 'penrose'"));
  CHECK(contains(config_error_of("[a]\nprofile.T = 1\n"), "missing key 'kind'"));
  CHECK(contains(config_error_of("kind = penrose_check\n"), "outside of any"));
  CHECK(contains(config_error_of("[a]\nkind = penrose_check\nprofile.T = -1\n"), "key 'profile.T'"));
  CHECK(contains(config_error_of("[a]\nkind = instability\ngrid.Nx = 100\n"), "power of two"));
  CHECK(contains(config_error_of("[a]\nkind = penrose_check\n[a]\nkind = penrose_check\n"), "duplicate scenario"));
  CHECK(contains(config_error_of("[a]\nkind = penrose_check\nseed = 1\nseed = 2\n"), "given twice"));
  CHECK(contains(config_error_of("[a/b]\nkind = penrose_check\n"), "section name"));
  CHECK(contains(config_error_of("[a]\nkind = bgk_build\nboundary.plus = gaussian(T=1)\n"), "unknown boundary component"));
  CHECK(contains(config_error_of("[a]\nkind = ion_variant\nwell = -2*sin^2(pi*x)\n"), "ubar"));
  // instability runs need eps = 1/(k M)
  CHECK(contains(config_error_of("[a]\nkind = instability\nprofile.T = 0.25\nmodel.M = 20\nmodel.eps = 0.03\n"),
                 "rescaling parameter"));
  CHECK_NOTHROW(parse_config("[a]\nkind = instability\nprofile.T = 0.25\nmodel.M = 20\nmodel.eps = 0.025\n"));
  CHECK(contains(config_error_of("[a]\nkind = instability\nprofile.kind = maxwellian\n"), "stable"));
}

TEST_CASE("profile specs") {
  const auto p = profile_from_spec("two_stream(T=0.25, u=2)");
  CHECK(p.kind_name() == "two_stream");
  CHECK(p.mu(2.0) > p.mu(0.0));
  CHECK_THROWS_AS(profile_from_spec("two_stream(T=0.25, center=2)"), Error);
  CHECK_THROWS_AS(profile_from_spec("lorentzian(width=1)"), Error);
}

TEST_CASE("penrose scenario on the maxwellian") {
  const auto out = scratch("penrose");
  const auto list = parse_config("[mx]\nkind = penrose_check\nassert.classification = stable\n");
  const auto r = run_scenario(list[0], out.string());
  CHECK(r.ok());
  const auto rep = slurp(out / "mx" / "report.txt");
  CHECK(contains(rep, "classification = stable\n"));
  CHECK(contains(rep, "status = ok\n"));
  CHECK(slurp(out / "mx" / "roots.csv") == "n,re_lambda,im_lambda,residual,zeta_re,zeta_im\n");
  CHECK(slurp(out / "mx" / "config.resolved") == resolved_echo(list[0]));

  const auto bad = parse_config("[mx]\nkind = penrose_check\nassert.classification = unstable\n");
  const auto rb = run_scenario(bad[0], out.string());
  CHECK(rb.completed);
  CHECK(rb.failed == 1);
  CHECK(contains(slurp(out / "mx" / "report.txt"), "status = assertion_failed\n"));
  fs::remove_all(out);
}

TEST_CASE("bgk and ion scenarios") {
  const auto out = scratch("bgk");
  const auto list = parse_config(
      "[w]\nkind = bgk_build\ngrid.Nx = 16\ngrid.Nv = 64\nassert.neutrality = 1e-6\n"
      "[i]\nkind = ion_variant\ngrid.Nx = 16\ngrid.Nv = 64\nion.trials = 5\nassert.neutrality = 1e-6\n"
      "assert.ubar_bound = on\nassert.alpha_reduction = on\n");
  for (const auto& s : list) CHECK(run_scenario(s, out.string()).ok());
  const auto ft = slurp(out / "w" / "ftrapped.csv");
  CHECK(ft.rfind("u,f_T\n", 0) == 0);
  CHECK(std::count(ft.begin(), ft.end(), '\n') == 513);
  const auto wave = slurp(out / "w" / "wave.csv");
  CHECK(std::count(wave.begin(), wave.end(), '\n') == 1 + 16 * 64);
  CHECK(slurp(out / "i" / "neutrality.csv").rfind("x,rho_minus_1_minus_alpha_V\n", 0) == 0);
  fs::remove_all(out);
}

TEST_CASE("runtime errors are reported, not thrown") {
  const auto out = scratch("error");
  // a tabulated profile whose file vanished after validation
  const auto list = parse_config("[t]\nkind = penrose_check\n");
  Scenario s = list[0];
  s.values["profile.kind"] = "tabulated";
  s.values["profile.file"] = (out / "missing.csv").string();
  const auto r = run_scenario(s, out.string());
  CHECK_FALSE(r.completed);
  CHECK_FALSE(r.ok());
  CHECK(contains(slurp(out / "t" / "report.txt"), "status = error\n"));
  fs::remove_all(out);
}

TEST_CASE("outputs are byte-identical, sequential or parallel") {
  const std::string cfg =
      "[g]\nkind = instability\nprofile.T = 0.25\ngrid.Nx = 32\ngrid.Nv = 64\nrun.T_final = 40\n"
      "[w]\nkind = stable_well_prepared\ngrid.Nx = 16\ngrid.Nv = 64\nmodel.eps = 0.2\nrun.T_final = 0.5\n"
      "[o]\nkind = stable_ill_prepared\ngrid.Nx = 16\ngrid.Nv = 64\nmodel.eps = 0.2\nrun.T_final = 0.5\n"
      "[b]\nkind = bgk_build\ngrid.Nx = 16\ngrid.Nv = 64\nbgk.stationarity_steps = 3\n";
  const auto list = parse_config(cfg);
  const auto a = scratch("det_a"), b = scratch("det_b");
  RunOptions oa;
  oa.out_dir = a.string();
  RunOptions ob;
  ob.out_dir = b.string();
  ob.parallel = true;
  setenv("QNK_THREADS", "4", 1);
  CHECK(worker_count(true, list.size()) == 4);
  for (const auto& r : run_scenarios(list, oa)) CHECK_MESSAGE(r.ok(), r.name << ": " << r.error);
  for (const auto& r : run_scenarios(list, ob)) CHECK(r.ok());
  int files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    ++files;
    CHECK_MESSAGE(slurp(e.path()) == slurp(b / fs::relative(e.path(), a)), e.path().string());
  }
  CHECK(files >= 16);
  setenv("QNK_THREADS", "zero", 1);
  CHECK_THROWS_AS(worker_count(true, 3), Error);
  unsetenv("QNK_THREADS");
  CHECK(worker_count(false, 5) == 1);
  fs::remove_all(a);
  fs::remove_all(b);
}
