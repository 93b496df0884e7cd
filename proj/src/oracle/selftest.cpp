#include "qnk/selftest.hpp"

#include <cmath>
#include <cstdio>

#include "qnk/bgk.hpp"
#include "qnk/dispersion.hpp"
#include "qnk/oracle.hpp"

namespace qnk {

namespace {
std::string fmt(const char* f, double a, double b) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}
}  // namespace

std::vector<SelftestLine> run_selftest() {
  std::vector<SelftestLine> out;
  auto guard = [&](const std::string& name, auto&& body) {
    try {
      body();
    } catch (const std::exception& e) {
      out.push_back({name, false, e.what()});
    }
  };

  guard("quad_identity", [&] {
    double worst = 0;
    for (auto [a, b] : {std::pair{0.1, 1.0}, {0.5, 2.0}, {1e-3, 0.3}})
      worst = std::max(worst, std::abs(bgk::quad_identity(a, b) - std::numbers::pi / 2));
    out.push_back({"quad_identity", bgk::quad_identity_selftest() && worst <= 1e-8, fmt("max error %.3g (tol %.0e)", worst, 1e-8)});
  });

  const Profile ts(TwoStream{0.25, 2.0, 0.5, 0.5});
  guard("penrose_oracle", [&] {
    const double I = penrose_integral(ts, 0.0), ref = oracle::penrose_fixed_grid(ts, 0.0, 2000);
    out.push_back({"penrose_oracle", std::abs(I - ref) <= 1e-8, fmt("I = %.12g, oracle %.12g", I, ref)});
  });

  guard("G_oracle", [&] {
    const cplx z(0.3, 0.7);
    const double e = std::abs(eval_G(ts, z) - oracle::G_fixed_grid(ts, z, 400));
    out.push_back({"G_oracle", e <= 1e-10, fmt("|G - oracle| = %.3g (tol %.0e)", e, 1e-10)});
  });

  guard("root_count", [&] {
    const double M = default_length(ts);
    const auto res = find_unstable_roots(ts, M, {1});
    const int w = oracle::winding_count(ts, M, 1, 0.01, 2.0, -2.0, 2.0);
    out.push_back({"root_count", int(res.roots.size()) == w && w >= 1,
                   fmt("roots %.0f, winding %.0f", double(res.roots.size()), double(w))});
  });

  guard("abel_oracle", [&] {
    const bgk::BoundaryData bd({bgk::HalfMaxwellian{1.0, 1.0}});
    std::vector<double> u;
    for (int k = 1; k <= 20; ++k) u.push_back(0.1 * k);
    const auto ref = bgk::abel_invert_oracle(bd, u);
    double worst = 0;
    for (std::size_t k = 0; k < u.size(); ++k) worst = std::max(worst, std::abs(bgk::trapped_density(bd, u[k]) - ref[k]));
    out.push_back({"abel_oracle", worst <= 1e-4, fmt("sup |f_T - oracle| = %.3g (tol %.0e)", worst, 1e-4)});
  });
  return out;
}

}  // namespace qnk
