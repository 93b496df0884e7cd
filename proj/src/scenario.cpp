#include "qnk/scenario.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "qnk/bgk.hpp"
#include "qnk/diagnostics.hpp"
#include "qnk/dispersion.hpp"
#include "qnk/error.hpp"
#include "qnk/profile.hpp"
#include "qnk/solver.hpp"

namespace fs = std::filesystem;

namespace qnk::cli {

namespace {

std::string num(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

[[noreturn]] void config_error(const std::string& where, const std::string& what) { fail(Errc::config, where + ": " + what); }

bool parse_double(const std::string& s, double& out) {
  const char* b = s.data();
  const char* e = b + s.size();
  auto r = std::from_chars(b, e, out);
  return r.ec == std::errc() && r.ptr == e && std::isfinite(out);
}

bool parse_long(const std::string& s, long& out) {
  const char* b = s.data();
  const char* e = b + s.size();
  auto r = std::from_chars(b, e, out);
  return r.ec == std::errc() && r.ptr == e;
}

const std::vector<std::pair<ScenarioKind, std::string>> kKinds = {
    {ScenarioKind::penrose_check, "penrose_check"},
    {ScenarioKind::instability, "instability"},
    {ScenarioKind::stable_well_prepared, "stable_well_prepared"},
    {ScenarioKind::stable_ill_prepared, "stable_ill_prepared"},
    {ScenarioKind::bgk_build, "bgk_build"},
    {ScenarioKind::ion_variant, "ion_variant"},
};

enum class Ty { real, pos_real, nonneg_real, integer, pos_int, pow2, boolean, text, choice, threshold, modes };

struct KeyDef {
  std::string key;
  std::string def;
  Ty type;
  bool allow_auto = false;
  std::vector<std::string> choices = {};
  bool allow_none = false;  // "none" switches the feature off
};

std::vector<KeyDef> profile_keys(const std::string& pk) {
  std::vector<KeyDef> k;
  if (pk == "maxwellian") {
    k = {{"profile.T", "1", Ty::pos_real}, {"profile.u", "0", Ty::real}};
  } else if (pk == "two_stream") {
    k = {{"profile.T", "1", Ty::pos_real},
         {"profile.u", "2", Ty::real},
         {"profile.w_plus", "0.5", Ty::nonneg_real},
         {"profile.w_minus", "0.5", Ty::nonneg_real}};
  } else if (pk == "bump_on_tail") {
    k = {{"profile.T", "1", Ty::pos_real},
         {"profile.amp", "0.1", Ty::nonneg_real},
         {"profile.center", "4", Ty::real},
         {"profile.width", "0.5", Ty::pos_real}};
  } else if (pk == "compact_bump") {
    k = {{"profile.a", "-1", Ty::real}, {"profile.b", "1", Ty::real}, {"profile.edge_order", "0", Ty::integer}};
  } else if (pk == "power_law") {
    k = {{"profile.width", "1", Ty::pos_real}, {"profile.power", "4", Ty::pos_real}};
  } else if (pk == "tabulated") {
    k = {{"profile.file", "", Ty::text}};
  }
  return k;
}

const std::vector<std::string> kProfileKinds = {"maxwellian", "two_stream", "bump_on_tail", "compact_bump", "power_law",
                                                "tabulated"};

bool uses_profile(ScenarioKind k) { return k != ScenarioKind::bgk_build; }

std::vector<KeyDef> kind_keys(ScenarioKind k) {
  const KeyDef off{"", "off", Ty::threshold};
  auto thr = [&](const std::string& key) {
    KeyDef d = off;
    d.key = key;
    return d;
  };
  auto onoff = [](const std::string& key) { return KeyDef{key, "off", Ty::choice, false, {"on", "off"}}; };
  std::vector<KeyDef> grid_keys = {{"grid.Nx", "64", Ty::pow2}, {"grid.Nv", "256", Ty::pow2}, {"grid.vmax", "auto", Ty::pos_real, true}};
  std::vector<KeyDef> run_keys = {{"run.T_final", "5", Ty::pos_real},
                                  {"run.dt", "auto", Ty::pos_real, true},
                                  {"run.stride", "auto", Ty::pos_int, true},
                                  {"run.snapshot", "false", Ty::boolean}};
  std::vector<KeyDef> boundary = {{"boundary.plus", "half_maxwellian(T=1, mass=1)", Ty::text},
                                  {"boundary.minus", "none", Ty::text}};
  std::vector<KeyDef> out;
  auto add = [&](const std::vector<KeyDef>& v) { out.insert(out.end(), v.begin(), v.end()); };
  switch (k) {
    case ScenarioKind::penrose_check:
      add({{"model.alpha", "0", Ty::nonneg_real},
           {"roots.M", "auto", Ty::pos_real, true, {}, true},
           {"roots.modes", "auto", Ty::modes, true, {}, true},
           {"roots.re_max", "2", Ty::pos_real},
           {"roots.im_max", "2", Ty::pos_real},
           {"roots.scan", "64", Ty::pos_int},
           {"assert.classification", "off", Ty::choice, false, {"off", "stable", "unstable"}}});
      break;
    case ScenarioKind::instability:
      grid_keys[0].def = "128";
      run_keys[0].def = "60";
      add(grid_keys);
      add(run_keys);
      add({{"model.M", "auto", Ty::pos_real, true},
           {"model.eps", "auto", Ty::pos_real, true},
           {"model.n", "auto", Ty::pos_int, true},
           {"model.delta", "1e-5", Ty::pos_real},
           {"model.truncate", "true", Ty::boolean},
           {"roots.re_max", "2", Ty::pos_real},
           {"roots.im_max", "2", Ty::pos_real},
           {"roots.scan", "64", Ty::pos_int},
           thr("assert.growth_rel_err"),
           thr("assert.proxy_rel_err")});
      break;
    case ScenarioKind::stable_well_prepared:
      add(grid_keys);
      add(run_keys);
      add({{"grid.Lx", "1", Ty::pos_real},
           {"model.type", "electron", Ty::choice, false, {"electron", "ion"}},
           {"model.eps", "0.05", Ty::pos_real},
           {"model.alpha", "0", Ty::nonneg_real},
           {"init.shift", "0.1", Ty::real},
           {"init.mode", "1", Ty::pos_int},
           {"casimir.s_max", "auto", Ty::pos_real, true},
           thr("assert.L_drift")});
      break;
    case ScenarioKind::stable_ill_prepared:
      run_keys[0].def = "3";
      add(grid_keys);
      add(run_keys);
      add({{"grid.Lx", "1", Ty::pos_real},
           {"model.eps", "0.05", Ty::pos_real},
           {"model.V0", "0.1*cos(2*pi*x)", Ty::text},
           {"model.vbar", "auto", Ty::real, true},
           {"casimir.s_max", "auto", Ty::pos_real, true},
           onoff("assert.envelope")});
      break;
    case ScenarioKind::bgk_build:
      grid_keys[0].def = "128";
      add(grid_keys);
      add(boundary);
      add({{"well", "-0.3*sin^2(pi*x)", Ty::text},
           {"bgk.u_ref", "4", Ty::pos_real},
           {"bgk.points", "201", Ty::pos_int},
           {"bgk.stationarity_steps", "0", Ty::integer},
           {"run.dt", "auto", Ty::pos_real, true},
           thr("assert.neutrality"),
           thr("assert.stationarity")});
      break;
    case ScenarioKind::ion_variant:
      grid_keys[0].def = "128";
      add(grid_keys);
      boundary[0].def = "half_maxwellian(T=1, mass=0.5)";
      boundary[1].def = "half_maxwellian(T=1, mass=0.5)";
      add(boundary);
      add({{"well", "-0.05*sin^2(pi*x)", Ty::text},
           {"model.alpha", "1", Ty::pos_real},
           {"bgk.points", "201", Ty::pos_int},
           {"ion.trials", "20", Ty::integer},
           thr("assert.neutrality"),
           onoff("assert.ubar_bound"),
           onoff("assert.alpha_reduction")});
      break;
  }
  out.push_back({"seed", "0", Ty::integer});
  return out;
}

// --- boundary-side grammar: none | comp (+ comp)*, comp = name(key=value, ...)

struct Component {
  std::string name;
  std::map<std::string, std::string> args;
};

std::vector<Component> parse_side_text(const std::string& text, const std::string& where) {
  const std::string t = trim(text);
  std::vector<Component> out;
  if (t == "none" || t.empty()) return out;
  std::size_t pos = 0;
  while (pos < t.size()) {
    const auto open = t.find('(', pos);
    const auto close = t.find(')', pos);
    if (open == std::string::npos || close == std::string::npos || close < open)
      config_error(where, "expected name(key=value, ...) in '" + t + "'");
    Component c;
    c.name = trim(t.substr(pos, open - pos));
    std::stringstream args(t.substr(open + 1, close - open - 1));
    std::string item;
    while (std::getline(args, item, ',')) {
      const auto eq = item.find('=');
      if (eq == std::string::npos) config_error(where, "argument '" + trim(item) + "' is not key=value");
      const std::string key = trim(item.substr(0, eq));
      if (c.args.count(key)) config_error(where, "argument '" + key + "' given twice");
      c.args[key] = trim(item.substr(eq + 1));
    }
    out.push_back(std::move(c));
    pos = t.find_first_not_of(" \t", close + 1);
    if (pos == std::string::npos) break;
    if (t[pos] != '+') config_error(where, "components must be joined by '+'");
    pos = t.find_first_not_of(" \t", pos + 1);
    if (pos == std::string::npos) config_error(where, "dangling '+'");
  }
  return out;
}

bgk::SideComponent make_component(const Component& c, const std::string& where, const fs::path& base) {
  auto get = [&](const std::string& key, double def, bool positive) {
    auto it = c.args.find(key);
    if (it == c.args.end()) return def;
    double v;
    if (!parse_double(it->second, v) || (positive && !(v > 0)))
      config_error(where, c.name + ": argument " + key + " = '" + it->second + "' is not a valid number");
    return v;
  };
  auto check_keys = [&](std::set<std::string> allowed) {
    for (const auto& [k, v] : c.args)
      if (!allowed.count(k)) config_error(where, c.name + ": unknown argument '" + k + "'");
  };
  if (c.name == "half_maxwellian") {
    check_keys({"T", "mass"});
    return bgk::HalfMaxwellian{get("T", 1, true), get("mass", 1, false)};
  }
  if (c.name == "power_law") {
    check_keys({"width", "power", "cut", "mass"});
    return bgk::TruncatedPowerLaw{get("width", 1, true), get("power", 4, true), get("cut", 10, true), get("mass", 1, false)};
  }
  if (c.name == "tabulated") {
    check_keys({"file"});
    auto it = c.args.find("file");
    if (it == c.args.end()) config_error(where, "tabulated: missing file=");
    fs::path p = it->second;
    if (p.is_relative()) p = base / p;
    std::ifstream in(p);
    if (!in) fail(Errc::io, where + ": cannot open " + p.string());
    bgk::TabulatedSide side;
    std::string line;
    std::getline(in, line);
    if (trim(line) != "s,f") fail(Errc::io, where + ": " + p.string() + " must start with header s,f");
    while (std::getline(in, line)) {
      if (trim(line).empty()) continue;
      const auto comma = line.find(',');
      double s, f;
      if (comma == std::string::npos || !parse_double(trim(line.substr(0, comma)), s) ||
          !parse_double(trim(line.substr(comma + 1)), f))
        fail(Errc::io, where + ": malformed row '" + line + "' in " + p.string());
      side.s.push_back(s);
      side.f.push_back(f);
    }
    return side;
  }
  config_error(where, "unknown boundary component '" + c.name + "' (half_maxwellian, power_law, tabulated)");
}

std::vector<bgk::SideComponent> make_side(const std::string& text, const std::string& where, const fs::path& base) {
  std::vector<bgk::SideComponent> out;
  for (const auto& c : parse_side_text(text, where)) out.push_back(make_component(c, where, base));
  return out;
}

Profile make_profile(const Scenario& s) {
  const std::string& pk = s.str("profile.kind");
  if (pk == "maxwellian") return Profile(Maxwellian{s.number("profile.T"), s.number("profile.u")});
  if (pk == "two_stream")
    return Profile(TwoStream{s.number("profile.T"), s.number("profile.u"), s.number("profile.w_plus"),
                             s.number("profile.w_minus")});
  if (pk == "bump_on_tail")
    return Profile(BumpOnTail{s.number("profile.T"), s.number("profile.amp"), s.number("profile.center"),
                              s.number("profile.width")});
  if (pk == "compact_bump")
    return Profile(CompactBump{s.number("profile.a"), s.number("profile.b"), int(s.integer("profile.edge_order"))});
  if (pk == "power_law") return Profile(PowerLaw{s.number("profile.width"), s.number("profile.power")});
  return Profile::from_csv(s.str("profile.file"));
}

bgk::BoundaryData make_boundary(const Scenario& s) {
  const std::string where = "[" + s.name + "] boundary";
  return bgk::BoundaryData(make_side(s.str("boundary.plus"), where + ".plus", {}),
                           make_side(s.str("boundary.minus"), where + ".minus", {}));
}

std::vector<int> parse_modes(const std::string& text, const std::string& where) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    long n;
    if (!parse_long(trim(item), n) || n == 0) config_error(where, "mode list entries must be nonzero integers");
    out.push_back(int(n));
  }
  if (out.empty()) config_error(where, "empty mode list");
  return out;
}

void check_value(const KeyDef& d, const std::string& value, const std::string& where) {
  if ((d.allow_auto && value == "auto") || (d.allow_none && value == "none")) return;
  double x;
  long n;
  auto bad = [&](const std::string& what) { config_error(where, "'" + value + "' is not " + what); };
  switch (d.type) {
    case Ty::real:
      if (!parse_double(value, x)) bad("a number");
      break;
    case Ty::pos_real:
      if (!parse_double(value, x) || !(x > 0)) bad("a positive number");
      break;
    case Ty::nonneg_real:
      if (!parse_double(value, x) || x < 0) bad("a nonnegative number");
      break;
    case Ty::integer:
      if (!parse_long(value, n) || n < 0) bad("a nonnegative integer");
      break;
    case Ty::pos_int:
      if (!parse_long(value, n) || n <= 0) bad("a positive integer");
      break;
    case Ty::pow2:
      if (!parse_long(value, n) || n <= 0 || n > (1L << 20) || !is_pow2(int(n))) bad("a power of two");
      break;
    case Ty::boolean:
      if (value != "true" && value != "false") bad("true or false");
      break;
    case Ty::text:
      break;
    case Ty::choice:
      if (std::find(d.choices.begin(), d.choices.end(), value) == d.choices.end()) {
        std::string list;
        for (const auto& c : d.choices) list += (list.empty() ? "" : ", ") + c;
        bad("one of " + list);
      }
      break;
    case Ty::threshold:
      if (value != "off" && (!parse_double(value, x) || !(x > 0))) bad("a positive threshold or off");
      break;
    case Ty::modes:
      parse_modes(value, where);
      break;
  }
}

double boundary_vmax(const bgk::BoundaryData& bd, const bgk::PotentialWell& w) {
  double fmax = 0;
  const double top = std::min(bd.support(), 200.0);
  for (double s = 0; s <= top; s += 1e-3) fmax = std::max(fmax, bd.F(s));
  double edge = 0;
  for (double s = top; s >= 0; s -= 1e-3)
    if (bd.F(s) >= 1e-12 * fmax) {
      edge = s;
      break;
    }
  return std::ceil((edge + std::sqrt(-2 * w.V_min()) + 1e-3) * 100) / 100;
}

// Fill in autos that need no simulation; checks that cross keys.
void resolve(Scenario& s, const std::string& where, const fs::path& base) {
  auto& v = s.values;
  if (uses_profile(s.kind) && v["profile.kind"] == "tabulated") {
    if (v["profile.file"].empty()) config_error(where, "profile.file is required for profile.kind = tabulated");
    fs::path p = v["profile.file"];
    if (p.is_relative()) v["profile.file"] = (base / p).lexically_normal().string();
  }
  std::optional<Profile> prof;
  if (uses_profile(s.kind)) prof.emplace(make_profile(s));

  if (s.kind == ScenarioKind::bgk_build || s.kind == ScenarioKind::ion_variant) {
    for (const char* side : {"boundary.plus", "boundary.minus"}) {
      // relative table paths are taken from the config's directory
      auto comps = parse_side_text(v[side], where + " key '" + side + "'");
      std::string rebuilt;
      for (auto& c : comps) {
        if (c.args.count("file")) {
          fs::path p = c.args["file"];
          if (p.is_relative()) c.args["file"] = (base / p).lexically_normal().string();
        }
        std::string args;
        for (const auto& [k, val] : c.args) args += (args.empty() ? "" : ", ") + k + "=" + val;
        rebuilt += (rebuilt.empty() ? "" : " + ") + c.name + "(" + args + ")";
      }
      v[side] = rebuilt.empty() ? "none" : rebuilt;
    }
    const auto bd = make_boundary(s);
    const auto well = bgk::PotentialWell::parse(v["well"]);
    if (v["grid.vmax"] == "auto") v["grid.vmax"] = num(boundary_vmax(bd, well));
    if (s.kind == ScenarioKind::bgk_build && v["run.dt"] == "auto") v["run.dt"] = num(1.0 / 16);
  }

  if (s.kind == ScenarioKind::penrose_check) {
    const bool stable = !check_penrose(*prof).unstable;
    if (v["roots.M"] == "auto") v["roots.M"] = (stable || s.number("model.alpha") > 0) ? "none" : num(default_length(*prof));
    if (v["roots.modes"] == "auto") {
      if (v["roots.M"] == "none") {
        v["roots.modes"] = "none";
      } else {
        const double M = s.number("roots.M"), mc = critical_length(*prof);
        std::string list = "1";
        for (int n = 2; M / n > mc; ++n) list += "," + std::to_string(n);
        v["roots.modes"] = list;
      }
    }
  }

  if (s.kind == ScenarioKind::instability) {
    if (v["model.M"] == "auto") v["model.M"] = num(default_length(*prof));
    const double M = s.number("model.M");
    if (v["model.eps"] == "auto") v["model.eps"] = num(1 / M);
    const double eps = s.number("model.eps");
    const double k = std::round(1 / (eps * M));
    if (k < 1 || std::abs(eps * k * M - 1) > 1e-9)
      config_error(where, "rescaling parameter: model.eps = " + v["model.eps"] + " is not of the form 1/(k M) with M = " +
                              v["model.M"] + " and integer k >= 1");
    if (v["grid.vmax"] == "auto") v["grid.vmax"] = num(default_vmax(*prof));
    if (v["run.dt"] == "auto") v["run.dt"] = num(default_dt(Model::rescaled()));
    if (v["run.stride"] == "auto") v["run.stride"] = "1";
  }

  if (s.kind == ScenarioKind::stable_well_prepared || s.kind == ScenarioKind::stable_ill_prepared) {
    const double eps = s.number("model.eps");
    Model m = Model::electron(eps);
    if (s.kind == ScenarioKind::stable_well_prepared && v["model.type"] == "ion") {
      if (!(s.number("model.alpha") > 0)) config_error(where, "model.alpha must be positive for model.type = ion");
      m = Model::ion(eps, s.number("model.alpha"));
    }
    double vmax = default_vmax(*prof);
    if (s.kind == ScenarioKind::stable_ill_prepared) {
      const auto V0 = FourierPotential::parse(v["model.V0"], s.number("grid.Lx"));
      // the oscillating field kicks velocities by up to 2 sup|V0'| and the filter shifts by another sup|V0'|
      vmax += 3 * V0.sup_norm(1);
      // electrons resonant with the initial plasma oscillation (v ~ omega/k, trapping width 2 sqrt(sup|V0| / eps))
      int kmin = 0;
      for (const auto& md : V0.modes) kmin = kmin ? std::min(kmin, md.k) : md.k;
      if (kmin > 0) {
        const double k = 2 * std::numbers::pi * kmin / V0.L, m1 = prof->moment1();
        const double var = std::max(0.0, prof->moment2() - m1 * m1);
        const double vphi = std::sqrt(1 + 3 * k * k * eps * eps * var) / (eps * k);
        vmax = std::max(vmax, std::abs(m1) + vphi + 2 * std::sqrt(V0.sup_norm(0) / eps) + 2 * std::sqrt(var));
      }
    }
    if (v["grid.vmax"] == "auto") v["grid.vmax"] = num(vmax);
    if (v["run.dt"] == "auto") v["run.dt"] = num(default_dt(m));
    if (v["run.stride"] == "auto") v["run.stride"] = std::to_string(std::max(1L, std::lround(1 / (16 * s.number("run.dt")))));
    if (v["casimir.s_max"] == "auto") v["casimir.s_max"] = num(10 * prof->mu(prof->moment1()));
    if (s.kind == ScenarioKind::stable_ill_prepared) {
      if (v["model.vbar"] == "auto") v["model.vbar"] = num(prof->moment1());
      const auto V0 = FourierPotential::parse(v["model.V0"], s.number("grid.Lx"));
      if (!(eps * V0.sup_norm(2) < 1))
        config_error(where, "model.V0: initial density 1 - eps V0'' must stay positive (eps sup|V0''| = " +
                                num(eps * V0.sup_norm(2)) + ")");
    }
  }

  if (s.kind == ScenarioKind::ion_variant) {
    const auto bd = make_boundary(s);
    const auto well = bgk::PotentialWell::parse(v["well"]);
    const double ub = bgk::ubar(bd, s.number("model.alpha"));
    if (!(-2 * well.V_min() < ub * ub))
      config_error(where, "well: ion model needs -2 V_min < ubar^2 (V_min = " + num(well.V_min()) + ", ubar = " + num(ub) + ")");
  }
}

// --- outputs

class Report {
 public:
  void kv(const std::string& k, double x) { os_ << k << " = " << num(x) << "\n"; }
  void kv(const std::string& k, const std::string& x) { os_ << k << " = " << x << "\n"; }
  void kv(const std::string& k, long x) { os_ << k << " = " << x << "\n"; }
  void kv(const std::string& k, int x) { os_ << k << " = " << x << "\n"; }
  void kv(const std::string& k, bool x) { os_ << k << " = " << (x ? "true" : "false") << "\n"; }
  void note(const std::string& line) { os_ << "# " << line << "\n"; }
  void declare(const std::string& name, bool pass, const std::string& detail) {
    ++count_;
    if (!pass) ++failed_;
    os_ << "assert." << name << " = " << (pass ? "PASS" : "FAIL") << " (" << detail << ")\n";
  }
  // measured <= threshold
  void bound(const std::string& name, double measured, std::optional<double> thr) {
    if (thr) declare(name, measured <= *thr, num(measured) + " <= " + num(*thr));
  }
  std::string text() const { return os_.str(); }
  int count() const { return count_; }
  int failed() const { return failed_; }

 private:
  std::ostringstream os_;
  int count_ = 0, failed_ = 0;
};

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) fail(Errc::io, "cannot write " + p.string());
  out << text;
  if (!out) fail(Errc::io, "write failed: " + p.string());
}

std::string csv_row(std::initializer_list<double> xs) {
  std::string s;
  for (double x : xs) s += (s.empty() ? "" : ",") + num(x);
  return s + "\n";
}

std::string roots_csv(const std::vector<DispersionRoot>& roots) {
  std::string s = "n,re_lambda,im_lambda,residual,zeta_re,zeta_im\n";
  for (const auto& r : roots)
    s += std::to_string(r.n) + "," +
         csv_row({r.lambda.real(), r.lambda.imag(), r.residual, r.zeta.real(), r.zeta.imag()});
  return s;
}

void report_penrose(Report& rep, const PenroseReport& pr, const std::string& prefix) {
  rep.kv(prefix + "classification", pr.unstable ? std::string("unstable") : std::string("stable"));
  rep.kv(prefix + "minima", int(pr.minima.size()));
  for (std::size_t k = 0; k < pr.minima.size(); ++k) {
    const auto& m = pr.minima[k];
    const std::string p = prefix + "minimum." + std::to_string(k) + ".";
    rep.kv(p + "vbar", m.vbar);
    rep.kv(p + "integral", m.integral);
    rep.kv(p + "satisfies", m.satisfies);
    rep.kv(p + "flat", m.flat);
  }
  rep.kv(prefix + "delta_condition.holds", pr.delta_condition.holds);
  rep.kv(prefix + "delta_condition.sup", pr.delta_condition.sup);
  rep.kv(prefix + "delta_prime.holds_heuristic", pr.delta_prime.holds_heuristic);
}

struct Series {
  std::string diag = std::string(kDiagHeader) + "\n";
  std::vector<DiagnosticsRecord> rows;
  void add(const DiagnosticsRecord& r) {
    rows.push_back(r);
    std::ostringstream os;
    write_diag_row(os, r);
    diag += os.str();
  }
};

struct Ctx {
  const Scenario& s;
  fs::path dir;
  Report& rep;
};

void maybe_snapshot(const Ctx& c, const Simulation& sim) {
  if (c.s.flag("run.snapshot")) write_snapshot((c.dir / "final.snap").string(), sim.state(), c.s.name);
}

int steps_for(double T, double dt) { return int(std::lround(T / dt)); }

void run_penrose(const Ctx& c) {
  const auto& s = c.s;
  const Profile p = make_profile(s);
  const double alpha = s.number("model.alpha");
  const auto pr = alpha > 0 ? check_alpha_penrose(p, alpha) : check_penrose(p);
  c.rep.kv("profile", p.kind_name());
  c.rep.kv("alpha", alpha);
  report_penrose(c.rep, pr, "");
  std::vector<DispersionRoot> roots;
  if (s.str("roots.M") != "none" && s.str("roots.modes") != "none") {
    const double M = s.number("roots.M");
    c.rep.kv("critical_length", critical_length(p));
    c.rep.kv("roots.M", M);
    RootSearchOptions opt;
    opt.scan = int(s.integer("roots.scan"));
    auto res = find_unstable_roots(p, M, parse_modes(s.str("roots.modes"), s.name), {s.number("roots.re_max"), s.number("roots.im_max")}, opt);
    roots = res.roots;
    for (const auto& w : res.warnings) c.rep.note("root search: " + w);
    c.rep.kv("roots.count", int(roots.size()));
    for (const auto& r : roots)
      if (r.leading) {
        c.rep.kv("lambda1.n", r.n);
        c.rep.kv("lambda1.re", r.lambda.real());
        c.rep.kv("lambda1.im", r.lambda.imag());
      }
  } else {
    c.rep.kv("roots.count", 0);
  }
  write_file(c.dir / "roots.csv", roots_csv(roots));
  write_file(c.dir / "diag.csv", std::string(kDiagHeader) + "\n");
  const std::string want = s.str("assert.classification");
  if (want != "off") {
    const std::string got = pr.unstable ? "unstable" : "stable";
    c.rep.declare("classification", got == want, got + " == " + want);
  }
}

void run_instability(const Ctx& c) {
  const auto& s = c.s;
  const Profile p = make_profile(s);
  const double M = s.number("model.M"), eps = s.number("model.eps"), delta = s.number("model.delta");
  const auto maps = rescaling_maps(eps, M);
  c.rep.kv("profile", p.kind_name());
  c.rep.kv("critical_length", critical_length(p));
  c.rep.kv("M", M);
  c.rep.kv("eps", eps);
  c.rep.kv("k", maps.k);

  std::vector<int> modes;
  if (s.str("model.n") != "auto") {
    modes = {int(s.integer("model.n"))};
  } else {
    const double mc = critical_length(p);
    for (int n = 1; n == 1 || M / n > mc; ++n) modes.push_back(n);
  }
  RootSearchOptions ro;
  ro.scan = int(s.integer("roots.scan"));
  const auto res = find_unstable_roots(p, M, modes, {s.number("roots.re_max"), s.number("roots.im_max")}, ro);
  write_file(c.dir / "roots.csv", roots_csv(res.roots));
  for (const auto& w : res.warnings) c.rep.note("root search: " + w);
  if (res.roots.empty()) fail(Errc::domain, "no unstable root of D in the search box");
  const DispersionRoot root = *std::max_element(res.roots.begin(), res.roots.end(), [](const auto& a, const auto& b) {
    return a.lambda.real() < b.lambda.real();
  });
  const double rate = root.lambda.real();
  c.rep.kv("lambda1.n", root.n);
  c.rep.kv("lambda1.re", rate);
  c.rep.kv("lambda1.im", root.lambda.imag());
  c.rep.kv("lambda1.residual", root.residual);
  c.rep.kv("lambda1.re_original_time", rate / eps);

  const PhaseGrid g{M, int(s.integer("grid.Nx")), s.number("grid.vmax"), int(s.integer("grid.Nv"))};
  const auto mode = build_eigenmode(p, root, g);
  const auto h2 = h2_xaverage_coefficient(mode);
  c.rep.kv("h2.coef", h2.coef);
  const auto init = make_perturbed_initial(p, mode, delta, s.flag("model.truncate"));
  c.rep.kv("delta", delta);
  c.rep.kv("init.truncated", init.truncated);
  c.rep.kv("init.truncation_l1", init.truncation_l1);
  c.rep.kv("init.w_mu_prime", init.w_mu_prime);
  c.rep.kv("init.min_value", init.min_value);

  Simulation sim(init.field, Model::rescaled(), s.number("run.dt"));
  DiagnosticsContext ctx;
  ctx.mu = &p;
  ctx.ell = &mode.ell;
  Series ser;
  std::string norms = "t,rho_Hm1\n";
  const int steps = steps_for(s.number("run.T_final"), sim.dt()), stride = int(s.integer("run.stride"));
  auto record = [&] {
    ser.add(record_diagnostics(sim, ctx));
    norms += csv_row({sim.state().t, rho_Hminus1(sim.fields().rho, g)});
  };
  record();
  for (int k = 1; k <= steps; ++k) {
    sim.step();
    if (k % stride == 0 || k == steps) record();
  }
  write_file(c.dir / "diag.csv", ser.diag);
  write_file(c.dir / "norms.csv", norms);
  maybe_snapshot(c, sim);

  std::vector<double> t, rho, wp[3];
  for (const auto& r : ser.rows) {
    t.push_back(r.t);
    rho.push_back(r.rho_L1);
    for (int k = 0; k < 3; ++k) wp[k].push_back(r.wproxy[k]);
  }
  c.rep.kv("clipped_mass", sim.clipped_mass_total());
  c.rep.kv("renormalizations", sim.renormalizations());
  c.rep.kv("rho_L1.final", rho.back());
  c.rep.kv("rho_L1.final_original", maps.l1_original(rho.back()));

  const auto fr = growth_fit(t, rho);
  const double rel = std::abs(fr.rate - rate) / rate;
  c.rep.kv("fit.rho_L1.rate", fr.rate);
  c.rep.kv("fit.rho_L1.r_squared", fr.r_squared);
  c.rep.kv("fit.rho_L1.t0", fr.t0);
  c.rep.kv("fit.rho_L1.t1", fr.t1);
  c.rep.kv("fit.rho_L1.rel_err", rel);
  double proxy_rel = 0;
  for (int k = 0; k < 3; ++k) {
    const std::string p = "fit.wproxy_r" + std::to_string(k) + ".";
    const auto fw = growth_fit(t, wp[k]);
    const double e = std::abs(fw.rate - 2 * rate) / (2 * rate);
    if (k == 0) proxy_rel = e;
    c.rep.kv(p + "rate", fw.rate);
    c.rep.kv(p + "r_squared", fw.r_squared);
    c.rep.kv(p + "t0", fw.t0);
    c.rep.kv(p + "t1", fw.t1);
    c.rep.kv(p + "rel_err", e);
  }
  c.rep.bound("growth_rel_err", rel, s.threshold("assert.growth_rel_err"));
  c.rep.bound("proxy_rel_err", proxy_rel, s.threshold("assert.proxy_rel_err"));
}

struct StableSetup {
  Profile p;
  SStableProfile ss;
  CasimirQ Q;
};

StableSetup stable_setup(const Scenario& s) {
  Profile p = make_profile(s);
  auto ss = build_s_stable(p);
  auto Q = build_casimir(ss, s.number("casimir.s_max"));
  return {p, ss, Q};
}

void run_well_prepared(const Ctx& c) {
  const auto& s = c.s;
  const auto st = stable_setup(s);
  const double eps = s.number("model.eps");
  const Model m = s.str("model.type") == "ion" ? Model::ion(eps, s.number("model.alpha")) : Model::electron(eps);
  const PhaseGrid g{s.number("grid.Lx"), int(s.integer("grid.Nx")), s.number("grid.vmax"), int(s.integer("grid.Nv"))};
  const double a = s.number("init.shift");
  const double kx = 2 * std::numbers::pi * double(s.integer("init.mode")) / g.Lx;
  DistributionField f{g, std::vector<double>(g.size()), 0};
  for (int i = 0; i < g.Nx; ++i)
    for (int j = 0; j < g.Nv; ++j) f.f[g.idx(i, j)] = st.p.mu(g.v(j) - a * std::sin(kx * g.x(i)));
  const double mass = mean_density(f);
  for (double& x : f.f) x /= mass;

  Simulation sim(f, m, s.number("run.dt"));
  const FourierPotential none{g.Lx, {}};
  DiagnosticsContext ctx;
  ctx.mu = &st.p;
  ctx.sstable = &st.ss;
  ctx.Q = &st.Q;
  ctx.V0 = &none;
  ctx.vbar = st.ss.vbar;
  Series ser;
  const int steps = steps_for(s.number("run.T_final"), sim.dt()), stride = int(s.integer("run.stride"));
  ser.add(record_diagnostics(sim, ctx));
  for (int k = 1; k <= steps; ++k) {
    sim.step();
    if (k % stride == 0 || k == steps) ser.add(record_diagnostics(sim, ctx));
  }
  write_file(c.dir / "diag.csv", ser.diag);
  maybe_snapshot(c, sim);

  const double L0 = ser.rows.front().L_eps;
  double drift = 0, unorm = 0;
  for (const auto& r : ser.rows) {
    drift = std::max(drift, std::abs(r.L_eps - L0));
    unorm = std::max(unorm, r.osc_residual);
  }
  const double scale = std::max(L0, st.ss.T);
  c.rep.kv("model", model_name(m));
  c.rep.kv("vbar", st.ss.vbar);
  c.rep.kv("kinetic_scale", st.ss.T);
  c.rep.kv("L_eps.initial", L0);
  c.rep.kv("L_eps.final", ser.rows.back().L_eps);
  c.rep.kv("L_eps.max_abs_drift", drift);
  c.rep.kv("L_eps.rel_drift", drift / scale);
  c.rep.kv("L_eps.rel_drift_vs_initial", L0 > 0 ? drift / L0 : std::numeric_limits<double>::quiet_NaN());
  c.rep.kv("oscillation.max_U_L2", unorm);
  c.rep.kv("clipped_mass", sim.clipped_mass_total());
  c.rep.kv("renormalizations", sim.renormalizations());
  c.rep.bound("L_drift", drift / scale, s.threshold("assert.L_drift"));
}

void run_ill_prepared(const Ctx& c) {
  const auto& s = c.s;
  const auto st = stable_setup(s);
  const double eps = s.number("model.eps");
  const PhaseGrid g{s.number("grid.Lx"), int(s.integer("grid.Nx")), s.number("grid.vmax"), int(s.integer("grid.Nv"))};
  const auto V0 = FourierPotential::parse(s.str("model.V0"), g.Lx);
  const double vbar = s.number("model.vbar");
  // rho_0 = 1 - eps V0'' makes eps V_eps(0) = V0 for the electron Poisson law
  auto f = sample_homogeneous(st.p, g);
  for (int i = 0; i < g.Nx; ++i) {
    const double w = 1 - eps * V0.eval(g.x(i), 2);
    for (int j = 0; j < g.Nv; ++j) f.f[g.idx(i, j)] *= w;
  }
  Simulation sim(f, Model::electron(eps), s.number("run.dt"));
  DiagnosticsContext ctx;
  ctx.mu = &st.p;
  ctx.sstable = &st.ss;
  ctx.Q = &st.Q;
  ctx.V0 = &V0;
  ctx.vbar = vbar;
  Series ser;
  const int steps = steps_for(s.number("run.T_final"), sim.dt()), stride = int(s.integer("run.stride"));
  ser.add(record_diagnostics(sim, ctx));
  const double E0 = ser.rows.front().kinetic + ser.rows.front().pot_field;
  const double Q0 = q_moment(sim.state(), st.Q);
  for (int k = 1; k <= steps; ++k) {
    sim.step();
    if (k % stride == 0 || k == steps) ser.add(record_diagnostics(sim, ctx));
  }
  write_file(c.dir / "diag.csv", ser.diag);
  maybe_snapshot(c, sim);

  const double growth = 2 * V0.sup_norm(2), K = ill_prepared_K(V0);
  const double LO0 = ser.rows.front().LO_eps, w = eps * (1 + E0 + Q0);
  double sup = 0, chat = 0;
  for (const auto& r : ser.rows) {
    sup = std::max(sup, r.LO_eps);
    chat = std::max(chat, (r.LO_eps * std::exp(-growth * r.t) - LO0) / w);
  }
  c.rep.kv("eps", eps);
  c.rep.kv("vbar", vbar);
  c.rep.kv("V0.sup_d2", V0.sup_norm(2));
  c.rep.kv("V0.sup_d3", V0.sup_norm(3));
  c.rep.kv("energy.initial", E0);
  c.rep.kv("Q_moment.initial", Q0);
  c.rep.kv("K", K);
  c.rep.kv("LO_eps.initial", LO0);
  c.rep.kv("LO_eps.sup", sup);
  c.rep.kv("C_fit", chat);
  // three checkpoints: the samples nearest T/3, 2T/3, T
  bool env = true;
  const double T = ser.rows.back().t;
  for (int q = 1; q <= 3; ++q) {
    const auto it = std::min_element(ser.rows.begin(), ser.rows.end(), [&](const auto& a, const auto& b) {
      return std::abs(a.t - q * T / 3) < std::abs(b.t - q * T / 3);
    });
    const double bound = std::exp(growth * it->t) * (LO0 + K * w);
    const std::string p = "checkpoint." + std::to_string(q) + ".";
    c.rep.kv(p + "t", it->t);
    c.rep.kv(p + "LO_eps", it->LO_eps);
    c.rep.kv(p + "bound_K", bound);
    env = env && it->LO_eps <= bound;
  }
  c.rep.kv("envelope_K.holds", env);
  c.rep.kv("clipped_mass", sim.clipped_mass_total());
  c.rep.kv("renormalizations", sim.renormalizations());
  if (s.str("assert.envelope") == "on") c.rep.declare("envelope", env, "L^O_eps below the K envelope at three checkpoints");
}

void write_wave_outputs(const Ctx& c, const bgk::BGKWave& w, const bgk::NeutralityReport& nr) {
  std::string ft = "u,f_T\n";
  for (std::size_t k = 0; k < w.fT.u_nodes().size(); ++k) ft += csv_row({w.fT.u_nodes()[k], w.fT.f_nodes()[k]});
  write_file(c.dir / "ftrapped.csv", ft);
  std::string wave = "x,v,f\n";
  wave.reserve(w.f.size() * 60);
  for (int i = 0; i < w.grid.Nx; ++i)
    for (int j = 0; j < w.grid.Nv; ++j) wave += csv_row({w.grid.x(i), w.grid.v(j), w.f[w.grid.idx(i, j)]});
  write_file(c.dir / "wave.csv", wave);
  std::string ne = w.model == bgk::WaveModel::ion ? "x,rho_minus_1_minus_alpha_V\n" : "x,rho_minus_1\n";
  for (std::size_t k = 0; k < nr.x.size(); ++k) ne += csv_row({nr.x[k], nr.deviation[k]});
  write_file(c.dir / "neutrality.csv", ne);
}

void run_bgk(const Ctx& c) {
  const auto& s = c.s;
  const auto bd = make_boundary(s);
  const auto well = bgk::PotentialWell::parse(s.str("well"));
  const PhaseGrid g{1.0, int(s.integer("grid.Nx")), s.number("grid.vmax"), int(s.integer("grid.Nv"))};
  const auto w = bgk::assemble_wave(bd, well, g, bgk::WaveModel::quasineutral, 0.0, s.number("bgk.u_ref"));
  const auto nr = bgk::verify_neutrality(w, int(s.integer("bgk.points")));
  write_wave_outputs(c, w, nr);
  c.rep.kv("well", well.source());
  c.rep.kv("V_min", well.V_min());
  c.rep.kv("boundary.total_mass", bd.total_mass());
  c.rep.kv("f0_plus.at_0", bd.plus(0));
  c.rep.kv("f0_minus.at_0", bd.minus(0));
  c.rep.kv("f_T.at_1e-6", bgk::trapped_density(bd, 1e-6));
  c.rep.kv("u_ref", w.fT.u_ref());
  c.rep.kv("neutrality.max_abs", nr.max_dev);
  c.rep.bound("neutrality", nr.max_dev, s.threshold("assert.neutrality"));

  Series ser;
  const long steps = s.integer("bgk.stationarity_steps");
  if (steps > 0) {
    std::vector<double> E(g.Nx);
    for (int i = 0; i < g.Nx; ++i) E[i] = -well.dV(g.x(i));
    Simulation sim(DistributionField{g, w.f, 0}, Model::electron(1.0), s.number("run.dt"), E);
    DiagnosticsContext ctx;
    ser.add(record_diagnostics(sim, ctx));
    for (long k = 0; k < steps; ++k) sim.step();
    ser.add(record_diagnostics(sim, ctx));
    double l1 = 0;
    for (std::size_t k = 0; k < w.f.size(); ++k) l1 += std::abs(sim.state().f[k] - w.f[k]);
    l1 *= g.dx() * g.dv();
    c.rep.kv("stationarity.steps", steps);
    c.rep.kv("stationarity.dt", sim.dt());
    c.rep.kv("stationarity.l1_change", l1);
    c.rep.kv("stationarity.clipped_mass", sim.clipped_mass_total());
    c.rep.bound("stationarity", l1, s.threshold("assert.stationarity"));
  }
  write_file(c.dir / "diag.csv", ser.diag);
}

bool same_report(const PenroseReport& a, const PenroseReport& b) {
  if (a.unstable != b.unstable || a.minima.size() != b.minima.size()) return false;
  for (std::size_t k = 0; k < a.minima.size(); ++k) {
    const auto &x = a.minima[k], &y = b.minima[k];
    if (x.vbar != y.vbar || x.integral != y.integral || x.satisfies != y.satisfies || x.flat != y.flat) return false;
  }
  return a.delta_condition.holds == b.delta_condition.holds && a.delta_condition.sup == b.delta_condition.sup &&
         a.delta_prime.w_integrals == b.delta_prime.w_integrals && a.delta_prime.holds_heuristic == b.delta_prime.holds_heuristic;
}

void run_ion(const Ctx& c) {
  const auto& s = c.s;
  const double alpha = s.number("model.alpha");
  const auto bd = make_boundary(s);
  const auto well = bgk::PotentialWell::parse(s.str("well"));
  const PhaseGrid g{1.0, int(s.integer("grid.Nx")), s.number("grid.vmax"), int(s.integer("grid.Nv"))};
  const auto w = bgk::assemble_wave(bd, well, g, bgk::WaveModel::ion, alpha);
  const auto nr = bgk::verify_neutrality(w, int(s.integer("bgk.points")));
  write_wave_outputs(c, w, nr);
  write_file(c.dir / "diag.csv", std::string(kDiagHeader) + "\n");
  const double bound = std::sqrt(2 / alpha);
  c.rep.kv("alpha", alpha);
  c.rep.kv("well", well.source());
  c.rep.kv("V_min", well.V_min());
  c.rep.kv("ubar", w.ubar);
  c.rep.kv("ubar_bound", bound);
  c.rep.kv("neutrality.max_abs", nr.max_dev);
  c.rep.bound("neutrality", nr.max_dev, s.threshold("assert.neutrality"));

  // randomized admissible boundary data: two-sided half-Maxwellian mixtures of unit total mass
  std::mt19937_64 rng(std::uint64_t(s.integer("seed")));
  std::uniform_real_distribution<double> T(0.2, 3.0), W(0.0, 1.0);
  const long trials = s.integer("ion.trials");
  bool all = w.ubar <= bound;
  double worst = w.ubar / bound;
  for (long k = 0; k < trials; ++k) {
    const double wt = W(rng), Tp = T(rng), Tm = T(rng);
    const bgk::BoundaryData r({bgk::HalfMaxwellian{Tp, wt}}, {bgk::HalfMaxwellian{Tm, 1 - wt}});
    const double ub = bgk::ubar(r, alpha);
    all = all && ub <= bound;
    worst = std::max(worst, ub / bound);
  }
  c.rep.kv("ion.trials", trials);
  c.rep.kv("ion.max_ubar_over_bound", worst);
  if (s.str("assert.ubar_bound") == "on") c.rep.declare("ubar_bound", all, "ubar <= sqrt(2/alpha) on all trials");

  const Profile p = make_profile(s);
  const auto r0 = check_penrose(p), ra = check_alpha_penrose(p, 0.0), rx = check_alpha_penrose(p, alpha);
  const bool same = same_report(r0, ra);
  c.rep.kv("profile", p.kind_name());
  c.rep.kv("alpha_zero_reduction", same ? std::string("identical") : std::string("different"));
  report_penrose(c.rep, rx, "alpha_penrose.");
  if (s.str("assert.alpha_reduction") == "on") c.rep.declare("alpha_reduction", same, "alpha = 0 report equals the Penrose report");
}

}  // namespace

std::string kind_name(ScenarioKind k) {
  for (const auto& [kk, n] : kKinds)
    if (kk == k) return n;
  return "?";
}

const std::string& Scenario::str(const std::string& key) const {
  auto it = values.find(key);
  if (it == values.end()) fail(Errc::config, "[" + name + "] no key '" + key + "'");
  return it->second;
}

double Scenario::number(const std::string& key) const {
  double x;
  if (!parse_double(str(key), x)) fail(Errc::config, "[" + name + "] key '" + key + "' is not numeric: " + str(key));
  return x;
}

long Scenario::integer(const std::string& key) const {
  long n;
  if (!parse_long(str(key), n)) fail(Errc::config, "[" + name + "] key '" + key + "' is not an integer: " + str(key));
  return n;
}

bool Scenario::flag(const std::string& key) const { return str(key) == "true"; }

std::optional<double> Scenario::threshold(const std::string& key) const {
  if (str(key) == "off") return std::nullopt;
  return number(key);
}

std::vector<Scenario> parse_config(const std::string& text, const std::string& origin) {
  const fs::path base = origin == "<config>" ? fs::current_path() : fs::absolute(fs::path(origin)).parent_path();
  struct Raw {
    std::string name;
    int line;
    std::vector<std::pair<std::string, std::string>> kv;
  };
  std::vector<Raw> raws;
  std::istringstream in(text);
  std::string line;
  int ln = 0;
  while (std::getline(in, line)) {
    ++ln;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(ln);
    if (line.front() == '[') {
      if (line.back() != ']') config_error(where, "malformed section header '" + line + "'");
      const std::string name = trim(line.substr(1, line.size() - 2));
      if (name.empty() || name.find_first_not_of("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_-.") !=
                              std::string::npos || name == "." || name == "..")
        config_error(where, "section name '" + name + "' must use letters, digits, '_', '-' or '.'");
      for (const auto& r : raws)
        if (r.name == name) config_error(where, "duplicate scenario name [" + name + "]");
      raws.push_back({name, ln, {}});
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) config_error(where, "expected key = value, got '" + line + "'");
    if (raws.empty()) config_error(where, "key outside of any [scenario] section");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key.empty()) config_error(where, "empty key");
    for (const auto& [k, v] : raws.back().kv)
      if (k == key) config_error(where, "[" + raws.back().name + "] key '" + key + "' given twice");
    raws.back().kv.emplace_back(key, value);
  }
  if (raws.empty()) fail(Errc::config, origin + ": no scenarios");

  std::vector<Scenario> out;
  for (const auto& r : raws) {
    const std::string where = origin + ": [" + r.name + "]";
    std::map<std::string, std::string> given(r.kv.begin(), r.kv.end());
    Scenario s;
    s.name = r.name;
    auto kit = given.find("kind");
    if (kit == given.end()) config_error(where, "missing key 'kind'");
    bool found = false;
    for (const auto& [k, n] : kKinds)
      if (n == kit->second) {
        s.kind = k;
        found = true;
      }
    if (!found) config_error(where, "unknown kind '" + kit->second + "'");
    auto defs = kind_keys(s.kind);
    if (uses_profile(s.kind)) {
      const std::string def_pk = s.kind == ScenarioKind::instability ? "two_stream" : "maxwellian";
      const std::string pk = given.count("profile.kind") ? given["profile.kind"] : def_pk;
      defs.push_back({"profile.kind", def_pk, Ty::choice, false, kProfileKinds});
      check_value(defs.back(), pk, where + " key 'profile.kind'");
      const auto pks = profile_keys(pk);
      defs.insert(defs.end(), pks.begin(), pks.end());
    }
    for (const auto& [k, v] : given) {
      if (k == "kind") continue;
      const bool known = std::any_of(defs.begin(), defs.end(), [&](const KeyDef& d) { return d.key == k; });
      if (!known) config_error(where, "unknown key '" + k + "' for kind " + kit->second);
    }
    s.values["kind"] = kit->second;
    for (const auto& d : defs) {
      const auto it = given.find(d.key);
      const std::string value = it == given.end() ? d.def : it->second;
      check_value(d, value, where + " key '" + d.key + "'");
      s.values[d.key] = value;
    }
    if (uses_profile(s.kind) && s.values["profile.kind"] == "two_stream" && s.number("profile.w_plus") + s.number("profile.w_minus") <= 0)
      config_error(where, "profile weights must not both vanish");
    if (s.kind == ScenarioKind::instability && given.count("model.eps") && !given.count("model.M"))
      config_error(where, "model.eps requires an explicit model.M (eps must be 1/(k M))");
    try {
      resolve(s, where, base);
    } catch (const Error& e) {
      if (e.code() == Errc::config) throw;
      config_error(where, e.what());
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<Scenario> validate_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io, "cannot open config " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

std::string resolved_echo(const Scenario& s) {
  std::string out = "[" + s.name + "]\n";
  out += "kind = " + s.values.at("kind") + "\n";
  for (const auto& [k, v] : s.values)
    if (k != "kind") out += k + " = " + v + "\n";
  return out;
}

ScenarioResult run_scenario(const Scenario& s, const std::string& out_root) {
  ScenarioResult res;
  res.name = s.name;
  const fs::path dir = fs::path(out_root) / s.name;
  res.dir = dir.string();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    res.error = "cannot create " + dir.string() + ": " + ec.message();
    return res;
  }
  Report rep;
  rep.kv("scenario", s.name);
  rep.kv("kind", kind_name(s.kind));
  try {
    write_file(dir / "config.resolved", resolved_echo(s));
    const Ctx c{s, dir, rep};
    switch (s.kind) {
      case ScenarioKind::penrose_check: run_penrose(c); break;
      case ScenarioKind::instability: run_instability(c); break;
      case ScenarioKind::stable_well_prepared: run_well_prepared(c); break;
      case ScenarioKind::stable_ill_prepared: run_ill_prepared(c); break;
      case ScenarioKind::bgk_build: run_bgk(c); break;
      case ScenarioKind::ion_variant: run_ion(c); break;
    }
    res.completed = true;
  } catch (const Error& e) {
    res.error = std::string("error ") + std::to_string(int(e.code())) + ": " + e.what();
  } catch (const std::exception& e) {
    res.error = std::string("error: ") + e.what();
  }
  res.assertions = rep.count();
  res.failed = rep.failed();
  std::string text = rep.text();
  if (!res.completed) text += "error = " + res.error + "\n";
  text += "assertions = " + std::to_string(res.assertions) + "\n";
  text += "assertions_failed = " + std::to_string(res.failed) + "\n";
  text += std::string("status = ") + (!res.completed ? "error" : res.failed ? "assertion_failed" : "ok") + "\n";
  try {
    write_file(dir / "report.txt", text);
  } catch (const Error& e) {
    res.completed = false;
    res.error = e.what();
  }
  return res;
}

Profile profile_from_spec(const std::string& spec) {
  const std::string where = "profile spec '" + spec + "'";
  const auto comps = parse_side_text(spec, where);
  if (comps.size() != 1) config_error(where, "expected exactly one kind(key=value, ...)");
  const auto& c = comps.front();
  if (std::find(kProfileKinds.begin(), kProfileKinds.end(), c.name) == kProfileKinds.end())
    config_error(where, "unknown profile kind '" + c.name + "'");
  Scenario s;
  s.name = "profile";
  s.values["profile.kind"] = c.name;
  const auto defs = profile_keys(c.name);
  for (const auto& [k, v] : c.args)
    if (std::none_of(defs.begin(), defs.end(), [&](const KeyDef& d) { return d.key == "profile." + k; }))
      config_error(where, "unknown key '" + k + "' for " + c.name);
  for (const auto& d : defs) {
    const auto it = c.args.find(d.key.substr(8));
    const std::string value = it == c.args.end() ? d.def : it->second;
    check_value(d, value, where + " key '" + d.key.substr(8) + "'");
    s.values[d.key] = value;
  }
  return make_profile(s);
}

int worker_count(bool parallel, std::size_t scenarios) {
  if (!parallel || scenarios <= 1) return 1;
  long cap = long(std::max(1u, std::thread::hardware_concurrency()));
  if (const char* env = std::getenv("QNK_THREADS")) {
    long n;
    if (!parse_long(trim(env), n) || n < 1) fail(Errc::config, std::string("QNK_THREADS must be a positive integer, got '") + env + "'");
    cap = n;
  }
  return int(std::min<long>(cap, long(scenarios)));
}

std::vector<ScenarioResult> run_scenarios(const std::vector<Scenario>& list, const RunOptions& opt) {
  std::vector<const Scenario*> todo;
  for (const auto& s : list)
    if (opt.only.empty() || std::find(opt.only.begin(), opt.only.end(), s.kind) != opt.only.end()) todo.push_back(&s);
  std::vector<ScenarioResult> out(todo.size());
  const int workers = worker_count(opt.parallel, todo.size());
  if (workers <= 1) {
    for (std::size_t k = 0; k < todo.size(); ++k) out[k] = run_scenario(*todo[k], opt.out_dir);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t k = next++; k < todo.size(); k = next++) out[k] = run_scenario(*todo[k], opt.out_dir);
    });
  for (auto& t : pool) t.join();
  return out;
}

}  // namespace qnk::cli
