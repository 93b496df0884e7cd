#include "qnk/qnk.h"

#include <cstring>
#include <new>
#include <string>
#include <vector>

#include "qnk/dispersion.hpp"
#include "qnk/error.hpp"
#include "qnk/scenario.hpp"
#include "qnk/selftest.hpp"

struct qnk_config {
  std::vector<qnk::cli::Scenario> list;
};

struct qnk_results {
  std::vector<qnk::cli::ScenarioResult> list;
};

struct qnk_profile {
  qnk::Profile p;
};

namespace {

thread_local std::string g_error;

int set_error(int code, const std::string& msg) {
  g_error = msg;
  return code;
}

template <class F>
int guarded(F&& body) {
  try {
    return body();
  } catch (const qnk::Error& e) {
    return set_error(int(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return set_error(QNK_E_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return set_error(QNK_E_INTERNAL, e.what());
  } catch (...) {
    return set_error(QNK_E_INTERNAL, "unknown exception");
  }
}

int copy_out(const std::string& s, char* buf, size_t len, size_t* needed) {
  if (needed) *needed = s.size() + 1;
  // size query
  if (!buf) return needed ? QNK_OK : set_error(QNK_E_INVALID_ARGUMENT, "null buffer");
  if (len == 0) return set_error(QNK_E_BUFFER, "buffer too small: need " + std::to_string(s.size() + 1) + " bytes");
  const size_t n = std::min(len - 1, s.size());
  std::memcpy(buf, s.data(), n);
  buf[n] = '\0';
  if (n < s.size()) return set_error(QNK_E_BUFFER, "buffer too small: need " + std::to_string(s.size() + 1) + " bytes");
  return QNK_OK;
}

#define QNK_REQUIRE(cond, what) \
  if (!(cond)) return set_error(QNK_E_INVALID_ARGUMENT, what)

}  // namespace

extern "C" {

const char* qnk_last_error(void) { return g_error.c_str(); }

const char* qnk_version(void) { return "1.0.0"; }

int qnk_config_load(const char* path, qnk_config** out) {
  QNK_REQUIRE(path && out, "qnk_config_load: null argument");
  *out = nullptr;
  return guarded([&] {
    *out = new qnk_config{qnk::cli::validate_config(path)};
    return QNK_OK;
  });
}

int qnk_config_parse(const char* text, qnk_config** out) {
  QNK_REQUIRE(text && out, "qnk_config_parse: null argument");
  *out = nullptr;
  return guarded([&] {
    *out = new qnk_config{qnk::cli::parse_config(text)};
    return QNK_OK;
  });
}

void qnk_config_free(qnk_config* cfg) { delete cfg; }

int qnk_config_count(const qnk_config* cfg, size_t* n) {
  QNK_REQUIRE(cfg && n, "qnk_config_count: null argument");
  *n = cfg->list.size();
  return QNK_OK;
}

int qnk_config_name(const qnk_config* cfg, size_t i, char* buf, size_t len, size_t* needed) {
  QNK_REQUIRE(cfg && i < cfg->list.size(), "qnk_config_name: bad handle or index");
  return copy_out(cfg->list[i].name, buf, len, needed);
}

int qnk_config_kind(const qnk_config* cfg, size_t i, int* kind) {
  QNK_REQUIRE(cfg && kind && i < cfg->list.size(), "qnk_config_kind: bad handle or index");
  *kind = int(cfg->list[i].kind);
  return QNK_OK;
}

int qnk_config_echo(const qnk_config* cfg, size_t i, char* buf, size_t len, size_t* needed) {
  QNK_REQUIRE(cfg && i < cfg->list.size(), "qnk_config_echo: bad handle or index");
  return guarded([&] { return copy_out(qnk::cli::resolved_echo(cfg->list[i]), buf, len, needed); });
}

int qnk_run(const qnk_config* cfg, const char* out_dir, unsigned flags, unsigned kind_mask, qnk_results** out) {
  QNK_REQUIRE(cfg && out_dir && out, "qnk_run: null argument");
  QNK_REQUIRE(kind_mask < (1u << 6), "qnk_run: unknown kind bits in mask");
  *out = nullptr;
  return guarded([&] {
    qnk::cli::RunOptions opt;
    opt.out_dir = out_dir;
    opt.parallel = (flags & QNK_RUN_PARALLEL) != 0;
    for (int k = 0; k < 6; ++k)
      if (kind_mask & (1u << k)) opt.only.push_back(qnk::cli::ScenarioKind(k));
    *out = new qnk_results{qnk::cli::run_scenarios(cfg->list, opt)};
    return QNK_OK;
  });
}

void qnk_results_free(qnk_results* r) { delete r; }

int qnk_results_count(const qnk_results* r, size_t* n) {
  QNK_REQUIRE(r && n, "qnk_results_count: null argument");
  *n = r->list.size();
  return QNK_OK;
}

int qnk_results_get(const qnk_results* r, size_t i, const char** name, const char** dir, int* status, const char** error) {
  QNK_REQUIRE(r && i < r->list.size(), "qnk_results_get: bad handle or index");
  const auto& x = r->list[i];
  if (name) *name = x.name.c_str();
  if (dir) *dir = x.dir.c_str();
  if (status) *status = !x.completed ? QNK_STATUS_ERROR : x.failed ? QNK_STATUS_ASSERTION_FAILED : QNK_STATUS_OK;
  if (error) *error = x.error.c_str();
  return QNK_OK;
}

int qnk_profile_create(const char* spec, qnk_profile** out) {
  QNK_REQUIRE(spec && out, "qnk_profile_create: null argument");
  *out = nullptr;
  return guarded([&] {
    *out = new qnk_profile{qnk::cli::profile_from_spec(spec)};
    return QNK_OK;
  });
}

void qnk_profile_free(qnk_profile* p) { delete p; }

int qnk_profile_eval(const qnk_profile* p, double v, double* mu, double* dmu) {
  QNK_REQUIRE(p, "qnk_profile_eval: null profile");
  return guarded([&] {
    if (mu) *mu = p->p.mu(v);
    if (dmu) *dmu = p->p.dmu(v);
    return QNK_OK;
  });
}

int qnk_penrose(const qnk_profile* p, double alpha, int* unstable, size_t* minima) {
  QNK_REQUIRE(p, "qnk_penrose: null profile");
  return guarded([&] {
    const auto r = alpha == 0 ? qnk::check_penrose(p->p) : qnk::check_alpha_penrose(p->p, alpha);
    if (unstable) *unstable = r.unstable ? 1 : 0;
    if (minima) *minima = r.minima.size();
    return QNK_OK;
  });
}

int qnk_penrose_integral(const qnk_profile* p, double vbar, double* value) {
  QNK_REQUIRE(p && value, "qnk_penrose_integral: null argument");
  return guarded([&] {
    *value = qnk::penrose_integral(p->p, vbar);
    return QNK_OK;
  });
}

int qnk_dispersion(const qnk_profile* p, int n, double lambda_re, double lambda_im, double M, double* d_re, double* d_im) {
  QNK_REQUIRE(p && d_re && d_im, "qnk_dispersion: null argument");
  QNK_REQUIRE(n != 0 && M > 0, "qnk_dispersion: need n != 0 and M > 0");
  return guarded([&] {
    const auto d = qnk::eval_dispersion(p->p, n, {lambda_re, lambda_im}, M);
    *d_re = d.real();
    *d_im = d.imag();
    return QNK_OK;
  });
}

int qnk_selftest(int* passed, char* buf, size_t len, size_t* needed) {
  QNK_REQUIRE(passed, "qnk_selftest: null argument");
  return guarded([&] {
    std::string text;
    bool all = true;
    for (const auto& l : qnk::run_selftest()) {
      all = all && l.pass;
      text += (l.pass ? "PASS " : "FAIL ") + l.name + ": " + l.detail + "\n";
    }
    *passed = all ? 1 : 0;
    return copy_out(text, buf, len, needed);
  });
}

}  // extern "C"
