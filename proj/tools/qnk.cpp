// qnk command line: a thin shell over the C API.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "qnk/qnk.h"

namespace {

int config_failure() {
  std::cerr << "qnk: " << qnk_last_error() << "\n";
  return 2;
}

void print_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (in) std::cout << in.rdbuf();
}

// Runs the scenarios of `path` selected by mask; prints per-scenario status and, when asked, their outputs.
int run(const std::string& path, const std::string& out, bool parallel, unsigned mask, const std::vector<std::string>& show) {
  qnk_config* cfg = nullptr;
  if (qnk_config_load(path.c_str(), &cfg) != QNK_OK) return config_failure();
  qnk_results* res = nullptr;
  const int rc = qnk_run(cfg, out.c_str(), parallel ? QNK_RUN_PARALLEL : 0u, mask, &res);
  qnk_config_free(cfg);
  if (rc != QNK_OK) {
    std::cerr << "qnk: " << qnk_last_error() << "\n";
    return 2;
  }
  size_t n = 0;
  qnk_results_count(res, &n);
  if (n == 0) std::cerr << "qnk: no matching scenarios in " << path << "\n";
  int bad = 0;
  for (size_t i = 0; i < n; ++i) {
    const char *name, *dir, *err;
    int status;
    qnk_results_get(res, i, &name, &dir, &status, &err);
    const char* word = status == QNK_STATUS_OK ? "ok" : status == QNK_STATUS_ASSERTION_FAILED ? "assertion failed" : "error";
    std::cout << "[" << name << "] " << word << " -> " << dir << "\n";
    if (status == QNK_STATUS_ERROR) std::cout << "  " << err << "\n";
    for (const auto& f : show) {
      std::cout << "--- " << f << "\n";
      print_file(std::string(dir) + "/" + f);
    }
    bad += status != QNK_STATUS_OK;
  }
  qnk_results_free(res);
  return n == 0 ? 2 : bad ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"quasineutral kinetic lab"};
  app.require_subcommand(1);
  std::string config, out = "qnk_out";
  bool parallel = false;

  auto* run_cmd = app.add_subcommand("run", "run every scenario of a config file");
  run_cmd->add_option("config", config, "scenario config")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--out", out, "output directory")->capture_default_str();
  run_cmd->add_flag("--parallel", parallel, "run scenarios concurrently (QNK_THREADS caps workers)");

  auto* pen = app.add_subcommand("penrose", "run the penrose_check scenarios and print their reports and root tables");
  pen->add_option("config", config, "scenario config")->required()->check(CLI::ExistingFile);
  pen->add_option("--out", out, "output directory")->capture_default_str();

  auto* bgk = app.add_subcommand("bgk", "run the bgk_build and ion_variant scenarios");
  bgk->add_option("config", config, "scenario config")->required()->check(CLI::ExistingFile);
  bgk->add_option("--out", out, "output directory")->capture_default_str();

  auto* val = app.add_subcommand("validate", "print the fully resolved config");
  val->add_option("config", config, "scenario config")->required()->check(CLI::ExistingFile);

  auto* self = app.add_subcommand("selftest", "quadrature identity and oracle cross-checks");

  CLI11_PARSE(app, argc, argv);

  if (*run_cmd) return run(config, out, parallel, 0, {});
  if (*pen) return run(config, out, false, 1u << QNK_KIND_PENROSE_CHECK, {"report.txt", "roots.csv"});
  if (*bgk) return run(config, out, false, (1u << QNK_KIND_BGK_BUILD) | (1u << QNK_KIND_ION_VARIANT), {"report.txt"});
  if (*val) {
    qnk_config* cfg = nullptr;
    if (qnk_config_load(config.c_str(), &cfg) != QNK_OK) return config_failure();
    size_t n = 0;
    qnk_config_count(cfg, &n);
    for (size_t i = 0; i < n; ++i) {
      size_t need = 0;
      qnk_config_echo(cfg, i, nullptr, 0, &need);
      std::string buf(need, '\0');
      qnk_config_echo(cfg, i, buf.data(), buf.size(), nullptr);
      std::cout << (i ? "\n" : "") << buf.c_str();
    }
    qnk_config_free(cfg);
    return 0;
  }
  if (*self) {
    int passed = 0;
    size_t need = 0;
    std::string buf(1 << 16, '\0');
    int rc = qnk_selftest(&passed, buf.data(), buf.size(), &need);
    if (rc == QNK_E_BUFFER) {
      buf.assign(need, '\0');
      rc = qnk_selftest(&passed, buf.data(), buf.size(), nullptr);
    }
    if (rc != QNK_OK) {
      std::cerr << "qnk: " << qnk_last_error() << "\n";
      return 2;
    }
    std::cout << buf.c_str();
    return passed ? 0 : 1;
  }
  return 0;
}
