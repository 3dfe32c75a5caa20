// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end. Exit codes: 0 success, 2 configuration or usage,
// 3 data errors, 4 numerical failures.
#include <array>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cardioreg/cardioreg.h"

namespace {

struct Handle {
  cr_config* p = nullptr;
  ~Handle() { cr_config_free(p); }
};

int report(cr_status s, const std::string& context) {
  if (s == CR_OK) return 0;
  std::fprintf(stderr, "cardioreg: %s: %s error: %s\n", context.c_str(), cr_status_name(s), cr_last_error());
  return cr_exit_code(s);
}

std::string fetch(cr_status (*fn)(const cr_config*, char*, size_t, size_t*), const cr_config* c) {
  size_t n = 0;
  fn(c, nullptr, 0, &n);
  std::string s(n, '\0');
  fn(c, s.data(), s.size(), &n);
  s.resize(n ? n - 1 : 0);
  return s;
}

std::string out_dir(const cr_config* c, const std::string& out, const char* sub) {
  size_t n = 0;
  cr_resolve_out(c, out.c_str(), sub, nullptr, 0, &n);
  std::string s(n, '\0');
  cr_resolve_out(c, out.c_str(), sub, s.data(), s.size(), &n);
  s.resize(n ? n - 1 : 0);
  return s;
}

std::string get(const cr_config* c, const char* key) {
  size_t n = 0;
  cr_config_get(c, key, nullptr, 0, &n);
  std::string s(n, '\0');
  cr_config_get(c, key, s.data(), s.size(), &n);
  s.resize(n ? n - 1 : 0);
  return s;
}

// Rescales the train/val/test split sizes to `k` cases in the configured
// proportions; rounding remainders go to the test split.
std::array<long, 3> split_counts(const cr_config* c, long k) {
  const long tr = std::stol(get(c, "data.n_train")), va = std::stol(get(c, "data.n_val")),
             te = std::stol(get(c, "data.n_test"));
  const long total = tr + va + te;
  if (total <= 0) return {k, 0, 0};
  const long a = std::lround(static_cast<double>(k) * tr / total);
  const long b = std::min(k - a, std::lround(static_cast<double>(k) * va / total));
  return {a, b, k - a - b};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthetic cardiac phantoms, VAE-regularised registration and evaluation."};
  app.require_subcommand(0, 1);
  app.fallthrough();

  std::string config_path, out;
  long long seed = -1;
  int jobs = 0;
  bool print_config = false;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "INI configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "overrides experiment.seed")->check(CLI::NonNegativeNumber);
  app.add_option("--jobs", jobs, "overrides experiment.jobs")->check(CLI::PositiveNumber);
  app.add_option("--set", overrides, "section.key=value override (repeatable)");
  app.add_option("--out", out, "output directory (default runs/<name>/<stage>)");
  app.add_flag("--print-config", print_config, "print the resolved configuration and exit");

  std::string data, vae, model, split, regulariser;
  double alpha = -1, beta = -1;
  long cases = -1;
  int steps = 0, epochs = 0, latent = 0;
  std::vector<std::string> evals;

  auto* simulate = app.add_subcommand("simulate", "simulate and synthesise the phantom dataset");
  simulate->add_option("--cases", cases, "total number of cases, split in the configured proportions")
      ->check(CLI::NonNegativeNumber);
  simulate->add_option("--steps", steps, "overrides fem.n_steps (frames per cycle)")->check(CLI::PositiveNumber);
  auto* train_vae = app.add_subcommand("train-vae", "train the deformation VAE");
  train_vae->add_option("--data", data, "dataset directory")->required();
  train_vae->add_option("--epochs", epochs, "overrides vae.epochs")->check(CLI::PositiveNumber);
  train_vae->add_option("--beta", beta, "overrides vae.beta")->check(CLI::NonNegativeNumber);
  train_vae->add_option("--latent", latent, "overrides vae.latent_dim")->check(CLI::PositiveNumber);
  auto* train_reg = app.add_subcommand("train-reg", "train the registration network");
  train_reg->add_option("--data", data, "dataset directory")->required();
  train_reg->add_option("--vae", vae, "VAE checkpoint directory");
  train_reg->add_option("--alpha", alpha, "overrides reg.alpha")->check(CLI::NonNegativeNumber);
  train_reg->add_option("--reg,--regulariser", regulariser, "vae, l2 or none");
  auto* evaluate = app.add_subcommand("evaluate", "evaluate a model, the ground truth or the zero field");
  evaluate->add_option("--data", data, "dataset directory")->required();
  evaluate->add_option("--model", model, "checkpoint directory, 'gt' or 'zero'")->required();
  evaluate->add_option("--split", split, "overrides eval.split");
  auto* report_cmd = app.add_subcommand("report", "aggregate evaluation directories");
  report_cmd->add_option("evals", evals, "evaluation directories")->required()->check(CLI::ExistingDirectory);
  auto* sweep = app.add_subcommand("sweep-alpha", "train and evaluate one model per reg.alpha_grid value");
  sweep->add_option("--data", data, "dataset directory")->required();
  sweep->add_option("--vae", vae, "VAE checkpoint directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  Handle cfg;
  cr_status s = config_path.empty() ? cr_config_default(&cfg.p) : cr_config_load(config_path.c_str(), &cfg.p);
  if (s != CR_OK) return report(s, "config");
  auto set = [&](const std::string& key, const std::string& value) {
    const cr_status st = cr_config_set(cfg.p, key.c_str(), value.c_str());
    return st == CR_OK ? 0 : report(st, "--set " + key);
  };
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "cardioreg: --set expects section.key=value, got '%s'\n", o.c_str());
      return 2;
    }
    if (int rc = set(o.substr(0, eq), o.substr(eq + 1))) return rc;
  }
  if (seed >= 0)
    if (int rc = set("experiment.seed", std::to_string(seed))) return rc;
  if (jobs > 0)
    if (int rc = set("experiment.jobs", std::to_string(jobs))) return rc;
  if (alpha >= 0)
    if (int rc = set("reg.alpha", CLI::detail::to_string(alpha))) return rc;
  if (!regulariser.empty())
    if (int rc = set("reg.regulariser", regulariser)) return rc;
  if (cases >= 0) {
    const auto n = split_counts(cfg.p, cases);
    for (int k = 0; k < 3; ++k) {
      static const char* keys[] = {"data.n_train", "data.n_val", "data.n_test"};
      if (int rc = set(keys[k], std::to_string(n[k]))) return rc;
    }
  }
  if (steps > 0)
    if (int rc = set("fem.n_steps", std::to_string(steps))) return rc;
  if (epochs > 0)
    if (int rc = set("vae.epochs", std::to_string(epochs))) return rc;
  if (beta >= 0)
    if (int rc = set("vae.beta", CLI::detail::to_string(beta))) return rc;
  if (latent > 0)
    if (int rc = set("vae.latent_dim", std::to_string(latent))) return rc;
  if (!split.empty())
    if (int rc = set("eval.split", split)) return rc;
  if ((s = cr_config_validate(cfg.p)) != CR_OK) return report(s, "config");

  if (print_config) {
    std::fputs(fetch(cr_config_to_ini, cfg.p).c_str(), stdout);
    return 0;
  }
  if (app.get_subcommands().empty()) {
    std::fputs(app.help().c_str(), stderr);
    return 2;
  }

  std::string dest;
  if (simulate->parsed()) {
    dest = out_dir(cfg.p, out, "data");
    s = cr_simulate(cfg.p, dest.c_str());
  } else if (train_vae->parsed()) {
    dest = out_dir(cfg.p, out, "vae");
    s = cr_train_vae(cfg.p, data.c_str(), dest.c_str());
  } else if (train_reg->parsed()) {
    dest = out_dir(cfg.p, out, "reg");
    s = cr_train_reg(cfg.p, data.c_str(), vae.empty() ? nullptr : vae.c_str(), dest.c_str());
  } else if (evaluate->parsed()) {
    dest = out_dir(cfg.p, out, "eval");
    s = cr_evaluate(cfg.p, data.c_str(), model.c_str(), dest.c_str());
  } else if (report_cmd->parsed()) {
    dest = out_dir(cfg.p, out, "report");
    std::vector<const char*> dirs;
    for (const auto& e : evals) dirs.push_back(e.c_str());
    s = cr_report(cfg.p, dirs.data(), dirs.size(), dest.c_str());
  } else if (sweep->parsed()) {
    dest = out_dir(cfg.p, out, "sweep");
    s = cr_sweep_alpha(cfg.p, data.c_str(), vae.c_str(), dest.c_str());
  }
  const std::string verb = app.get_subcommands().front()->get_name();
  if (s != CR_OK) return report(s, verb);
  std::printf("%s: wrote %s\n", verb.c_str(), dest.c_str());
  return 0;
}
