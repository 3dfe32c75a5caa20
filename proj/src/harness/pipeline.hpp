// SPDX-License-Identifier: Apache-2.0
//
// Pipeline commands. Every command validates its configuration and inputs
// first, writes into a temporary sibling directory and renames it into place
// only on success, and records a manifest.json with content hashes.
#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "harness/config.hpp"
#include "phantom/phantom.hpp"

namespace cardioreg::harness {

namespace fs = std::filesystem;

inline constexpr const char* kDatasetMagic = "cardioreg-dataset";

struct Dataset {
  fs::path dir;
  Grid grid;
  int n_frames = 0;
  phantom::Splits splits;
  const std::vector<int>& split(const std::string& name) const;
};

/// Reads dataset.json; MissingInput when the directory is not a dataset.
Dataset open_dataset(const fs::path& dir);
std::vector<phantom::PhantomCase> load_cases(const Dataset& ds, const std::vector<int>& ids, int jobs = 1);

/// Gradient fields grad(gt[t]) masked by the frame-0 myocardium for the
/// frames selected by `stride`.
std::vector<GradientField> training_fields(const std::vector<phantom::PhantomCase>& cases, int stride);

/// Runs `fn(i)` for i in [0, n) on up to `jobs` threads; rethrows the first
/// failure.
void parallel_for(int n, int jobs, const std::function<void(int)>& fn);

/// Default output location below runs/<name>/ when `out` is empty.
fs::path resolve_out(const ExperimentConfig& cfg, const std::optional<fs::path>& out, const fs::path& sub);

/// Simulates and synthesises every case; writes case_<id>/, sim_<id>/ and
/// dataset.json.
void cmd_simulate(const ExperimentConfig& cfg, const fs::path& out);

void cmd_train_vae(const ExperimentConfig& cfg, const fs::path& data, const fs::path& out);

/// `vae` may be empty unless cfg.regulariser is "vae".
void cmd_train_reg(const ExperimentConfig& cfg, const fs::path& data, const std::optional<fs::path>& vae,
                   const fs::path& out);

struct EvalSource {
  enum class Kind { Model, GroundTruth, Zero } kind = Kind::Model;
  fs::path checkpoint;
  std::string label() const;
};
EvalSource eval_source_from_string(const std::string& spec);

/// Writes report.csv, summary.json, table.csv and plots/.
void cmd_evaluate(const ExperimentConfig& cfg, const fs::path& data, const EvalSource& src, const fs::path& out);

/// Aggregates evaluation directories into a method comparison table.
void cmd_report(const ExperimentConfig& cfg, const std::vector<fs::path>& evals, const fs::path& out);

/// Trains and evaluates (on eval.split) one VAE-regularised model per value
/// of reg.alpha_grid; writes sweep.csv and a plot.
void cmd_sweep_alpha(const ExperimentConfig& cfg, const fs::path& data, const fs::path& vae, const fs::path& out);

}  // namespace cardioreg::harness
