// SPDX-License-Identifier: Apache-2.0
//
// Experiment configuration: one INI file, one section per module.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fem/simulate.hpp"
#include "regnet/regnet.hpp"
#include "vae/vae.hpp"

namespace cardioreg::harness {

struct ExperimentConfig {
  // [experiment]
  std::string name = "default";
  std::uint64_t seed = 0;
  int jobs = 1;
  std::string runs_dir = "runs";
  // [data]
  int rows = 96;
  int cols = 96;
  double spacing_mm = 1.8;
  int n_train = 40;
  int n_val = 10;
  int n_test = 20;
  // [fem]
  double mu_kpa = 36.75;
  double kappa_ratio = 1000.0;
  int n_steps = 50;
  double elem_size_px = 1.5;
  double rel_tol = 1e-8;
  int max_newton_iters = 30;
  int max_halvings = 12;
  double area_rel_tol = 1e-4;
  // [vae]
  int latent_dim = 32;
  double beta = 1e-4;
  std::vector<int> vae_channels{32, 64, 128, 256};
  int vae_epochs = 200;
  int vae_batch_size = 16;
  double vae_lr = 1e-4;
  int vae_frame_stride = 1;
  // [reg]
  double alpha = 0.001;
  std::string regulariser = "vae";
  double reg_lr = 1e-4;
  int reg_epochs = 300;
  int reg_batch_size = 8;
  std::vector<int> reg_channels{16, 32, 32, 32, 32};
  int reg_frame_stride = 1;
  long reg_max_steps = 0;
  std::vector<double> alpha_grid{0.0001, 0.0005, 0.001, 0.005};
  // [eval]
  std::string eval_split = "test";
  int eval_frame_stride = 1;
  bool plots = true;

  /// Throws Config on the first invalid value.
  void validate() const;

  Grid grid() const { return {rows, cols}; }
  int total_cases() const { return n_train + n_val + n_test; }
  fem::SimulationConfig simulation() const;
  vae::VaeConfig vae_model() const;
  vae::VaeTrainConfig vae_training() const;
  regnet::RegNetConfig reg_model() const;
  regnet::TrainConfig reg_training() const;

  /// Canonical INI text (every key, in schema order).
  std::string to_ini() const;
  std::string hash() const;
};

/// Defaults overlaid with the file; unknown sections or keys are errors.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(const std::string& ini_text);
/// Sets one "section.key" value from its string form.
void set_value(ExperimentConfig& cfg, const std::string& dotted_key, const std::string& value);
std::string get_value(const ExperimentConfig& cfg, const std::string& dotted_key);

}  // namespace cardioreg::harness
