// SPDX-License-Identifier: Apache-2.0
//
// Learning-based registration: a Siamese encoder over (source, target), a
// skip-connected decoder to a dense backward displacement field, and the
// training objective  L = mean (I_t - I_s o phi)^2 + alpha * R(grad phi, M).
#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "common/types.hpp"
#include "phantom/phantom.hpp"
#include "vae/vae.hpp"

namespace cardioreg::regnet {

enum class RegKind { Vae, L2, None };
std::string to_string(RegKind k);
RegKind reg_kind_from_string(const std::string& s);

struct RegNetConfig {
  Grid grid{96, 96};
  std::vector<int> channels{16, 32, 32, 32, 32};  // full-resolution stage, then 4 stride-2 stages

  void validate() const;
  std::string architecture() const;
};

struct TrainConfig {
  double alpha = 0.001;
  RegKind reg = RegKind::Vae;
  double lr = 1e-4;
  int epochs = 300;
  int batch_size = 8;
  std::uint64_t seed = 0;
  int frame_stride = 1;    // use frames t = stride, 2*stride, ... and the last frame
  long max_steps = 0;      // optimiser steps; 0 = run all epochs

  void validate() const;
};

class RegNetImpl : public torch::nn::Module {
 public:
  explicit RegNetImpl(const RegNetConfig& cfg);
  /// source, target [B,1,H,W] -> phi [B,2,H,W]
  torch::Tensor forward(const torch::Tensor& source, const torch::Tensor& target);

 private:
  std::vector<torch::Tensor> features(const torch::Tensor& x);
  std::vector<torch::nn::Conv2d> enc_, dec_;
  torch::nn::Conv2d head_{nullptr};
};
TORCH_MODULE(RegNet);

class RegModel {
 public:
  RegModel(const RegNetConfig& cfg, std::uint64_t init_seed);
  const RegNetConfig& config() const noexcept { return cfg_; }
  RegNet& net() noexcept { return net_; }
  const RegNet& net() const noexcept { return net_; }

 private:
  RegNetConfig cfg_;
  RegNet net_{nullptr};
};

/// Loss terms; tensors are scalars (batch means).
struct LossTensors {
  torch::Tensor sim, reg, total;
};
struct LossBreakdown {
  double sim = 0, reg = 0, total = 0;
};

/// mean (target - warp(source, phi))^2
torch::Tensor sim_loss(const torch::Tensor& target, const torch::Tensor& source, const torch::Tensor& phi);
double sim_loss(const Image& target, const Image& source, const DisplacementField& phi);

/// Mean over myocardium pixels of the summed squared gradient channels,
/// averaged over the batch. mask [B,1,H,W]; an empty mask is an error.
torch::Tensor l2_reg(const torch::Tensor& phi, const torch::Tensor& mask);
double l2_reg(const DisplacementField& phi, const Mask& mask);

/// VAE score of grad(phi) masked by `mask`, averaged over the batch.
torch::Tensor vae_reg(vae::VaeModel& model, const torch::Tensor& phi, const torch::Tensor& mask);

/// sim + alpha * reg. `vae` is required when cfg.reg == Vae.
LossTensors total_loss(const torch::Tensor& target, const torch::Tensor& source, const torch::Tensor& phi,
                       const torch::Tensor& mask, const TrainConfig& cfg, vae::VaeModel* vae);
LossBreakdown total_loss(const Image& target, const Image& source, const DisplacementField& phi, const Mask& mask,
                         const TrainConfig& cfg, vae::VaeModel* vae);

/// Deterministic inference.
DisplacementField predict(RegModel& model, const Image& source, const Image& target);
/// Batched inference on tensors [B,1,H,W].
torch::Tensor predict(RegModel& model, const torch::Tensor& source, const torch::Tensor& target);

/// Registration pairs (frame 0 -> frame t) with the frame-0 myocardium mask.
struct PairSet {
  torch::Tensor source, target, mask;  // [N,1,H,W] float32
  torch::Tensor gt;                    // [N,2,H,W] ground truth
  torch::Tensor gt_mask;               // [N,1,H,W] frame-t myocardium
  std::size_t size() const { return source.defined() ? static_cast<std::size_t>(source.size(0)) : 0; }
};
std::vector<int> pair_frames(int n_frames, int stride);
PairSet make_pairs(const std::vector<phantom::PhantomCase>& cases, int frame_stride);

struct RegEpochLog {
  int epoch = 0;
  long steps = 0;
  double train_sim = 0, train_reg = 0, train_total = 0;
  double val_sim = 0, val_reg = 0, val_total = 0;
};

struct RegTrainResult {
  RegModel model;
  std::vector<RegEpochLog> log;
  LossBreakdown initial_val;
  LossBreakdown final_val;
};

/// Adam on the configured objective. The VAE is frozen for the duration.
RegTrainResult train_registration(const PairSet& train, const PairSet& val, const RegNetConfig& net_cfg,
                                  const TrainConfig& cfg, vae::VaeModel* vae);

LossBreakdown evaluate_loss(RegModel& model, const PairSet& data, const TrainConfig& cfg, vae::VaeModel* vae,
                            int batch_size = 16);

void write_log_csv(const std::filesystem::path& path, const std::vector<RegEpochLog>& log);

/// `vae_hash` identifies the VAE checkpoint used for training (empty if none).
void save_regnet(const std::filesystem::path& dir, const RegModel& model, const TrainConfig& cfg,
                 const std::string& vae_hash);
RegModel load_regnet(const std::filesystem::path& dir);
TrainConfig load_train_config(const std::filesystem::path& dir);

}  // namespace cardioreg::regnet
