// SPDX-License-Identifier: Apache-2.0
//
// Variational autoencoder over 4-channel displacement-gradient fields.
//   R(g) = || g - dec(z) ||^2 (summed over pixels) + beta * KL(q(z|g) || N(0, I))
// The network sees g / input_scale; the reconstruction term is in the
// original units.
#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "common/types.hpp"

namespace cardioreg::vae {

/// Tensor form of the canonical differencing: [B,2,H,W] -> [B,4,H,W].
torch::Tensor grad_field(const torch::Tensor& phi);

struct VaeConfig {
  int latent_dim = 32;
  double beta = 1e-4;
  std::vector<int> channels{32, 64, 128, 256};
  Grid grid{96, 96};

  void validate() const;
  /// Canonical architecture string; its hash is stored with checkpoints.
  std::string architecture() const;
};

class VaeNetImpl : public torch::nn::Module {
 public:
  explicit VaeNetImpl(const VaeConfig& cfg);
  /// x [B,4,H,W] -> (mean, log-variance), each [B, latent].
  std::pair<torch::Tensor, torch::Tensor> encode(const torch::Tensor& x);
  torch::Tensor decode(const torch::Tensor& z);

 private:
  std::vector<std::array<int64_t, 2>> sizes_;  // input size of every encoder stage
  std::array<int64_t, 3> bottleneck_{};        // C, H, W after the encoder
  std::vector<torch::nn::Conv2d> enc_, dec_;
  torch::nn::Linear fc_mean_{nullptr}, fc_logvar_{nullptr}, fc_dec_{nullptr};
};
TORCH_MODULE(VaeNet);

struct VaeLossReport {
  double recon = 0;
  double kl = 0;
  double total = 0;
};

/// Per-sample loss terms, each [B].
struct VaeTerms {
  torch::Tensor recon, kl, total;
};

class VaeModel {
 public:
  VaeModel(const VaeConfig& cfg, std::uint64_t init_seed, double input_scale = 1.0);

  const VaeConfig& config() const noexcept { return cfg_; }
  double input_scale() const noexcept { return scale_; }
  void set_input_scale(double s);
  VaeNet& net() noexcept { return net_; }
  const VaeNet& net() const noexcept { return net_; }

  /// g [B,4,H,W] in original units. With `eps` ([B, latent]) the latent is
  /// mean + exp(logvar/2) * eps, otherwise the posterior mean.
  VaeTerms terms(const torch::Tensor& g, const torch::Tensor* eps = nullptr);
  /// Encoder outputs for g, scaled as in terms().
  std::pair<torch::Tensor, torch::Tensor> encode(const torch::Tensor& g);

  /// Stops gradient flow into the parameters and switches to eval mode.
  void freeze();
  void to(torch::Dtype dtype);
  torch::Dtype dtype() const;

 private:
  VaeConfig cfg_;
  double scale_ = 1.0;
  VaeNet net_{nullptr};
};

/// Closed-form KL(N(m, exp(lv)) || N(0, I)) summed over latent dims, [B].
torch::Tensor kl_divergence(const torch::Tensor& mean, const torch::Tensor& logvar);

void check_input_shape(const VaeModel& model, const GradientField& gf);

/// Loss with one reparameterised sample drawn from `sample_seed`.
VaeLossReport vae_loss(VaeModel& model, const GradientField& gf, std::uint64_t sample_seed);

/// Plausibility score: total loss at the posterior mean (or with one sample
/// when `sample_seed` is given) of gf, zeroed outside the myocardium of
/// `mask` when one is supplied.
double score(VaeModel& model, const GradientField& gf, const Mask* mask = nullptr,
             std::optional<std::uint64_t> sample_seed = std::nullopt);

struct VaeTrainConfig {
  int epochs = 200;
  int batch_size = 16;
  double lr = 1e-4;
  std::uint64_t seed = 0;
  std::size_t min_fields = 100;
};

struct VaeEpochLog {
  int epoch = 0;
  double train_recon = 0, train_kl = 0, train_total = 0;
  double val_recon = 0, val_kl = 0, val_total = 0;
};

struct VaeTrainResult {
  VaeModel model;
  std::vector<VaeEpochLog> curve;
  double initial_val_total = 0;
  double final_val_total = 0;
};

/// Adam on mean-over-batch loss. Validation uses posterior-mean scoring.
/// Throws InvalidArgument below `min_fields` training fields and NonFinite
/// when a loss becomes non-finite.
VaeTrainResult train_vae(const std::vector<GradientField>& train, const std::vector<GradientField>& val,
                         const VaeConfig& cfg, const VaeTrainConfig& tc);

/// Mean posterior-mean terms over a dataset.
VaeLossReport evaluate(VaeModel& model, const torch::Tensor& data, int batch_size = 64);

/// Stacks gradient fields into [N,4,H,W] float32.
torch::Tensor stack(const std::vector<GradientField>& fields);

void write_curve_csv(const std::filesystem::path& path, const std::vector<VaeEpochLog>& curve);

void save_vae(const std::filesystem::path& dir, const VaeModel& model, std::uint64_t train_seed);
VaeModel load_vae(const std::filesystem::path& dir);

}  // namespace cardioreg::vae
