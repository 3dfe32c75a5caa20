// SPDX-License-Identifier: Apache-2.0
//
// Model checkpoints: a directory holding params.f32 (all parameters, float32,
// concatenated in registration order) and checkpoint.json describing each
// blob plus caller-supplied metadata.
#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <string>

#include "common/tensor_io.hpp"

namespace cardioreg::ckpt {

inline constexpr const char* kMagic = "cardioreg-ckpt";
inline constexpr int kVersion = 1;

/// Writes the parameters of `module`; `meta` is merged into the manifest.
void save(const std::filesystem::path& dir, const torch::nn::Module& module, const std::string& kind,
          const io::json& meta);

/// Reads the manifest, checking magic, version and kind.
io::json read_manifest(const std::filesystem::path& dir, const std::string& kind);

/// Copies the stored parameters into `module`; names and shapes must match.
void load_params(const std::filesystem::path& dir, torch::nn::Module& module, const io::json& manifest);

/// Concatenated float32 copy of every parameter, for equality checks.
std::vector<float> flatten_params(const torch::nn::Module& module);

}  // namespace cardioreg::ckpt
