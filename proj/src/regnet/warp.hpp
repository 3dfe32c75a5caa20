// SPDX-License-Identifier: Apache-2.0
//
// Backward warping: out(p) = image(p + phi(p)), bilinear, border-clamped.
// The tensor form is differentiable with respect to both inputs and is the
// one operator used for phantom synthesis and registration training.
#pragma once

#include <torch/torch.h>

#include "common/types.hpp"

namespace cardioreg::regnet {

/// image [B, C, H, W], phi [B, 2, H, W] with channel 0 = u (x), 1 = v (y).
torch::Tensor warp(const torch::Tensor& image, const torch::Tensor& phi);

Image warp(const Image& image, const DisplacementField& phi);

/// Nearest-neighbour label warp (same sampling positions, rounded).
Mask warp_nearest(const Mask& mask, const DisplacementField& phi);

// Array <-> tensor conversion helpers (double precision, batch of one).
torch::Tensor to_tensor(const Image& image, torch::Dtype dtype = torch::kDouble);               // [1,1,H,W]
torch::Tensor to_tensor(const DisplacementField& phi, torch::Dtype dtype = torch::kDouble);     // [1,2,H,W]
torch::Tensor to_tensor(const GradientField& gf, torch::Dtype dtype = torch::kDouble);          // [1,4,H,W]
torch::Tensor myocardium_tensor(const Mask& mask, torch::Dtype dtype = torch::kDouble);         // [1,1,H,W]
Image image_from_tensor(const torch::Tensor& t);               // [1,1,H,W] or [H,W]
DisplacementField field_from_tensor(const torch::Tensor& t);   // [1,2,H,W] or [2,H,W]
GradientField gradient_from_tensor(const torch::Tensor& t);    // [1,4,H,W] or [4,H,W]

}  // namespace cardioreg::regnet
