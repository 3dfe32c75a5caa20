// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "common/types.hpp"

namespace cardioreg::vae {

/// Canonical spatial derivative of a displacement field: forward differences
/// with the last row / column replicated, so the output keeps the input grid
/// and a constant field maps to zero.
GradientField grad_field(const DisplacementField& phi);

/// Zeroes every channel outside the myocardium of `mask`.
GradientField apply_mask(const GradientField& gf, const Mask& mask);

/// Root-mean-square over all channels and pixels.
double rms(const GradientField& gf);

}  // namespace cardioreg::vae
