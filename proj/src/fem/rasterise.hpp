// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "common/types.hpp"
#include "fem/hyperelastic.hpp"

namespace cardioreg::fem {

/// Which pixel grid the field is sampled on.
///  Reference: pixels of the undeformed wall, value = forward displacement u(X).
///  Deformed:  pixels of the deformed wall, value = X - x, the backward map
///             from the deformed grid to the reference image.
enum class RasterMode { Reference, Deformed };

struct RasterResult {
  DisplacementField field;  // zero outside coverage
  Mask coverage;            // myocardium = covered by an element, cavity = inside the endo loop
};

RasterResult rasterise(const QuadMesh& mesh, const FemSolution& sol, Grid grid, RasterMode mode = RasterMode::Deformed);

/// Harmonic extension of the field from covered (myocardium) pixels to the
/// rest of the grid, with zero displacement just outside the image.
DisplacementField extend_field(const DisplacementField& field, const Mask& coverage);

}  // namespace cardioreg::fem
