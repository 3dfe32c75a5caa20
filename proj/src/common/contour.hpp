// SPDX-License-Identifier: Apache-2.0
//
// Iso-contours and connected components of binary rasters.
#pragma once

#include <vector>

#include "common/types.hpp"

namespace cardioreg {

using Polyline = std::vector<Vec2>;

/// Marching squares at level 0.5 on a binary indicator (1 inside, 0
/// outside). The raster is padded with zeros so every loop closes. Each
/// returned loop is closed implicitly (last vertex connects to the first),
/// oriented with positive signed area when it bounds an inside region.
std::vector<Polyline> binary_contours(const Array2D<double>& indicator);

/// Shoelace signed area; positive for counter-clockwise in (x, y).
double signed_area(const Polyline& loop);

/// Distance from p to the closed polyline.
double distance_to_loop(const Vec2& p, const Polyline& loop);

/// Connected component labelling of pixels where `in` holds.
/// Returns the number of components; `labels` receives 0 for excluded
/// pixels and 1..n otherwise. `connectivity` is 4 or 8.
int connected_components(const Array2D<std::uint8_t>& in, Array2D<int>& labels, int connectivity = 4);

/// Validates the annulus invariant: one 4-connected myocardium component
/// enclosing exactly one 4-connected non-myocardium component that does not
/// touch the image border. Throws ErrorKind::Topology otherwise.
void check_annulus_topology(const Mask& mask);

/// Relabels stray components of at most `max_pixels` pixels: myocardium
/// fragments apart from the largest take their most common neighbouring
/// label, and enclosed non-myocardium pockets apart from the largest become
/// myocardium. Returns the number of pixels changed.
int absorb_islands(Mask& mask, int max_pixels);

}  // namespace cardioreg
