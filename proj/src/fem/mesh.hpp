// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <vector>

#include "common/types.hpp"

namespace cardioreg::fem {

/// Structured polar quadrilateral mesh of an annular wall. Node (k, j) is the
/// j-th of n_radial+1 nodes along the k-th of n_theta rays; j = 0 lies on the
/// endocardium. Elements are listed counter-clockwise in (x, y).
struct QuadMesh {
  std::vector<Vec2> nodes;
  std::vector<std::array<int, 4>> elements;
  std::vector<int> endo_nodes;   // closed loop, counter-clockwise
  std::vector<int> epi_nodes;    // closed loop, counter-clockwise
  std::vector<int> fixed_nodes;  // nodes whose mean translation / rotation is held at zero
  int n_theta = 0;
  int n_radial = 0;
  Vec2 center;

  int node_index(int k, int j) const noexcept { return (k % n_theta) * (n_radial + 1) + j; }
  int n_dofs() const noexcept { return 2 * static_cast<int>(nodes.size()); }
};

/// Signed area of element `e` with the given nodal positions.
double element_area(const QuadMesh& mesh, int e, const std::vector<Vec2>& positions);
double mesh_area(const QuadMesh& mesh);

/// Builds the polar mesh between per-ray radii r_in[k] < r_out[k] at angles
/// 2*pi*k/n_theta about `center`.
QuadMesh build_polar_mesh(Vec2 center, const std::vector<double>& r_in, const std::vector<double>& r_out,
                          int n_radial);

/// Circular annulus a < r < b with element size about h.
QuadMesh annulus_mesh(Vec2 center, double r_in, double r_out, double elem_size);

/// Meshes the myocardium of an annular mask: marching-squares contours,
/// angular resampling about the cavity centroid, radial layering. Throws
/// Topology for non-annular masks and InvalidArgument when the element size
/// would leave fewer than two elements through the wall.
QuadMesh mesh_from_mask(const Mask& mask, double target_elem_size);

/// Throws unless every element has positive area and the boundary loops are
/// disjoint.
void validate_mesh(const QuadMesh& mesh);

/// Copy of the mesh rotated by `angle` about `pivot`; node numbering is kept.
QuadMesh rotated(const QuadMesh& mesh, double angle, Vec2 pivot);

}  // namespace cardioreg::fem
