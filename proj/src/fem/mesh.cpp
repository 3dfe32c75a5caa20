// SPDX-License-Identifier: Apache-2.0
#include "fem/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>

#include "common/contour.hpp"

namespace cardioreg::fem {

double element_area(const QuadMesh& mesh, int e, const std::vector<Vec2>& positions) {
  Polyline quad;
  for (int a : mesh.elements[e]) quad.push_back(positions[a]);
  return signed_area(quad);
}

double mesh_area(const QuadMesh& mesh) {
  double a = 0;
  for (int e = 0; e < static_cast<int>(mesh.elements.size()); ++e) a += element_area(mesh, e, mesh.nodes);
  return a;
}

QuadMesh build_polar_mesh(Vec2 center, const std::vector<double>& r_in, const std::vector<double>& r_out,
                          int n_radial) {
  require(r_in.size() == r_out.size() && r_in.size() >= 3, "build_polar_mesh: need >= 3 rays");
  require(n_radial >= 1, "build_polar_mesh: need >= 1 radial layer");
  QuadMesh m;
  m.n_theta = static_cast<int>(r_in.size());
  m.n_radial = n_radial;
  m.center = center;
  for (int k = 0; k < m.n_theta; ++k) {
    require(r_in[k] > 0 && r_in[k] < r_out[k], "build_polar_mesh: need 0 < r_in < r_out on every ray");
    const double th = 2.0 * std::numbers::pi * k / m.n_theta;
    const Vec2 dir{std::cos(th), std::sin(th)};
    for (int j = 0; j <= n_radial; ++j) {
      const double r = r_in[k] + (r_out[k] - r_in[k]) * j / n_radial;
      m.nodes.push_back(center + dir * r);
    }
  }
  for (int k = 0; k < m.n_theta; ++k) {
    for (int j = 0; j < n_radial; ++j)
      m.elements.push_back({m.node_index(k, j), m.node_index(k, j + 1), m.node_index(k + 1, j + 1),
                            m.node_index(k + 1, j)});
    m.endo_nodes.push_back(m.node_index(k, 0));
    m.epi_nodes.push_back(m.node_index(k, n_radial));
  }
  m.fixed_nodes = m.epi_nodes;
  validate_mesh(m);
  return m;
}

QuadMesh annulus_mesh(Vec2 center, double r_in, double r_out, double elem_size) {
  require(elem_size > 0, "annulus_mesh: element size must be positive");
  const int n_radial = std::max(1, static_cast<int>(std::lround((r_out - r_in) / elem_size)));
  const int n_theta = std::max(16, static_cast<int>(std::lround(std::numbers::pi * (r_in + r_out) / elem_size)));
  return build_polar_mesh(center, std::vector<double>(n_theta, r_in), std::vector<double>(n_theta, r_out),
                          n_radial);
}

namespace {

// Distance along the ray from c in direction d to its single crossing with
// the loop; nullopt when the ray crosses the loop other than exactly once.
std::optional<double> ray_hit(const Vec2& c, const Vec2& d, const Polyline& loop) {
  std::optional<double> hit;
  int hits = 0;
  const std::size_t n = loop.size();
  for (std::size_t k = 0; k < n; ++k) {
    const Vec2 a = loop[k], b = loop[(k + 1) % n];
    const Vec2 e = b - a;
    const double den = d.cross(e);
    if (std::abs(den) < 1e-14) continue;
    const Vec2 ac = a - c;
    const double t = ac.cross(e) / den;  // along ray
    const double s = ac.cross(d) / den;  // along segment
    if (t > 0 && s >= 0 && s < 1) {
      ++hits;
      hit = t;
    }
  }
  if (hits != 1) return std::nullopt;
  return hit;
}

Vec2 polygon_centroid(const Polyline& loop) {
  double a = 0, cx = 0, cy = 0;
  const std::size_t n = loop.size();
  for (std::size_t k = 0; k < n; ++k) {
    const Vec2 p = loop[k], q = loop[(k + 1) % n];
    const double w = p.cross(q);
    a += w;
    cx += (p.x + q.x) * w;
    cy += (p.y + q.y) * w;
  }
  return {cx / (3.0 * a), cy / (3.0 * a)};
}

}  // namespace

QuadMesh mesh_from_mask(const Mask& mask, double target_elem_size) {
  require(target_elem_size > 0, "mesh_from_mask: element size must be positive");
  check_annulus_topology(mask);
  auto loops = binary_contours(mask.myocardium_indicator());
  if (loops.size() != 2) fail(ErrorKind::Topology, "mesh_from_mask: expected 2 boundary loops, found " +
                                                       std::to_string(loops.size()));
  // Outer loop winds positively around the wall, the cavity loop negatively.
  if (signed_area(loops[0]) < signed_area(loops[1])) std::swap(loops[0], loops[1]);
  const Polyline& epi = loops[0];
  Polyline endo = loops[1];
  if (signed_area(epi) <= 0 || signed_area(endo) >= 0)
    fail(ErrorKind::Topology, "mesh_from_mask: boundary loops are not nested");
  std::reverse(endo.begin(), endo.end());
  const Vec2 c = polygon_centroid(endo);

  // Angular resolution from the mean mid-wall radius.
  const int probe = 360;
  double r_mid = 0, thick_sum = 0;
  for (int k = 0; k < probe; ++k) {
    const double th = 2.0 * std::numbers::pi * k / probe;
    const Vec2 d{std::cos(th), std::sin(th)};
    auto ri = ray_hit(c, d, endo), ro = ray_hit(c, d, epi);
    if (!ri || !ro || *ri >= *ro) fail(ErrorKind::Topology, "mesh_from_mask: wall is not star-shaped about the cavity centroid");
    r_mid += 0.5 * (*ri + *ro);
    thick_sum += *ro - *ri;
  }
  r_mid /= probe;
  const double thickness = thick_sum / probe;
  const int n_radial = static_cast<int>(std::lround(thickness / target_elem_size));
  if (n_radial < 2)
    fail(ErrorKind::InvalidArgument, "mesh_from_mask: element size " + std::to_string(target_elem_size) +
                                         " leaves fewer than 2 elements through a wall of " +
                                         std::to_string(thickness) + " px");
  const int n_theta = std::max(16, static_cast<int>(std::lround(2.0 * std::numbers::pi * r_mid / target_elem_size)));
  std::vector<double> r_in(n_theta), r_out(n_theta);
  for (int k = 0; k < n_theta; ++k) {
    const double th = 2.0 * std::numbers::pi * k / n_theta;
    const Vec2 d{std::cos(th), std::sin(th)};
    auto ri = ray_hit(c, d, endo), ro = ray_hit(c, d, epi);
    if (!ri || !ro || *ri >= *ro) fail(ErrorKind::Topology, "mesh_from_mask: wall is not star-shaped about the cavity centroid");
    r_in[k] = *ri;
    r_out[k] = *ro;
  }
  return build_polar_mesh(c, r_in, r_out, n_radial);
}

void validate_mesh(const QuadMesh& mesh) {
  for (int e = 0; e < static_cast<int>(mesh.elements.size()); ++e)
    if (element_area(mesh, e, mesh.nodes) <= 0)
      fail(ErrorKind::InvalidArgument, "mesh element " + std::to_string(e) + " has non-positive area");
  std::vector<int> a = mesh.endo_nodes, b = mesh.epi_nodes;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::vector<int> common;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
  require(common.empty(), "endo and epi node sets intersect");
  require(mesh.endo_nodes.size() >= 3 && mesh.epi_nodes.size() >= 3, "boundary loops too short");
}

QuadMesh rotated(const QuadMesh& mesh, double angle, Vec2 pivot) {
  QuadMesh m = mesh;
  const double c = std::cos(angle), s = std::sin(angle);
  auto rot = [&](const Vec2& p) {
    const Vec2 d = p - pivot;
    return pivot + Vec2{c * d.x - s * d.y, s * d.x + c * d.y};
  };
  for (auto& p : m.nodes) p = rot(p);
  m.center = rot(m.center);
  return m;
}

}  // namespace cardioreg::fem
