// SPDX-License-Identifier: Apache-2.0
#include "fem/rasterise.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <optional>

namespace cardioreg::fem {

namespace {

constexpr double kXi[4] = {-1, 1, 1, -1};
constexpr double kEta[4] = {-1, -1, 1, 1};

void shape(double xi, double eta, double N[4]) {
  for (int a = 0; a < 4; ++a) N[a] = 0.25 * (1 + kXi[a] * xi) * (1 + kEta[a] * eta);
}

// Local coordinates of p inside the quad with corners x[4]; nullopt outside.
std::optional<std::array<double, 2>> invert_bilinear(const std::array<Vec2, 4>& x, const Vec2& p) {
  double xi = 0, eta = 0;
  for (int it = 0; it < 30; ++it) {
    double N[4];
    shape(xi, eta, N);
    Vec2 r{-p.x, -p.y};
    double j11 = 0, j12 = 0, j21 = 0, j22 = 0;
    for (int a = 0; a < 4; ++a) {
      r = r + x[a] * N[a];
      const double dxi = 0.25 * kXi[a] * (1 + kEta[a] * eta), deta = 0.25 * kEta[a] * (1 + kXi[a] * xi);
      j11 += x[a].x * dxi;
      j12 += x[a].x * deta;
      j21 += x[a].y * dxi;
      j22 += x[a].y * deta;
    }
    const double det = j11 * j22 - j12 * j21;
    if (std::abs(det) < 1e-14) return std::nullopt;
    const double dx = (j22 * r.x - j12 * r.y) / det, dy = (-j21 * r.x + j11 * r.y) / det;
    xi -= dx;
    eta -= dy;
    if (std::abs(xi) > 3 || std::abs(eta) > 3) return std::nullopt;
    if (std::abs(dx) + std::abs(dy) < 1e-13) break;
  }
  constexpr double tol = 1e-9;
  if (std::abs(xi) > 1 + tol || std::abs(eta) > 1 + tol) return std::nullopt;
  return std::array<double, 2>{xi, eta};
}

bool inside_polygon(const std::vector<Vec2>& poly, const Vec2& p) {
  bool in = false;
  const std::size_t n = poly.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2 a = poly[i], b = poly[j];
    if ((a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x) in = !in;
  }
  return in;
}

}  // namespace

RasterResult rasterise(const QuadMesh& mesh, const FemSolution& sol, Grid grid, RasterMode mode) {
  require(sol.nodal_disp.size() == mesh.nodes.size(), "rasterise: solution does not match mesh");
  RasterResult out{DisplacementField(grid), Mask(grid)};
  const bool deformed = mode == RasterMode::Deformed;
  auto position = [&](int n) { return deformed ? mesh.nodes[n] + sol.nodal_disp[n] : mesh.nodes[n]; };
  for (const auto& el : mesh.elements) {
    std::array<Vec2, 4> x;
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (int a = 0; a < 4; ++a) {
      x[a] = position(el[a]);
      xmin = std::min(xmin, x[a].x);
      xmax = std::max(xmax, x[a].x);
      ymin = std::min(ymin, x[a].y);
      ymax = std::max(ymax, x[a].y);
    }
    const int j0 = std::max(0, static_cast<int>(std::ceil(xmin))), j1 = std::min(grid.cols - 1, static_cast<int>(std::floor(xmax)));
    const int i0 = std::max(0, static_cast<int>(std::ceil(ymin))), i1 = std::min(grid.rows - 1, static_cast<int>(std::floor(ymax)));
    for (int i = i0; i <= i1; ++i)
      for (int j = j0; j <= j1; ++j) {
        if (out.coverage.myocardium(i, j)) continue;
        const auto loc = invert_bilinear(x, {static_cast<double>(j), static_cast<double>(i)});
        if (!loc) continue;
        double N[4];
        shape((*loc)[0], (*loc)[1], N);
        Vec2 u;
        for (int a = 0; a < 4; ++a) u = u + sol.nodal_disp[el[a]] * N[a];
        if (deformed) u = u * -1.0;
        out.field.u(i, j) = u.x;
        out.field.v(i, j) = u.y;
        out.coverage.set(i, j, Label::Myocardium);
      }
  }
  std::vector<Vec2> endo;
  for (int n : mesh.endo_nodes) endo.push_back(position(n));
  for (int i = 0; i < grid.rows; ++i)
    for (int j = 0; j < grid.cols; ++j)
      if (!out.coverage.myocardium(i, j) && inside_polygon(endo, {static_cast<double>(j), static_cast<double>(i)}))
        out.coverage.set(i, j, Label::Cavity);
  return out;
}

DisplacementField extend_field(const DisplacementField& field, const Mask& coverage) {
  const Grid g = field.u.grid();
  require(coverage.grid() == g, "extend_field: coverage grid mismatch");
  std::vector<int> index(g.size(), -1);
  int n = 0;
  for (int i = 0; i < g.rows; ++i)
    for (int j = 0; j < g.cols; ++j)
      if (!coverage.myocardium(i, j)) index[i * g.cols + j] = n++;
  DisplacementField out = field;
  if (n == 0) return out;
  std::vector<Eigen::Triplet<double>> trip;
  Eigen::VectorXd bu = Eigen::VectorXd::Zero(n), bv = Eigen::VectorXd::Zero(n);
  constexpr int di[4] = {-1, 1, 0, 0}, dj[4] = {0, 0, -1, 1};
  for (int i = 0; i < g.rows; ++i)
    for (int j = 0; j < g.cols; ++j) {
      const int r = index[i * g.cols + j];
      if (r < 0) continue;
      trip.emplace_back(r, r, 4.0);
      for (int k = 0; k < 4; ++k) {
        const int ii = i + di[k], jj = j + dj[k];
        if (ii < 0 || jj < 0 || ii >= g.rows || jj >= g.cols) continue;  // zero ghost value
        const int c = index[ii * g.cols + jj];
        if (c >= 0) {
          trip.emplace_back(r, c, -1.0);
        } else {
          bu[r] += field.u(ii, jj);
          bv[r] += field.v(ii, jj);
        }
      }
    }
  Eigen::SparseMatrix<double> A(n, n);
  A.setFromTriplets(trip.begin(), trip.end());
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(A);
  if (ldlt.info() != Eigen::Success) fail(ErrorKind::NonFinite, "extend_field: factorisation failed");
  const Eigen::VectorXd xu = ldlt.solve(bu), xv = ldlt.solve(bv);
  for (int i = 0; i < g.rows; ++i)
    for (int j = 0; j < g.cols; ++j) {
      const int r = index[i * g.cols + j];
      if (r < 0) continue;
      out.u(i, j) = xu[r];
      out.v(i, j) = xv[r];
    }
  return out;
}

}  // namespace cardioreg::fem
