// SPDX-License-Identifier: Apache-2.0
//
// Quasi-static plane-strain neo-Hookean inflation of an annular wall.
//
//   W(F) = mu/2 (tr(C)/J - 2) + kappa/2 (J - 1)^2,   C = F^T F,  J = det F
//
// Bilinear quads with selective integration: the isochoric part uses 2x2
// Gauss points, the volumetric penalty the element centre. A follower
// pressure on the endocardium is conservative for a closed loop and enters
// the potential as -P * (cavity area). Rigid motion is removed by holding
// the mean translation and the mean linearised rotation of the fixed
// (epicardial) nodes at zero through Lagrange multipliers.
#pragma once

#include <array>
#include <vector>

#include "fem/mesh.hpp"

namespace cardioreg::fem {

struct MaterialModel {
  double shear_modulus = 36.75;     // kPa
  double bulk_modulus = 36750.0;    // kPa, penalty on (J - 1)
  double density = 0.0;             // unused: the simulation is quasi-static

  static MaterialModel with_mu(double mu, double bulk_ratio = 1000.0) { return {mu, bulk_ratio * mu, 0.0}; }
  /// Throws unless mu > 0 and kappa >= 100 mu.
  void validate() const;
};

struct SolverOptions {
  double rel_tolerance = 1e-8;  // |projected residual| / |external load|
  int max_newton_iters = 30;
  int max_halvings = 12;
};

struct FemSolution {
  std::vector<Vec2> nodal_disp;
  double pressure = 0.0;       // kPa
  double residual_norm = 0.0;  // relative
  int newton_iters = 0;
};

/// Energy density and its first / second derivatives with respect to
/// F = [F11, F12, F21, F22]. Returns false when J <= 0.
struct DensityEval {
  double W = 0;
  std::array<double, 4> dW{};
  std::array<double, 16> d2W{};
};
bool neo_hookean_density(const MaterialModel& mat, const std::array<double, 4>& F, DensityEval& out,
                         bool want_hessian, bool deviatoric, bool volumetric);

/// Total strain energy for nodal displacements u (2 per node, x then y).
/// +infinity when any integration point is inverted.
double strain_energy(const QuadMesh& mesh, const MaterialModel& mat, const std::vector<double>& u);
/// Gradient of strain_energy (internal nodal forces).
std::vector<double> internal_force(const QuadMesh& mesh, const MaterialModel& mat, const std::vector<double>& u);

/// Area enclosed by the deformed endocardial loop.
double cavity_area(const QuadMesh& mesh, const std::vector<Vec2>& disp);
double cavity_area(const QuadMesh& mesh);

/// det F at every element centre.
std::vector<double> element_det_f(const QuadMesh& mesh, const std::vector<Vec2>& disp);

/// Solves equilibrium at `pressure`, load-stepping from the unloaded state.
FemSolution solve_hyperelastic(const QuadMesh& mesh, double pressure, const MaterialModel& mat,
                               const SolverOptions& opts = {});

/// Continues from a converged solution at a lower pressure.
FemSolution solve_from(const QuadMesh& mesh, const FemSolution& start, double pressure, const MaterialModel& mat,
                       const SolverOptions& opts = {});

}  // namespace cardioreg::fem
