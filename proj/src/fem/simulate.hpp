// SPDX-License-Identifier: Apache-2.0
//
// Pressure identification and cycle sampling on top of the static solver.
#pragma once

#include <filesystem>
#include <vector>

#include "fem/hyperelastic.hpp"
#include "fem/rasterise.hpp"

namespace cardioreg::fem {

struct SimulationConfig {
  double P_ED = 0.0;            // kPa; identified when target_area is set
  int n_steps = 50;
  double target_area = 0.0;     // px^2
  double area_rel_tol = 1e-4;   // inverse problem tolerance
  double elem_size = 1.5;       // px
  MaterialModel material;
  SolverOptions solver;

  void validate() const;
};

/// Pressure whose deformed cavity area equals `target_area`. Brackets by
/// doubling from 0.05 mu, then refines with the Illinois variant of regula
/// falsi. Throws InvalidArgument when target_area is below the reference
/// area and NonConvergence (with the largest area reached) when the target
/// lies beyond what the solver can reach.
double inverse_fem_pressure(const QuadMesh& mesh, double target_area, const MaterialModel& mat,
                            const SolverOptions& opts = {}, double rel_tol = 1e-4);

/// Solutions at pressures P_ED * k / (n_steps - 1), k = 0..n_steps-1.
std::vector<FemSolution> simulate_cycle(const QuadMesh& mesh, double P_ED, int n_steps, const MaterialModel& mat,
                                        const SolverOptions& opts = {});

struct VolumeStats {
  double mean_abs_dev = 0;  // mean over elements of |det F - 1|
  double max_abs_dev = 0;
};
VolumeStats volume_stats(const QuadMesh& mesh, const FemSolution& sol);

/// A simulated cycle sampled on the pixel grid.
struct SimulatedCycle {
  QuadMesh mesh;
  double P_ED = 0;
  std::vector<FemSolution> solutions;
  std::vector<DisplacementField> fields;  // backward maps on the deformed grid, extended harmonically
  std::vector<Mask> coverage;             // per-step deformed coverage
  std::vector<VolumeStats> volume;
};

/// Meshes `base_mask` (the undeformed state), identifies the pressure that
/// scales the cavity area by `area_ratio`, samples the cycle and
/// rasterises every step.
SimulatedCycle simulate_from_mask(const Mask& base_mask, double area_ratio, const SimulationConfig& cfg);

// Simulation directory: fields.f32 (T,2,M,N), coverage.u8 (T,M,N), meta.json.
inline constexpr const char* kSimMagic = "cardioreg-sim";
std::filesystem::path sim_dir_name(int case_id);
void save_simulation(const std::filesystem::path& dir, int case_id, const SimulatedCycle& sim,
                     const SimulationConfig& cfg);

struct SimulationData {
  int case_id = 0;
  double P_ED = 0;
  std::vector<DisplacementField> fields;
  std::vector<Mask> coverage;
};
SimulationData load_simulation(const std::filesystem::path& dir);

}  // namespace cardioreg::fem
