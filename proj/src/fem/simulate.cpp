// SPDX-License-Identifier: Apache-2.0
#include "fem/simulate.hpp"

#include <cmath>
#include <sstream>

#include "common/tensor_io.hpp"
#include "phantom/phantom.hpp"

namespace cardioreg::fem {

namespace fs = std::filesystem;

void SimulationConfig::validate() const {
  material.validate();
  if (n_steps < 2) fail(ErrorKind::Config, "fem: n_steps must be >= 2");
  if (P_ED < 0) fail(ErrorKind::Config, "fem: P_ED must be >= 0");
  if (!(elem_size > 0)) fail(ErrorKind::Config, "fem: element size must be > 0");
  if (!(area_rel_tol > 0 && area_rel_tol < 5e-3)) fail(ErrorKind::Config, "fem: area tolerance must be in (0, 0.005)");
  if (!(solver.rel_tolerance > 0) || solver.max_newton_iters < 1 || solver.max_halvings < 0)
    fail(ErrorKind::Config, "fem: invalid solver options");
}

double inverse_fem_pressure(const QuadMesh& mesh, double target_area, const MaterialModel& mat,
                            const SolverOptions& opts, double rel_tol) {
  const double a0 = cavity_area(mesh);
  if (std::abs(target_area - a0) <= 1e-12 * a0) return 0.0;
  require(target_area > a0, "inverse_fem_pressure: target area " + std::to_string(target_area) +
                                " is below the reference cavity area " + std::to_string(a0));
  FemSolution lo;
  lo.nodal_disp.assign(mesh.nodes.size(), Vec2{});
  double area_lo = a0;
  double p_hi = 0.05 * mat.shear_modulus, area_hi = 0;
  FemSolution hi;
  for (int k = 0;; ++k) {
    try {
      hi = solve_from(mesh, lo, p_hi, mat, opts);
    } catch (const NonConvergenceError& e) {
      throw NonConvergenceError("inverse_fem_pressure: target area " + std::to_string(target_area) +
                                    " unreachable; largest area attained " + std::to_string(area_lo) + " at " +
                                    std::to_string(lo.pressure) + " kPa",
                                e.last_residual());
    }
    area_hi = cavity_area(mesh, hi.nodal_disp);
    if (area_hi >= target_area) break;
    if (k >= 40)
      throw NonConvergenceError("inverse_fem_pressure: target unreachable; largest area attained " +
                                    std::to_string(area_hi),
                                hi.residual_norm);
    lo = hi;
    area_lo = area_hi;
    p_hi *= 2.0;
  }
  // Illinois regula falsi on f(p) = area(p) - target.
  double f_lo = area_lo - target_area, f_hi = area_hi - target_area;
  double p = hi.pressure;
  int side = 0;
  for (int it = 0; it < 200; ++it) {
    if (std::abs(f_hi) <= rel_tol * target_area) return hi.pressure;
    if (std::abs(f_lo) <= rel_tol * target_area && lo.pressure > 0) return lo.pressure;
    p = (lo.pressure * f_hi - hi.pressure * f_lo) / (f_hi - f_lo);
    if (!(p > lo.pressure && p < hi.pressure)) p = 0.5 * (lo.pressure + hi.pressure);
    FemSolution mid = solve_from(mesh, lo, p, mat, opts);
    const double f_mid = cavity_area(mesh, mid.nodal_disp) - target_area;
    if (std::abs(f_mid) <= rel_tol * target_area) return p;
    if (f_mid < 0) {
      lo = std::move(mid);
      f_lo = f_mid;
      if (side == -1) f_hi *= 0.5;
      side = -1;
    } else {
      hi = std::move(mid);
      f_hi = f_mid;
      if (side == 1) f_lo *= 0.5;
      side = 1;
    }
  }
  throw NonConvergenceError("inverse_fem_pressure: root refinement did not converge", std::abs(f_hi));
}

std::vector<FemSolution> simulate_cycle(const QuadMesh& mesh, double P_ED, int n_steps, const MaterialModel& mat,
                                        const SolverOptions& opts) {
  require(n_steps >= 2, "simulate_cycle: n_steps must be >= 2");
  require(P_ED >= 0, "simulate_cycle: P_ED must be >= 0");
  std::vector<FemSolution> out;
  out.reserve(n_steps);
  FemSolution zero;
  zero.nodal_disp.assign(mesh.nodes.size(), Vec2{});
  out.push_back(zero);
  for (int k = 1; k < n_steps; ++k) {
    const double p = P_ED * k / (n_steps - 1);
    try {
      out.push_back(solve_from(mesh, out.back(), p, mat, opts));
    } catch (const NonConvergenceError& e) {
      throw NonConvergenceError("simulate_cycle: step " + std::to_string(k) + ": " + e.what(), e.last_residual());
    }
  }
  return out;
}

VolumeStats volume_stats(const QuadMesh& mesh, const FemSolution& sol) {
  const auto det = element_det_f(mesh, sol.nodal_disp);
  VolumeStats s;
  for (double d : det) {
    s.mean_abs_dev += std::abs(d - 1.0);
    s.max_abs_dev = std::max(s.max_abs_dev, std::abs(d - 1.0));
  }
  s.mean_abs_dev /= static_cast<double>(det.size());
  return s;
}

SimulatedCycle simulate_from_mask(const Mask& base_mask, double area_ratio, const SimulationConfig& cfg) {
  cfg.validate();
  require(area_ratio >= 1.0, "simulate_from_mask: area ratio must be >= 1");
  SimulatedCycle sim;
  sim.mesh = mesh_from_mask(base_mask, cfg.elem_size);
  if (cfg.P_ED > 0) {
    sim.P_ED = cfg.P_ED;
  } else {
    const double target = cfg.target_area > 0 ? cfg.target_area : area_ratio * cavity_area(sim.mesh);
    sim.P_ED = inverse_fem_pressure(sim.mesh, target, cfg.material, cfg.solver, cfg.area_rel_tol);
  }
  sim.solutions = simulate_cycle(sim.mesh, sim.P_ED, cfg.n_steps, cfg.material, cfg.solver);
  const Grid g = base_mask.grid();
  for (const auto& s : sim.solutions) {
    auto r = rasterise(sim.mesh, s, g, RasterMode::Deformed);
    sim.fields.push_back(extend_field(r.field, r.coverage));
    sim.coverage.push_back(std::move(r.coverage));
    sim.volume.push_back(volume_stats(sim.mesh, s));
  }
  sim.fields.front() = DisplacementField(g);
  return sim;
}

fs::path sim_dir_name(int case_id) { return "sim_" + std::to_string(case_id); }

void save_simulation(const fs::path& dir, int case_id, const SimulatedCycle& sim, const SimulationConfig& cfg) {
  require(!sim.fields.empty() && sim.fields.size() == sim.coverage.size(), "save_simulation: empty or inconsistent");
  const Grid g = sim.fields.front().grid();
  const int T = static_cast<int>(sim.fields.size());
  std::vector<float> fields;
  std::vector<std::uint8_t> cov;
  for (int t = 0; t < T; ++t) {
    for (double x : sim.fields[t].u.values()) fields.push_back(static_cast<float>(x));
    for (double x : sim.fields[t].v.values()) fields.push_back(static_cast<float>(x));
    for (auto l : sim.coverage[t].labels().values()) cov.push_back(l);
  }
  double mean_dev = 0, max_dev = 0;
  for (const auto& v : sim.volume) {
    mean_dev = std::max(mean_dev, v.mean_abs_dev);
    max_dev = std::max(max_dev, v.max_abs_dev);
  }
  fs::create_directories(dir);
  io::write_f32(dir / "fields.f32", fields);
  io::write_u8(dir / "coverage.u8", cov);
  io::json meta = {
      {"magic", kSimMagic},
      {"format_version", phantom::kFormatVersion},
      {"case_id", case_id},
      {"n_steps", T},
      {"shape", {g.rows, g.cols}},
      {"P_ED_kPa", sim.P_ED},
      {"mu_kPa", cfg.material.shear_modulus},
      {"kappa_kPa", cfg.material.bulk_modulus},
      {"mesh",
       {{"nodes", sim.mesh.nodes.size()},
        {"elements", sim.mesh.elements.size()},
        {"n_theta", sim.mesh.n_theta},
        {"n_radial", sim.mesh.n_radial},
        {"elem_size_px", cfg.elem_size}}},
      {"volume", {{"worst_mean_abs_detF_dev", mean_dev}, {"worst_max_abs_detF_dev", max_dev}}},
      {"tensors",
       {{"fields", {{"file", "fields.f32"}, {"shape", {T, 2, g.rows, g.cols}}, {"dtype", "float32"}, {"units", "px"}}},
        {"coverage",
         {{"file", "coverage.u8"},
          {"shape", {T, g.rows, g.cols}},
          {"dtype", "uint8"},
          {"units", "label: 0 background, 1 myocardium, 2 cavity"}}}}},
  };
  io::write_json(dir / "meta.json", meta);
}

SimulationData load_simulation(const fs::path& dir) {
  const io::json meta = io::read_json(dir / "meta.json");
  io::check_header(meta, kSimMagic, phantom::kFormatVersion, dir / "meta.json");
  SimulationData d;
  Grid g;
  int T = 0;
  try {
    d.case_id = meta.at("case_id").get<int>();
    d.P_ED = meta.at("P_ED_kPa").get<double>();
    T = meta.at("n_steps").get<int>();
    g = Grid{meta.at("shape").at(0).get<int>(), meta.at("shape").at(1).get<int>()};
  } catch (const std::exception& e) {
    fail(ErrorKind::MalformedHeader, "malformed header in " + (dir / "meta.json").string() + ": " + e.what());
  }
  if (T <= 0 || g.rows <= 0 || g.cols <= 0) fail(ErrorKind::MalformedHeader, "malformed header: empty shape");
  const std::size_t P = static_cast<std::size_t>(g.size());
  const auto fields = io::read_f32(dir / "fields.f32", T * 2 * P);
  const auto cov = io::read_u8(dir / "coverage.u8", T * P);
  for (int t = 0; t < T; ++t) {
    DisplacementField f(g);
    for (std::size_t p = 0; p < P; ++p) {
      f.u.storage()[p] = fields[(2 * t) * P + p];
      f.v.storage()[p] = fields[(2 * t + 1) * P + p];
    }
    d.fields.push_back(std::move(f));
    Array2D<std::uint8_t> lab(g);
    std::copy(cov.begin() + t * P, cov.begin() + (t + 1) * P, lab.storage().begin());
    d.coverage.push_back(Mask(std::move(lab)));
  }
  return d;
}

}  // namespace cardioreg::fem
