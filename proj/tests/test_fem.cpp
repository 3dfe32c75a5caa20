#include <doctest.h>

#include <chrono>
#include <cmath>
#include <numbers>

#include "common/rng.hpp"
#include "fem/hyperelastic.hpp"
#include "fem/mesh.hpp"
#include "fem/rasterise.hpp"
#include "fem/simulate.hpp"
#include "metrics/metrics.hpp"
#include "phantom/phantom.hpp"
#include "test_util.hpp"

using namespace cardioreg;
using namespace cardioreg::fem;
using testutil::error_kind;
using testutil::kind;

namespace {

double mean_radial(const QuadMesh& mesh, const FemSolution& sol, int j) {
  double s = 0;
  for (int k = 0; k < mesh.n_theta; ++k) {
    const int n = mesh.node_index(k, j);
    const Vec2 d = mesh.nodes[n] - mesh.center;
    s += sol.nodal_disp[n].dot(d * (1.0 / d.norm()));
  }
  return s / mesh.n_theta;
}

double mean_endo_disp(const FemSolution& sol, const QuadMesh& mesh) {
  double s = 0;
  for (int n : mesh.endo_nodes) s += sol.nodal_disp[n].norm();
  return s / mesh.endo_nodes.size();
}

}  // namespace

TEST_SUITE("fem") {

TEST_CASE("material validation") {
  CHECK_NOTHROW(MaterialModel{}.validate());
  CHECK(error_kind([] { MaterialModel::with_mu(0.0).validate(); }) == kind(ErrorKind::Config));
  CHECK(error_kind([] { MaterialModel::with_mu(10.0, 50.0).validate(); }) == kind(ErrorKind::Config));
}

TEST_CASE("thick cylinder under small pressure matches the closed form") {
  const double a = 10, b = 16, h = 0.5;
  const auto mesh = annulus_mesh({48, 48}, a, b, h);
  const MaterialModel mat;
  const double P = 1e-3 * mat.shear_modulus;
  const auto t0 = std::chrono::steady_clock::now();
  const auto sol = solve_hyperelastic(mesh, P, mat);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double mu = mat.shear_modulus, kappa = mat.bulk_modulus;
  const int jm = mesh.n_radial / 2;
  const double r = a + (b - a) * jm / mesh.n_radial;
  const double got = mean_radial(mesh, sol, jm);
  // Plane-strain linear elasticity with bulk modulus kappa; kappa -> infinity
  // gives the incompressible solution P a^2 b^2 / (2 mu (b^2 - a^2) r).
  const double compressible = P * a * a / (b * b - a * a) * (r / (2 * kappa) + b * b / (2 * mu * r));
  const double incompressible = P * a * a * b * b / (2 * mu * (b * b - a * a) * r);
  CHECK(std::abs(got - compressible) / compressible < 0.02);
  CHECK(std::abs(got - incompressible) / incompressible < 0.02);
  CHECK(sol.residual_norm < 1e-8);
  CHECK(secs < 30.0);
}

TEST_CASE("zero and negative pressure") {
  const auto mesh = annulus_mesh({32, 32}, 8, 14, 1.5);
  const auto sol = solve_hyperelastic(mesh, 0.0, MaterialModel{});
  for (const auto& d : sol.nodal_disp) CHECK(d == Vec2{0, 0});
  CHECK(sol.residual_norm == 0.0);
  CHECK(error_kind([&] { solve_hyperelastic(mesh, -1.0, MaterialModel{}); }) == kind(ErrorKind::InvalidArgument));
}

TEST_CASE("internal force is the gradient of the strain energy") {
  const auto mesh = annulus_mesh({20, 20}, 6, 10, 1.5);
  const MaterialModel mat;
  Rng rng(3);
  std::vector<double> u(static_cast<std::size_t>(mesh.n_dofs()));
  for (auto& x : u) x = rng.uniform(-0.05, 0.05);
  const auto f = internal_force(mesh, mat, u);
  double num = 0, den = 0;
  for (int k = 0; k < mesh.n_dofs(); k += 7) {
    const double h = 1e-6;
    auto up = u, um = u;
    up[k] += h;
    um[k] -= h;
    const double fd = (strain_energy(mesh, mat, up) - strain_energy(mesh, mat, um)) / (2 * h);
    num += (fd - f[k]) * (fd - f[k]);
    den += f[k] * f[k];
  }
  CHECK(std::sqrt(num / den) < 1e-4);
}

TEST_CASE("solution rotates with the setup") {
  const auto mesh = annulus_mesh({32, 32}, 8, 14, 1.5);
  const auto rot = rotated(mesh, std::numbers::pi / 2, mesh.center);
  const MaterialModel mat;
  const auto s0 = solve_hyperelastic(mesh, 0.2 * mat.shear_modulus, mat);
  const auto s1 = solve_hyperelastic(rot, 0.2 * mat.shear_modulus, mat);
  double err = 0, ref = 0;
  for (std::size_t n = 0; n < mesh.nodes.size(); ++n) {
    const Vec2 d = s0.nodal_disp[n];
    const Vec2 expect{-d.y, d.x};
    err = std::max(err, (s1.nodal_disp[n] - expect).norm());
    ref = std::max(ref, d.norm());
  }
  CHECK(err < 1e-6 * ref);
}

TEST_CASE("mesh from mask") {
  const Grid g{64, 64};
  const Mask m = phantom::make_annulus_mask({32, 32}, 8, 14, g, 0.0);
  const auto mesh = mesh_from_mask(m, 1.5);
  CHECK_NOTHROW(validate_mesh(mesh));
  CHECK(std::abs(mesh_area(mesh) - m.myocardium_count()) / m.myocardium_count() < 0.05);
  for (int n : mesh.endo_nodes) CHECK(std::abs((mesh.nodes[n] - Vec2{32, 32}).norm() - 8.0) <= 1.0);
  for (int n : mesh.epi_nodes) CHECK(std::abs((mesh.nodes[n] - Vec2{32, 32}).norm() - 14.0) <= 1.0);
  for (std::size_t e = 0; e < mesh.elements.size(); ++e) CHECK(element_area(mesh, static_cast<int>(e), mesh.nodes) > 0);

  Mask two = m;
  for (int i = 0; i < 64; ++i) two.set(i, 32, m.at(i, 32) == Label::Cavity ? Label::Myocardium : m.at(i, 32));
  CHECK(error_kind([&] { mesh_from_mask(two, 1.5); }) == kind(ErrorKind::Topology));
  CHECK(error_kind([&] { mesh_from_mask(m, 7.0); }) == kind(ErrorKind::InvalidArgument));
}

TEST_CASE("inverse problem") {
  const auto mesh = annulus_mesh({32, 32}, 8, 14, 1.5);
  const MaterialModel mat;
  const double a0 = cavity_area(mesh);
  CHECK(inverse_fem_pressure(mesh, a0, mat) == 0.0);
  const double P = inverse_fem_pressure(mesh, 1.3 * a0, mat);
  CHECK(P > 0);
  const auto sol = solve_hyperelastic(mesh, P, mat);
  CHECK(std::abs(cavity_area(mesh, sol.nodal_disp) - 1.3 * a0) / (1.3 * a0) < 0.005);
  CHECK(inverse_fem_pressure(mesh, 1.3 * a0, mat) == P);
  CHECK(error_kind([&] { inverse_fem_pressure(mesh, 0.5 * a0, mat); }) == kind(ErrorKind::InvalidArgument));
}

TEST_CASE("cycle sampling") {
  const auto mesh = annulus_mesh({32, 32}, 8, 14, 1.5);
  const MaterialModel mat;
  const double P = 0.3 * mat.shear_modulus;
  const auto two = simulate_cycle(mesh, P, 2, mat);
  REQUIRE(two.size() == 2);
  CHECK(two[0].pressure == 0.0);
  for (const auto& d : two[0].nodal_disp) CHECK(d == Vec2{0, 0});
  CHECK(two[1].pressure == P);

  const auto cyc = simulate_cycle(mesh, P, 50, mat);
  REQUIRE(cyc.size() == 50);
  for (int k = 1; k < 50; ++k) {
    CHECK(cyc[k].pressure == doctest::Approx(P * k / 49.0));
    CHECK(mean_endo_disp(cyc[k], mesh) >= mean_endo_disp(cyc[k - 1], mesh));
    const auto v = volume_stats(mesh, cyc[k]);
    CHECK(v.mean_abs_dev < 0.02);
    CHECK(v.max_abs_dev < 0.05);
    for (double d : element_det_f(mesh, cyc[k].nodal_disp)) CHECK(d > 0);
  }
  CHECK(std::abs(cyc[49].nodal_disp[0].x - two[1].nodal_disp[0].x) < 1e-6);
  CHECK(error_kind([&] { simulate_cycle(mesh, P, 1, mat); }) == kind(ErrorKind::InvalidArgument));
}

TEST_CASE("rasterisation of prescribed nodal fields") {
  const Grid g{48, 48};
  const auto mesh = annulus_mesh({24, 24}, 7, 13, 1.5);
  FemSolution sol;
  sol.nodal_disp.assign(mesh.nodes.size(), Vec2{0, 0});

  SUBCASE("zero") {
    for (auto mode : {RasterMode::Reference, RasterMode::Deformed}) {
      const auto r = rasterise(mesh, sol, g, mode);
      CHECK(r.field.is_zero());
      CHECK(r.coverage.myocardium_count() > 0);
    }
  }
  SUBCASE("translation") {
    for (auto& d : sol.nodal_disp) d = {0.7, -0.4};
    const auto ref = rasterise(mesh, sol, g, RasterMode::Reference);
    const auto def = rasterise(mesh, sol, g, RasterMode::Deformed);
    for (int i = 0; i < g.rows; ++i)
      for (int j = 0; j < g.cols; ++j) {
        if (ref.coverage.myocardium(i, j)) {
          CHECK(ref.field.u(i, j) == doctest::Approx(0.7).epsilon(1e-9));
          CHECK(ref.field.v(i, j) == doctest::Approx(-0.4).epsilon(1e-9));
        } else {
          CHECK(ref.field.u(i, j) == 0.0);
        }
        if (def.coverage.myocardium(i, j)) {
          CHECK(def.field.u(i, j) == doctest::Approx(-0.7).epsilon(1e-9));
          CHECK(def.field.v(i, j) == doctest::Approx(0.4).epsilon(1e-9));
        }
      }
  }
  SUBCASE("linear") {
    for (std::size_t n = 0; n < mesh.nodes.size(); ++n) sol.nodal_disp[n] = {0.1 * mesh.nodes[n].x, 0.0};
    const auto ref = rasterise(mesh, sol, g, RasterMode::Reference);
    const auto def = rasterise(mesh, sol, g, RasterMode::Deformed);
    double e_ref = 0, e_def = 0;
    for (int i = 0; i < g.rows; ++i)
      for (int j = 0; j < g.cols; ++j) {
        if (ref.coverage.myocardium(i, j)) e_ref = std::max(e_ref, std::abs(ref.field.u(i, j) - 0.1 * j));
        if (def.coverage.myocardium(i, j)) e_def = std::max(e_def, std::abs(def.field.u(i, j) + 0.1 * j / 1.1));
      }
    CHECK(e_ref < 1e-6);
    CHECK(e_def < 1e-6);
  }
}

TEST_CASE("harmonic extension keeps covered values") {
  const Grid g{32, 32};
  const auto mesh = annulus_mesh({16, 16}, 5, 9, 1.5);
  FemSolution sol;
  sol.nodal_disp.resize(mesh.nodes.size());
  for (std::size_t n = 0; n < mesh.nodes.size(); ++n) sol.nodal_disp[n] = (mesh.nodes[n] - mesh.center) * 0.05;
  const auto r = rasterise(mesh, sol, g);
  const auto ext = extend_field(r.field, r.coverage);
  CHECK(ext.all_finite());
  for (int i = 1; i < g.rows - 1; ++i)
    for (int j = 1; j < g.cols - 1; ++j) {
      if (r.coverage.myocardium(i, j)) {
        CHECK(ext.u(i, j) == r.field.u(i, j));
      } else {
        const double avg = 0.25 * (ext.u(i - 1, j) + ext.u(i + 1, j) + ext.u(i, j - 1) + ext.u(i, j + 1));
        CHECK(ext.u(i, j) == doctest::Approx(avg).epsilon(1e-8));
      }
    }
}

TEST_CASE("simulated cycle from a mask") {
  const Grid g{64, 64};
  const auto geo = phantom::sample_geometry(g, 1);
  const Mask m = phantom::make_annulus_mask(geo.center, geo.r_endo, geo.r_epi, g, geo.eccentricity, geo.orientation);
  const auto sim = simulate_from_mask(m, geo.area_ratio, SimulationConfig{});
  REQUIRE(sim.fields.size() == 50);
  CHECK(sim.fields[0].is_zero());
  CHECK(sim.P_ED > 0);
  const double a0 = cavity_area(sim.mesh);
  CHECK(std::abs(cavity_area(sim.mesh, sim.solutions.back().nodal_disp) / a0 - geo.area_ratio) <
        0.005 * geo.area_ratio);
  for (const auto& v : sim.volume) {
    CHECK(v.mean_abs_dev < 0.02);
    CHECK(v.max_abs_dev < 0.05);
  }
  const auto st = metrics::strain(sim.fields.back(), sim.coverage.back(), m.cavity_centroid());
  CHECK(st.rr_pct > 0);
  CHECK(st.cc_pct < 0);

  testutil::TempDir tmp;
  SimulationConfig cfg;
  save_simulation(tmp / "sim_0", 0, sim, cfg);
  const auto back = load_simulation(tmp / "sim_0");
  CHECK(back.fields.size() == 50);
  CHECK(back.P_ED == sim.P_ED);
  CHECK(back.coverage.back() == sim.coverage.back());
  double e = 0;
  for (int i = 0; i < g.rows; ++i)
    for (int j = 0; j < g.cols; ++j) e = std::max(e, std::abs(back.fields[30].u(i, j) - sim.fields[30].u(i, j)));
  CHECK(e < 1e-5);
}
}
