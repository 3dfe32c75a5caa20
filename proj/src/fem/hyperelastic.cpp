// SPDX-License-Identifier: Apache-2.0
#include "fem/hyperelastic.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <cmath>
#include <limits>

namespace cardioreg::fem {

void MaterialModel::validate() const {
  if (!(shear_modulus > 0)) fail(ErrorKind::Config, "material: shear modulus must be > 0");
  if (!(bulk_modulus >= 100.0 * shear_modulus)) fail(ErrorKind::Config, "material: bulk penalty must be >= 100 mu");
}

bool neo_hookean_density(const MaterialModel& mat, const std::array<double, 4>& f, DensityEval& out,
                         bool want_hessian, bool deviatoric, bool volumetric) {
  const double J = f[0] * f[3] - f[1] * f[2];
  if (!(J > 0)) return false;
  const double I1 = f[0] * f[0] + f[1] * f[1] + f[2] * f[2] + f[3] * f[3];
  const std::array<double, 4> gJ{f[3], -f[2], -f[1], f[0]};
  // Hessian of J: d2J/dF11dF22 = 1, d2J/dF12dF21 = -1.
  auto HJ = [](int p, int q) {
    if ((p == 0 && q == 3) || (p == 3 && q == 0)) return 1.0;
    if ((p == 1 && q == 2) || (p == 2 && q == 1)) return -1.0;
    return 0.0;
  };
  out.W = 0;
  out.dW.fill(0);
  out.d2W.fill(0);
  if (deviatoric) {
    const double mu = mat.shear_modulus;
    out.W += 0.5 * mu * (I1 / J - 2.0);
    for (int p = 0; p < 4; ++p) out.dW[p] += 0.5 * mu * (2.0 * f[p] / J - I1 * gJ[p] / (J * J));
    if (want_hessian)
      for (int p = 0; p < 4; ++p)
        for (int q = 0; q < 4; ++q)
          out.d2W[4 * p + q] += 0.5 * mu *
                                ((p == q ? 2.0 / J : 0.0) - 2.0 * (f[p] * gJ[q] + gJ[p] * f[q]) / (J * J) -
                                 I1 * HJ(p, q) / (J * J) + 2.0 * I1 * gJ[p] * gJ[q] / (J * J * J));
  }
  if (volumetric) {
    const double k = mat.bulk_modulus;
    out.W += 0.5 * k * (J - 1.0) * (J - 1.0);
    for (int p = 0; p < 4; ++p) out.dW[p] += k * (J - 1.0) * gJ[p];
    if (want_hessian)
      for (int p = 0; p < 4; ++p)
        for (int q = 0; q < 4; ++q) out.d2W[4 * p + q] += k * (gJ[p] * gJ[q] + (J - 1.0) * HJ(p, q));
  }
  return true;
}

namespace {

struct QuadraturePoint {
  std::array<std::array<double, 2>, 4> dNdX;  // per local node: d/dx, d/dy
  double weight = 0;                          // Gauss weight * reference Jacobian
  bool deviatoric = false;
  bool volumetric = false;
};

struct Discretisation {
  const QuadMesh* mesh = nullptr;
  std::vector<std::array<QuadraturePoint, 5>> points;  // 4 Gauss + centre per element

  explicit Discretisation(const QuadMesh& m) : mesh(&m) {
    constexpr double xi_a[4] = {-1, 1, 1, -1};
    constexpr double eta_a[4] = {-1, -1, 1, 1};
    const double g = 1.0 / std::sqrt(3.0);
    const double gp[5][3] = {{-g, -g, 1.0}, {g, -g, 1.0}, {g, g, 1.0}, {-g, g, 1.0}, {0.0, 0.0, 4.0}};
    points.resize(m.elements.size());
    for (std::size_t e = 0; e < m.elements.size(); ++e) {
      for (int q = 0; q < 5; ++q) {
        const double xi = gp[q][0], eta = gp[q][1];
        double dNxi[4], dNeta[4];
        for (int a = 0; a < 4; ++a) {
          dNxi[a] = 0.25 * xi_a[a] * (1 + eta_a[a] * eta);
          dNeta[a] = 0.25 * eta_a[a] * (1 + xi_a[a] * xi);
        }
        double j11 = 0, j12 = 0, j21 = 0, j22 = 0;  // d(x,y)/d(xi,eta)
        for (int a = 0; a < 4; ++a) {
          const Vec2 X = m.nodes[m.elements[e][a]];
          j11 += X.x * dNxi[a];
          j12 += X.x * dNeta[a];
          j21 += X.y * dNxi[a];
          j22 += X.y * dNeta[a];
        }
        const double det = j11 * j22 - j12 * j21;
        require(det > 0, "element " + std::to_string(e) + " is inverted in the reference configuration");
        QuadraturePoint& qp = points[e][q];
        for (int a = 0; a < 4; ++a) {
          // [dN/dx, dN/dy] = [dN/dxi, dN/deta] * J^-1
          qp.dNdX[a][0] = (dNxi[a] * j22 - dNeta[a] * j21) / det;
          qp.dNdX[a][1] = (-dNxi[a] * j12 + dNeta[a] * j11) / det;
        }
        qp.weight = gp[q][2] * det;
        qp.deviatoric = q < 4;
        qp.volumetric = q == 4;
      }
    }
  }

  std::array<double, 4> deformation_gradient(int e, const QuadraturePoint& qp, const std::vector<double>& u) const {
    std::array<double, 4> f{1, 0, 0, 1};
    for (int a = 0; a < 4; ++a) {
      const int n = mesh->elements[e][a];
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) f[2 * i + j] += u[2 * n + i] * qp.dNdX[a][j];
    }
    return f;
  }

  // Energy, optionally gradient and Hessian triplets; false when inverted.
  bool assemble(const MaterialModel& mat, const std::vector<double>& u, double& energy, std::vector<double>* grad,
                std::vector<Eigen::Triplet<double>>* hess) const {
    energy = 0;
    if (grad) grad->assign(u.size(), 0.0);
    DensityEval d;
    for (std::size_t e = 0; e < points.size(); ++e) {
      for (const auto& qp : points[e]) {
        const auto f = deformation_gradient(static_cast<int>(e), qp, u);
        if (!neo_hookean_density(mat, f, d, hess != nullptr, qp.deviatoric, qp.volumetric)) return false;
        energy += qp.weight * d.W;
        if (!grad) continue;
        double gl[8] = {};
        for (int a = 0; a < 4; ++a)
          for (int k = 0; k < 2; ++k)
            for (int j = 0; j < 2; ++j) gl[2 * a + k] += qp.weight * d.dW[2 * k + j] * qp.dNdX[a][j];
        for (int a = 0; a < 4; ++a)
          for (int k = 0; k < 2; ++k) (*grad)[2 * mesh->elements[e][a] + k] += gl[2 * a + k];
        if (!hess) continue;
        for (int a = 0; a < 4; ++a)
          for (int k = 0; k < 2; ++k)
            for (int b = 0; b < 4; ++b)
              for (int l = 0; l < 2; ++l) {
                double h = 0;
                for (int j = 0; j < 2; ++j)
                  for (int m = 0; m < 2; ++m) h += d.d2W[4 * (2 * k + j) + (2 * l + m)] * qp.dNdX[a][j] * qp.dNdX[b][m];
                hess->emplace_back(2 * mesh->elements[e][a] + k, 2 * mesh->elements[e][b] + l, qp.weight * h);
              }
      }
    }
    return true;
  }
};

std::vector<double> flatten(const std::vector<Vec2>& disp) {
  std::vector<double> u(2 * disp.size());
  for (std::size_t n = 0; n < disp.size(); ++n) {
    u[2 * n] = disp[n].x;
    u[2 * n + 1] = disp[n].y;
  }
  return u;
}

std::vector<Vec2> unflatten(const std::vector<double>& u) {
  std::vector<Vec2> d(u.size() / 2);
  for (std::size_t n = 0; n < d.size(); ++n) d[n] = {u[2 * n], u[2 * n + 1]};
  return d;
}

double loop_area(const QuadMesh& mesh, const std::vector<double>& u) {
  double a = 0;
  const auto& loop = mesh.endo_nodes;
  const std::size_t n = loop.size();
  for (std::size_t k = 0; k < n; ++k) {
    const int p = loop[k], q = loop[(k + 1) % n];
    const double xp = mesh.nodes[p].x + u[2 * p], yp = mesh.nodes[p].y + u[2 * p + 1];
    const double xq = mesh.nodes[q].x + u[2 * q], yq = mesh.nodes[q].y + u[2 * q + 1];
    a += xp * yq - xq * yp;
  }
  return 0.5 * a;
}

void loop_area_gradient(const QuadMesh& mesh, const std::vector<double>& u, std::vector<double>& g, double scale) {
  const auto& loop = mesh.endo_nodes;
  const std::size_t n = loop.size();
  for (std::size_t k = 0; k < n; ++k) {
    const int prev = loop[(k + n - 1) % n], cur = loop[k], next = loop[(k + 1) % n];
    const double y_next = mesh.nodes[next].y + u[2 * next + 1], y_prev = mesh.nodes[prev].y + u[2 * prev + 1];
    const double x_next = mesh.nodes[next].x + u[2 * next], x_prev = mesh.nodes[prev].x + u[2 * prev];
    g[2 * cur] += scale * 0.5 * (y_next - y_prev);
    g[2 * cur + 1] += scale * 0.5 * (x_prev - x_next);
  }
}

void loop_area_hessian(const QuadMesh& mesh, std::vector<Eigen::Triplet<double>>& t, double scale) {
  const auto& loop = mesh.endo_nodes;
  const std::size_t n = loop.size();
  for (std::size_t k = 0; k < n; ++k) {
    const int p = loop[k], q = loop[(k + 1) % n];
    // d2(x_p y_q - x_q y_p)/2
    t.emplace_back(2 * p, 2 * q + 1, 0.5 * scale);
    t.emplace_back(2 * q + 1, 2 * p, 0.5 * scale);
    t.emplace_back(2 * q, 2 * p + 1, -0.5 * scale);
    t.emplace_back(2 * p + 1, 2 * q, -0.5 * scale);
  }
}

// Orthonormal rows spanning the rigid-mode constraints on the fixed nodes.
std::vector<std::vector<double>> constraint_rows(const QuadMesh& mesh) {
  const int nd = mesh.n_dofs();
  Vec2 mean;
  for (int n : mesh.fixed_nodes) mean = mean + mesh.nodes[n];
  mean = mean * (1.0 / mesh.fixed_nodes.size());
  std::vector<std::vector<double>> rows(3, std::vector<double>(nd, 0.0));
  for (int n : mesh.fixed_nodes) {
    const Vec2 d = mesh.nodes[n] - mean;
    rows[0][2 * n] = 1.0;
    rows[1][2 * n + 1] = 1.0;
    rows[2][2 * n] = -d.y;
    rows[2][2 * n + 1] = d.x;
  }
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t s = 0; s < r; ++s) {
      double dot = 0;
      for (int i = 0; i < nd; ++i) dot += rows[r][i] * rows[s][i];
      for (int i = 0; i < nd; ++i) rows[r][i] -= dot * rows[s][i];
    }
    double nrm = 0;
    for (double x : rows[r]) nrm += x * x;
    nrm = std::sqrt(nrm);
    for (double& x : rows[r]) x /= nrm;
  }
  return rows;
}

double norm(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

class NewtonSolver {
 public:
  NewtonSolver(const QuadMesh& mesh, const MaterialModel& mat, const SolverOptions& opts)
      : mesh_(mesh), mat_(mat), opts_(opts), disc_(mesh), rows_(constraint_rows(mesh)) {}

  double potential(double pressure, const std::vector<double>& u) const {
    double e = 0;
    if (!disc_.assemble(mat_, u, e, nullptr, nullptr)) return std::numeric_limits<double>::infinity();
    return e - pressure * loop_area(mesh_, u);
  }

  // Relative projected residual at (pressure, u); g receives the gradient.
  double residual(double pressure, const std::vector<double>& u, std::vector<double>& g, double& energy) const {
    if (!disc_.assemble(mat_, u, energy, &g, nullptr)) return std::numeric_limits<double>::infinity();
    return relative(pressure, u, g);
  }

  double relative(double pressure, const std::vector<double>& u, std::vector<double>& g) const {
    std::vector<double> fext(u.size(), 0.0);
    loop_area_gradient(mesh_, u, fext, pressure);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] -= fext[i];
    std::vector<double> r = g;
    for (const auto& row : rows_) {
      double dot = 0;
      for (std::size_t i = 0; i < r.size(); ++i) dot += row[i] * g[i];
      for (std::size_t i = 0; i < r.size(); ++i) r[i] -= dot * row[i];
    }
    const double load = norm(fext);
    return load > 0 ? norm(r) / load : norm(r);
  }

  // Newton iterations at fixed pressure; u is updated in place on success.
  bool solve(double pressure, std::vector<double>& u, int& iters, double& resid) {
    const int nd = mesh_.n_dofs();
    const int nc = static_cast<int>(rows_.size());
    std::vector<double> g;
    double energy = 0;
    resid = residual(pressure, u, g, energy);
    iters = 0;
    for (; iters < opts_.max_newton_iters; ++iters) {
      if (resid < opts_.rel_tolerance) return true;
      std::vector<Eigen::Triplet<double>> trip;
      double e_tmp = 0;
      std::vector<double> g_tmp;
      if (!disc_.assemble(mat_, u, e_tmp, &g_tmp, &trip)) return false;
      loop_area_hessian(mesh_, trip, -pressure);
      for (int c = 0; c < nc; ++c)
        for (int i = 0; i < nd; ++i)
          if (rows_[c][i] != 0.0) {
            trip.emplace_back(nd + c, i, rows_[c][i]);
            trip.emplace_back(i, nd + c, rows_[c][i]);
          }
      Eigen::SparseMatrix<double> K(nd + nc, nd + nc);
      K.setFromTriplets(trip.begin(), trip.end());
      K.makeCompressed();
      if (!analysed_) {
        lu_.analyzePattern(K);
        analysed_ = true;
      }
      lu_.factorize(K);
      if (lu_.info() != Eigen::Success) return false;
      Eigen::VectorXd rhs(nd + nc);
      for (int i = 0; i < nd; ++i) rhs[i] = -g[i];
      for (int c = 0; c < nc; ++c) {
        double cu = 0;
        for (int i = 0; i < nd; ++i) cu += rows_[c][i] * u[i];
        rhs[nd + c] = -cu;
      }
      const Eigen::VectorXd sol = lu_.solve(rhs);
      if (lu_.info() != Eigen::Success || !sol.allFinite()) return false;

      double slope = 0;
      for (int i = 0; i < nd; ++i) slope += g[i] * sol[i];
      const double pi0 = energy - pressure * loop_area(mesh_, u);
      double step = 1.0;
      std::vector<double> trial(u.size());
      bool accepted = false;
      for (int ls = 0; ls < 20; ++ls, step *= 0.5) {
        for (int i = 0; i < nd; ++i) trial[i] = u[i] + step * sol[i];
        const double pi1 = potential(pressure, trial);
        if (std::isfinite(pi1) && pi1 <= pi0 + 1e-4 * step * std::min(slope, 0.0) + 1e-12 * std::abs(pi0)) {
          accepted = true;
          break;
        }
      }
      if (!accepted) return false;
      u.swap(trial);
      resid = residual(pressure, u, g, energy);
      if (!std::isfinite(resid)) return false;
    }
    return resid < opts_.rel_tolerance;
  }

 private:
  const QuadMesh& mesh_;
  MaterialModel mat_;
  SolverOptions opts_;
  Discretisation disc_;
  std::vector<std::vector<double>> rows_;
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu_;
  bool analysed_ = false;
};

}  // namespace

double strain_energy(const QuadMesh& mesh, const MaterialModel& mat, const std::vector<double>& u) {
  Discretisation disc(mesh);
  double e = 0;
  if (!disc.assemble(mat, u, e, nullptr, nullptr)) return std::numeric_limits<double>::infinity();
  return e;
}

std::vector<double> internal_force(const QuadMesh& mesh, const MaterialModel& mat, const std::vector<double>& u) {
  Discretisation disc(mesh);
  double e = 0;
  std::vector<double> g;
  if (!disc.assemble(mat, u, e, &g, nullptr)) fail(ErrorKind::InvalidArgument, "internal_force: inverted element");
  return g;
}

double cavity_area(const QuadMesh& mesh, const std::vector<Vec2>& disp) { return loop_area(mesh, flatten(disp)); }

double cavity_area(const QuadMesh& mesh) { return loop_area(mesh, std::vector<double>(mesh.n_dofs(), 0.0)); }

std::vector<double> element_det_f(const QuadMesh& mesh, const std::vector<Vec2>& disp) {
  Discretisation disc(mesh);
  const auto u = flatten(disp);
  std::vector<double> out(mesh.elements.size());
  for (std::size_t e = 0; e < out.size(); ++e) {
    const auto f = disc.deformation_gradient(static_cast<int>(e), disc.points[e][4], u);
    out[e] = f[0] * f[3] - f[1] * f[2];
  }
  return out;
}

FemSolution solve_from(const QuadMesh& mesh, const FemSolution& start, double pressure, const MaterialModel& mat,
                       const SolverOptions& opts) {
  mat.validate();
  require(pressure >= 0, "solve_hyperelastic: pressure must be >= 0");
  require(start.nodal_disp.size() == mesh.nodes.size(), "solve_from: start state does not match mesh");
  FemSolution out;
  out.pressure = pressure;
  if (pressure == 0.0) {
    out.nodal_disp.assign(mesh.nodes.size(), Vec2{});
    return out;
  }
  NewtonSolver solver(mesh, mat, opts);
  std::vector<double> u = flatten(start.nodal_disp);
  double p = start.pressure;
  const double span = pressure - p;
  double dp = span;
  const double min_dp = std::abs(span) / std::ldexp(1.0, opts.max_halvings);
  double last_resid = std::numeric_limits<double>::infinity();
  int total_iters = 0;
  while (p != pressure) {
    double p_try = p + dp;
    if ((span > 0 && p_try > pressure) || (span < 0 && p_try < pressure)) p_try = pressure;
    std::vector<double> trial = u;
    int iters = 0;
    double resid = 0;
    const bool ok = solver.solve(p_try, trial, iters, resid);
    total_iters += iters;
    last_resid = resid;
    if (ok) {
      u.swap(trial);
      p = p_try;
      out.residual_norm = resid;
      dp *= 2.0;
    } else {
      dp *= 0.5;
      if (std::abs(dp) < min_dp)
        throw NonConvergenceError("Newton solver diverged at pressure " + std::to_string(p_try) +
                                      " kPa after load-step halving (last residual " + std::to_string(last_resid) + ")",
                                  last_resid);
    }
  }
  out.nodal_disp = unflatten(u);
  out.newton_iters = total_iters;
  return out;
}

FemSolution solve_hyperelastic(const QuadMesh& mesh, double pressure, const MaterialModel& mat,
                               const SolverOptions& opts) {
  require(pressure >= 0, "solve_hyperelastic: pressure must be >= 0");
  FemSolution zero;
  zero.nodal_disp.assign(mesh.nodes.size(), Vec2{});
  return solve_from(mesh, zero, pressure, mat, opts);
}

}  // namespace cardioreg::fem
