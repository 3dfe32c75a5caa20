// SPDX-License-Identifier: Apache-2.0
//
// End-to-end acceptance run on the desk-scale configuration. Prints one
// PASS/FAIL line per criterion and exits non-zero when any criterion fails.
//
// Environment:
//   CARDIOREG_ACCEPTANCE_DIR    work directory (default: build tree)
//   CARDIOREG_ACCEPTANCE_REUSE  1 keeps finished stages from an earlier run
//                               with the same configuration hash
#include <torch/torch.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "common/error.hpp"
#include "common/rng.hpp"
#include "common/tensor_io.hpp"
#include "fem/hyperelastic.hpp"
#include "fem/mesh.hpp"
#include "harness/config.hpp"
#include "harness/pipeline.hpp"
#include "metrics/metrics.hpp"
#include "phantom/phantom.hpp"
#include "regnet/regnet.hpp"
#include "regnet/warp.hpp"
#include "vae/grad_field.hpp"
#include "vae/vae.hpp"

using namespace cardioreg;
namespace fs = std::filesystem;
using io::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double x, int prec = 4) {
  std::ostringstream os;
  os.precision(prec);
  os << x;
  return os.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

double peak(const json& s, const char* metric) { return s.at("peak_pair").at(metric).at("mean").get<double>(); }

void log(const std::string& msg) { std::fprintf(stderr, "[acceptance] %s\n", msg.c_str()); }

const std::string kStages[] = {"data",    "vae",      "sweep",     "eval_vae", "eval_vae_repeat",
                               "eval_gt", "reg_none", "eval_none", "reg_l2",   "eval_l2"};

class Runner {
 public:
  Runner(harness::ExperimentConfig cfg, fs::path root, bool reuse) : cfg_(std::move(cfg)), root_(std::move(root)) {
    const fs::path stamp = root_ / "config_hash";
    if (!(reuse && fs::exists(stamp) && slurp(stamp) == cfg_.hash())) {
      fs::create_directories(root_);
      for (const auto& e : fs::directory_iterator(root_))
        if (std::find(std::begin(kStages), std::end(kStages), e.path().filename().string()) != std::end(kStages) ||
            e.path().filename().string().find(".partial-") != std::string::npos)
          fs::remove_all(e.path());
      std::ofstream(stamp) << cfg_.hash();
    }
  }

  // Runs `fn(out)` unless `name` already exists, then returns its path.
  fs::path stage(const std::string& name, const std::function<void(const fs::path&)>& fn) {
    const fs::path out = root_ / name;
    if (fs::exists(out)) {
      log("reusing " + name);
      return out;
    }
    log("running " + name);
    const auto t0 = std::chrono::steady_clock::now();
    fn(out);
    log(name + " took " + fmt(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 5) +
        " s");
    return out;
  }

  const harness::ExperimentConfig& cfg() const { return cfg_; }

 private:
  harness::ExperimentConfig cfg_;
  fs::path root_;
};

// Central-difference check of d loss / d phi on a double 8x8 field.
double fd_rel_error(const std::function<torch::Tensor(const torch::Tensor&)>& loss, const torch::Tensor& phi0) {
  auto phi = phi0.clone().set_requires_grad(true);
  loss(phi).backward();
  const auto grad = phi.grad();
  torch::NoGradGuard ng;
  auto fd = torch::zeros_like(phi0);
  const double h = 1e-6;
  for (int64_t k = 0; k < phi0.numel(); ++k) {
    auto p = phi0.clone(), q = phi0.clone();
    p.view(-1)[k] += h;
    q.view(-1)[k] -= h;
    fd.view(-1)[k] = (loss(p) - loss(q)) / (2 * h);
  }
  return ((grad - fd).norm() / fd.norm()).item<double>();
}

Outcome fem_closed_form() {
  const double a = 10, b = 16;
  const auto mesh = fem::annulus_mesh({48, 48}, a, b, 0.5);
  const fem::MaterialModel mat;
  const double P = 1e-3 * mat.shear_modulus, mu = mat.shear_modulus;
  const auto t0 = std::chrono::steady_clock::now();
  const auto sol = fem::solve_hyperelastic(mesh, P, mat);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const int jm = mesh.n_radial / 2;
  const double r = a + (b - a) * jm / mesh.n_radial;
  double got = 0;
  for (int k = 0; k < mesh.n_theta; ++k) {
    const int n = mesh.node_index(k, jm);
    const Vec2 d = mesh.nodes[n] - mesh.center;
    got += sol.nodal_disp[n].dot(d * (1.0 / d.norm()));
  }
  got /= mesh.n_theta;
  const double want = P * a * a * b * b / (2 * mu * (b * b - a * a) * r);
  const double rel = std::abs(got - want) / want;
  return {rel < 0.02 && secs < 30.0, "rel err " + fmt(rel) + ", solve " + fmt(secs, 3) + " s"};
}

Outcome incompressibility(const fs::path& data) {
  const auto ds = io::read_json(data / "dataset.json");
  const auto& cases = ds.at("cases");
  double worst = 0;
  int n = 0;
  for (const auto& c : cases) {
    if (n == 20) break;
    worst = std::max(worst, c.at("worst_mean_abs_detF_dev").get<double>());
    ++n;
  }
  return {n == 20 && worst < 0.02, std::to_string(n) + " cycles, worst per-solution mean |detF-1| " + fmt(worst)};
}

Outcome manifold_separation(const harness::ExperimentConfig& cfg, const fs::path& data, const fs::path& vae_dir) {
  auto model = vae::load_vae(vae_dir);
  model.freeze();
  const auto ds = harness::open_dataset(data);
  const auto cases = harness::load_cases(ds, ds.splits.test, cfg.jobs);
  Rng rng(derive_seed(cfg.seed, 9001));
  double s_gt = 0, s_rand = 0;
  int n = 0;
  for (const auto& c : cases)
    for (int t : regnet::pair_frames(c.n_frames(), cfg.eval_frame_stride)) {
      if (t == 0) continue;
      const auto gt = vae::apply_mask(vae::grad_field(c.gt_fields[t]), c.masks[0]);
      DisplacementField r(ds.grid);
      for (auto& x : r.u.values()) x = rng.normal();
      for (auto& x : r.v.values()) x = rng.normal();
      r.u = phantom::gaussian_blur(r.u, 3.0);
      r.v = phantom::gaussian_blur(r.v, 3.0);
      auto rg = vae::apply_mask(vae::grad_field(r), c.masks[0]);
      const double k = vae::rms(gt) / vae::rms(rg);
      for (auto& ch : rg.channel)
        for (auto& x : ch.values()) x *= k;
      s_gt += vae::score(model, gt, &c.masks[0]);
      s_rand += vae::score(model, rg, &c.masks[0]);
      ++n;
    }
  s_gt /= n;
  s_rand /= n;
  const double ratio = s_gt / s_rand;
  return {n >= 50 && ratio <= 0.5, std::to_string(n) + " pairs, mean score gt " + fmt(s_gt) + " vs random " +
                                       fmt(s_rand) + ", ratio " + fmt(ratio)};
}

Outcome gradient_checks() {
  torch::manual_seed(5);
  const Grid g{8, 8};
  vae::VaeConfig vc;
  vc.latent_dim = 4;
  vc.channels = {4, 8};
  vc.grid = g;
  vae::VaeModel model(vc, 11);
  model.to(torch::kDouble);
  model.freeze();
  const auto phi0 = torch::rand({1, 2, 8, 8}, torch::kDouble) * 0.5 + 0.25;
  const auto eps = torch::randn({1, 4}, torch::kDouble);
  const double e_vae = fd_rel_error(
      [&](const torch::Tensor& phi) { return model.terms(vae::grad_field(phi), &eps).total.sum(); }, phi0);

  const auto target = torch::rand({1, 1, 8, 8}, torch::kDouble);
  const auto source = torch::rand({1, 1, 8, 8}, torch::kDouble);
  Mask m(g);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) {
      const double d = std::hypot(i - 3.5, j - 3.5);
      if (d >= 1.5 && d <= 3.5) m.set(i, j, Label::Myocardium);
    }
  const auto mask = regnet::myocardium_tensor(m);
  regnet::TrainConfig tc;
  tc.reg = regnet::RegKind::Vae;
  tc.alpha = 0.5;
  const double e_total = fd_rel_error(
      [&](const torch::Tensor& phi) { return regnet::total_loss(target, source, phi, mask, tc, &model).total; },
      phi0);
  return {e_vae < 1e-4 && e_total < 1e-4, "vae_loss rel " + fmt(e_vae, 3) + ", total_loss rel " + fmt(e_total, 3)};
}

Outcome recovery(const json& s) {
  const double epe = peak(s, "epe_px"), d = peak(s, "dice");
  return {epe <= 1.0 && d >= 0.8, "EPE " + fmt(epe) + " px, Dice " + fmt(d)};
}

Outcome alpha_trend(const fs::path& sweep) {
  std::ifstream is(sweep / "sweep.csv");
  std::string line;
  std::getline(is, line);
  std::vector<std::pair<double, double>> rows;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string a, j;
    std::getline(ls, a, ',');
    std::getline(ls, j, ',');
    rows.push_back({std::stod(a), std::stod(j)});
  }
  std::sort(rows.begin(), rows.end());
  bool ok = rows.size() == 4;
  std::string d;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (k > 0 && rows[k].second > rows[k - 1].second) ok = false;
    d += (k ? ", " : "") + fmt(rows[k].first) + ":" + fmt(rows[k].second, 5);
  }
  return {ok, "val jac_dev by alpha " + d};
}

Outcome pareto(const json& v, const json& l2, double lambda) {
  const double jv = peak(v, "jac_dev"), jl = peak(l2, "jac_dev");
  const double dv = peak(v, "dice"), dl = peak(l2, "dice");
  const bool equal_j = std::abs(jv - jl) <= 1e-3;
  const bool ok = (jv < jl && dv >= dl) || (dv > dl && equal_j);
  return {ok, "VAE jac_dev " + fmt(jv) + " Dice " + fmt(dv) + " vs L2 (weight " + fmt(lambda, 3) + ") jac_dev " +
                  fmt(jl) + " Dice " + fmt(dl)};
}

Outcome jacobian_band(const json& v, const json& none) {
  const auto cv = v.at("mean_detJ_curve").get<std::vector<double>>();
  const auto cn = none.at("mean_detJ_curve").get<std::vector<double>>();
  const auto [lo, hi] = std::minmax_element(cv.begin(), cv.end());
  const bool in_band = *lo >= 0.9 && *hi <= 1.1;
  const double at_peak = cn.back();
  const bool exits = at_peak < 0.9 || at_peak > 1.1;
  return {in_band && exits, "VAE curve in [" + fmt(*lo) + ", " + fmt(*hi) + "]; alpha=0 at peak " + fmt(at_peak) +
                                (exits ? " (outside band)" : " (inside band)")};
}

Outcome metric_suite(const json& gt) {
  std::vector<std::string> bad;
  auto expect = [&](bool c, const char* what) {
    if (!c) bad.push_back(what);
  };
  const Grid g{32, 32};
  Mask ring(g), shifted(g);
  for (int i = 0; i < 32; ++i)
    for (int j = 0; j < 32; ++j) {
      const double d = std::hypot(i - 15.5, j - 15.5);
      if (d >= 6 && d <= 12) ring.set(i, j, Label::Myocardium);
    }
  expect(metrics::dice(ring, ring) == 1.0, "dice identical");
  expect(metrics::mcd(ring, ring) == 0.0, "mcd identical");
  DisplacementField f(g);
  const auto jz = metrics::jacobian(f);
  expect(metrics::jac_dev(jz, ring) == 0.0, "jac_dev zero field");
  for (int i = 0; i < 32; ++i)
    for (int j = 0; j < 32; ++j) f.u(i, j) = 0.1 * j;
  const auto jx = metrics::jacobian(f);
  expect(std::abs(jx.det(10, 10) - 1.1) < 1e-6, "detJ of u=0.1x");
  for (int i = 0; i < 32; ++i)
    for (int j = 0; j < 32; ++j) f.v(i, j) = 0.1 * i;
  const auto sv = metrics::strain(f, ring, {15.5, 15.5});
  expect(sv.rr_pct > 0 && sv.cc_pct > 0, "uniform scaling strain");
  const double rr = gt.at("peak_strain").at("rr_pct").at("mean").get<double>();
  const double cc = gt.at("peak_strain").at("cc_pct").at("mean").get<double>();
  expect(rr > 0 && cc < 0, "strain signs on FEM cycles");
  std::string d = "FEM peak RR " + fmt(rr) + "%, CC " + fmt(cc) + "%";
  for (const auto& b : bad) d += "; failed: " + b;
  return {bad.empty(), d};
}

}  // namespace

int main() {
  const char* dir_env = std::getenv("CARDIOREG_ACCEPTANCE_DIR");
  const char* reuse_env = std::getenv("CARDIOREG_ACCEPTANCE_REUSE");
  const fs::path root = dir_env ? fs::path(dir_env) : fs::path(CARDIOREG_ACCEPTANCE_WORKDIR);
  const bool reuse = reuse_env && std::string(reuse_env) == "1";
  torch::set_num_threads(1);

  std::vector<Outcome> out(10);
  const char* names[10] = {"FEM closed form",       "simulation incompressibility", "VAE manifold separation",
                           "gradient checks",       "registration recovery",        "alpha trend",
                           "VAE vs L2 Pareto",      "Jacobian vs phase",            "metric suite",
                           "evaluation determinism"};
  auto guarded = [&](int k, const std::function<Outcome()>& fn) {
    try {
      out[k] = fn();
    } catch (const std::exception& e) {
      out[k] = {false, std::string("error: ") + e.what()};
    }
  };

  guarded(0, fem_closed_form);
  guarded(3, gradient_checks);
  try {
    Runner run(harness::load_config(CARDIOREG_ACCEPTANCE_CONFIG), root, reuse);
    const auto& cfg = run.cfg();
    const auto data = run.stage("data", [&](const fs::path& o) { harness::cmd_simulate(cfg, o); });
    guarded(1, [&] { return incompressibility(data); });
    const auto vae_dir = run.stage("vae", [&](const fs::path& o) { harness::cmd_train_vae(cfg, data, o); });
    guarded(2, [&] { return manifold_separation(cfg, data, vae_dir); });

    auto on_val = cfg;
    on_val.eval_split = "val";
    const auto sweep =
        run.stage("sweep", [&](const fs::path& o) { harness::cmd_sweep_alpha(on_val, data, vae_dir, o); });
    guarded(5, [&] { return alpha_trend(sweep); });

    std::ostringstream aname;
    aname << "alpha_" << cfg.alpha;
    const auto vae_ckpt = sweep / aname.str() / "checkpoint";
    const auto src = harness::EvalSource{harness::EvalSource::Kind::Model, vae_ckpt};
    const auto e_vae = run.stage("eval_vae", [&](const fs::path& o) { harness::cmd_evaluate(cfg, data, src, o); });
    const auto e_vae2 = run.stage("eval_vae_repeat", [&](const fs::path& o) { harness::cmd_evaluate(cfg, data, src, o); });
    const auto s_vae = io::read_json(e_vae / "summary.json");
    guarded(4, [&] { return recovery(s_vae); });
    guarded(9, [&] {
      const bool same = slurp(e_vae / "report.csv") == slurp(e_vae2 / "report.csv");
      return Outcome{same && !slurp(e_vae / "report.csv").empty(),
                     same ? "report.csv byte-identical" : "report.csv differs"};
    });

    const auto e_gt = run.stage("eval_gt", [&](const fs::path& o) {
      harness::cmd_evaluate(cfg, data, harness::eval_source_from_string("gt"), o);
    });
    guarded(8, [&] { return metric_suite(io::read_json(e_gt / "summary.json")); });

    auto none = cfg;
    none.regulariser = "none";
    none.alpha = 0.0;
    const auto r_none = run.stage("reg_none", [&](const fs::path& o) { harness::cmd_train_reg(none, data, std::nullopt, o); });
    const auto e_none = run.stage("eval_none", [&](const fs::path& o) {
      harness::cmd_evaluate(cfg, data, harness::EvalSource{harness::EvalSource::Kind::Model, r_none}, o);
    });
    guarded(7, [&] { return jacobian_band(s_vae, io::read_json(e_none / "summary.json")); });

    // L2 weight matched to the VAE term magnitude on training ground truth.
    double lambda = 0;
    {
      auto model = vae::load_vae(vae_dir);
      model.freeze();
      const auto ds = harness::open_dataset(data);
      const auto cases = harness::load_cases(ds, ds.splits.train, cfg.jobs);
      double sv = 0, sl = 0;
      for (const auto& c : cases)
        for (int t : regnet::pair_frames(c.n_frames(), cfg.reg_frame_stride)) {
          sv += vae::score(model, vae::grad_field(c.gt_fields[t]), &c.masks[0]);
          sl += regnet::l2_reg(c.gt_fields[t], c.masks[0]);
        }
      lambda = cfg.alpha * sv / sl;
    }
    auto l2 = cfg;
    l2.regulariser = "l2";
    l2.alpha = lambda;
    const auto r_l2 = run.stage("reg_l2", [&](const fs::path& o) { harness::cmd_train_reg(l2, data, std::nullopt, o); });
    const auto e_l2 = run.stage("eval_l2", [&](const fs::path& o) {
      harness::cmd_evaluate(cfg, data, harness::EvalSource{harness::EvalSource::Kind::Model, r_l2}, o);
    });
    guarded(6, [&] { return pareto(s_vae, io::read_json(e_l2 / "summary.json"), lambda); });
  } catch (const std::exception& e) {
    for (int k : {1, 2, 4, 5, 6, 7, 8, 9})
      if (out[k].detail.empty()) out[k] = {false, std::string("pipeline error: ") + e.what()};
  }

  int failed = 0;
  for (int k = 0; k < 10; ++k) {
    std::printf("criterion %2d %-30s %s  %s\n", k + 1, names[k], out[k].pass ? "PASS" : "FAIL", out[k].detail.c_str());
    failed += out[k].pass ? 0 : 1;
  }
  std::printf("%d of 10 criteria passed\n", 10 - failed);
  std::fflush(stdout);
  return failed == 0 ? 0 : 1;
}
