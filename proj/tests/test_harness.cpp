#include <doctest.h>

#include <cmath>
#include <fstream>

#include "common/tensor_io.hpp"
#include "harness/config.hpp"
#include "harness/pipeline.hpp"
#include "metrics/metrics.hpp"
#include "phantom/phantom.hpp"
#include "test_util.hpp"

using namespace cardioreg;
using namespace cardioreg::harness;
using testutil::error_kind;
using testutil::kind;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.name = "unit";
  c.seed = 31;
  c.rows = c.cols = 48;
  c.n_train = 1;
  c.n_val = 0;
  c.n_test = 1;
  c.n_steps = 6;
  c.elem_size_px = 2.0;
  return c;
}

bool has_partial(const fs::path& dir) {
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().filename().string().find(".partial-") != std::string::npos) return true;
  return false;
}

// One simulated dataset shared by the evaluation tests.
const fs::path& shared_dataset() {
  static testutil::TempDir tmp;
  static const fs::path dir = [] {
    cmd_simulate(small_config(), tmp / "data");
    return tmp / "data";
  }();
  return dir;
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("config parsing and validation") {
  const auto c = parse_config("[experiment]\nname = x\nseed = 5\n[data]\nrows = 64\ncols = 64\n[reg]\nalpha = 0.005\n");
  CHECK(c.name == "x");
  CHECK(c.seed == 5);
  CHECK(c.rows == 64);
  CHECK(c.alpha == 0.005);
  CHECK(c.n_steps == 50);
  CHECK_NOTHROW(c.validate());

  CHECK(error_kind([] { parse_config("[data]\nbogus = 1\n"); }) == kind(ErrorKind::Config));
  CHECK(error_kind([] { parse_config("[data]\nrows = sixty\n"); }) == kind(ErrorKind::Config));
  CHECK(error_kind([] { parse_config("[fem]\nmu_kpa = 0\n").validate(); }) == kind(ErrorKind::Config));
  CHECK(error_kind([] { parse_config("[fem]\nmu_kpa = -2\n").validate(); }) == kind(ErrorKind::Config));
  CHECK(error_kind([] { parse_config("[data]\nn_train = 0\nn_val = 0\nn_test = 0\n").validate(); }) ==
        kind(ErrorKind::Config));
  CHECK(error_kind([] { parse_config("[reg]\nregulariser = tv\n").validate(); }) == kind(ErrorKind::Config));
  CHECK(error_kind([] { load_config("/nonexistent/x.ini"); }) == kind(ErrorKind::Config));
}

TEST_CASE("config round-trips through INI and dotted keys") {
  auto c = small_config();
  set_value(c, "reg.alpha_grid", "0.1,0.2");
  set_value(c, "vae.channels", "4,8");
  set_value(c, "eval.plots", "false");
  const auto back = parse_config(c.to_ini());
  CHECK(back.to_ini() == c.to_ini());
  CHECK(back.hash() == c.hash());
  CHECK(back.alpha_grid == std::vector<double>{0.1, 0.2});
  CHECK(get_value(back, "vae.channels") == "4,8");
  CHECK(get_value(back, "data.rows") == "48");
  CHECK_FALSE(back.plots);
  set_value(c, "experiment.seed", "32");
  CHECK(c.hash() != back.hash());
  CHECK(error_kind([&] { set_value(c, "nope.key", "1"); }) == kind(ErrorKind::Config));
  CHECK(error_kind([&] { get_value(c, "data.nope"); }) == kind(ErrorKind::Config));
}

TEST_CASE("output locations") {
  auto c = small_config();
  c.runs_dir = "/tmp/r";
  CHECK(resolve_out(c, std::nullopt, "data") == fs::path("/tmp/r/unit/data"));
  CHECK(resolve_out(c, fs::path("elsewhere"), "data") == fs::path("elsewhere"));
}

TEST_CASE("simulate is deterministic and commits atomically") {
  testutil::TempDir tmp;
  const auto cfg = small_config();
  cmd_simulate(cfg, tmp / "a");
  cmd_simulate(cfg, tmp / "b");
  for (const char* rel : {"case_0/fields.f32", "case_0/frames.f32", "case_1/gt_fields.f32", "case_1/masks.u8",
                          "sim_0/fields.f32", "dataset.json"}) {
    CAPTURE(rel);
    REQUIRE(fs::exists(tmp / "a" / rel) == fs::exists(tmp / "b" / rel));
    if (fs::exists(tmp / "a" / rel)) CHECK(testutil::slurp(tmp / "a" / rel) == testutil::slurp(tmp / "b" / rel));
  }
  const auto ds = open_dataset(tmp / "a");
  CHECK(ds.grid == Grid{48, 48});
  CHECK(ds.n_frames == 6);
  CHECK(ds.splits.train.size() + ds.splits.test.size() == 2);
  const auto man = io::read_json(tmp / "a" / "manifest.json");
  CHECK(man.at("command") == "simulate");
  CHECK(man.at("config_hash") == cfg.hash());
  CHECK(fs::exists(tmp / "a" / "config.ini"));

  auto bad = cfg;
  bad.max_newton_iters = 1;
  bad.max_halvings = 0;
  bad.rel_tol = 1e-14;
  const int k = error_kind([&] { cmd_simulate(bad, tmp / "c"); });
  CHECK(k == kind(ErrorKind::NonConvergence));
  CHECK_FALSE(fs::exists(tmp / "c"));
  CHECK_FALSE(has_partial(tmp.path()));
}

TEST_CASE("dataset errors") {
  testutil::TempDir tmp;
  CHECK(error_kind([&] { open_dataset(tmp / "none"); }) == kind(ErrorKind::MissingInput));
  std::ofstream(tmp / "dataset.json") << "{\"magic\": \"wrong\", \"format_version\": 1}";
  CHECK(error_kind([&] { open_dataset(tmp.path()); }) == kind(ErrorKind::MalformedHeader));
}

TEST_CASE("evaluation oracles") {
  const auto& data = shared_dataset();
  testutil::TempDir tmp;
  const auto cfg = small_config();
  const auto ds = open_dataset(data);
  const auto cases = load_cases(ds, ds.split("test"));
  REQUIRE(cases.size() == 1);
  const int peak = ds.n_frames - 1;

  cmd_evaluate(cfg, data, eval_source_from_string("gt"), tmp / "gt");
  const auto gt = io::read_json(tmp / "gt" / "summary.json");
  CHECK(gt.at("peak_pair").at("dice").at("mean").get<double>() == 1.0);
  CHECK(gt.at("peak_pair").at("epe_px").at("mean").get<double>() == 0.0);
  for (const char* f : {"report.csv", "table.csv", "manifest.json", "plots/strain_curves.png"})
    CHECK(fs::exists(tmp / "gt" / f));

  cmd_evaluate(cfg, data, eval_source_from_string("zero"), tmp / "zero");
  const auto zero = io::read_json(tmp / "zero" / "summary.json");
  const double baseline = metrics::dice(cases[0].masks[0], cases[0].masks[peak]);
  CHECK(zero.at("peak_pair").at("dice").at("mean").get<double>() == doctest::Approx(baseline).epsilon(1e-12));
  CHECK(zero.at("peak_pair").at("jac_dev").at("mean").get<double>() == 0.0);

  cmd_evaluate(cfg, data, eval_source_from_string("gt"), tmp / "gt2");
  CHECK(testutil::slurp(tmp / "gt" / "report.csv") == testutil::slurp(tmp / "gt2" / "report.csv"));

  cmd_report(cfg, {tmp / "gt", tmp / "zero"}, tmp / "report");
  CHECK(fs::exists(tmp / "report" / "table.md"));

  CHECK(error_kind([&] { cmd_evaluate(cfg, data, eval_source_from_string((tmp / "nockpt").string()), tmp / "e"); }) ==
        kind(ErrorKind::MissingInput));
  CHECK_FALSE(fs::exists(tmp / "e"));
}

TEST_CASE("training commands check their inputs") {
  const auto& data = shared_dataset();
  testutil::TempDir tmp;
  auto cfg = small_config();
  CHECK(error_kind([&] { cmd_train_reg(cfg, data, std::nullopt, tmp / "r"); }) == kind(ErrorKind::MissingInput));
  CHECK(error_kind([&] { cmd_train_vae(cfg, tmp / "nodata", tmp / "v"); }) == kind(ErrorKind::MissingInput));
  CHECK(error_kind([&] { cmd_sweep_alpha(cfg, data, tmp / "novae", tmp / "s"); }) == kind(ErrorKind::MissingInput));
  CHECK_FALSE(has_partial(tmp.path()));

  cfg.regulariser = "none";
  cfg.reg_channels = {4, 4, 4, 4, 4};
  cfg.reg_epochs = 2;
  cfg.reg_batch_size = 2;
  cfg.reg_frame_stride = 2;
  cmd_train_reg(cfg, data, std::nullopt, tmp / "r");
  CHECK(fs::exists(tmp / "r" / "checkpoint.json"));
  CHECK(fs::exists(tmp / "r" / "loss_components.csv"));
  cmd_evaluate(cfg, data, eval_source_from_string((tmp / "r").string()), tmp / "e");
  const auto s = io::read_json(tmp / "e" / "summary.json");
  CHECK(s.at("n_cases").get<int>() == 1);
}
}
