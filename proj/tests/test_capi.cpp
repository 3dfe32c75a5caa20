// Exercises the shared library through its C interface only, and the CLI
// through its exit codes.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "cardioreg/cardioreg.h"

namespace fs = std::filesystem;

namespace {

struct Tmp {
  fs::path p;
  Tmp() {
    std::random_device rd;
    p = fs::temp_directory_path() / ("cardioreg-capi-" + std::to_string(rd()));
    fs::create_directories(p);
  }
  ~Tmp() {
    std::error_code ec;
    fs::remove_all(p, ec);
  }
};

std::string get(const cr_config* c, const char* key) {
  size_t n = 0;
  REQUIRE(cr_config_get(c, key, nullptr, 0, &n) == CR_OK);
  std::string s(n, '\0');
  REQUIRE(cr_config_get(c, key, s.data(), s.size(), &n) == CR_OK);
  s.resize(n - 1);
  return s;
}

int cli(const std::string& args) {
  const std::string cmd = std::string(CARDIOREG_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

const char* kSmall = "[experiment]\nname = capi\nseed = 3\n[data]\nrows = 40\ncols = 40\nn_train = 1\nn_val = 0\n"
                     "n_test = 1\n[fem]\nn_steps = 4\nelem_size_px = 2.0\n";

}  // namespace

TEST_CASE("status names and exit codes") {
  CHECK(std::string(cr_status_name(CR_OK)) == "ok");
  CHECK(cr_exit_code(CR_OK) == 0);
  CHECK(cr_exit_code(CR_ERR_CONFIG) == 2);
  CHECK(cr_exit_code(CR_ERR_INVALID_ARGUMENT) == 2);
  CHECK(cr_exit_code(CR_ERR_MISSING_INPUT) == 3);
  CHECK(cr_exit_code(CR_ERR_TRUNCATED_PAYLOAD) == 3);
  CHECK(cr_exit_code(CR_ERR_NON_CONVERGENCE) == 4);
  CHECK(cr_exit_code(CR_ERR_NON_FINITE) == 4);
  CHECK(cr_exit_code(CR_ERR_INTERNAL) == 1);
  CHECK(std::string(cr_version()).size() > 0);
}

TEST_CASE("config handles") {
  cr_config* c = nullptr;
  REQUIRE(cr_config_default(&c) == CR_OK);
  CHECK(get(c, "reg.alpha") == "0.001");
  CHECK(cr_config_set(c, "data.rows", "64") == CR_OK);
  CHECK(get(c, "data.rows") == "64");
  CHECK(cr_config_set(c, "data.bogus", "1") == CR_ERR_CONFIG);
  CHECK(std::string(cr_last_error()).find("bogus") != std::string::npos);
  CHECK(cr_config_set(c, "fem.mu_kpa", "0") == CR_OK);
  CHECK(cr_config_validate(c) == CR_ERR_CONFIG);
  CHECK(cr_config_set(c, "fem.mu_kpa", "10") == CR_OK);
  CHECK(cr_config_validate(c) == CR_OK);

  size_t n = 0;
  CHECK(cr_config_to_ini(c, nullptr, 0, &n) == CR_OK);
  std::string ini(n, '\0');
  char tiny[4];
  // Short buffers receive a truncated, terminated prefix and the full size.
  CHECK(cr_config_to_ini(c, tiny, sizeof tiny, &n) == CR_OK);
  CHECK(std::string(tiny).size() == 3);
  CHECK(n == ini.size());
  REQUIRE(cr_config_to_ini(c, ini.data(), ini.size(), &n) == CR_OK);
  cr_config* d = nullptr;
  REQUIRE(cr_config_parse(ini.c_str(), &d) == CR_OK);
  char h1[64], h2[64];
  REQUIRE(cr_config_hash(c, h1, sizeof h1, &n) == CR_OK);
  REQUIRE(cr_config_hash(d, h2, sizeof h2, &n) == CR_OK);
  CHECK(std::string(h1) == h2);
  cr_config* e = nullptr;
  REQUIRE(cr_config_clone(d, &e) == CR_OK);
  CHECK(get(e, "data.rows") == "64");
  cr_config_free(c);
  cr_config_free(d);
  cr_config_free(e);
  cr_config_free(nullptr);

  CHECK(cr_config_parse("[data]\nrows = x\n", &c) == CR_ERR_CONFIG);
  CHECK(cr_config_load("/nonexistent.ini", &c) == CR_ERR_CONFIG);
  CHECK(cr_config_default(nullptr) == CR_ERR_INVALID_ARGUMENT);
}

TEST_CASE("simulate, inspect, evaluate through the C interface") {
  Tmp tmp;
  cr_config* c = nullptr;
  REQUIRE(cr_config_parse(kSmall, &c) == CR_OK);
  const std::string data = (tmp.p / "data").string();
  REQUIRE(cr_simulate(c, data.c_str()) == CR_OK);

  cr_case* k = nullptr;
  REQUIRE(cr_case_load((tmp.p / "data" / "case_0").c_str(), &k) == CR_OK);
  int t = 0, rows = 0, cols = 0;
  REQUIRE(cr_case_shape(k, &t, &rows, &cols) == CR_OK);
  CHECK(t == 4);
  CHECK(rows == 40);
  CHECK(cols == 40);
  std::vector<double> img(rows * cols), field(2 * rows * cols);
  std::vector<uint8_t> lab(rows * cols);
  CHECK(cr_case_frame(k, 3, img.data()) == CR_OK);
  CHECK(cr_case_mask(k, 0, lab.data()) == CR_OK);
  CHECK(cr_case_gt_field(k, 0, field.data()) == CR_OK);
  for (double x : field) CHECK(x == 0.0);
  CHECK(cr_case_frame(k, 4, img.data()) == CR_ERR_INVALID_ARGUMENT);
  cr_case_free(k);
  CHECK(cr_case_load((tmp.p / "nowhere").c_str(), &k) == CR_ERR_MISSING_INPUT);

  const std::string ev = (tmp.p / "eval").string();
  CHECK(cr_evaluate(c, data.c_str(), "gt", ev.c_str()) == CR_OK);
  CHECK(fs::exists(tmp.p / "eval" / "summary.json"));
  CHECK(cr_evaluate(c, data.c_str(), (tmp.p / "none").c_str(), ev.c_str()) == CR_ERR_MISSING_INPUT);
  CHECK(cr_train_reg(c, data.c_str(), nullptr, (tmp.p / "reg").c_str()) == CR_ERR_MISSING_INPUT);
  CHECK(cr_vae_load((tmp.p / "none").c_str(), nullptr) == CR_ERR_INVALID_ARGUMENT);
  cr_config_free(c);
}

TEST_CASE("command-line exit codes") {
  Tmp tmp;
  const auto ini = tmp.p / "small.ini";
  std::ofstream(ini) << kSmall;
  const std::string base = "--config " + ini.string() + " ";
  CHECK(cli("--help") == 0);
  CHECK(cli("") == 2);
  CHECK(cli("frobnicate") == 2);
  CHECK(cli(base + "--print-config") == 0);
  CHECK(cli(base + "--set fem.mu_kpa=-1 simulate --out " + (tmp.p / "x").string()) == 2);
  CHECK(cli(base + "--set nope.key=1 --print-config") == 2);
  CHECK(cli(base + "simulate --cases 0 --out " + (tmp.p / "x").string()) == 2);
  CHECK(cli(base + "evaluate --data " + (tmp.p / "missing").string() + " --model gt --out " + (tmp.p / "e").string()) ==
        3);
  CHECK(cli(base + "--set fem.max_newton_iters=1 --set fem.max_halvings=0 --set fem.rel_tol=1e-14 simulate --out " +
            (tmp.p / "y").string()) == 4);
  CHECK_FALSE(fs::exists(tmp.p / "y"));
  CHECK(cli(base + "simulate --cases 2 --steps 4 --out " + (tmp.p / "d").string()) == 0);
  CHECK(fs::exists(tmp.p / "d" / "dataset.json"));
  CHECK(cli(base + "evaluate --data " + (tmp.p / "d").string() + " --model zero --out " + (tmp.p / "z").string()) == 0);
}
