#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

#include "common/contour.hpp"
#include "common/tensor_io.hpp"
#include "phantom/phantom.hpp"
#include "regnet/warp.hpp"
#include "test_util.hpp"

using namespace cardioreg;
using testutil::error_kind;
using testutil::kind;

namespace {

std::vector<DisplacementField> zero_cycle(Grid g, int n = phantom::kDefaultFrames) {
  return std::vector<DisplacementField>(static_cast<std::size_t>(n), DisplacementField(g));
}

phantom::PhantomCase small_case(std::uint64_t seed = 5) {
  const Grid g{48, 48};
  const Mask m = phantom::make_annulus_mask({24, 24}, 7, 12, g, 0.2, 0.4);
  auto cycle = zero_cycle(g, 4);
  for (int t = 1; t < 4; ++t)
    for (int i = 0; i < g.rows; ++i)
      for (int j = 0; j < g.cols; ++j) {
        const double dx = j - 24.0, dy = i - 24.0, r = std::hypot(dx, dy) + 1e-9;
        const double s = -0.3 * t * std::exp(-r / 20.0);
        cycle[t].u(i, j) = s * dx / r;
        cycle[t].v(i, j) = s * dy / r;
      }
  phantom::CaseMeta meta{3, seed, 1.8, metrics::SliceTag::Basal};
  return phantom::synthesize_case(cycle, m, seed, meta, 4);
}

}  // namespace

TEST_SUITE("phantom") {

TEST_CASE("annulus mask area matches a brute-force distance count") {
  const Grid g{64, 64};
  const Mask m = phantom::make_annulus_mask({32, 32}, 8, 14, g, 0.0);
  int brute = 0, cavity = 0;
  for (int i = 0; i < 64; ++i)
    for (int j = 0; j < 64; ++j) {
      const double d = std::hypot(j - 32.0, i - 32.0);
      brute += (d >= 8 && d <= 14);
      cavity += d < 8;
    }
  CHECK(m.myocardium_count() == brute);
  CHECK(m.cavity_count() == cavity);
  const double analytic = std::numbers::pi * (14 * 14 - 8 * 8);
  CHECK(std::abs(m.myocardium_count() - analytic) / analytic < 0.04);
  CHECK_NOTHROW(check_annulus_topology(m));
}

TEST_CASE("elliptical annulus keeps its area") {
  const Grid g{96, 96};
  const Mask c = phantom::make_annulus_mask({48, 48}, 12, 20, g, 0.0);
  const Mask e = phantom::make_annulus_mask({48, 48}, 12, 20, g, 0.4, 0.7);
  CHECK(std::abs(e.myocardium_count() - c.myocardium_count()) < 0.03 * c.myocardium_count());
  CHECK_NOTHROW(check_annulus_topology(e));
}

TEST_CASE("annulus preconditions") {
  const Grid g{64, 64};
  CHECK(error_kind([&] { phantom::make_annulus_mask({32, 32}, 8, 8, g, 0.0); }) ==
        kind(ErrorKind::InvalidArgument));
  CHECK(error_kind([&] { phantom::make_annulus_mask({5, 5}, 8, 14, g, 0.0); }) == kind(ErrorKind::InvalidArgument));
  CHECK(error_kind([&] { phantom::make_annulus_mask({32, 32}, 1, 14, g, 0.0); }) ==
        kind(ErrorKind::InvalidArgument));
}

TEST_CASE("textured frames") {
  const Grid g{64, 64};
  const Mask m = phantom::make_annulus_mask({32, 32}, 8, 14, g, 0.0);
  const Image a = phantom::make_textured_frame(m, 11);
  const Image b = phantom::make_textured_frame(m, 11);
  const Image c = phantom::make_textured_frame(m, 12);
  CHECK(a == b);
  int differ = 0;
  for (std::size_t k = 0; k < a.storage().size(); ++k) differ += a.storage()[k] != c.storage()[k];
  CHECK(differ >= 0.01 * g.size());
  double cav = 0, myo = 0;
  for (int i = 0; i < 64; ++i)
    for (int j = 0; j < 64; ++j) {
      CHECK(a(i, j) >= 0.0);
      CHECK(a(i, j) <= 1.0);
      if (m.cavity(i, j)) cav += a(i, j) / m.cavity_count();
      if (m.myocardium(i, j)) myo += a(i, j) / m.myocardium_count();
    }
  CHECK(cav > myo + 0.2);
  CHECK(error_kind([&] { phantom::make_textured_frame(Mask(g), 1); }) == kind(ErrorKind::InvalidArgument));
}

TEST_CASE("synthesis with a zero cycle repeats frame 0") {
  const Grid g{48, 48};
  const Mask m = phantom::make_annulus_mask({24, 24}, 7, 12, g, 0.0);
  const auto c = phantom::synthesize_case(zero_cycle(g), m, 9);
  REQUIRE(c.n_frames() == 50);
  for (int t = 1; t < 50; ++t) {
    CHECK(c.frames[t] == c.frames[0]);
    CHECK(c.masks[t] == m);
    CHECK(c.gt_fields[t].is_zero());
  }
  CHECK(error_kind([&] { phantom::synthesize_case(zero_cycle(g, 49), m, 9); }) == kind(ErrorKind::InvalidArgument));
}

TEST_CASE("synthesis with an integer translation shifts frame 1") {
  const Grid g{48, 48};
  const Mask m = phantom::make_annulus_mask({24, 24}, 7, 12, g, 0.0);
  auto cycle = zero_cycle(g);
  for (auto& x : cycle[1].u.values()) x = 3.0;
  const auto c = phantom::synthesize_case(cycle, m, 9);
  // Backward convention: frame1(i, j) = frame0(i, j + 3).
  for (int i = 0; i < g.rows; ++i)
    for (int j = 0; j + 3 < g.cols; ++j) {
      CHECK(c.frames[1](i, j) == c.frames[0](i, j + 3));
      CHECK(c.masks[1].at(i, j) == m.at(i, j + 3));
    }
}

TEST_CASE("synthesis rejects mismatched grids") {
  const Mask m = phantom::make_annulus_mask({24, 24}, 7, 12, {48, 48}, 0.0);
  CHECK(error_kind([&] { phantom::synthesize_case(zero_cycle({40, 48}), m, 1); }) ==
        kind(ErrorKind::InvalidArgument));
}

TEST_CASE("warped masks keep the annulus topology") {
  const auto c = small_case();
  CHECK_NOTHROW(phantom::check_case_topology(c));
  CHECK(c.masks[3].cavity_count() > c.masks[0].cavity_count());
}

TEST_CASE("case round-trip is bit exact") {
  testutil::TempDir tmp;
  const auto c = small_case();
  phantom::save_case(tmp / "case_3", c);
  for (const char* f : {"frames.f32", "masks.u8", "gt_fields.f32", "meta.json"}) CHECK(std::filesystem::exists(tmp / "case_3" / f));
  const auto r = phantom::load_case(tmp / "case_3");
  CHECK(r == c);
  const auto meta = io::read_json(tmp / "case_3" / "meta.json");
  CHECK(meta.at("format_version").get<int>() == 1);
  CHECK(meta.at("n_frames").get<int>() == 4);
  CHECK(meta.at("spacing_mm").get<double>() == 1.8);
}

TEST_CASE("case loading reports distinct errors") {
  testutil::TempDir tmp;
  const auto c = small_case();
  const auto dir = tmp / "case_3";
  phantom::save_case(dir, c);
  auto meta = io::read_json(dir / "meta.json");

  SUBCASE("corrupted magic") {
    auto bad = meta;
    bad["magic"] = "garbage";
    io::write_json(dir / "meta.json", bad);
    CHECK(error_kind([&] { phantom::load_case(dir); }) == kind(ErrorKind::MalformedHeader));
  }
  SUBCASE("truncated payload") {
    // Drop the last frame of the image buffer while the header still says 4.
    const auto bytes = testutil::slurp(dir / "frames.f32");
    const std::size_t frame_bytes = bytes.size() / 4;
    std::ofstream(dir / "frames.f32", std::ios::binary | std::ios::trunc).write(bytes.data(), bytes.size() - frame_bytes);
    CHECK(error_kind([&] { phantom::load_case(dir); }) == kind(ErrorKind::TruncatedPayload));
  }
  SUBCASE("version mismatch") {
    auto bad = meta;
    bad["format_version"] = 2;
    io::write_json(dir / "meta.json", bad);
    CHECK(error_kind([&] { phantom::load_case(dir); }) == kind(ErrorKind::VersionMismatch));
  }
  SUBCASE("missing directory") {
    CHECK(error_kind([&] { phantom::load_case(tmp / "nowhere"); }) == kind(ErrorKind::MissingInput));
  }
}

TEST_CASE("splits are deterministic and disjoint") {
  const auto a = phantom::make_splits(40, 10, 20, 3);
  const auto b = phantom::make_splits(40, 10, 20, 3);
  const auto c = phantom::make_splits(40, 10, 20, 4);
  CHECK(a.train == b.train);
  CHECK(a.val == b.val);
  CHECK(a.test == b.test);
  CHECK(a.train != c.train);
  std::set<int> all;
  for (const auto* v : {&a.train, &a.val, &a.test}) all.insert(v->begin(), v->end());
  CHECK(all.size() == 70);
  CHECK(*all.begin() == 0);
  CHECK(*all.rbegin() == 69);
  CHECK(a.train.size() == 40);
  CHECK(a.val.size() == 10);
  CHECK(a.test.size() == 20);
}

TEST_CASE("sampled geometries fit the grid") {
  for (const Grid g : {Grid{64, 64}, Grid{96, 96}})
    for (std::uint64_t s = 0; s < 50; ++s) {
      const auto geo = phantom::sample_geometry(g, s);
      CHECK(geo.area_ratio > 1.0);
      CHECK_NOTHROW(phantom::make_annulus_mask(geo.center, geo.r_endo, geo.r_epi, g, geo.eccentricity, geo.orientation));
    }
}
}
