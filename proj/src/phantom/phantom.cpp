// SPDX-License-Identifier: Apache-2.0
#include "phantom/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "common/contour.hpp"
#include "common/rng.hpp"
#include "common/tensor_io.hpp"
#include "regnet/warp.hpp"

namespace cardioreg::phantom {

namespace fs = std::filesystem;

Mask make_annulus_mask(Vec2 center, double r_endo, double r_epi, Grid grid, double eccentricity,
                       double orientation) {
  require(r_endo >= 2.0, "make_annulus_mask: r_endo must be >= 2 px");
  require(r_endo < r_epi, "make_annulus_mask: empty wall (r_endo >= r_epi)");
  require(eccentricity >= 0.0 && eccentricity < 1.0, "make_annulus_mask: eccentricity must be in [0,1)");
  // Semi-axes a >= b with a*b = r^2.
  const double q = std::pow(1.0 - eccentricity * eccentricity, 0.25);
  const double major = r_epi / q;
  const double c = std::cos(orientation), s = std::sin(orientation);
  const double ext_x = std::hypot(major * c, r_epi * q * s);
  const double ext_y = std::hypot(major * s, r_epi * q * c);
  constexpr double margin = 2.0;
  if (center.x - ext_x < margin || center.y - ext_y < margin || center.x + ext_x > grid.cols - 1 - margin ||
      center.y + ext_y > grid.rows - 1 - margin)
    fail(ErrorKind::InvalidArgument, "make_annulus_mask: annulus does not fit in grid " + to_string(grid) +
                                         " with a 2 px margin");
  Mask m(grid);
  for (int i = 0; i < grid.rows; ++i)
    for (int j = 0; j < grid.cols; ++j) {
      const double dx = j - center.x, dy = i - center.y;
      const double along = dx * c + dy * s, across = -dx * s + dy * c;
      const double d = std::hypot(along * q, across / q);
      if (d < r_endo)
        m.set(i, j, Label::Cavity);
      else if (d <= r_epi)
        m.set(i, j, Label::Myocardium);
    }
  return m;
}

Array2D<double> gaussian_blur(const Array2D<double>& in, double sigma) {
  if (sigma <= 0) return in;
  const int radius = static_cast<int>(std::ceil(4.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0;
  for (int t = -radius; t <= radius; ++t) sum += k[t + radius] = std::exp(-0.5 * t * t / (sigma * sigma));
  for (auto& x : k) x /= sum;
  auto reflect = [](int p, int n) {
    if (n == 1) return 0;
    while (p < 0 || p >= n) p = p < 0 ? -p : 2 * (n - 1) - p;
    return p;
  };
  const Grid g = in.grid();
  Array2D<double> tmp(g), out(g);
  for (int i = 0; i < g.rows; ++i)
    for (int j = 0; j < g.cols; ++j) {
      double acc = 0;
      for (int t = -radius; t <= radius; ++t) acc += k[t + radius] * in(i, reflect(j + t, g.cols));
      tmp(i, j) = acc;
    }
  for (int i = 0; i < g.rows; ++i)
    for (int j = 0; j < g.cols; ++j) {
      double acc = 0;
      for (int t = -radius; t <= radius; ++t) acc += k[t + radius] * tmp(reflect(i + t, g.rows), j);
      out(i, j) = acc;
    }
  return out;
}

Image make_textured_frame(const Mask& mask, std::uint64_t texture_seed, const TextureParams& tp) {
  require(mask.myocardium_count() > 0, "make_textured_frame: empty mask");
  const Grid g = mask.grid();
  Rng rng(texture_seed);
  Array2D<double> noise(g);
  for (auto& x : noise.values()) x = rng.uniform();
  noise = gaussian_blur(noise, tp.smoothing_sigma_px);
  double mean = 0, var = 0;
  for (double x : noise.values()) mean += x;
  mean /= g.size();
  for (double x : noise.values()) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / g.size());
  Image img(g);
  for (int i = 0; i < g.rows; ++i)
    for (int j = 0; j < g.cols; ++j) {
      const double n = sd > 0 ? (noise(i, j) - mean) / sd : 0.0;
      double v = 0;
      switch (mask.at(i, j)) {
        case Label::Cavity: v = tp.cavity_mean + tp.cavity_amp * n; break;
        case Label::Myocardium: v = tp.myocardium_mean + tp.myocardium_amp * n; break;
        case Label::Background: v = tp.background_mean + tp.background_amp * n; break;
      }
      img(i, j) = std::clamp(v, 0.0, 1.0);
    }
  quantize_f32(img);
  return img;
}

Mask warp_mask(const Mask& mask, const DisplacementField& phi) {
  Mask m = regnet::warp_nearest(mask, phi);
  absorb_islands(m, kMaxIslandPixels);
  return m;
}

PhantomCase synthesize_case(const std::vector<DisplacementField>& sim_cycle, const Mask& base_mask,
                            std::uint64_t seed, const CaseMeta& meta, int expected_frames,
                            const TextureParams& tp) {
  require(static_cast<int>(sim_cycle.size()) == expected_frames,
          "synthesize_case: expected " + std::to_string(expected_frames) + " fields, got " +
              std::to_string(sim_cycle.size()));
  for (std::size_t t = 0; t < sim_cycle.size(); ++t)
    require(sim_cycle[t].grid() == base_mask.grid(),
            "synthesize_case: grid mismatch at frame " + std::to_string(t) + ": field " +
                to_string(sim_cycle[t].grid()) + " vs mask " + to_string(base_mask.grid()));
  PhantomCase c;
  c.meta = meta;
  c.meta.seed = seed;
  const Image base = make_textured_frame(base_mask, seed, tp);
  for (const auto& f : sim_cycle) {
    DisplacementField gt = f;
    quantize_f32(gt);
    Image frame = gt.is_zero() ? base : regnet::warp(base, gt);
    for (auto& x : frame.values()) x = std::clamp(x, 0.0, 1.0);
    quantize_f32(frame);
    c.masks.push_back(gt.is_zero() ? base_mask : warp_mask(base_mask, gt));
    c.frames.push_back(std::move(frame));
    c.gt_fields.push_back(std::move(gt));
  }
  return c;
}

void check_case_topology(const PhantomCase& c) {
  for (std::size_t t = 0; t < c.masks.size(); ++t) {
    try {
      check_annulus_topology(c.masks[t]);
    } catch (const Error& e) {
      fail(ErrorKind::Topology, "frame " + std::to_string(t) + ": " + e.what());
    }
  }
}

Geometry sample_geometry(Grid grid, std::uint64_t seed) {
  Rng rng(seed);
  const double s = std::min(grid.rows, grid.cols) / 64.0;
  Geometry g;
  g.tag = static_cast<metrics::SliceTag>(rng.below(3));
  double endo_scale = 1.0, wall_scale = 1.0;
  if (g.tag == metrics::SliceTag::Apical) {
    endo_scale = 0.8;
    wall_scale = 0.95;
  } else if (g.tag == metrics::SliceTag::Basal) {
    endo_scale = 1.1;
  }
  g.center = {0.5 * (grid.cols - 1) + rng.uniform(-2.5, 2.5) * s, 0.5 * (grid.rows - 1) + rng.uniform(-2.5, 2.5) * s};
  g.r_endo = rng.uniform(9.0, 11.5) * s * endo_scale;
  g.r_epi = g.r_endo + rng.uniform(6.5, 8.5) * s * wall_scale;
  g.eccentricity = rng.uniform(0.0, 0.45);
  g.orientation = rng.uniform(0.0, std::numbers::pi);
  g.area_ratio = rng.uniform(1.5, 1.9);
  return g;
}

Splits make_splits(int n_train, int n_val, int n_test, std::uint64_t seed) {
  require(n_train >= 0 && n_val >= 0 && n_test >= 0, "make_splits: negative split size");
  std::vector<int> ids(static_cast<std::size_t>(n_train + n_val + n_test));
  for (std::size_t k = 0; k < ids.size(); ++k) ids[k] = static_cast<int>(k);
  Rng rng(derive_seed(seed, 0x5917));
  rng.shuffle(ids);
  Splits s;
  s.train.assign(ids.begin(), ids.begin() + n_train);
  s.val.assign(ids.begin() + n_train, ids.begin() + n_train + n_val);
  s.test.assign(ids.begin() + n_train + n_val, ids.end());
  for (auto* v : {&s.train, &s.val, &s.test}) std::sort(v->begin(), v->end());
  return s;
}

fs::path case_dir_name(int case_id) { return "case_" + std::to_string(case_id); }

void save_case(const fs::path& dir, const PhantomCase& c) {
  require(!c.frames.empty(), "save_case: empty case");
  require(c.masks.size() == c.frames.size() && c.gt_fields.size() == c.frames.size(),
          "save_case: frames, masks and fields differ in length");
  const Grid g = c.grid();
  const std::size_t T = c.frames.size(), P = static_cast<std::size_t>(g.size());
  std::vector<float> frames, fields;
  std::vector<std::uint8_t> masks;
  frames.reserve(T * P);
  fields.reserve(T * 2 * P);
  masks.reserve(T * P);
  for (std::size_t t = 0; t < T; ++t) {
    require(c.frames[t].grid() == g && c.masks[t].grid() == g && c.gt_fields[t].grid() == g,
            "save_case: inconsistent grid at frame " + std::to_string(t));
    for (double x : c.frames[t].values()) frames.push_back(static_cast<float>(x));
    for (auto l : c.masks[t].labels().values()) masks.push_back(l);
    for (double x : c.gt_fields[t].u.values()) fields.push_back(static_cast<float>(x));
    for (double x : c.gt_fields[t].v.values()) fields.push_back(static_cast<float>(x));
  }
  fs::create_directories(dir);
  io::write_f32(dir / "frames.f32", frames);
  io::write_u8(dir / "masks.u8", masks);
  io::write_f32(dir / "gt_fields.f32", fields);
  const int Ti = static_cast<int>(T);
  io::json meta = {
      {"magic", kCaseMagic},
      {"format_version", kFormatVersion},
      {"case_id", c.meta.case_id},
      {"seed", c.meta.seed},
      {"slice_tag", metrics::to_string(c.meta.slice_tag)},
      {"spacing_mm", c.meta.spacing_mm},
      {"n_frames", Ti},
      {"shape", {g.rows, g.cols}},
      {"dtype", {{"frames", "float32"}, {"masks", "uint8"}, {"gt_fields", "float32"}}},
      {"tensors",
       {{"frames", {{"file", "frames.f32"}, {"shape", {Ti, g.rows, g.cols}}, {"dtype", "float32"}, {"units", "intensity [0,1]"}}},
        {"masks",
         {{"file", "masks.u8"},
          {"shape", {Ti, g.rows, g.cols}},
          {"dtype", "uint8"},
          {"units", "label: 0 background, 1 myocardium, 2 cavity"}}},
        {"gt_fields",
         {{"file", "gt_fields.f32"}, {"shape", {Ti, 2, g.rows, g.cols}}, {"dtype", "float32"}, {"units", "px"}}}}},
  };
  io::write_json(dir / "meta.json", meta);
}

PhantomCase load_case(const fs::path& dir) {
  const io::json meta = io::read_json(dir / "meta.json");
  io::check_header(meta, kCaseMagic, kFormatVersion, dir / "meta.json");
  PhantomCase c;
  Grid g;
  int T = 0;
  try {
    c.meta.case_id = meta.at("case_id").get<int>();
    c.meta.seed = meta.at("seed").get<std::uint64_t>();
    c.meta.spacing_mm = meta.at("spacing_mm").get<double>();
    c.meta.slice_tag = metrics::slice_tag_from_string(meta.at("slice_tag").get<std::string>());
    T = meta.at("n_frames").get<int>();
    g = Grid{meta.at("shape").at(0).get<int>(), meta.at("shape").at(1).get<int>()};
  } catch (const std::exception& e) {
    fail(ErrorKind::MalformedHeader, "malformed header in " + (dir / "meta.json").string() + ": " + e.what());
  }
  if (T <= 0 || g.rows <= 0 || g.cols <= 0) fail(ErrorKind::MalformedHeader, "malformed header: empty shape");
  const auto& tensors = meta.contains("tensors") ? meta["tensors"] : io::json{};
  const std::size_t P = static_cast<std::size_t>(g.size());
  for (const auto& [name, per_frame] : {std::pair{"frames", P}, {"masks", P}, {"gt_fields", 2 * P}}) {
    if (!tensors.contains(name) || io::shape_count(tensors[name], "shape", name == std::string("gt_fields") ? 4 : 3) !=
                                       per_frame * static_cast<std::size_t>(T))
      fail(ErrorKind::MalformedHeader, std::string("malformed header: tensor '") + name + "' shape");
  }
  const auto frames = io::read_f32(dir / "frames.f32", T * P);
  const auto masks = io::read_u8(dir / "masks.u8", T * P);
  const auto fields = io::read_f32(dir / "gt_fields.f32", T * 2 * P);
  for (int t = 0; t < T; ++t) {
    Image img(g);
    Array2D<std::uint8_t> lab(g);
    DisplacementField f(g);
    for (std::size_t p = 0; p < P; ++p) {
      img.values()[p] = frames[t * P + p];
      if (masks[t * P + p] > 2) fail(ErrorKind::MalformedHeader, "mask label out of range in " + dir.string());
      lab.values()[p] = masks[t * P + p];
      f.u.values()[p] = fields[(2 * t) * P + p];
      f.v.values()[p] = fields[(2 * t + 1) * P + p];
    }
    c.frames.push_back(std::move(img));
    c.masks.emplace_back(std::move(lab));
    c.gt_fields.push_back(std::move(f));
  }
  return c;
}

}  // namespace cardioreg::phantom
