// SPDX-License-Identifier: Apache-2.0
//
// Synthetic short-axis cine phantoms: annular myocardium masks, textured
// frames, and sequences produced by warping frame 0 with a ground-truth
// deformation cycle.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "common/types.hpp"
#include "metrics/metrics.hpp"

namespace cardioreg::phantom {

/// Myocardium = r_endo <= d <= r_epi, cavity = d < r_endo, where d is the
/// distance to `center` after an area-preserving elliptical scaling with the
/// given eccentricity (0 = circle) whose major axis is rotated by
/// `orientation` radians from +x.
Mask make_annulus_mask(Vec2 center, double r_endo, double r_epi, Grid grid, double eccentricity,
                       double orientation = 0.0);

struct TextureParams {
  double cavity_mean = 0.80;
  double myocardium_mean = 0.30;
  double background_mean = 0.45;
  double cavity_amp = 0.06;
  double myocardium_amp = 0.08;
  double background_amp = 0.10;
  double smoothing_sigma_px = 1.5;
};

/// Tissue-specific mean intensity plus Gaussian-smoothed uniform noise
/// (standardised, scaled by the tissue amplitude), clipped to [0,1].
Image make_textured_frame(const Mask& mask, std::uint64_t texture_seed, const TextureParams& tp = {});

/// Separable Gaussian blur with reflected borders (radius 4 sigma).
Array2D<double> gaussian_blur(const Array2D<double>& in, double sigma);

struct CaseMeta {
  int case_id = 0;
  std::uint64_t seed = 0;
  double spacing_mm = 1.8;
  metrics::SliceTag slice_tag = metrics::SliceTag::Mid;
  bool operator==(const CaseMeta&) const = default;
};

struct PhantomCase {
  std::vector<Image> frames;
  std::vector<Mask> masks;
  std::vector<DisplacementField> gt_fields;  // frame t -> frame 0, on the frame-t grid
  CaseMeta meta;

  int n_frames() const noexcept { return static_cast<int>(frames.size()); }
  Grid grid() const { return frames.at(0).grid(); }
  bool operator==(const PhantomCase&) const = default;
};

inline constexpr int kDefaultFrames = 50;
/// Nearest-neighbour mask warping leaves single-pixel staircase fragments
/// along the boundaries; components up to this size are absorbed.
inline constexpr int kMaxIslandPixels = 4;

/// Nearest-neighbour warp of a label mask followed by absorb_islands; the
/// operator used for every warped mask, in synthesis and in evaluation.
Mask warp_mask(const Mask& mask, const DisplacementField& phi);

/// frame t = warp(frame 0, gt[t]) with regnet::warp; mask t = nearest warp of
/// the base mask with stray fragments absorbed. Values are rounded to
/// float32 so the case round-trips through disk unchanged.
PhantomCase synthesize_case(const std::vector<DisplacementField>& sim_cycle, const Mask& base_mask,
                            std::uint64_t seed, const CaseMeta& meta = {}, int expected_frames = kDefaultFrames,
                            const TextureParams& tp = {});

/// Checks every per-frame mask against the annulus topology invariant.
void check_case_topology(const PhantomCase& c);

/// Random ES-analogue geometry for one case.
struct Geometry {
  Vec2 center;
  double r_endo = 0;
  double r_epi = 0;
  double eccentricity = 0;
  double orientation = 0;
  double area_ratio = 1.6;  // ED / ES cavity area
  metrics::SliceTag tag = metrics::SliceTag::Mid;
};
Geometry sample_geometry(Grid grid, std::uint64_t seed);

struct Splits {
  std::vector<int> train, val, test;
};
/// Deterministic disjoint partition of ids 0..n_train+n_val+n_test-1.
Splits make_splits(int n_train, int n_val, int n_test, std::uint64_t seed);

// On-disk case directory: frames.f32 (T,M,N), masks.u8 (T,M,N) with labels
// 0 background / 1 myocardium / 2 cavity, gt_fields.f32 (T,2,M,N), meta.json.
inline constexpr int kFormatVersion = 1;
inline constexpr const char* kCaseMagic = "cardioreg-case";
std::filesystem::path case_dir_name(int case_id);
void save_case(const std::filesystem::path& dir, const PhantomCase& c);
PhantomCase load_case(const std::filesystem::path& dir);

}  // namespace cardioreg::phantom
