// SPDX-License-Identifier: Apache-2.0
//
// Registration quality metrics: overlap, contour distance, Jacobian
// determinant statistics and Green-Lagrange radial / circumferential strain.
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "common/types.hpp"

namespace cardioreg::metrics {

/// 2|A n B| / (|A| + |B|) over myocardium labels; 1 when both are empty.
double dice(const Mask& a, const Mask& b);

/// Symmetric mean contour distance in pixels between the myocardial
/// contours (endo and epi loops) of two masks. Contours are marching-squares
/// iso-lines at 0.5 with sub-pixel vertices.
double mcd(const Mask& a, const Mask& b);

struct JacobianMap {
  Array2D<double> det;
  Array2D<std::uint8_t> valid;
};

/// det(I + grad phi) per pixel using vae::grad_field.
JacobianMap jacobian(const DisplacementField& phi);

/// Mean of |det J - 1| over myocardium pixels of `mask`.
double jac_dev(const JacobianMap& jmap, const Mask& mask);

/// Mean of det J over myocardium pixels of `mask`.
double mean_det(const JacobianMap& jmap, const Mask& mask);

struct StrainValue {
  double rr_pct = 0.0;  // radial component of E, mask mean, percent
  double cc_pct = 0.0;  // circumferential component of E, mask mean, percent
};

/// Green-Lagrange strain E = (F^T F - I) / 2 with F = I + grad phi, projected
/// on the radial and circumferential directions about `center`.
StrainValue strain(const DisplacementField& phi, const Mask& mask, const Vec2& center);

enum class SliceTag { Apical, Mid, Basal };
std::string to_string(SliceTag t);
SliceTag slice_tag_from_string(const std::string& s);

struct FrameReport {
  int frame = 0;
  double rr_pct = 0.0;
  double cc_pct = 0.0;
  double mean_detJ = 1.0;
  double jac_dev = 0.0;
};

/// Per-frame strain / Jacobian curves of one cycle plus the strain peaks.
struct StrainSummary {
  SliceTag tag = SliceTag::Mid;
  std::vector<FrameReport> frames;
  double peak_rr_pct = 0.0;
  int peak_rr_frame = 0;
  double peak_cc_pct = 0.0;
  int peak_cc_frame = 0;
};

/// `fields[t]` maps frame t onto frame 0 and lives on the frame-t grid;
/// `masks[t]` is the myocardium of frame t. fields[0] must be zero.
StrainSummary cycle_report(const std::vector<DisplacementField>& fields, const std::vector<Mask>& masks,
                           const Vec2& center, SliceTag tag = SliceTag::Mid);

/// Writes `frame,RR_pct,CC_pct,mean_detJ,jac_dev` rows.
void write_cycle_csv(std::ostream& os, const StrainSummary& s);

}  // namespace cardioreg::metrics
