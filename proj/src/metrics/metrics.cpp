// SPDX-License-Identifier: Apache-2.0
#include "metrics/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>

#include "common/contour.hpp"
#include "vae/grad_field.hpp"

namespace cardioreg::metrics {

double dice(const Mask& a, const Mask& b) {
  require(a.grid() == b.grid(), "dice: grid mismatch " + to_string(a.grid()) + " vs " + to_string(b.grid()));
  long na = 0, nb = 0, both = 0;
  for (int i = 0; i < a.grid().rows; ++i)
    for (int j = 0; j < a.grid().cols; ++j) {
      const bool x = a.myocardium(i, j), y = b.myocardium(i, j);
      na += x;
      nb += y;
      both += x && y;
    }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

namespace {

double directed_mean(const std::vector<Polyline>& from, const std::vector<Polyline>& to) {
  double s = 0;
  long n = 0;
  for (const auto& loop : from)
    for (const auto& p : loop) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& other : to) best = std::min(best, distance_to_loop(p, other));
      s += best;
      ++n;
    }
  return s / static_cast<double>(n);
}

}  // namespace

double mcd(const Mask& a, const Mask& b) {
  require(a.grid() == b.grid(), "mcd: grid mismatch");
  require(a.myocardium_count() > 0 && b.myocardium_count() > 0, "mcd: empty mask");
  const auto ca = binary_contours(a.myocardium_indicator());
  const auto cb = binary_contours(b.myocardium_indicator());
  return 0.5 * (directed_mean(ca, cb) + directed_mean(cb, ca));
}

JacobianMap jacobian(const DisplacementField& phi) {
  const GradientField gf = vae::grad_field(phi);
  JacobianMap m{Array2D<double>(phi.grid(), 1.0), Array2D<std::uint8_t>(phi.grid(), 1)};
  for (int i = 0; i < phi.grid().rows; ++i)
    for (int j = 0; j < phi.grid().cols; ++j) {
      const double d = (1.0 + gf.dudx()(i, j)) * (1.0 + gf.dvdy()(i, j)) - gf.dudy()(i, j) * gf.dvdx()(i, j);
      m.det(i, j) = d;
      m.valid(i, j) = std::isfinite(d);
    }
  return m;
}

namespace {

template <class F>
double mask_mean(const JacobianMap& jmap, const Mask& mask, F f) {
  require(jmap.det.grid() == mask.grid(), "jacobian map and mask grids differ");
  double s = 0;
  long n = 0;
  for (int i = 0; i < mask.grid().rows; ++i)
    for (int j = 0; j < mask.grid().cols; ++j)
      if (mask.myocardium(i, j) && jmap.valid(i, j)) {
        s += f(jmap.det(i, j));
        ++n;
      }
  require(n > 0, "empty mask");
  return s / static_cast<double>(n);
}

}  // namespace

double jac_dev(const JacobianMap& jmap, const Mask& mask) {
  return mask_mean(jmap, mask, [](double d) { return std::abs(d - 1.0); });
}

double mean_det(const JacobianMap& jmap, const Mask& mask) {
  return mask_mean(jmap, mask, [](double d) { return d; });
}

StrainValue strain(const DisplacementField& phi, const Mask& mask, const Vec2& center) {
  const Grid g = phi.grid();
  require(mask.grid() == g, "strain: grid mismatch");
  require(center.x >= 0 && center.y >= 0 && center.x <= g.cols - 1 && center.y <= g.rows - 1,
          "strain: center outside grid");
  const GradientField gf = vae::grad_field(phi);
  double rr = 0, cc = 0;
  long n = 0;
  for (int i = 0; i < g.rows; ++i)
    for (int j = 0; j < g.cols; ++j) {
      if (!mask.myocardium(i, j)) continue;
      const Vec2 d{j - center.x, i - center.y};
      const double r = d.norm();
      if (r == 0) continue;
      const Vec2 er = d * (1.0 / r);
      const Vec2 et{-er.y, er.x};
      const double f11 = 1 + gf.dudx()(i, j), f12 = gf.dudy()(i, j);
      const double f21 = gf.dvdx()(i, j), f22 = 1 + gf.dvdy()(i, j);
      // E = (F^T F - I) / 2
      const double e11 = 0.5 * (f11 * f11 + f21 * f21 - 1.0);
      const double e12 = 0.5 * (f11 * f12 + f21 * f22);
      const double e22 = 0.5 * (f12 * f12 + f22 * f22 - 1.0);
      auto project = [&](const Vec2& e) { return e.x * e.x * e11 + 2 * e.x * e.y * e12 + e.y * e.y * e22; };
      rr += project(er);
      cc += project(et);
      ++n;
    }
  require(n > 0, "strain: empty mask");
  return {100.0 * rr / static_cast<double>(n), 100.0 * cc / static_cast<double>(n)};
}

std::string to_string(SliceTag t) {
  switch (t) {
    case SliceTag::Apical: return "apical";
    case SliceTag::Mid: return "mid";
    case SliceTag::Basal: return "basal";
  }
  return "mid";
}

SliceTag slice_tag_from_string(const std::string& s) {
  if (s == "apical") return SliceTag::Apical;
  if (s == "mid") return SliceTag::Mid;
  if (s == "basal") return SliceTag::Basal;
  fail(ErrorKind::InvalidArgument, "unknown slice tag '" + s + "'");
}

StrainSummary cycle_report(const std::vector<DisplacementField>& fields, const std::vector<Mask>& masks,
                           const Vec2& center, SliceTag tag) {
  require(fields.size() >= 2, "cycle_report: need at least two frames");
  require(fields.size() == masks.size(), "cycle_report: one mask per frame required");
  require(fields[0].is_zero(), "cycle_report: missing frame-0 reference (frame-0 field is not zero)");
  StrainSummary s;
  s.tag = tag;
  for (std::size_t t = 0; t < fields.size(); ++t) {
    const auto jm = jacobian(fields[t]);
    const auto sv = strain(fields[t], masks[t], center);
    FrameReport fr;
    fr.frame = static_cast<int>(t);
    fr.rr_pct = sv.rr_pct;
    fr.cc_pct = sv.cc_pct;
    fr.mean_detJ = mean_det(jm, masks[t]);
    fr.jac_dev = jac_dev(jm, masks[t]);
    if (std::abs(fr.rr_pct) > std::abs(s.peak_rr_pct)) {
      s.peak_rr_pct = fr.rr_pct;
      s.peak_rr_frame = fr.frame;
    }
    if (std::abs(fr.cc_pct) > std::abs(s.peak_cc_pct)) {
      s.peak_cc_pct = fr.cc_pct;
      s.peak_cc_frame = fr.frame;
    }
    s.frames.push_back(fr);
  }
  return s;
}

void write_cycle_csv(std::ostream& os, const StrainSummary& s) {
  os << "frame,RR_pct,CC_pct,mean_detJ,jac_dev\n";
  os << std::setprecision(8);
  for (const auto& f : s.frames)
    os << f.frame << ',' << f.rr_pct << ',' << f.cc_pct << ',' << f.mean_detJ << ',' << f.jac_dev << '\n';
}

}  // namespace cardioreg::metrics
