// SPDX-License-Identifier: Apache-2.0
#include "common/types.hpp"

#include <algorithm>

namespace cardioreg {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid argument";
    case ErrorKind::Config: return "config error";
    case ErrorKind::Topology: return "topology error";
    case ErrorKind::MalformedHeader: return "malformed header";
    case ErrorKind::TruncatedPayload: return "truncated payload";
    case ErrorKind::VersionMismatch: return "version mismatch";
    case ErrorKind::MissingInput: return "missing input";
    case ErrorKind::NonConvergence: return "nonconvergence";
    case ErrorKind::NonFinite: return "non-finite value";
  }
  return "unknown";
}

std::string to_string(const Grid& g) {
  return std::to_string(g.rows) + "x" + std::to_string(g.cols);
}

Mask::Mask(Array2D<std::uint8_t> labels) : labels_(std::move(labels)) {
  for (auto l : labels_.values()) require(l <= 2, "mask label out of range");
}

int Mask::myocardium_count() const noexcept {
  return static_cast<int>(std::count(labels_.values().begin(), labels_.values().end(),
                                     static_cast<std::uint8_t>(Label::Myocardium)));
}

int Mask::cavity_count() const noexcept {
  return static_cast<int>(std::count(labels_.values().begin(), labels_.values().end(),
                                     static_cast<std::uint8_t>(Label::Cavity)));
}

Vec2 Mask::cavity_centroid() const {
  double sx = 0, sy = 0;
  long n = 0;
  for (int i = 0; i < labels_.rows(); ++i)
    for (int j = 0; j < labels_.cols(); ++j)
      if (cavity(i, j)) {
        sx += j;
        sy += i;
        ++n;
      }
  require(n > 0, "mask has no cavity");
  return {sx / n, sy / n};
}

Array2D<double> Mask::myocardium_indicator() const {
  Array2D<double> out(grid(), 0.0);
  for (int i = 0; i < out.rows(); ++i)
    for (int j = 0; j < out.cols(); ++j) out(i, j) = myocardium(i, j) ? 1.0 : 0.0;
  return out;
}

bool DisplacementField::is_zero() const noexcept {
  auto zero = [](double x) { return x == 0.0; };
  return std::all_of(u.values().begin(), u.values().end(), zero) &&
         std::all_of(v.values().begin(), v.values().end(), zero);
}

bool DisplacementField::all_finite() const noexcept {
  auto fin = [](double x) { return std::isfinite(x); };
  return std::all_of(u.values().begin(), u.values().end(), fin) &&
         std::all_of(v.values().begin(), v.values().end(), fin);
}

void quantize_f32(Array2D<double>& a) {
  for (auto& x : a.values()) x = static_cast<double>(static_cast<float>(x));
}

void quantize_f32(DisplacementField& f) {
  quantize_f32(f.u);
  quantize_f32(f.v);
}

}  // namespace cardioreg
