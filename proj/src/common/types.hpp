// SPDX-License-Identifier: Apache-2.0
//
// Dense 2D containers shared by every module. Pixel (row i, col j) has its
// centre at x = j, y = i; u is the displacement along x, v along y.
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "common/error.hpp"

namespace cardioreg {

struct Grid {
  int rows = 0;
  int cols = 0;

  int size() const noexcept { return rows * cols; }
  bool operator==(const Grid&) const = default;
};

std::string to_string(const Grid& g);

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(const Vec2& o) const noexcept { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const noexcept { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const noexcept { return {x * s, y * s}; }
  double dot(const Vec2& o) const noexcept { return x * o.x + y * o.y; }
  double cross(const Vec2& o) const noexcept { return x * o.y - y * o.x; }
  double norm() const noexcept { return std::hypot(x, y); }
  bool operator==(const Vec2&) const = default;
};

template <class T>
class Array2D {
 public:
  Array2D() = default;
  explicit Array2D(Grid g, T fill = T{}) : grid_(g), data_(static_cast<std::size_t>(g.size()), fill) {
    require(g.rows >= 0 && g.cols >= 0, "negative grid dimension");
  }

  Grid grid() const noexcept { return grid_; }
  int rows() const noexcept { return grid_.rows; }
  int cols() const noexcept { return grid_.cols; }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(int i, int j) noexcept { return data_[static_cast<std::size_t>(i) * grid_.cols + j]; }
  const T& operator()(int i, int j) const noexcept {
    return data_[static_cast<std::size_t>(i) * grid_.cols + j];
  }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  bool operator==(const Array2D&) const = default;

 private:
  Grid grid_{};
  std::vector<T> data_;
};

/// Intensity image; values are kept in [0,1] by the producers.
using Image = Array2D<double>;

/// Label values stored in a mask raster.
enum class Label : std::uint8_t { Background = 0, Myocardium = 1, Cavity = 2 };

/// Myocardium / cavity segmentation stored as one label raster.
class Mask {
 public:
  Mask() = default;
  explicit Mask(Grid g) : labels_(g, static_cast<std::uint8_t>(Label::Background)) {}
  explicit Mask(Array2D<std::uint8_t> labels);

  Grid grid() const noexcept { return labels_.grid(); }
  bool myocardium(int i, int j) const noexcept {
    return labels_(i, j) == static_cast<std::uint8_t>(Label::Myocardium);
  }
  bool cavity(int i, int j) const noexcept {
    return labels_(i, j) == static_cast<std::uint8_t>(Label::Cavity);
  }
  void set(int i, int j, Label l) noexcept { labels_(i, j) = static_cast<std::uint8_t>(l); }
  Label at(int i, int j) const noexcept { return static_cast<Label>(labels_(i, j)); }

  int myocardium_count() const noexcept;
  int cavity_count() const noexcept;
  /// Centroid (x, y) of the cavity pixels; throws when there is no cavity.
  Vec2 cavity_centroid() const;

  const Array2D<std::uint8_t>& labels() const noexcept { return labels_; }
  /// 1.0 on myocardium, 0.0 elsewhere.
  Array2D<double> myocardium_indicator() const;

  bool operator==(const Mask&) const = default;

 private:
  Array2D<std::uint8_t> labels_;
};

/// Backward displacement field in pixel units.
struct DisplacementField {
  Array2D<double> u;
  Array2D<double> v;

  DisplacementField() = default;
  explicit DisplacementField(Grid g) : u(g, 0.0), v(g, 0.0) {}
  Grid grid() const noexcept { return u.grid(); }
  bool is_zero() const noexcept;
  bool all_finite() const noexcept;
  bool operator==(const DisplacementField&) const = default;
};

/// First-order derivatives of a displacement field, channel order fixed as
/// [du/dx, du/dy, dv/dx, dv/dy].
struct GradientField {
  static constexpr int kChannels = 4;
  std::array<Array2D<double>, kChannels> channel;

  GradientField() = default;
  explicit GradientField(Grid g) {
    for (auto& c : channel) c = Array2D<double>(g, 0.0);
  }
  Grid grid() const noexcept { return channel[0].grid(); }
  Array2D<double>& dudx() noexcept { return channel[0]; }
  Array2D<double>& dudy() noexcept { return channel[1]; }
  Array2D<double>& dvdx() noexcept { return channel[2]; }
  Array2D<double>& dvdy() noexcept { return channel[3]; }
  const Array2D<double>& dudx() const noexcept { return channel[0]; }
  const Array2D<double>& dudy() const noexcept { return channel[1]; }
  const Array2D<double>& dvdx() const noexcept { return channel[2]; }
  const Array2D<double>& dvdy() const noexcept { return channel[3]; }
  bool operator==(const GradientField&) const = default;
};

/// Rounds every value to the nearest float32 so that what is held in memory
/// equals what the on-disk float32 tensors store.
void quantize_f32(Array2D<double>& a);
void quantize_f32(DisplacementField& f);

}  // namespace cardioreg
