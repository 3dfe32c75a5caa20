// SPDX-License-Identifier: Apache-2.0
//
// Minimal PNG line charts (no text rendering; the data is written alongside
// as CSV by the callers).
#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <vector>

namespace cardioreg::harness {

struct Series {
  std::vector<double> x, y;
  std::array<unsigned char, 3> rgb{31, 119, 180};
};

struct ChartOptions {
  int width = 640;
  int height = 400;
  std::optional<std::array<double, 2>> y_band;  // shaded horizontal band
  std::optional<std::array<double, 2>> y_range;
  bool log_x = false;
};

void write_line_chart(const std::filesystem::path& path, const std::vector<Series>& series,
                      const ChartOptions& opt = {});

/// Palette colour k.
std::array<unsigned char, 3> palette(int k);

}  // namespace cardioreg::harness
