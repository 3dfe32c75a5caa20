// SPDX-License-Identifier: Apache-2.0
#include "harness/plot.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "common/error.hpp"

namespace cardioreg::harness {

namespace {

struct Canvas {
  int w, h;
  std::vector<unsigned char> px;
  Canvas(int w_, int h_) : w(w_), h(h_), px(static_cast<std::size_t>(w_) * h_ * 3, 255) {}
  void set(int x, int y, const std::array<unsigned char, 3>& c) {
    if (x < 0 || y < 0 || x >= w || y >= h) return;
    auto* p = &px[(static_cast<std::size_t>(y) * w + x) * 3];
    p[0] = c[0];
    p[1] = c[1];
    p[2] = c[2];
  }
  void line(double x0, double y0, double x1, double y1, const std::array<unsigned char, 3>& c, int thick = 1) {
    const int n = static_cast<int>(std::ceil(std::max(std::abs(x1 - x0), std::abs(y1 - y0)))) + 1;
    for (int k = 0; k <= n; ++k) {
      const double t = static_cast<double>(k) / n;
      const int x = static_cast<int>(std::lround(x0 + t * (x1 - x0)));
      const int y = static_cast<int>(std::lround(y0 + t * (y1 - y0)));
      for (int dy = -(thick / 2); dy <= thick / 2; ++dy)
        for (int dx = -(thick / 2); dx <= thick / 2; ++dx) set(x + dx, y + dy, c);
    }
  }
};

}  // namespace

std::array<unsigned char, 3> palette(int k) {
  static const std::array<std::array<unsigned char, 3>, 8> p = {{{31, 119, 180},
                                                                 {255, 127, 14},
                                                                 {44, 160, 44},
                                                                 {214, 39, 40},
                                                                 {148, 103, 189},
                                                                 {140, 86, 75},
                                                                 {227, 119, 194},
                                                                 {127, 127, 127}}};
  return p[static_cast<std::size_t>(k) % p.size()];
}

void write_line_chart(const std::filesystem::path& path, const std::vector<Series>& series, const ChartOptions& opt) {
  require(opt.width >= 64 && opt.height >= 64, "plot: canvas too small");
  auto tx = [&](double x) { return opt.log_x ? std::log10(std::max(x, 1e-300)) : x; };
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
  for (const auto& s : series) {
    require(s.x.size() == s.y.size(), "plot: x and y lengths differ");
    for (std::size_t k = 0; k < s.x.size(); ++k) {
      if (!std::isfinite(s.y[k])) continue;
      xmin = std::min(xmin, tx(s.x[k]));
      xmax = std::max(xmax, tx(s.x[k]));
      ymin = std::min(ymin, s.y[k]);
      ymax = std::max(ymax, s.y[k]);
    }
  }
  if (opt.y_band) {
    ymin = std::min(ymin, (*opt.y_band)[0]);
    ymax = std::max(ymax, (*opt.y_band)[1]);
  }
  if (opt.y_range) {
    ymin = (*opt.y_range)[0];
    ymax = (*opt.y_range)[1];
  }
  if (!std::isfinite(xmin)) xmin = 0, xmax = 1;
  if (!std::isfinite(ymin)) ymin = 0, ymax = 1;
  if (xmax - xmin < 1e-12) xmin -= 0.5, xmax += 0.5;
  if (ymax - ymin < 1e-12) ymin -= 0.5, ymax += 0.5;
  const double pad = 0.05 * (ymax - ymin);
  ymin -= pad;
  ymax += pad;

  Canvas cv(opt.width, opt.height);
  const int L = 48, R = opt.width - 16, T = 16, B = opt.height - 40;
  auto X = [&](double x) { return L + (tx(x) - xmin) / (xmax - xmin) * (R - L); };
  auto Y = [&](double y) { return B - (y - ymin) / (ymax - ymin) * (B - T); };
  if (opt.y_band) {
    const int y0 = static_cast<int>(std::lround(Y((*opt.y_band)[1]))), y1 = static_cast<int>(std::lround(Y((*opt.y_band)[0])));
    for (int y = std::max(T, y0); y <= std::min(B, y1); ++y)
      for (int x = L; x <= R; ++x) cv.set(x, y, {225, 240, 225});
  }
  const std::array<unsigned char, 3> grid{220, 220, 220}, axis{0, 0, 0};
  for (int k = 0; k <= 10; ++k) {
    const double gy = T + (B - T) * k / 10.0, gx = L + (R - L) * k / 10.0;
    cv.line(L, gy, R, gy, grid);
    cv.line(gx, T, gx, B, grid);
  }
  if (ymin < 0 && ymax > 0) cv.line(L, Y(0), R, Y(0), {150, 150, 150});
  cv.line(L, B, R, B, axis, 2);
  cv.line(L, T, L, B, axis, 2);
  for (const auto& s : series) {
    for (std::size_t k = 0; k + 1 < s.x.size(); ++k)
      if (std::isfinite(s.y[k]) && std::isfinite(s.y[k + 1]))
        cv.line(X(s.x[k]), Y(s.y[k]), X(s.x[k + 1]), Y(s.y[k + 1]), s.rgb, 2);
    for (std::size_t k = 0; k < s.x.size(); ++k)
      if (std::isfinite(s.y[k]))
        for (int d = -2; d <= 2; ++d) {
          cv.set(static_cast<int>(std::lround(X(s.x[k]))) + d, static_cast<int>(std::lround(Y(s.y[k]))), s.rgb);
          cv.set(static_cast<int>(std::lround(X(s.x[k]))), static_cast<int>(std::lround(Y(s.y[k]))) + d, s.rgb);
        }
  }

  FILE* fp = std::fopen(path.string().c_str(), "wb");
  if (!fp) fail(ErrorKind::MissingInput, "plot: cannot open " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    fail(ErrorKind::MissingInput, "plot: libpng failure writing " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, cv.w, cv.h, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < cv.h; ++y) png_write_row(png, &cv.px[static_cast<std::size_t>(y) * cv.w * 3]);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

}  // namespace cardioreg::harness
