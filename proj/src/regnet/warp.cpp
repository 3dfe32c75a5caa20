// SPDX-License-Identifier: Apache-2.0
#include "regnet/warp.hpp"

#include <algorithm>
#include <cmath>

namespace cardioreg::regnet {

torch::Tensor warp(const torch::Tensor& image, const torch::Tensor& phi) {
  require(image.dim() == 4 && phi.dim() == 4, "warp: expected 4-D tensors");
  const auto B = image.size(0), C = image.size(1), H = image.size(2), W = image.size(3);
  require(phi.size(0) == B && phi.size(1) == 2 && phi.size(2) == H && phi.size(3) == W,
          "warp: displacement field shape does not match image");
  const auto opts = phi.options();
  auto xs = (torch::arange(W, opts).view({1, 1, W}) + phi.select(1, 0)).clamp(0, double(W - 1));
  auto ys = (torch::arange(H, opts).view({1, H, 1}) + phi.select(1, 1)).clamp(0, double(H - 1));
  const auto x0 = xs.detach().floor().clamp(0, double(std::max<int64_t>(W - 2, 0)));
  const auto y0 = ys.detach().floor().clamp(0, double(std::max<int64_t>(H - 2, 0)));
  const auto wx = (xs - x0).unsqueeze(1);  // [B,1,H,W]
  const auto wy = (ys - y0).unsqueeze(1);

  const auto x0i = x0.to(torch::kLong);
  const auto y0i = y0.to(torch::kLong);
  const auto x1i = (x0i + 1).clamp_max(W - 1);
  const auto y1i = (y0i + 1).clamp_max(H - 1);

  const auto flat = image.reshape({B, C, H * W});
  auto sample = [&](const torch::Tensor& yi, const torch::Tensor& xi) {
    auto idx = (yi * W + xi).reshape({B, 1, H * W}).expand({B, C, H * W});
    return flat.gather(2, idx).reshape({B, C, H, W});
  };
  const auto i00 = sample(y0i, x0i);
  const auto i01 = sample(y0i, x1i);
  const auto i10 = sample(y1i, x0i);
  const auto i11 = sample(y1i, x1i);
  return (1 - wy) * ((1 - wx) * i00 + wx * i01) + wy * ((1 - wx) * i10 + wx * i11);
}

torch::Tensor to_tensor(const Image& image, torch::Dtype dtype) {
  auto t = torch::empty({1, 1, image.rows(), image.cols()}, torch::kDouble);
  std::copy(image.values().begin(), image.values().end(), t.data_ptr<double>());
  return t.to(dtype);
}

torch::Tensor to_tensor(const DisplacementField& phi, torch::Dtype dtype) {
  const Grid g = phi.grid();
  auto t = torch::empty({1, 2, g.rows, g.cols}, torch::kDouble);
  double* p = t.data_ptr<double>();
  std::copy(phi.u.values().begin(), phi.u.values().end(), p);
  std::copy(phi.v.values().begin(), phi.v.values().end(), p + g.size());
  return t.to(dtype);
}

torch::Tensor to_tensor(const GradientField& gf, torch::Dtype dtype) {
  const Grid g = gf.grid();
  auto t = torch::empty({1, 4, g.rows, g.cols}, torch::kDouble);
  double* p = t.data_ptr<double>();
  for (int c = 0; c < 4; ++c) std::copy(gf.channel[c].values().begin(), gf.channel[c].values().end(), p + c * g.size());
  return t.to(dtype);
}

torch::Tensor myocardium_tensor(const Mask& mask, torch::Dtype dtype) {
  return to_tensor(mask.myocardium_indicator(), dtype);
}

Image image_from_tensor(const torch::Tensor& t) {
  auto c = t.detach().to(torch::kDouble).contiguous();
  const auto H = c.size(-2), W = c.size(-1);
  require(c.numel() == H * W, "image tensor must hold a single channel");
  Image img(Grid{int(H), int(W)});
  std::copy(c.data_ptr<double>(), c.data_ptr<double>() + H * W, img.values().begin());
  return img;
}

DisplacementField field_from_tensor(const torch::Tensor& t) {
  auto c = t.detach().to(torch::kDouble).contiguous();
  const auto H = c.size(-2), W = c.size(-1);
  require(c.numel() == 2 * H * W, "field tensor must hold two channels");
  DisplacementField f(Grid{int(H), int(W)});
  const double* p = c.data_ptr<double>();
  std::copy(p, p + H * W, f.u.values().begin());
  std::copy(p + H * W, p + 2 * H * W, f.v.values().begin());
  return f;
}

GradientField gradient_from_tensor(const torch::Tensor& t) {
  auto c = t.detach().to(torch::kDouble).contiguous();
  const auto H = c.size(-2), W = c.size(-1);
  require(c.numel() == 4 * H * W, "gradient tensor must hold four channels");
  GradientField gf(Grid{int(H), int(W)});
  const double* p = c.data_ptr<double>();
  for (int k = 0; k < 4; ++k) std::copy(p + k * H * W, p + (k + 1) * H * W, gf.channel[k].values().begin());
  return gf;
}

Image warp(const Image& image, const DisplacementField& phi) {
  require(image.grid() == phi.grid(), "warp: grid mismatch " + to_string(image.grid()) + " vs " +
                                          to_string(phi.grid()));
  torch::NoGradGuard guard;
  return image_from_tensor(warp(to_tensor(image), to_tensor(phi)));
}

Mask warp_nearest(const Mask& mask, const DisplacementField& phi) {
  const Grid g = mask.grid();
  require(g == phi.grid(), "warp_nearest: grid mismatch");
  Mask out(g);
  for (int i = 0; i < g.rows; ++i)
    for (int j = 0; j < g.cols; ++j) {
      const double x = std::clamp(j + phi.u(i, j), 0.0, double(g.cols - 1));
      const double y = std::clamp(i + phi.v(i, j), 0.0, double(g.rows - 1));
      const int sj = static_cast<int>(std::floor(x + 0.5));
      const int si = static_cast<int>(std::floor(y + 0.5));
      out.set(i, j, mask.at(std::min(si, g.rows - 1), std::min(sj, g.cols - 1)));
    }
  return out;
}

}  // namespace cardioreg::regnet
