// SPDX-License-Identifier: Apache-2.0
#include "vae/grad_field.hpp"

#include <cmath>

namespace cardioreg::vae {

GradientField grad_field(const DisplacementField& phi) {
  require(phi.u.grid() == phi.v.grid(), "u and v grids differ");
  const Grid g = phi.grid();
  GradientField gf(g);
  for (int i = 0; i < g.rows; ++i) {
    for (int j = 0; j < g.cols; ++j) {
      const int jn = j + 1 < g.cols ? j + 1 : j;
      const int in = i + 1 < g.rows ? i + 1 : i;
      gf.dudx()(i, j) = phi.u(i, jn) - phi.u(i, j);
      gf.dudy()(i, j) = phi.u(in, j) - phi.u(i, j);
      gf.dvdx()(i, j) = phi.v(i, jn) - phi.v(i, j);
      gf.dvdy()(i, j) = phi.v(in, j) - phi.v(i, j);
    }
  }
  return gf;
}

GradientField apply_mask(const GradientField& gf, const Mask& mask) {
  require(gf.grid() == mask.grid(), "gradient field and mask grids differ");
  GradientField out = gf;
  for (auto& ch : out.channel)
    for (int i = 0; i < ch.rows(); ++i)
      for (int j = 0; j < ch.cols(); ++j)
        if (!mask.myocardium(i, j)) ch(i, j) = 0.0;
  return out;
}

double rms(const GradientField& gf) {
  double s = 0;
  long n = 0;
  for (const auto& ch : gf.channel)
    for (double x : ch.values()) {
      s += x * x;
      ++n;
    }
  return n ? std::sqrt(s / n) : 0.0;
}

}  // namespace cardioreg::vae
