// SPDX-License-Identifier: Apache-2.0
#include "common/contour.hpp"

#include <algorithm>
#include <limits>
#include <queue>
#include <unordered_map>

namespace cardioreg {

namespace {

struct Segment {
  long from_edge;
  long to_edge;
  Vec2 from;
  Vec2 to;
};

}  // namespace

std::vector<Polyline> binary_contours(const Array2D<double>& indicator) {
  const int rows = indicator.rows() + 2;
  const int cols = indicator.cols() + 2;
  auto inside = [&](int i, int j) {
    const int oi = i - 1, oj = j - 1;
    if (oi < 0 || oj < 0 || oi >= indicator.rows() || oj >= indicator.cols()) return false;
    return indicator(oi, oj) > 0.5;
  };
  // Node (i, j) of the padded raster sits at x = j - 1, y = i - 1.
  auto node = [](int i, int j) { return Vec2{double(j - 1), double(i - 1)}; };
  auto hedge = [&](int i, int j) { return (static_cast<long>(i) * cols + j) * 2; };
  auto vedge = [&](int i, int j) { return (static_cast<long>(i) * cols + j) * 2 + 1; };

  std::vector<Segment> segs;
  for (int i = 0; i + 1 < rows; ++i) {
    for (int j = 0; j + 1 < cols; ++j) {
      // corners: a top-left, b top-right, c bottom-right, d bottom-left
      const bool a = inside(i, j), b = inside(i, j + 1), c = inside(i + 1, j + 1), d = inside(i + 1, j);
      const int n_in = a + b + c + d;
      if (n_in == 0 || n_in == 4) continue;
      struct Crossing {
        long edge;
        Vec2 p;
      };
      const Crossing top{hedge(i, j), (node(i, j) + node(i, j + 1)) * 0.5};
      const Crossing right{vedge(i, j + 1), (node(i, j + 1) + node(i + 1, j + 1)) * 0.5};
      const Crossing bottom{hedge(i + 1, j), (node(i + 1, j) + node(i + 1, j + 1)) * 0.5};
      const Crossing left{vedge(i, j), (node(i, j) + node(i + 1, j)) * 0.5};

      auto emit = [&](const Crossing& p, const Crossing& q, const Vec2& in_pt) {
        if ((q.p - p.p).cross(in_pt - p.p) > 0)
          segs.push_back({p.edge, q.edge, p.p, q.p});
        else
          segs.push_back({q.edge, p.edge, q.p, p.p});
      };

      if (n_in == 2 && a == c) {
        // Saddle: diagonal inside pixels are not 4-connected, keep them apart.
        if (a) {
          emit(top, left, node(i, j));
          emit(right, bottom, node(i + 1, j + 1));
        } else {
          emit(top, right, node(i, j + 1));
          emit(bottom, left, node(i + 1, j));
        }
        continue;
      }
      std::vector<Crossing> xs;
      if (a != b) xs.push_back(top);
      if (b != c) xs.push_back(right);
      if (c != d) xs.push_back(bottom);
      if (d != a) xs.push_back(left);
      Vec2 in_pt = a ? node(i, j) : b ? node(i, j + 1) : c ? node(i + 1, j + 1) : node(i + 1, j);
      emit(xs[0], xs[1], in_pt);
    }
  }

  std::unordered_map<long, std::size_t> by_start;
  by_start.reserve(segs.size() * 2);
  for (std::size_t k = 0; k < segs.size(); ++k) by_start.emplace(segs[k].from_edge, k);

  std::vector<char> used(segs.size(), 0);
  std::vector<Polyline> loops;
  for (std::size_t k0 = 0; k0 < segs.size(); ++k0) {
    if (used[k0]) continue;
    Polyline loop;
    std::size_t k = k0;
    while (!used[k]) {
      used[k] = 1;
      loop.push_back(segs[k].from);
      auto it = by_start.find(segs[k].to_edge);
      if (it == by_start.end()) break;
      k = it->second;
    }
    loops.push_back(std::move(loop));
  }
  return loops;
}

double signed_area(const Polyline& loop) {
  double a = 0;
  const std::size_t n = loop.size();
  for (std::size_t k = 0; k < n; ++k) a += loop[k].cross(loop[(k + 1) % n]);
  return 0.5 * a;
}

double distance_to_loop(const Vec2& p, const Polyline& loop) {
  double best = std::numeric_limits<double>::infinity();
  const std::size_t n = loop.size();
  for (std::size_t k = 0; k < n; ++k) {
    const Vec2 a = loop[k], b = loop[(k + 1) % n];
    const Vec2 ab = b - a;
    const double len2 = ab.dot(ab);
    double t = len2 > 0 ? (p - a).dot(ab) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    best = std::min(best, (p - (a + ab * t)).norm());
  }
  return best;
}

int connected_components(const Array2D<std::uint8_t>& in, Array2D<int>& labels, int connectivity) {
  require(connectivity == 4 || connectivity == 8, "connectivity must be 4 or 8");
  labels = Array2D<int>(in.grid(), 0);
  int n = 0;
  std::queue<std::pair<int, int>> q;
  for (int i = 0; i < in.rows(); ++i) {
    for (int j = 0; j < in.cols(); ++j) {
      if (!in(i, j) || labels(i, j)) continue;
      labels(i, j) = ++n;
      q.emplace(i, j);
      while (!q.empty()) {
        auto [ci, cj] = q.front();
        q.pop();
        constexpr int di[8] = {-1, 1, 0, 0, -1, -1, 1, 1};
        constexpr int dj[8] = {0, 0, -1, 1, -1, 1, -1, 1};
        for (int k = 0; k < connectivity; ++k) {
          const int ni = ci + di[k], nj = cj + dj[k];
          if (ni < 0 || nj < 0 || ni >= in.rows() || nj >= in.cols()) continue;
          if (!in(ni, nj) || labels(ni, nj)) continue;
          labels(ni, nj) = n;
          q.emplace(ni, nj);
        }
      }
    }
  }
  return n;
}

void check_annulus_topology(const Mask& mask) {
  const Grid g = mask.grid();
  Array2D<std::uint8_t> myo(g, 0), rest(g, 0);
  for (int i = 0; i < g.rows; ++i)
    for (int j = 0; j < g.cols; ++j) {
      myo(i, j) = mask.myocardium(i, j);
      rest(i, j) = !mask.myocardium(i, j);
    }
  Array2D<int> lab;
  const int n_myo = connected_components(myo, lab, 4);
  if (n_myo != 1)
    fail(ErrorKind::Topology, "myocardium has " + std::to_string(n_myo) + " components, expected 1");

  const int n_rest = connected_components(rest, lab, 4);
  std::vector<char> touches(static_cast<std::size_t>(n_rest) + 1, 0);
  for (int i = 0; i < g.rows; ++i)
    for (int j = 0; j < g.cols; ++j)
      if (lab(i, j) && (i == 0 || j == 0 || i == g.rows - 1 || j == g.cols - 1)) touches[lab(i, j)] = 1;
  int enclosed = 0, enclosed_label = 0;
  for (int k = 1; k <= n_rest; ++k)
    if (!touches[k]) {
      ++enclosed;
      enclosed_label = k;
    }
  if (enclosed != 1)
    fail(ErrorKind::Topology,
         "myocardium encloses " + std::to_string(enclosed) + " cavity components, expected 1");
  for (int i = 0; i < g.rows; ++i)
    for (int j = 0; j < g.cols; ++j)
      if (mask.cavity(i, j) && lab(i, j) != enclosed_label)
        fail(ErrorKind::Topology, "cavity label outside the enclosed region");
}

int absorb_islands(Mask& mask, int max_pixels) {
  const Grid g = mask.grid();
  int changed = 0;
  Array2D<std::uint8_t> sel(g, 0);
  Array2D<int> lab;
  auto sizes_of = [&](int n) {
    std::vector<int> sz(static_cast<std::size_t>(n) + 1, 0);
    for (int v : lab.values()) ++sz[v];
    sz[0] = 0;
    return sz;
  };

  for (int i = 0; i < g.rows; ++i)
    for (int j = 0; j < g.cols; ++j) sel(i, j) = mask.myocardium(i, j);
  int n = connected_components(sel, lab, 4);
  auto sz = sizes_of(n);
  const int keep = static_cast<int>(std::max_element(sz.begin(), sz.end()) - sz.begin());
  for (int k = 1; k <= n; ++k) {
    if (k == keep || sz[k] > max_pixels) continue;
    int votes[3] = {0, 0, 0};
    for (int i = 0; i < g.rows; ++i)
      for (int j = 0; j < g.cols; ++j) {
        if (lab(i, j) != k) continue;
        for (int di = -1; di <= 1; ++di)
          for (int dj = -1; dj <= 1; ++dj) {
            const int a = i + di, b = j + dj;
            if (a < 0 || b < 0 || a >= g.rows || b >= g.cols || mask.myocardium(a, b)) continue;
            ++votes[static_cast<int>(mask.at(a, b))];
          }
      }
    const Label to = votes[static_cast<int>(Label::Cavity)] > votes[static_cast<int>(Label::Background)]
                         ? Label::Cavity
                         : Label::Background;
    for (int i = 0; i < g.rows; ++i)
      for (int j = 0; j < g.cols; ++j)
        if (lab(i, j) == k) {
          mask.set(i, j, to);
          ++changed;
        }
  }

  for (int i = 0; i < g.rows; ++i)
    for (int j = 0; j < g.cols; ++j) sel(i, j) = !mask.myocardium(i, j);
  n = connected_components(sel, lab, 4);
  sz = sizes_of(n);
  for (int i = 0; i < g.rows; ++i)
    for (int j = 0; j < g.cols; ++j)
      if (lab(i, j) && (i == 0 || j == 0 || i == g.rows - 1 || j == g.cols - 1)) sz[lab(i, j)] = -1;
  const int pocket = static_cast<int>(std::max_element(sz.begin(), sz.end()) - sz.begin());
  for (int i = 0; i < g.rows; ++i)
    for (int j = 0; j < g.cols; ++j) {
      const int k = lab(i, j);
      if (k && k != pocket && sz[k] > 0 && sz[k] <= max_pixels) {
        mask.set(i, j, Label::Myocardium);
        ++changed;
      }
    }
  return changed;
}

}  // namespace cardioreg
