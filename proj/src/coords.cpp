#include "ciaosr/coords.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace ciaosr {

CoordGrid::CoordGrid(int height, int width) : height_(height), width_(width) {
  if (height < 1 || width < 1)
    throw std::invalid_argument("coord grid: dimensions must be >= 1, got " + std::to_string(height) + "x" +
                                std::to_string(width));
}

std::vector<Coord> CoordGrid::coords() const {
  std::vector<Coord> out;
  out.reserve(static_cast<std::size_t>(height_) * width_);
  for (int i = 0; i < height_; ++i)
    for (int j = 0; j < width_; ++j) out.push_back(at(i, j));
  return out;
}

CoordGrid make_coord_grid(int height, int width) { return CoordGrid(height, width); }

namespace {
// Continuous cell index: cell centers land on integers.
double continuous_index(double v, int n) {
  double u = (v + 1.0) * n / 2.0 - 0.5;
  double r = std::round(u);
  if (std::abs(u - r) < 1e-9) u = r;
  return u;
}

int nearest_1d(double v, int n) {
  double u = continuous_index(v, n);
  double lo = std::floor(u);
  int idx = static_cast<int>(lo);
  if (u - lo > 0.5) idx += 1;
  return std::clamp(idx, 0, n - 1);
}

std::array<double, 2> pair_weights(double q, double a, double b) {
  double wa = std::abs(q - b);
  double wb = std::abs(q - a);
  if (wa + wb == 0.0) return {0.5, 0.5};
  return {wa, wb};
}
}  // namespace

GridIndex nearest_index(Coord q, const CoordGrid& grid) {
  return {nearest_1d(q.y, grid.height()), nearest_1d(q.x, grid.width())};
}

Neighborhood local_neighbors(Coord q, const CoordGrid& grid) {
  const int h = grid.height(), w = grid.width();
  const int r0 = static_cast<int>(std::floor(continuous_index(q.y, h)));
  const int c0 = static_cast<int>(std::floor(continuous_index(q.x, w)));
  const int rows[2] = {std::clamp(r0, 0, h - 1), std::clamp(r0 + 1, 0, h - 1)};
  const int cols[2] = {std::clamp(c0, 0, w - 1), std::clamp(c0 + 1, 0, w - 1)};
  Neighborhood nb;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) {
      nb.cells[a * 2 + b] = {rows[a], cols[b]};
      nb.coords[a * 2 + b] = grid.at(rows[a], cols[b]);
    }
  return nb;
}

std::array<double, 4> area_weights(Coord q, const Neighborhood& nb) {
  const auto wy = pair_weights(q.y, nb.coords[0].y, nb.coords[2].y);
  const auto wx = pair_weights(q.x, nb.coords[0].x, nb.coords[1].x);
  std::array<double, 4> w = {wy[0] * wx[0], wy[0] * wx[1], wy[1] * wx[0], wy[1] * wx[1]};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < i; ++j)
      if (nb.cells[i] == nb.cells[j]) {
        w[j] += w[i];
        w[i] = 0.0;
        break;
      }
  const double total = w[0] + w[1] + w[2] + w[3];
  for (auto& v : w) v /= total;
  return w;
}

Scale scale_vector(int h_in, int w_in, int h_out, int w_out) {
  if (h_in <= 0 || w_in <= 0) throw std::invalid_argument("scale_vector: input size must be positive");
  if (h_out <= 0 || w_out <= 0) throw std::invalid_argument("scale_vector: output size must be positive");
  return {static_cast<double>(h_out) / h_in, static_cast<double>(w_out) / w_in};
}

RelOffset rel_offset(Coord q, Coord k, const CoordGrid& grid, bool scale_by_resolution) {
  RelOffset r{q.y - k.y, q.x - k.x};
  if (scale_by_resolution) {
    r.dy *= grid.height();
    r.dx *= grid.width();
  }
  return r;
}

std::vector<GridIndex> local_region(Coord q, const CoordGrid& grid, int local_size) {
  switch (local_size) {
    case 1:
      return {nearest_index(q, grid)};
    case 2: {
      auto nb = local_neighbors(q, grid);
      return {nb.cells.begin(), nb.cells.end()};
    }
    case 3: {
      auto c = nearest_index(q, grid);
      std::vector<GridIndex> out;
      out.reserve(9);
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx)
          out.push_back({std::clamp(c.row + dy, 0, grid.height() - 1), std::clamp(c.col + dx, 0, grid.width() - 1)});
      return out;
    }
    default:
      throw std::invalid_argument("local_region: local size must be 1, 2 or 3, got " + std::to_string(local_size));
  }
}

}  // namespace ciaosr
