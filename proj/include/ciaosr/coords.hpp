#pragma once

#include <array>
#include <cstddef>
#include <vector>

// Continuous image domain: pixel i of an n-pixel axis sits at -1 + (2i+1)/n.
namespace ciaosr {

struct Coord {
  double y = 0;
  double x = 0;
};

/// Output-size / input-size ratio per axis.
struct Scale {
  double h = 1;
  double w = 1;
};

struct RelOffset {
  double dy = 0;
  double dx = 0;
};

struct GridIndex {
  int row = 0;
  int col = 0;
  bool operator==(const GridIndex&) const = default;
};

class CoordGrid {
 public:
  CoordGrid(int height, int width);

  int height() const { return height_; }
  int width() const { return width_; }
  double row(int i) const { return -1.0 + (2.0 * i + 1.0) / height_; }
  double col(int j) const { return -1.0 + (2.0 * j + 1.0) / width_; }
  Coord at(int i, int j) const { return {row(i), col(j)}; }
  Coord at(GridIndex g) const { return at(g.row, g.col); }
  std::vector<Coord> coords() const;

 private:
  int height_;
  int width_;
};

CoordGrid make_coord_grid(int height, int width);

/// Nearest cell center; out-of-range queries clamp, ties go to the smaller
/// index.
GridIndex nearest_index(Coord q, const CoordGrid& grid);

/// The 2x2 cells around q, ordered 00, 01, 10, 11 (row-major). Indices
/// clamp at borders, so entries may repeat.
struct Neighborhood {
  std::array<GridIndex, 4> cells;
  std::array<Coord, 4> coords;
};

Neighborhood local_neighbors(Coord q, const CoordGrid& grid);

/// Bilinear-equivalent weights: each neighbor gets the area of the
/// rectangle between q and its diagonally opposite neighbor. Duplicate
/// cells are merged into their first occurrence. Sums to 1.
std::array<double, 4> area_weights(Coord q, const Neighborhood& nb);

Scale scale_vector(int h_in, int w_in, int h_out, int w_out);

/// q - k, with dy multiplied by grid height and dx by grid width when
/// scale_by_resolution is set.
RelOffset rel_offset(Coord q, Coord k, const CoordGrid& grid, bool scale_by_resolution = true);

/// Cells taking part in the local ensemble for local_size 1 (nearest),
/// 2 (the surrounding 2x2) or 3 (3x3 around the nearest cell, clamped).
std::vector<GridIndex> local_region(Coord q, const CoordGrid& grid, int local_size);

inline std::size_t region_size(int local_size) {
  return static_cast<std::size_t>(local_size == 1 ? 1 : local_size == 2 ? 4 : 9);
}

}  // namespace ciaosr
