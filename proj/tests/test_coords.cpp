#include <algorithm>
#include <cmath>
#include <limits>

#include "doctest.h"
#include "oracles.hpp"

#include "ciaosr/coords.hpp"
#include "ciaosr/rng.hpp"

using namespace ciaosr;
using namespace oracle;

namespace {

}  // namespace

TEST_CASE("coordinate grid examples") {
  CHECK(make_coord_grid(2, 1).row(0) == -0.5);
  CHECK(make_coord_grid(2, 1).row(1) == 0.5);
  CHECK(make_coord_grid(1, 1).row(0) == 0.0);
  const auto g3 = make_coord_grid(3, 3);
  CHECK(g3.row(0) == doctest::Approx(-2.0 / 3));
  CHECK(g3.row(1) == doctest::Approx(0.0));
  CHECK(g3.row(2) == doctest::Approx(2.0 / 3));
  CHECK_THROWS_AS(make_coord_grid(0, 4), std::invalid_argument);
  CHECK_THROWS_AS(make_coord_grid(4, 0), std::invalid_argument);
}

TEST_CASE("grid coordinates strictly increase inside (-1, 1)") {
  for (int n : {1, 2, 5, 17, 48}) {
    const auto g = make_coord_grid(n, n + 3);
    for (int i = 0; i < n; ++i) {
      CHECK(g.row(i) > -1.0);
      CHECK(g.row(i) < 1.0);
      if (i) CHECK(g.row(i) > g.row(i - 1));
    }
    const auto all = g.coords();
    CHECK(all.size() == static_cast<std::size_t>(n * (n + 3)));
  }
}

TEST_CASE("nearest index examples") {
  const auto g = make_coord_grid(7, 9);
  CHECK(nearest_index(g.at(3, 4), g) == GridIndex{3, 4});
  CHECK(nearest_index({-1, -1}, g) == GridIndex{0, 0});
  CHECK(nearest_index({1, 1}, g) == GridIndex{6, 8});
  CHECK(nearest_index({-5, 3}, g) == GridIndex{0, 8});
  // exact midpoint between rows 0 and 1 of a 2-row grid: tie goes low
  CHECK(nearest_index({0.0, 0.0}, make_coord_grid(2, 2)) == GridIndex{0, 0});
}

TEST_CASE("nearest index matches an exhaustive scan") {
  Rng rng(1);
  const auto g = make_coord_grid(7, 9);
  for (int t = 0; t < 100; ++t) {
    const Coord q{rng.uniform(-1, 1), rng.uniform(-1, 1)};
    GridIndex best;
    double best_d = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 7; ++i)
      for (int j = 0; j < 9; ++j) {
        const double d = std::hypot(q.y - g.row(i), q.x - g.col(j));
        if (d < best_d - 1e-15) {
          best_d = d;
          best = {i, j};
        }
      }
    CHECK(nearest_index(q, g) == best);
  }
}

TEST_CASE("nearest index of every cell center is that cell") {
  for (auto [h, w] : {std::pair{1, 1}, {3, 5}, {10, 10}, {31, 7}}) {
    const auto g = make_coord_grid(h, w);
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) CHECK(nearest_index(g.at(i, j), g) == GridIndex{i, j});
  }
}

TEST_CASE("unit-scale query grid maps each query to its own cell") {
  const auto lr = make_coord_grid(6, 8);
  const auto hr = make_coord_grid(6, 8);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 8; ++j) CHECK(nearest_index(hr.at(i, j), lr) == GridIndex{i, j});
}

TEST_CASE("local neighbours examples") {
  const auto g = make_coord_grid(5, 5);
  const auto nb = local_neighbors(g.at(2, 1), g);
  CHECK(nb.cells[0] == GridIndex{2, 1});
  CHECK(nb.cells[1] == GridIndex{2, 2});
  CHECK(nb.cells[2] == GridIndex{3, 1});
  CHECK(nb.cells[3] == GridIndex{3, 2});

  const auto corner = local_neighbors({-1, -1}, g);
  for (const auto& c : corner.cells) CHECK(c == GridIndex{0, 0});

  const Coord mid{(g.row(1) + g.row(2)) / 2, (g.col(3) + g.col(4)) / 2};
  const auto m = local_neighbors(mid, g);
  CHECK(m.cells[0] == GridIndex{1, 3});
  CHECK(m.cells[1] == GridIndex{1, 4});
  CHECK(m.cells[2] == GridIndex{2, 3});
  CHECK(m.cells[3] == GridIndex{2, 4});
  for (int k = 0; k < 4; ++k) {
    CHECK(m.coords[k].y == g.at(m.cells[k]).y);
    CHECK(m.coords[k].x == g.at(m.cells[k]).x);
  }
}

TEST_CASE("area weight examples") {
  const auto g = make_coord_grid(5, 5);
  const Coord mid{(g.row(1) + g.row(2)) / 2, (g.col(3) + g.col(4)) / 2};
  for (double w : area_weights(mid, local_neighbors(mid, g))) CHECK(w == doctest::Approx(0.25).epsilon(1e-12));
  const auto on = area_weights(g.at(2, 2), local_neighbors(g.at(2, 2), g));
  CHECK(on[0] == doctest::Approx(1.0));
  CHECK(on[1] == doctest::Approx(0.0));
  CHECK(on[2] == doctest::Approx(0.0));
  CHECK(on[3] == doctest::Approx(0.0));
  const auto corner = area_weights({-1, -1}, local_neighbors({-1, -1}, g));
  CHECK(corner[0] == 1.0);
  CHECK(corner[1] + corner[2] + corner[3] == 0.0);
}

TEST_CASE("area-weight ensemble equals bilinear interpolation") {
  Rng rng(2);
  for (auto [h, w] : {std::pair{6, 6}, {4, 9}, {1, 5}, {13, 2}}) {
    std::vector<double> values(h * w);
    for (double& v : values) v = rng.uniform(-2, 2);
    const auto grid = make_coord_grid(h, w);
    for (int t = 0; t < 1000; ++t) {
      const Coord q{rng.uniform(-1, 1), rng.uniform(-1, 1)};
      const auto nb = local_neighbors(q, grid);
      const auto wts = area_weights(q, nb);
      double acc = 0, total = 0;
      for (int k = 0; k < 4; ++k) {
        CHECK(wts[k] >= 0.0);
        acc += wts[k] * values[nb.cells[k].row * w + nb.cells[k].col];
        total += wts[k];
      }
      CHECK(std::abs(total - 1.0) < 1e-9);
      CHECK(std::abs(acc - bilinear(values, h, w, q)) < 1e-6);
    }
  }
}

TEST_CASE("scale vector examples") {
  const auto a = scale_vector(48, 48, 96, 96);
  CHECK(a.h == 2.0);
  CHECK(a.w == 2.0);
  const auto b = scale_vector(48, 48, 48, 48);
  CHECK(b.h == 1.0);
  const auto c = scale_vector(50, 40, 75, 90);
  CHECK(c.h == 1.5);
  CHECK(c.w == 2.25);
  CHECK_THROWS_AS(scale_vector(0, 4, 4, 4), std::invalid_argument);
}

TEST_CASE("relative offset examples") {
  const auto g = make_coord_grid(10, 10);
  const Coord k = g.at(4, 4);
  const auto zero = rel_offset(k, k, g);
  CHECK(zero.dy == 0.0);
  CHECK(zero.dx == 0.0);
  const auto half = rel_offset({k.y, k.x + 0.1}, k, g);  // half a cell of width 2/10
  CHECK(half.dx == doctest::Approx(1.0));
  CHECK(half.dy == 0.0);
  const auto raw = rel_offset({k.y, k.x + 0.1}, k, g, false);
  CHECK(raw.dx == doctest::Approx(0.1));
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    const Coord a{rng.uniform(-1, 1), rng.uniform(-1, 1)}, b{rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const auto ab = rel_offset(a, b, g), ba = rel_offset(b, a, g);
    CHECK(ab.dy == -ba.dy);
    CHECK(ab.dx == -ba.dx);
  }
}

TEST_CASE("offsets to the local 2x2 neighbourhood stay within 2") {
  Rng rng(4);
  for (auto [h, w] : {std::pair{3, 3}, {8, 5}, {48, 48}}) {
    const auto g = make_coord_grid(h, w);
    for (int t = 0; t < 500; ++t) {
      const Coord q{rng.uniform(-1, 1), rng.uniform(-1, 1)};
      const auto nb = local_neighbors(q, g);
      for (const auto& c : nb.coords) {
        const auto r = rel_offset(q, c, g);
        CHECK(std::abs(r.dy) <= 2.0);
        CHECK(std::abs(r.dx) <= 2.0);
      }
    }
  }
}

TEST_CASE("local regions") {
  const auto g = make_coord_grid(4, 4);
  const Coord q = g.at(0, 3);
  CHECK(local_region(q, g, 1) == std::vector<GridIndex>{{0, 3}});
  CHECK(local_region(q, g, 2).size() == 4);
  const auto r3 = local_region(q, g, 3);
  CHECK(r3.size() == 9);
  CHECK(r3[0] == GridIndex{0, 2});  // clamped top row
  CHECK(r3[4] == GridIndex{0, 3});  // center is the nearest cell
  CHECK(r3[8] == GridIndex{1, 3});  // clamped right column
  CHECK(region_size(1) == 1);
  CHECK(region_size(2) == 4);
  CHECK(region_size(3) == 9);
  CHECK_THROWS_AS(local_region(q, g, 4), std::invalid_argument);
}
