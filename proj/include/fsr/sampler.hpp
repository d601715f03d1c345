#pragma once

#include <array>
#include <vector>

#include "fsr/encoder.hpp"

namespace fsr {

struct Point {
  double x = 0.0, y = 0.0;
};

/// Cell centers of a (ty, tx) grid over `box`, row-major (y outer, x inner).
std::vector<Point> query_grid(std::size_t ty, std::size_t tx, const Box& box = {});

/// Regular grid of cell centers a feature map is defined on.
struct GridGeometry {
  std::size_t ny = 0, nx = 0;
  Box box;
  double dx() const { return box.width() / double(nx); }
  double dy() const { return box.height() / double(ny); }
};

/// The four grid centers bracketing a query. Neighbor i = 2 * iy + ix is (row y0 + iy,
/// column x0 + ix) before clamping; offsets are measured from those unclamped centers in
/// cell-size units, so they stay consistent across the border.
struct Neighborhood {
  std::array<std::uint32_t, 4> index{};  // flat row-major cell index, clamped into the grid
  std::array<double, 4> weight{};        // diagonal-counterpart area / (dx dy)
  std::array<Point, 4> offset{};         // (x* - x_i, y* - y_i) / (dx, dy)
  bool clamped = false;                  // query was outside the box and moved onto it
};

/// Neighborhood from continuous grid coordinates u = x / dx - 0.5 (column) and v (row).
Neighborhood neighborhood_at(const GridGeometry& grid, double u, double v, bool clamped = false);

/// Neighborhood of an absolute query point; points outside the box are clamped onto it.
Neighborhood neighborhood(const GridGeometry& grid, const Point& query);

/// Precomputed gather plan: per query 4 indices and weights plus 10 constant channels
/// (8 offsets, then the query-cell / feature-cell size ratios along x and y).
struct RenderPlan {
  std::size_t queries = 0;
  std::vector<std::uint32_t> index;
  std::vector<double> weight;
  Tensor<double> extras;  // (queries, 10)
};

inline constexpr std::size_t kEnsembleExtras = 10;

/// Plan for arbitrary points. `query_cell` is the (dx, dy) of the grid the queries come from.
RenderPlan plan_points(const GridGeometry& grid, const std::vector<Point>& queries, Point query_cell);

/// Plan for the (ty, tx) cell-center grid over the same box, computed from integer grid
/// positions only, so it does not depend on the box at all.
RenderPlan plan_grid(const GridGeometry& grid, std::size_t ty, std::size_t tx);

/// Ensembled features z~ as a (queries, 4 d_z + 10) matrix: the four area-weighted neighbor
/// features, then the plan's constant channels. Differentiable in the feature map.
template <typename T>
Var<T> render(const FeatureMap<T>& map, const RenderPlan& plan);

template <typename T>
GridGeometry geometry(const FeatureMap<T>& map) {
  return {map.ny(), map.nx(), map.box};
}

}  // namespace fsr
