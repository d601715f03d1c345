#include "fsr/sampler.hpp"

#include <algorithm>
#include <cmath>

#include "fsr/layers.hpp"

namespace fsr {

namespace {

std::uint32_t clamp_index(long i, std::size_t n) { return std::uint32_t(std::clamp(i, 0L, long(n) - 1)); }

void append(RenderPlan& plan, const Neighborhood& nb, double cell_x, double cell_y) {
  const std::size_t q = plan.queries++;
  for (std::size_t i = 0; i < 4; ++i) {
    plan.index.push_back(nb.index[i]);
    plan.weight.push_back(nb.weight[i]);
  }
  double* row = plan.extras.ptr() + q * kEnsembleExtras;
  for (std::size_t i = 0; i < 4; ++i) {
    row[2 * i] = nb.offset[i].x;
    row[2 * i + 1] = nb.offset[i].y;
  }
  row[8] = cell_x;
  row[9] = cell_y;
}

void check_grid(const GridGeometry& grid) {
  if (grid.ny == 0 || grid.nx == 0) throw Error("render: empty feature map");
}

}  // namespace

std::vector<Point> query_grid(std::size_t ty, std::size_t tx, const Box& box) {
  if (ty == 0 || tx == 0) throw Error("query_grid: extents must be positive");
  std::vector<Point> out;
  out.reserve(ty * tx);
  const double dx = box.width() / double(tx), dy = box.height() / double(ty);
  for (std::size_t y = 0; y < ty; ++y)
    for (std::size_t x = 0; x < tx; ++x) out.push_back({box.x_min + (double(x) + 0.5) * dx, box.y_min + (double(y) + 0.5) * dy});
  return out;
}

Neighborhood neighborhood_at(const GridGeometry& grid, double u, double v, bool clamped) {
  check_grid(grid);
  Neighborhood nb;
  nb.clamped = clamped;
  const double fx = std::floor(u), fy = std::floor(v);
  const double tx = u - fx, ty = v - fy;
  const long x0 = long(fx), y0 = long(fy);
  for (std::size_t iy = 0; iy < 2; ++iy)
    for (std::size_t ix = 0; ix < 2; ++ix) {
      const std::size_t i = 2 * iy + ix;
      nb.index[i] = clamp_index(y0 + long(iy), grid.ny) * std::uint32_t(grid.nx) + clamp_index(x0 + long(ix), grid.nx);
      // Area of the rectangle spanned by the query and the diagonally opposite center.
      nb.weight[i] = (ix ? tx : 1.0 - tx) * (iy ? ty : 1.0 - ty);
      nb.offset[i] = {tx - double(ix), ty - double(iy)};
    }
  return nb;
}

Neighborhood neighborhood(const GridGeometry& grid, const Point& query) {
  const Box& b = grid.box;
  const double x = std::clamp(query.x, b.x_min, b.x_max), y = std::clamp(query.y, b.y_min, b.y_max);
  const bool clamped = x != query.x || y != query.y;
  return neighborhood_at(grid, (x - b.x_min) / grid.dx() - 0.5, (y - b.y_min) / grid.dy() - 0.5, clamped);
}

RenderPlan plan_points(const GridGeometry& grid, const std::vector<Point>& queries, Point query_cell) {
  check_grid(grid);
  if (queries.empty()) throw Error("render: no queries");
  RenderPlan plan;
  plan.extras = Tensor<double>(Shape{queries.size(), kEnsembleExtras});
  const double cx = query_cell.x / grid.dx(), cy = query_cell.y / grid.dy();
  for (const Point& q : queries) append(plan, neighborhood(grid, q), cx, cy);
  return plan;
}

RenderPlan plan_grid(const GridGeometry& grid, std::size_t ty, std::size_t tx) {
  check_grid(grid);
  if (ty == 0 || tx == 0) throw Error("render: no queries");
  RenderPlan plan;
  plan.extras = Tensor<double>(Shape{ty * tx, kEnsembleExtras});
  const double sx = double(grid.nx) / double(tx), sy = double(grid.ny) / double(ty);
  for (std::size_t y = 0; y < ty; ++y) {
    const double v = (double(y) + 0.5) * sy - 0.5;
    for (std::size_t x = 0; x < tx; ++x) append(plan, neighborhood_at(grid, (double(x) + 0.5) * sx - 0.5, v), sx, sy);
  }
  return plan;
}

template <typename T>
Var<T> render(const FeatureMap<T>& map, const RenderPlan& plan) {
  const std::vector<T> weights(plan.weight.begin(), plan.weight.end());
  const Var<T> features = gather_weighted(field_to_tokens(map.z), plan.index, weights, 4);
  const Var<T> extras = map.z.tape().constant(plan.extras.template cast<T>());
  return concat<T>({features, extras}, 1);
}

template Var<float> render<float>(const FeatureMap<float>&, const RenderPlan&);
template Var<double> render<double>(const FeatureMap<double>&, const RenderPlan&);

}  // namespace fsr
