#include "egoplan/raster.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace egoplan {

Vec2 mesh_coord(const RasterGeometry& geom, int i, int j) {
  return {(i + 0.5) * geom.cell_h() - geom.height_m / 2,
          (j + 0.5) * geom.cell_w() - geom.width_m / 2};
}

std::vector<Vec2> mesh_grid(const RasterGeometry& geom) {
  std::vector<Vec2> mesh;
  mesh.reserve(static_cast<std::size_t>(geom.height_cells) * geom.width_cells);
  for (int i = 0; i < geom.height_cells; ++i) {
    for (int j = 0; j < geom.width_cells; ++j) {
      mesh.push_back(mesh_coord(geom, i, j));
    }
  }
  return mesh;
}

RasterFrame rasterize(const Scene& scene, const RasterGeometry& geom) {
  RasterFrame frame;
  frame.lanes = Grid(geom.height_cells, geom.width_cells);
  frame.cars = Grid(geom.height_cells, geom.width_cells);
  frame.offroad = Grid(geom.height_cells, geom.width_cells);
  frame.anchor = scene.ego;
  frame.geom = geom;

  const Vec2 e = scene.ego.pos();
  const Vec2 u = scene.ego.heading();
  // Boundary cells are inclusive, so a demarcation through the exact cell
  // edge still lights both neighbors.
  const double half_line = geom.cell_w() / 2 + 1e-9;
  const int demarcations = scene.lanes.lane_count + 1;

  for (int i = 0; i < geom.height_cells; ++i) {
    for (int j = 0; j < geom.width_cells; ++j) {
      const Vec2 a = mesh_coord(geom, i, j);
      const Vec2 w = e + u * a.x + Vec2{-u.y, u.x} * a.y;

      if (w.y < scene.lanes.road_y_min || w.y > scene.lanes.road_y_max) {
        frame.offroad.at(i, j) = 1.0;
      }
      for (int k = 0; k < demarcations; ++k) {
        const double line_y = scene.lanes.road_y_min + k * scene.lanes.lane_width;
        if (std::abs(w.y - line_y) <= half_line) {
          frame.lanes.at(i, j) = 1.0;
          break;
        }
      }
      for (const OtherVehicle& car : scene.others) {
        const Vec2 b = to_body(w - car.state.pos(), car.state.heading());
        if (std::abs(b.x) <= car.dims.length / 2 &&
            std::abs(b.y) <= car.dims.width / 2) {
          frame.cars.at(i, j) = 1.0;
          break;
        }
      }
    }
  }
  return frame;
}

namespace {

// pow() dominates the per-cell cost; the common exponents have exact
// closed forms (glibc pow is correctly rounded, so these match it
// bit-for-bit).
inline double mask_pow(double base, double e) {
  if (e == 2.0) return base * base;
  if (e == 1.0) return base;
  return std::pow(base, e);
}

}  // namespace

MaskValue mask_profile(double b1, double b2, const VehicleDims& dims,
                       double d_x, double d_y, double exponent) {
  const double rx = std::max(0.0, (d_x - std::abs(b1)) / (d_x - dims.length / 2));
  const double ry = std::max(0.0, (d_y - std::abs(b2)) / (d_y - dims.width / 2));
  MaskValue v;
  v.side = mask_pow(rx * ry, exponent);
  v.car = mask_pow(rx * std::min(ry, 1.0), exponent);
  return v;
}

double mask_reach_x(const SelfState& rel, const VehicleDims& dims,
                    const MaskConfig& cfg) {
  return 1.5 * (std::max(cfg.speed_floor, rel.s) + dims.length) + 1.0;
}

namespace {

void check_mask_dims(const VehicleDims& dims, const MaskConfig& cfg,
                     double d_x, double d_y) {
  if (!(cfg.exponent > 0.0)) {
    throw std::invalid_argument("masks: exponent must be positive");
  }
  if (!(dims.width > 0.0) || !(dims.length > 0.0)) {
    throw std::invalid_argument("masks: vehicle dims must be positive");
  }
  if (dims.length / 2 >= d_x || dims.width / 2 >= d_y) {
    throw std::invalid_argument(
        "masks: invalid dims, safety box does not clear the car rectangle");
  }
}

}  // namespace

MaskPair build_masks(const SelfState& rel, const VehicleDims& dims,
                     const MaskConfig& cfg, const RasterGeometry& geom) {
  const double d_x = mask_reach_x(rel, dims, cfg);
  const double d_y = dims.width / 2 + cfg.lane_pad;
  check_mask_dims(dims, cfg, d_x, d_y);

  MaskPair masks;
  masks.car = Grid(geom.height_cells, geom.width_cells);
  masks.side = Grid(geom.height_cells, geom.width_cells);

  const Vec2 p = rel.pos();
  const Vec2 u = rel.heading();
  for (int i = 0; i < geom.height_cells; ++i) {
    for (int j = 0; j < geom.width_cells; ++j) {
      const Vec2 v = mesh_coord(geom, i, j) - p;
      const Vec2 b = to_body(v, u);
      const MaskValue m = mask_profile(b.x, b.y, dims, d_x, d_y, cfg.exponent);
      masks.car.at(i, j) = m.car;
      masks.side.at(i, j) = m.side;
    }
  }
  return masks;
}

SelfStateAdjoint build_masks_vjp(const SelfState& rel, const VehicleDims& dims,
                                 const MaskConfig& cfg,
                                 const RasterGeometry& geom,
                                 const Grid& cot_car, const Grid& cot_side) {
  const double d_x = mask_reach_x(rel, dims, cfg);
  const double d_y = dims.width / 2 + cfg.lane_pad;
  check_mask_dims(dims, cfg, d_x, d_y);

  const double r1 = d_x - dims.length / 2;
  const double r2 = d_y - dims.width / 2;
  const double alpha = cfg.exponent;
  const Vec2 p = rel.pos();
  const Vec2 u = rel.heading();

  SelfStateAdjoint g;
  double g_dx = 0.0;

  for (int i = 0; i < geom.height_cells; ++i) {
    for (int j = 0; j < geom.width_cells; ++j) {
      const double gc = cot_car.at(i, j);
      const double gs = cot_side.at(i, j);
      if (gc == 0.0 && gs == 0.0) continue;

      const Vec2 v = mesh_coord(geom, i, j) - p;
      const Vec2 b = to_body(v, u);
      const double q1 = d_x - std::abs(b.x);
      const double q2 = d_y - std::abs(b.y);
      if (q1 <= 0.0 || q2 <= 0.0) continue;  // clamped cell, zero gradient

      const double rx = q1 / r1;
      const double ry = q2 / r2;
      const double m = std::min(ry, 1.0);

      const double side_pow = mask_pow(rx * ry, alpha - 1.0);
      const double car_pow = mask_pow(rx * m, alpha - 1.0);
      // d(side)/d(rx), d(side)/d(ry), d(car)/d(rx), d(car)/d(ry)
      const double ds_drx = alpha * side_pow * ry;
      const double ds_dry = alpha * side_pow * rx;
      const double dc_drx = alpha * car_pow * m;
      const double dc_dry = ry < 1.0 ? alpha * car_pow * rx : 0.0;

      const double g_rx = gs * ds_drx + gc * dc_drx;
      const double g_ry = gs * ds_dry + gc * dc_dry;

      const double sign1 = b.x > 0.0 ? 1.0 : (b.x < 0.0 ? -1.0 : 0.0);
      const double sign2 = b.y > 0.0 ? 1.0 : (b.y < 0.0 ? -1.0 : 0.0);
      const double g_b1 = g_rx * (-sign1 / r1);
      const double g_b2 = g_ry * (-sign2 / r2);
      // rx = (d_x - |b1|)/(d_x - l/2) has d_x in both places.
      g_dx += g_rx * (r1 - q1) / (r1 * r1);

      g.x += g_b1 * -u.x + g_b2 * u.y;
      g.y += g_b1 * -u.y + g_b2 * -u.x;
      g.ux += g_b1 * v.x + g_b2 * v.y;
      g.uy += g_b1 * v.y + g_b2 * -v.x;
    }
  }

  if (rel.s > cfg.speed_floor) g.s += g_dx * 1.5;
  return g;
}

void write_ppm(const RasterFrame& frame, std::ostream& out) {
  const int h = frame.lanes.rows;
  const int w = frame.lanes.cols;
  out << "P6\n" << w << " " << h << "\n255\n";
  std::string bytes;
  bytes.reserve(static_cast<std::size_t>(h) * w * 3);
  auto to_byte = [](double v) {
    return static_cast<char>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
  };
  for (int i = h - 1; i >= 0; --i) {  // far ahead on top
    for (int j = 0; j < w; ++j) {
      bytes.push_back(to_byte(frame.lanes.at(i, j)));
      bytes.push_back(to_byte(frame.cars.at(i, j)));
      bytes.push_back(to_byte(frame.offroad.at(i, j)));
    }
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

void write_ppm(const RasterFrame& frame, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_ppm: cannot open " + path);
  write_ppm(frame, f);
}

}  // namespace egoplan
