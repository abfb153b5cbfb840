#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "egoplan/kinematics.hpp"
#include "egoplan/world.hpp"

namespace egoplan {

/// Cell grid covering height_m x width_m meters around the frame center.
/// Rows (i) run along the frame's longitudinal axis, columns (j) along the
/// lateral axis.
struct RasterGeometry {
  int height_cells = 117;
  int width_cells = 24;
  double height_m = 72.2;
  double width_m = 14.8;

  double cell_h() const { return height_m / height_cells; }
  double cell_w() const { return width_m / width_cells; }
};

struct Grid {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Grid() = default;
  Grid(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

  double& at(int i, int j) { return data[static_cast<std::size_t>(i) * cols + j]; }
  double at(int i, int j) const { return data[static_cast<std::size_t>(i) * cols + j]; }
};

/// Three-channel occupancy image around the ego vehicle, plus the ego pose
/// the frame was anchored at. Values are in [0, 1].
struct RasterFrame {
  Grid lanes;
  Grid cars;
  Grid offroad;
  SelfState anchor;
  RasterGeometry geom;
};

/// Center coordinates of cell (i, j) relative to the frame center, meters.
/// Longitudinal = first component.
Vec2 mesh_coord(const RasterGeometry& geom, int i, int j);

/// Full mesh, row-major (i * width_cells + j).
std::vector<Vec2> mesh_grid(const RasterGeometry& geom);

/// Renders the scene into a frame anchored at the ego pose: translated so
/// the ego center maps to the frame center and rotated so the ego heading
/// maps to the longitudinal axis. Other cars are filled rectangles (a cell
/// is set when its center lies inside), lane demarcations are 1-cell-wide
/// lines, and everything beyond the road edges fills the offroad channel.
/// The ego vehicle itself is not drawn.
RasterFrame rasterize(const Scene& scene, const RasterGeometry& geom);

struct MaskConfig {
  double exponent = 2.0;    // mask nonlinearity, > 0
  double lane_pad = 3.7;    // lateral safety pad, m (one lane width)
  double speed_floor = 10.0; // m/s floor inside the longitudinal reach
};

/// Proximity masks around a predicted ego pose, nonzero only inside the
/// safety box |B1| < d_x, |B2| < d_y with
///   d_x = 1.5 * (max(speed_floor, s) + length) + 1
///   d_y = width / 2 + lane_pad
struct MaskPair {
  Grid car;
  Grid side;
};

struct MaskValue {
  double car = 0.0;
  double side = 0.0;
};

/// Mask profile at body-frame offsets (b1 longitudinal, b2 lateral):
///   side = [ ((d_x-|b1|)/(d_x-l/2))^+ * ((d_y-|b2|)/(d_y-w/2))^+ ]^alpha
///   car  = the same with the lateral ratio clamped to <= 1 (flat nose)
MaskValue mask_profile(double b1, double b2, const VehicleDims& dims,
                       double d_x, double d_y, double exponent);

double mask_reach_x(const SelfState& rel, const VehicleDims& dims,
                    const MaskConfig& cfg);

/// Build both masks for a predicted ego state expressed in frame-anchor
/// coordinates. Throws std::invalid_argument when l/2 >= d_x or
/// w/2 >= d_y.
MaskPair build_masks(const SelfState& rel, const VehicleDims& dims,
                     const MaskConfig& cfg, const RasterGeometry& geom);

/// Reverse-mode derivative of build_masks: cotangent grids for both masks
/// in, cotangent of (x, y, ux, uy, s) out. Clamped cells contribute zero;
/// at clamp boundaries the subgradient 0 is used.
SelfStateAdjoint build_masks_vjp(const SelfState& rel, const VehicleDims& dims,
                                 const MaskConfig& cfg,
                                 const RasterGeometry& geom,
                                 const Grid& cot_car, const Grid& cot_side);

/// Binary PPM (P6) export, R=lanes, G=cars, B=offroad scaled to 0-255.
/// Image rows run from far ahead (top) to behind.
void write_ppm(const RasterFrame& frame, std::ostream& out);
void write_ppm(const RasterFrame& frame, const std::string& path);

}  // namespace egoplan
