#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "egoplan/kinematics.hpp"

namespace egoplan {

struct VehicleDims {
  double width = 2.0;
  double length = 4.8;
};

struct OtherVehicle {
  int id = 0;
  SelfState state;
  VehicleDims dims;
};

/// Straight multi-lane road along +x. road_y_max - road_y_min must equal
/// lane_count * lane_width.
struct LaneGeometry {
  int lane_count = 3;
  double lane_width = 3.7;
  double road_y_min = -5.55;
  double road_y_max = 5.55;

  double lane_center(int lane) const {
    return road_y_min + (lane + 0.5) * lane_width;
  }
  /// Lane index containing lateral position y, clamped to the road.
  int lane_of(double y) const;
  void validate() const;
};

LaneGeometry make_lanes(int lane_count, double lane_width);

/// Ground-truth world snapshot at one time index.
struct Scene {
  int t = 0;
  SelfState ego;
  VehicleDims ego_dims;
  std::vector<OtherVehicle> others;
  LaneGeometry lanes;
};

OrientedRect vehicle_rect(const SelfState& state, const VehicleDims& dims);

/// Recorded states of one vehicle over consecutive time indices
/// t0, t0+1, ...
struct VehicleTrack {
  int id = 0;
  VehicleDims dims;
  int t0 = 0;
  std::vector<SelfState> states;
};

/// Time-indexed trajectories for every car in an episode. Car id 0 is the
/// ego by convention; its recorded rows beyond the first frame are only
/// used by replay visualization, never by controllers.
struct TrajectoryLog {
  double dt = 0.1;
  std::vector<VehicleTrack> tracks;
  // Set when load_log had to re-normalize a heading column.
  bool normalized_on_load = false;

  int last_frame() const;
  const VehicleTrack* find(int id) const;
};

/// Builds the scene at frame t from the log (others only; the ego state
/// is supplied by the caller, e.g. the simulator's controlled state).
Scene scene_at(const TrajectoryLog& log, int t, const LaneGeometry& lanes,
               const SelfState& ego, const VehicleDims& ego_dims);

/// Scene at frame t with the ego taken from its own recorded track.
Scene scene_at(const TrajectoryLog& log, int t, const LaneGeometry& lanes);

struct StressConfig {
  double lead_gap = 30.0;        // m, center-to-center
  double lead_decel = -6.0;      // m/s^2, <= 0
  double rear_gap = 30.0;        // m, center-to-center
  double initial_speed = 20.0;   // m/s
  double brake_onset = 1.0;      // s
  double lateral_offset = 0.4;   // m, ego offset from the lane center
  double duration = 15.0;        // s
  double dt = 0.1;
  int lane_count = 3;
  double lane_width = 3.7;
  VehicleDims ego_dims{};
  VehicleDims car_dims{};
};

/// Ego cruising between a lead and a rear car in the middle lane; the lead
/// brakes at brake_onset with lead_decel until stopped, the rear car holds
/// speed. The lead's speed at frame time t >= onset is exactly
/// max(0, s0 + decel*(t - onset)).
TrajectoryLog make_stress_scenario(const StressConfig& cfg);

/// Deterministic multi-lane traffic: per-lane constant speeds, small
/// sinusoidal lane-keeping noise, rejection-sampled spawn slots so no two
/// cars ever overlap. density in (0, 1] scales the car count; at least
/// one car (the ego) is always present.
TrajectoryLog make_traffic_scenario(std::uint64_t seed, double density,
                                    int lane_count, double duration);

/// CSV schema: leading comment "# dt=<dt>", header t,car_id,x,y,ux,uy,s,w,l,
/// one row per car per frame. Doubles are printed round-trip exact.
void save_log(const TrajectoryLog& log, std::ostream& out);
void save_log(const TrajectoryLog& log, const std::string& path);
TrajectoryLog load_log(std::istream& in, const std::string& name = "<stream>");
TrajectoryLog load_log(const std::string& path);

}  // namespace egoplan
