#include "egoplan/world.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "egoplan/rng.hpp"

namespace egoplan {

int LaneGeometry::lane_of(double y) const {
  const double rel = (y - road_y_min) / lane_width;
  const int lane = static_cast<int>(std::floor(rel));
  return std::clamp(lane, 0, lane_count - 1);
}

void LaneGeometry::validate() const {
  if (lane_count < 1 || !(lane_width > 0.0)) {
    throw std::invalid_argument("lanes: need lane_count >= 1 and width > 0");
  }
  const double expected = lane_count * lane_width;
  if (std::abs((road_y_max - road_y_min) - expected) > 1e-9) {
    throw std::invalid_argument(
        "lanes: road_y_max - road_y_min must equal lane_count * lane_width");
  }
}

LaneGeometry make_lanes(int lane_count, double lane_width) {
  LaneGeometry lanes;
  lanes.lane_count = lane_count;
  lanes.lane_width = lane_width;
  lanes.road_y_min = -0.5 * lane_count * lane_width;
  lanes.road_y_max = lanes.road_y_min + lane_count * lane_width;
  lanes.validate();
  return lanes;
}

OrientedRect vehicle_rect(const SelfState& state, const VehicleDims& dims) {
  return {state.pos(), state.heading(), dims.length, dims.width};
}

int TrajectoryLog::last_frame() const {
  int last = -1;
  for (const auto& tr : tracks) {
    if (!tr.states.empty()) {
      last = std::max(last, tr.t0 + static_cast<int>(tr.states.size()) - 1);
    }
  }
  return last;
}

const VehicleTrack* TrajectoryLog::find(int id) const {
  for (const auto& tr : tracks) {
    if (tr.id == id) return &tr;
  }
  return nullptr;
}

Scene scene_at(const TrajectoryLog& log, int t, const LaneGeometry& lanes,
               const SelfState& ego, const VehicleDims& ego_dims) {
  Scene sc;
  sc.t = t;
  sc.ego = ego;
  sc.ego_dims = ego_dims;
  sc.lanes = lanes;
  for (const auto& tr : log.tracks) {
    if (tr.id == 0) continue;
    const int idx = t - tr.t0;
    if (idx < 0 || idx >= static_cast<int>(tr.states.size())) continue;
    sc.others.push_back({tr.id, tr.states[idx], tr.dims});
  }
  return sc;
}

Scene scene_at(const TrajectoryLog& log, int t, const LaneGeometry& lanes) {
  const VehicleTrack* ego = log.find(0);
  if (ego == nullptr) {
    throw std::invalid_argument("scene_at: log has no ego track (car id 0)");
  }
  const int idx = t - ego->t0;
  if (idx < 0 || idx >= static_cast<int>(ego->states.size())) {
    throw std::invalid_argument("scene_at: ego track does not cover frame " +
                                std::to_string(t));
  }
  return scene_at(log, t, lanes, ego->states[idx], ego->dims);
}

namespace {

void check_no_initial_overlap(const TrajectoryLog& log) {
  std::vector<std::pair<OrientedRect, int>> rects;
  for (const auto& tr : log.tracks) {
    if (tr.t0 == 0 && !tr.states.empty()) {
      rects.push_back({vehicle_rect(tr.states[0], tr.dims), tr.id});
    }
  }
  for (std::size_t i = 0; i < rects.size(); ++i) {
    for (std::size_t j = i + 1; j < rects.size(); ++j) {
      if (rects_intersect(rects[i].first, rects[j].first)) {
        throw std::invalid_argument(
            "infeasible geometry: cars " + std::to_string(rects[i].second) +
            " and " + std::to_string(rects[j].second) +
            " overlap at the initial frame");
      }
    }
  }
}

}  // namespace

TrajectoryLog make_stress_scenario(const StressConfig& cfg) {
  if (!(cfg.initial_speed > 0.0)) {
    throw std::invalid_argument("stress: initial_speed must be positive");
  }
  if (!(cfg.dt > 0.0) || !(cfg.duration > 0.0)) {
    throw std::invalid_argument("stress: dt and duration must be positive");
  }
  if (cfg.lead_decel > 0.0) {
    throw std::invalid_argument("stress: lead_decel must be <= 0");
  }
  const double min_lead = std::max(cfg.ego_dims.length, cfg.car_dims.length);
  if (!(cfg.lead_gap > min_lead) || !(cfg.rear_gap > min_lead)) {
    throw std::invalid_argument(
        "infeasible geometry: gaps must exceed the vehicle length");
  }

  const LaneGeometry lanes = make_lanes(cfg.lane_count, cfg.lane_width);
  const double lane_y = lanes.lane_center(cfg.lane_count / 2);
  const int frames = static_cast<int>(std::floor(cfg.duration / cfg.dt)) + 1;

  TrajectoryLog log;
  log.dt = cfg.dt;

  auto make_track = [&](int id, const VehicleDims& dims) {
    VehicleTrack tr;
    tr.id = id;
    tr.dims = dims;
    tr.t0 = 0;
    tr.states.reserve(frames);
    return tr;
  };

  VehicleTrack ego = make_track(0, cfg.ego_dims);
  VehicleTrack lead = make_track(1, cfg.car_dims);
  VehicleTrack rear = make_track(2, cfg.car_dims);

  // A small deterministic offset keeps the ego off the exact symmetry
  // line between the lead and rear masks; a perfectly centered start
  // leaves the escape direction to floating-point noise.
  const double ego_y = lane_y + cfg.lateral_offset;
  double ego_x = 0.0, lead_x = cfg.lead_gap, rear_x = -cfg.rear_gap;
  for (int k = 0; k < frames; ++k) {
    const double t = k * cfg.dt;
    const double lead_s =
        t < cfg.brake_onset
            ? cfg.initial_speed
            : std::max(0.0,
                       cfg.initial_speed + cfg.lead_decel * (t - cfg.brake_onset));
    ego.states.push_back({ego_x, ego_y, 1.0, 0.0, cfg.initial_speed});
    lead.states.push_back({lead_x, lane_y, 1.0, 0.0, lead_s});
    rear.states.push_back({rear_x, lane_y, 1.0, 0.0, cfg.initial_speed});
    ego_x += cfg.initial_speed * cfg.dt;
    lead_x += lead_s * cfg.dt;
    rear_x += cfg.initial_speed * cfg.dt;
  }

  log.tracks = {std::move(ego), std::move(lead), std::move(rear)};
  check_no_initial_overlap(log);
  return log;
}

TrajectoryLog make_traffic_scenario(std::uint64_t seed, double density,
                                    int lane_count, double duration) {
  if (!(density > 0.0) || density > 1.0) {
    throw std::invalid_argument("traffic: density must be in (0, 1]");
  }
  if (!(duration > 0.0)) {
    throw std::invalid_argument("traffic: duration must be positive");
  }
  if (lane_count < 1) {
    throw std::invalid_argument("traffic: lane_count must be >= 1");
  }

  constexpr double kDt = 0.1;
  constexpr double kSpan = 240.0;   // initial spread of spawn slots, m
  constexpr double kSlot = 15.0;    // spawn slot length, m
  constexpr double kJitter = 3.0;   // max |offset| inside a slot, m
  const VehicleDims dims{2.0, 4.8};
  const LaneGeometry lanes = make_lanes(lane_count, 3.7);

  const int slots_per_lane = static_cast<int>(kSpan / kSlot);
  const int capacity = slots_per_lane * lane_count;
  int n = static_cast<int>(std::llround(density * capacity));
  n = std::clamp(n, 1, capacity);

  Rng rng(seed);
  std::vector<double> lane_speed(lane_count);
  for (int i = 0; i < lane_count; ++i) lane_speed[i] = rng.uniform(18.0, 28.0);

  auto slot_x = [&](int slot) { return -kSpan / 2 + (slot + 0.5) * kSlot; };

  // Ego takes the center-most slot of the middle lane.
  const int ego_lane = lane_count / 2;
  const int ego_slot = slots_per_lane / 2;
  std::vector<char> taken(static_cast<std::size_t>(capacity), 0);
  auto slot_index = [&](int lane, int slot) { return lane * slots_per_lane + slot; };
  taken[slot_index(ego_lane, ego_slot)] = 1;

  struct Spawn {
    int lane = 0;
    double x0 = 0.0;
    double amp = 0.0, omega = 0.0, phase = 0.0;
  };
  std::vector<Spawn> spawns;
  for (int id = 1; id < n; ++id) {
    int lane = 0, slot = 0;
    do {
      lane = static_cast<int>(rng.below(static_cast<std::uint64_t>(lane_count)));
      slot = static_cast<int>(
          rng.below(static_cast<std::uint64_t>(slots_per_lane)));
    } while (taken[slot_index(lane, slot)]);
    taken[slot_index(lane, slot)] = 1;
    Spawn sp;
    sp.lane = lane;
    sp.x0 = slot_x(slot) + rng.uniform(-kJitter, kJitter);
    sp.amp = rng.uniform(0.0, 0.25);
    sp.omega = rng.uniform(0.2, 0.5);
    sp.phase = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
    spawns.push_back(sp);
  }

  const int frames = static_cast<int>(std::floor(duration / kDt)) + 1;
  TrajectoryLog log;
  log.dt = kDt;

  VehicleTrack ego;
  ego.id = 0;
  ego.dims = dims;
  ego.t0 = 0;
  for (int k = 0; k < frames; ++k) {
    const double x = slot_x(ego_slot) + lane_speed[ego_lane] * k * kDt;
    ego.states.push_back(
        {x, lanes.lane_center(ego_lane), 1.0, 0.0, lane_speed[ego_lane]});
  }
  log.tracks.push_back(std::move(ego));

  for (int i = 0; i < static_cast<int>(spawns.size()); ++i) {
    const Spawn& sp = spawns[i];
    VehicleTrack tr;
    tr.id = i + 1;
    tr.dims = dims;
    tr.t0 = 0;
    const double speed = lane_speed[sp.lane];
    for (int k = 0; k < frames; ++k) {
      const double t = k * kDt;
      const double y = lanes.lane_center(sp.lane) + sp.amp * std::sin(sp.omega * t + sp.phase);
      const double vy = sp.amp * sp.omega * std::cos(sp.omega * t + sp.phase);
      const double vn = std::sqrt(speed * speed + vy * vy);
      tr.states.push_back(
          {sp.x0 + speed * t, y, speed / vn, vy / vn, speed});
    }
    log.tracks.push_back(std::move(tr));
  }

  check_no_initial_overlap(log);
  return log;
}

namespace {

void append_double(std::string& out, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

double parse_double(std::string_view field, int line_no, const std::string& name) {
  double v = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc{} || res.ptr != last) {
    throw std::runtime_error(name + ":" + std::to_string(line_no) +
                             ": bad numeric field '" + std::string(field) + "'");
  }
  return v;
}

constexpr const char* kHeader = "t,car_id,x,y,ux,uy,s,w,l";

}  // namespace

void save_log(const TrajectoryLog& log, std::ostream& out) {
  std::string buf = "# dt=";
  append_double(buf, log.dt);
  buf += '\n';
  buf += kHeader;
  buf += '\n';

  const int last = log.last_frame();
  for (int t = 0; t <= last; ++t) {
    for (const auto& tr : log.tracks) {
      const int idx = t - tr.t0;
      if (idx < 0 || idx >= static_cast<int>(tr.states.size())) continue;
      const SelfState& st = tr.states[idx];
      buf += std::to_string(t);
      buf += ',';
      buf += std::to_string(tr.id);
      for (double v : {st.x, st.y, st.ux, st.uy, st.s, tr.dims.width,
                       tr.dims.length}) {
        buf += ',';
        append_double(buf, v);
      }
      buf += '\n';
    }
  }
  out << buf;
}

void save_log(const TrajectoryLog& log, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_log: cannot open " + path);
  save_log(log, f);
}

TrajectoryLog load_log(std::istream& in, const std::string& name) {
  TrajectoryLog log;
  bool have_dt = false;
  bool have_header = false;
  std::string line;
  int line_no = 0;
  std::map<int, std::size_t> track_of;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const std::string_view sv(line);
      const auto pos = sv.find("dt=");
      if (pos != std::string_view::npos) {
        log.dt = parse_double(sv.substr(pos + 3), line_no, name);
        if (!(log.dt > 0.0)) {
          throw std::runtime_error(name + ":" + std::to_string(line_no) +
                                   ": dt must be positive");
        }
        have_dt = true;
      }
      continue;
    }
    if (!have_header) {
      if (line != kHeader) {
        throw std::runtime_error(name + ":" + std::to_string(line_no) +
                                 ": expected header '" + kHeader + "'");
      }
      have_header = true;
      continue;
    }

    std::array<std::string_view, 9> fields;
    {
      std::string_view sv(line);
      std::size_t n = 0;
      while (n < 9) {
        const auto comma = sv.find(',');
        fields[n++] = sv.substr(0, comma);
        if (comma == std::string_view::npos) break;
        sv.remove_prefix(comma + 1);
      }
      if (n != 9 || fields[8].find(',') != std::string_view::npos) {
        throw std::runtime_error(name + ":" + std::to_string(line_no) +
                                 ": expected 9 comma-separated fields");
      }
    }

    const int t = static_cast<int>(parse_double(fields[0], line_no, name));
    const int id = static_cast<int>(parse_double(fields[1], line_no, name));
    SelfState st;
    st.x = parse_double(fields[2], line_no, name);
    st.y = parse_double(fields[3], line_no, name);
    st.ux = parse_double(fields[4], line_no, name);
    st.uy = parse_double(fields[5], line_no, name);
    st.s = parse_double(fields[6], line_no, name);
    VehicleDims dims;
    dims.width = parse_double(fields[7], line_no, name);
    dims.length = parse_double(fields[8], line_no, name);
    if (!(dims.width > 0.0) || !(dims.length > 0.0)) {
      throw std::runtime_error(name + ":" + std::to_string(line_no) +
                               ": vehicle dims must be positive");
    }

    const double n2 = st.ux * st.ux + st.uy * st.uy;
    if (n2 < 1e-24) {
      throw std::runtime_error(name + ":" + std::to_string(line_no) +
                               ": degenerate heading");
    }
    if (std::abs(n2 - 1.0) > 1e-9) {
      const double inv = 1.0 / std::sqrt(n2);
      st.ux *= inv;
      st.uy *= inv;
      log.normalized_on_load = true;
    }

    auto it = track_of.find(id);
    if (it == track_of.end()) {
      VehicleTrack tr;
      tr.id = id;
      tr.dims = dims;
      tr.t0 = t;
      tr.states.push_back(st);
      track_of[id] = log.tracks.size();
      log.tracks.push_back(std::move(tr));
    } else {
      VehicleTrack& tr = log.tracks[it->second];
      const int expected = tr.t0 + static_cast<int>(tr.states.size());
      if (t != expected) {
        throw std::runtime_error(
            name + ":" + std::to_string(line_no) + ": non-uniform time step for car " +
            std::to_string(id) + " (expected t=" + std::to_string(expected) +
            ", got t=" + std::to_string(t) + ")");
      }
      tr.states.push_back(st);
    }
  }

  if (!have_dt) {
    throw std::runtime_error(name + ": missing '# dt=' comment line");
  }
  if (!have_header || log.tracks.empty()) {
    throw std::runtime_error(name + ": no data rows");
  }
  return log;
}

TrajectoryLog load_log(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_log: cannot open " + path);
  return load_log(f, path);
}

}  // namespace egoplan
