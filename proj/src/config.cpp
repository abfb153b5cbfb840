#include "egoplan/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace egoplan {

using json = nlohmann::ordered_json;

namespace {

/// Strict object reader: every key must be consumed, unknown keys fail
/// with their full path.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(&j), path_(std::move(path)) {
    if (!j.is_object()) {
      throw ConfigError(path_ + ": expected an object");
    }
  }

  bool has(const char* key) const { return j_->contains(key); }

  template <typename T>
  void get(const char* key, T& out) {
    if (!j_->contains(key)) return;
    seen_.insert(key);
    const json& v = (*j_)[key];
    try {
      out = v.get<T>();
    } catch (const json::exception&) {
      throw ConfigError(path_ + "." + key + ": wrong type (got " +
                        std::string(v.type_name()) + ")");
    }
  }

  void get_enum(const char* key, std::string& out,
                const std::set<std::string>& allowed) {
    std::string v = out;
    get(key, v);
    if (!allowed.count(v)) {
      std::string opts;
      for (const auto& a : allowed) opts += (opts.empty() ? "" : "|") + a;
      throw ConfigError(path_ + "." + key + ": must be one of " + opts);
    }
    out = v;
  }

  Reader section(const char* key) {
    seen_.insert(key);
    return Reader((*j_)[key], path_ + "." + key);
  }

  void finish() const {
    for (auto it = j_->begin(); it != j_->end(); ++it) {
      if (!seen_.count(it.key())) {
        throw ConfigError(path_ + "." + it.key() + ": unknown key");
      }
    }
  }

 private:
  const json* j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_lanes(Reader& r, LaneGeometry& lanes) {
  r.get("lane_count", lanes.lane_count);
  r.get("lane_width", lanes.lane_width);
  r.get("road_y_min", lanes.road_y_min);
  if (r.has("road_y_max")) {
    r.get("road_y_max", lanes.road_y_max);
  } else {
    lanes.road_y_max = lanes.road_y_min + lanes.lane_count * lanes.lane_width;
  }
  r.finish();
}

}  // namespace

PredictorKind predictor_from_string(const std::string& s) {
  if (s == "replay") return PredictorKind::replay;
  if (s == "constant_velocity") return PredictorKind::constant_velocity;
  if (s == "coupled_reactive") return PredictorKind::coupled_reactive;
  throw ConfigError("unknown predictor kind '" + s + "'");
}

const char* predictor_name(PredictorKind k) {
  switch (k) {
    case PredictorKind::replay: return "replay";
    case PredictorKind::constant_velocity: return "constant_velocity";
    case PredictorKind::coupled_reactive: return "coupled_reactive";
  }
  return "unknown";
}

ControllerKind controller_from_string(const std::string& s) {
  if (s == "zero_action") return ControllerKind::zero_action;
  if (s == "mpc_decoupled") return ControllerKind::mpc_decoupled;
  if (s == "mpc_coupled") return ControllerKind::mpc_coupled;
  if (s == "policy") return ControllerKind::policy;
  throw ConfigError("unknown controller kind '" + s + "'");
}

void RunConfig::finalize() {
  if (!(dt > 0.0)) throw ConfigError("dt: must be positive");
  try {
    lanes.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("lanes: ") + e.what());
  }
  if (raster.height_cells < 1 || raster.width_cells < 1 ||
      !(raster.height_m > 0.0) || !(raster.width_m > 0.0)) {
    throw ConfigError("raster: cells and extents must be positive");
  }
  if (!(mask.exponent > 0.0)) throw ConfigError("mask.exponent: must be > 0");
  if (weights.proximity < 0 || weights.lane < 0 || weights.offroad < 0 ||
      weights.jerk < 0 || weights.destination < 0) {
    throw ConfigError("weights: must be nonnegative");
  }

  planner.dt = dt;
  planner.weights = weights;
  planner.mask = mask;
  planner.raster = raster;
  planner.reactive = reactive;
  try {
    planner.validate();
    reactive.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("planner: ") + e.what());
  }

  scenario.stress.dt = dt;
  scenario.stress.lane_count = lanes.lane_count;
  scenario.stress.lane_width = lanes.lane_width;
  scenario.stress.duration = scenario.duration;
  if (scenario.kind != "stress" && scenario.kind != "traffic") {
    throw ConfigError("scenario.kind: must be stress|traffic");
  }
  if (!(scenario.density > 0.0) || scenario.density > 1.0) {
    throw ConfigError("scenario.density: must be in (0, 1]");
  }
  if (!(scenario.duration > 0.0)) {
    throw ConfigError("scenario.duration: must be positive");
  }

  if (episode.max_steps < 1) throw ConfigError("episode.max_steps: must be >= 1");
  if (episode.episodes < 1) throw ConfigError("episode.episodes: must be >= 1");
  if (episode.n_seeds < 1) throw ConfigError("episode.n_seeds: must be >= 1");
  if (episode.mode != "replay" && episode.mode != "interactive") {
    throw ConfigError("episode.mode: must be replay|interactive");
  }
  controller_from_string(episode.controller);
  if (episode.mode == "interactive" &&
      planner.predictor == PredictorKind::replay &&
      (episode.controller == "mpc_decoupled" ||
       episode.controller == "mpc_coupled")) {
    throw ConfigError("planner.predictor: replay needs episode.mode=replay");
  }

  if (train.epochs < 1) throw ConfigError("train.epochs: must be >= 1");
  if (train.scene_count < 1) throw ConfigError("train.scene_count: must be >= 1");
  if (train.horizon < 1) throw ConfigError("train.horizon: must be >= 1");
  if (!(train.learning_rate >= 0.0)) {
    throw ConfigError("train.learning_rate: must be >= 0");
  }

  if (variance.probe_count < 1) {
    throw ConfigError("variance.probe_count: must be >= 1");
  }
  if (variance.n_seeds < 2) throw ConfigError("variance.n_seeds: must be >= 2");
  if (!(variance.clamp > 0.0)) throw ConfigError("variance.clamp: must be > 0");

  if (bench.steps < 1 || bench.warmup < 1) {
    throw ConfigError("bench: steps and warmup must be >= 1");
  }
  for (const auto& m : bench.methods) {
    controller_from_string(m);  // throws on unknown names
  }
  if (gradcheck.samples < 1) {
    throw ConfigError("gradcheck.samples: must be >= 1");
  }
}

RunConfig parse_config(const std::string& text, const std::string& name) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(name + ": " + e.what());
  }

  RunConfig cfg;
  Reader root(j, name);
  root.get("seed", cfg.seed);
  root.get("dt", cfg.dt);

  if (root.has("lanes")) {
    Reader r = root.section("lanes");
    read_lanes(r, cfg.lanes);
  }
  if (root.has("raster")) {
    Reader r = root.section("raster");
    r.get("height_cells", cfg.raster.height_cells);
    r.get("width_cells", cfg.raster.width_cells);
    r.get("height_m", cfg.raster.height_m);
    r.get("width_m", cfg.raster.width_m);
    r.finish();
  }
  if (root.has("mask")) {
    Reader r = root.section("mask");
    r.get("exponent", cfg.mask.exponent);
    r.get("lane_pad", cfg.mask.lane_pad);
    r.get("speed_floor", cfg.mask.speed_floor);
    r.finish();
  }
  if (root.has("weights")) {
    Reader r = root.section("weights");
    r.get("proximity", cfg.weights.proximity);
    r.get("lane", cfg.weights.lane);
    r.get("offroad", cfg.weights.offroad);
    r.get("jerk", cfg.weights.jerk);
    r.get("destination", cfg.weights.destination);
    r.finish();
  }
  if (root.has("planner")) {
    Reader r = root.section("planner");
    r.get("horizon", cfg.planner.horizon);
    r.get("iterations", cfg.planner.iterations);
    r.get("learning_rate", cfg.planner.learning_rate);
    r.get("discount", cfg.planner.discount);
    std::string predictor = predictor_name(cfg.planner.predictor);
    r.get_enum("predictor", predictor,
               {"replay", "constant_velocity", "coupled_reactive"});
    cfg.planner.predictor = predictor_from_string(predictor);
    r.get("accel_min", cfg.planner.bounds.accel_min);
    r.get("accel_max", cfg.planner.bounds.accel_max);
    r.get("turn_min", cfg.planner.bounds.turn_min);
    r.get("turn_max", cfg.planner.bounds.turn_max);
    r.finish();
  }
  if (root.has("reactive")) {
    Reader r = root.section("reactive");
    r.get("gain", cfg.reactive.gain);
    r.get("scale", cfg.reactive.scale);
    r.get("brake_cap", cfg.reactive.brake_cap);
    r.finish();
  }
  if (root.has("scenario")) {
    Reader r = root.section("scenario");
    r.get_enum("kind", cfg.scenario.kind, {"stress", "traffic"});
    r.get("density", cfg.scenario.density);
    r.get("duration", cfg.scenario.duration);
    if (r.has("stress")) {
      Reader s = r.section("stress");
      s.get("lead_gap", cfg.scenario.stress.lead_gap);
      s.get("lead_decel", cfg.scenario.stress.lead_decel);
      s.get("rear_gap", cfg.scenario.stress.rear_gap);
      s.get("initial_speed", cfg.scenario.stress.initial_speed);
      s.get("brake_onset", cfg.scenario.stress.brake_onset);
      s.get("lateral_offset", cfg.scenario.stress.lateral_offset);
      s.finish();
    }
    r.finish();
  }
  if (root.has("episode")) {
    Reader r = root.section("episode");
    r.get_enum("mode", cfg.episode.mode, {"replay", "interactive"});
    r.get_enum("controller", cfg.episode.controller,
               {"zero_action", "mpc_decoupled", "mpc_coupled", "policy"});
    r.get("policy_file", cfg.episode.policy_file);
    r.get("max_steps", cfg.episode.max_steps);
    r.get("episodes", cfg.episode.episodes);
    r.get("n_seeds", cfg.episode.n_seeds);
    r.finish();
  }
  if (root.has("train")) {
    Reader r = root.section("train");
    r.get("epochs", cfg.train.epochs);
    r.get("learning_rate", cfg.train.learning_rate);
    r.get("scene_count", cfg.train.scene_count);
    r.get("horizon", cfg.train.horizon);
    r.finish();
  }
  if (root.has("variance")) {
    Reader r = root.section("variance");
    r.get("probe_count", cfg.variance.probe_count);
    r.get("n_seeds", cfg.variance.n_seeds);
    r.get("clamp", cfg.variance.clamp);
    r.finish();
  }
  if (root.has("bench")) {
    Reader r = root.section("bench");
    r.get("steps", cfg.bench.steps);
    r.get("warmup", cfg.bench.warmup);
    r.get("methods", cfg.bench.methods);
    r.finish();
  }
  if (root.has("gradcheck")) {
    Reader r = root.section("gradcheck");
    r.get("samples", cfg.gradcheck.samples);
    r.finish();
  }
  root.finish();

  cfg.finalize();
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open config file " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str(), path);
}

std::string config_to_json(const RunConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["dt"] = cfg.dt;
  j["lanes"] = {{"lane_count", cfg.lanes.lane_count},
                {"lane_width", cfg.lanes.lane_width},
                {"road_y_min", cfg.lanes.road_y_min},
                {"road_y_max", cfg.lanes.road_y_max}};
  j["raster"] = {{"height_cells", cfg.raster.height_cells},
                 {"width_cells", cfg.raster.width_cells},
                 {"height_m", cfg.raster.height_m},
                 {"width_m", cfg.raster.width_m}};
  j["mask"] = {{"exponent", cfg.mask.exponent},
               {"lane_pad", cfg.mask.lane_pad},
               {"speed_floor", cfg.mask.speed_floor}};
  j["weights"] = {{"proximity", cfg.weights.proximity},
                  {"lane", cfg.weights.lane},
                  {"offroad", cfg.weights.offroad},
                  {"jerk", cfg.weights.jerk},
                  {"destination", cfg.weights.destination}};
  j["planner"] = {{"horizon", cfg.planner.horizon},
                  {"iterations", cfg.planner.iterations},
                  {"learning_rate", cfg.planner.learning_rate},
                  {"discount", cfg.planner.discount},
                  {"predictor", predictor_name(cfg.planner.predictor)},
                  {"accel_min", cfg.planner.bounds.accel_min},
                  {"accel_max", cfg.planner.bounds.accel_max},
                  {"turn_min", cfg.planner.bounds.turn_min},
                  {"turn_max", cfg.planner.bounds.turn_max}};
  j["reactive"] = {{"gain", cfg.reactive.gain},
                   {"scale", cfg.reactive.scale},
                   {"brake_cap", cfg.reactive.brake_cap}};
  j["scenario"] = {{"kind", cfg.scenario.kind},
                   {"density", cfg.scenario.density},
                   {"duration", cfg.scenario.duration},
                   {"stress",
                    {{"lead_gap", cfg.scenario.stress.lead_gap},
                     {"lead_decel", cfg.scenario.stress.lead_decel},
                     {"rear_gap", cfg.scenario.stress.rear_gap},
                     {"initial_speed", cfg.scenario.stress.initial_speed},
                     {"brake_onset", cfg.scenario.stress.brake_onset},
                     {"lateral_offset", cfg.scenario.stress.lateral_offset}}}};
  j["episode"] = {{"mode", cfg.episode.mode},
                  {"controller", cfg.episode.controller},
                  {"policy_file", cfg.episode.policy_file},
                  {"max_steps", cfg.episode.max_steps},
                  {"episodes", cfg.episode.episodes},
                  {"n_seeds", cfg.episode.n_seeds}};
  j["train"] = {{"epochs", cfg.train.epochs},
                {"learning_rate", cfg.train.learning_rate},
                {"scene_count", cfg.train.scene_count},
                {"horizon", cfg.train.horizon}};
  j["variance"] = {{"probe_count", cfg.variance.probe_count},
                   {"n_seeds", cfg.variance.n_seeds},
                   {"clamp", cfg.variance.clamp}};
  j["bench"] = {{"steps", cfg.bench.steps},
                {"warmup", cfg.bench.warmup},
                {"methods", cfg.bench.methods}};
  j["gradcheck"] = {{"samples", cfg.gradcheck.samples}};
  return j.dump(2) + "\n";
}

void save_config(const RunConfig& cfg, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write config file " + path);
  f << config_to_json(cfg);
}

EpisodeConfig episode_config(const RunConfig& cfg) {
  EpisodeConfig e;
  e.mode = cfg.episode.mode == "replay" ? SimMode::replay
                                        : SimMode::interactive;
  e.controller = controller_from_string(cfg.episode.controller);
  e.max_steps = cfg.episode.max_steps;
  e.lanes = cfg.lanes;
  e.planner = cfg.planner;
  e.keeper = cfg.reactive;
  return e;
}

PolicyParams load_policy(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open policy file " + path);
  json j;
  try {
    j = json::parse(f);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  PolicyParams p;
  try {
    const auto w = j.at("weights").get<std::vector<double>>();
    const auto b = j.at("bias").get<std::vector<double>>();
    if (w.size() != p.weights.size() || b.size() != p.bias.size()) {
      throw ConfigError(path + ": expected " + std::to_string(p.weights.size()) +
                        " weights and " + std::to_string(p.bias.size()) +
                        " bias values");
    }
    std::copy(w.begin(), w.end(), p.weights.begin());
    std::copy(b.begin(), b.end(), p.bias.begin());
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return p;
}

void save_policy(const PolicyParams& params, const std::string& path) {
  json j;
  j["weights"] = std::vector<double>(params.weights.begin(), params.weights.end());
  j["bias"] = std::vector<double>(params.bias.begin(), params.bias.end());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write policy file " + path);
  f << j.dump(2) << "\n";
}

}  // namespace egoplan
