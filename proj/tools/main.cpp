// egoplan: gradient-based highway MPC toolkit.
//
// Subcommands: gradcheck, plan, simulate, stress, bench, variance,
// scenario. Every run writes its fully-resolved config next to its
// outputs so a run directory is reproducible on its own. Timing numbers
// go to a separate timing.json; all other reports are byte-deterministic
// for a fixed config and seed.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "egoplan/config.hpp"
#include "egoplan/gradcheck.hpp"
#include "egoplan/rng.hpp"
#include "egoplan/sim.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using njson = nlohmann::ordered_json;
using namespace egoplan;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitSuite = 3;

struct GlobalArgs {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out_dir = "runs";
  int workers = 1;
  bool frames = false;
};

RunConfig make_config(const GlobalArgs& args) {
  RunConfig cfg;
  if (!args.config_path.empty()) {
    cfg = load_config(args.config_path);
  } else {
    cfg.finalize();
  }
  if (args.seed_set) {
    cfg.seed = args.seed;
    cfg.finalize();
  }
  return cfg;
}

fs::path make_run_dir(const GlobalArgs& args, const RunConfig& cfg,
                      const std::string& command) {
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y%m%d-%H%M%S", &tm);
  fs::path dir = fs::path(args.out_dir) /
                 (std::string(stamp) + "-" + command + "-seed" +
                  std::to_string(cfg.seed));
  // Keep distinct runs within one second apart.
  fs::path unique = dir;
  for (int i = 1; fs::exists(unique); ++i) {
    unique = dir;
    unique += "-" + std::to_string(i);
  }
  fs::create_directories(unique);
  return unique;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

TrajectoryLog scenario_log(const RunConfig& cfg, std::uint64_t stream) {
  if (cfg.scenario.kind == "stress") {
    return make_stress_scenario(cfg.scenario.stress);
  }
  return make_traffic_scenario(mix_seed(cfg.seed, stream), cfg.scenario.density,
                               cfg.lanes.lane_count, cfg.scenario.duration);
}

void dump_frames(const TrajectoryLog& trace, const RunConfig& cfg,
                 const fs::path& dir) {
  fs::create_directories(dir);
  const int last = trace.last_frame();
  for (int t = 0; t <= last; ++t) {
    const Scene sc = scene_at(trace, t, cfg.lanes);
    const RasterFrame frame = rasterize(sc, cfg.raster);
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%05d.ppm", t);
    write_ppm(frame, (dir / name).string());
  }
}

njson episode_json(const EpisodeResult& res) {
  njson j;
  j["outcome"] = outcome_name(res.outcome);
  j["steps_survived"] = res.steps_survived;
  double total = 0.0, proximity = 0.0;
  for (const StepCost& c : res.step_costs) {
    total += c.total;
    proximity += c.proximity;
  }
  j["cost_total_sum"] = total;
  j["cost_proximity_sum"] = proximity;
  return j;
}

std::string costs_csv(const EpisodeResult& res) {
  std::string csv = "step,proximity,lane,offroad,jerk,destination,total\n";
  for (std::size_t k = 0; k < res.step_costs.size(); ++k) {
    const StepCost& c = res.step_costs[k];
    csv += std::to_string(k + 1);
    for (double v : {c.proximity, c.lane, c.offroad, c.jerk, c.destination,
                     c.total}) {
      char buf[40];
      std::snprintf(buf, sizeof(buf), ",%.17g", v);
      csv += buf;
    }
    csv += '\n';
  }
  return csv;
}

// Trains n_seeds policies on generated traffic scenes; deterministic.
std::vector<PolicyParams> train_seed_policies(const RunConfig& cfg, int count) {
  std::vector<Scene> scenes;
  for (int i = 0; i < cfg.train.scene_count; ++i) {
    const TrajectoryLog log = make_traffic_scenario(
        mix_seed(cfg.seed, 500 + i), cfg.scenario.density,
        cfg.lanes.lane_count, 1.0);
    scenes.push_back(scene_at(log, 0, cfg.lanes));
  }
  TrainConfig tcfg;
  tcfg.horizon = cfg.train.horizon;
  tcfg.dt = cfg.dt;
  tcfg.discount = cfg.planner.discount;
  tcfg.learning_rate = cfg.train.learning_rate;
  tcfg.weights = cfg.weights;
  tcfg.mask = cfg.mask;
  tcfg.raster = cfg.raster;
  tcfg.bounds = cfg.planner.bounds;

  std::vector<PolicyParams> policies;
  for (int s = 0; s < count; ++s) {
    const TrainResult r = train_policy(scenes, PolicyParams{}, tcfg,
                                       cfg.train.epochs, mix_seed(cfg.seed, s));
    policies.push_back(r.params);
  }
  return policies;
}

PolicyParams episode_policy(const RunConfig& cfg) {
  if (!cfg.episode.policy_file.empty()) {
    return load_policy(cfg.episode.policy_file);
  }
  return train_seed_policies(cfg, 1).front();
}

int cmd_gradcheck(const GlobalArgs& args, const std::string& inject) {
  const RunConfig cfg = make_config(args);
  GradcheckOptions opt;
  opt.samples = cfg.gradcheck.samples;
  opt.seed = cfg.seed;
  opt.inject_sign_flip = inject;
  const auto results = run_gradcheck(cfg, opt);

  const fs::path dir = make_run_dir(args, cfg, "gradcheck");
  save_config(cfg, (dir / "resolved_config.json").string());
  njson j;
  std::vector<std::vector<std::string>> rows{
      {"suite", "samples", "worst_rel_err", "tolerance", "status"}};
  for (const auto& r : results) {
    njson e;
    e["suite"] = r.name;
    e["samples"] = r.samples;
    e["worst_rel_err"] = r.worst_rel_err;
    e["tolerance"] = r.tolerance;
    e["pass"] = r.pass;
    j["suites"].push_back(e);
    rows.push_back({r.name, std::to_string(r.samples), fmt(r.worst_rel_err),
                    fmt(r.tolerance), r.pass ? "pass" : "FAIL"});
  }
  j["pass"] = all_pass(results);
  write_text(dir / "report.json", j.dump(2) + "\n");
  const std::string table = format_table(rows);
  write_text(dir / "report.txt", table);
  std::cout << table;
  std::cout << (all_pass(results) ? "gradcheck: PASS" : "gradcheck: FAIL")
            << "\n";
  return all_pass(results) ? kExitOk : kExitSuite;
}

int cmd_scenario(const GlobalArgs& args) {
  const RunConfig cfg = make_config(args);
  const fs::path dir = make_run_dir(args, cfg, "scenario");
  save_config(cfg, (dir / "resolved_config.json").string());
  const TrajectoryLog log = scenario_log(cfg, 0);
  save_log(log, (dir / "log.csv").string());
  if (args.frames) dump_frames(log, cfg, dir / "frames");
  std::cout << "scenario: wrote " << (dir / "log.csv").string() << "\n";
  return kExitOk;
}

int cmd_plan(const GlobalArgs& args, const std::string& scene_path) {
  const RunConfig cfg = make_config(args);
  const TrajectoryLog log = load_log(scene_path);
  const Scene scene = scene_at(log, 0, cfg.lanes);

  Plan plan;
  if (cfg.planner.predictor == PredictorKind::coupled_reactive) {
    plan = plan_coupled(scene, scene.ego, cfg.planner);
  } else {
    plan = plan_decoupled(scene, scene.ego, cfg.planner, &log);
  }

  const fs::path dir = make_run_dir(args, cfg, "plan");
  save_config(cfg, (dir / "resolved_config.json").string());

  std::string trace = "iteration,J,grad_norm\n";
  for (std::size_t i = 0; i < plan.j_trace.size(); ++i) {
    char buf[96];
    if (i < plan.grad_norms.size()) {
      std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g\n", i, plan.j_trace[i],
                    plan.grad_norms[i]);
    } else {
      std::snprintf(buf, sizeof(buf), "%zu,%.17g,\n", i, plan.j_trace[i]);
    }
    trace += buf;
  }
  write_text(dir / "trace.csv", trace);

  std::string actions = "step,accel,turn\n";
  for (std::size_t k = 0; k < plan.actions.size(); ++k) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g\n", k + 1,
                  plan.actions[k].accel, plan.actions[k].turn);
    actions += buf;
  }
  write_text(dir / "actions.csv", actions);

  njson timing;
  timing["wall_ms"] = plan.wall_ms;
  timing["env_advances"] = plan.env_advances;
  write_text(dir / "timing.json", timing.dump(2) + "\n");

  if (args.frames) {
    fs::create_directories(dir / "frames");
    for (std::size_t k = 0; k < plan.frames.size(); ++k) {
      char name[32];
      std::snprintf(name, sizeof(name), "pred_%05zu.ppm", k + 1);
      write_ppm(plan.frames[k], (dir / "frames" / name).string());
    }
  }
  std::cout << "plan: J " << fmt(plan.j_trace.front()) << " -> "
            << fmt(plan.j_trace.back()) << ", first action accel "
            << fmt(plan.actions.front().accel) << " turn "
            << fmt(plan.actions.front().turn) << "\n";
  return kExitOk;
}

int run_episode_command(const GlobalArgs& args, const RunConfig& cfg,
                        const std::string& command) {
  EpisodeConfig ecfg = episode_config(cfg);
  if (ecfg.controller == ControllerKind::policy) {
    ecfg.policy = episode_policy(cfg);
  }

  // One scenario per (seed index, episode index); the stress scenario is
  // deterministic, so it repeats across episodes.
  std::vector<TrajectoryLog> logs;
  const int seeds = command == "stress" ? 1 : cfg.episode.n_seeds;
  const int per_seed = command == "stress" ? 1 : cfg.episode.episodes;
  for (int s = 0; s < seeds; ++s) {
    for (int e = 0; e < per_seed; ++e) {
      logs.push_back(
          scenario_log(cfg, static_cast<std::uint64_t>(s) * 100000 + e));
    }
  }
  const auto results = run_episodes(logs, ecfg, args.workers);

  const fs::path dir = make_run_dir(args, cfg, command);
  save_config(cfg, (dir / "resolved_config.json").string());

  njson j;
  j["mode"] = cfg.episode.mode;
  j["controller"] = cfg.episode.controller;
  std::vector<std::vector<Outcome>> by_seed(seeds);
  for (int s = 0; s < seeds; ++s) {
    for (int e = 0; e < per_seed; ++e) {
      const EpisodeResult& res = results[s * per_seed + e];
      njson ej = episode_json(res);
      ej["seed_index"] = s;
      ej["episode_index"] = e;
      j["episodes"].push_back(ej);
      by_seed[s].push_back(res.outcome);
    }
  }
  if (seeds >= 2) {
    const CrashStats stats = crash_rate(by_seed);
    j["crash_rate"] = {{"mean_pct", stats.mean_pct},
                       {"std_pct", stats.std_pct},
                       {"seeds", stats.seeds},
                       {"episodes", stats.episodes}};
  }
  write_text(dir / "report.json", j.dump(2) + "\n");

  std::vector<std::vector<std::string>> rows{
      {"seed", "episode", "outcome", "steps"}};
  for (int s = 0; s < seeds; ++s) {
    for (int e = 0; e < per_seed; ++e) {
      const EpisodeResult& res = results[s * per_seed + e];
      rows.push_back({std::to_string(s), std::to_string(e),
                      outcome_name(res.outcome),
                      std::to_string(res.steps_survived)});
    }
  }
  std::string table = format_table(rows);
  if (seeds >= 2) {
    const CrashStats stats = crash_rate(by_seed);
    table += "crash rate: " + fmt(stats.mean_pct) + " +- " +
             fmt(stats.std_pct) + " %\n";
  }
  write_text(dir / "report.txt", table);

  // Per-episode artifacts: state trace and cost breakdown.
  for (std::size_t i = 0; i < results.size(); ++i) {
    char name[64];
    std::snprintf(name, sizeof(name), "episode_%03zu", i);
    save_log(results[i].trace, (dir / (std::string(name) + "_trace.csv")).string());
    write_text(dir / (std::string(name) + "_costs.csv"), costs_csv(results[i]));
  }

  njson timing;
  for (const auto& res : results) {
    double total = 0;
    for (double ms : res.step_wall_ms) total += ms;
    timing["episode_wall_ms"].push_back(total);
  }
  write_text(dir / "timing.json", timing.dump(2) + "\n");

  if (args.frames && !results.empty()) {
    dump_frames(results[0].trace, cfg, dir / "frames");
  }

  std::cout << table;
  std::cout << command << ": report in " << dir.string() << "\n";
  return kExitOk;
}

int cmd_simulate(const GlobalArgs& args) {
  const RunConfig cfg = make_config(args);
  return run_episode_command(args, cfg, "simulate");
}

int cmd_stress(const GlobalArgs& args) {
  RunConfig cfg = make_config(args);
  cfg.scenario.kind = "stress";
  cfg.finalize();
  return run_episode_command(args, cfg, "stress");
}

int cmd_bench(const GlobalArgs& args) {
  const RunConfig cfg = make_config(args);
  const TrajectoryLog log = scenario_log(cfg, 0);

  std::vector<std::pair<std::string, EpisodeConfig>> methods;
  for (const std::string& name : cfg.bench.methods) {
    EpisodeConfig ecfg = episode_config(cfg);
    ecfg.controller = controller_from_string(name);
    if (ecfg.controller == ControllerKind::policy) {
      ecfg.policy = episode_policy(cfg);
    }
    if (ecfg.controller == ControllerKind::mpc_coupled) {
      ecfg.planner.predictor = PredictorKind::coupled_reactive;
    } else if (ecfg.planner.predictor == PredictorKind::coupled_reactive) {
      ecfg.planner.predictor = PredictorKind::constant_velocity;
    }
    methods.push_back({name, ecfg});
  }

  // Timing runs are pinned to one worker.
  const auto rows = bench_planner(log, methods, cfg.bench.steps,
                                  cfg.bench.warmup);

  const fs::path dir = make_run_dir(args, cfg, "bench");
  save_config(cfg, (dir / "resolved_config.json").string());
  njson j;
  std::vector<std::vector<std::string>> table{
      {"method", "ms_per_step_mean", "ms_std", "ms_median", "steps"}};
  for (const auto& r : rows) {
    njson e;
    e["method"] = r.name;
    e["mean_ms"] = r.mean_ms;
    e["std_ms"] = r.std_ms;
    e["median_ms"] = r.median_ms;
    e["steps"] = r.steps;
    j["rows"].push_back(e);
    table.push_back({r.name, fmt(r.mean_ms), fmt(r.std_ms), fmt(r.median_ms),
                     std::to_string(r.steps)});
  }
  write_text(dir / "timing.json", j.dump(2) + "\n");
  const std::string text = format_table(table);
  write_text(dir / "report.txt", text);
  std::cout << text;
  return kExitOk;
}

int cmd_variance(const GlobalArgs& args,
                 const std::vector<std::string>& policy_files) {
  const RunConfig cfg = make_config(args);

  std::vector<PolicyParams> policies;
  if (!policy_files.empty()) {
    if (policy_files.size() < 2) {
      throw ConfigError("variance: need at least two --policy files");
    }
    for (const auto& path : policy_files) policies.push_back(load_policy(path));
  } else {
    policies = train_seed_policies(cfg, cfg.variance.n_seeds);
  }

  std::vector<Scene> probes;
  for (int i = 0; i < cfg.variance.probe_count; ++i) {
    const TrajectoryLog log = make_traffic_scenario(
        mix_seed(cfg.seed, 9000 + i), cfg.scenario.density,
        cfg.lanes.lane_count, 0.2);
    probes.push_back(scene_at(log, 0, cfg.lanes));
  }
  const SeedVarianceReport rep = seed_variance(
      policies, probes, cfg.planner.bounds, cfg.variance.clamp);

  const fs::path dir = make_run_dir(args, cfg, "variance");
  save_config(cfg, (dir / "resolved_config.json").string());
  for (std::size_t i = 0; i < policies.size(); ++i) {
    save_policy(policies[i],
                (dir / ("policy_" + std::to_string(i) + ".json")).string());
  }
  njson j;
  j["policies"] = policies.size();
  j["probes"] = probes.size();
  j["std_accel"] = rep.per_dim[0];
  j["std_turn"] = rep.per_dim[1];
  j["std_average"] = rep.average;
  write_text(dir / "report.json", j.dump(2) + "\n");
  const std::string table = format_table(
      {{"accel", "turn", "average"},
       {fmt(rep.per_dim[0]), fmt(rep.per_dim[1]), fmt(rep.average)}});
  write_text(dir / "report.txt", table);
  std::cout << table;
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Highway-driving planning toolkit: decoupled world models, "
               "gradient MPC, replay and interactive micro-simulation"};
  app.require_subcommand(1);

  GlobalArgs args;
  app.add_option("--config", args.config_path, "Run config (JSON)")
      ->envname("EGOPLAN_CONFIG");
  auto* seed_opt = app.add_option("--seed", args.seed, "Override config seed")
                       ->envname("EGOPLAN_SEED");
  app.add_option("--out", args.out_dir, "Output parent directory")
      ->envname("EGOPLAN_OUT");
  app.add_option("--workers", args.workers, "Episode worker pool size")
      ->envname("EGOPLAN_WORKERS");
  app.add_flag("--frames", args.frames, "Dump PPM frames");

  auto* gradcheck = app.add_subcommand("gradcheck",
                                       "Finite-difference gradient suites");
  std::string inject;
  gradcheck->add_option("--inject-sign-flip", inject,
                        "Test hook: flip one analytic component of a suite")
      ->check(CLI::IsMember({"kinematics", "masks", "cost_chain",
                             "env_coupled", "policy"}));

  auto* plan = app.add_subcommand("plan", "Optimize one plan from a scene");
  std::string scene_path;
  plan->add_option("--scene", scene_path, "Trajectory-log CSV")->required();

  app.add_subcommand("simulate", "Run configured episodes and report");
  app.add_subcommand("stress", "Sudden-braking scenario episode");
  app.add_subcommand("bench", "Milliseconds per simulation step per method");
  auto* variance = app.add_subcommand("variance",
                                      "Across-seed action variance report");
  std::vector<std::string> policy_files;
  variance->add_option("--policy", policy_files,
                       "Policy parameter file (repeatable)");
  app.add_subcommand("scenario", "Generate and save a scenario log");

  try {
    app.parse(argc, argv);
    args.seed_set = seed_opt->count() > 0 || std::getenv("EGOPLAN_SEED");
    args.workers = std::max(1, args.workers);

    if (app.got_subcommand("gradcheck")) return cmd_gradcheck(args, inject);
    if (app.got_subcommand("plan")) return cmd_plan(args, scene_path);
    if (app.got_subcommand("simulate")) return cmd_simulate(args);
    if (app.got_subcommand("stress")) return cmd_stress(args);
    if (app.got_subcommand("bench")) return cmd_bench(args);
    if (app.got_subcommand("variance")) return cmd_variance(args, policy_files);
    if (app.got_subcommand("scenario")) return cmd_scenario(args);
    return kExitConfig;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}
