// fly0: run, evaluate and inspect the instruction-following flight stack.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fly0/error.hpp"
#include "fly0/grounding.hpp"
#include "fly0/harness.hpp"
#include "fly0/pipeline.hpp"
#include "fly0/scenario.hpp"

namespace fs = std::filesystem;
using namespace fly0;

namespace {

constexpr int kOk = 0;
constexpr int kEvalFailures = 1;
constexpr int kConfigError = 2;

struct CommonOptions {
  std::string config_path;
  std::string grounder_url;
  std::string grounder_token;
  double grounder_timeout{0.0};
  double pixel_noise{-1.0};
  double depth_noise{-1.0};
  double latency{-1.0};
  bool no_depth{false};
  bool no_opt{false};
  bool single_shot{false};
};

void add_common(CLI::App* cmd, CommonOptions& o, bool ablation_flags) {
  cmd->add_option("--config", o.config_path, "JSON file overriding configuration defaults");
  cmd->add_option("--grounder-url", o.grounder_url, "remote grounding endpoint (env FLY0_GROUNDER_URL)");
  cmd->add_option("--grounder-token", o.grounder_token, "bearer token (env FLY0_GROUNDER_TOKEN)");
  cmd->add_option("--grounder-timeout", o.grounder_timeout, "request timeout in seconds (env FLY0_GROUNDER_TIMEOUT)");
  cmd->add_option("--pixel-noise", o.pixel_noise, "mock grounder pixel noise sigma");
  cmd->add_option("--depth-noise", o.depth_noise, "multiplicative depth noise eta");
  cmd->add_option("--latency", o.latency, "modeled grounding latency per query, seconds");
  cmd->add_flag("--single-shot", o.single_shot, "ground once and never refine");
  if (ablation_flags) {
    cmd->add_flag("--no-depth", o.no_depth, "lift the target at a fixed range instead of reading depth");
    cmd->add_flag("--no-opt", o.no_opt, "fly the straight-line initialization without optimization");
  }
}

NavigatorConfig build_config(const CommonOptions& o) {
  NavigatorConfig c;
  if (!o.config_path.empty()) {
    std::ifstream in(o.config_path);
    if (!in) throw Error(ErrorCode::IoError, "cannot read " + o.config_path);
    std::stringstream ss;
    ss << in.rdbuf();
    c = config_from_json(ss.str());
  }
  if (o.pixel_noise >= 0.0) c.grounding.pixel_noise_sigma = o.pixel_noise;
  if (o.depth_noise >= 0.0) c.depth_noise_eta = o.depth_noise;
  if (o.latency >= 0.0) c.grounding.latency_model = o.latency;
  if (o.single_shot) c.regrounding = false;
  if (o.no_depth) c.use_depth = false;
  if (o.no_opt) c.planner.optimize = false;
  c.validate();
  return c;
}

GrounderFactory build_grounders(const CommonOptions& o) {
  RemoteConfig rc;
  rc.url = o.grounder_url;
  rc.token = o.grounder_token;
  rc = RemoteConfig::from_env(rc);
  if (o.grounder_timeout > 0.0) rc.timeout_s = o.grounder_timeout;
  if (rc.url.empty()) return {};
  RemoteGrounder probe(rc);  // validates the URL early
  return [rc](const Scenario&, std::uint64_t) { return std::make_unique<RemoteGrounder>(rc); };
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  out << text;
}

void print_report(const MetricsReport& m, const std::string& label, double wall_seconds) {
  std::printf("%-10s episodes=%d sr=%.2f%% ne_mean=%.3f m time_mean=%.2f s collisions=%d\n", label.c_str(),
              m.episodes, m.sr, m.ne_mean, m.time_mean, m.collisions);
  // Wall-clock compute stays out of the report so reports remain reproducible.
  std::fprintf(stderr, "%s wall-clock %.2f s\n", label.c_str(), wall_seconds);
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

int cmd_run(const CommonOptions& common, const std::string& scenario_path, std::uint64_t seed,
            const std::string& trace_path, const std::string& export_path, const std::string& opt_trace_path,
            const std::string& report_path, double export_rate) {
  NavigatorConfig config = build_config(common);
  config.trace = !trace_path.empty() || !opt_trace_path.empty();
  const Scenario scenario = load_scenario(scenario_path);
  const GrounderFactory grounders = build_grounders(common);
  auto grounder = grounders ? grounders(scenario, seed) : make_mock_grounder(scenario, config, seed);

  const EpisodeResult r = run_episode(scenario, config, *grounder, seed);
  std::printf("success=%s ne=%.3f m time=%.2f s collided=%s groundings=%d replans=%d reason=%s\n",
              r.success ? "true" : "false", r.ne, r.time, r.collided ? "true" : "false", r.groundings, r.replans,
              to_string(r.reason).c_str());

  if (!trace_path.empty()) {
    std::ofstream out(trace_path);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + trace_path);
    write_tick_trace_csv(out, r.trace);
  }
  if (!opt_trace_path.empty()) {
    std::ofstream out(opt_trace_path);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + opt_trace_path);
    write_trace_csv(out, r.optimizer_trace);
  }
  if (!export_path.empty()) {
    if (!r.final_trajectory) throw Error(ErrorCode::InvalidArgument, "episode produced no trajectory to export");
    export_trajectory(*r.final_trajectory, export_rate, export_path);
  }
  if (!report_path.empty()) {
    ScenarioRow row;
    row.name = fs::path(scenario_path).stem().string();
    row.trials.push_back(summarize(r, seed));
    const MetricsReport m = aggregate({row}, 1, seed, config_fingerprint(config));
    write_text(report_path, report_to_json(m, config));
  }
  return r.success ? kOk : kEvalFailures;
}

std::vector<NamedScenario> gather(const std::string& spec) {
  std::vector<NamedScenario> out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    auto part = load_scenarios(item);
    out.insert(out.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  if (out.empty()) throw Error(ErrorCode::EmptyInput, "no scenarios found in " + spec);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fly0: instruction-following UAV navigation in a synthetic world"};
  app.require_subcommand(1);

  CommonOptions common;
  std::string scenario_path, scenarios_spec, trace_path, export_path, opt_trace_path, report_path, out_dir = ".";
  std::uint64_t seed = 0;
  int trials = 20, threads = 1, count = 1, instances = 100;
  double export_rate = 50.0;
  ScenarioParams params;

  auto* run = app.add_subcommand("run", "fly one episode");
  run->add_option("--scenario", scenario_path, "scenario JSON")->required();
  run->add_option("--seed", seed, "episode seed");
  run->add_option("--trace", trace_path, "per-tick CSV trace");
  run->add_option("--export", export_path, "final trajectory CSV (t,x,y,z,vx,vy,vz)");
  run->add_option("--export-rate", export_rate, "trajectory export rate, Hz");
  run->add_option("--opt-trace", opt_trace_path, "optimizer CSV trace of the last replan");
  run->add_option("--report", report_path, "JSON report");
  add_common(run, common, true);

  auto* batch = app.add_subcommand("batch", "evaluate scenarios over seeded trials");
  batch->add_option("--scenarios", scenarios_spec, "directory or comma-separated scenario files")->required();
  batch->add_option("--trials", trials, "trials per scenario")->check(CLI::PositiveNumber);
  batch->add_option("--seed", seed, "base seed; trial i uses base + i");
  batch->add_option("--report", report_path, "JSON report");
  batch->add_option("--threads", threads, "worker threads (0 = all cores)");
  add_common(batch, common, true);

  auto* gen = app.add_subcommand("gen", "generate random cluttered scenarios");
  gen->add_option("--seed", seed, "first seed");
  gen->add_option("--count", count, "number of scenarios")->check(CLI::PositiveNumber);
  gen->add_option("--out", out_dir, "output directory");
  gen->add_option("--min-obstacles", params.min_obstacles);
  gen->add_option("--max-obstacles", params.max_obstacles);
  gen->add_option("--world-size", params.world_size, "edge of the cubic world, meters");
  gen->add_option("--min-clearance", params.min_clearance, "start/goal clearance, meters");
  gen->add_option("--sight-radius", params.sight_radius, "clear view cone radius at the goal, meters");

  auto* grad = app.add_subcommand("gradcheck", "compare analytic cost gradients with finite differences");
  grad->add_option("--instances", instances, "random (trajectory, map) instances")->check(CLI::PositiveNumber);
  grad->add_option("--seed", seed, "random seed");

  auto* ablate = app.add_subcommand("ablate", "compare the full stack with component ablations");
  ablate->add_option("--scenarios", scenarios_spec, "directory or comma-separated scenario files")->required();
  ablate->add_option("--trials", trials, "trials per scenario")->check(CLI::PositiveNumber);
  ablate->add_option("--seed", seed, "base seed");
  ablate->add_option("--report", report_path, "JSON report with one entry per variant");
  ablate->add_option("--threads", threads, "worker threads (0 = all cores)");
  add_common(ablate, common, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (run->parsed())
      return cmd_run(common, scenario_path, seed, trace_path, export_path, opt_trace_path, report_path, export_rate);

    if (batch->parsed()) {
      const NavigatorConfig config = build_config(common);
      const auto scenarios = gather(scenarios_spec);
      const auto grounders = build_grounders(common);
      const auto start = std::chrono::steady_clock::now();
      const MetricsReport m = batch_eval(scenarios, config, trials, seed, threads, grounders);
      print_report(m, "batch", seconds_since(start));
      if (!report_path.empty()) write_text(report_path, report_to_json(m, config));
      return m.successes == m.episodes ? kOk : kEvalFailures;
    }

    if (gen->parsed()) {
      params.validate();
      fs::create_directories(out_dir);
      for (int i = 0; i < count; ++i) {
        const std::uint64_t s = seed + static_cast<std::uint64_t>(i);
        const fs::path path = fs::path(out_dir) / ("scenario_" + std::to_string(s) + ".json");
        save_scenario(gen_random_scenario(s, params), path);
        std::printf("%s\n", path.string().c_str());
      }
      return kOk;
    }

    if (grad->parsed()) {
      const GradientAudit a = gradient_audit(instances, seed);
      std::printf("instances=%d coordinates=%ld excluded=%ld\n", a.instances, a.coordinates, a.excluded);
      std::printf("max relative error: Js=%.3e Jc=%.3e Jd=%.3e J=%.3e\n", a.max_rel_smoothness, a.max_rel_collision,
                  a.max_rel_feasibility, a.max_rel_total);
      return a.max_rel() < 1e-4 ? kOk : kEvalFailures;
    }

    if (ablate->parsed()) {
      const auto scenarios = gather(scenarios_spec);
      const auto grounders = build_grounders(common);
      std::vector<std::pair<std::string, CommonOptions>> variants;
      if (!common.no_depth && !common.no_opt) {
        CommonOptions nd = common, no = common;
        nd.no_depth = true;
        no.no_opt = true;
        variants = {{"full", common}, {"no-depth", nd}, {"no-opt", no}};
      } else {
        variants = {{common.no_depth && common.no_opt ? "no-depth+no-opt" : common.no_depth ? "no-depth" : "no-opt",
                     common}};
      }
      std::string json = "{\n";
      for (std::size_t i = 0; i < variants.size(); ++i) {
        const NavigatorConfig config = build_config(variants[i].second);
        const auto start = std::chrono::steady_clock::now();
        const MetricsReport m = batch_eval(scenarios, config, trials, seed, threads, grounders);
        print_report(m, variants[i].first, seconds_since(start));
        json += "\"" + variants[i].first + "\": " + report_to_json(m, config);
        if (i + 1 < variants.size()) json += ",";
      }
      json += "}\n";
      if (!report_path.empty()) write_text(report_path, json);
      return kOk;
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "fly0: %s\n", e.what());
    switch (e.code()) {
      case ErrorCode::SchemaError:
      case ErrorCode::IoError:
      case ErrorCode::InvalidArgument:
      case ErrorCode::EmptyInput:
      case ErrorCode::InvalidIntrinsics:
      case ErrorCode::InvalidPose:
        return kConfigError;
      default:
        return kEvalFailures;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "fly0: %s\n", e.what());
    return kEvalFailures;
  }
  return kOk;
}
