// Acceptance suite: prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.
//
// usage: fly0_acceptance <path-to-fly0-cli> [scratch-dir]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "fly0/bspline.hpp"
#include "fly0/geometry.hpp"
#include "fly0/harness.hpp"
#include "fly0/mapping.hpp"
#include "fly0/pipeline.hpp"
#include "fly0/planner.hpp"
#include "fly0/scenario.hpp"

namespace fs = std::filesystem;
using namespace fly0;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string format(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

struct Outcome {
  bool pass{false};
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const Outcome& o) {
  std::printf("%s criterion %2d %-28s %s\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str());
  std::fflush(stdout);
  if (!o.pass) ++failures;
}

// Pinned tolerances and suite sizes.
constexpr int kGradInstances = 100;
constexpr double kGradTolerance = 1e-4;
constexpr double kQuickLimit = 60.0;  // seconds, criteria 1 and 2
constexpr int kEdtMaps = 50;
constexpr int kRoundTrips = 10000;
constexpr double kRoundTripTolerance = 1e-9;
constexpr int kHullSplines = 1000;
constexpr int kHullParams = 100;
constexpr double kLimitSlack = 1e-3;
constexpr int kSuiteScenarios = 50;
constexpr double kSuitePixelNoise = 3.0;
constexpr double kSuiteDepthNoise = 0.02;
constexpr double kSuiteDelta = 5.0;
constexpr double kSuiteNeMax = 1.0;
constexpr double kSuiteLimit = 300.0;  // seconds
constexpr int kRefineSeeds = 20;
constexpr double kRefineDepthNoise = 0.05;
constexpr int kReplanPoints = 30;
constexpr double kReplanLimit = 0.100;  // seconds
constexpr std::uint64_t kEpisodeSeedBase = 1000;

// --- 1 ----------------------------------------------------------------------

Outcome gradient_audit_criterion() {
  const auto t0 = Clock::now();
  const GradientAudit a = gradient_audit(kGradInstances, 2024);
  const double secs = seconds_since(t0);
  return {a.instances >= kGradInstances && a.max_rel() < kGradTolerance && secs < kQuickLimit,
          format("instances=%d coords=%ld excluded=%ld max_rel Js=%.2e Jc=%.2e Jd=%.2e J=%.2e (<%.0e) %.1fs",
                 a.instances, a.coordinates, a.excluded, a.max_rel_smoothness, a.max_rel_collision,
                 a.max_rel_feasibility, a.max_rel_total, kGradTolerance, secs)};
}

// --- 2 ----------------------------------------------------------------------

Outcome edt_oracle_criterion() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(77);
  long mismatches = 0, voxels = 0;
  for (int m = 0; m < kEdtMaps; ++m) {
    MapConfig cfg;
    cfg.window_voxels = Eigen::Vector3i::Constant(32);
    OccupancyMap map(cfg, Eigen::Vector3d(0.13 * m, -0.07 * m, 0.05 * m));
    std::uniform_int_distribution<int> count(1, 200), axis(0, 31);
    std::vector<Eigen::Vector3d> pts;
    for (int i = count(rng); i > 0; --i)
      pts.push_back(map.index_to_center(map.window_origin() + Eigen::Vector3i(axis(rng), axis(rng), axis(rng))));
    map.insert_cloud({pts, Frame::World});
    map.recompute_distance_field();
    const auto occ = map.occupied_voxels();
    for (int z = 0; z < 32; ++z)
      for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x) {
          const Eigen::Vector3i g = map.window_origin() + Eigen::Vector3i(x, y, z);
          long best = std::numeric_limits<long>::max();
          for (const auto& o : occ) best = std::min(best, static_cast<long>((o - g).squaredNorm()));
          const double oracle = std::min(map.truncation_radius(), std::sqrt(double(best)) * map.resolution());
          if (std::abs(map.voxel_distance(g) - oracle) > 1e-12) ++mismatches;
          ++voxels;
        }
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < kQuickLimit,
          format("maps=%d voxels=%ld mismatches=%ld %.1fs", kEdtMaps, voxels, mismatches, secs)};
}

// --- 3 ----------------------------------------------------------------------

Outcome geometry_criterion() {
  std::mt19937_64 rng(3);
  const CameraIntrinsics k;
  std::uniform_real_distribution<double> ux(0.0, k.width), uy(0.0, k.height), ud(0.05, 100.0);
  double worst_px = 0.0;
  for (int i = 0; i < kRoundTrips; ++i) {
    const PixelTarget px{ux(rng), uy(rng)};
    const PixelTarget back = project(back_project(px, ud(rng), k), k);
    worst_px = std::max({worst_px, std::abs(back.x - px.x), std::abs(back.y - px.y)});
  }
  std::normal_distribution<double> g;
  double worst_dist = 0.0;
  for (int i = 0; i < kRoundTrips; ++i) {
    const auto random_pose = [&] {
      return Pose::from_quaternion(Eigen::Quaterniond(g(rng), g(rng), g(rng), g(rng)),
                                   Eigen::Vector3d(g(rng), g(rng), g(rng)) * 10.0);
    };
    const Pose ext = random_pose(), body = random_pose();
    const Eigen::Vector3d a = Eigen::Vector3d(g(rng), g(rng), g(rng)) * 5.0;
    const Eigen::Vector3d b = Eigen::Vector3d(g(rng), g(rng), g(rng)) * 5.0;
    const double d = (sensor_to_world(Point3(a, Frame::Sensor), ext, body).xyz -
                      sensor_to_world(Point3(b, Frame::Sensor), ext, body).xyz)
                         .norm();
    worst_dist = std::max(worst_dist, std::abs(d - (a - b).norm()));
  }
  return {worst_px <= kRoundTripTolerance && worst_dist <= kRoundTripTolerance,
          format("pairs=%d max pixel err=%.2e max distance err=%.2e (<=%.0e)", kRoundTrips, worst_px, worst_dist,
                 kRoundTripTolerance)};
}

// --- 4 ----------------------------------------------------------------------

Outcome convex_hull_criterion() {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-10.0, 10.0), unit(0.0, 1.0), dtd(0.05, 1.0);
  std::uniform_int_distribution<int> count(4, 30);
  long violations = 0, samples = 0;
  for (int s = 0; s < kHullSplines; ++s) {
    std::vector<Eigen::Vector3d> pts(count(rng));
    for (auto& p : pts) p = Eigen::Vector3d(u(rng), u(rng), u(rng));
    const BSplineTrajectory t(pts, dtd(rng), u(rng));
    for (int i = 0; i < kHullParams; ++i) {
      const double tau = t.start_time() + unit(rng) * t.duration();
      const std::size_t j = t.active_span(tau);
      Eigen::Vector3d lo = pts[j], hi = pts[j];
      for (std::size_t m = j + 1; m <= j + 3; ++m) {
        lo = lo.cwiseMin(pts[m]);
        hi = hi.cwiseMax(pts[m]);
      }
      const Eigen::Vector3d p = t.evaluate(tau);
      if (((p - lo).array() < -1e-12).any() || ((hi - p).array() < -1e-12).any()) ++violations;
      ++samples;
    }
  }
  return {violations == 0, format("splines=%d samples=%ld violations=%ld", kHullSplines, samples, violations)};
}

// --- episode suites ---------------------------------------------------------

struct Suite {
  std::vector<EpisodeResult> results;
  double seconds{0.0};

  int successes() const {
    return static_cast<int>(std::count_if(results.begin(), results.end(), [](const auto& r) { return r.success; }));
  }
  int collisions() const {
    return static_cast<int>(std::count_if(results.begin(), results.end(), [](const auto& r) { return r.collided; }));
  }
  double ne_mean() const {
    double s = 0.0;
    for (const auto& r : results) s += r.ne;
    return results.empty() ? 0.0 : s / results.size();
  }
};

std::vector<Scenario> cluttered_scenarios(int n) {
  ScenarioParams p;  // 5-15 obstacles in a 20 m cube
  std::vector<Scenario> out;
  for (int i = 1; i <= n; ++i) {
    Scenario s = gen_random_scenario(static_cast<std::uint64_t>(i), p);
    s.delta = kSuiteDelta;
    out.push_back(std::move(s));
  }
  return out;
}

Suite run_suite(const std::vector<Scenario>& scenarios, const NavigatorConfig& config) {
  Suite suite;
  const auto t0 = Clock::now();
  for (std::size_t i = 0; i < scenarios.size(); ++i)
    suite.results.push_back(run_episode(scenarios[i], config, kEpisodeSeedBase + i + 1));
  suite.seconds = seconds_since(t0);
  return suite;
}

NavigatorConfig suite_config() {
  NavigatorConfig c;
  c.grounding.pixel_noise_sigma = kSuitePixelNoise;
  c.depth_noise_eta = kSuiteDepthNoise;
  return c;
}

// --- 5 ----------------------------------------------------------------------

Outcome feasibility_criterion(const std::vector<const Suite*>& suites, const CostWeights& w) {
  double vmax = 0.0, amax = 0.0;
  int episodes = 0, accepted = 0;
  for (const Suite* s : suites)
    for (const auto& r : s->results) {
      vmax = std::max(vmax, r.audit.max_dense_speed);
      amax = std::max(amax, r.audit.max_dense_accel);
      accepted += r.audit.accepted;
      ++episodes;
    }
  const double vlim = w.v_max * (1 + kLimitSlack), alim = w.a_max * (1 + kLimitSlack);
  return {vmax <= vlim && amax <= alim && accepted > 0,
          format("episodes=%d accepted plans=%d max |v|=%.3f (<=%.3f) max |a|=%.3f (<=%.3f)", episodes, accepted,
                 vmax, vlim, amax, alim)};
}

// --- 6 ----------------------------------------------------------------------

Outcome safety_criterion(const Suite& s, const NavigatorConfig& c) {
  const double need = c.planner.weights.d_safe - c.map.resolution;
  double min_final = std::numeric_limits<double>::infinity();
  double min_flown = std::numeric_limits<double>::infinity();
  int non_monotone = 0;
  for (const auto& r : s.results) {
    min_final = std::min(min_final, r.audit.min_final_clearance);
    min_flown = std::min(min_flown, r.audit.min_flown_clearance);
    if (!r.audit.monotone) ++non_monotone;
  }
  return {min_final >= need && s.collisions() == 0 && non_monotone == 0,
          format("scenarios=%zu min final clearance=%.3f m (>=%.2f) collisions=%d non-monotone runs=%d "
                 "(min flown clearance %.3f m)",
                 s.results.size(), min_final, need, s.collisions(), non_monotone, min_flown)};
}

// --- 7 ----------------------------------------------------------------------

Outcome navigation_criterion(const Suite& s) {
  const double sr = 100.0 * s.successes() / static_cast<double>(s.results.size());
  return {sr == 100.0 && s.ne_mean() <= kSuiteNeMax && s.seconds < kSuiteLimit,
          format("SR=%.1f%% (=100) mean NE=%.3f m (<=%.1f) suite runtime=%.1f s (<%.0f)", sr, s.ne_mean(),
                 kSuiteNeMax, s.seconds, kSuiteLimit)};
}

// --- 10 ---------------------------------------------------------------------

Outcome replan_criterion() {
  // Default map around a cluttered scenario, filled from the start pose.
  const Scenario sc = gen_random_scenario(7);
  const NavigatorConfig nc;
  OccupancyMap map(nc.map, sc.start.position());
  map.insert_cloud([&] {
    PointCloud c = sample_lidar(sc.world, sc.start.pose, 360, 90, 20.0);
    for (auto& p : c.points) p = sc.start.pose.apply(p);
    c.frame = Frame::World;
    return c;
  }());
  map.recompute_distance_field();

  Planner planner(nc.planner);
  PlanRequest req;
  req.position = sc.start.position();
  const Eigen::Vector3d dir = (sc.goal - req.position).normalized();
  // Goal distance chosen so the seeded spline carries ~30 control points.
  double dist = 4.0;
  req.goal = req.position + dir * dist;
  PlanResult first = planner.plan(req, map);
  while (first.trajectory.size() < kReplanPoints && dist < 20.0) {
    dist += 0.25;
    req.goal = req.position + dir * dist;
    first = planner.plan(req, map);
  }
  PlanRequest warm;
  const double t = 0.2;
  warm.time = t;
  warm.position = first.trajectory.evaluate(t);
  warm.velocity = first.trajectory.derivative(1).evaluate(t);
  warm.acceleration = first.trajectory.derivative(2).evaluate(t);
  warm.goal = req.goal;
  warm.previous = &first.trajectory;
  // Median of a few cycles so one scheduler hiccup does not decide the outcome.
  std::vector<double> times;
  std::size_t points = 0;
  bool warm_started = true;
  for (int i = 0; i < 5; ++i) {
    const auto t0 = Clock::now();
    const PlanResult r = planner.plan(warm, map);
    times.push_back(seconds_since(t0));
    points = r.trajectory.size();
    warm_started = warm_started && r.warm_started;
  }
  std::sort(times.begin(), times.end());
  const double median = times[times.size() / 2];
  return {median < kReplanLimit && warm_started,
          format("control points=%zu warm=%s median=%.2f ms max=%.2f ms (<%.0f ms)", points,
                 warm_started ? "yes" : "no", median * 1e3, times.back() * 1e3, kReplanLimit * 1e3)};
}

// --- 11 ---------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int shell(const std::string& cmd) {
  const int rc = std::system((cmd + " >/dev/null 2>&1").c_str());
  return rc == -1 ? -1 : WEXITSTATUS(rc);
}

Outcome determinism_criterion(const std::string& cli, const fs::path& scratch) {
  fs::remove_all(scratch);
  fs::create_directories(scratch / "scenarios");
  const std::string q = "\"" + cli + "\"";
  const std::string dir = "\"" + (scratch / "scenarios").string() + "\"";
  if (shell(q + " gen --seed 31 --count 3 --out " + dir) != 0) return {false, "gen failed"};
  const std::string scenario = "\"" + (scratch / "scenarios" / "scenario_31.json").string() + "\"";
  const std::string common = " --pixel-noise 3 --latency 0";
  int codes[4];
  for (int i = 0; i < 2; ++i) {
    const std::string tag = std::to_string(i);
    codes[i] = shell(q + " run --scenario " + scenario + " --seed 5 --report \"" +
                     (scratch / ("run" + tag + ".json")).string() + "\"" + common);
    codes[2 + i] = shell(q + " batch --scenarios " + dir + " --trials 2 --seed 9 --report \"" +
                         (scratch / ("batch" + tag + ".json")).string() + "\"" + common);
  }
  const std::string r0 = slurp(scratch / "run0.json"), r1 = slurp(scratch / "run1.json");
  const std::string b0 = slurp(scratch / "batch0.json"), b1 = slurp(scratch / "batch1.json");
  const bool ran = codes[0] >= 0 && codes[0] <= 1 && codes[2] >= 0 && codes[2] <= 1;
  const bool same = !r0.empty() && !b0.empty() && r0 == r1 && b0 == b1;
  fs::remove_all(scratch);
  return {ran && same, format("run reports %zu/%zu bytes %s, batch reports %zu/%zu bytes %s", r0.size(), r1.size(),
                              r0 == r1 ? "identical" : "DIFFER", b0.size(), b1.size(),
                              b0 == b1 ? "identical" : "DIFFER")};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: %s <fly0-cli> [scratch-dir]\n", argv[0]);
    return 2;
  }
  const std::string cli = argv[1];
  const fs::path scratch = argc > 2 ? fs::path(argv[2]) : fs::temp_directory_path() / "fly0_acceptance";
  const auto t0 = Clock::now();

  report(1, "gradient audit", gradient_audit_criterion());
  report(2, "distance-field oracle", edt_oracle_criterion());
  report(3, "geometry round trip", geometry_criterion());
  report(4, "convex hull", convex_hull_criterion());

  const auto scenarios = cluttered_scenarios(kSuiteScenarios);
  const NavigatorConfig full = suite_config();
  const Suite main_suite = run_suite(scenarios, full);

  // Re-grounding vs single-shot under heavier depth noise.
  const std::vector<Scenario> refine_set(scenarios.begin(), scenarios.begin() + kRefineSeeds);
  NavigatorConfig regr = full, single = full;
  regr.depth_noise_eta = single.depth_noise_eta = kRefineDepthNoise;
  single.regrounding = false;
  const Suite regr_suite = run_suite(refine_set, regr);
  const Suite single_suite = run_suite(refine_set, single);

  // Ablations over the cluttered suite.
  NavigatorConfig no_opt = full, no_depth = full;
  no_opt.planner.optimize = false;
  no_depth.use_depth = false;
  const Suite no_opt_suite = run_suite(scenarios, no_opt);
  const Suite no_depth_suite = run_suite(scenarios, no_depth);

  report(5, "feasibility at limits", feasibility_criterion({&main_suite, &regr_suite, &single_suite, &no_depth_suite},
                                                            full.planner.weights));
  report(6, "safety", safety_criterion(main_suite, full));
  report(7, "end-to-end navigation", navigation_criterion(main_suite));
  report(8, "re-grounding refinement",
         {regr_suite.ne_mean() <= single_suite.ne_mean(),
          format("seeds=%d eta=%.2f mean NE re-grounding=%.3f m <= single-shot=%.3f m", kRefineSeeds,
                 kRefineDepthNoise, regr_suite.ne_mean(), single_suite.ne_mean())});
  report(9, "ablation echoes",
         {no_opt_suite.collisions() >= 1 && main_suite.collisions() == 0 &&
              no_depth_suite.ne_mean() > main_suite.ne_mean(),
          format("collisions full=%d no-opt=%d (>=1); mean NE full=%.3f < no-depth=%.3f m", main_suite.collisions(),
                 no_opt_suite.collisions(), main_suite.ne_mean(), no_depth_suite.ne_mean())});
  report(10, "replanning compute", replan_criterion());
  report(11, "determinism", determinism_criterion(cli, scratch));

  std::printf("%s: %d of 11 criteria failed, %.1f s total\n", failures ? "FAIL" : "PASS", failures,
              seconds_since(t0));
  return failures ? 1 : 0;
}
