#include "fly0/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "fly0/error.hpp"
#include "fly0/optimizer.hpp"

namespace fly0 {

using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Scenario schema helpers

[[noreturn]] void schema_error(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::SchemaError, path + ": " + what);
}

const json& field(const json& obj, const std::string& key, const std::string& path) {
  const std::string full = path.empty() ? key : path + "." + key;
  if (!obj.is_object()) schema_error(path.empty() ? "<root>" : path, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) schema_error(full, "missing field");
  return *it;
}

std::string child(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

double number(const json& v, const std::string& path) {
  if (!v.is_number()) schema_error(path, "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) schema_error(path, "expected a finite number");
  return d;
}

Eigen::Vector3d vec3(const json& v, const std::string& path) {
  if (!v.is_array() || v.size() != 3) schema_error(path, "expected [x, y, z]");
  return {number(v[0], path + "[0]"), number(v[1], path + "[1]"), number(v[2], path + "[2]")};
}

json vec3_json(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

Pose pose_from(const json& v, const std::string& path) {
  Eigen::Matrix3d r = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();
  if (v.contains("rotation")) {
    const json& rows = v["rotation"];
    if (!rows.is_array() || rows.size() != 3) schema_error(child(path, "rotation"), "expected a 3x3 row list");
    for (int i = 0; i < 3; ++i) r.row(i) = vec3(rows[i], child(path, "rotation") + "[" + std::to_string(i) + "]");
  }
  if (v.contains("translation")) t = vec3(v["translation"], child(path, "translation"));
  try {
    return Pose(r, t);
  } catch (const Error& e) {
    schema_error(path, e.what());
  }
}

json pose_json(const Pose& p) {
  json rows = json::array();
  for (int i = 0; i < 3; ++i) rows.push_back(vec3_json(p.rotation().row(i).transpose()));
  return {{"rotation", rows}, {"translation", vec3_json(p.translation())}};
}

Rgb color_from(const json& v, const std::string& path) {
  if (!v.is_array() || v.size() != 3) schema_error(path, "expected [r, g, b]");
  Rgb c{};
  for (int i = 0; i < 3; ++i) {
    const double x = number(v[i], path);
    if (x < 0 || x > 255) schema_error(path, "color channel out of range");
    c[i] = static_cast<std::uint8_t>(x);
  }
  return c;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

}  // namespace

Scenario parse_scenario(std::string_view json_text) {
  json doc = json::parse(json_text, nullptr, false);
  if (doc.is_discarded()) throw Error(ErrorCode::SchemaError, "<root>: not valid JSON");
  if (!doc.is_object()) schema_error("<root>", "expected an object");

  const json& w = field(doc, "world", "");
  const json& bounds = field(w, "bounds", "world");
  if (!bounds.is_array() || bounds.size() != 2) schema_error("world.bounds", "expected [[min], [max]]");
  Bounds b{vec3(bounds[0], "world.bounds[0]"), vec3(bounds[1], "world.bounds[1]")};
  if ((b.min.array() >= b.max.array()).any()) schema_error("world.bounds", "min must be below max");

  const json& obs = field(w, "obstacles", "world");
  if (!obs.is_array()) schema_error("world.obstacles", "expected a list");
  std::vector<Obstacle> obstacles;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const std::string path = "world.obstacles[" + std::to_string(i) + "]";
    const json& o = obs[i];
    const json& type = field(o, "type", path);
    Obstacle ob;
    if (type == "box") {
      const Eigen::Vector3d size = vec3(field(o, "size", path), child(path, "size"));
      if ((size.array() <= 0.0).any()) schema_error(child(path, "size"), "sizes must be positive");
      ob.shape = Box{vec3(field(o, "center", path), child(path, "center")), size};
    } else if (type == "sphere") {
      const double r = number(field(o, "radius", path), child(path, "radius"));
      if (!(r > 0.0)) schema_error(child(path, "radius"), "radius must be positive");
      ob.shape = Sphere{vec3(field(o, "center", path), child(path, "center")), r};
    } else {
      schema_error(child(path, "type"), "expected \"box\" or \"sphere\"");
    }
    if (o.contains("color")) ob.color = color_from(o["color"], child(path, "color"));
    if ((ob.aabb_min().array() < b.min.array()).any() || (ob.aabb_max().array() > b.max.array()).any())
      schema_error(path, "obstacle extends outside the world bounds");
    obstacles.push_back(ob);
  }

  Scenario s;
  s.world = World(std::move(obstacles), b);

  const json& start = field(doc, "start", "");
  const Eigen::Vector3d p = vec3(field(start, "position", "start"), "start.position");
  if (!b.contains(p)) schema_error("start.position", "outside the world bounds");
  const double yaw = start.contains("yaw") ? number(start["yaw"], "start.yaw") : 0.0;
  s.start.pose = Pose::from_yaw(yaw, p);
  if (start.contains("velocity")) s.start.velocity = vec3(start["velocity"], "start.velocity");

  s.goal = vec3(field(doc, "goal", ""), "goal");
  if (!b.contains(s.goal)) schema_error("goal", "outside the world bounds");

  if (doc.contains("instruction")) {
    if (!doc["instruction"].is_string()) schema_error("instruction", "expected a string");
    s.instruction = doc["instruction"].get<std::string>();
  }
  if (doc.contains("delta")) {
    s.delta = number(doc["delta"], "delta");
    if (!(s.delta > 0.0)) schema_error("delta", "must be positive");
  }
  if (doc.contains("camera")) {
    const json& c = doc["camera"];
    if (!c.is_object()) schema_error("camera", "expected an object");
    auto opt = [&](const char* key, double& dst) {
      if (c.contains(key)) dst = number(c[key], std::string("camera.") + key);
    };
    opt("fx", s.camera.fx);
    opt("fy", s.camera.fy);
    opt("cx", s.camera.cx);
    opt("cy", s.camera.cy);
    for (const char* key : {"width", "height"}) {
      if (!c.contains(key)) continue;
      if (!c[key].is_number_integer()) schema_error(std::string("camera.") + key, "expected an integer");
      (std::string(key) == "width" ? s.camera.width : s.camera.height) = c[key].get<int>();
    }
    try {
      s.camera.validate();
    } catch (const Error& e) {
      schema_error("camera", e.what());
    }
  }
  if (doc.contains("camera_extrinsics")) s.camera_extrinsics = pose_from(doc["camera_extrinsics"], "camera_extrinsics");
  if (doc.contains("lidar_extrinsics")) s.lidar_extrinsics = pose_from(doc["lidar_extrinsics"], "lidar_extrinsics");
  if (doc.contains("target_radius")) {
    s.target_radius = number(doc["target_radius"], "target_radius");
    if (!(s.target_radius > 0.0)) schema_error("target_radius", "must be positive");
  }
  if (doc.contains("seed")) {
    if (!doc["seed"].is_number_integer()) schema_error("seed", "expected an integer");
    s.seed = doc["seed"].get<std::uint64_t>();
  }
  try {
    s.validate();
  } catch (const Error& e) {
    schema_error("<root>", e.what());
  }
  return s;
}

std::string scenario_to_json(const Scenario& s) {
  json obs = json::array();
  for (const auto& o : s.world.obstacles()) {
    json j;
    if (const auto* box = std::get_if<Box>(&o.shape)) {
      j = {{"type", "box"}, {"center", vec3_json(box->center)}, {"size", vec3_json(box->size)}};
    } else {
      const auto& sp = std::get<Sphere>(o.shape);
      j = {{"type", "sphere"}, {"center", vec3_json(sp.center)}, {"radius", sp.radius}};
    }
    j["color"] = {o.color[0], o.color[1], o.color[2]};
    obs.push_back(j);
  }
  json doc;
  doc["world"] = {{"bounds", {vec3_json(s.world.bounds().min), vec3_json(s.world.bounds().max)}},
                  {"obstacles", obs}};
  doc["start"] = {{"position", vec3_json(s.start.position())},
                  {"yaw", s.start.pose.yaw()},
                  {"velocity", vec3_json(s.start.velocity)}};
  doc["goal"] = vec3_json(s.goal);
  doc["instruction"] = s.instruction;
  doc["delta"] = s.delta;
  doc["camera"] = {{"fx", s.camera.fx}, {"fy", s.camera.fy},       {"cx", s.camera.cx},
                   {"cy", s.camera.cy}, {"width", s.camera.width}, {"height", s.camera.height}};
  doc["camera_extrinsics"] = pose_json(s.camera_extrinsics);
  doc["lidar_extrinsics"] = pose_json(s.lidar_extrinsics);
  doc["target_radius"] = s.target_radius;
  doc["seed"] = s.seed;
  return doc.dump(2) + "\n";
}

Scenario load_scenario(const std::filesystem::path& path) { return parse_scenario(read_file(path)); }

void save_scenario(const Scenario& scenario, const std::filesystem::path& path) {
  write_file(path, scenario_to_json(scenario));
}

std::vector<NamedScenario> load_scenarios(const std::filesystem::path& path) {
  std::error_code ec;
  std::vector<std::filesystem::path> files;
  if (std::filesystem::is_directory(path, ec)) {
    for (const auto& entry : std::filesystem::directory_iterator(path))
      if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
  } else {
    files.push_back(path);
  }
  std::vector<NamedScenario> out;
  for (const auto& f : files) out.push_back({f.stem().string(), load_scenario(f)});
  return out;
}

// ---------------------------------------------------------------------------
// Configuration

namespace {

// Visits every configurable field with its JSON pointer.
template <class F>
void visit_config(NavigatorConfig& c, F&& f) {
  auto& w = c.planner.weights;
  f("/weights/lambda_s", w.lambda_s);
  f("/weights/lambda_c", w.lambda_c);
  f("/weights/lambda_d", w.lambda_d);
  f("/weights/d_safe", w.d_safe);
  f("/weights/v_max", w.v_max);
  f("/weights/a_max", w.a_max);
  auto& o = c.planner.options;
  f("/optimizer/max_iterations", o.max_iterations);
  f("/optimizer/gradient_tolerance", o.gradient_tolerance);
  f("/optimizer/initial_step", o.initial_step);
  f("/optimizer/step_shrink", o.step_shrink);
  f("/optimizer/armijo_c", o.armijo_c);
  f("/optimizer/max_backtracks", o.max_backtracks);
  auto& p = c.planner;
  f("/planner/knot_interval", p.knot_interval);
  f("/planner/cruise_speed", p.cruise_speed);
  f("/planner/ramp_accel", p.ramp_accel);
  f("/planner/max_attempts", p.max_attempts);
  f("/planner/slowdown_factor", p.slowdown_factor);
  f("/planner/guide_clearance", p.guide_clearance);
  f("/planner/guide_trigger", p.guide_trigger);
  f("/planner/guide_node_budget", p.guide_node_budget);
  f("/planner/max_control_points", p.max_control_points);
  f("/planner/optimize", p.optimize);
  f("/grounding/period", c.grounding.period);
  f("/grounding/pixel_noise_sigma", c.grounding.pixel_noise_sigma);
  f("/grounding/latency_model", c.grounding.latency_model);
  f("/grounding/reacquire_period", c.reacquire_period);
  f("/grounding/regrounding", c.regrounding);
  f("/grounding/use_depth", c.use_depth);
  f("/grounding/fixed_range_guess", c.fixed_range_guess);
  f("/grounding/goal_clearance", c.goal_clearance);
  f("/grounding/goal_jump_gate", c.goal_jump_gate);
  f("/grounding/edge_radius", c.edge_radius);
  f("/grounding/edge_tolerance", c.edge_tolerance);
  f("/map/resolution", c.map.resolution);
  f("/map/window_x", c.map.window_voxels.x());
  f("/map/window_y", c.map.window_voxels.y());
  f("/map/window_z", c.map.window_voxels.z());
  f("/map/truncation_radius", c.map.truncation_radius);
  f("/map/slide_threshold", c.map_slide_threshold);
  f("/sensors/camera_range", c.camera_range);
  f("/sensors/depth_noise_eta", c.depth_noise_eta);
  f("/sensors/lidar_azimuth", c.lidar_azimuth);
  f("/sensors/lidar_elevation", c.lidar_elevation);
  f("/sensors/lidar_range", c.lidar_range);
  f("/sensors/lidar_period", c.lidar_period);
  f("/episode/tick", c.tick);
  f("/episode/time_limit", c.time_limit);
  f("/episode/grounding_timeout", c.grounding_timeout);
  f("/episode/arrival_radius", c.arrival_radius);
  f("/episode/collision_radius", c.collision_radius);
}

json config_json(const NavigatorConfig& config) {
  NavigatorConfig c = config;
  json j;
  visit_config(c, [&](const char* ptr, auto& value) { j[json::json_pointer(ptr)] = value; });
  return j;
}

}  // namespace

std::string config_to_json(const NavigatorConfig& config) { return config_json(config).dump(2) + "\n"; }

NavigatorConfig config_from_json(std::string_view json_text) {
  json doc = json::parse(json_text, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) throw Error(ErrorCode::SchemaError, "<root>: expected a JSON object");
  NavigatorConfig c;
  std::vector<std::string> known;
  visit_config(c, [&](const char* ptr, auto& value) {
    known.emplace_back(ptr);
    const json::json_pointer jp(ptr);
    if (!doc.contains(jp)) return;
    const json& v = doc[jp];
    using T = std::decay_t<decltype(value)>;
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) schema_error(ptr, "expected a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) schema_error(ptr, "expected an integer");
    } else {
      if (!v.is_number()) schema_error(ptr, "expected a number");
    }
    value = v.get<T>();
  });
  const json flat = doc.flatten();
  for (const auto& [key, _] : flat.items())
    if (std::find(known.begin(), known.end(), key) == known.end()) schema_error(key, "unknown configuration key");
  try {
    c.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::SchemaError, std::string("<config>: ") + e.what());
  }
  return c;
}

std::string config_fingerprint(const NavigatorConfig& config) {
  const std::string text = config_json(config).dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << h;
  return ss.str();
}

// ---------------------------------------------------------------------------
// Batch evaluation

TrialRecord summarize(const EpisodeResult& r, std::uint64_t seed) {
  return {seed, r.success, r.ne, r.time, r.flight_time, r.collided, r.groundings, r.replans, r.reason};
}

MetricsReport aggregate(std::vector<ScenarioRow> rows, int trials, std::uint64_t base_seed, std::string fingerprint) {
  MetricsReport m;
  m.trials_per_scenario = trials;
  m.base_seed = base_seed;
  m.config_fingerprint = std::move(fingerprint);
  double ne_sum = 0.0, time_sum = 0.0;
  for (auto& row : rows) {
    double row_ne = 0.0, row_time = 0.0;
    row.successes = 0;
    for (const auto& t : row.trials) {
      row_ne += t.ne;
      if (t.success) {
        ++row.successes;
        row_time += t.time;
      }
      if (t.collided) ++m.collisions;
    }
    const int n = static_cast<int>(row.trials.size());
    row.sr = n > 0 ? 100.0 * row.successes / n : 0.0;
    row.ne_mean = n > 0 ? row_ne / n : 0.0;
    row.time_mean = row.successes > 0 ? row_time / row.successes : std::nan("");
    m.episodes += n;
    m.successes += row.successes;
    ne_sum += row_ne;
    time_sum += row_time;
  }
  m.sr = m.episodes > 0 ? 100.0 * m.successes / m.episodes : 0.0;
  m.ne_mean = m.episodes > 0 ? ne_sum / m.episodes : 0.0;
  m.time_mean = m.successes > 0 ? time_sum / m.successes : std::nan("");
  m.scenarios = std::move(rows);
  return m;
}

MetricsReport batch_eval(const std::vector<NamedScenario>& scenarios, const NavigatorConfig& config, int trials,
                         std::uint64_t base_seed, int threads, const GrounderFactory& grounders) {
  if (scenarios.empty()) throw Error(ErrorCode::EmptyInput, "no scenarios to evaluate");
  if (trials < 1) throw Error(ErrorCode::InvalidArgument, "trials must be >= 1");
  config.validate();

  const std::size_t total = scenarios.size() * static_cast<std::size_t>(trials);
  std::vector<TrialRecord> records(total);
  std::vector<std::string> errors(total);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t k = next++; k < total; k = next++) {
      const std::size_t s = k / static_cast<std::size_t>(trials);
      const std::uint64_t seed = base_seed + k % static_cast<std::size_t>(trials);
      try {
        const Scenario& sc = scenarios[s].scenario;
        auto grounder = grounders ? grounders(sc, seed) : make_mock_grounder(sc, config, seed);
        records[k] = summarize(run_episode(sc, config, *grounder, seed), seed);
      } catch (const std::exception& e) {
        errors[k] = e.what();
      }
    }
  };
  int n_threads = threads > 0 ? threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  n_threads = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(n_threads), total));
  if (n_threads <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (std::size_t k = 0; k < total; ++k)
    if (!errors[k].empty())
      throw Error(ErrorCode::InvalidArgument, scenarios[k / trials].name + ": " + errors[k]);

  std::vector<ScenarioRow> rows;
  for (std::size_t s = 0; s < scenarios.size(); ++s) {
    ScenarioRow row;
    row.name = scenarios[s].name;
    row.trials.assign(records.begin() + static_cast<std::ptrdiff_t>(s * trials),
                      records.begin() + static_cast<std::ptrdiff_t>((s + 1) * trials));
    rows.push_back(std::move(row));
  }
  return aggregate(std::move(rows), trials, base_seed, config_fingerprint(config));
}

namespace {

json trial_json(const TrialRecord& t) {
  return {{"seed", t.seed},         {"success", t.success},       {"ne", t.ne},
          {"time", t.time},         {"flight_time", t.flight_time}, {"collided", t.collided},
          {"groundings", t.groundings}, {"replans", t.replans},   {"reason", to_string(t.reason)}};
}

json maybe_number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

std::string report_to_json(const MetricsReport& m, const NavigatorConfig& config) {
  json rows = json::array();
  for (const auto& r : m.scenarios) {
    json trials = json::array();
    for (const auto& t : r.trials) trials.push_back(trial_json(t));
    rows.push_back({{"name", r.name},
                    {"successes", r.successes},
                    {"sr", r.sr},
                    {"ne_mean", r.ne_mean},
                    {"time_mean", maybe_number(r.time_mean)},
                    {"trials", trials}});
  }
  json doc;
  doc["sr"] = m.sr;
  doc["ne_mean"] = m.ne_mean;
  doc["time_mean"] = maybe_number(m.time_mean);
  doc["episodes"] = m.episodes;
  doc["successes"] = m.successes;
  doc["collisions"] = m.collisions;
  doc["trials_per_scenario"] = m.trials_per_scenario;
  doc["base_seed"] = m.base_seed;
  doc["config_fingerprint"] = m.config_fingerprint;
  doc["config"] = config_json(config);
  doc["scenarios"] = rows;
  return doc.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Export

std::size_t export_trajectory(const BSplineTrajectory& traj, double sample_rate, const std::filesystem::path& path) {
  if (!(sample_rate > 0.0) || !std::isfinite(sample_rate))
    throw Error(ErrorCode::InvalidArgument, "sample_rate must be > 0");
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  const BSplineTrajectory vel = traj.derivative(1);
  const double step = 1.0 / sample_rate;
  // Count of samples t0 + i*step that stay within the domain (with slack for rounding).
  const std::size_t rows = static_cast<std::size_t>(std::floor(traj.duration() / step + 1e-9)) + 1;
  out << std::setprecision(17) << "t,x,y,z,vx,vy,vz\n";
  for (std::size_t i = 0; i < rows; ++i) {
    const double t = std::min(traj.start_time() + static_cast<double>(i) * step, traj.end_time());
    const Eigen::Vector3d p = traj.evaluate(t);
    const Eigen::Vector3d v = vel.evaluate(t);
    out << t << ',' << p.x() << ',' << p.y() << ',' << p.z() << ',' << v.x() << ',' << v.y() << ',' << v.z() << '\n';
  }
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
  return rows;
}

// ---------------------------------------------------------------------------
// Gradient audit

double GradientAudit::max_rel() const {
  return std::max({max_rel_smoothness, max_rel_collision, max_rel_feasibility, max_rel_total});
}

namespace {

OccupancyMap random_map(std::mt19937_64& rng) {
  MapConfig cfg;
  cfg.window_voxels = {40, 40, 40};
  OccupancyMap map(cfg, Eigen::Vector3d::Constant(4.0));
  std::uniform_real_distribution<double> pos(0.5, 7.5), ext(0.2, 1.2);
  std::uniform_int_distribution<int> count(3, 8);
  PointCloud cloud{{}, Frame::World};
  for (int b = count(rng); b > 0; --b) {
    const Eigen::Vector3d c(pos(rng), pos(rng), pos(rng));
    const Eigen::Vector3d half(ext(rng), ext(rng), ext(rng));
    for (double x = c.x() - half.x(); x <= c.x() + half.x(); x += cfg.resolution)
      for (double y = c.y() - half.y(); y <= c.y() + half.y(); y += cfg.resolution)
        for (double z = c.z() - half.z(); z <= c.z() + half.z(); z += cfg.resolution)
          cloud.points.emplace_back(x, y, z);
  }
  map.insert_cloud(cloud);
  map.recompute_distance_field();
  return map;
}

BSplineTrajectory random_trajectory(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> count(8, 24);
  std::uniform_real_distribution<double> start(1.5, 6.5), stepd(-0.9, 0.9), dtd(0.15, 0.5);
  const int n = count(rng);
  std::vector<Eigen::Vector3d> pts;
  Eigen::Vector3d p(start(rng), start(rng), start(rng));
  for (int i = 0; i < n; ++i) {
    pts.push_back(p);
    p += Eigen::Vector3d(stepd(rng), stepd(rng), stepd(rng));
    p = p.cwiseMax(Eigen::Vector3d::Constant(1.0)).cwiseMin(Eigen::Vector3d::Constant(7.0));
  }
  return BSplineTrajectory(std::move(pts), dtd(rng));
}

// Whether the collision term is non-differentiable near `p` along `axis`:
// the d = d_safe kink, or a face of the trilinear interpolation cells.
bool near_kink(const OccupancyMap& map, const Eigen::Vector3d& p, int axis, double d_safe) {
  const double res = map.resolution();
  if (std::abs(map.query_distance(p).distance - d_safe) < res / 10.0) return true;
  const double u = p[axis] / res - 0.5;
  const double frac = u - std::floor(u);
  return frac < 1e-3 || frac > 1.0 - 1e-3;
}

double rel_error(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric) {
  if (analytic.size() == 0) return 0.0;
  const double scale = std::max({numeric.lpNorm<Eigen::Infinity>(), analytic.lpNorm<Eigen::Infinity>(), 1e-6});
  return (analytic - numeric).lpNorm<Eigen::Infinity>() / scale;
}

}  // namespace

GradientAudit gradient_audit(int instances, std::uint64_t seed, const CostWeights& weights) {
  if (instances < 1) throw Error(ErrorCode::InvalidArgument, "instances must be >= 1");
  weights.validate();
  std::mt19937_64 rng(seed);
  GradientAudit audit;
  for (int inst = 0; inst < instances; ++inst) {
    const OccupancyMap map = random_map(rng);
    const BSplineTrajectory traj = random_trajectory(rng);
    const FreeRange range = free_range(traj);

    const TermResult js = cost_smoothness(traj);
    const TermResult jc = cost_collision(traj, map, weights.d_safe);
    const TermResult jd = cost_feasibility(traj, weights.v_max, weights.a_max);
    const CostReport total = total_cost(traj, weights, map);

    std::vector<double> a_s, a_c, a_d, a_t, n_s, n_c, n_d, n_t;
    for (std::size_t i = range.first; i < range.last; ++i) {
      for (int axis = 0; axis < 3; ++axis) {
        const Eigen::Vector3d& p = traj.control_point(i);
        if (near_kink(map, p, axis, weights.d_safe)) {
          ++audit.excluded;
          continue;
        }
        ++audit.coordinates;
        const double h = 1e-6 * std::max(1.0, p.norm());
        auto shifted = [&](double delta) {
          std::vector<Eigen::Vector3d> pts = traj.control_points();
          pts[i][axis] += delta;
          return traj.with_control_points(std::move(pts));
        };
        const BSplineTrajectory plus = shifted(h), minus = shifted(-h);
        auto diff = [&](double fp, double fm) { return (fp - fm) / (2.0 * h); };
        n_s.push_back(diff(cost_smoothness(plus).value, cost_smoothness(minus).value));
        n_c.push_back(diff(cost_collision(plus, map, weights.d_safe).value,
                           cost_collision(minus, map, weights.d_safe).value));
        n_d.push_back(diff(cost_feasibility(plus, weights.v_max, weights.a_max).value,
                           cost_feasibility(minus, weights.v_max, weights.a_max).value));
        n_t.push_back(diff(total_cost(plus, weights, map).total, total_cost(minus, weights, map).total));
        a_s.push_back(js.gradient[i][axis]);
        a_c.push_back(jc.gradient[i][axis]);
        a_d.push_back(jd.gradient[i][axis]);
        a_t.push_back(total.gradient[static_cast<Eigen::Index>(3 * (i - range.first)) + axis]);
      }
    }
    auto as_vec = [](const std::vector<double>& v) {
      return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())).eval();
    };
    audit.max_rel_smoothness = std::max(audit.max_rel_smoothness, rel_error(as_vec(a_s), as_vec(n_s)));
    audit.max_rel_collision = std::max(audit.max_rel_collision, rel_error(as_vec(a_c), as_vec(n_c)));
    audit.max_rel_feasibility = std::max(audit.max_rel_feasibility, rel_error(as_vec(a_d), as_vec(n_d)));
    audit.max_rel_total = std::max(audit.max_rel_total, rel_error(as_vec(a_t), as_vec(n_t)));
    ++audit.instances;
  }
  return audit;
}

}  // namespace fly0
