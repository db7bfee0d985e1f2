#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "fly0/bspline.hpp"
#include "fly0/pipeline.hpp"
#include "fly0/scenario.hpp"

namespace fly0 {

// Scenario documents --------------------------------------------------------

Scenario parse_scenario(std::string_view json_text);
std::string scenario_to_json(const Scenario& scenario);

/// Errors: IoError (unreadable), SchemaError (message carries the field path).
Scenario load_scenario(const std::filesystem::path& path);
void save_scenario(const Scenario& scenario, const std::filesystem::path& path);

struct NamedScenario {
  std::string name;
  Scenario scenario;
};

/// A directory (every *.json inside, sorted by name) or a single file.
std::vector<NamedScenario> load_scenarios(const std::filesystem::path& path);

// Configuration -------------------------------------------------------------

std::string config_to_json(const NavigatorConfig& config);
/// Overrides defaults with the keys present; unknown keys are a SchemaError.
NavigatorConfig config_from_json(std::string_view json_text);
/// FNV-1a over the canonical configuration JSON, as 16 hex digits.
std::string config_fingerprint(const NavigatorConfig& config);

// Batch evaluation ----------------------------------------------------------

struct TrialRecord {
  std::uint64_t seed{0};
  bool success{false};
  double ne{0.0};
  double time{0.0};
  double flight_time{0.0};
  bool collided{false};
  int groundings{0};
  int replans{0};
  FailureReason reason{FailureReason::None};
};

TrialRecord summarize(const EpisodeResult& result, std::uint64_t seed);

struct ScenarioRow {
  std::string name;
  int successes{0};
  double sr{0.0};
  double ne_mean{0.0};
  double time_mean{0.0};  // over successful trials; NaN when there are none
  std::vector<TrialRecord> trials;
};

struct MetricsReport {
  double sr{0.0};         // percent of successful episodes
  double ne_mean{0.0};    // over all episodes
  double time_mean{0.0};  // over successful episodes; NaN when there are none
  int episodes{0};
  int successes{0};
  int collisions{0};
  int trials_per_scenario{20};
  std::uint64_t base_seed{0};
  std::string config_fingerprint;
  std::vector<ScenarioRow> scenarios;
};

/// Trial i of every scenario runs with seed base_seed + i. `threads` <= 0
/// uses the hardware concurrency; the report does not depend on it. Without
/// a factory every episode uses the mock grounder.
MetricsReport batch_eval(const std::vector<NamedScenario>& scenarios, const NavigatorConfig& config, int trials,
                         std::uint64_t base_seed, int threads = 1, const GrounderFactory& grounders = {});

/// Headline figures recomputed from per-trial rows.
MetricsReport aggregate(std::vector<ScenarioRow> rows, int trials, std::uint64_t base_seed, std::string fingerprint);

std::string report_to_json(const MetricsReport& report, const NavigatorConfig& config);

// Export --------------------------------------------------------------------

/// CSV t,x,y,z,vx,vy,vz at uniform times covering the domain. Returns rows.
std::size_t export_trajectory(const BSplineTrajectory& traj, double sample_rate, const std::filesystem::path& path);

// Gradient audit ------------------------------------------------------------

struct GradientAudit {
  int instances{0};
  long coordinates{0};  // coordinates compared
  long excluded{0};     // skipped next to non-differentiable points of the field
  double max_rel_smoothness{0.0};
  double max_rel_collision{0.0};
  double max_rel_feasibility{0.0};
  double max_rel_total{0.0};
  double max_rel() const;
};

/// Analytic cost gradients against central differences on random cluttered
/// maps and random trajectories.
GradientAudit gradient_audit(int instances, std::uint64_t seed, const CostWeights& weights = {});

}  // namespace fly0
