#pragma once

#include <condition_variable>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>

#include <Eigen/Core>

#include "fly0/geometry.hpp"
#include "fly0/image.hpp"
#include "fly0/simulator.hpp"

namespace fly0 {

enum class GroundingStatus { Found, Absent };

struct GroundingResult {
  GroundingStatus status{GroundingStatus::Absent};
  std::optional<PixelTarget> pixel;  // engaged iff Found
  double latency{0.0};               // seconds, measured or simulated

  bool found() const { return status == GroundingStatus::Found; }
  static GroundingResult absent(double latency = 0.0) { return {GroundingStatus::Absent, std::nullopt, latency}; }
  static GroundingResult at(PixelTarget px, double latency = 0.0) { return {GroundingStatus::Found, px, latency}; }
};

struct GroundingConfig {
  double period{2.0};             // re-grounding interval, seconds (0.5 Hz)
  double pixel_noise_sigma{0.0};  // mock only
  double latency_model{0.0};      // simulated seconds per query

  void validate() const;
};

/// What a grounder is shown for one query. `camera_pose` and `query_index`
/// are simulation metadata used by the mock oracle; model-backed grounders
/// only look at the image.
struct Observation {
  std::shared_ptr<const Image> image;
  int width{0};
  int height{0};
  Pose camera_pose;  // camera-to-world
  std::uint64_t query_index{0};
};

/// Instruction + current view -> pixel target or absence.
class Grounder {
 public:
  virtual ~Grounder() = default;
  virtual GroundingResult ground(const Observation& observation, std::string_view instruction) = 0;
  /// Whether callers must render an RGB image into the observation.
  virtual bool needs_image() const { return false; }
};

/// Deterministic prompt asking for {"found", "x", "y"} with an explicit
/// absence case. Throws EmptyInstruction.
std::string build_prompt(std::string_view instruction, int width, int height);

/// Extracts the first object carrying a "found" field from free-form text
/// (code fences, prose, nested envelopes with the object inside a string).
/// Throws ParseError when none exists and OutOfBounds for coordinates
/// outside [0, width] x [0, height].
GroundingResult parse_response(std::string_view raw, int width, int height);

/// Simulation oracle: projects the ground-truth goal through the current
/// camera pose, adds seeded Gaussian pixel noise and clamps to the image.
/// Absent when the goal is behind the camera, outside the frame, or a ray to
/// it is blocked before 95% of the distance.
class MockGrounder final : public Grounder {
 public:
  MockGrounder(World world, Eigen::Vector3d goal, CameraIntrinsics intrinsics, double pixel_noise_sigma,
               std::uint64_t seed, double simulated_latency = 0.0);

  GroundingResult ground(const Observation& observation, std::string_view instruction) override;

 private:
  World world_;
  Eigen::Vector3d goal_;
  CameraIntrinsics intrinsics_;
  double sigma_;
  std::uint64_t seed_;
  double latency_;
};

struct RemoteConfig {
  std::string url;    // http://host[:port]/path
  std::string token;  // sent as "Authorization: Bearer <token>" when non-empty
  double timeout_s{30.0};

  /// Fills unset fields from FLY0_GROUNDER_URL / FLY0_GROUNDER_TOKEN /
  /// FLY0_GROUNDER_TIMEOUT.
  static RemoteConfig from_env(RemoteConfig base);
  static RemoteConfig from_env();
};

/// POSTs {"prompt", "image" (base64 PNG), "width", "height"} as JSON and
/// parses the reply with parse_response. Transport failures and non-2xx
/// replies raise GroundingUnavailable.
class RemoteGrounder final : public Grounder {
 public:
  explicit RemoteGrounder(RemoteConfig config);

  GroundingResult ground(const Observation& observation, std::string_view instruction) override;
  bool needs_image() const override { return true; }

  /// The request body that ground() would send.
  static std::string request_body(const Observation& observation, std::string_view instruction);

 private:
  RemoteConfig config_;
  std::string scheme_host_;
  std::string path_;
};

/// Single-slot mailbox: a post replaces any unread value (latest wins).
template <class T>
class LatestMailbox {
 public:
  void post(T value) {
    std::lock_guard lock(mutex_);
    slot_ = std::move(value);
  }
  std::optional<T> take() {
    std::lock_guard lock(mutex_);
    std::optional<T> out = std::move(slot_);
    slot_.reset();
    return out;
  }
  bool has_value() const {
    std::lock_guard lock(mutex_);
    return slot_.has_value();
  }

 private:
  mutable std::mutex mutex_;
  std::optional<T> slot_;
};

/// Runs a grounder on a dedicated worker thread. request() hands over the
/// newest observation (an older pending one is dropped); results land in a
/// latest-wins mailbox that the control loop polls.
class AsyncGrounder {
 public:
  struct Reply {
    std::uint64_t query_index{0};
    GroundingResult result;
    std::string error;  // non-empty when the grounder threw
  };

  explicit AsyncGrounder(Grounder& grounder, std::string instruction);
  ~AsyncGrounder();
  AsyncGrounder(const AsyncGrounder&) = delete;
  AsyncGrounder& operator=(const AsyncGrounder&) = delete;

  void request(Observation observation);
  std::optional<Reply> poll() { return replies_.take(); }
  bool busy() const;

 private:
  void run();

  Grounder& grounder_;
  std::string instruction_;
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::optional<Observation> pending_;
  bool working_{false};
  bool stop_{false};
  LatestMailbox<Reply> replies_;
  std::thread worker_;
};

}  // namespace fly0
