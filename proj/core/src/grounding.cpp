#include "fly0/grounding.hpp"
#include "fly0/random.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <random>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

#include "fly0/error.hpp"

namespace fly0 {

using nlohmann::json;

void GroundingConfig::validate() const {
  if (!(period > 0.0)) throw Error(ErrorCode::InvalidArgument, "grounding period must be > 0");
  if (pixel_noise_sigma < 0.0 || latency_model < 0.0)
    throw Error(ErrorCode::InvalidArgument, "noise sigma and latency must be >= 0");
}

std::string build_prompt(std::string_view instruction, int width, int height) {
  if (instruction.empty()) throw Error(ErrorCode::EmptyInstruction, "instruction is empty");
  std::ostringstream p;
  p << "You are the visual grounding module of an aerial robot.\n"
    << "The attached image is " << width << "x" << height
    << " pixels; x grows to the right and y grows downward from the top-left corner.\n"
    << "Instruction: \"" << instruction << "\"\n"
    << "First describe the overall scene to yourself, then list the objects that could match the "
       "instruction, then choose the single most probable destination.\n"
    << "Reply with exactly one JSON object and nothing else:\n"
    << "  {\"found\": true, \"x\": <number in [0, " << width << "]>, \"y\": <number in [0, " << height << "]>}\n"
    << "if the destination is visible, giving the pixel at its center, or\n"
    << "  {\"found\": false}\n"
    << "if the destination is not visible in this image.\n";
  return p.str();
}

namespace {

// Returns the index one past the '}' closing the object opened at `open`,
// or npos. String literals and escapes are respected.
std::size_t match_object(std::string_view s, std::size_t open) {
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = open; i < s.size(); ++i) {
    const char c = s[i];
    if (in_string) {
      if (c == '\\') ++i;
      else if (c == '"') in_string = false;
      continue;
    }
    if (c == '"') in_string = true;
    else if (c == '{') ++depth;
    else if (c == '}' && --depth == 0) return i + 1;
  }
  return std::string_view::npos;
}

std::optional<GroundingResult> from_object(const json& obj, int width, int height, int nesting);

std::optional<GroundingResult> scan_text(std::string_view raw, int width, int height, int nesting) {
  if (nesting > 4) return std::nullopt;
  for (std::size_t open = raw.find('{'); open != std::string_view::npos; open = raw.find('{', open + 1)) {
    const std::size_t close = match_object(raw, open);
    if (close == std::string_view::npos) continue;
    const json parsed = json::parse(raw.substr(open, close - open), nullptr, false);
    if (parsed.is_discarded() || !parsed.is_object()) continue;
    if (auto r = from_object(parsed, width, height, nesting)) return r;
  }
  return std::nullopt;
}

std::optional<GroundingResult> from_object(const json& obj, int width, int height, int nesting) {
  if (obj.is_object()) {
    const auto found = obj.find("found");
    if (found != obj.end() && found->is_boolean()) {
      if (!found->get<bool>()) return GroundingResult::absent();
      const auto x = obj.find("x");
      const auto y = obj.find("y");
      if (x == obj.end() || y == obj.end() || !x->is_number() || !y->is_number())
        throw Error(ErrorCode::ParseError, "found=true without numeric x/y");
      const PixelTarget px{x->get<double>(), y->get<double>()};
      if (!(px.x >= 0.0 && px.x <= width && px.y >= 0.0 && px.y <= height))
        throw Error(ErrorCode::OutOfBounds, "(" + std::to_string(px.x) + ", " + std::to_string(px.y) +
                                                ") outside " + std::to_string(width) + "x" +
                                                std::to_string(height));
      return GroundingResult::at(px);
    }
  }
  // Envelope: look through nested values, including JSON embedded in strings.
  if (obj.is_object() || obj.is_array()) {
    for (const auto& v : obj) {
      if (auto r = from_object(v, width, height, nesting + 1)) return r;
    }
  } else if (obj.is_string()) {
    return scan_text(obj.get_ref<const std::string&>(), width, height, nesting + 1);
  }
  return std::nullopt;
}

}  // namespace

GroundingResult parse_response(std::string_view raw, int width, int height) {
  if (auto r = scan_text(raw, width, height, 0)) return *r;
  throw Error(ErrorCode::ParseError, "no response object with a \"found\" field");
}

MockGrounder::MockGrounder(World world, Eigen::Vector3d goal, CameraIntrinsics intrinsics, double pixel_noise_sigma,
                           std::uint64_t seed, double simulated_latency)
    : world_(std::move(world)),
      goal_(std::move(goal)),
      intrinsics_(intrinsics),
      sigma_(pixel_noise_sigma),
      seed_(seed),
      latency_(simulated_latency) {
  intrinsics_.validate();
}

GroundingResult MockGrounder::ground(const Observation& observation, std::string_view /*instruction*/) {
  const Pose& cam = observation.camera_pose;
  const Eigen::Vector3d in_camera = pose_inverse(cam).apply(goal_);
  if (!(in_camera.z() > 0.0)) return GroundingResult::absent(latency_);
  const PixelTarget exact = project(Point3(in_camera, Frame::Camera), intrinsics_);
  if (!intrinsics_.contains(exact)) return GroundingResult::absent(latency_);

  const Eigen::Vector3d origin = cam.translation();
  if (auto hit = world_.raycast(origin, goal_ - origin, 1.0); hit && hit->t < 0.95)
    return GroundingResult::absent(latency_);

  PixelTarget px = exact;
  if (sigma_ > 0.0) {
    std::mt19937_64 rng(stream_seed(seed_, observation.query_index));
    std::normal_distribution<double> gauss(0.0, sigma_);
    px.x += gauss(rng);
    px.y += gauss(rng);
  }
  px.x = std::clamp(px.x, 0.0, static_cast<double>(intrinsics_.width));
  px.y = std::clamp(px.y, 0.0, static_cast<double>(intrinsics_.height));
  return GroundingResult::at(px, latency_);
}

RemoteConfig RemoteConfig::from_env() { return from_env(RemoteConfig{}); }

RemoteConfig RemoteConfig::from_env(RemoteConfig base) {
  if (base.url.empty())
    if (const char* v = std::getenv("FLY0_GROUNDER_URL")) base.url = v;
  if (base.token.empty())
    if (const char* v = std::getenv("FLY0_GROUNDER_TOKEN")) base.token = v;
  if (const char* v = std::getenv("FLY0_GROUNDER_TIMEOUT")) base.timeout_s = std::atof(v);
  return base;
}

RemoteGrounder::RemoteGrounder(RemoteConfig config) : config_(std::move(config)) {
  const std::string& url = config_.url;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error(ErrorCode::InvalidArgument, "grounder URL needs a scheme");
  if (url.compare(0, scheme_end, "http") != 0)
    throw Error(ErrorCode::InvalidArgument, "only http:// grounder endpoints are supported");
  const auto path_start = url.find('/', scheme_end + 3);
  scheme_host_ = url.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : url.substr(path_start);
  if (!(config_.timeout_s > 0.0)) throw Error(ErrorCode::InvalidArgument, "timeout must be > 0");
}

std::string RemoteGrounder::request_body(const Observation& observation, std::string_view instruction) {
  if (!observation.image || !observation.image->valid())
    throw Error(ErrorCode::InvalidArgument, "remote grounding needs an RGB image");
  const Image& img = *observation.image;
  const auto png = encode_png(img);
  json body = {
      {"prompt", build_prompt(instruction, img.width, img.height)},
      {"image", base64_encode(png)},
      {"width", img.width},
      {"height", img.height},
  };
  return body.dump();
}

GroundingResult RemoteGrounder::ground(const Observation& observation, std::string_view instruction) {
  const std::string body = request_body(observation, instruction);
  const auto t0 = std::chrono::steady_clock::now();

  httplib::Client client(scheme_host_);
  const auto secs = static_cast<time_t>(config_.timeout_s);
  const auto usecs = static_cast<time_t>((config_.timeout_s - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  httplib::Headers headers;
  if (!config_.token.empty()) headers.emplace("Authorization", "Bearer " + config_.token);

  auto res = client.Post(path_, headers, body, "application/json");
  if (!res) throw Error(ErrorCode::GroundingUnavailable, "transport error: " + httplib::to_string(res.error()));
  if (res->status < 200 || res->status >= 300)
    throw Error(ErrorCode::GroundingUnavailable, "HTTP status " + std::to_string(res->status));

  GroundingResult r = parse_response(res->body, observation.image->width, observation.image->height);
  r.latency = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

AsyncGrounder::AsyncGrounder(Grounder& grounder, std::string instruction)
    : grounder_(grounder), instruction_(std::move(instruction)), worker_([this] { run(); }) {}

AsyncGrounder::~AsyncGrounder() {
  {
    std::lock_guard lock(mutex_);
    stop_ = true;
  }
  cv_.notify_all();
  worker_.join();
}

void AsyncGrounder::request(Observation observation) {
  {
    std::lock_guard lock(mutex_);
    pending_ = std::move(observation);
  }
  cv_.notify_one();
}

bool AsyncGrounder::busy() const {
  std::lock_guard lock(mutex_);
  return working_ || pending_.has_value();
}

void AsyncGrounder::run() {
  while (true) {
    Observation obs;
    {
      std::unique_lock lock(mutex_);
      cv_.wait(lock, [this] { return stop_ || pending_.has_value(); });
      if (stop_) return;
      obs = std::move(*pending_);
      pending_.reset();
      working_ = true;
    }
    Reply reply;
    reply.query_index = obs.query_index;
    try {
      reply.result = grounder_.ground(obs, instruction_);
    } catch (const std::exception& e) {
      reply.error = e.what();
    }
    replies_.post(std::move(reply));
    {
      std::lock_guard lock(mutex_);
      working_ = false;
    }
  }
}

}  // namespace fly0
