#pragma once

// Uniform detector abstraction: the local cascade engine and a generic JSON
// over HTTP client for hosted face-detection services.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <memory>
#include <semaphore>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "facecloak/cascade_detector.hpp"
#include "facecloak/errors.hpp"
#include "facecloak/image.hpp"
#include "facecloak/png_io.hpp"

namespace facecloak {

class Detector {
 public:
  virtual ~Detector() = default;
  /// Boxes lie inside the image; the list may be empty.
  virtual std::vector<Detection> detect(const RasterImage& img, const DetectParams& params) = 0;
};

/// Thin adapter over detect_multiscale.
class LocalDetector final : public Detector {
 public:
  explicit LocalDetector(const CascadeModel& model) : model_(&model) {}
  std::vector<Detection> detect(const RasterImage& img, const DetectParams& params) override {
    return detect_multiscale(*model_, img, params);
  }

 private:
  const CascadeModel* model_;
};

/// Where to send images and where the boxes live in the reply.
///
/// The request is `{"<image_field>": "<base64 PNG>"}` posted to `endpoint`.
/// `faces_pointer` is a JSON pointer to the array of faces in the reply; each
/// face carries numeric `x`/`y`/`w`/`h` fields (names configurable) and an
/// optional confidence. The API key is read from the environment variable
/// named by `api_key_env`, never from the file.
struct RemoteDetectorConfig {
  std::string endpoint;
  std::string api_key_env;
  std::string auth_header = "Authorization";
  std::string auth_prefix = "Bearer ";
  std::string image_field = "image";
  std::string faces_pointer = "/faces";
  std::string field_x = "x";
  std::string field_y = "y";
  std::string field_w = "w";
  std::string field_h = "h";
  std::string confidence_field = "confidence";
  double timeout_seconds = 30.0;
  int max_retries = 2;
  double backoff_base_seconds = 1.0;
  std::size_t max_image_bytes = 4u << 20;
  int max_in_flight = 2;

  void validate() const {
    if (endpoint.empty()) throw InvalidArgumentError("remote detector endpoint is empty");
    if (!(timeout_seconds > 0.0)) throw InvalidArgumentError("timeout must be > 0");
    if (max_retries < 0) throw InvalidArgumentError("max_retries must be >= 0");
    if (backoff_base_seconds < 0.0) throw InvalidArgumentError("backoff base must be >= 0");
    if (max_in_flight < 1) throw InvalidArgumentError("max_in_flight must be >= 1");
    if (max_image_bytes == 0) throw InvalidArgumentError("max_image_bytes must be > 0");
  }

  /// Worst-case wall time of one remote_detect call.
  double time_budget_seconds() const {
    double backoff = 0.0;
    for (int i = 0; i < max_retries; ++i) backoff += backoff_base_seconds * std::ldexp(1.0, i);
    return timeout_seconds * (max_retries + 1) + backoff;
  }

  static RemoteDetectorConfig from_json(const nlohmann::json& j) {
    RemoteDetectorConfig c;
    if (!j.is_object()) throw InvalidArgumentError("provider config must be a JSON object");
    if (j.contains("api_key")) throw InvalidArgumentError("API keys go in an environment variable (api_key_env)");
    const auto get = [&](const char* key, auto& dst) {
      if (auto it = j.find(key); it != j.end()) it->get_to(dst);
    };
    try {
      get("endpoint", c.endpoint);
      get("api_key_env", c.api_key_env);
      get("auth_header", c.auth_header);
      get("auth_prefix", c.auth_prefix);
      get("image_field", c.image_field);
      get("faces_pointer", c.faces_pointer);
      get("field_x", c.field_x);
      get("field_y", c.field_y);
      get("field_w", c.field_w);
      get("field_h", c.field_h);
      get("confidence_field", c.confidence_field);
      get("timeout_seconds", c.timeout_seconds);
      get("max_retries", c.max_retries);
      get("backoff_base_seconds", c.backoff_base_seconds);
      get("max_image_bytes", c.max_image_bytes);
      get("max_in_flight", c.max_in_flight);
    } catch (const nlohmann::json::exception& e) {
      throw InvalidArgumentError(std::string("bad provider config: ") + e.what());
    }
    c.validate();
    return c;
  }

  static RemoteDetectorConfig load(const std::filesystem::path& path) {
    const auto bytes = detail::read_file_bytes(path);
    const auto j = nlohmann::json::parse(bytes.begin(), bytes.end(), nullptr, false);
    if (j.is_discarded()) throw InvalidArgumentError("provider config is not valid JSON: " + path.string());
    return from_json(j);
  }
};

struct RemoteResponse {
  std::vector<Detection> detections;
  std::string raw_body;  // kept for audit
  int status = 0;
  int attempts = 0;
};

namespace detail {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

inline Endpoint split_endpoint(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw InvalidArgumentError("endpoint needs a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

inline double number_field(const nlohmann::json& face, const std::string& key) {
  const auto it = face.find(key);
  if (it == face.end() || !it->is_number()) throw RemoteParseError("face entry lacks numeric field '" + key + "'");
  return it->get<double>();
}

inline std::vector<Detection> parse_faces(const std::string& body, const RemoteDetectorConfig& cfg, int img_w,
                                          int img_h) {
  const auto j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded()) throw RemoteParseError("response is not valid JSON");
  nlohmann::json faces;
  try {
    faces = j.at(nlohmann::json::json_pointer(cfg.faces_pointer));
  } catch (const nlohmann::json::exception&) {
    throw RemoteParseError("response has no value at " + cfg.faces_pointer);
  }
  if (!faces.is_array()) throw RemoteParseError("value at " + cfg.faces_pointer + " is not an array");
  std::vector<Detection> out;
  const Rect bounds{0, 0, img_w, img_h};
  for (const auto& f : faces) {
    if (!f.is_object()) throw RemoteParseError("face entry is not an object");
    const Rect r{static_cast<int>(std::lround(number_field(f, cfg.field_x))),
                 static_cast<int>(std::lround(number_field(f, cfg.field_y))),
                 static_cast<int>(std::lround(number_field(f, cfg.field_w))),
                 static_cast<int>(std::lround(number_field(f, cfg.field_h)))};
    double weight = 1.0;
    if (auto it = f.find(cfg.confidence_field); it != f.end() && it->is_number()) weight = it->get<double>();
    const Rect clipped = intersect(r, bounds);
    if (clipped.valid()) out.push_back({clipped, 0, weight});
  }
  return out;
}

}  // namespace detail

/// One detection request with retries on timeout and 5xx only.
///
/// Errors: RemoteTimeoutError, RemoteStatusError (non-2xx after retries, or
/// 4xx at once), RemoteAuthError (401/403 or missing key variable),
/// RemoteParseError (never retried), RemoteNetworkError (connection failures).
inline RemoteResponse remote_detect_full(const RasterImage& img, const RemoteDetectorConfig& cfg) {
  cfg.validate();
  const auto png = encode_png(img);
  if (png.size() > cfg.max_image_bytes)
    throw InvalidArgumentError("encoded image is " + std::to_string(png.size()) + " bytes, over the " +
                               std::to_string(cfg.max_image_bytes) + " byte limit");

  httplib::Headers headers;
  if (!cfg.api_key_env.empty()) {
    const char* key = std::getenv(cfg.api_key_env.c_str());
    if (key == nullptr || *key == '\0') throw RemoteAuthError("environment variable " + cfg.api_key_env + " is not set");
    headers.emplace(cfg.auth_header, cfg.auth_prefix + key);
  }
  const nlohmann::json req{{cfg.image_field, httplib::detail::base64_encode(std::string(png.begin(), png.end()))}};
  const std::string body = req.dump();

  const auto ep = detail::split_endpoint(cfg.endpoint);
  httplib::Client client(ep.origin);
  const auto timeout = std::chrono::duration<double>(cfg.timeout_seconds);
  client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  client.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));

  RemoteResponse out;
  for (int attempt = 0;; ++attempt) {
    if (attempt > 0) {
      const double wait = cfg.backoff_base_seconds * std::ldexp(1.0, attempt - 1);
      std::this_thread::sleep_for(std::chrono::duration<double>(wait));
    }
    out.attempts = attempt + 1;
    const bool last = attempt >= cfg.max_retries;
    auto res = client.Post(ep.path, headers, body, "application/json");
    if (!res) {
      const auto err = res.error();
      if (err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout) {
        if (last) throw RemoteTimeoutError("request to " + cfg.endpoint + " timed out");
        continue;
      }
      throw RemoteNetworkError("request to " + cfg.endpoint + " failed: " + httplib::to_string(err));
    }
    out.status = res->status;
    out.raw_body = res->body;
    if (res->status == 401 || res->status == 403)
      throw RemoteAuthError("provider rejected credentials (HTTP " + std::to_string(res->status) + ")");
    if (res->status >= 500) {
      if (last) throw RemoteStatusError(res->status, "provider returned HTTP " + std::to_string(res->status));
      continue;
    }
    if (res->status < 200 || res->status >= 300)
      throw RemoteStatusError(res->status, "provider returned HTTP " + std::to_string(res->status));
    out.detections = detail::parse_faces(res->body, cfg, img.width(), img.height());
    return out;
  }
}

inline std::vector<Detection> remote_detect(const RasterImage& img, const RemoteDetectorConfig& cfg) {
  return remote_detect_full(img, cfg).detections;
}

/// Remote client with a process-wide cap on concurrent requests (shared by copies).
class RemoteDetector final : public Detector {
 public:
  explicit RemoteDetector(RemoteDetectorConfig cfg)
      : cfg_(std::move(cfg)), slots_(std::make_shared<std::counting_semaphore<>>(validated(cfg_).max_in_flight)) {}

  std::vector<Detection> detect(const RasterImage& img, const DetectParams&) override {
    return detect_full(img).detections;
  }

  RemoteResponse detect_full(const RasterImage& img) {
    slots_->acquire();
    struct Release {
      std::counting_semaphore<>* s;
      ~Release() { s->release(); }
    } guard{slots_.get()};
    return remote_detect_full(img, cfg_);
  }

  const RemoteDetectorConfig& config() const noexcept { return cfg_; }

 private:
  static const RemoteDetectorConfig& validated(const RemoteDetectorConfig& c) {
    c.validate();
    return c;
  }
  RemoteDetectorConfig cfg_;
  std::shared_ptr<std::counting_semaphore<>> slots_;
};

struct DualViewReport {
  std::vector<Detection> human_view;    // composited over white
  std::vector<Detection> machine_view;  // alpha dropped
};

/// Opaque (non-RGBA) inputs render identically in both views.
inline DualViewReport compare_views(const RasterImage& img, Detector& detector, const DetectParams& params = {}) {
  if (img.layout() != Layout::RGBA) {
    auto dets = detector.detect(to_rgb(img), params);
    return {dets, dets};
  }
  return {detector.detect(flatten_alpha(img, kWhite), params), detector.detect(drop_alpha(img), params)};
}

inline DualViewReport compare_views(const std::filesystem::path& path, Detector& detector,
                                    const DetectParams& params = {}) {
  return compare_views(load_image(path), detector, params);
}

}  // namespace facecloak
