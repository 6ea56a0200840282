#pragma once

// JSON/HTTP backend of the labeling tool. Handlers are plain methods so they
// can be exercised without sockets; serve() binds them to routes.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "prefnet/checkpoint.hpp"
#include "prefnet/image_io.hpp"
#include "prefnet/manifest.hpp"

namespace httplib {
class Server;
}

namespace prefnet {

struct ServiceResponse {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

struct ServiceOptions {
  std::optional<Checkpoint> model;
  std::optional<MeanImage> mean;
  float pixel_scale = 1.0f;
};

class LabelService {
 public:
  /// Reads the manifest; throws DataError if it is missing.
  LabelService(std::filesystem::path manifest_path, ServiceOptions options = {});
  ~LabelService();

  ServiceResponse next(const std::string& strategy);
  ServiceResponse label(const std::string& json_body);
  ServiceResponse predict(const std::string& id);
  ServiceResponse stats() const;
  ServiceResponse image(const std::string& id) const;
  ServiceResponse consistency_start(std::size_t n, std::uint64_t seed);
  ServiceResponse consistency_answer(const std::string& json_body);
  ServiceResponse consistency_state() const;

  /// Snapshot of the in-memory manifest (identical to the file on disk).
  Manifest manifest() const;

  /// Blocks serving HTTP until stop(). Returns false if binding fails.
  bool serve(const std::string& host, int port);
  /// Binds an ephemeral port and returns it; call listen() afterwards.
  int bind_any(const std::string& host);
  bool listen();
  void stop();

 private:
  struct Consistency {
    std::vector<std::string> ids;
    std::vector<int> stored;
    std::vector<int> answers;
    std::uint64_t seed = 0;
  };

  double p_like(std::size_t index);
  std::string state_json_locked() const;
  void register_routes();

  std::filesystem::path manifest_path_;
  ServiceOptions options_;
  Manifest manifest_;
  mutable std::shared_mutex mutex_;       // guards manifest_ and session_
  std::mutex score_mutex_;                // guards scores_
  std::map<std::string, double> scores_;  // model inference cache
  std::optional<Consistency> session_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace prefnet
