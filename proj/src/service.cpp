#include "prefnet/service.hpp"

#include <fstream>
#include <numeric>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

#include "prefnet/error.hpp"
#include "prefnet/network.hpp"
#include "prefnet/rng.hpp"
#include "prefnet/transfer.hpp"

namespace prefnet {
namespace {

using nlohmann::json;

ServiceResponse reply(int status, const json& body) {
  return {status, body.dump(), "application/json"};
}

ServiceResponse error_reply(int status, const std::string& message) {
  return reply(status, json{{"error", message}});
}

std::string image_url(const std::string& id) {
  return "/image/" + httplib::detail::encode_query_param(id);
}

std::string mime_for(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  for (char& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (ext == ".png") return "image/png";
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  return "application/octet-stream";
}

// Parses a body into {id, label}; label must be the integer 0 or 1.
std::optional<std::pair<std::string, int>> parse_label_body(const std::string& body, std::string& why) {
  json j = json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    why = "body must be a JSON object";
    return std::nullopt;
  }
  if (!j.contains("id") || !j["id"].is_string()) {
    why = "field 'id' must be a string";
    return std::nullopt;
  }
  if (!j.contains("label") || !j["label"].is_number_integer()) {
    why = "field 'label' must be 0 or 1";
    return std::nullopt;
  }
  const auto lab = j["label"].get<long long>();
  if (lab != 0 && lab != 1) {
    why = "field 'label' must be 0 or 1";
    return std::nullopt;
  }
  return std::make_pair(j["id"].get<std::string>(), static_cast<int>(lab));
}

}  // namespace

LabelService::LabelService(std::filesystem::path manifest_path, ServiceOptions options)
    : manifest_path_(std::move(manifest_path)), options_(std::move(options)),
      manifest_(read_manifest(manifest_path_)) {
  if (options_.model) {
    const Shape in = options_.model->spec.input;
    if (in.c != 3 || in.h != in.w) throw ShapeError("served model must take square RGB input, got " + in.str());
    if (options_.mean && options_.mean->shape() != in) {
      throw ShapeError("mean image " + options_.mean->shape().str() + " does not match model input " + in.str());
    }
  }
}

LabelService::~LabelService() = default;

Manifest LabelService::manifest() const {
  std::shared_lock lock(mutex_);
  return manifest_;
}

double LabelService::p_like(std::size_t index) {
  const ManifestEntry& e = manifest_.at(index);
  {
    std::lock_guard lock(score_mutex_);
    if (auto it = scores_.find(e.id); it != scores_.end()) return it->second;
  }
  const Checkpoint& model = *options_.model;
  Tensor<float> x = load_image(manifest_.resolve(e), model.spec.input.h);
  if (options_.mean) {
    apply_mean(x, *options_.mean, options_.pixel_scale);
  } else if (options_.pixel_scale != 1.0f) {
    for (float& v : x.data()) v *= options_.pixel_scale;
  }
  const Tensor<float> probs = predict_probs(model, std::move(x));
  const double p = probs[1];
  std::lock_guard lock(score_mutex_);
  scores_[e.id] = p;
  return p;
}

ServiceResponse LabelService::next(const std::string& strategy) {
  std::shared_lock lock(mutex_);
  if (strategy != "sequential" && strategy != "uncertainty") {
    return error_reply(400, "strategy must be 'sequential' or 'uncertainty'");
  }
  if (strategy == "uncertainty" && !options_.model) {
    return error_reply(409, "uncertainty ordering needs a model; start the service with --model");
  }
  std::optional<std::size_t> pick;
  double best = 0.0;
  double best_dist = 2.0;
  for (std::size_t i = 0; i < manifest_.size(); ++i) {
    if (manifest_.at(i).label) continue;
    if (strategy == "sequential") {
      pick = i;
      break;
    }
    const double p = p_like(i);
    const double dist = std::abs(p - 0.5);
    if (dist < best_dist) {  // strict: ties keep manifest order
      best_dist = dist;
      best = p;
      pick = i;
    }
  }
  if (!pick) return reply(200, json{{"id", nullptr}, {"done", true}});
  const std::string& id = manifest_.at(*pick).id;
  json out{{"id", id}, {"image_url", image_url(id)}, {"done", false}};
  if (strategy == "uncertainty") {
    out["model_score"] = best;
  } else if (options_.model) {
    out["model_score"] = p_like(*pick);
  }
  return reply(200, out);
}

ServiceResponse LabelService::label(const std::string& json_body) {
  std::string why;
  const auto parsed = parse_label_body(json_body, why);
  if (!parsed) return error_reply(400, why);
  const auto& [id, lab] = *parsed;

  std::unique_lock lock(mutex_);
  const auto idx = manifest_.index_of(id);
  if (!idx) return error_reply(404, "unknown id '" + id + "'");
  Manifest updated = manifest_;
  updated.at(*idx).label = lab;
  try {
    write_manifest(updated, manifest_path_);
  } catch (const std::exception& e) {
    return error_reply(500, std::string("could not persist manifest: ") + e.what());
  }
  manifest_ = std::move(updated);

  std::size_t likes = 0;
  std::size_t labeled = 0;
  for (const auto& e : manifest_.entries()) {
    if (!e.label) continue;
    ++labeled;
    likes += static_cast<std::size_t>(*e.label);
  }
  return reply(200, json{{"id", id},
                         {"label", lab},
                         {"n_labeled", labeled},
                         {"n_like", likes},
                         {"n_dislike", labeled - likes},
                         {"like_fraction", static_cast<double>(likes) / static_cast<double>(labeled)}});
}

ServiceResponse LabelService::predict(const std::string& id) {
  std::shared_lock lock(mutex_);
  if (!options_.model) return error_reply(409, "no model loaded");
  const auto idx = manifest_.index_of(id);
  if (!idx) return error_reply(404, "unknown id '" + id + "'");
  try {
    return reply(200, json{{"id", id}, {"p_like", p_like(*idx)}});
  } catch (const IngestionError& e) {
    return error_reply(422, e.what());
  }
}

ServiceResponse LabelService::stats() const {
  std::shared_lock lock(mutex_);
  std::size_t labeled = 0;
  std::size_t likes = 0;
  json splits = json::object();
  for (Split s : {Split::train, Split::val, Split::test, Split::unassigned}) {
    splits[std::string(to_string(s))] = json{{"total", 0}, {"labeled", 0}};
  }
  for (const auto& e : manifest_.entries()) {
    auto& slot = splits[std::string(to_string(e.split))];
    slot["total"] = slot["total"].get<std::size_t>() + 1;
    if (!e.label) continue;
    slot["labeled"] = slot["labeled"].get<std::size_t>() + 1;
    ++labeled;
    likes += static_cast<std::size_t>(*e.label);
  }
  json out{{"n_total", manifest_.size()}, {"n_labeled", labeled}, {"n_like", likes}, {"splits", splits}};
  out["like_fraction"] = labeled ? json(static_cast<double>(likes) / static_cast<double>(labeled)) : json(nullptr);
  return reply(200, out);
}

ServiceResponse LabelService::image(const std::string& id) const {
  std::filesystem::path path;
  {
    std::shared_lock lock(mutex_);
    const ManifestEntry* e = manifest_.find(id);
    if (!e) return error_reply(404, "unknown id '" + id + "'");
    path = manifest_.resolve(*e);
  }
  std::ifstream f(path, std::ios::binary);
  if (!f) return error_reply(404, "image file for '" + id + "' is missing");
  std::ostringstream ss;
  ss << f.rdbuf();
  return {200, ss.str(), mime_for(path)};
}

ServiceResponse LabelService::consistency_start(std::size_t n, std::uint64_t seed) {
  std::unique_lock lock(mutex_);
  std::vector<std::size_t> labeled;
  for (std::size_t i = 0; i < manifest_.size(); ++i) {
    if (manifest_.at(i).label) labeled.push_back(i);
  }
  if (n == 0 || n > labeled.size()) {
    return error_reply(400, "session size must be in [1, " + std::to_string(labeled.size()) + "]");
  }
  Rng rng = Rng::stream(seed, "consistency");
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(labeled.size() - i));
    std::swap(labeled[i], labeled[j]);
  }
  Consistency s;
  s.seed = seed;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& e = manifest_.at(labeled[i]);
    s.ids.push_back(e.id);
    s.stored.push_back(*e.label);
  }
  session_ = std::move(s);
  return {200, state_json_locked(), "application/json"};
}

ServiceResponse LabelService::consistency_answer(const std::string& json_body) {
  std::string why;
  const auto parsed = parse_label_body(json_body, why);
  if (!parsed) return error_reply(400, why);
  std::unique_lock lock(mutex_);
  if (!session_) return error_reply(409, "no consistency session; call /consistency/start first");
  Consistency& s = *session_;
  if (s.answers.size() == s.ids.size()) return error_reply(409, "session already finished");
  const std::string& expected = s.ids[s.answers.size()];
  if (parsed->first != expected) {
    return error_reply(400, "expected an answer for '" + expected + "', got '" + parsed->first + "'");
  }
  s.answers.push_back(parsed->second);
  return {200, state_json_locked(), "application/json"};
}

ServiceResponse LabelService::consistency_state() const {
  std::shared_lock lock(mutex_);
  return {200, state_json_locked(), "application/json"};
}

std::string LabelService::state_json_locked() const {
  if (!session_) return json{{"active", false}}.dump();
  const Consistency& s = *session_;
  const std::size_t done = s.answers.size();
  json out{{"active", true}, {"total", s.ids.size()}, {"index", done}, {"finished", done == s.ids.size()}};
  if (done < s.ids.size()) {
    out["current"] = json{{"id", s.ids[done]}, {"image_url", image_url(s.ids[done])}};
  }
  std::size_t disagreements = 0;
  json list = json::array();
  for (std::size_t i = 0; i < done; ++i) {
    if (s.answers[i] == s.stored[i]) continue;
    ++disagreements;
    list.push_back(json{{"id", s.ids[i]}, {"stored", s.stored[i]}, {"answer", s.answers[i]}});
  }
  out["answered"] = done;
  out["disagreements"] = disagreements;
  if (done == s.ids.size()) {
    // Stored labels are revealed only once the session is over.
    out["disagreement_list"] = list;
    out["agreement_rate"] = static_cast<double>(done - disagreements) / static_cast<double>(done);
    out["noise_estimate"] = estimate_label_noise(static_cast<long long>(done), static_cast<long long>(disagreements));
  }
  return out.dump();
}

void LabelService::register_routes() {
  auto send = [](httplib::Response& res, const ServiceResponse& r) {
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  };
  auto& srv = *server_;
  srv.Get("/next", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, next(req.has_param("strategy") ? req.get_param_value("strategy") : "sequential"));
  });
  srv.Post("/label", [this, send](const httplib::Request& req, httplib::Response& res) { send(res, label(req.body)); });
  srv.Get(R"(/predict/(.+))", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, predict(httplib::detail::decode_url(req.matches[1], false)));
  });
  srv.Get("/stats", [this, send](const httplib::Request&, httplib::Response& res) { send(res, stats()); });
  srv.Get(R"(/image/(.+))", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, image(httplib::detail::decode_url(req.matches[1], false)));
  });
  srv.Get("/consistency/start", [this, send](const httplib::Request& req, httplib::Response& res) {
    try {
      const std::size_t n = std::stoull(req.has_param("n") ? req.get_param_value("n") : "100");
      const std::uint64_t seed = std::stoull(req.has_param("seed") ? req.get_param_value("seed") : "0");
      send(res, consistency_start(n, seed));
    } catch (const std::logic_error&) {
      send(res, error_reply(400, "n and seed must be non-negative integers"));
    }
  });
  srv.Post("/consistency/answer", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, consistency_answer(req.body));
  });
  srv.Get("/consistency/state",
          [this, send](const httplib::Request&, httplib::Response& res) { send(res, consistency_state()); });
}

bool LabelService::serve(const std::string& host, int port) {
  server_ = std::make_unique<httplib::Server>();
  register_routes();
  return server_->listen(host, port);
}

int LabelService::bind_any(const std::string& host) {
  server_ = std::make_unique<httplib::Server>();
  register_routes();
  return server_->bind_to_any_port(host);
}

bool LabelService::listen() {
  return server_ && server_->listen_after_bind();
}

void LabelService::stop() {
  if (server_) server_->stop();
}

}  // namespace prefnet
