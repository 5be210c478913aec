#pragma once

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <memory>
#include <semaphore>
#include <span>
#include <string>
#include <thread>
#include <vector>

// Eigen before httplib: <resolv.h> defines a `_res` macro that clashes with
// Eigen parameter names.
#include <Eigen/Dense>
#include <httplib.h>
#include <json.hpp>

#include "twon/behavior.hpp"
#include "twon/embedding.hpp"
#include "twon/error.hpp"

namespace twon {

// HTTP client for the model sidecar. Wire format (JSON, UTF-8):
//
//   POST /generate {prompt, max_tokens, temperature, constraint: "reply_only"|"none"}
//                  -> {text, top_level?: bool}
//   POST /embed    {texts: [..]}            -> {vectors: [[d floats]..], d}
//   POST /labels   {texts: [..], category}  -> {scores: [[..]..], subclass_names: [..]}
//   GET  /healthz                           -> {version, d}
//
// Every response is validated before use; a response that breaks the schema
// is treated like a transport failure.

struct RemoteOptions {
  std::chrono::milliseconds timeout{10000};
  int retries = 2;  // attempts after the first one
  std::chrono::milliseconds backoff{200};  // doubled after every failed attempt
  int max_tokens = 96;
  double temperature = 0.7;
};

/// Environment override for the sidecar base URL.
inline std::string sidecar_endpoint(const std::string& configured) {
  if (const char* env = std::getenv("TWON_SIDECAR_URL"); env && *env) return env;
  return configured;
}

namespace detail {

struct Endpoint {
  std::string origin;  // scheme://host:port
  std::string prefix;  // path prefix without trailing slash
};

inline Endpoint split_endpoint(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw ConfigError("endpoint '" + url + "' lacks a scheme");
  const auto slash = url.find('/', scheme + 3);
  Endpoint e;
  e.origin = url.substr(0, slash);
  if (slash != std::string::npos) {
    e.prefix = url.substr(slash);
    while (!e.prefix.empty() && e.prefix.back() == '/') e.prefix.pop_back();
  }
  return e;
}

}  // namespace detail

class SidecarClient {
 public:
  explicit SidecarClient(std::string endpoint, RemoteOptions options = {})
      : endpoint_(detail::split_endpoint(endpoint)), options_(options) {}

  const RemoteOptions& options() const { return options_; }

  /// Generates text for `prompt`, retrying transport failures and constraint
  /// violations with exponential backoff.
  std::string generate(const Prompt& prompt) const {
    nlohmann::json body{{"prompt", prompt.rendered_text},
                        {"max_tokens", options_.max_tokens},
                        {"temperature", options_.temperature},
                        {"constraint", prompt.reply_only() ? "reply_only" : "none"}};
    std::string last_transport;
    std::string last_violation;
    for (int attempt = 0; attempt <= options_.retries; ++attempt) {
      if (attempt > 0) std::this_thread::sleep_for(options_.backoff * (1 << (attempt - 1)));
      nlohmann::json reply;
      try {
        reply = post("/generate", body);
      } catch (const std::runtime_error& e) {
        last_transport = e.what();
        continue;
      }
      if (!reply.is_object() || !reply.contains("text") || !reply["text"].is_string() ||
          (reply.contains("top_level") && !reply["top_level"].is_boolean())) {
        last_transport = "malformed /generate response";
        continue;
      }
      auto text = reply["text"].get<std::string>();
      if (text::tokenize(text).empty()) {
        last_violation = "sidecar returned empty text";
        last_transport.clear();
        continue;
      }
      if (prompt.reply_only() && reply.value("top_level", false)) {
        last_violation = "sidecar labeled the output as a top-level post";
        last_transport.clear();
        continue;
      }
      return text;
    }
    if (!last_transport.empty())
      throw TransportError(prompt.id(), last_transport + " (after " + std::to_string(options_.retries + 1) + " attempts)");
    throw GenerationError(prompt.id(), last_violation);
  }

  std::vector<EmbeddingVector> embed(std::span<const std::string> texts) const {
    const auto reply = with_retries("/embed", nlohmann::json{{"texts", std::vector<std::string>(texts.begin(), texts.end())}});
    try {
      const auto d = reply.at("d").get<std::size_t>();
      const auto& vectors = reply.at("vectors");
      if (vectors.size() != texts.size()) throw std::runtime_error("vector count differs from text count");
      std::vector<EmbeddingVector> out;
      for (const auto& v : vectors) {
        EmbeddingVector e(v.get<std::vector<double>>());
        if (e.dim() != d) throw std::runtime_error("vector length differs from d");
        check_finite(e);
        out.push_back(std::move(e));
      }
      return out;
    } catch (const std::exception& e) {
      throw TransportError("embed", std::string("malformed /embed response: ") + e.what());
    }
  }

  LabelScores labels(std::span<const std::string> texts, const std::string& category) const {
    const auto reply = with_retries(
        "/labels", nlohmann::json{{"texts", std::vector<std::string>(texts.begin(), texts.end())}, {"category", category}});
    try {
      LabelScores s;
      s.subclass_names = reply.at("subclass_names").get<std::vector<std::string>>();
      if (s.subclass_names.empty()) throw std::runtime_error("no subclass names");
      s.scores = reply.at("scores").get<std::vector<std::vector<double>>>();
      if (s.scores.size() != texts.size()) throw std::runtime_error("score row count differs from text count");
      for (const auto& row : s.scores) {
        if (row.size() != s.subclass_names.size()) throw std::runtime_error("score row width differs from subclasses");
        for (double v : row)
          if (!(v >= 0.0 && v <= 1.0)) throw std::runtime_error("score outside [0,1]");
      }
      return s;
    } catch (const std::exception& e) {
      throw TransportError("labels", std::string("malformed /labels response: ") + e.what());
    }
  }

  struct Health {
    std::string version;
    std::size_t d = 0;
  };

  Health healthz() const {
    auto cli = client();
    auto res = cli.Get(endpoint_.prefix + "/healthz");
    if (!res) throw TransportError("healthz", "sidecar unreachable: " + httplib::to_string(res.error()));
    if (res->status != 200) throw TransportError("healthz", "status " + std::to_string(res->status));
    try {
      const auto j = nlohmann::json::parse(res->body);
      return {j.at("version").get<std::string>(), j.at("d").get<std::size_t>()};
    } catch (const std::exception& e) {
      throw TransportError("healthz", std::string("malformed /healthz response: ") + e.what());
    }
  }

 private:
  httplib::Client client() const {
    httplib::Client cli(endpoint_.origin);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(options_.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(options_.timeout - secs);
    cli.set_connection_timeout(secs.count(), usecs.count());
    cli.set_read_timeout(secs.count(), usecs.count());
    cli.set_write_timeout(secs.count(), usecs.count());
    return cli;
  }

  nlohmann::json post(const std::string& path, const nlohmann::json& body) const {
    auto cli = client();
    auto res = cli.Post(endpoint_.prefix + path, body.dump(), "application/json");
    if (!res) throw std::runtime_error("sidecar unreachable: " + httplib::to_string(res.error()));
    if (res->status < 200 || res->status >= 300)
      throw std::runtime_error(path + " returned status " + std::to_string(res->status));
    try {
      return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception&) {
      throw std::runtime_error(path + " returned a body that is not JSON");
    }
  }

  nlohmann::json with_retries(const std::string& path, const nlohmann::json& body) const {
    std::string last;
    for (int attempt = 0; attempt <= options_.retries; ++attempt) {
      if (attempt > 0) std::this_thread::sleep_for(options_.backoff * (1 << (attempt - 1)));
      try {
        return post(path, body);
      } catch (const std::runtime_error& e) {
        last = e.what();
      }
    }
    throw TransportError(path.substr(1), last);
  }

  detail::Endpoint endpoint_;
  RemoteOptions options_;
};

inline std::string remote_generate(const std::string& endpoint, const Prompt& prompt, RemoteOptions options = {}) {
  return SidecarClient(endpoint, options).generate(prompt);
}

/// Sidecar-backed generator with a cap on concurrent in-flight requests.
class RemoteGenerator final : public TextGenerator {
 public:
  RemoteGenerator(std::string endpoint, RemoteOptions options, std::ptrdiff_t max_in_flight = 4)
      : client_(std::move(endpoint), options), slots_(std::make_unique<std::counting_semaphore<>>(max_in_flight)) {}

  std::string generate(const GenerationRequest& r) const override {
    slots_->acquire();
    struct Release {
      std::counting_semaphore<>* s;
      ~Release() { s->release(); }
    } release{slots_.get()};
    return client_.generate(r.prompt);
  }

  std::string name() const override { return "remote"; }

 private:
  SidecarClient client_;
  std::unique_ptr<std::counting_semaphore<>> slots_;
};

class SidecarEmbeddings final : public EmbeddingSource {
 public:
  SidecarEmbeddings(std::string endpoint, RemoteOptions options = {}) : client_(std::move(endpoint), options) {
    dim_ = client_.healthz().d;
  }

  std::vector<EmbeddingVector> embed(std::span<const std::string> texts) const override {
    auto out = client_.embed(texts);
    for (const auto& e : out)
      if (e.dim() != dim_) throw TransportError("embed", "/embed dimension differs from /healthz d");
    return out;
  }

  std::size_t dimension() const override { return dim_; }

 private:
  SidecarClient client_;
  std::size_t dim_ = 0;
};

class SidecarLabels final : public LabelSource {
 public:
  SidecarLabels(std::string endpoint, RemoteOptions options = {}) : client_(std::move(endpoint), options) {}
  LabelScores classify(std::span<const std::string> texts, const std::string& category) const override {
    return client_.labels(texts, category);
  }

 private:
  SidecarClient client_;
};

}  // namespace twon
