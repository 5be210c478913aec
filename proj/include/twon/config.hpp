#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>
#include <toml.hpp>

#include "twon/behavior.hpp"
#include "twon/error.hpp"
#include "twon/ingest.hpp"
#include "twon/likelihood.hpp"
#include "twon/mechanics.hpp"
#include "twon/metrics.hpp"
#include "twon/sidecar.hpp"

#ifndef TWON_TEMPLATE_DIR
#define TWON_TEMPLATE_DIR "templates"
#endif

namespace twon::harness {

namespace fs = std::filesystem;

inline constexpr int kSchemaVersion = 1;

/// TOML document as JSON, so every downstream parser works on one tree type.
inline nlohmann::json toml_to_json(const toml::node& node) {
  if (const auto* t = node.as_table()) {
    nlohmann::json j = nlohmann::json::object();
    for (auto&& [k, v] : *t) j[std::string(k.str())] = toml_to_json(v);
    return j;
  }
  if (const auto* a = node.as_array()) {
    nlohmann::json j = nlohmann::json::array();
    for (auto&& v : *a) j.push_back(toml_to_json(v));
    return j;
  }
  if (const auto* s = node.as_string()) return s->get();
  if (const auto* i = node.as_integer()) return i->get();
  if (const auto* f = node.as_floating_point()) return f->get();
  if (const auto* b = node.as_boolean()) return b->get();
  std::ostringstream os;
  node.visit([&](auto&& v) { os << v; });
  return os.str();
}

enum class Task { Post, Reply, Likelihood, Simulate };

inline Task parse_task(const std::string& s) {
  if (s == "post") return Task::Post;
  if (s == "reply") return Task::Reply;
  if (s == "likelihood") return Task::Likelihood;
  if (s == "simulate") return Task::Simulate;
  throw ConfigError("unknown task '" + s + "'");
}

struct ProviderConfig {
  std::string kind = "stub";  // stub | markov | remote
  std::string endpoint = "http://127.0.0.1:8000";
  RemoteOptions remote;
  std::size_t max_in_flight = 4;
  int markov_order = 1;
  std::size_t max_tokens = 40;
  std::string stub_text = "I hear you.";
  ActivityPolicy policy;
};

struct SourceConfig {
  std::string source;  // embeddings: hashing | fixture | sidecar; labels: none | fixture | sidecar
  std::optional<fs::path> path;
  std::size_t dimension = 64;
};

struct IngestConfig {
  std::size_t min_chars = ingest::kDefaultMinChars;
  std::size_t top_k = 50;
  double train_fraction = 0.8;
  std::size_t per_user_cap = 5;
};

struct ScorerConfig {
  likelihood::TrainConfig train{.lr = 1e-3, .weight_decay = 0.01, .epochs = 20, .batch_size = 32};
  double threshold = 0.5;
  std::size_t history_cap = 8;
};

struct AgentSpec {
  AgentId id;
  AgentRole role = AgentRole::Replier;
  std::optional<Persona> persona;
  std::vector<std::string> topics;
};

struct SeedPost {
  AgentId sender;
  std::optional<AgentId> recipient;
  std::string text;
  std::optional<std::string> topic;
};

struct SimulateConfig {
  int ticks = 10;
  std::vector<AgentSpec> agents;
  std::vector<SeedPost> seed_posts;
};

struct ExperimentConfig {
  fs::path source_file;  // the TOML file this was read from
  std::string raw_text;  // verbatim file content
  Task task = Task::Post;
  Language language = Language::EN;
  std::uint64_t seed = 0;
  fs::path output_dir = "out";
  fs::path template_dir = TWON_TEMPLATE_DIR;

  std::map<std::string, fs::path> data;  // named input paths, resolved against the config dir
  ProviderConfig provider;
  metrics::ReportOptions metrics;
  SourceConfig embeddings{"hashing", std::nullopt, 64};
  SourceConfig labels{"none", std::nullopt, 0};
  IngestConfig ingest;
  ScorerConfig scorer;
  MechanicsConfig mechanics;
  std::vector<MechanicsConfig> fit_family;
  SimulateConfig simulate;

  std::optional<fs::path> path(const std::string& key) const {
    auto it = data.find(key);
    if (it == data.end()) return std::nullopt;
    return it->second;
  }

  fs::path require(const std::string& key) const {
    auto p = path(key);
    if (!p) throw ConfigError("config is missing data." + key);
    return *p;
  }
};

namespace detail {

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("config key '") + key + "' has the wrong type");
  }
}

inline AgentRole parse_role(const std::string& s) {
  if (s == "poster") return AgentRole::Poster;
  if (s == "replier") return AgentRole::Replier;
  throw ConfigError("unknown agent role '" + s + "'");
}

}  // namespace detail

/// Builds a config from parsed TOML. `base_dir` anchors relative paths.
inline ExperimentConfig config_from_json(const nlohmann::json& j, const fs::path& base_dir) {
  using detail::get_or;
  ExperimentConfig c;
  try {
    if (!j.contains("seed")) throw ConfigError("config must set a seed");
    c.seed = j.at("seed").get<std::uint64_t>();
    c.task = parse_task(get_or<std::string>(j, "task", "post"));
    c.language = parse_language(get_or<std::string>(j, "language", "en"));
    auto resolve = [&](const fs::path& p) { return p.is_absolute() ? p : base_dir / p; };
    c.output_dir = resolve(get_or<std::string>(j, "output_dir", "out"));
    if (j.contains("template_dir")) c.template_dir = resolve(j.at("template_dir").get<std::string>());

    if (j.contains("data"))
      for (const auto& [k, v] : j.at("data").items()) c.data[k] = resolve(v.get<std::string>());

    if (j.contains("provider")) {
      const auto& p = j.at("provider");
      c.provider.kind = get_or<std::string>(p, "kind", c.provider.kind);
      if (c.provider.kind != "stub" && c.provider.kind != "markov" && c.provider.kind != "remote")
        throw ConfigError("unknown provider kind '" + c.provider.kind + "'");
      c.provider.endpoint = get_or<std::string>(p, "endpoint", c.provider.endpoint);
      c.provider.remote.timeout = std::chrono::milliseconds(get_or<long long>(p, "timeout_ms", 10000));
      c.provider.remote.retries = get_or<int>(p, "retries", 2);
      c.provider.remote.backoff = std::chrono::milliseconds(get_or<long long>(p, "backoff_ms", 200));
      c.provider.remote.max_tokens = get_or<int>(p, "max_tokens", 96);
      c.provider.remote.temperature = get_or<double>(p, "temperature", 0.7);
      c.provider.max_in_flight = get_or<std::size_t>(p, "max_in_flight", 4);
      c.provider.markov_order = get_or<int>(p, "markov_order", 1);
      c.provider.max_tokens = get_or<std::size_t>(p, "markov_max_tokens", 40);
      c.provider.stub_text = get_or<std::string>(p, "stub_text", c.provider.stub_text);
      c.provider.policy.post_probability = get_or<double>(p, "post_probability", 1.0);
      c.provider.policy.reply_probability = get_or<double>(p, "reply_probability", 1.0);
      c.provider.policy.max_replies = get_or<std::size_t>(p, "max_replies", c.provider.policy.max_replies);
    }
    c.provider.endpoint = sidecar_endpoint(c.provider.endpoint);

    c.metrics.seed = c.seed;
    c.metrics.language = c.language;
    if (c.task == Task::Reply) c.metrics.task = metrics::Task::Reply;
    if (j.contains("metrics")) {
      const auto& m = j.at("metrics");
      c.metrics.n = get_or<int>(m, "n", metrics::kDefaultSamples);
      c.metrics.k = get_or<int>(m, "k", metrics::kDefaultRepetitions);
      c.metrics.epsilon = get_or<double>(m, "epsilon", 0.1);
      c.metrics.bleu_max_n = get_or<int>(m, "max_n", 4);
      c.metrics.distance = metrics::parse_distance(get_or<std::string>(m, "distance", "euclidean"));
      c.metrics.condition = get_or<std::string>(m, "condition", "in-context");
    }

    auto source = [&](const char* key, SourceConfig fallback) {
      if (!j.contains(key)) return fallback;
      const auto& s = j.at(key);
      SourceConfig out = fallback;
      out.source = get_or<std::string>(s, "source", fallback.source);
      if (s.contains("path")) out.path = resolve(s.at("path").get<std::string>());
      out.dimension = get_or<std::size_t>(s, "dimension", fallback.dimension);
      return out;
    };
    c.embeddings = source("embeddings", c.embeddings);
    c.labels = source("labels", c.labels);

    if (j.contains("ingest")) {
      const auto& i = j.at("ingest");
      c.ingest.min_chars = get_or<std::size_t>(i, "min_chars", c.ingest.min_chars);
      c.ingest.top_k = get_or<std::size_t>(i, "top_k", c.ingest.top_k);
      c.ingest.train_fraction = get_or<double>(i, "train_fraction", c.ingest.train_fraction);
      c.ingest.per_user_cap = get_or<std::size_t>(i, "per_user_cap", c.ingest.per_user_cap);
    }

    c.scorer.train.seed = c.seed;
    if (j.contains("scorer")) {
      const auto& s = j.at("scorer");
      c.scorer.train.lr = get_or<double>(s, "lr", c.scorer.train.lr);
      c.scorer.train.weight_decay = get_or<double>(s, "weight_decay", c.scorer.train.weight_decay);
      c.scorer.train.epochs = get_or<int>(s, "epochs", c.scorer.train.epochs);
      c.scorer.train.batch_size = get_or<std::size_t>(s, "batch_size", c.scorer.train.batch_size);
      c.scorer.threshold = get_or<double>(s, "threshold", c.scorer.threshold);
      c.scorer.history_cap = get_or<std::size_t>(s, "history_cap", c.scorer.history_cap);
    }

    if (j.contains("mechanics")) c.mechanics = mechanics_config_from_json(j.at("mechanics"));
    if (j.contains("fit") && j.at("fit").contains("family"))
      for (const auto& m : j.at("fit").at("family")) c.fit_family.push_back(mechanics_config_from_json(m));

    if (j.contains("simulate")) {
      const auto& s = j.at("simulate");
      c.simulate.ticks = get_or<int>(s, "ticks", c.simulate.ticks);
      if (s.contains("agents"))
        for (const auto& a : s.at("agents")) {
          AgentSpec spec;
          spec.id = AgentId(a.at("id").get<std::string>());
          spec.role = detail::parse_role(get_or<std::string>(a, "role", "replier"));
          if (a.contains("name") || a.contains("party")) {
            Persona p{get_or<std::string>(a, "name", spec.id.value), get_or<std::string>(a, "party", ""),
                      parse_language(get_or<std::string>(a, "language", to_string(c.language)))};
            validate(p);
            spec.persona = p;
          }
          spec.topics = get_or<std::vector<std::string>>(a, "topics", {});
          c.simulate.agents.push_back(std::move(spec));
        }
      if (s.contains("seed_posts"))
        for (const auto& p : s.at("seed_posts")) {
          SeedPost sp;
          sp.sender = AgentId(p.at("sender").get<std::string>());
          if (p.contains("recipient")) sp.recipient = AgentId(p.at("recipient").get<std::string>());
          sp.text = p.at("text").get<std::string>();
          if (p.contains("topic")) sp.topic = p.at("topic").get<std::string>();
          c.simulate.seed_posts.push_back(std::move(sp));
        }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  } catch (const InputError& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  return c;
}

inline ExperimentConfig load_config(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ConfigError("cannot read config " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string raw = ss.str();
  toml::table table;
  try {
    table = toml::parse(raw, file.string());
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "config parse error: " << e.description() << " at " << e.source().begin;
    throw ConfigError(msg.str());
  }
  auto c = config_from_json(toml_to_json(table), file.parent_path());
  c.source_file = file;
  c.raw_text = raw;
  return c;
}

}  // namespace twon::harness
