#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "twon/behavior.hpp"
#include "twon/config.hpp"
#include "twon/core_model.hpp"
#include "twon/embedding.hpp"
#include "twon/error.hpp"
#include "twon/ingest.hpp"
#include "twon/likelihood.hpp"
#include "twon/mechanics.hpp"
#include "twon/metrics.hpp"
#include "twon/sidecar.hpp"

namespace twon::harness {

// Experiment commands. Each one validates its inputs before doing any work,
// writes into config.output_dir, and copies the config file there verbatim.

namespace detail {

inline void require_file(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw ConfigError(what + " does not exist: " + p.string());
}

inline void prepare_output(const ExperimentConfig& c) {
  std::error_code ec;
  fs::create_directories(c.output_dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + c.output_dir.string() + ": " + ec.message());
  std::ofstream(c.output_dir / "config.toml", std::ios::binary) << c.raw_text;
}

inline void write_json(const fs::path& p, const nlohmann::ordered_json& j) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(ErrorKind::Data, "cannot write " + p.string());
  out << j.dump(2) << '\n';
}

inline nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw DataError("cannot read " + p.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(p.string() + ": " + e.what());
  }
}

inline std::vector<ingest::RawSample> read_samples(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw DataError("cannot read " + p.string());
  return ingest::read_samples(in);
}

inline std::unique_ptr<EmbeddingSource> make_embedder(const ExperimentConfig& c) {
  const auto& e = c.embeddings;
  if (e.source == "hashing") return std::make_unique<HashingEmbedder>(e.dimension);
  if (e.source == "fixture") {
    if (!e.path) throw ConfigError("embeddings.source = fixture needs embeddings.path");
    return std::make_unique<FixtureEmbeddings>(*e.path);
  }
  if (e.source == "sidecar") return std::make_unique<SidecarEmbeddings>(c.provider.endpoint, c.provider.remote);
  throw ConfigError("unknown embeddings.source '" + e.source + "'");
}

inline std::unique_ptr<LabelSource> make_labels(const ExperimentConfig& c) {
  const auto& l = c.labels;
  if (l.source == "none") return nullptr;
  if (l.source == "fixture") {
    if (!l.path) throw ConfigError("labels.source = fixture needs labels.path");
    return std::make_unique<FixtureLabels>(*l.path);
  }
  if (l.source == "sidecar") return std::make_unique<SidecarLabels>(c.provider.endpoint, c.provider.remote);
  throw ConfigError("unknown labels.source '" + l.source + "'");
}

inline void validate_sources(const ExperimentConfig& c) {
  if (c.embeddings.source == "fixture" && c.embeddings.path) require_file(*c.embeddings.path, "embeddings.path");
  if (c.labels.source == "fixture" && c.labels.path) require_file(*c.labels.path, "labels.path");
}

inline std::shared_ptr<const PromptTemplates> load_templates(const ExperimentConfig& c) {
  return std::make_shared<const PromptTemplates>(PromptTemplates::load(c.template_dir));
}

inline std::vector<std::string> texts_of(std::span<const ingest::RawSample> samples, MessageKind kind) {
  std::vector<std::string> out;
  for (const auto& s : samples)
    if (s.kind == kind) out.push_back(s.text);
  return out;
}

inline std::shared_ptr<const TextGenerator> make_generator(const ExperimentConfig& c,
                                                           std::span<const std::string> markov_corpus) {
  const auto& p = c.provider;
  if (p.kind == "stub") return std::make_shared<EchoGenerator>();
  if (p.kind == "markov") {
    auto model = std::make_shared<const MarkovModel>(markov_train(markov_corpus, p.markov_order));
    return std::make_shared<MarkovGenerator>(std::move(model), p.max_tokens);
  }
  return std::make_shared<RemoteGenerator>(p.endpoint, p.remote, static_cast<std::ptrdiff_t>(p.max_in_flight));
}

inline std::map<std::string, Persona> load_personas(const ExperimentConfig& c) {
  std::map<std::string, Persona> out;
  auto p = c.path("personas");
  if (!p) return out;
  const auto j = read_json(*p);
  try {
    for (const auto& [user, v] : j.items()) {
      Persona persona{v.at("name").get<std::string>(), v.at("party").get<std::string>(),
                      parse_language(v.value("language", std::string(to_string(c.language))))};
      validate(persona);
      out.emplace(user, persona);
    }
  } catch (const std::exception& e) {
    throw DataError(std::string("malformed personas file: ") + e.what());
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------------

struct IngestResult {
  ingest::Corpus filtered;
  ingest::Corpus train;
  ingest::Corpus test;
};

inline IngestResult cmd_ingest(const ExperimentConfig& c) {
  const auto corpus_path = c.require("corpus");
  detail::require_file(corpus_path, "data.corpus");
  detail::prepare_output(c);

  auto corpus = ingest::Corpus::from(detail::read_samples(corpus_path));
  auto filtered = ingest::filter_corpus(corpus, c.ingest.min_chars);
  if (filtered.samples.empty()) throw DataError("no samples survive filtering");
  filtered = ingest::select_active_users(filtered, c.ingest.top_k);
  auto [train, test] = ingest::split(filtered, c.ingest.train_fraction, c.seed);

  {
    std::ofstream out(c.output_dir / "train.jsonl", std::ios::binary);
    ingest::write_samples(out, train.samples);
  }
  {
    std::ofstream out(c.output_dir / "test.jsonl", std::ios::binary);
    ingest::write_samples(out, test.samples);
  }
  nlohmann::ordered_json prov;
  prov["schema_version"] = kSchemaVersion;
  prov["provenance"] = ingest::provenance_json(filtered);
  prov["train_samples"] = train.samples.size();
  prov["test_samples"] = test.samples.size();
  detail::write_json(c.output_dir / "provenance.json", prov);
  return {std::move(filtered), std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

/// Builds evaluation pairs from test samples and a generation source.
inline std::vector<metrics::EvalPair> build_eval_pairs(const ExperimentConfig& c) {
  const MessageKind kind = c.task == Task::Reply ? MessageKind::Reply : MessageKind::Post;
  std::vector<std::pair<std::string, std::string>> texts;  // (original, generated)

  if (auto gen_path = c.path("generations")) {
    std::ifstream in(*gen_path);
    if (!in) throw DataError("cannot read " + gen_path->string());
    std::string line;
    while (std::getline(in, line)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        const auto j = nlohmann::json::parse(line);
        texts.emplace_back(j.at("original").get<std::string>(), j.at("generated").get<std::string>());
      } catch (const nlohmann::json::exception& e) {
        throw DataError("generations file: " + std::string(e.what()));
      }
    }
  } else {
    const auto test = detail::read_samples(c.require("test"));
    std::vector<ingest::RawSample> train;
    if (auto tp = c.path("train")) train = detail::read_samples(*tp);
    if (c.provider.kind == "markov" && train.empty()) throw ConfigError("markov provider needs data.train");

    const auto corpus_texts = detail::texts_of(train, kind);
    if (c.provider.kind == "markov" && corpus_texts.empty())
      throw DataError("training split has no " + std::string(to_string(kind)) + " samples for the markov baseline");
    const auto generator = detail::make_generator(c, corpus_texts);
    const auto templates = detail::load_templates(c);
    const auto personas = detail::load_personas(c);

    std::vector<const ingest::RawSample*> targets;
    for (const auto& s : test)
      if (s.kind == kind && s.language == c.language) targets.push_back(&s);

    for (std::size_t i = 0; i < targets.size(); ++i) {
      const auto& s = *targets[i];
      Prompt prompt;
      if (kind == MessageKind::Post) {
        auto it = personas.find(s.user_id);
        const Persona persona = it != personas.end() ? it->second : Persona{s.user_id, "unaffiliated", c.language};
        prompt = build_post_prompt(*templates, persona, s.topic.value_or("general"));
      } else {
        // Few-shot pairs: the user's other replies in the split, newest last.
        ReplyHistory history(c.ingest.per_user_cap);
        std::vector<const ingest::RawSample*> own;
        for (const auto& o : test)
          if (&o != &s && o.user_id == s.user_id && o.kind == MessageKind::Reply) own.push_back(&o);
        std::stable_sort(own.begin(), own.end(), [](auto* a, auto* b) { return a->timestamp < b->timestamp; });
        for (auto* o : own) history.push(*o->reply_to_text, o->text);
        Message post;
        post.text = *s.reply_to_text;
        prompt = build_reply_prompt(*templates, history, post);
      }
      const auto seed = mix_seed(c.seed, i);
      texts.emplace_back(s.text, generator->generate({std::move(prompt), s.text, seed}));
    }
  }

  if (texts.empty()) throw DataError("no evaluation pairs for the configured task and language");

  std::vector<std::string> originals, generated;
  for (const auto& [o, g] : texts) {
    originals.push_back(o);
    generated.push_back(g);
  }
  const auto embedder = detail::make_embedder(c);
  const auto e_orig = embedder->embed(originals);
  const auto e_gen = embedder->embed(generated);
  const auto labels = detail::make_labels(c);

  std::vector<metrics::EvalPair> pairs(texts.size());
  for (std::size_t i = 0; i < texts.size(); ++i) {
    pairs[i].original = originals[i];
    pairs[i].generated = generated[i];
    pairs[i].embeddings = std::pair{e_orig[i], e_gen[i]};
  }
  if (labels) {
    for (const auto& category : metrics::label_categories()) {
      LabelScores lo, lg;
      try {
        lo = labels->classify(originals, category);
        lg = labels->classify(generated, category);
      } catch (const DataError&) {
        continue;  // category absent from the label source
      }
      for (std::size_t i = 0; i < texts.size(); ++i)
        pairs[i].labels[category] = {lo.subclass_names, lo.scores[i], lg.scores[i]};
    }
  }
  return pairs;
}

struct EvaluateResult {
  metrics::MetricReport report;
  fs::path json_path;
  fs::path table_path;
};

inline EvaluateResult cmd_evaluate(const ExperimentConfig& c) {
  if (c.task != Task::Post && c.task != Task::Reply) throw ConfigError("evaluate needs task = post or reply");
  if (!c.path("generations")) detail::require_file(c.require("test"), "data.test");
  for (const char* key : {"generations", "train", "personas"})
    if (auto p = c.path(key)) detail::require_file(*p, std::string("data.") + key);
  detail::validate_sources(c);
  detail::prepare_output(c);

  const auto pairs = build_eval_pairs(c);
  EvaluateResult r;
  r.report = metrics::aggregate_report(pairs, c.metrics);

  auto j = metrics::to_json(r.report);
  j["provider"] = c.path("generations") ? "pregenerated" : c.provider.kind;
  j["embeddings"] = c.embeddings.source;
  j["pairs_available"] = pairs.size();
  const std::string stem = std::string("report_") + metrics::to_string(r.report.task) + "_" +
                           twon::to_string(r.report.language) + "_" + r.report.condition;
  r.json_path = c.output_dir / (stem + ".json");
  r.table_path = c.output_dir / (stem + ".txt");
  detail::write_json(r.json_path, j);
  std::ofstream(r.table_path, std::ios::binary) << metrics::to_table(r.report);
  return r;
}

// ---------------------------------------------------------------------------
// train-scorer
// ---------------------------------------------------------------------------

struct TrainScorerResult {
  likelihood::ScorerParams params;
  likelihood::ClassifierMetrics train_metrics;
  likelihood::ClassifierMetrics test_metrics;
  std::vector<double> loss_curve;
  fs::path params_path;
};

inline std::vector<likelihood::LikelihoodExample> load_likelihood_split(const ExperimentConfig& c,
                                                                        const std::string& examples_key,
                                                                        const std::string& corpus_key,
                                                                        const EmbeddingSource* embedder) {
  if (auto p = c.path(examples_key)) {
    std::ifstream in(*p);
    if (!in) throw DataError("cannot read " + p->string());
    return ingest::read_examples(in);
  }
  const auto corpus = ingest::Corpus::from(detail::read_samples(c.require(corpus_key)));
  auto ds = ingest::build_likelihood_dataset(corpus, *embedder, {c.seed, c.scorer.history_cap});
  for (const auto& s : ds.skipped) std::cerr << "skipped user '" << s.user << "': " << s.reason << "\n";
  return std::move(ds.examples);
}

inline TrainScorerResult cmd_train_scorer(const ExperimentConfig& c) {
  const bool from_examples = c.path("likelihood_train").has_value();
  if (from_examples) {
    detail::require_file(c.require("likelihood_train"), "data.likelihood_train");
    detail::require_file(c.require("likelihood_test"), "data.likelihood_test");
  } else {
    detail::require_file(c.require("train"), "data.train");
    detail::require_file(c.require("test"), "data.test");
  }
  detail::validate_sources(c);
  detail::prepare_output(c);

  std::unique_ptr<EmbeddingSource> embedder;
  if (!from_examples) embedder = detail::make_embedder(c);
  const auto train_set = load_likelihood_split(c, "likelihood_train", "train", embedder.get());
  const auto test_set = load_likelihood_split(c, "likelihood_test", "test", embedder.get());
  if (train_set.empty()) throw DataError("likelihood training set is empty");
  if (test_set.empty()) throw DataError("likelihood test set is empty");
  ingest::check_balanced(train_set);
  ingest::check_balanced(test_set);

  const std::size_t d = train_set.front().post.dim();
  auto trained = likelihood::train(train_set, d, c.scorer.train);

  TrainScorerResult r;
  r.params = std::move(trained.params);
  r.loss_curve = std::move(trained.loss_curve);
  r.train_metrics = likelihood::evaluate_classifier(r.params, train_set, c.scorer.threshold);
  r.test_metrics = likelihood::evaluate_classifier(r.params, test_set, c.scorer.threshold);

  r.params_path = c.output_dir / "scorer.bin";
  {
    std::ofstream out(r.params_path, std::ios::binary);
    likelihood::save_params(out, r.params);
  }
  detail::write_json(c.output_dir / "scorer.json", likelihood::params_metadata(r.params, c.scorer.train, r.loss_curve));
  nlohmann::ordered_json rep;
  rep["schema_version"] = kSchemaVersion;
  rep["threshold"] = c.scorer.threshold;
  rep["train"] = likelihood::to_json(r.train_metrics);
  rep["test"] = likelihood::to_json(r.test_metrics);
  rep["train_examples"] = train_set.size();
  rep["test_examples"] = test_set.size();
  detail::write_json(c.output_dir / "scorer_report.json", rep);
  return r;
}

// ---------------------------------------------------------------------------
// fit-mechanics
// ---------------------------------------------------------------------------

/// JSON Lines: {"agent": id, "inbox": [message...], "observed": [message...]}
inline std::vector<FeedObservation> read_observations(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw DataError("cannot read " + p.string());
  std::vector<FeedObservation> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      FeedObservation o;
      o.agent = AgentId(j.value("agent", std::string()));
      for (const auto& m : j.at("inbox")) o.inbox.push_back(message_from_json(m));
      for (const auto& m : j.at("observed")) o.observed_feed.push_back(message_from_json(m));
      out.push_back(std::move(o));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("observations file: " + std::string(e.what()));
    }
  }
  return out;
}

inline std::vector<MechanicsConfig> default_family() {
  return {make_mechanics({MechanicsVariant::Identity}), make_mechanics({MechanicsVariant::Chronological}),
          make_mechanics({MechanicsVariant::ReverseChronological})};
}

inline nlohmann::ordered_json to_json(const MechanicsFit& fit, std::span<const MechanicsConfig> family) {
  nlohmann::ordered_json j;
  j["schema_version"] = kSchemaVersion;
  j["config"] = to_json(fit.config);
  j["loss"] = fit.loss;
  j["index"] = fit.index;
  j["family"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < family.size(); ++i)
    j["family"].push_back({{"config", to_json(family[i])}, {"loss", fit.family_loss[i]}});
  return j;
}

inline MechanicsFit cmd_fit_mechanics(const ExperimentConfig& c) {
  const auto obs_path = c.require("observations");
  detail::require_file(obs_path, "data.observations");
  detail::prepare_output(c);
  const auto observations = read_observations(obs_path);
  const auto family = c.fit_family.empty() ? default_family() : c.fit_family;
  auto fit = fit_mechanics(observations, family);
  detail::write_json(c.output_dir / "mechanics_fit.json", to_json(fit, family));
  return fit;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

/// Checks the simulation bundle schema: q never travels without L_b and L_r.
/// Returns the list of violations (empty when valid).
inline std::vector<std::string> validate_bundle(const nlohmann::json& b) {
  std::vector<std::string> errs;
  auto need = [&](const nlohmann::json& obj, const std::string& path, const char* key, auto pred, const char* type) {
    if (!obj.is_object() || !obj.contains(key)) {
      errs.push_back(path + "." + key + " is missing");
      return false;
    }
    if (!pred(obj.at(key))) {
      errs.push_back(path + "." + key + " must be " + type);
      return false;
    }
    return true;
  };
  auto is_obj = [](const nlohmann::json& v) { return v.is_object(); };
  auto is_num = [](const nlohmann::json& v) { return v.is_number(); };
  auto is_str = [](const nlohmann::json& v) { return v.is_string(); };
  auto is_int = [](const nlohmann::json& v) { return v.is_number_integer(); };
  auto is_arr = [](const nlohmann::json& v) { return v.is_array(); };

  if (!b.is_object()) return {"bundle must be an object"};
  need(b, "$", "schema_version", is_int, "an integer");
  need(b, "$", "kind", [](const auto& v) { return v == "twon-simulation-bundle"; }, "\"twon-simulation-bundle\"");
  need(b, "$", "seed", is_int, "an integer");
  need(b, "$", "ticks", is_int, "an integer");
  if (need(b, "$", "q", is_obj, "an object")) {
    need(b["q"], "$.q", "metric", is_str, "a string");
    need(b["q"], "$.q", "value", is_num, "a number");
  }
  if (need(b, "$", "realism", is_obj, "an object")) {
    const auto& r = b["realism"];
    if (need(r, "$.realism", "L_b", is_obj, "an object")) {
      const auto& lb = r["L_b"];
      need(lb, "$.realism.L_b", "n", is_int, "an integer");
      need(lb, "$.realism.L_b", "k", is_int, "an integer");
      if (need(lb, "$.realism.L_b", "metrics", is_obj, "an object")) {
        if (lb["metrics"].empty()) errs.push_back("$.realism.L_b.metrics is empty");
        for (const auto& [name, v] : lb["metrics"].items()) {
          need(v, "$.realism.L_b.metrics." + name, "mean", is_num, "a number");
          if (need(v, "$.realism.L_b.metrics." + name, "std", is_num, "a number") && v["std"].get<double>() < 0)
            errs.push_back("$.realism.L_b.metrics." + name + ".std is negative");
        }
      }
    }
    if (need(r, "$.realism", "L_r", is_obj, "an object")) {
      if (need(r["L_r"], "$.realism.L_r", "loss", is_num, "a number")) {
        const double l = r["L_r"]["loss"].get<double>();
        if (l < 0.0 || l > 1.0) errs.push_back("$.realism.L_r.loss outside [0,1]");
      }
      need(r["L_r"], "$.realism.L_r", "config", is_obj, "an object");
    }
  }
  if (need(b, "$", "transcript", is_obj, "an object")) {
    need(b["transcript"], "$.transcript", "messages", is_arr, "an array");
    need(b["transcript"], "$.transcript", "count", is_int, "an integer");
  }
  return errs;
}

struct SimulateResult {
  SimulationRun run;
  double q = 0.0;
  nlohmann::ordered_json bundle;
  fs::path bundle_path;
  fs::path transcript_path;
};

inline SimulateResult cmd_simulate(const ExperimentConfig& c) {
  // Everything the bundle needs is checked before the first tick.
  const auto lexicon_path = c.require("lexicon");
  const auto lb_path = c.require("lb_report");
  const auto lr_path = c.require("lr_report");
  detail::require_file(lexicon_path, "data.lexicon");
  detail::require_file(lb_path, "data.lb_report");
  detail::require_file(lr_path, "data.lr_report");
  if (auto p = c.path("train")) detail::require_file(*p, "data.train");
  if (c.simulate.agents.empty()) throw ConfigError("simulate needs at least one agent");
  if (c.simulate.ticks < 1) throw ConfigError("simulate.ticks must be at least 1");

  const auto lexicon = metrics::LexiconMetric::from_file(lexicon_path);
  const auto lb_json = detail::read_json(lb_path);
  const auto lb = metrics::report_from_json(lb_json);
  const auto lr_json = detail::read_json(lr_path);
  if (!lr_json.contains("loss") || !lr_json.at("loss").is_number() || !lr_json.contains("config"))
    throw DataError("data.lr_report lacks loss/config");
  detail::prepare_output(c);

  World world;
  world.rng_seed = c.seed;
  for (const auto& a : c.simulate.agents) world.add_agent(a.id, a.persona);
  for (const auto& s : c.simulate.seed_posts) {
    Message m;
    m.sender = s.sender;
    m.recipient = s.recipient;
    m.text = s.text;
    m.topic = s.topic;
    world.emit(std::move(m));
  }

  std::vector<ingest::RawSample> train;
  if (auto p = c.path("train")) train = detail::read_samples(*p);
  const auto histories = ingest::build_reply_pairs(ingest::Corpus::from(train), c.ingest.per_user_cap);

  std::shared_ptr<const PromptTemplates> templates;
  std::shared_ptr<const TextGenerator> post_gen, reply_gen;
  if (c.provider.kind != "stub") {
    templates = detail::load_templates(c);
    if (c.provider.kind == "markov") {
      auto posts = detail::texts_of(train, MessageKind::Post);
      auto replies = detail::texts_of(train, MessageKind::Reply);
      if (posts.empty() || replies.empty()) throw DataError("markov simulation needs posts and replies in data.train");
      post_gen = detail::make_generator(c, posts);
      reply_gen = detail::make_generator(c, replies);
    } else {
      post_gen = reply_gen = detail::make_generator(c, {});
    }
  }

  BehaviorMap behaviors;
  for (const auto& a : c.simulate.agents) {
    if (c.provider.kind == "stub") {
      behaviors[a.id] = std::make_shared<StubProvider>(a.role, c.provider.stub_text, c.provider.policy);
      continue;
    }
    GenerativeProvider::Options o;
    o.role = a.role;
    o.policy = c.provider.policy;
    if (!a.topics.empty()) o.topics = a.topics;
    if (auto it = histories.find(a.id.value); it != histories.end()) o.history = it->second;
    behaviors[a.id] = std::make_shared<GenerativeProvider>(templates, a.role == AgentRole::Poster ? post_gen : reply_gen,
                                                          std::move(o));
  }

  SimulateResult r;
  r.run = run_simulation(world, c.mechanics, behaviors, c.simulate.ticks);
  r.q = metrics::discourse_metric_q(r.run.transcript, lexicon);

  r.transcript_path = c.output_dir / "transcript.jsonl";
  {
    std::ofstream out(r.transcript_path, std::ios::binary);
    write_transcript(out, r.run.transcript);
  }

  nlohmann::ordered_json b;
  b["schema_version"] = kSchemaVersion;
  b["kind"] = "twon-simulation-bundle";
  b["seed"] = c.seed;
  b["ticks"] = c.simulate.ticks;
  b["provider"] = c.provider.kind;
  b["mechanics"] = to_json(c.mechanics);
  b["q"] = {{"metric", lexicon.name()}, {"value", r.q}};
  b["realism"]["L_b"] = metrics::to_json(lb);
  b["realism"]["L_r"] = {{"loss", lr_json.at("loss").get<double>()},
                         {"config", nlohmann::ordered_json::parse(lr_json.at("config").dump())}};
  b["transcript"]["count"] = r.run.transcript.size();
  b["transcript"]["file"] = "transcript.jsonl";
  b["transcript"]["messages"] = nlohmann::ordered_json::array();
  for (const auto& m : r.run.transcript) b["transcript"]["messages"].push_back(to_json(m));

  const auto errs = validate_bundle(nlohmann::json::parse(b.dump()));
  if (!errs.empty()) throw DataError("simulation bundle failed validation: " + errs.front());
  r.bundle = b;
  r.bundle_path = c.output_dir / "bundle.json";
  detail::write_json(r.bundle_path, b);
  return r;
}

// ---------------------------------------------------------------------------

/// Process exit code for an error category.
inline int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::Config: return 2;
    case ErrorKind::Input:
    case ErrorKind::Data:
    case ErrorKind::Lookup: return 3;
    default: return 4;
  }
}

inline std::string error_json(const Error& e) {
  nlohmann::ordered_json j;
  j["error"] = {{"kind", to_string(e.kind())}, {"message", e.what()}, {"exit_code", exit_code(e.kind())}};
  if (const auto* s = dynamic_cast<const SimulationError*>(&e)) j["error"]["tick"] = s->tick();
  if (const auto* t = dynamic_cast<const TrainingError*>(&e)) j["error"]["epoch"] = t->epoch();
  return j.dump();
}

}  // namespace twon::harness
