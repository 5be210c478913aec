#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "twon/core_model.hpp"
#include "twon/error.hpp"
#include "twon/message.hpp"
#include "twon/rng.hpp"
#include "twon/text.hpp"

namespace twon {

// ---------------------------------------------------------------------------
// Prompts
// ---------------------------------------------------------------------------

enum class PromptTask { Post, Reply };
enum class Constraint { ReplyOnly };

struct Prompt {
  PromptTask task = PromptTask::Post;
  std::string rendered_text;
  std::vector<Constraint> constraints;

  bool reply_only() const {
    for (auto c : constraints)
      if (c == Constraint::ReplyOnly) return true;
    return false;
  }

  /// Stable content id, used to tag transport and generation errors.
  std::string id() const {
    std::ostringstream os;
    os << std::hex << fnv1a(rendered_text);
    return os.str();
  }
};

/// Prompt wording lives in text files so it can change without a rebuild.
/// Placeholders: {name} {party} {language} {topic} in the post template,
/// {history_pairs} {post} in the reply template, {post} {reply} in the
/// per-pair template.
struct PromptTemplates {
  std::string post;
  std::string reply;
  std::string history_pair;

  static PromptTemplates load(const std::filesystem::path& dir) {
    auto slurp = [&](const char* name) {
      const auto path = dir / name;
      std::ifstream in(path, std::ios::binary);
      if (!in) throw ConfigError("cannot read prompt template " + path.string());
      std::ostringstream ss;
      ss << in.rdbuf();
      return ss.str();
    };
    return {slurp("post.txt"), slurp("reply.txt"), slurp("history_pair.txt")};
  }
};

/// Single-pass substitution of {key} placeholders. Substituted values are
/// never rescanned; unknown placeholders are left as written.
inline std::string render_template(std::string_view tpl, const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(tpl.size());
  std::size_t i = 0;
  while (i < tpl.size()) {
    if (tpl[i] == '{') {
      const auto close = tpl.find('}', i + 1);
      if (close != std::string_view::npos) {
        auto it = values.find(std::string(tpl.substr(i + 1, close - i - 1)));
        if (it != values.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out += tpl[i++];
  }
  return out;
}

inline const char* language_name(Language l) { return l == Language::EN ? "English" : "German"; }

inline Prompt build_post_prompt(const PromptTemplates& templates, const Persona& persona, std::string_view topic) {
  if (topic.empty()) throw InputError("post prompt needs a non-empty topic");
  validate(persona);
  Prompt p;
  p.task = PromptTask::Post;
  p.rendered_text = render_template(templates.post, {{"name", persona.name},
                                                     {"party", persona.party},
                                                     {"language", language_name(persona.language)},
                                                     {"topic", std::string(topic)}});
  return p;
}

/// Most recent <post, reply> pairs of one user, oldest first.
class ReplyHistory {
 public:
  explicit ReplyHistory(std::size_t max_pairs = 5) : max_pairs_(max_pairs) {
    if (max_pairs == 0) throw InputError("ReplyHistory max_pairs must be positive");
  }

  void push(std::string post, std::string reply) {
    if (post.empty() || reply.empty()) throw InputError("history pair texts must be non-empty");
    pairs_.emplace_back(std::move(post), std::move(reply));
    while (pairs_.size() > max_pairs_) pairs_.pop_front();
  }

  const std::deque<std::pair<std::string, std::string>>& pairs() const { return pairs_; }
  std::size_t size() const { return pairs_.size(); }
  bool empty() const { return pairs_.empty(); }
  std::size_t max_pairs() const { return max_pairs_; }

 private:
  std::size_t max_pairs_;
  std::deque<std::pair<std::string, std::string>> pairs_;
};

inline Prompt build_reply_prompt(const PromptTemplates& templates, const ReplyHistory& history, const Message& post) {
  std::string pairs;
  for (const auto& [p, r] : history.pairs())
    pairs += render_template(templates.history_pair, {{"post", p}, {"reply", r}});
  Prompt prompt;
  prompt.task = PromptTask::Reply;
  prompt.rendered_text = render_template(templates.reply, {{"history_pairs", pairs}, {"post", post.text}});
  prompt.constraints.push_back(Constraint::ReplyOnly);
  return prompt;
}

// ---------------------------------------------------------------------------
// Text generators
// ---------------------------------------------------------------------------

struct GenerationRequest {
  Prompt prompt;
  std::string reference;  // the observed text, only echo stubs look at it
  std::uint64_t seed = 0;
};

class TextGenerator {
 public:
  virtual ~TextGenerator() = default;
  virtual std::string generate(const GenerationRequest& request) const = 0;
  virtual std::string name() const = 0;
};

/// Returns the reference verbatim. Upper bound for every realism metric.
class EchoGenerator final : public TextGenerator {
 public:
  std::string generate(const GenerationRequest& r) const override {
    if (r.reference.empty()) throw GenerationError(r.prompt.id(), "echo generator has no reference text");
    return r.reference;
  }
  std::string name() const override { return "echo"; }
};

class FixedTextGenerator final : public TextGenerator {
 public:
  explicit FixedTextGenerator(std::string text) : text_(std::move(text)) {
    if (text_.empty()) throw InputError("fixed generator text must be non-empty");
  }
  std::string generate(const GenerationRequest&) const override { return text_; }
  std::string name() const override { return "fixed"; }

 private:
  std::string text_;
};

// ---------------------------------------------------------------------------
// Markov baseline
// ---------------------------------------------------------------------------

/// Token n-gram chain (order 1 or 2) with start/end sentinels.
///
/// probability() is add-one smoothed over the vocabulary plus the end
/// sentinel. generate() samples observed transitions only, so it reproduces
/// fragments of the training chains; smoothing mass is used for sampling only
/// in a context that was never observed.
class MarkovModel {
 public:
  static constexpr int kStart = -1;
  static constexpr int kEnd = -2;

  int order() const { return order_; }
  std::size_t vocabulary_size() const { return vocab_.size(); }
  const std::vector<std::string>& vocabulary() const { return vocab_; }

  /// Smoothed P(next | context); an empty `next` asks for the end sentinel.
  /// The context is the last `order` tokens; pad with "" for sentence start.
  double probability(std::span<const std::string> context, std::string_view next) const {
    const auto key = context_key(context);
    const int target = next.empty() ? kEnd : token_id(next);
    const double v = static_cast<double>(vocab_.size() + 1);
    auto it = transitions_.find(key);
    if (it == transitions_.end()) return 1.0 / v;
    std::uint64_t total = 0, hit = 0;
    for (const auto& [tok, count] : it->second) {
      total += count;
      if (tok == target) hit = count;
    }
    return (static_cast<double>(hit) + 1.0) / (static_cast<double>(total) + v);
  }

  /// Unsmoothed relative frequency.
  double mle_probability(std::span<const std::string> context, std::string_view next) const {
    const auto key = context_key(context);
    const int target = next.empty() ? kEnd : token_id(next);
    auto it = transitions_.find(key);
    if (it == transitions_.end()) return 0.0;
    std::uint64_t total = 0, hit = 0;
    for (const auto& [tok, count] : it->second) {
      total += count;
      if (tok == target) hit = count;
    }
    return total == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(total);
  }

  std::string generate(std::uint64_t seed, std::size_t max_tokens) const {
    if (max_tokens == 0) throw InputError("max_tokens must be positive");
    Rng rng(seed);
    std::vector<int> ctx(static_cast<std::size_t>(order_), kStart);
    std::string out;
    std::size_t produced = 0;
    while (produced < max_tokens) {
      const int next = sample(ctx, rng, produced == 0);
      if (next == kEnd) break;
      if (produced) out += ' ';
      out += vocab_[static_cast<std::size_t>(next)];
      ++produced;
      ctx.erase(ctx.begin());
      ctx.push_back(next);
    }
    return out;
  }

  friend MarkovModel markov_train(std::span<const std::string> corpus, int order);

 private:
  using Key = std::vector<int>;

  int token_id(std::string_view tok) const {
    auto it = index_.find(std::string(tok));
    return it == index_.end() ? std::numeric_limits<int>::min() : it->second;
  }

  Key context_key(std::span<const std::string> context) const {
    if (context.size() != static_cast<std::size_t>(order_))
      throw InputError("context must hold exactly " + std::to_string(order_) + " tokens");
    Key k;
    for (const auto& t : context) k.push_back(t.empty() ? kStart : token_id(t));
    return k;
  }

  int sample(const Key& ctx, Rng& rng, bool first) const {
    auto it = transitions_.find(ctx);
    if (it == transitions_.end() || it->second.empty()) {
      // Unseen context: uniform over vocabulary + end (add-one with zero counts).
      const auto n = vocab_.size() + (first ? 0 : 1);
      const auto pick = rng.below(n);
      return pick == vocab_.size() ? kEnd : static_cast<int>(pick);
    }
    std::uint64_t total = 0;
    for (const auto& [tok, count] : it->second) total += count;
    auto r = rng.below(total);
    for (const auto& [tok, count] : it->second) {
      if (r < count) return tok;
      r -= count;
    }
    return kEnd;
  }

  int order_ = 1;
  std::vector<std::string> vocab_;
  std::map<std::string, int> index_;
  std::map<Key, std::map<int, std::uint64_t>> transitions_;
};

inline MarkovModel markov_train(std::span<const std::string> corpus, int order) {
  if (order != 1 && order != 2) throw InputError("markov order must be 1 or 2");
  if (corpus.empty()) throw InputError("markov corpus is empty");
  MarkovModel m;
  m.order_ = order;
  bool any = false;
  for (const auto& doc : corpus) {
    const auto tokens = text::tokenize(doc);
    if (tokens.empty()) continue;
    any = true;
    std::vector<int> ctx(static_cast<std::size_t>(order), MarkovModel::kStart);
    for (const auto& t : tokens) {
      auto [it, inserted] = m.index_.try_emplace(t, static_cast<int>(m.vocab_.size()));
      if (inserted) m.vocab_.push_back(t);
      ++m.transitions_[ctx][it->second];
      ctx.erase(ctx.begin());
      ctx.push_back(it->second);
    }
    ++m.transitions_[ctx][MarkovModel::kEnd];
  }
  if (!any) throw InputError("markov corpus has no tokens");
  return m;
}

inline std::string markov_generate(const MarkovModel& model, std::uint64_t seed, std::size_t max_tokens) {
  return model.generate(seed, max_tokens);
}

class MarkovGenerator final : public TextGenerator {
 public:
  MarkovGenerator(std::shared_ptr<const MarkovModel> model, std::size_t max_tokens)
      : model_(std::move(model)), max_tokens_(max_tokens) {
    if (!model_) throw InputError("markov generator needs a model");
  }
  std::string generate(const GenerationRequest& r) const override { return model_->generate(r.seed, max_tokens_); }
  std::string name() const override { return "markov"; }

 private:
  std::shared_ptr<const MarkovModel> model_;
  std::size_t max_tokens_;
};

// ---------------------------------------------------------------------------
// Behavior providers
// ---------------------------------------------------------------------------

/// Posters start threads with broadcasts; repliers only ever answer.
enum class AgentRole { Poster, Replier };

struct ActivityPolicy {
  double post_probability = 1.0;   // per tick, posters only
  double reply_probability = 1.0;  // per feed message, repliers only
  std::size_t max_replies = std::numeric_limits<std::size_t>::max();
};

namespace detail {

inline Message reply_to(const AgentState& state, const Message& parent, std::string text) {
  Message m;
  m.sender = state.id;
  m.recipient = parent.sender;
  m.tick = state.tick();
  m.kind = MessageKind::Reply;
  m.reply_to = parent.id;
  m.text = std::move(text);
  m.topic = parent.topic;
  return m;
}

inline Message broadcast(const AgentState& state, std::string text, std::optional<std::string> topic) {
  Message m;
  m.sender = state.id;
  m.tick = state.tick();
  m.kind = MessageKind::Post;
  m.text = std::move(text);
  m.topic = std::move(topic);
  return m;
}

}  // namespace detail

/// Fixed-text provider for tests and dry runs. A replier answers feed
/// messages in curated order; a poster broadcasts.
class StubProvider final : public BehaviorProvider {
 public:
  StubProvider(AgentRole role, std::string text, ActivityPolicy policy = {})
      : role_(role), text_(std::move(text)), policy_(policy) {
    if (text_.empty()) throw InputError("stub text must be non-empty");
  }

  std::vector<Message> act(const AgentState& state, std::span<const Message> feed,
                           std::uint64_t seed) const override {
    Rng rng(seed);
    std::vector<Message> out;
    if (role_ == AgentRole::Poster) {
      if (rng.bernoulli(policy_.post_probability)) out.push_back(detail::broadcast(state, text_, std::nullopt));
      return out;
    }
    for (const auto& m : feed) {
      if (out.size() >= policy_.max_replies) break;
      if (rng.bernoulli(policy_.reply_probability)) out.push_back(detail::reply_to(state, m, text_));
    }
    return out;
  }

 private:
  AgentRole role_;
  std::string text_;
  ActivityPolicy policy_;
};

/// Prompted provider: builds persona or reply prompts and asks a generator.
class GenerativeProvider final : public BehaviorProvider {
 public:
  struct Options {
    AgentRole role = AgentRole::Replier;
    ActivityPolicy policy;
    std::vector<std::string> topics{"politics"};
    std::optional<ReplyHistory> history;  // few-shot pairs for replies
  };

  GenerativeProvider(std::shared_ptr<const PromptTemplates> templates, std::shared_ptr<const TextGenerator> generator,
                     Options options)
      : templates_(std::move(templates)), generator_(std::move(generator)), options_(std::move(options)) {
    if (!templates_ || !generator_) throw InputError("generative provider needs templates and a generator");
    if (options_.topics.empty()) throw InputError("generative provider needs at least one topic");
  }

  std::vector<Message> act(const AgentState& state, std::span<const Message> feed,
                           std::uint64_t seed) const override {
    Rng rng(seed);
    std::vector<Message> out;
    if (options_.role == AgentRole::Poster) {
      if (!rng.bernoulli(options_.policy.post_probability)) return out;
      if (!state.persona) throw BehaviorError("poster '" + state.id.value + "' has no persona");
      const auto& topic = options_.topics[rng.below(options_.topics.size())];
      auto prompt = build_post_prompt(*templates_, *state.persona, topic);
      auto text = generator_->generate({std::move(prompt), {}, rng.next()});
      out.push_back(detail::broadcast(state, std::move(text), topic));
      return out;
    }
    const ReplyHistory empty(1);
    const ReplyHistory& history = options_.history ? *options_.history : empty;
    for (const auto& m : feed) {
      if (out.size() >= options_.policy.max_replies) break;
      if (!rng.bernoulli(options_.policy.reply_probability)) continue;
      auto prompt = build_reply_prompt(*templates_, history, m);
      auto text = generator_->generate({std::move(prompt), {}, rng.next()});
      out.push_back(detail::reply_to(state, m, std::move(text)));
    }
    return out;
  }

 private:
  std::shared_ptr<const PromptTemplates> templates_;
  std::shared_ptr<const TextGenerator> generator_;
  Options options_;
};

}  // namespace twon
