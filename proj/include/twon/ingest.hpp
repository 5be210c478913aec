#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <regex>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "twon/behavior.hpp"
#include "twon/embedding.hpp"
#include "twon/error.hpp"
#include "twon/likelihood.hpp"
#include "twon/message.hpp"
#include "twon/rng.hpp"
#include "twon/text.hpp"

namespace twon::ingest {

struct RawSample {
  std::string user_id;
  std::string text;
  MessageKind kind = MessageKind::Post;
  std::optional<std::string> reply_to_text;
  std::optional<std::string> topic;
  Language language = Language::EN;
  std::int64_t timestamp = 0;

  bool operator==(const RawSample&) const = default;
};

/// Samples plus a log of how many were removed by each rule.
struct Corpus {
  std::vector<RawSample> samples;
  std::size_t initial_size = 0;
  std::map<std::string, std::size_t> removed;

  static Corpus from(std::vector<RawSample> samples) {
    Corpus c;
    c.initial_size = samples.size();
    c.samples = std::move(samples);
    return c;
  }

  std::size_t removed_total() const {
    std::size_t s = 0;
    for (const auto& [rule, n] : removed) s += n;
    return s;
  }
};

// --- JSON Lines ----------------------------------------------------------------

inline nlohmann::ordered_json to_json(const RawSample& s) {
  nlohmann::ordered_json j;
  j["user_id"] = s.user_id;
  j["text"] = s.text;
  j["kind"] = to_string(s.kind);
  j["reply_to_text"] = s.reply_to_text ? nlohmann::ordered_json(*s.reply_to_text) : nlohmann::ordered_json(nullptr);
  j["topic"] = s.topic ? nlohmann::ordered_json(*s.topic) : nlohmann::ordered_json(nullptr);
  j["language"] = to_string(s.language);
  j["timestamp"] = s.timestamp;
  return j;
}

inline RawSample sample_from_json(const nlohmann::json& j) {
  RawSample s;
  s.user_id = j.at("user_id").get<std::string>();
  s.text = j.at("text").get<std::string>();
  s.kind = parse_message_kind(j.at("kind").get<std::string>());
  if (j.contains("reply_to_text") && !j.at("reply_to_text").is_null())
    s.reply_to_text = j.at("reply_to_text").get<std::string>();
  if (j.contains("topic") && !j.at("topic").is_null()) s.topic = j.at("topic").get<std::string>();
  s.language = parse_language(j.at("language").get<std::string>());
  s.timestamp = j.at("timestamp").get<std::int64_t>();
  if (s.user_id.empty()) throw DataError("sample without user_id");
  if (s.kind == MessageKind::Reply && !s.reply_to_text) throw DataError("reply sample without reply_to_text");
  return s;
}

inline std::vector<RawSample> read_samples(std::istream& is) {
  std::vector<RawSample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(sample_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("sample line " + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      throw DataError("sample line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline void write_samples(std::ostream& os, std::span<const RawSample> samples) {
  for (const auto& s : samples) os << to_json(s).dump() << '\n';
}

// --- filters -------------------------------------------------------------------

inline constexpr std::size_t kDefaultMinChars = 32;

enum class FilterReason { Keep, Url, Retweet, TooShort };

inline const char* to_string(FilterReason r) {
  switch (r) {
    case FilterReason::Keep: return "keep";
    case FilterReason::Url: return "url";
    case FilterReason::Retweet: return "retweet";
    case FilterReason::TooShort: return "too_short";
  }
  return "?";
}

/// URL detector: an http(s) scheme, a "www." prefix, or a bare domain with a
/// common top-level domain not followed by further name characters.
inline const std::regex& url_pattern() {
  static const std::regex re(
      R"((https?://\S+)|(\bwww\.\S+)|(\b[a-z0-9-]+(\.[a-z0-9-]+)*\.(com|org|net|de|io|co|uk|eu|gov|edu|info|ly|me|tv|app)(?![a-z0-9-])))",
      std::regex::ECMAScript | std::regex::icase | std::regex::optimize);
  return re;
}

inline bool contains_url(const std::string& text) { return std::regex_search(text, url_pattern()); }

inline bool is_retweet(std::string_view text) { return text.starts_with("RT ") || text.starts_with("RT@"); }

/// First matching drop rule (url, retweet, too_short) or Keep. Length is in
/// code points after NFC; texts shorter than min_chars are dropped.
inline FilterReason filter_sample(const RawSample& s, std::size_t min_chars = kDefaultMinChars) {
  if (contains_url(s.text)) return FilterReason::Url;
  if (is_retweet(s.text)) return FilterReason::Retweet;
  if (text::char_count(s.text) < min_chars) return FilterReason::TooShort;
  return FilterReason::Keep;
}

inline Corpus filter_corpus(const Corpus& in, std::size_t min_chars = kDefaultMinChars) {
  Corpus out;
  out.initial_size = in.initial_size;
  out.removed = in.removed;
  for (const auto& s : in.samples) {
    const auto r = filter_sample(s, min_chars);
    if (r == FilterReason::Keep) out.samples.push_back(s);
    else ++out.removed[to_string(r)];
  }
  return out;
}

/// Keeps the samples of the top_k users by sample count; ties go to the
/// lexicographically smaller user id.
inline Corpus select_active_users(const Corpus& in, std::size_t top_k) {
  if (top_k == 0) throw InputError("top_k must be positive");
  if (in.samples.empty()) throw InputError("cannot select users from an empty corpus");
  std::map<std::string, std::size_t> counts;
  for (const auto& s : in.samples) ++counts[s.user_id];
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::set<std::string> keep;
  for (std::size_t i = 0; i < std::min(top_k, ranked.size()); ++i) keep.insert(ranked[i].first);

  Corpus out;
  out.initial_size = in.initial_size;
  out.removed = in.removed;
  for (const auto& s : in.samples) {
    if (keep.contains(s.user_id)) out.samples.push_back(s);
    else ++out.removed["inactive_user"];
  }
  return out;
}

namespace detail {

inline std::vector<const RawSample*> replies_by_time(const Corpus& c, const std::string& user) {
  std::vector<const RawSample*> out;
  for (const auto& s : c.samples)
    if (s.user_id == user && s.kind == MessageKind::Reply) out.push_back(&s);
  std::stable_sort(out.begin(), out.end(), [](auto* a, auto* b) { return a->timestamp < b->timestamp; });
  return out;
}

inline std::set<std::string> users_of(const Corpus& c) {
  std::set<std::string> u;
  for (const auto& s : c.samples) u.insert(s.user_id);
  return u;
}

}  // namespace detail

/// Chronological <post, reply> pairs per user, keeping the newest cap.
inline std::map<std::string, ReplyHistory> build_reply_pairs(const Corpus& corpus, std::size_t per_user_cap) {
  if (per_user_cap == 0) throw InputError("per_user_cap must be positive");
  std::map<std::string, ReplyHistory> out;
  for (const auto& user : detail::users_of(corpus)) {
    const auto replies = detail::replies_by_time(corpus, user);
    if (replies.empty()) continue;
    ReplyHistory h(per_user_cap);
    for (const RawSample* r : replies) h.push(*r->reply_to_text, r->text);
    out.emplace(user, std::move(h));
  }
  return out;
}

struct SkippedUser {
  std::string user;
  std::string reason;
};

struct LikelihoodDataset {
  std::vector<likelihood::LikelihoodExample> examples;
  std::vector<SkippedUser> skipped;
};

struct LikelihoodOptions {
  std::uint64_t seed = 0;
  std::size_t history_cap = 8;  // most recent replies used as the history
};

/// Balanced reply-likelihood examples. Positives are the distinct posts a
/// user replied to. Negatives are corpus posts inside the user's activity
/// window that the user did not reply to, which counts as a decision not to
/// reply. Each user contributes m positives and m negatives,
/// m = min(#positives, #negatives), drawn with a seeded shuffle. The history
/// of an example is the user's replies excluding any reply to the target post.
inline LikelihoodDataset build_likelihood_dataset(const Corpus& corpus, const EmbeddingSource& embedder,
                                                  const LikelihoodOptions& options = {}) {
  LikelihoodDataset out;
  std::vector<const RawSample*> posts;
  for (const auto& s : corpus.samples)
    if (s.kind == MessageKind::Post) posts.push_back(&s);

  for (const auto& user : detail::users_of(corpus)) {
    const auto replies = detail::replies_by_time(corpus, user);
    std::set<std::string> replied;
    for (const RawSample* r : replies) replied.insert(*r->reply_to_text);
    if (replied.empty()) {
      out.skipped.push_back({user, "no replied-to posts"});
      continue;
    }
    std::int64_t lo = std::numeric_limits<std::int64_t>::max(), hi = std::numeric_limits<std::int64_t>::min();
    for (const auto& s : corpus.samples)
      if (s.user_id == user) {
        lo = std::min(lo, s.timestamp);
        hi = std::max(hi, s.timestamp);
      }
    std::set<std::string> negative_pool;
    for (const RawSample* p : posts)
      if (p->user_id != user && p->timestamp >= lo && p->timestamp <= hi && !replied.contains(p->text))
        negative_pool.insert(p->text);
    if (negative_pool.empty()) {
      out.skipped.push_back({user, "no unreplied posts in the user's time window"});
      continue;
    }

    std::vector<std::string> pos(replied.begin(), replied.end());
    std::vector<std::string> neg(negative_pool.begin(), negative_pool.end());
    Rng rng(mix_seed(options.seed, fnv1a(user)));
    rng.shuffle(std::span<std::string>(pos));
    rng.shuffle(std::span<std::string>(neg));
    const std::size_t m = std::min(pos.size(), neg.size());
    pos.resize(m);
    neg.resize(m);

    // History candidates: newest replies first.
    std::vector<const RawSample*> recent(replies.rbegin(), replies.rend());
    auto history_for = [&](const std::string& target) {
      std::vector<std::string> h;
      for (const RawSample* r : recent) {
        if (h.size() >= options.history_cap) break;
        if (*r->reply_to_text != target) h.push_back(r->text);
      }
      std::reverse(h.begin(), h.end());
      return h;
    };

    std::vector<std::pair<std::string, int>> targets;
    for (auto& p : pos) targets.emplace_back(p, 1);
    for (auto& n : neg) targets.emplace_back(n, 0);

    std::vector<std::vector<std::string>> histories;
    for (const auto& [t, label] : targets) histories.push_back(history_for(t));
    if (std::any_of(histories.begin(), histories.end(), [](const auto& h) { return h.empty(); })) {
      out.skipped.push_back({user, "not enough replies to form a history for every target"});
      continue;
    }

    for (std::size_t i = 0; i < targets.size(); ++i) {
      likelihood::LikelihoodExample ex;
      ex.user = user;
      ex.label = targets[i].second;
      ex.history = embedder.embed(histories[i]);
      ex.post = embedder.embed(std::span<const std::string>(&targets[i].first, 1)).front();
      out.examples.push_back(std::move(ex));
    }
  }
  return out;
}

/// Throws DataError naming the first user whose examples are not balanced.
inline void check_balanced(std::span<const likelihood::LikelihoodExample> examples) {
  std::map<std::string, std::pair<std::size_t, std::size_t>> counts;
  for (const auto& ex : examples) {
    if (ex.label == 1) ++counts[ex.user].first;
    else ++counts[ex.user].second;
  }
  for (const auto& [user, c] : counts)
    if (c.first != c.second)
      throw DataError("likelihood data for user '" + user + "' is unbalanced: " + std::to_string(c.first) +
                      " positive vs " + std::to_string(c.second) + " negative");
}

/// User-level split: every sample of a user lands on the same side.
inline std::pair<Corpus, Corpus> split(const Corpus& corpus, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw InputError("train_fraction must lie in (0,1)");
  const auto user_set = detail::users_of(corpus);
  if (user_set.size() < 2) throw InputError("a user-level split needs at least two users");
  std::vector<std::string> users(user_set.begin(), user_set.end());
  Rng rng(seed);
  rng.shuffle(std::span<std::string>(users));
  auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(users.size())));
  n_train = std::clamp<std::size_t>(n_train, 1, users.size() - 1);
  const std::set<std::string> train_users(users.begin(), users.begin() + static_cast<std::ptrdiff_t>(n_train));

  std::vector<RawSample> train, test;
  for (const auto& s : corpus.samples) (train_users.contains(s.user_id) ? train : test).push_back(s);
  return {Corpus::from(std::move(train)), Corpus::from(std::move(test))};
}

inline nlohmann::ordered_json provenance_json(const Corpus& c) {
  nlohmann::ordered_json j;
  j["input"] = c.initial_size;
  j["output"] = c.samples.size();
  j["removed"] = nlohmann::ordered_json::object();
  for (const auto& [rule, n] : c.removed) j["removed"][rule] = n;
  return j;
}

// --- likelihood example files ------------------------------------------------------
// JSON Lines: {"user": "...", "label": 0|1, "history": [[d floats], ...], "post": [d floats]}

inline nlohmann::ordered_json to_json(const likelihood::LikelihoodExample& ex) {
  nlohmann::ordered_json j;
  j["user"] = ex.user;
  j["label"] = ex.label;
  std::vector<std::vector<double>> h;
  for (const auto& e : ex.history) h.push_back(e.values);
  j["history"] = h;
  j["post"] = ex.post.values;
  return j;
}

inline std::vector<likelihood::LikelihoodExample> read_examples(std::istream& is) {
  std::vector<likelihood::LikelihoodExample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      likelihood::LikelihoodExample ex;
      ex.user = j.value("user", std::string());
      ex.label = j.at("label").get<int>();
      if (ex.label != 0 && ex.label != 1) throw DataError("label must be 0 or 1");
      for (const auto& row : j.at("history")) ex.history.emplace_back(row.get<std::vector<double>>());
      ex.post = EmbeddingVector(j.at("post").get<std::vector<double>>());
      out.push_back(std::move(ex));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("example line " + std::to_string(lineno) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("example line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace twon::ingest
