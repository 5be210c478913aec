#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "twon/error.hpp"
#include "twon/message.hpp"
#include "twon/rng.hpp"
#include "twon/text.hpp"

namespace twon {

// Feed mechanics: the platform function that turns an agent's raw inbox into
// the curated feed it actually perceives. Only filtering and ranking are
// supported, so a curated feed is always an ordered subset of the inbox.

enum class MechanicsVariant { Identity, Chronological, ReverseChronological, RandomK, TopKByScore };

/// Ranking keys for TopKByScore. Both are deliberately simple stand-ins:
/// TextLength counts code points, ReplyCount counts replies to the message
/// that sit in the same inbox.
enum class ScoreKind { TextLength, ReplyCount };

struct MechanicsRule {
  MechanicsVariant variant = MechanicsVariant::Identity;
  std::size_t k = 0;
  std::uint64_t seed = 0;
  ScoreKind scoring = ScoreKind::TextLength;

  bool operator==(const MechanicsRule&) const = default;
};

/// Base rule plus optional per-agent rules. Overrides are plain rules, so
/// they cannot nest.
struct MechanicsConfig {
  MechanicsRule base;
  std::map<AgentId, MechanicsRule> per_agent_overrides;
  double alpha = 0.5;
  std::size_t max_feed = 1000;

  const MechanicsRule& rule_for(const AgentId& agent) const {
    auto it = per_agent_overrides.find(agent);
    return it == per_agent_overrides.end() ? base : it->second;
  }

  bool operator==(const MechanicsConfig&) const = default;
};

inline MechanicsConfig identity_mechanics() { return {}; }

inline MechanicsConfig make_mechanics(MechanicsRule rule) {
  MechanicsConfig c;
  c.base = rule;
  return c;
}

inline const char* to_string(MechanicsVariant v) {
  switch (v) {
    case MechanicsVariant::Identity: return "identity";
    case MechanicsVariant::Chronological: return "chronological";
    case MechanicsVariant::ReverseChronological: return "reverse_chronological";
    case MechanicsVariant::RandomK: return "random_k";
    case MechanicsVariant::TopKByScore: return "top_k";
  }
  return "?";
}

inline const char* to_string(ScoreKind s) { return s == ScoreKind::TextLength ? "text_length" : "reply_count"; }

inline std::string describe(const MechanicsRule& r) {
  std::string s = to_string(r.variant);
  if (r.variant == MechanicsVariant::RandomK)
    s += "(k=" + std::to_string(r.k) + ",seed=" + std::to_string(r.seed) + ")";
  if (r.variant == MechanicsVariant::TopKByScore)
    s += "(k=" + std::to_string(r.k) + "," + to_string(r.scoring) + ")";
  return s;
}

inline void validate(const MechanicsRule& r, std::size_t max_feed) {
  const bool needs_k = r.variant == MechanicsVariant::RandomK || r.variant == MechanicsVariant::TopKByScore;
  if (needs_k && r.k == 0) throw InputError(describe(r) + ": k must be positive");
  if (needs_k && r.k > max_feed)
    throw InputError(describe(r) + ": k exceeds feed bound " + std::to_string(max_feed));
}

inline void validate(const MechanicsConfig& c) {
  if (c.max_feed == 0) throw InputError("max_feed must be positive");
  if (!(c.alpha >= 0.0 && c.alpha <= 1.0)) throw InputError("alpha must lie in [0,1]");
  validate(c.base, c.max_feed);
  for (const auto& [agent, rule] : c.per_agent_overrides) validate(rule, c.max_feed);
}

namespace detail {

inline std::vector<Message> pick(std::span<const Message> inbox, const std::vector<std::size_t>& order,
                                 std::size_t limit) {
  std::vector<Message> out;
  out.reserve(std::min(limit, order.size()));
  for (std::size_t i = 0; i < order.size() && out.size() < limit; ++i) out.push_back(inbox[order[i]]);
  return out;
}

inline double score(const Message& m, ScoreKind kind, const std::unordered_map<MessageId, std::size_t>& replies) {
  if (kind == ScoreKind::TextLength) return static_cast<double>(text::char_count(m.text));
  auto it = replies.find(m.id);
  return it == replies.end() ? 0.0 : static_cast<double>(it->second);
}

}  // namespace detail

/// Curates `inbox` for `agent`. Ties in every ordering fall back to inbox order.
inline std::vector<Message> apply_mechanics(const MechanicsConfig& config, const AgentId& agent,
                                            std::span<const Message> inbox) {
  const MechanicsRule& rule = config.rule_for(agent);
  validate(rule, config.max_feed);

  std::vector<std::size_t> order(inbox.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  switch (rule.variant) {
    case MechanicsVariant::Identity:
      return {inbox.begin(), inbox.end()};

    case MechanicsVariant::Chronological:
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return inbox[a].tick < inbox[b].tick; });
      return detail::pick(inbox, order, order.size());

    case MechanicsVariant::ReverseChronological:
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return inbox[a].tick > inbox[b].tick; });
      return detail::pick(inbox, order, order.size());

    case MechanicsVariant::RandomK: {
      Rng rng(mix_seed(rule.seed, fnv1a(agent.value)));
      rng.shuffle(std::span<std::size_t>(order));
      return detail::pick(inbox, order, rule.k);
    }

    case MechanicsVariant::TopKByScore: {
      std::unordered_map<MessageId, std::size_t> replies;
      if (rule.scoring == ScoreKind::ReplyCount)
        for (const auto& m : inbox)
          if (m.reply_to) ++replies[*m.reply_to];
      std::vector<double> scores(inbox.size());
      for (std::size_t i = 0; i < inbox.size(); ++i) scores[i] = detail::score(inbox[i], rule.scoring, replies);
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
      return detail::pick(inbox, order, rule.k);
    }
  }
  return {inbox.begin(), inbox.end()};
}

/// Normalized Kendall-tau distance between two orderings of the same ids:
/// fraction of discordant pairs. Sequences must be permutations of each other.
inline double kendall_tau_distance(std::span<const MessageId> a, std::span<const MessageId> b) {
  if (a.size() != b.size()) throw InputError("kendall_tau_distance: sequences differ in length");
  const std::size_t n = a.size();
  if (n < 2) return 0.0;
  std::unordered_map<MessageId, std::size_t> pos_b;
  for (std::size_t i = 0; i < n; ++i) pos_b[b[i]] = i;
  std::size_t discordant = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (pos_b.at(a[i]) > pos_b.at(a[j])) ++discordant;
  return static_cast<double>(discordant) / static_cast<double>(n * (n - 1) / 2);
}

/// Feed loss: alpha * (1 - Jaccard(id sets)) + (1 - alpha) * Kendall-tau
/// distance on the order of the shared ids. With no shared ids the order term
/// is 1 (nothing was ranked right), except that two empty feeds agree fully.
inline double mechanics_loss(std::span<const Message> predicted, std::span<const Message> observed,
                             double alpha = 0.5) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InputError("alpha must lie in [0,1]");
  auto ids_of = [](std::span<const Message> xs, const char* which) {
    std::vector<MessageId> ids;
    std::unordered_set<MessageId> seen;
    for (const auto& m : xs) {
      if (!seen.insert(m.id).second)
        throw InputError(std::string("duplicate message id ") + std::to_string(m.id) + " in " + which + " feed");
      ids.push_back(m.id);
    }
    return std::pair{ids, seen};
  };
  const auto [pred_ids, pred_set] = ids_of(predicted, "predicted");
  const auto [obs_ids, obs_set] = ids_of(observed, "observed");

  if (pred_ids.empty() && obs_ids.empty()) return 0.0;

  std::vector<MessageId> common_pred, common_obs;
  for (auto id : pred_ids)
    if (obs_set.contains(id)) common_pred.push_back(id);
  for (auto id : obs_ids)
    if (pred_set.contains(id)) common_obs.push_back(id);

  const double uni = static_cast<double>(pred_ids.size() + obs_ids.size() - common_pred.size());
  const double jaccard = static_cast<double>(common_pred.size()) / uni;
  const double order = common_pred.empty() ? 1.0 : kendall_tau_distance(common_pred, common_obs);
  return alpha * (1.0 - jaccard) + (1.0 - alpha) * order;
}

/// One observed curation event: what reached `agent` and what it was shown.
struct FeedObservation {
  AgentId agent;
  std::vector<Message> inbox;
  std::vector<Message> observed_feed;
};

struct MechanicsFit {
  MechanicsConfig config;
  double loss = 0.0;
  std::size_t index = 0;            // position of the winner in the family
  std::vector<double> family_loss;  // mean loss of every candidate
};

/// Exhaustive search over `family`; the first candidate with the lowest mean
/// loss wins.
inline MechanicsFit fit_mechanics(std::span<const FeedObservation> observations,
                                  std::span<const MechanicsConfig> family) {
  if (family.empty()) throw InputError("fit_mechanics: empty candidate family");
  if (observations.empty()) throw InputError("fit_mechanics: no observations");
  for (const auto& obs : observations) {
    std::unordered_set<MessageId> in;
    for (const auto& m : obs.inbox) in.insert(m.id);
    for (const auto& m : obs.observed_feed)
      if (!in.contains(m.id))
        throw InputError("fit_mechanics: observed message " + std::to_string(m.id) + " not in inbox of " +
                         obs.agent.value);
  }

  MechanicsFit fit;
  fit.family_loss.reserve(family.size());
  for (std::size_t c = 0; c < family.size(); ++c) {
    validate(family[c]);
    double total = 0.0;
    for (const auto& obs : observations) {
      const auto predicted = apply_mechanics(family[c], obs.agent, obs.inbox);
      total += mechanics_loss(predicted, obs.observed_feed, family[c].alpha);
    }
    fit.family_loss.push_back(total / static_cast<double>(observations.size()));
  }
  const auto best = std::min_element(fit.family_loss.begin(), fit.family_loss.end());
  fit.index = static_cast<std::size_t>(best - fit.family_loss.begin());
  fit.loss = *best;
  fit.config = family[fit.index];
  return fit;
}

// --- serialization ---------------------------------------------------------

inline nlohmann::ordered_json to_json(const MechanicsRule& r) {
  nlohmann::ordered_json j;
  j["variant"] = to_string(r.variant);
  if (r.variant == MechanicsVariant::RandomK) {
    j["k"] = r.k;
    j["seed"] = r.seed;
  }
  if (r.variant == MechanicsVariant::TopKByScore) {
    j["k"] = r.k;
    j["scoring"] = to_string(r.scoring);
  }
  return j;
}

inline nlohmann::ordered_json to_json(const MechanicsConfig& c) {
  nlohmann::ordered_json j = to_json(c.base);
  j["alpha"] = c.alpha;
  j["max_feed"] = c.max_feed;
  if (!c.per_agent_overrides.empty()) {
    nlohmann::ordered_json o = nlohmann::ordered_json::object();
    for (const auto& [agent, rule] : c.per_agent_overrides) o[agent.value] = to_json(rule);
    j["overrides"] = o;
  }
  return j;
}

template <typename Json>
MechanicsRule mechanics_rule_from_json(const Json& j) {
  MechanicsRule r;
  const std::string v = j.value("variant", std::string("identity"));
  if (v == "identity") r.variant = MechanicsVariant::Identity;
  else if (v == "chronological") r.variant = MechanicsVariant::Chronological;
  else if (v == "reverse_chronological") r.variant = MechanicsVariant::ReverseChronological;
  else if (v == "random_k") r.variant = MechanicsVariant::RandomK;
  else if (v == "top_k") r.variant = MechanicsVariant::TopKByScore;
  else throw InputError("unknown mechanics variant '" + v + "'");
  if (j.contains("k")) {
    const auto k = j.at("k").template get<long long>();
    if (k <= 0) throw InputError("mechanics k must be positive");
    r.k = static_cast<std::size_t>(k);
  }
  if (j.contains("seed")) r.seed = j.at("seed").template get<std::uint64_t>();
  const std::string s = j.value("scoring", std::string("text_length"));
  if (s == "text_length") r.scoring = ScoreKind::TextLength;
  else if (s == "reply_count") r.scoring = ScoreKind::ReplyCount;
  else throw InputError("unknown scoring '" + s + "'");
  return r;
}

template <typename Json>
MechanicsConfig mechanics_config_from_json(const Json& j) {
  if (!j.is_object()) throw InputError("mechanics config must be an object");
  MechanicsConfig c;
  c.base = mechanics_rule_from_json(j);
  c.alpha = j.value("alpha", 0.5);
  c.max_feed = j.value("max_feed", std::size_t{1000});
  if (j.contains("overrides")) {
    for (const auto& [agent, rule] : j.at("overrides").items()) {
      if (rule.contains("overrides")) throw InputError("mechanics overrides may not nest");
      c.per_agent_overrides.emplace(AgentId(agent), mechanics_rule_from_json(rule));
    }
  }
  validate(c);
  return c;
}

}  // namespace twon
