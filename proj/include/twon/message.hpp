#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "twon/error.hpp"

namespace twon {

struct AgentId {
  std::string value;

  AgentId() = default;
  explicit AgentId(std::string v) : value(std::move(v)) {}

  auto operator<=>(const AgentId&) const = default;
  bool operator==(const AgentId&) const = default;
};

using MessageId = std::uint64_t;
using Tick = std::int64_t;

enum class MessageKind { Post, Reply };

inline const char* to_string(MessageKind k) { return k == MessageKind::Post ? "post" : "reply"; }

inline MessageKind parse_message_kind(const std::string& s) {
  if (s == "post") return MessageKind::Post;
  if (s == "reply") return MessageKind::Reply;
  throw InputError("unknown message kind '" + s + "'");
}

enum class Language { EN, DE };

inline const char* to_string(Language l) { return l == Language::EN ? "en" : "de"; }

inline Language parse_language(const std::string& s) {
  if (s == "en" || s == "EN") return Language::EN;
  if (s == "de" || s == "DE") return Language::DE;
  throw InputError("unknown language '" + s + "'");
}

/// Public profile an agent posts under.
struct Persona {
  std::string name;
  std::string party;
  Language language = Language::EN;

  bool operator==(const Persona&) const = default;
};

inline void validate(const Persona& p) {
  if (p.name.empty() || p.party.empty()) throw InputError("persona name and party must be non-empty");
}

/// One directed communication unit. A missing recipient means broadcast.
struct Message {
  MessageId id = 0;
  AgentId sender;
  std::optional<AgentId> recipient;
  Tick tick = 0;
  MessageKind kind = MessageKind::Post;
  std::optional<MessageId> reply_to;
  std::string text;
  std::optional<std::string> topic;

  bool is_broadcast() const { return !recipient.has_value(); }
  bool operator==(const Message&) const = default;
};

/// Checks the invariants a message can verify on its own.
inline void validate(const Message& m) {
  if (m.text.empty()) throw InputError("message " + std::to_string(m.id) + " has empty text");
  if (m.tick < 0) throw InputError("message " + std::to_string(m.id) + " has negative tick");
  if ((m.kind == MessageKind::Reply) != m.reply_to.has_value())
    throw InputError("message " + std::to_string(m.id) + ": kind=reply must coincide with reply_to");
}

inline nlohmann::ordered_json to_json(const Message& m) {
  nlohmann::ordered_json j;
  j["id"] = m.id;
  j["sender"] = m.sender.value;
  j["recipient"] = m.recipient ? nlohmann::ordered_json(m.recipient->value) : nlohmann::ordered_json(nullptr);
  j["tick"] = m.tick;
  j["kind"] = to_string(m.kind);
  j["reply_to"] = m.reply_to ? nlohmann::ordered_json(*m.reply_to) : nlohmann::ordered_json(nullptr);
  j["text"] = m.text;
  j["topic"] = m.topic ? nlohmann::ordered_json(*m.topic) : nlohmann::ordered_json(nullptr);
  return j;
}

template <typename Json>
Message message_from_json(const Json& j) {
  try {
    Message m;
    m.id = j.at("id").template get<MessageId>();
    m.sender = AgentId(j.at("sender").template get<std::string>());
    if (j.contains("recipient") && !j.at("recipient").is_null())
      m.recipient = AgentId(j.at("recipient").template get<std::string>());
    m.tick = j.at("tick").template get<Tick>();
    m.kind = parse_message_kind(j.at("kind").template get<std::string>());
    if (j.contains("reply_to") && !j.at("reply_to").is_null())
      m.reply_to = j.at("reply_to").template get<MessageId>();
    m.text = j.at("text").template get<std::string>();
    if (j.contains("topic") && !j.at("topic").is_null())
      m.topic = j.at("topic").template get<std::string>();
    validate(m);
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed message: ") + e.what());
  } catch (const InputError& e) {
    throw DataError(e.what());
  }
}

}  // namespace twon
