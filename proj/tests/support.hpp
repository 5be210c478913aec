#pragma once

#include <unistd.h>

#include <filesystem>
#include <functional>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "twon/behavior.hpp"
#include "twon/core_model.hpp"

namespace twon::testing {

inline Message msg(MessageId id, const std::string& from, std::optional<std::string> to, Tick tick,
                   std::string text = "hello there") {
  Message m;
  m.id = id;
  m.sender = AgentId(from);
  if (to) m.recipient = AgentId(*to);
  m.tick = tick;
  m.text = std::move(text);
  return m;
}

inline std::vector<MessageId> ids(std::span<const Message> xs) {
  std::vector<MessageId> out;
  for (const auto& m : xs) out.push_back(m.id);
  return out;
}

inline AgentId A(const char* s) { return AgentId(s); }

/// Throws from act(), for atomicity checks.
class FailingProvider final : public BehaviorProvider {
 public:
  std::vector<Message> act(const AgentState&, std::span<const Message>, std::uint64_t) const override {
    throw std::runtime_error("provider exploded");
  }
};

/// Emits whatever it is told to, for contract checks.
class ScriptedProvider final : public BehaviorProvider {
 public:
  explicit ScriptedProvider(std::function<std::vector<Message>(const AgentState&, std::span<const Message>)> f)
      : f_(std::move(f)) {}
  std::vector<Message> act(const AgentState& s, std::span<const Message> feed, std::uint64_t) const override {
    return f_(s, feed);
  }

 private:
  std::function<std::vector<Message>(const AgentState&, std::span<const Message>)> f_;
};

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("twon_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline void write_file(const std::filesystem::path& p, const std::string& content) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << content;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline PromptTemplates templates() { return PromptTemplates::load(TWON_TEMPLATE_DIR); }

}  // namespace twon::testing
