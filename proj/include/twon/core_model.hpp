#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "twon/error.hpp"
#include "twon/mechanics.hpp"
#include "twon/message.hpp"
#include "twon/rng.hpp"

namespace twon {

/// What one agent sent and was shown during a single tick.
struct HistoryEntry {
  std::vector<Message> sent;
  std::vector<Message> received_curated;

  bool operator==(const HistoryEntry&) const = default;
};

/// An agent is the discourse it has taken part in: one history entry per
/// elapsed tick. The agent's current tick is the history length.
struct AgentState {
  AgentId id;
  std::optional<Persona> persona;
  std::vector<HistoryEntry> history;

  Tick tick() const { return static_cast<Tick>(history.size()); }
  bool operator==(const AgentState&) const = default;
};

/// Behavior function b. Given the agent's updated state and the feed it was
/// just shown, returns the messages the agent sends next. Emitted messages
/// must carry sender = state.id and tick = state.tick() (one past the tick of
/// the newest history entry). Ids are assigned by the world on commit, so any
/// id a provider sets is ignored. `seed` is derived from the world seed, the
/// agent and the tick.
class BehaviorProvider {
 public:
  virtual ~BehaviorProvider() = default;
  virtual std::vector<Message> act(const AgentState& state, std::span<const Message> feed,
                                   std::uint64_t seed) const = 0;
};

using BehaviorMap = std::map<AgentId, std::shared_ptr<const BehaviorProvider>>;

struct World {
  Tick tick = 0;
  std::map<AgentId, AgentState> agents;
  std::vector<Message> undelivered;  // produced at `tick`, delivered by the next step
  std::uint64_t rng_seed = 0;
  MessageId next_message_id = 1;

  void add_agent(AgentId id, std::optional<Persona> persona = std::nullopt) {
    if (agents.contains(id)) throw InputError("duplicate agent id '" + id.value + "'");
    if (tick != 0) throw InputError("agents can only be added before the first step");
    AgentState s;
    s.id = id;
    s.persona = std::move(persona);
    agents.emplace(std::move(id), std::move(s));
  }

  /// Queues a message at the current tick and returns the id it was given.
  MessageId emit(Message m) {
    if (!agents.contains(m.sender)) throw LookupError("unknown sender '" + m.sender.value + "'");
    if (m.recipient && !agents.contains(*m.recipient))
      throw LookupError("unknown recipient '" + m.recipient->value + "'");
    m.tick = tick;
    m.id = next_message_id++;
    validate(m);
    undelivered.push_back(std::move(m));
    return undelivered.back().id;
  }

  bool operator==(const World&) const = default;
};

inline World make_world(std::span<const AgentId> ids, std::uint64_t seed) {
  World w;
  w.rng_seed = seed;
  for (const auto& id : ids) w.add_agent(id);
  return w;
}

/// Appends one history entry. Every message must carry the agent's current tick.
inline AgentState update_agent(const AgentState& state, std::span<const Message> sent,
                               std::span<const Message> received) {
  const Tick now = state.tick();
  auto check = [&](const Message& m) {
    if (m.tick != now)
      throw TimeConsistencyError("message " + std::to_string(m.id) + " has tick " + std::to_string(m.tick) +
                                 " but agent '" + state.id.value + "' is at tick " + std::to_string(now));
  };
  for (const auto& m : sent) check(m);
  for (const auto& m : received) check(m);

  AgentState next = state;
  next.history.push_back(HistoryEntry{{sent.begin(), sent.end()}, {received.begin(), received.end()}});
  return next;
}

/// Raw inbox before mechanics: undelivered messages addressed to `agent` or
/// broadcast, minus the agent's own, in production order.
inline std::vector<Message> route_inbox(const World& world, const AgentId& agent) {
  if (!world.agents.contains(agent)) throw LookupError("unknown agent '" + agent.value + "'");
  std::vector<Message> inbox;
  for (const auto& m : world.undelivered) {
    if (m.sender == agent) continue;
    if (m.is_broadcast() || *m.recipient == agent) inbox.push_back(m);
  }
  return inbox;
}

namespace detail {

inline std::optional<Tick> find_tick(const AgentState& state, MessageId id) {
  for (const auto& entry : state.history) {
    for (const auto& m : entry.received_curated)
      if (m.id == id) return m.tick;
    for (const auto& m : entry.sent)
      if (m.id == id) return m.tick;
  }
  return std::nullopt;
}

inline void check_emitted(const World& world, const AgentState& state, const Message& m) {
  const std::string who = "provider for '" + state.id.value + "'";
  if (m.sender != state.id) throw BehaviorError(who + " emitted a message with sender '" + m.sender.value + "'");
  if (m.tick != state.tick())
    throw BehaviorError(who + " emitted tick " + std::to_string(m.tick) + ", expected " + std::to_string(state.tick()));
  try {
    validate(m);
  } catch (const InputError& e) {
    throw BehaviorError(who + ": " + e.what());
  }
  if (m.recipient) {
    if (*m.recipient == m.sender) throw BehaviorError(who + " addressed a message to itself");
    if (!world.agents.contains(*m.recipient))
      throw BehaviorError(who + " addressed unknown agent '" + m.recipient->value + "'");
  }
  if (m.reply_to) {
    const auto parent_tick = find_tick(state, *m.reply_to);
    if (!parent_tick)
      throw BehaviorError(who + " replied to message " + std::to_string(*m.reply_to) + " it has never seen");
    if (*parent_tick > m.tick) throw BehaviorError(who + " replied to a message from the future");
  }
}

}  // namespace detail

/// One synchronous tick. Each agent (in id order) gets its routed inbox
/// curated, appends the tick to its history, then acts on the curated feed.
/// All emitted messages carry the new tick. The input world is never touched,
/// so a throwing provider leaves the caller's world as it was.
inline World step(const World& world, const MechanicsConfig& mechanics, const BehaviorMap& behaviors) {
  for (const auto& [id, state] : world.agents)
    if (!behaviors.contains(id) || !behaviors.at(id))
      throw LookupError("no behavior provider for agent '" + id.value + "'");

  World next = world;
  std::vector<Message> emitted;
  for (auto& [id, state] : next.agents) {
    const auto inbox = route_inbox(world, id);
    const auto feed = apply_mechanics(mechanics, id, inbox);
    std::vector<Message> sent;
    for (const auto& m : world.undelivered)
      if (m.sender == id) sent.push_back(m);

    state = update_agent(state, sent, feed);

    const std::uint64_t seed = mix_seed(world.rng_seed, mix_seed(fnv1a(id.value), static_cast<std::uint64_t>(world.tick)));
    std::vector<Message> out;
    try {
      out = behaviors.at(id)->act(state, feed, seed);
    } catch (const Error&) {
      throw;
    } catch (const std::exception& e) {
      throw BehaviorError("provider for '" + id.value + "' failed: " + e.what());
    }
    for (auto& m : out) {
      detail::check_emitted(world, state, m);
      emitted.push_back(std::move(m));
    }
  }

  for (auto& m : emitted) m.id = next.next_message_id++;
  next.undelivered = std::move(emitted);
  next.tick = world.tick + 1;
  return next;
}

using Transcript = std::vector<Message>;

struct SimulationRun {
  World world;
  Transcript transcript;  // every message produced by the steps, by (tick, production order)
};

inline SimulationRun run_simulation(const World& world, const MechanicsConfig& mechanics, const BehaviorMap& behaviors,
                                    int n_ticks) {
  if (n_ticks < 1) throw InputError("n_ticks must be at least 1");
  SimulationRun run{world, {}};
  for (int i = 0; i < n_ticks; ++i) {
    try {
      run.world = step(run.world, mechanics, behaviors);
    } catch (const Error& e) {
      throw SimulationError(e.kind(), run.world.tick, e.what());
    }
    run.transcript.insert(run.transcript.end(), run.world.undelivered.begin(), run.world.undelivered.end());
  }
  return run;
}

// --- transcript JSON Lines ---------------------------------------------------

inline void write_transcript(std::ostream& os, std::span<const Message> transcript) {
  for (const auto& m : transcript) os << to_json(m).dump() << '\n';
}

inline std::string transcript_to_string(std::span<const Message> transcript) {
  std::string out;
  for (const auto& m : transcript) {
    out += to_json(m).dump();
    out += '\n';
  }
  return out;
}

inline Transcript read_transcript(std::istream& is) {
  Transcript t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("transcript line " + std::to_string(lineno) + ": " + e.what());
    }
    t.push_back(message_from_json(j));
  }
  return t;
}

}  // namespace twon
