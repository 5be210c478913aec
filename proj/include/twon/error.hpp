#pragma once

#include <stdexcept>
#include <string>

namespace twon {

/// Broad failure category. The CLI maps these onto process exit codes.
enum class ErrorKind {
  Input,          // bad argument to a library call
  TimeConsistency,
  Lookup,
  Numeric,
  Training,
  Behavior,       // a provider broke its contract
  Transport,
  Generation,
  Config,
  Data,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define TWON_DEFINE_ERROR(Name, Kind)                                  \
  class Name : public Error {                                          \
   public:                                                             \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {} \
  };

TWON_DEFINE_ERROR(InputError, Input)
TWON_DEFINE_ERROR(TimeConsistencyError, TimeConsistency)
TWON_DEFINE_ERROR(LookupError, Lookup)
TWON_DEFINE_ERROR(NumericError, Numeric)
TWON_DEFINE_ERROR(BehaviorError, Behavior)
TWON_DEFINE_ERROR(ConfigError, Config)
TWON_DEFINE_ERROR(DataError, Data)

#undef TWON_DEFINE_ERROR

class TrainingError : public Error {
 public:
  TrainingError(int epoch, const std::string& what)
      : Error(ErrorKind::Training, "epoch " + std::to_string(epoch) + ": " + what),
        epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

class TransportError : public Error {
 public:
  TransportError(std::string prompt_id, const std::string& what)
      : Error(ErrorKind::Transport, "[prompt " + prompt_id + "] " + what),
        prompt_id_(std::move(prompt_id)) {}
  const std::string& prompt_id() const noexcept { return prompt_id_; }

 private:
  std::string prompt_id_;
};

class GenerationError : public Error {
 public:
  GenerationError(std::string prompt_id, const std::string& what)
      : Error(ErrorKind::Generation, "[prompt " + prompt_id + "] " + what),
        prompt_id_(std::move(prompt_id)) {}
  const std::string& prompt_id() const noexcept { return prompt_id_; }

 private:
  std::string prompt_id_;
};

/// Wraps any error raised while stepping the world with the tick it happened at.
class SimulationError : public Error {
 public:
  SimulationError(ErrorKind kind, long long tick, const std::string& what)
      : Error(kind, "tick " + std::to_string(tick) + ": " + what), tick_(tick) {}
  long long tick() const noexcept { return tick_; }

 private:
  long long tick_;
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::Input: return "input";
    case ErrorKind::TimeConsistency: return "time_consistency";
    case ErrorKind::Lookup: return "lookup";
    case ErrorKind::Numeric: return "numeric";
    case ErrorKind::Training: return "training";
    case ErrorKind::Behavior: return "behavior";
    case ErrorKind::Transport: return "transport";
    case ErrorKind::Generation: return "generation";
    case ErrorKind::Config: return "config";
    case ErrorKind::Data: return "data";
  }
  return "unknown";
}

}  // namespace twon
