#pragma once

#include <stdexcept>
#include <string>

namespace adaptq {

// Caller broke a documented precondition (bad index, mismatched lengths, ...).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Parameters that cannot describe a valid object.
class InvalidParams : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// No configuration in the table reaches the requested validation F1.
class NoFeasibleConfig : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Replay buffer sampled before it holds `warmup` experiences.
class NotWarm : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite loss during a gradient step.
class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace adaptq
