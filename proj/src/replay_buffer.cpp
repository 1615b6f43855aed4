#include <algorithm>

#include <fmt/format.h>

#include "adaptq/dqn.hpp"
#include "adaptq/errors.hpp"

namespace adaptq {

ReplayBuffer::ReplayBuffer(std::size_t capacity, std::size_t warmup) : capacity_(capacity), warmup_(warmup) {
  if (capacity == 0) throw InvalidParams("replay buffer capacity must be positive");
  if (warmup > capacity) throw InvalidParams(fmt::format("warmup {} exceeds capacity {}", warmup, capacity));
  storage_.reserve(capacity);
}

void ReplayBuffer::push(ExperienceTuple exp) {
  ++pushed_;
  if (storage_.size() < capacity_) {
    storage_.push_back(std::move(exp));
    return;
  }
  storage_[head_] = std::move(exp);
  head_ = (head_ + 1) % capacity_;
}

std::vector<const ExperienceTuple*> ReplayBuffer::sample(std::size_t n, std::mt19937_64& rng) const {
  if (storage_.size() < std::max(n, warmup_) || storage_.empty())
    throw NotWarm(fmt::format("replay buffer holds {} of the {} needed", storage_.size(), std::max(n, warmup_)));
  std::uniform_int_distribution<std::size_t> pick(0, storage_.size() - 1);
  std::vector<const ExperienceTuple*> out(n);
  for (auto& p : out) p = &storage_[pick(rng)];
  return out;
}

const ExperienceTuple& ReplayBuffer::at(std::size_t i) const {
  if (i >= storage_.size()) throw ContractViolation(fmt::format("replay index {} >= size {}", i, storage_.size()));
  if (storage_.size() < capacity_) return storage_[i];
  return storage_[(head_ + i) % capacity_];
}

}  // namespace adaptq
