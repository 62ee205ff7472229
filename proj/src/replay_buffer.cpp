#include "gridshed/errors.hpp"
#include "gridshed/sac.hpp"

namespace gridshed {

ReplayBuffer::ReplayBuffer(size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw InvalidInput("replay buffer capacity must be positive");
}

void ReplayBuffer::push(Experience e) {
  if (items_.size() < capacity_) {
    items_.push_back(std::move(e));
  } else {
    items_[cursor_] = std::move(e);
  }
  cursor_ = (cursor_ + 1) % capacity_;
}

std::vector<size_t> ReplayBuffer::sample_indices(size_t n, Rng& rng) const {
  if (items_.empty()) throw InvalidInput("sampling from an empty replay buffer");
  std::uniform_int_distribution<size_t> pick(0, items_.size() - 1);
  std::vector<size_t> idx(n);
  for (auto& i : idx) i = pick(rng);
  return idx;
}

}  // namespace gridshed
