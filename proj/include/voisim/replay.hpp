#pragma once

// Fixed-capacity transition ring with seeded uniform sampling.

#include <vector>

#include "voisim/common.hpp"

namespace voisim {

struct Transition {
    Vec s;
    Vec a;
    double r = 0.0;
    Vec s_next;
    bool done = false;
};

class ReplayBuffer {
  public:
    explicit ReplayBuffer(size_t capacity) : capacity_(capacity) {
        require(capacity >= 1, "ReplayBuffer: capacity must be >= 1");
        data_.reserve(capacity);
    }

    void add(Transition t) {
        if (data_.size() < capacity_) {
            data_.push_back(std::move(t));
        } else {
            data_[head_] = std::move(t);
            head_ = (head_ + 1) % capacity_;
        }
    }

    size_t size() const { return data_.size(); }
    size_t capacity() const { return capacity_; }
    const Transition& operator[](size_t i) const { return data_[i]; }

    // Uniform with replacement; reproducible from the rng state.
    std::vector<size_t> sample_indices(Rng& rng, size_t batch) const {
        require(!data_.empty(), "ReplayBuffer: cannot sample from empty buffer");
        std::vector<size_t> idx(batch);
        for (size_t i = 0; i < batch; ++i) idx[i] = static_cast<size_t>(rng.randint(data_.size()));
        return idx;
    }

  private:
    size_t capacity_;
    size_t head_ = 0;
    std::vector<Transition> data_;
};

}  // namespace voisim
