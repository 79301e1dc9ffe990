#pragma once

#include <torch/torch.h>

#include <cstdint>

namespace dfir::prompt {

// Fixed-capacity FIFO of unit-norm key vectors used as contrastive negatives.
// Single writer: only the training loop calls enqueue(); entries() returns a
// snapshot ordered oldest to newest.
class NegativeQueue {
 public:
  static constexpr double kNormTolerance = 1e-3;

  NegativeQueue(int64_t capacity, int64_t dim);

  int64_t capacity() const { return capacity_; }
  int64_t dim() const { return dim_; }
  int64_t size() const { return size_; }
  bool empty() const { return size_ == 0; }

  // Appends rows of `keys` ([B, dim]); oldest entries are evicted past capacity.
  void enqueue(const torch::Tensor& keys);
  // Fills the queue with random unit vectors (MoCo-style initial negatives).
  void fill_random(uint64_t seed);
  torch::Tensor entries() const;
  void clear();

  // Raw ring state, for checkpointing.
  torch::Tensor storage() const { return storage_; }
  int64_t head() const { return head_; }
  void restore(const torch::Tensor& storage, int64_t head, int64_t size);

 private:
  int64_t capacity_;
  int64_t dim_;
  torch::Tensor storage_;  // [capacity, dim]
  int64_t head_ = 0;       // next write slot
  int64_t size_ = 0;
};

}  // namespace dfir::prompt
