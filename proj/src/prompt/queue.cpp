#include "dfir/prompt/queue.hpp"

#include "dfir/core/error.hpp"

namespace dfir::prompt {

NegativeQueue::NegativeQueue(int64_t capacity, int64_t dim) : capacity_(capacity), dim_(dim) {
  if (capacity < 1 || dim < 1) throw ValidationError("NegativeQueue: capacity and dim must be positive");
  storage_ = torch::zeros({capacity, dim});
}

void NegativeQueue::enqueue(const torch::Tensor& keys_in) {
  if (keys_in.dim() != 2 || keys_in.size(1) != dim_)
    throw ShapeError("NegativeQueue: expected keys of shape [B, " + std::to_string(dim_) + "]");
  if (keys_in.size(0) == 0) return;
  const auto keys = keys_in.detach().to(torch::kCPU, torch::kFloat32);
  const auto norms = keys.norm(2, 1);
  if ((norms - 1.0).abs().max().item<double>() > kNormTolerance)
    throw ValidationError("NegativeQueue: keys must be unit-norm");
  // Renormalize so stored entries stay unit-norm to float precision.
  const auto unit = keys / norms.unsqueeze(1);
  for (int64_t i = 0; i < keys.size(0); ++i) {
    storage_[head_].copy_(unit[i]);
    head_ = (head_ + 1) % capacity_;
    size_ = std::min(size_ + 1, capacity_);
  }
}

void NegativeQueue::fill_random(uint64_t seed) {
  auto gen = at::detail::createCPUGenerator(seed);
  auto v = torch::randn({capacity_, dim_}, gen);
  clear();
  enqueue(v / v.norm(2, 1, true));
}

torch::Tensor NegativeQueue::entries() const {
  if (size_ < capacity_) return storage_.slice(0, 0, size_).clone();
  // Full ring: oldest entry sits at head_.
  return torch::cat({storage_.slice(0, head_, capacity_), storage_.slice(0, 0, head_)});
}

void NegativeQueue::clear() {
  storage_.zero_();
  head_ = 0;
  size_ = 0;
}

void NegativeQueue::restore(const torch::Tensor& storage, int64_t head, int64_t size) {
  if (storage.sizes() != storage_.sizes() || head < 0 || head >= capacity_ || size < 0 || size > capacity_)
    throw IntegrityError("NegativeQueue: inconsistent stored state");
  storage_.copy_(storage);
  head_ = head;
  size_ = size;
}

}  // namespace dfir::prompt
