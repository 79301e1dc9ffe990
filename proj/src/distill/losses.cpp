#include "dfir/distill/losses.hpp"

#include <cmath>

#include "dfir/core/error.hpp"

namespace dfir::distill {

torch::Tensor kd_loss(const torch::Tensor& teacher_out, const torch::Tensor& student_out) {
  if (teacher_out.sizes() != student_out.sizes()) throw ShapeError("kd_loss: teacher and student outputs differ in shape");
  return (teacher_out - student_out).pow(2).mean();
}

torch::Tensor joint_loss(const torch::Tensor& kd, const torch::Tensor& cl, double gamma) {
  if (!(gamma >= 0.0)) throw ValidationError("joint_loss: gamma must be >= 0");
  if (gamma == 0.0 || !cl.defined()) return kd;
  return kd + gamma * cl;
}

double gamma_at(int epoch, double gamma0, int joint_epochs) { return epoch < joint_epochs ? gamma0 : 0.0; }

double lr_at(double base, int epoch, int halving_every) {
  if (halving_every <= 0) return base;
  return base * std::pow(0.5, epoch / halving_every);
}

void store_adam_state(Checkpoint& ckpt, const std::string& prefix, torch::optim::Adam& optimizer,
                      const std::vector<torch::Tensor>& params) {
  auto& state = optimizer.state();
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto it = state.find(params[i].unsafeGetTensorImpl());
    if (it == state.end()) continue;  // parameter not stepped yet
    const auto& s = static_cast<const torch::optim::AdamParamState&>(*it->second);
    const std::string key = prefix + "/" + std::to_string(i);
    ckpt.tensors[key + "/step"] = torch::tensor({s.step()}, torch::kInt64);
    ckpt.tensors[key + "/exp_avg"] = s.exp_avg().clone();
    ckpt.tensors[key + "/exp_avg_sq"] = s.exp_avg_sq().clone();
  }
}

void restore_adam_state(const Checkpoint& ckpt, const std::string& prefix, torch::optim::Adam& optimizer,
                        const std::vector<torch::Tensor>& params) {
  auto& state = optimizer.state();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string key = prefix + "/" + std::to_string(i);
    if (!ckpt.contains(key + "/step")) continue;
    auto s = std::make_unique<torch::optim::AdamParamState>();
    s->step(ckpt.at(key + "/step")[0].item<int64_t>());
    const auto& avg = ckpt.at(key + "/exp_avg");
    const auto& avg_sq = ckpt.at(key + "/exp_avg_sq");
    if (avg.sizes() != params[i].sizes() || avg_sq.sizes() != params[i].sizes())
      throw IntegrityError("optimizer state shape mismatch at " + key);
    s->exp_avg(avg.clone());
    s->exp_avg_sq(avg_sq.clone());
    state[params[i].unsafeGetTensorImpl()] = std::move(s);
  }
}

void set_learning_rate(torch::optim::Adam& optimizer, double lr) {
  for (auto& group : optimizer.param_groups()) static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
}

}  // namespace dfir::distill
