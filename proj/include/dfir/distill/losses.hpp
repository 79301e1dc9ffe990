#pragma once

#include <torch/torch.h>

#include <string>
#include <vector>

#include "dfir/core/checkpoint.hpp"

namespace dfir::distill {

// Pixel-wise distillation distance: mean squared error over batch, channels and
// pixels. Symmetric, >= 0, zero iff the outputs agree. ShapeError on mismatch.
torch::Tensor kd_loss(const torch::Tensor& teacher_out, const torch::Tensor& student_out);

// kd + gamma * cl. ValidationError when gamma < 0.
torch::Tensor joint_loss(const torch::Tensor& kd, const torch::Tensor& cl, double gamma);

// gamma0 while epoch < joint_epochs, else 0.
double gamma_at(int epoch, double gamma0, int joint_epochs);
// base * 0.5^floor(epoch / halving_every); halving_every <= 0 disables decay.
double lr_at(double base, int epoch, int halving_every);

// Adam moments of `params` (in order) into / out of a checkpoint under prefix.
void store_adam_state(Checkpoint& ckpt, const std::string& prefix, torch::optim::Adam& optimizer,
                      const std::vector<torch::Tensor>& params);
void restore_adam_state(const Checkpoint& ckpt, const std::string& prefix, torch::optim::Adam& optimizer,
                        const std::vector<torch::Tensor>& params);
void set_learning_rate(torch::optim::Adam& optimizer, double lr);

}  // namespace dfir::distill
