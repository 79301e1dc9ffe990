#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dfir/core/checkpoint.hpp"
#include "dfir/degrade/corpus.hpp"
#include "dfir/diffusion/latent.hpp"
#include "dfir/distill/variant.hpp"
#include "dfir/nets/restoration.hpp"
#include "dfir/prompt/contrastive.hpp"
#include "json.hpp"

namespace dfir::distill {

struct DistillConfig {
  nets::RestorationNetOptions student{16, 4};
  prompt::PromptEncoderOptions encoder;
  prompt::ContrastiveOptions contrast;
  int joint_epochs = 5;      // epochs with gamma = gamma0
  int kd_epochs = 15;        // further epochs with gamma = 0
  int steps_per_epoch = 0;   // 0: ceil(#degraded / batch_size)
  int batch_size = 16;
  double lr_student = 1e-3;
  double lr_adapter = 1e-5;
  int lr_halving_every = 15;  // epochs
  double beta1 = 0.9;
  double beta2 = 0.999;
  double gamma = 0.5;
  double lambda = 0.5;
  diffusion::DdimForm ddim_form = diffusion::DdimForm::kStandard;
  int grad_steps = -1;           // sampler steps kept in the graph, -1 = all
  bool cache_generated = false;  // generate one fixed set of inputs and reuse it
  bool init_from_teacher = false;  // debug: student starts as a copy of the teacher
  int eval_every_epochs = 0;       // 0: evaluate at the end only
  int max_steps = -1;              // stop early (for split runs); -1 = full schedule
  std::uint64_t seed = 0;
};

// Tensors the trainer draws from. `degraded` holds the degraded pool (web
// images for generative variants, the training images for direct variants);
// `degraded_kinds` labels it for class-token prompts; `clean` is the clean web
// pool used as generation content.
struct DistillData {
  torch::Tensor degraded;
  std::vector<int> degraded_kinds;
  torch::Tensor clean;
  torch::Tensor test_degraded;  // optional held-out evaluation
  torch::Tensor test_clean;
};

// One JSON record per step: step, epoch, loss_kd, loss_cl, gamma, lr,
// lr_adapter; evaluation records carry "eval" instead.
using LogSink = std::function<void(const nlohmann::json&)>;

// Distills a student of `teacher` under `variant`. The teacher and diffusion
// stack are frozen and their weight hashes are verified after training
// (IntegrityError if they moved). `diffusion` may be null for direct variants.
// With `resume`, training continues from its stored state; its fingerprint and
// variant must match.
Checkpoint train_distill(const DistillVariant& variant, const DistillData& data, nets::RestorationNet teacher,
                         diffusion::LatentDiffusion* diffusion, const DistillConfig& config,
                         const std::string& fingerprint, const Checkpoint* resume = nullptr,
                         const LogSink& log = {});

// Full pipeline variant on manifests and checkpoints: unpaired web degraded and
// clean manifests, teacher and diffusion checkpoints.
Checkpoint train_d4ir(const degrade::DatasetManifest& web_degraded, const degrade::DatasetManifest& web_clean,
                      const Checkpoint& teacher_ckpt, const Checkpoint& diffusion_ckpt, const DistillConfig& config,
                      const std::string& fingerprint, const LogSink& log = {});

// Direct distillation on the degraded images of a manifest, no generation.
Checkpoint distill_on_dataset(const degrade::DatasetManifest& degraded, const Checkpoint& teacher_ckpt,
                              const DistillConfig& config, const std::string& fingerprint, const LogSink& log = {});

// Mean kd_loss between teacher and student over all of `images`, in chunks.
double dataset_kd_objective(nets::RestorationNet& teacher, nets::RestorationNet& student, const torch::Tensor& images,
                            int64_t chunk = 32);

}  // namespace dfir::distill
