#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <string>
#include <vector>

#include "dfir/core/checkpoint.hpp"
#include "dfir/degrade/corpus.hpp"
#include "dfir/nets/restoration.hpp"

namespace dfir::nets {

struct RestorationTrainOptions {
  int steps = 1000;
  int batch_size = 16;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  std::uint64_t seed = 0;
  bool flips = true;  // random horizontal flips
};

// Supervised L1 training on (degraded, clean) pairs. Returns the per-step loss.
std::vector<double> train_restoration_l1(RestorationNet& net, const torch::Tensor& degraded,
                                         const torch::Tensor& clean,
                                         const RestorationTrainOptions& options);

struct TeacherConfig {
  RestorationNetOptions net;
  RestorationTrainOptions train;
};

// Trains a teacher on the train split of a paired manifest and reports held-out
// PSNR of its restorations against the PSNR of the raw degraded inputs.
// Throws ValidationError on an unpaired manifest.
Checkpoint pretrain_teacher(const degrade::DatasetManifest& paired_manifest, const TeacherConfig& config,
                            const std::string& fingerprint);

// Builds a network from the "net" block of a checkpoint's metadata and loads
// the weights stored under `prefix`.
RestorationNet load_restoration_net(const Checkpoint& ckpt, const std::string& prefix = "net");
void store_restoration_net(Checkpoint& ckpt, const RestorationNet& net, const std::string& prefix = "net");

// Mean of the first and last tenth of a loss trace.
std::pair<double, double> decile_means(const std::vector<double>& trace);

}  // namespace dfir::nets
