#pragma once

#include <torch/torch.h>

#include <optional>
#include <vector>

#include "dfir/degrade/corpus.hpp"

namespace dfir {

// Decodes the listed records into one [N, 3, H, W] float batch.
torch::Tensor load_images(const degrade::DatasetManifest& manifest,
                          const std::vector<const degrade::ManifestRecord*>& records);

struct PairedBatch {
  torch::Tensor degraded;
  torch::Tensor clean;
  std::vector<degrade::Kind> kinds;
};

// Degraded records of `split` with their clean partners, in manifest order.
PairedBatch load_pairs(const degrade::DatasetManifest& manifest, degrade::Split split);

// Rows of `data` selected by `indices`.
torch::Tensor gather_rows(const torch::Tensor& data, const std::vector<int64_t>& indices);

}  // namespace dfir
