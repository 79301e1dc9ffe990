#include "dfir/core/dataset.hpp"

#include "dfir/core/error.hpp"
#include "dfir/core/tensor_image.hpp"

namespace dfir {

torch::Tensor load_images(const degrade::DatasetManifest& manifest,
                          const std::vector<const degrade::ManifestRecord*>& records) {
  if (records.empty()) throw ValidationError("load_images: no records selected");
  std::vector<Image> images;
  images.reserve(records.size());
  for (const auto* r : records) images.push_back(read_png(manifest.resolve(*r)));
  return to_tensor(images);
}

PairedBatch load_pairs(const degrade::DatasetManifest& manifest, degrade::Split split) {
  std::vector<const degrade::ManifestRecord*> degraded;
  std::vector<const degrade::ManifestRecord*> clean;
  std::vector<degrade::Kind> kinds;
  for (const auto* r : manifest.select(degrade::Role::kDegraded, split)) {
    const auto* partner = manifest.partner(*r);
    if (!partner) throw ValidationError("load_pairs: record " + r->image_path + " has no clean partner");
    degraded.push_back(r);
    clean.push_back(partner);
    kinds.push_back(r->spec ? r->spec->kind : degrade::Kind::kNoiseOnly);
  }
  if (degraded.empty()) throw ValidationError("load_pairs: manifest has no paired records in this split");
  return {load_images(manifest, degraded), load_images(manifest, clean), std::move(kinds)};
}

torch::Tensor gather_rows(const torch::Tensor& data, const std::vector<int64_t>& indices) {
  return data.index_select(0, torch::tensor(indices, torch::kInt64));
}

}  // namespace dfir
