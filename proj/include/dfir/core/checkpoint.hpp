#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <map>
#include <string>

#include "json.hpp"

namespace dfir {

// Binary container shared by every trained artifact:
//
//   "DFIRCKPT" | u32 version | u64 meta_len | meta (JSON, sorted keys)
//   | u32 n_tensors | n x { u32 name_len | name | u8 dtype | u32 ndim
//                         | i64 dims[ndim] | u64 nbytes | raw bytes }
//   | u32 crc32 of everything before it
//
// All integers little-endian. The CRC is checked before anything is parsed, so
// a damaged file never yields a partially populated checkpoint.
struct Checkpoint {
  nlohmann::json meta = nlohmann::json::object();
  std::map<std::string, torch::Tensor> tensors;

  std::string serialize() const;
  static Checkpoint deserialize(const std::string& bytes);

  // Writes atomically (temporary file + rename).
  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

  std::string fingerprint() const { return meta.value("fingerprint", std::string()); }
  const torch::Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const { return tensors.contains(name); }
};

// Parameters and buffers of `module` under "prefix/name".
void store_module(Checkpoint& ckpt, const std::string& prefix, const torch::nn::Module& module);
// Copies stored values into `module`; throws IntegrityError on a missing entry
// or shape mismatch.
void restore_module(const Checkpoint& ckpt, const std::string& prefix, torch::nn::Module& module);

// SHA-256 over the names and raw bytes of all parameters and buffers.
std::string weights_hash(const torch::nn::Module& module);

}  // namespace dfir
