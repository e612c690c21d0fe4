#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "qsonn/model.hpp"

namespace qsonn {

/// Training state stored next to the parameters so an interrupted run can
/// resume step for step. Randomness is counter based, so (seed, step) is the
/// whole RNG state.
struct TrainingMeta {
  std::uint32_t epoch = 0;
  std::uint32_t best_epoch = 0;
  std::uint32_t epochs_since_best = 0;
  double best_val_acc = -1.0;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  std::string history;  // free-form text, used for the per-epoch report

  friend bool operator==(const TrainingMeta&, const TrainingMeta&) = default;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct Checkpoint {
  Model model;
  TrainingMeta meta;
  std::vector<NamedTensor> extras;  // tensors not owned by the model

  const Tensor* extra(const std::string& name) const;
};

/// Container layout (all integers little-endian):
///   "QSONNCK\0"  u32 version
///   model spec   (see serialize_spec)
///   meta         u32 epoch, u32 best_epoch, u32 since_best, f64 best_val_acc,
///                u64 seed, u64 step, u32-length history string
///   u32 tensor count, then per tensor:
///                u32-length name, u8 dtype (0 = f32), u32 rank, u64 dims[rank],
///                row-major payload
///   "QSONNEND"
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Model& model, const std::filesystem::path& path,
                     const TrainingMeta& meta = {},
                     const std::vector<NamedTensor>& extras = {});

/// Validates magic, version, trailer and every tensor shape against the
/// embedded spec. With `expected`, also refuses a checkpoint whose spec differs
/// (FormatError naming the mismatched field).
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const std::optional<ModelSpec>& expected = std::nullopt);

}  // namespace qsonn
