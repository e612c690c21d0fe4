#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "qsonn/audio.hpp"

namespace qsonn {

enum class DatasetKind : std::uint8_t { GSC = 0, SSC = 1 };
enum class Split : std::uint8_t { Train = 0, Val = 1, Test = 2 };

std::string to_string(Split split);
Split parse_split(const std::string& name);

/// The ten commands, in label-id order.
inline constexpr std::array<const char*, 10> kCommandLabels{
    "on", "off", "yes", "no", "left", "right", "up", "down", "stop", "go"};

/// Id of a command folder name, or -1 for anything else.
int label_id(const std::string& folder);

struct ClipRecord {
  std::string relative_path;  // "<label>/<file>.wav", forward slashes
  int label = -1;
  Split split = Split::Train;
};

struct DatasetManifest {
  DatasetKind kind = DatasetKind::GSC;
  std::filesystem::path root;
  std::vector<ClipRecord> records;  // ordered by label id, then path

  std::size_t count(Split split) const;
  std::vector<ClipRecord> subset(Split split) const;
  /// Throws DataError if a path occurs twice (and so in two splits).
  void check_disjoint() const;
  /// Labels that have no record in `split`.
  std::vector<int> missing_classes(Split split) const;
};

/// Google Speech Commands layout: label folders plus validation_list.txt and
/// testing_list.txt naming the val/test clips. Everything else in the ten
/// target folders is training data; other folders are ignored.
DatasetManifest scan_gsc(const std::filesystem::path& root);

/// Label folders only. Per class, sorted file names are shuffled with
/// Rng(mix_key({seed, class id})); floor(n/10) go to val, the next floor(n/10)
/// to test and the remainder to train.
DatasetManifest scan_ssc(const std::filesystem::path& root, std::uint64_t seed);

/// Packed features of one split: values holds count * feature_size floats.
struct FeatureSet {
  Shape feature_shape{1, 20, 51};
  std::vector<float> values;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t feature_size() const { return shape_size(feature_shape); }
  Tensor feature(std::size_t i) const;
  void append(const Tensor& feature, int label);
};

struct FeatureCache {
  std::uint64_t fingerprint = 0;
  std::array<FeatureSet, 3> splits;

  FeatureSet& at(Split s) { return splits[static_cast<std::size_t>(s)]; }
  const FeatureSet& at(Split s) const { return splits[static_cast<std::size_t>(s)]; }
};

/// Extracts every clip of the manifest. Work fans out over `threads` workers
/// (0 = hardware concurrency); records land in manifest order regardless.
/// Decode errors are rethrown with the clip path in the message.
FeatureCache build_cache(const DatasetManifest& manifest, const FrontendConfig& config,
                         unsigned threads = 0);

/// One file per split, "<dir>/<split>.qfc":
///   "QSONNFC\0", u32 version, u64 fingerprint, u64 count, u32 rank, u64 dims,
///   then count records of (i32 label, float32 payload).
void save_cache(const FeatureCache& cache, const std::filesystem::path& dir);

/// FormatError if any file's fingerprint differs from `config`'s (stale cache).
FeatureCache load_cache(const std::filesystem::path& dir, const FrontendConfig& config);

bool cache_exists(const std::filesystem::path& dir);

struct Batch {
  Tensor inputs;  // [B, 1, 20, 51]
  std::vector<int> labels;
  std::vector<std::size_t> indices;  // positions in the FeatureSet
};

/// Shuffled batch order for one epoch, fixed by (epoch_seed, epoch). Every
/// index appears exactly once; the last batch may be short.
std::vector<std::vector<std::size_t>> batch_order(std::size_t count, std::size_t batch_size,
                                                  std::uint64_t epoch_seed,
                                                  std::uint64_t epoch);

Batch gather_batch(const FeatureSet& set, const std::vector<std::size_t>& indices);

/// All batches of one epoch of `split`, materialized in order.
std::vector<Batch> iter_batches(const FeatureCache& cache, Split split, std::size_t batch_size,
                                std::uint64_t epoch_seed, std::uint64_t epoch);

}  // namespace qsonn
