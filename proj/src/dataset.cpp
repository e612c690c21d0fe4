#include "qsonn/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <set>
#include <thread>

#include "binio.hpp"
#include "qsonn/rng.hpp"

namespace fs = std::filesystem;

namespace qsonn {

std::string to_string(Split split) {
  switch (split) {
    case Split::Train:
      return "train";
    case Split::Val:
      return "val";
    case Split::Test:
      return "test";
  }
  return "?";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::Train;
  if (name == "val" || name == "validation") return Split::Val;
  if (name == "test") return Split::Test;
  throw ConfigError("unknown split '" + name + "' (expected train, val or test)");
}

int label_id(const std::string& folder) {
  for (std::size_t i = 0; i < kCommandLabels.size(); ++i) {
    if (folder == kCommandLabels[i]) return static_cast<int>(i);
  }
  return -1;
}

std::size_t DatasetManifest::count(Split split) const {
  return static_cast<std::size_t>(std::count_if(
      records.begin(), records.end(), [&](const ClipRecord& r) { return r.split == split; }));
}

std::vector<ClipRecord> DatasetManifest::subset(Split split) const {
  std::vector<ClipRecord> out;
  for (const auto& r : records) {
    if (r.split == split) out.push_back(r);
  }
  return out;
}

void DatasetManifest::check_disjoint() const {
  std::set<std::string> seen;
  for (const auto& r : records) {
    if (!seen.insert(r.relative_path).second) {
      throw DataError("clip listed more than once: " + r.relative_path);
    }
  }
}

std::vector<int> DatasetManifest::missing_classes(Split split) const {
  std::vector<bool> present(kCommandLabels.size(), false);
  for (const auto& r : records) {
    if (r.split == split) present[static_cast<std::size_t>(r.label)] = true;
  }
  std::vector<int> missing;
  for (std::size_t i = 0; i < present.size(); ++i) {
    if (!present[i]) missing.push_back(static_cast<int>(i));
  }
  return missing;
}

namespace {

// Sorted "<label>/<file>.wav" names of one command folder.
std::vector<std::string> list_clips(const fs::path& root, const std::string& label) {
  std::vector<std::string> names;
  const fs::path dir = root / label;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) return names;
  fs::directory_iterator it(dir, ec);
  if (ec) throw IoError("cannot list " + dir.string() + ": " + ec.message());
  for (const auto& entry : it) {
    if (!entry.is_regular_file()) continue;
    if (entry.path().extension() != ".wav") continue;
    names.push_back(label + "/" + entry.path().filename().string());
  }
  std::sort(names.begin(), names.end());
  return names;
}

void require_root(const fs::path& root) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw IoError("dataset root is not a directory: " + root.string());
}

std::set<std::string> read_list(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingListError("split list not found: " + path.string());
  std::set<std::string> entries;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) entries.insert(line);
  }
  return entries;
}

}  // namespace

DatasetManifest scan_gsc(const fs::path& root) {
  require_root(root);
  const auto val = read_list(root / "validation_list.txt");
  const auto test = read_list(root / "testing_list.txt");
  DatasetManifest m{DatasetKind::GSC, root, {}};
  for (std::size_t id = 0; id < kCommandLabels.size(); ++id) {
    for (auto& name : list_clips(root, kCommandLabels[id])) {
      Split split = Split::Train;
      if (test.count(name)) {
        split = Split::Test;
      } else if (val.count(name)) {
        split = Split::Val;
      }
      m.records.push_back({std::move(name), static_cast<int>(id), split});
    }
  }
  return m;
}

DatasetManifest scan_ssc(const fs::path& root, std::uint64_t seed) {
  require_root(root);
  DatasetManifest m{DatasetKind::SSC, root, {}};
  for (std::size_t id = 0; id < kCommandLabels.size(); ++id) {
    const auto names = list_clips(root, kCommandLabels[id]);
    std::vector<std::size_t> order(names.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(mix_key({seed, id}));
    rng.shuffle(order);
    const std::size_t n_val = names.size() / 10, n_test = names.size() / 10;
    std::vector<Split> split(names.size(), Split::Train);
    for (std::size_t k = 0; k < order.size(); ++k) {
      if (k < n_val) {
        split[order[k]] = Split::Val;
      } else if (k < n_val + n_test) {
        split[order[k]] = Split::Test;
      }
    }
    for (std::size_t i = 0; i < names.size(); ++i) {
      m.records.push_back({names[i], static_cast<int>(id), split[i]});
    }
  }
  return m;
}

Tensor FeatureSet::feature(std::size_t i) const {
  const std::size_t n = feature_size();
  if (i >= size()) throw ShapeError("feature index out of range");
  const auto begin = values.begin() + static_cast<std::ptrdiff_t>(i * n);
  return Tensor(feature_shape, std::vector<float>(begin, begin + static_cast<std::ptrdiff_t>(n)));
}

void FeatureSet::append(const Tensor& feature, int label) {
  if (feature.shape() != feature_shape) {
    throw ShapeError("feature of shape " + shape_str(feature.shape()) + ", set holds " +
                     shape_str(feature_shape));
  }
  values.insert(values.end(), feature.data().begin(), feature.data().end());
  labels.push_back(label);
}

FeatureCache build_cache(const DatasetManifest& manifest, const FrontendConfig& config,
                         unsigned threads) {
  const MfccExtractor extractor(config);
  const Shape shape{1, config.cepstral_coeffs, config.frame_count()};
  const std::size_t n = manifest.records.size();
  std::vector<Tensor> features(n);
  std::vector<std::exception_ptr> errors(n);

  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(n, 1)));
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        const auto& rec = manifest.records[i];
        features[i] = load_feature(manifest.root / rec.relative_path, rec.label, extractor).values;
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (threads <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  FeatureCache cache;
  cache.fingerprint = config.fingerprint();
  for (auto& set : cache.splits) set.feature_shape = shape;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& rec = manifest.records[i];
    cache.at(rec.split).append(features[i], rec.label);
  }
  return cache;
}

namespace {

constexpr std::string_view kCacheMagic{"QSONNFC\0", 8};
constexpr std::uint32_t kCacheVersion = 1;

fs::path cache_file(const fs::path& dir, Split s) { return dir / (to_string(s) + ".qfc"); }

}  // namespace

void save_cache(const FeatureCache& cache, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  for (Split s : {Split::Train, Split::Val, Split::Test}) {
    const auto& set = cache.at(s);
    binio::Writer w;
    w.tag(kCacheMagic);
    w.u32(kCacheVersion);
    w.u64(cache.fingerprint);
    w.u64(set.size());
    w.u32(static_cast<std::uint32_t>(set.feature_shape.size()));
    for (auto d : set.feature_shape) w.u64(d);
    const std::size_t fs_n = set.feature_size();
    for (std::size_t i = 0; i < set.size(); ++i) {
      w.i32(set.labels[i]);
      w.bytes(set.values.data() + i * fs_n, fs_n * sizeof(float));
    }
    binio::write_file_atomic(cache_file(dir, s), w.buffer());
  }
}

bool cache_exists(const fs::path& dir) {
  for (Split s : {Split::Train, Split::Val, Split::Test}) {
    if (!fs::exists(cache_file(dir, s))) return false;
  }
  return true;
}

FeatureCache load_cache(const fs::path& dir, const FrontendConfig& config) {
  FeatureCache cache;
  cache.fingerprint = config.fingerprint();
  for (Split s : {Split::Train, Split::Val, Split::Test}) {
    const auto path = cache_file(dir, s);
    const auto buf = binio::read_file(path);
    binio::Reader r(buf, "feature cache " + path.string());
    if (!r.tag_is(kCacheMagic)) throw FormatError(path.string() + ": not a feature cache");
    const auto version = r.u32();
    if (version != kCacheVersion) {
      throw FormatError(path.string() + ": unsupported cache version " + std::to_string(version));
    }
    if (r.u64() != cache.fingerprint) {
      throw FormatError(path.string() +
                        ": built with a different frontend configuration; rerun preprocess");
    }
    const auto count = r.u64();
    const auto rank = r.u32();
    if (rank > 8) throw FormatError(path.string() + ": corrupt header");
    Shape shape(rank);
    for (auto& d : shape) d = r.u64();
    if (shape != Shape{1, config.cepstral_coeffs, config.frame_count()}) {
      throw FormatError(path.string() + ": feature shape " + shape_str(shape) +
                        " does not match the frontend");
    }
    auto& set = cache.at(s);
    set.feature_shape = shape;
    const std::size_t n = shape_size(shape);
    if (count > r.remaining() / (sizeof(std::int32_t) + n * sizeof(float))) {
      throw FormatError(path.string() + ": truncated file");
    }
    set.labels.resize(count);
    set.values.resize(count * n);
    for (std::size_t i = 0; i < count; ++i) {
      set.labels[i] = r.i32();
      if (set.labels[i] < 0 || set.labels[i] >= static_cast<int>(kCommandLabels.size())) {
        throw FormatError(path.string() + ": label out of range");
      }
      r.bytes(set.values.data() + i * n, n * sizeof(float));
    }
    if (r.remaining() != 0) throw FormatError(path.string() + ": trailing bytes");
  }
  return cache;
}

std::vector<std::vector<std::size_t>> batch_order(std::size_t count, std::size_t batch_size,
                                                  std::uint64_t epoch_seed,
                                                  std::uint64_t epoch) {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  Rng rng(mix_key({epoch_seed, epoch}));
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < count; start += batch_size) {
    const std::size_t end = std::min(count, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

Batch gather_batch(const FeatureSet& set, const std::vector<std::size_t>& indices) {
  const std::size_t n = set.feature_size();
  Shape shape{indices.size()};
  shape.insert(shape.end(), set.feature_shape.begin(), set.feature_shape.end());
  Batch b{Tensor(shape), {}, indices};
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const std::size_t i = indices[k];
    if (i >= set.size()) throw ShapeError("batch index out of range");
    std::copy_n(set.values.begin() + static_cast<std::ptrdiff_t>(i * n), n,
                b.inputs.data().begin() + static_cast<std::ptrdiff_t>(k * n));
    b.labels.push_back(set.labels[i]);
  }
  return b;
}

std::vector<Batch> iter_batches(const FeatureCache& cache, Split split, std::size_t batch_size,
                                std::uint64_t epoch_seed, std::uint64_t epoch) {
  const auto& set = cache.at(split);
  std::vector<Batch> out;
  for (const auto& idx : batch_order(set.size(), batch_size, epoch_seed, epoch)) {
    out.push_back(gather_batch(set, idx));
  }
  return out;
}

}  // namespace qsonn
