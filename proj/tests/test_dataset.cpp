#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "qsonn/dataset.hpp"
#include "qsonn/rng.hpp"

using namespace qsonn;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "qsonn_test_dataset" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void noise_wav(const fs::path& path, std::uint64_t seed, std::size_t length = 16000) {
  fs::create_directories(path.parent_path());
  Rng rng(seed);
  std::vector<float> s(length);
  for (auto& v : s) v = static_cast<float>(rng.uniform(-0.3, 0.3));
  write_wav(path, s, 16000);
}

void write_lines(const fs::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path);
  for (const auto& l : lines) out << l << '\n';
}

// Three clips per command, plus distractors that must be ignored.
fs::path gsc_tree() {
  const auto root = fresh_dir("gsc");
  std::uint64_t seed = 1;
  for (const char* label : kCommandLabels) {
    for (int i = 0; i < 3; ++i) {
      noise_wav(root / label / ("clip" + std::to_string(i) + ".wav"), seed++);
    }
  }
  noise_wav(root / "bed" / "clip0.wav", 99);
  noise_wav(root / "_background_noise_" / "white.wav", 98);
  std::ofstream(root / "yes" / "README.txt") << "not audio";
  write_lines(root / "validation_list.txt", {"yes/clip1.wav", "bed/clip0.wav"});
  write_lines(root / "testing_list.txt", {"yes/clip2.wav", "go/clip0.wav"});
  return root;
}

}  // namespace

TEST_CASE("label map") {
  CHECK(label_id("on") == 0);
  CHECK(label_id("go") == 9);
  CHECK(label_id("down") == 7);
  CHECK(label_id("bed") == -1);
}

TEST_CASE("scan_gsc follows the list files") {
  const auto root = gsc_tree();
  const auto m = scan_gsc(root);
  CHECK(m.records.size() == 30);
  CHECK_NOTHROW(m.check_disjoint());
  for (const auto& r : m.records) {
    CHECK(r.label == label_id(r.relative_path.substr(0, r.relative_path.find('/'))));
    CHECK(r.relative_path.find("bed") == std::string::npos);
    if (r.relative_path == "yes/clip2.wav" || r.relative_path == "go/clip0.wav") {
      CHECK(r.split == Split::Test);
    } else if (r.relative_path == "yes/clip1.wav") {
      CHECK(r.split == Split::Val);
    } else {
      CHECK(r.split == Split::Train);
    }
  }
  CHECK(m.count(Split::Train) == 27);
  CHECK(m.missing_classes(Split::Test).size() == 8);

  fs::remove(root / "testing_list.txt");
  CHECK_THROWS_AS(scan_gsc(root), MissingListError);
  CHECK_THROWS_AS(scan_gsc(root / "nowhere"), IoError);
}

TEST_CASE("scan_ssc splits each class 80/10/10 with floor") {
  const auto root = fresh_dir("ssc");
  for (int i = 0; i < 10; ++i) noise_wav(root / "up" / ("a" + std::to_string(i) + ".wav"), i, 400);
  for (int i = 0; i < 43; ++i) {
    noise_wav(root / "down" / ("b" + std::to_string(i) + ".wav"), 100 + i, 400);
  }
  for (int i = 0; i < 5; ++i) noise_wav(root / "no" / ("c" + std::to_string(i) + ".wav"), i, 400);

  const auto m = scan_ssc(root, 7);
  auto count = [&](int label, Split s) {
    return std::count_if(m.records.begin(), m.records.end(),
                         [&](const ClipRecord& r) { return r.label == label && r.split == s; });
  };
  const int up = label_id("up"), down = label_id("down"), no = label_id("no");
  CHECK(count(up, Split::Train) == 8);
  CHECK(count(up, Split::Val) == 1);
  CHECK(count(up, Split::Test) == 1);
  CHECK(count(down, Split::Train) == 35);
  CHECK(count(down, Split::Val) == 4);
  CHECK(count(down, Split::Test) == 4);
  CHECK(count(no, Split::Train) == 5);
  CHECK_NOTHROW(m.check_disjoint());

  const auto again = scan_ssc(root, 7);
  REQUIRE(again.records.size() == m.records.size());
  bool same = true;
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    same = same && m.records[i].relative_path == again.records[i].relative_path &&
           m.records[i].split == again.records[i].split;
  }
  CHECK(same);

  bool differs = false;
  for (std::uint64_t seed = 8; seed < 12 && !differs; ++seed) {
    const auto other = scan_ssc(root, seed);
    for (std::size_t i = 0; i < m.records.size(); ++i) {
      differs = differs || m.records[i].split != other.records[i].split;
    }
  }
  CHECK(differs);
}

TEST_CASE("feature cache round trip and invalidation") {
  const auto root = gsc_tree();
  const auto m = scan_gsc(root);
  const FrontendConfig cfg;
  const auto cache = build_cache(m, cfg, 1);
  CHECK(cache.at(Split::Train).size() == 27);
  CHECK(cache.at(Split::Val).size() == 1);
  CHECK(cache.at(Split::Test).size() == 2);

  const auto threaded = build_cache(m, cfg, 3);
  for (Split s : {Split::Train, Split::Val, Split::Test}) {
    CHECK(threaded.at(s).values == cache.at(s).values);
    CHECK(threaded.at(s).labels == cache.at(s).labels);
  }

  // Cached features equal a fresh extraction.
  const MfccExtractor extractor(cfg);
  const auto train = m.subset(Split::Train);
  for (std::size_t i = 0; i < train.size(); ++i) {
    const auto fresh = load_feature(root / train[i].relative_path, train[i].label, extractor);
    CHECK(fresh.values == cache.at(Split::Train).feature(i));
    CHECK(cache.at(Split::Train).labels[i] == train[i].label);
  }

  const auto dir = fresh_dir("cache");
  CHECK_FALSE(cache_exists(dir));
  save_cache(cache, dir);
  CHECK(cache_exists(dir));
  const auto loaded = load_cache(dir, cfg);
  for (Split s : {Split::Train, Split::Val, Split::Test}) {
    CHECK(loaded.at(s).values == cache.at(s).values);
    CHECK(loaded.at(s).labels == cache.at(s).labels);
  }

  FrontendConfig changed;
  changed.mel_filters = 32;
  CHECK_THROWS_WITH_AS(load_cache(dir, changed), doctest::Contains("frontend configuration"),
                       FormatError);
}

TEST_CASE("decode errors carry the clip path") {
  const auto root = gsc_tree();
  std::ofstream(root / "up" / "broken.wav") << "RIFF nonsense";
  const auto m = scan_gsc(root);
  CHECK_THROWS_WITH_AS(build_cache(m, FrontendConfig{}, 2), doctest::Contains("broken.wav"),
                       FormatError);
}

TEST_CASE("batch order") {
  const auto batches = batch_order(103, 50, 5, 0);
  REQUIRE(batches.size() == 3);
  CHECK(batches[0].size() == 50);
  CHECK(batches[1].size() == 50);
  CHECK(batches[2].size() == 3);

  auto flat = [](const std::vector<std::vector<std::size_t>>& b) {
    std::vector<std::size_t> v;
    for (const auto& x : b) v.insert(v.end(), x.begin(), x.end());
    return v;
  };
  const auto e0 = flat(batches), e1 = flat(batch_order(103, 50, 5, 1));
  CHECK(e0 != e1);
  CHECK(e0 == flat(batch_order(103, 50, 5, 0)));
  auto s0 = e0, s1 = e1;
  std::sort(s0.begin(), s0.end());
  std::sort(s1.begin(), s1.end());
  CHECK(s0 == s1);
  for (std::size_t i = 0; i < s0.size(); ++i) CHECK(s0[i] == i);
  CHECK_THROWS_AS(batch_order(10, 0, 1, 1), ConfigError);
}

TEST_CASE("iter_batches gathers features and labels") {
  FeatureCache cache;
  auto& set = cache.at(Split::Train);
  set.feature_shape = {1, 2, 3};
  for (int i = 0; i < 7; ++i) set.append(Tensor({1, 2, 3}, static_cast<float>(i)), i % 10);
  const auto batches = iter_batches(cache, Split::Train, 3, 1, 4);
  REQUIRE(batches.size() == 3);
  CHECK(batches[0].inputs.shape() == Shape{3, 1, 2, 3});
  CHECK(batches[2].inputs.shape() == Shape{1, 1, 2, 3});
  for (const auto& b : batches) {
    for (std::size_t k = 0; k < b.labels.size(); ++k) {
      CHECK(b.labels[k] == static_cast<int>(b.indices[k]));
      CHECK(b.inputs[k * 6] == static_cast<float>(b.indices[k]));
    }
  }
  CHECK_THROWS_AS(set.append(Tensor({1, 2, 2}), 0), ShapeError);
}
