#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "qsonn/checkpoint.hpp"

using namespace qsonn;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "qsonn_test_checkpoint";
  fs::create_directories(dir);
  return dir / name;
}

Model trained_looking(LayerKind kind, int q, QuadMode mode, std::uint64_t seed) {
  ModelSpec s;
  s.layer_kind = kind;
  s.q_max = q;
  s.quad_mode = mode;
  auto m = build_model(s);
  init_params(m, seed);
  Rng rng(seed);
  for (auto& p : m.parameters()) {
    if (p.name.ends_with("bias")) oracle::fill_uniform(*p.tensor, rng, -0.1, 0.1);
  }
  return m;
}

std::vector<std::uint8_t> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void dump(const fs::path& p, const std::vector<std::uint8_t>& b) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

}  // namespace

TEST_CASE("round trip is bit exact for every layer kind") {
  Rng rng(3);
  Tensor x({1, 20, 51});
  oracle::fill_uniform(x, rng, -1, 1);
  const std::vector<std::tuple<LayerKind, int, QuadMode>> kinds{
      {LayerKind::Conv, 1, QuadMode::Off},
      {LayerKind::SelfONN, 3, QuadMode::Off},
      {LayerKind::QSelfONN, 3, QuadMode::FullBlock},
      {LayerKind::QSelfONN, 2, QuadMode::UpperTriangular}};
  for (const auto& [kind, q, mode] : kinds) {
    const auto m = trained_looking(kind, q, mode, 17);
    const auto path = scratch("round_trip.ckpt");
    TrainingMeta meta{7, 5, 2, 0.8125, 99, 1234, "{\"x\": 1}"};
    save_checkpoint(m, path, meta, {{"velocity.dense.bias", m.dense_bias()}});
    const auto ck = load_checkpoint(path);
    CHECK(ck.model.spec() == m.spec());
    CHECK(ck.meta == meta);
    const auto a = m.parameters(), b = ck.model.parameters();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].name == b[i].name);
      CHECK(*a[i].tensor == *b[i].tensor);
    }
    const auto ya = m.forward(x), yb = ck.model.forward(x);
    CHECK(std::memcmp(ya.data().data(), yb.data().data(), ya.size() * sizeof(float)) == 0);
    REQUIRE(ck.extra("velocity.dense.bias") != nullptr);
    CHECK(*ck.extra("velocity.dense.bias") == m.dense_bias());
    CHECK(ck.extra("nope") == nullptr);
  }
}

TEST_CASE("truncated files are rejected") {
  const auto m = trained_looking(LayerKind::QSelfONN, 2, QuadMode::FullBlock, 1);
  const auto path = scratch("full.ckpt");
  save_checkpoint(m, path);
  const auto bytes = slurp(path);
  for (std::size_t keep : {std::size_t{0}, std::size_t{5}, std::size_t{40}, bytes.size() / 2,
                           bytes.size() - 9, bytes.size() - 1}) {
    const auto cut = scratch("cut.ckpt");
    dump(cut, std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + static_cast<long>(keep)));
    CHECK_THROWS_AS(load_checkpoint(cut), FormatError);
  }
}

TEST_CASE("bad magic and version") {
  const auto m = trained_looking(LayerKind::Conv, 1, QuadMode::Off, 1);
  const auto path = scratch("magic.ckpt");
  save_checkpoint(m, path);
  auto bytes = slurp(path);
  auto bad = bytes;
  bad[0] = 'X';
  dump(path, bad);
  CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("bad magic"), FormatError);
  bad = bytes;
  bad[8] = 9;
  dump(path, bad);
  CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("version"), FormatError);
}

TEST_CASE("spec mismatch is explained") {
  const auto m = trained_looking(LayerKind::QSelfONN, 3, QuadMode::FullBlock, 1);
  const auto path = scratch("q3.ckpt");
  save_checkpoint(m, path);
  ModelSpec want = m.spec();
  want.q_max = 4;
  CHECK_THROWS_WITH_AS(load_checkpoint(path, want), doctest::Contains("Q=3"), FormatError);
  want.q_max = 3;
  want.layer_kind = LayerKind::SelfONN;
  CHECK_THROWS_AS(load_checkpoint(path, want), FormatError);
  want = m.spec();
  want.dropout_rate = 0.5;
  CHECK_NOTHROW(load_checkpoint(path, want));
}

TEST_CASE("corrupt tensor shape raises ShapeError") {
  const auto m = trained_looking(LayerKind::Conv, 1, QuadMode::Off, 1);
  const auto path = scratch("shape.ckpt");
  save_checkpoint(m, path);
  auto bytes = slurp(path);
  // The first tensor is block1.weight [20, 1, 3, 3]; swap its dims 2 and 3
  // for [20, 1, 9, 1] so the payload length still fits.
  const std::string name = "block1.weight";
  auto it = std::search(bytes.begin(), bytes.end(), name.begin(), name.end());
  REQUIRE(it != bytes.end());
  const auto dims = static_cast<std::size_t>(it - bytes.begin()) + name.size() + 1 + 4;
  std::uint64_t nine = 9, one = 1;
  std::memcpy(bytes.data() + dims + 16, &nine, 8);
  std::memcpy(bytes.data() + dims + 24, &one, 8);
  dump(path, bytes);
  CHECK_THROWS_AS(load_checkpoint(path), ShapeError);
}

TEST_CASE("missing file is an IoError") {
  CHECK_THROWS_AS(load_checkpoint(scratch("does_not_exist.ckpt")), IoError);
}
