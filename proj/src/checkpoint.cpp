#include "qsonn/checkpoint.hpp"

#include <map>

#include "binio.hpp"

namespace qsonn {

namespace {

constexpr std::string_view kMagic{"QSONNCK\0", 8};
constexpr std::string_view kTrailer{"QSONNEND", 8};
constexpr std::uint8_t kDtypeF32 = 0;

void write_spec(binio::Writer& w, const ModelSpec& s) {
  w.u8(static_cast<std::uint8_t>(s.layer_kind));
  w.i32(s.q_max);
  w.u8(static_cast<std::uint8_t>(s.quad_mode));
  w.u64(s.channels[0]);
  w.u64(s.channels[1]);
  w.u64(s.fc_out);
  w.u64(s.kernel.kernel_h);
  w.u64(s.kernel.kernel_w);
  w.u64(s.kernel.stride);
  w.u64(s.kernel.dilation);
  w.u64(s.kernel.pad);
  w.u64(s.pool);
  w.f64(s.dropout_rate);
  w.u32(static_cast<std::uint32_t>(s.input_shape.size()));
  for (auto d : s.input_shape) w.u64(d);
}

ModelSpec read_spec(binio::Reader& r) {
  ModelSpec s;
  const auto kind = r.u8();
  if (kind > 2) throw FormatError("checkpoint: unknown layer kind " + std::to_string(kind));
  s.layer_kind = static_cast<LayerKind>(kind);
  s.q_max = r.i32();
  const auto mode = r.u8();
  if (mode > 2) throw FormatError("checkpoint: unknown quad mode " + std::to_string(mode));
  s.quad_mode = static_cast<QuadMode>(mode);
  s.channels[0] = r.u64();
  s.channels[1] = r.u64();
  s.fc_out = r.u64();
  s.kernel.kernel_h = r.u64();
  s.kernel.kernel_w = r.u64();
  s.kernel.stride = r.u64();
  s.kernel.dilation = r.u64();
  s.kernel.pad = r.u64();
  s.pool = r.u64();
  s.dropout_rate = r.f64();
  const auto rank = r.u32();
  if (rank > 8) throw FormatError("checkpoint: implausible input rank");
  s.input_shape.resize(rank);
  for (auto& d : s.input_shape) d = r.u64();
  return s;
}

void check_expected(const ModelSpec& got, const ModelSpec& want) {
  auto mismatch = [](const std::string& field, const std::string& a, const std::string& b) {
    throw FormatError("checkpoint was saved with " + field + "=" + a + " but " + field + "=" +
                      b + " was requested");
  };
  if (got.layer_kind != want.layer_kind) {
    mismatch("layer", to_string(got.layer_kind), to_string(want.layer_kind));
  }
  if (got.q_max != want.q_max) {
    mismatch("Q", std::to_string(got.q_max), std::to_string(want.q_max));
  }
  if (got.effective_quad_mode() != want.effective_quad_mode()) {
    mismatch("quad_mode", to_string(got.quad_mode), to_string(want.quad_mode));
  }
  // Dropout only matters in training; everything else fixes tensor shapes.
  ModelSpec a = got, b = want;
  a.dropout_rate = b.dropout_rate = 0;
  a.quad_mode = b.quad_mode = QuadMode::Off;
  if (!(a == b)) throw FormatError("checkpoint geometry differs from the requested model");
}

void write_tensor(binio::Writer& w, const std::string& name, const Tensor& t) {
  w.str(name);
  w.u8(kDtypeF32);
  w.u32(static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) w.u64(d);
  w.bytes(t.data().data(), t.size() * sizeof(float));
}

NamedTensor read_tensor(binio::Reader& r) {
  NamedTensor nt;
  nt.name = r.str();
  const auto dtype = r.u8();
  if (dtype != kDtypeF32) {
    throw FormatError("checkpoint: tensor '" + nt.name + "' has unsupported dtype " +
                      std::to_string(dtype));
  }
  const auto rank = r.u32();
  if (rank > 8) throw ShapeError("checkpoint: tensor '" + nt.name + "' has corrupt rank");
  Shape shape(rank);
  for (auto& d : shape) d = r.u64();
  std::size_t count = 1;
  for (auto d : shape) {
    if (d != 0 && count > r.remaining() / d) {
      throw FormatError("checkpoint: tensor '" + nt.name + "' extends past end of file");
    }
    count *= d;
  }
  if (count * sizeof(float) > r.remaining()) {
    throw FormatError("checkpoint: tensor '" + nt.name + "' extends past end of file");
  }
  std::vector<float> values(count);
  r.bytes(values.data(), count * sizeof(float));
  nt.tensor = Tensor(std::move(shape), std::move(values));
  return nt;
}

}  // namespace

const Tensor* Checkpoint::extra(const std::string& name) const {
  for (const auto& e : extras) {
    if (e.name == name) return &e.tensor;
  }
  return nullptr;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path,
                     const TrainingMeta& meta, const std::vector<NamedTensor>& extras) {
  binio::Writer w;
  w.tag(kMagic);
  w.u32(kCheckpointVersion);
  write_spec(w, model.spec());
  w.u32(meta.epoch);
  w.u32(meta.best_epoch);
  w.u32(meta.epochs_since_best);
  w.f64(meta.best_val_acc);
  w.u64(meta.seed);
  w.u64(meta.step);
  w.str(meta.history);
  const auto params = model.parameters();
  w.u32(static_cast<std::uint32_t>(params.size() + extras.size()));
  for (const auto& p : params) write_tensor(w, p.name, *p.tensor);
  for (const auto& e : extras) write_tensor(w, e.name, e.tensor);
  w.tag(kTrailer);
  binio::write_file_atomic(path, w.buffer());
}

Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const std::optional<ModelSpec>& expected) {
  const auto buf = binio::read_file(path);
  binio::Reader r(buf, "checkpoint " + path.string());
  if (buf.size() < kMagic.size() || !r.tag_is(kMagic)) {
    throw FormatError("checkpoint " + path.string() + ": bad magic");
  }
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint " + path.string() + ": unsupported version " +
                      std::to_string(version));
  }
  const ModelSpec spec = read_spec(r);
  try {
    spec.validate();
  } catch (const ConfigError& e) {
    throw FormatError("checkpoint " + path.string() + ": invalid model spec: " + e.what());
  }
  if (expected) check_expected(spec, *expected);

  TrainingMeta meta;
  meta.epoch = r.u32();
  meta.best_epoch = r.u32();
  meta.epochs_since_best = r.u32();
  meta.best_val_acc = r.f64();
  meta.seed = r.u64();
  meta.step = r.u64();
  meta.history = r.str();

  const auto count = r.u32();
  std::map<std::string, Tensor> tensors;
  std::vector<NamedTensor> ordered;
  for (std::uint32_t i = 0; i < count; ++i) {
    auto nt = read_tensor(r);
    if (tensors.count(nt.name)) throw FormatError("checkpoint: duplicate tensor '" + nt.name + "'");
    tensors.emplace(nt.name, nt.tensor);
    ordered.push_back(std::move(nt));
  }
  if (!r.tag_is(kTrailer) || r.remaining() != 0) {
    throw FormatError("checkpoint " + path.string() + ": missing end marker");
  }

  Checkpoint ck{Model(spec), meta, {}};
  for (auto& p : ck.model.parameters()) {
    auto it = tensors.find(p.name);
    if (it == tensors.end()) throw FormatError("checkpoint: missing tensor '" + p.name + "'");
    if (it->second.shape() != p.tensor->shape()) {
      throw ShapeError("checkpoint: tensor '" + p.name + "' has shape " +
                       shape_str(it->second.shape()) + ", model expects " +
                       shape_str(p.tensor->shape()));
    }
    *p.tensor = std::move(it->second);
    tensors.erase(it);
  }
  for (auto& nt : ordered) {
    if (tensors.count(nt.name)) ck.extras.push_back(std::move(nt));
  }
  return ck;
}

}  // namespace qsonn
