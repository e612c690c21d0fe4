#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "qsonn/audio.hpp"
#include "qsonn/checkpoint.hpp"
#include "qsonn/training.hpp"

namespace py = pybind11;
using namespace qsonn;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const FloatArray& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(std::move(shape), std::vector<float>(a.data(), a.data() + a.size()));
}

py::array_t<float> to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<float> out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

KernelSpec kernel_from(const Tensor& weights, std::size_t stride, std::size_t dilation,
                       std::size_t pad) {
  if (weights.rank() < 2) throw ShapeError("weights need at least two trailing kernel dims");
  KernelSpec s;
  s.kernel_h = weights.dim(weights.rank() - 2);
  s.kernel_w = weights.dim(weights.rank() - 1);
  s.stride = stride;
  s.dilation = dilation;
  s.pad = pad;
  return s;
}

QSelfOnnParams generative_params(const FloatArray& linear, std::optional<FloatArray> quad,
                                 const FloatArray& bias, QuadMode mode) {
  QSelfOnnParams p;
  p.linear_weights = to_tensor(linear);
  if (p.linear_weights.rank() != 5) throw ShapeError("linear weights must be [Q, Co, Ci, kh, kw]");
  p.q_max = static_cast<int>(p.linear_weights.dim(0));
  p.quad_mode = mode;
  p.bias = to_tensor(bias);
  const std::size_t n = p.linear_weights.dim(3) * p.linear_weights.dim(4);
  if (quad) {
    p.quad_blocks = to_tensor(*quad);
  } else {
    p.quad_blocks = Tensor({static_cast<std::size_t>(p.q_max), p.linear_weights.dim(1),
                            p.linear_weights.dim(2), n, n});
  }
  return p;
}

ModelSpec make_spec(const std::string& layer, int q, const std::string& quad_mode,
                    double dropout) {
  ModelSpec s;
  s.layer_kind = parse_layer_kind(layer);
  s.q_max = q;
  s.quad_mode = s.layer_kind == LayerKind::QSelfONN ? parse_quad_mode(quad_mode) : QuadMode::Off;
  s.dropout_rate = dropout;
  s.validate();
  return s;
}

FeatureSet to_feature_set(const FloatArray& x, const std::vector<int>& y) {
  const Tensor t = to_tensor(x);
  if (t.rank() != 4) throw ShapeError("features must be [N, 1, H, W]");
  if (t.dim(0) != y.size()) throw ShapeError("feature and label counts differ");
  FeatureSet set;
  set.feature_shape = {t.dim(1), t.dim(2), t.dim(3)};
  set.values = t.vec();
  set.labels = y;
  return set;
}

py::dict report_dict(const TrainReport& r) {
  py::list epochs;
  for (const auto& e : r.epochs) {
    py::dict d;
    d["epoch"] = e.epoch;
    d["train_loss"] = e.train_loss;
    d["train_acc"] = e.train_acc;
    d["val_acc"] = e.val_acc;
    d["seconds"] = e.seconds;
    epochs.append(d);
  }
  py::dict out;
  out["epochs"] = epochs;
  out["best_epoch"] = r.best_epoch;
  out["best_val_acc"] = r.best_val_acc;
  out["test_acc"] = r.test_acc ? py::object(py::float_(*r.test_acc)) : py::object(py::none());
  out["stop_reason"] = r.stop_reason;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Quadratic self-organized operational networks: layers, MFCC frontend, models";

  // Translators run newest first, so subclasses are registered after their bases.
  auto& error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ShapeError>(m, "ShapeError", error);
  auto& format_error = py::register_exception<FormatError>(m, "FormatError", error);
  py::register_exception<RateError>(m, "RateError", format_error);
  auto& io_error = py::register_exception<IoError>(m, "IoError", error);
  py::register_exception<MissingListError>(m, "MissingListError", io_error);
  py::register_exception<ConfigError>(m, "ConfigError", error);
  py::register_exception<DataError>(m, "DataError", error);
  py::register_exception<DivergenceError>(m, "DivergenceError", error);

  // Layers on [C, H, W] float32 arrays.
  m.def(
      "conv2d",
      [](const FloatArray& x, const FloatArray& weights, const FloatArray& bias,
         std::size_t stride, std::size_t dilation, std::size_t pad) {
        ConvParams p{to_tensor(weights), to_tensor(bias)};
        return to_array(conv2d_forward(to_tensor(x), p, kernel_from(p.weights, stride, dilation, pad)));
      },
      py::arg("x"), py::arg("weights"), py::arg("bias"), py::kw_only(), py::arg("stride") = 1,
      py::arg("dilation") = 1, py::arg("pad") = 0,
      "Convolution; weights [Co, Ci, kh, kw], bias [Co].");
  m.def(
      "selfonn",
      [](const FloatArray& x, const FloatArray& weights, const FloatArray& bias,
         std::size_t stride, std::size_t dilation, std::size_t pad) {
        const auto p = generative_params(weights, std::nullopt, bias, QuadMode::Off);
        return to_array(selfonn_forward(to_tensor(x), p,
                                        kernel_from(p.linear_weights, stride, dilation, pad)));
      },
      py::arg("x"), py::arg("weights"), py::arg("bias"), py::kw_only(), py::arg("stride") = 1,
      py::arg("dilation") = 1, py::arg("pad") = 0,
      "Self-organized layer: sum_q w_q * x^q + b; weights [Q, Co, Ci, kh, kw].");
  m.def(
      "qselfonn",
      [](const FloatArray& x, const FloatArray& weights, const FloatArray& quad,
         const FloatArray& bias, const std::string& quad_mode, std::size_t stride,
         std::size_t dilation, std::size_t pad) {
        const auto p = generative_params(weights, quad, bias, parse_quad_mode(quad_mode));
        return to_array(qselfonn_forward(to_tensor(x), p,
                                         kernel_from(p.linear_weights, stride, dilation, pad)));
      },
      py::arg("x"), py::arg("weights"), py::arg("quad"), py::arg("bias"), py::kw_only(),
      py::arg("quad_mode") = "full", py::arg("stride") = 1, py::arg("dilation") = 1,
      py::arg("pad") = 0,
      "Quadratic self-organized layer; quad blocks [Q, Co, Ci, n, n] with n = kh * kw.");

  // Frontend.
  m.def(
      "read_wav",
      [](const std::string& path) {
        const auto clip = read_wav(path);
        return py::make_tuple(
            py::array_t<float>(static_cast<py::ssize_t>(clip.samples.size()), clip.samples.data()),
            clip.sample_rate_hz);
      },
      py::arg("path"), "Mono 16-bit 16 kHz WAV as (float32 samples, rate).");
  m.def(
      "write_wav",
      [](const std::string& path, const FloatArray& samples, int rate) {
        write_wav(path, std::span<const float>(samples.data(), static_cast<std::size_t>(samples.size())),
                  rate);
      },
      py::arg("path"), py::arg("samples"), py::arg("sample_rate") = 16000);
  m.def(
      "mfcc",
      [](const FloatArray& samples) {
        PcmClip clip{std::vector<float>(samples.data(), samples.data() + samples.size()), 16000};
        return to_array(compute_mfcc(pad_or_truncate(std::move(clip))));
      },
      py::arg("samples"), "Raw [20, 51] cepstra of a clip padded or cut to one second.");
  m.def(
      "extract_features",
      [](const FloatArray& samples) {
        static const MfccExtractor extractor;
        PcmClip clip{std::vector<float>(samples.data(), samples.data() + samples.size()), 16000};
        return to_array(extract_features(clip, extractor));
      },
      py::arg("samples"), "Normalized [1, 20, 51] feature map in [-1, 1].");
  m.def("normalize_minmax", [](const FloatArray& a) { return to_array(normalize_minmax(to_tensor(a))); });

  // Models.
  py::class_<Model>(m, "Model")
      .def(py::init([](const std::string& layer, int q, const std::string& quad_mode,
                       double dropout) { return Model(make_spec(layer, q, quad_mode, dropout)); }),
           py::arg("layer") = "qselfonn", py::arg("q") = 3, py::arg("quad_mode") = "full",
           py::arg("dropout") = 0.2)
      .def("init", [](Model& self, std::uint64_t seed) { init_params(self, seed); },
           py::arg("seed"))
      .def("forward", [](const Model& self, const FloatArray& x) {
        return to_array(self.forward(to_tensor(x)));
      })
      .def_property_readonly("parameter_count", &Model::parameter_count)
      .def_property_readonly("description", [](const Model& self) { return self.spec().describe(); })
      .def_property_readonly("layer", [](const Model& self) { return to_string(self.spec().layer_kind); })
      .def_property_readonly("q", [](const Model& self) { return self.spec().q_max; })
      .def("parameters",
           [](const Model& self) {
             py::dict d;
             for (const auto& p : self.parameters()) d[py::str(p.name)] = to_array(*p.tensor);
             return d;
           })
      .def("set_parameter",
           [](Model& self, const std::string& name, const FloatArray& value) {
             for (auto& p : self.parameters()) {
               if (p.name != name) continue;
               Tensor t = to_tensor(value);
               if (t.shape() != p.tensor->shape()) {
                 throw ShapeError(name + " has shape " + shape_str(p.tensor->shape()));
               }
               *p.tensor = std::move(t);
               self.enforce_structure();
               return;
             }
             throw ConfigError("no parameter named " + name);
           })
      .def("save", [](const Model& self, const std::string& path) { save_checkpoint(self, path); })
      .def_static("load", [](const std::string& path) { return load_checkpoint(path).model; });

  m.def(
      "count_costs",
      [](const std::string& layer, int q, const std::string& quad_mode) {
        const auto r = count_costs(make_spec(layer, q, quad_mode, 0.2));
        py::list layers;
        for (const auto& l : r.layers) {
          py::dict d;
          d["name"] = l.name;
          d["output_shape"] = l.output_shape;
          d["params"] = l.params;
          d["macs"] = l.macs;
          layers.append(d);
        }
        py::dict out;
        out["params"] = r.params;
        out["macs"] = r.macs;
        out["layers"] = layers;
        return out;
      },
      py::arg("layer"), py::arg("q") = 1, py::arg("quad_mode") = "full");

  m.def(
      "grad_check",
      [](const std::string& layer, int q, const std::string& quad_mode, std::uint64_t seed) {
        const auto kind = parse_layer_kind(layer);
        const auto mode = kind == LayerKind::QSelfONN ? parse_quad_mode(quad_mode) : QuadMode::Off;
        const auto r = grad_check(kind, q, mode, seed);
        py::dict out;
        out["max_rel_error"] = r.max_rel_error;
        out["coordinates"] = r.coordinates;
        out["structural_zeros"] = r.structural_zeros;
        return out;
      },
      py::arg("layer"), py::arg("q") = 1, py::arg("quad_mode") = "full", py::arg("seed") = 0);

  m.def(
      "evaluate",
      [](const Model& model, const FloatArray& x, const std::vector<int>& y) {
        return evaluate(model, to_feature_set(x, y));
      },
      py::arg("model"), py::arg("x"), py::arg("y"));

  m.def(
      "train",
      [](const Model& model, const FloatArray& train_x, const std::vector<int>& train_y,
         const FloatArray& val_x, const std::vector<int>& val_y, double lr, double momentum,
         std::size_t batch_size, int max_epochs, int patience, std::uint64_t seed) {
        FeatureCache cache;
        cache.at(Split::Train) = to_feature_set(train_x, train_y);
        cache.at(Split::Val) = to_feature_set(val_x, val_y);
        cache.at(Split::Test).feature_shape = cache.at(Split::Train).feature_shape;
        TrainConfig cfg;
        cfg.lr = lr;
        cfg.momentum = momentum;
        cfg.batch_size = batch_size;
        cfg.max_epochs = max_epochs;
        cfg.patience = patience;
        cfg.seed = seed;
        cfg.layer_kind = model.spec().layer_kind;
        cfg.q_max = model.spec().q_max;
        cfg.quad_mode = model.spec().quad_mode;
        cfg.dropout_rate = model.spec().dropout_rate;
        TrainResult result = [&] {
          py::gil_scoped_release release;
          return train(model, cache, cfg);
        }();
        return py::make_tuple(report_dict(result.report), result.best_model);
      },
      py::arg("model"), py::arg("train_x"), py::arg("train_y"), py::arg("val_x"),
      py::arg("val_y"), py::kw_only(), py::arg("lr") = 0.01, py::arg("momentum") = 0.9,
      py::arg("batch_size") = 50, py::arg("max_epochs") = 100, py::arg("patience") = 10,
      py::arg("seed") = 0,
      "SGD with momentum and early stopping; returns (report, best model).");
}
