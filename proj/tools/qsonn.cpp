// qsonn command-line tool: preprocess, train, eval, gradcheck, bench, sweep-q.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "qsonn/audio.hpp"
#include "qsonn/checkpoint.hpp"
#include "qsonn/dataset.hpp"
#include "qsonn/rng.hpp"
#include "qsonn/training.hpp"

using namespace qsonn;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kExitError = 1;
constexpr int kExitVerification = 2;

struct ExperimentConfig {
  // dataset
  std::string dataset = "gsc";
  std::string data_root;
  std::uint64_t ssc_seed = 0;
  std::string cache_dir = "cache";
  unsigned threads = 0;
  // frontend
  std::size_t window_samples = 480;
  std::size_t hop_samples = 320;
  std::size_t fft_size = 512;
  std::size_t mel_filters = 40;
  std::size_t cepstral_coeffs = 20;
  double mel_low_hz = 0.0;
  double mel_high_hz = 8000.0;
  // model
  std::string layer = "qselfonn";
  int q = 3;
  std::string quad_mode = "full";
  double dropout = 0.2;
  // training
  double lr = 0.01;
  double momentum = 0.9;
  std::size_t batch_size = 50;
  int max_epochs = 100;
  int patience = 10;
  std::uint64_t seed = 0;
  bool record_time = true;
  // outputs and per-command settings
  std::string output_dir = "runs/latest";
  std::string checkpoint;
  std::string split = "test";
  bool resume = false;
  int q_max = 5;
  std::string sweep_layers = "conv,selfonn,qselfonn";
  std::size_t bench_samples = 20;

  FrontendConfig frontend() const {
    FrontendConfig f;
    f.window_samples = window_samples;
    f.hop_samples = hop_samples;
    f.fft_size = fft_size;
    f.mel_filters = mel_filters;
    f.cepstral_coeffs = cepstral_coeffs;
    f.mel_low_hz = mel_low_hz;
    f.mel_high_hz = mel_high_hz;
    f.validate();
    return f;
  }

  TrainConfig train_config() const {
    TrainConfig t;
    t.lr = lr;
    t.momentum = momentum;
    t.batch_size = batch_size;
    t.max_epochs = max_epochs;
    t.patience = patience;
    t.dropout_rate = dropout;
    t.seed = seed;
    t.layer_kind = parse_layer_kind(layer);
    t.q_max = q;
    t.quad_mode = parse_quad_mode(quad_mode);
    return t;
  }

  ModelSpec model_spec() const {
    ModelSpec s = train_config().model_spec();
    s.input_shape = {1, cepstral_coeffs, frontend().frame_count()};
    return s;
  }
};

// One configurable field: its JSON key, its flag and the code moving values
// between JSON, the command line and the struct.
struct Field {
  std::string key;
  std::string help;
  std::function<json(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const json&)> set;
  bool is_flag = false;  // boolean switch without a value
};

template <typename T>
Field field(const char* key, T ExperimentConfig::*member, const char* help) {
  Field f;
  f.key = key;
  f.help = help;
  f.get = [member](const ExperimentConfig& c) { return json(c.*member); };
  f.set = [member, key](ExperimentConfig& c, const json& v) {
    try {
      c.*member = v.get<T>();
    } catch (const json::exception&) {
      throw ConfigError(std::string("config key '") + key + "' has the wrong type");
    }
  };
  f.is_flag = std::is_same_v<T, bool>;
  return f;
}

const std::vector<Field>& fields() {
  static const std::vector<Field> all{
      field("dataset", &ExperimentConfig::dataset, "dataset layout: gsc or ssc"),
      field("data_root", &ExperimentConfig::data_root, "dataset root directory"),
      field("ssc_seed", &ExperimentConfig::ssc_seed, "seed of the SSC random split"),
      field("cache_dir", &ExperimentConfig::cache_dir, "feature cache directory"),
      field("threads", &ExperimentConfig::threads, "feature extraction threads (0 = all cores)"),
      field("window_samples", &ExperimentConfig::window_samples, "analysis window length"),
      field("hop_samples", &ExperimentConfig::hop_samples, "hop between frames"),
      field("fft_size", &ExperimentConfig::fft_size, "FFT length"),
      field("mel_filters", &ExperimentConfig::mel_filters, "number of mel filters"),
      field("cepstral_coeffs", &ExperimentConfig::cepstral_coeffs, "MFCC coefficients kept"),
      field("mel_low_hz", &ExperimentConfig::mel_low_hz, "lowest filterbank frequency"),
      field("mel_high_hz", &ExperimentConfig::mel_high_hz, "highest filterbank frequency"),
      field("layer", &ExperimentConfig::layer, "layer kind: conv, selfonn or qselfonn"),
      field("q", &ExperimentConfig::q, "Taylor order Q"),
      field("quad_mode", &ExperimentConfig::quad_mode, "quadratic block: full or upper"),
      field("dropout", &ExperimentConfig::dropout, "dropout rate"),
      field("lr", &ExperimentConfig::lr, "learning rate"),
      field("momentum", &ExperimentConfig::momentum, "SGD momentum"),
      field("batch_size", &ExperimentConfig::batch_size, "mini-batch size"),
      field("max_epochs", &ExperimentConfig::max_epochs, "maximum number of epochs"),
      field("patience", &ExperimentConfig::patience,
            "epochs without reaching the best validation accuracy before stopping"),
      field("seed", &ExperimentConfig::seed, "seed for initialization, shuffling and dropout"),
      field("record_time", &ExperimentConfig::record_time,
            "record wall-clock seconds in the report (off gives byte-identical reports)"),
      field("output_dir", &ExperimentConfig::output_dir, "run output directory"),
      field("checkpoint", &ExperimentConfig::checkpoint, "checkpoint to evaluate or benchmark"),
      field("split", &ExperimentConfig::split, "split to evaluate: train, val or test"),
      field("resume", &ExperimentConfig::resume, "continue from <output_dir>/last.ckpt"),
      field("q_max", &ExperimentConfig::q_max, "largest Q of the sweep"),
      field("sweep_layers", &ExperimentConfig::sweep_layers, "comma-separated layer kinds"),
      field("bench_samples", &ExperimentConfig::bench_samples,
            "random inputs timed when no feature cache exists"),
  };
  return all;
}

std::string flag_name(const std::string& key) {
  std::string f = "--" + key;
  std::replace(f.begin() + 2, f.end(), '_', '-');
  return f;
}

json to_json(const ExperimentConfig& c) {
  json j;
  for (const auto& f : fields()) j[f.key] = f.get(c);
  return j;
}

void apply_json(ExperimentConfig& c, const json& j) {
  if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
  for (const auto& [key, value] : j.items()) {
    const auto it = std::find_if(fields().begin(), fields().end(),
                                 [&](const Field& f) { return f.key == key; });
    if (it == fields().end()) throw ConfigError("unknown config key '" + key + "'");
    it->set(c, value);
  }
}

ExperimentConfig load_config_file(const std::string& path) {
  ExperimentConfig c;
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
  apply_json(c, j);
  return c;
}

// Command-line values, kept as text until the config file has been applied.
struct FlagValues {
  std::string config_path;
  std::vector<std::pair<const Field*, CLI::Option*>> options;
  std::vector<std::unique_ptr<std::string>> storage;
  std::vector<std::unique_ptr<bool>> switches;
};

void add_common_flags(CLI::App* cmd, FlagValues& flags, const std::vector<std::string>& keys) {
  const ExperimentConfig defaults;
  const json d = to_json(defaults);
  cmd->add_option("--config", flags.config_path, "JSON config file");
  for (const auto& key : keys) {
    const auto it = std::find_if(fields().begin(), fields().end(),
                                 [&](const Field& f) { return f.key == key; });
    const Field& f = *it;
    const std::string help = f.help + " (default: " + d[key].dump() + ")";
    if (f.is_flag) {
      flags.switches.push_back(std::make_unique<bool>(false));
      auto* opt = cmd->add_flag(flag_name(key) + ",!--no-" + flag_name(key).substr(2),
                                *flags.switches.back(), help);
      flags.options.push_back({&f, opt});
    } else {
      flags.storage.push_back(std::make_unique<std::string>());
      auto* opt = cmd->add_option(flag_name(key), *flags.storage.back(), help);
      opt->type_name(d[key].is_string()         ? "TEXT"
                     : d[key].is_number_float() ? "FLOAT"
                                                : "INT");
      flags.options.push_back({&f, opt});
    }
  }
}

json parse_flag_value(const Field& f, const std::string& text, const json& example) {
  try {
    if (example.is_string()) return json(text);
    if (example.is_boolean()) return json(text == "true" || text == "1");
    if (example.is_number_float()) {
      std::size_t used = 0;
      const double v = std::stod(text, &used);
      if (used != text.size()) throw std::invalid_argument(text);
      return json(v);
    }
    if (example.is_number_unsigned()) {
      if (!text.empty() && text[0] == '-') throw std::invalid_argument(text);
      std::size_t used = 0;
      const unsigned long long v = std::stoull(text, &used);
      if (used != text.size()) throw std::invalid_argument(text);
      return json(v);
    }
    std::size_t used = 0;
    const long long v = std::stoll(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return json(v);
  } catch (const std::logic_error&) {
    throw ConfigError("invalid value '" + text + "' for " + flag_name(f.key));
  }
}

/// defaults, then the config file, then explicit flags.
ExperimentConfig resolve(const FlagValues& flags) {
  ExperimentConfig c = flags.config_path.empty() ? ExperimentConfig{}
                                                 : load_config_file(flags.config_path);
  const json defaults = to_json(ExperimentConfig{});
  for (std::size_t i = 0; i < flags.options.size(); ++i) {
    const auto& [f, opt] = flags.options[i];
    if (opt->count() == 0) continue;
    if (f->is_flag) {
      f->set(c, json(opt->as<bool>()));
    } else {
      f->set(c, parse_flag_value(*f, opt->as<std::string>(), defaults[f->key]));
    }
  }
  return c;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

DatasetManifest scan(const ExperimentConfig& c) {
  if (c.data_root.empty()) throw ConfigError("no data root given (--data-root)");
  if (c.dataset == "gsc") return scan_gsc(c.data_root);
  if (c.dataset == "ssc") return scan_ssc(c.data_root, c.ssc_seed);
  throw ConfigError("unknown dataset '" + c.dataset + "' (expected gsc or ssc)");
}

FeatureCache build_and_save(const ExperimentConfig& c) {
  const auto manifest = scan(c);
  manifest.check_disjoint();
  for (Split s : {Split::Train, Split::Val, Split::Test}) {
    const auto missing = manifest.missing_classes(s);
    if (!missing.empty()) {
      std::cerr << "warning: " << to_string(s) << " split lacks " << missing.size()
                << " of the 10 classes\n";
    }
  }
  auto cache = build_cache(manifest, c.frontend(), c.threads);
  save_cache(cache, c.cache_dir);
  return cache;
}

FeatureCache obtain_cache(const ExperimentConfig& c) {
  if (cache_exists(c.cache_dir)) return load_cache(c.cache_dir, c.frontend());
  if (!c.data_root.empty()) return build_and_save(c);
  throw ConfigError("no feature cache in '" + c.cache_dir +
                    "'; run preprocess first or pass --data-root");
}

TrainReport scrub(TrainReport r, const ExperimentConfig& c) {
  if (!c.record_time) {
    for (auto& e : r.epochs) e.seconds = 0;
  }
  return r;
}

int cmd_preprocess(const ExperimentConfig& c) {
  const auto cache = build_and_save(c);
  std::printf("cache %s: train %zu, val %zu, test %zu clips\n", c.cache_dir.c_str(),
              cache.at(Split::Train).size(), cache.at(Split::Val).size(),
              cache.at(Split::Test).size());
  return 0;
}

TrainResult run_training(const ExperimentConfig& c, const FeatureCache& cache,
                         const std::string& command) {
  const fs::path out = c.output_dir;
  fs::create_directories(out);
  json echo = to_json(c);
  echo["command"] = command;
  write_text(out / "config.echo", echo.dump(2) + "\n");

  const auto cfg = c.train_config();
  auto model = build_model(c.model_spec());
  init_params(model, cfg.seed);
  TrainOptions opts;
  opts.checkpoint_dir = out;
  if (c.resume) opts.resume_from = out / "last.ckpt";
  opts.on_epoch = [](const EpochRecord& r, const Model&) {
    std::printf("epoch %3d  loss %.4f  train %.4f  val %.4f\n", r.epoch, r.train_loss,
                r.train_acc, r.val_acc);
    std::fflush(stdout);
    return true;
  };
  auto result = train(std::move(model), cache, cfg, opts);
  const auto report = scrub(result.report, c);
  write_text(out / "report.csv", report.to_csv());
  write_text(out / "report.json", report.to_json() + "\n");
  return result;
}

int cmd_train(const ExperimentConfig& c) {
  const auto cache = obtain_cache(c);
  const auto r = run_training(c, cache, "train").report;
  std::printf("best epoch %d, val %.4f", r.best_epoch, r.best_val_acc);
  if (r.test_acc) std::printf(", test %.4f", *r.test_acc);
  std::printf(" (%s)\n", r.stop_reason.c_str());
  return 0;
}

int cmd_eval(const ExperimentConfig& c, bool spec_given) {
  if (c.checkpoint.empty()) throw ConfigError("eval needs --checkpoint");
  std::optional<ModelSpec> expected;
  if (spec_given) expected = c.model_spec();
  const auto ck = load_checkpoint(c.checkpoint, expected);
  const auto cache = obtain_cache(c);
  const auto& set = cache.at(parse_split(c.split));
  const double acc = evaluate(ck.model, set);
  const auto cm = confusion_matrix(ck.model, set);
  std::printf("%s accuracy %.4f (%zu clips, %s)\n", c.split.c_str(), acc, set.size(),
              ck.model.spec().describe().c_str());
  std::printf("confusion (rows true, columns predicted):\n%6s", "");
  for (const char* l : kCommandLabels) std::printf("%6s", l);
  std::printf("\n");
  for (std::size_t i = 0; i < cm.size(); ++i) {
    std::printf("%6s", kCommandLabels[i]);
    for (auto v : cm[i]) std::printf("%6zu", v);
    std::printf("\n");
  }
  return 0;
}

int cmd_gradcheck(const ExperimentConfig& c) {
  struct Case {
    LayerKind kind;
    int q;
    QuadMode mode;
  };
  std::vector<Case> cases{{LayerKind::Conv, 1, QuadMode::Off}};
  for (int q = 1; q <= 4; ++q) {
    cases.push_back({LayerKind::SelfONN, q, QuadMode::Off});
    cases.push_back({LayerKind::QSelfONN, q, QuadMode::UpperTriangular});
    cases.push_back({LayerKind::QSelfONN, q, QuadMode::FullBlock});
  }
  double worst = 0;
  bool ok = true;
  for (const auto& k : cases) {
    const auto r = grad_check(k.kind, k.q, k.mode, c.seed);
    const bool good = r.max_rel_error < 1e-4 && r.structural_zeros;
    ok = ok && good;
    worst = std::max(worst, r.max_rel_error);
    std::printf("%-9s Q=%d %-6s coords %5zu  max rel err %.3e%s %s\n", to_string(k.kind).c_str(),
                k.q, to_string(k.mode).c_str(), r.coordinates, r.max_rel_error,
                r.structural_zeros ? "" : "  (nonzero structural gradient)", good ? "ok" : "FAIL");
  }
  std::printf("worst relative error %.3e (threshold 1e-4): %s\n", worst, ok ? "ok" : "FAIL");
  return ok ? 0 : kExitVerification;
}

int cmd_bench(const ExperimentConfig& c) {
  Model model = build_model(c.model_spec());
  if (!c.checkpoint.empty()) {
    model = load_checkpoint(c.checkpoint, c.model_spec()).model;
  } else {
    init_params(model, c.seed);
  }
  const auto costs = count_costs(model.spec());
  std::printf("%s\n%-22s %-14s %12s %16s\n", model.spec().describe().c_str(), "layer", "output",
              "params", "MACs");
  for (const auto& l : costs.layers) {
    std::printf("%-22s %-14s %12zu %16llu\n", l.name.c_str(), shape_str(l.output_shape).c_str(),
                l.params, static_cast<unsigned long long>(l.macs));
  }
  std::printf("%-22s %-14s %12zu %16llu\n", "total", "", costs.params,
              static_cast<unsigned long long>(costs.macs));

  std::vector<Tensor> inputs;
  std::string source;
  if (cache_exists(c.cache_dir)) {
    const auto cache = load_cache(c.cache_dir, c.frontend());
    const auto& test = cache.at(Split::Test);
    for (std::size_t i = 0; i < test.size(); ++i) inputs.push_back(test.feature(i));
    source = "test split";
  }
  if (inputs.empty()) {
    Rng rng(c.seed);
    for (std::size_t i = 0; i < std::max<std::size_t>(c.bench_samples, 1); ++i) {
      Tensor x(model.spec().input_shape);
      for (auto& v : x.data()) v = static_cast<float>(rng.uniform(-1, 1));
      inputs.push_back(std::move(x));
    }
    source = "random inputs";
  }
  std::vector<double> runs;
  for (int r = 0; r < 3; ++r) runs.push_back(time_inference(model, inputs));
  std::sort(runs.begin(), runs.end());
  std::printf("inference %.3f ms per utterance (median of 3 passes over %zu %s)\n",
              runs[1] * 1e3, inputs.size(), source.c_str());
  return 0;
}

int cmd_sweep(const ExperimentConfig& c) {
  if (c.q_max < 1) throw ConfigError("q_max must be >= 1");
  const auto cache = obtain_cache(c);
  std::vector<std::string> layers;
  std::stringstream ss(c.sweep_layers);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) layers.push_back(item);
  }
  const fs::path out = c.output_dir;
  fs::create_directories(out);
  json echo = to_json(c);
  echo["command"] = "sweep-q";
  write_text(out / "config.echo", echo.dump(2) + "\n");

  std::ostringstream csv;
  csv << "layer,q,params,macs,best_epoch,val_acc,test_acc\n";
  std::printf("%-9s %2s %10s %14s %5s %8s %8s\n", "layer", "Q", "params", "MACs", "best",
              "val", "test");
  for (const auto& layer : layers) {
    const int top = parse_layer_kind(layer) == LayerKind::Conv ? 1 : c.q_max;
    for (int q = 1; q <= top; ++q) {
      ExperimentConfig run = c;
      run.layer = layer;
      run.q = q;
      run.resume = false;
      run.output_dir = (out / (layer + "_q" + std::to_string(q))).string();
      const auto r = run_training(run, cache, "sweep-q").report;
      const auto costs = count_costs(run.model_spec());
      const double test = r.test_acc.value_or(std::nan(""));
      std::printf("%-9s %2d %10zu %14llu %5d %8.4f %8.4f\n", layer.c_str(), q, costs.params,
                  static_cast<unsigned long long>(costs.macs), r.best_epoch, r.best_val_acc, test);
      csv << layer << ',' << q << ',' << costs.params << ',' << costs.macs << ',' << r.best_epoch
          << ',' << r.best_val_acc << ',' << test << '\n';
    }
  }
  write_text(out / "sweep.csv", csv.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Quadratic self-organized operational networks for speech commands.\n"
      "Settings resolve as: command-line flags override the --config JSON file,\n"
      "which overrides the built-in defaults shown with each flag."};
  app.require_subcommand(1);

  const std::vector<std::string> data_keys{"dataset", "data_root", "ssc_seed", "cache_dir",
                                           "threads", "window_samples", "hop_samples",
                                           "fft_size", "mel_filters", "cepstral_coeffs",
                                           "mel_low_hz", "mel_high_hz"};
  const std::vector<std::string> model_keys{"layer", "q", "quad_mode", "dropout"};
  const std::vector<std::string> train_keys{"lr",        "momentum",   "batch_size",
                                            "max_epochs", "patience",  "seed",
                                            "record_time", "output_dir"};
  auto join = [](std::initializer_list<std::vector<std::string>> parts) {
    std::vector<std::string> all;
    for (const auto& p : parts) all.insert(all.end(), p.begin(), p.end());
    return all;
  };

  FlagValues pre_f, train_f, eval_f, grad_f, bench_f, sweep_f;
  auto* pre = app.add_subcommand("preprocess", "extract MFCC features into the cache");
  add_common_flags(pre, pre_f, data_keys);
  auto* tr = app.add_subcommand("train", "train a model; writes config.echo, report.csv, "
                                         "report.json, best.ckpt and last.ckpt");
  add_common_flags(tr, train_f, join({data_keys, model_keys, train_keys, {"resume"}}));
  auto* ev = app.add_subcommand("eval", "accuracy and confusion matrix of a checkpoint");
  add_common_flags(ev, eval_f, join({data_keys, model_keys, {"checkpoint", "split"}}));
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every layer gradient");
  add_common_flags(gc, grad_f, {"seed"});
  auto* be = app.add_subcommand("bench", "per-layer parameters and MACs plus inference time");
  add_common_flags(be, bench_f,
                   join({data_keys, model_keys, {"checkpoint", "seed", "bench_samples"}}));
  auto* sw = app.add_subcommand("sweep-q", "train every layer kind for Q = 1..q_max");
  add_common_flags(sw, sweep_f,
                   join({data_keys, {"quad_mode", "dropout"}, train_keys, {"q_max",
                                                                            "sweep_layers"}}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitError;
  }

  try {
    if (pre->parsed()) return cmd_preprocess(resolve(pre_f));
    if (tr->parsed()) return cmd_train(resolve(train_f));
    if (ev->parsed()) {
      bool spec_given = false;
      for (const auto& [f, opt] : eval_f.options) {
        if (opt->count() && (f->key == "layer" || f->key == "q" || f->key == "quad_mode")) {
          spec_given = true;
        }
      }
      return cmd_eval(resolve(eval_f), spec_given);
    }
    if (gc->parsed()) return cmd_gradcheck(resolve(grad_f));
    if (be->parsed()) return cmd_bench(resolve(bench_f));
    if (sw->parsed()) return cmd_sweep(resolve(sweep_f));
  } catch (const qsonn::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
