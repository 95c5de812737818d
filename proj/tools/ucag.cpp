// ucag command-line tool: data generation, training, explanation, evaluation
// and resolution sweeps.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ucag/benchmark.hpp"
#include "ucag/dataio.hpp"
#include "ucag/dataset.hpp"
#include "ucag/errors.hpp"
#include "ucag/explainers.hpp"
#include "ucag/metrics.hpp"
#include "ucag/model_io.hpp"
#include "ucag/parallel.hpp"
#include "ucag/pipeline.hpp"
#include "ucag/train.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace ucag;

namespace {

enum ExitCode { kOk = 0, kUsage = 2, kIo = 3, kInternal = 4 };

// JSON config: top-level keys mirror the long flag names of the chosen
// subcommand. Command-line flags take precedence.
class JsonConfig : public CLI::Config {
 public:
  explicit JsonConfig(const CLI::App* root) : root_(root) {}

  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}"; }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(input);
    } catch (const nlohmann::json::exception& e) {
      throw CLI::ConversionError(std::string("config file is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw CLI::ConversionError("config file must hold a JSON object");
    std::vector<std::string> parents;
    for (const CLI::App* sub : root_->get_subcommands()) parents.push_back(sub->get_name());

    std::vector<CLI::ConfigItem> items;
    for (const auto& [key, value] : doc.items()) {
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = key;
      if (value.is_array()) {
        for (const auto& v : value) item.inputs.push_back(scalar(v));
      } else {
        item.inputs.push_back(scalar(value));
      }
      items.push_back(std::move(item));
    }
    return items;
  }

 private:
  static std::string scalar(const nlohmann::json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

  const CLI::App* root_;
};

Index resolve_workers(Index flag) {
  if (const char* env = std::getenv("UCAG_WORKERS")) {
    try {
      std::size_t used = 0;
      const long value = std::stol(env, &used);
      if (used == std::string(env).size() && value >= 1) return static_cast<Index>(value);
    } catch (const std::exception&) {
    }
    throw InvalidArgument(std::string("UCAG_WORKERS must be a positive integer, got '") + env + "'");
  }
  require(flag >= 1, "--workers must be >= 1");
  return flag;
}

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::is_regular_file(p)) throw IoError(what + " not found: " + p.string());
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::trunc);
  if (!out) throw IoError("cannot write " + p.string());
  out << text;
  if (!out) throw IoError("write failed for " + p.string());
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
}

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

// --- shared explainer flags ------------------------------------------------

struct ExplainerFlags {
  std::string method = "gradcam";
  std::optional<Index> layer;
  std::optional<double> epsilon;
  double rho = 0.555;
  Index n = 6;
  double alpha = 2.6;

  void attach(CLI::App* cmd) {
    cmd->add_option("--method", method, "gradcam | gradcam-pp | xgradcam | wgradcam | lrp-eps")->capture_default_str();
    cmd->add_option("--layer", layer, "CAM layer index (default: last conv block output)");
    cmd->add_option("--epsilon", epsilon, "LRP stabiliser (lrp-eps only)");
    cmd->add_option("--rho", rho, "relative patch size")->capture_default_str();
    cmd->add_option("--n", n, "patches per axis")->capture_default_str();
    cmd->add_option("--alpha", alpha, "patch upscaling factor")->capture_default_str();
  }

  UcagParams params() const {
    UcagParams p;
    p.rho = rho;
    p.n = n;
    p.alpha = alpha;
    p.explainer = {parse_method(method), layer, epsilon};
    validate(p.explainer);
    return p;
  }
};

json explainer_json(const UcagParams& p) {
  json j{{"method", to_string(p.explainer.method)}};
  if (p.explainer.layer) j["layer"] = *p.explainer.layer;
  if (p.explainer.epsilon) j["epsilon"] = *p.explainer.epsilon;
  return j;
}

json tensor_json(const Tensor& t) {
  return {{"shape", t.shape()}, {"values", std::vector<double>(t.data(), t.data() + t.size())}};
}

// --- commands ---------------------------------------------------------------

struct GenFlags {
  std::optional<Index> classes;
  Index per_class = 100;
  Index size = 64;
  Index pattern = 16;
  double noise = 0.1;
  std::uint64_t seed = 0;
  std::string out = "data";
};

int cmd_gen_data(const GenFlags& f) {
  require(f.classes.has_value(), "--classes is required");
  SyntheticSpec spec;
  spec.num_classes = *f.classes;
  spec.per_class = f.per_class;
  spec.image = {f.size, f.size};
  spec.pattern = f.pattern;
  spec.noise = f.noise;
  const auto samples = generate_synthetic(spec, f.seed);
  write_dataset(samples, spec.num_classes, f.out);
  std::cout << (fs::path(f.out) / "manifest.json").string() << "\n";
  return kOk;
}

struct TrainFlags {
  std::string data;
  Index epochs = 10;
  double lr = 0.05;
  Index batch_size = 4;
  std::uint64_t seed = 0;
  bool train_bias = false;
  std::string out = "model.ucag";
};

int cmd_train(const TrainFlags& f) {
  TrainConfig cfg;
  cfg.epochs = f.epochs;
  cfg.learning_rate = f.lr;
  cfg.batch_size = f.batch_size;
  cfg.seed = f.seed;
  cfg.train_bias = f.train_bias;
  require(cfg.epochs >= 1, "--epochs must be >= 1");
  require_file(f.data, "manifest");
  const DatasetManifest manifest = load_manifest(f.data);
  const TrainResult r = train_toy(manifest, cfg);
  save_weights(r.network, f.out);
  std::cout << "final loss: " << r.epoch_loss.back() << "\n";
  std::cout << "train accuracy: " << r.train_accuracy << "\n";
  std::cout << "wrote " << f.out << "\n";
  return kOk;
}

struct ExplainFlags {
  std::string model;
  std::string image;
  std::optional<Index> class_k;
  bool ucag = true;
  ExplainerFlags explainer;
  std::string out = "explain_out";
  Index workers = default_workers();
};

int cmd_explain(const ExplainFlags& f) {
  const UcagParams params = f.explainer.params();
  const Index workers = resolve_workers(f.workers);
  require_file(f.model, "model");
  require_file(f.image, "image");
  make_dir(f.out);
  const Network net = load_weights(f.model);
  const RgbImage rgb = read_ppm(f.image);
  const Tensor image = to_tensor(rgb);
  require(image.dim(0) == net.input_channels(), "image channels do not match the model");

  const Tensor logits = predict_logits(net, image);
  const Index predicted = argmax_index(logits);
  const Index k = f.class_k.value_or(predicted);
  require(k >= 0 && k < net.num_classes(), "class " + std::to_string(k) + " outside [0, " +
                                               std::to_string(net.num_classes()) + ")");

  const auto start = std::chrono::steady_clock::now();
  json diag{{"image", f.image},
            {"model", f.model},
            {"class", k},
            {"predicted_class", predicted},
            {"explainer", explainer_json(params)},
            {"ucag", f.ucag}};
  SaliencyMap map;
  if (f.ucag) {
    UcagResult r = ucag_explain(net, params, image, k, workers);
    json offsets = json::array();
    for (const PatchOffset& o : r.grid.offsets) offsets.push_back({o.row, o.col});
    json patch_logits = json::array();
    for (Index j = 0; j < r.logits.dim(0); ++j) {
      std::vector<double> row(r.logits.data() + j * r.logits.dim(1), r.logits.data() + (j + 1) * r.logits.dim(1));
      patch_logits.push_back(row);
    }
    diag["params"] = {{"rho", params.rho}, {"n", params.n}, {"alpha", params.alpha}};
    diag["grid"] = {{"patch", {r.grid.patch.h, r.grid.patch.w}},
                    {"scaled", {r.grid.scaled.h, r.grid.scaled.w}},
                    {"offsets", offsets}};
    diag["patch_logits"] = patch_logits;
    diag["weights"] = std::vector<double>(r.weights.data(), r.weights.data() + r.weights.size());
    map = std::move(r.map);
  } else {
    map = explain(params.explainer, net, image, k);
  }
  diag["kind"] = to_string(map.kind);
  diag["timing"] = {{"seconds", seconds_since(start)}, {"workers", workers}};

  const fs::path out(f.out);
  write_ppm(render_heatmap(map, HeatmapMode::solo), out / "heatmap.ppm");
  write_ppm(render_heatmap(map, HeatmapMode::overlay, &rgb), out / "overlay.ppm");
  write_text(out / "saliency.json", tensor_json(map.values).dump() + "\n");
  write_text(out / "diagnostics.json", diag.dump(2) + "\n");
  std::cout << "class " << k << " (" << (f.ucag ? "ucag" : "base") << " " << to_string(params.explainer.method)
            << "), wrote " << f.out << "\n";
  return kOk;
}

struct EvalFlags {
  std::string model;
  std::string data;
  ExplainerFlags explainer;
  std::string metrics = "deletion,insertion,pg,ebpg,density,seg";
  std::string variants = "base,ucag";
  double step_fraction = 0.01;
  std::optional<Index> limit;
  std::string out = "eval_out";
  Index workers = default_workers();
};

std::vector<Sample> load_eval_samples(const std::string& manifest_path, std::optional<Index> limit) {
  require_file(manifest_path, "manifest");
  std::vector<Sample> samples = load_samples(load_manifest(manifest_path));
  if (limit) {
    require(*limit >= 1, "--limit must be >= 1");
    if (static_cast<std::size_t>(*limit) < samples.size()) samples.resize(static_cast<std::size_t>(*limit));
  }
  require(!samples.empty(), "manifest has no samples");
  return samples;
}

int cmd_eval(const EvalFlags& f) {
  BenchmarkConfig cfg;
  cfg.ucag = f.explainer.params();
  cfg.metrics = parse_metrics(f.metrics);
  cfg.perturbation.step_fraction = f.step_fraction;
  cfg.perturbation.validate();
  cfg.run_base = cfg.run_ucag = false;
  std::stringstream vs(f.variants);
  for (std::string v; std::getline(vs, v, ',');) {
    require(v == "base" || v == "ucag", "unknown variant '" + v + "' (expected base or ucag)");
    (v == "base" ? cfg.run_base : cfg.run_ucag) = true;
  }
  cfg.workers = resolve_workers(f.workers);
  require_file(f.model, "model");
  const Network net = load_weights(f.model);
  const std::vector<Sample> samples = load_eval_samples(f.data, f.limit);
  for (Metric m : cfg.metrics)
    if (needs_mask(m))
      for (const Sample& s : samples)
        require(s.mask.has_value(), "metric '" + to_string(m) + "' needs masks; sample " + s.id + " has none");
  make_dir(f.out);

  const auto start = std::chrono::steady_clock::now();
  const BenchmarkReport report = run_benchmark(net, samples, cfg);
  json summary{{"explainer", explainer_json(cfg.ucag)},
               {"params", {{"rho", cfg.ucag.rho}, {"n", cfg.ucag.n}, {"alpha", cfg.ucag.alpha}}},
               {"step_fraction", cfg.perturbation.step_fraction},
               {"samples", samples.size()},
               {"variants", report.summary}};
  const fs::path out(f.out);
  write_text(out / "records.jsonl", to_jsonl(report.records));
  write_text(out / "summary.json", summary.dump(2) + "\n");
  std::cout << report.summary.dump(2) << "\n";
  std::cerr << "evaluated " << samples.size() << " samples in " << seconds_since(start) << " s\n";
  return kOk;
}

struct SweepFlags {
  std::string model;
  std::string data;
  ExplainerFlags explainer;
  std::vector<double> scales{1.0, 1.5, 2.0, 3.0};
  double step_fraction = 0.01;
  std::optional<Index> limit;
  std::string out;
  Index workers = default_workers();
};

int cmd_sweep(const SweepFlags& f) {
  require(!f.scales.empty(), "--scales needs at least one value");
  const UcagParams params = f.explainer.params();
  PerturbationConfig pc;
  pc.step_fraction = f.step_fraction;
  pc.validate();
  const Index workers = resolve_workers(f.workers);
  require_file(f.model, "model");
  const Network net = load_weights(f.model);
  std::vector<LabelledImage> images;
  for (Sample& s : load_eval_samples(f.data, f.limit)) images.push_back({std::move(s.image), s.label});

  const std::vector<SweepRow> rows = resolution_sweep(net, params.explainer, images, f.scales, pc, workers);
  const std::string csv = sweep_csv(rows);
  if (f.out.empty()) {
    std::cout << csv;
  } else {
    write_text(f.out, csv);
    std::cout << "wrote " << f.out << "\n";
  }
  for (const SweepRow& r : rows) std::cerr << "alpha " << r.alpha << ": " << r.seconds << " s\n";
  return kOk;
}

int cmd_inspect(const std::string& model) {
  require_file(model, "model");
  const Network net = load_weights(model);
  Index params = 0;
  for (const Layer& l : net.layers()) {
    if (const auto* c = std::get_if<Conv2D>(&l)) params += c->weight.size() + c->bias.size();
    if (const auto* d = std::get_if<Dense>(&l)) params += d->weight.size() + d->bias.size();
  }
  json j = model_header(net);
  j["parameters"] = params;
  j["file_bytes"] = fs::file_size(model);
  std::cout << j.dump(2) << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unfold-and-conquer attribution guidance for saliency maps"};
  app.require_subcommand(1);
  app.fallthrough();  // lets --config follow the verb
  app.set_config("--config", "", "JSON file whose keys mirror flag names (flags win)");
  app.config_formatter(std::make_shared<JsonConfig>(&app));

  GenFlags gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic planted-pattern dataset");
  gen_cmd->add_option("--classes", gen.classes, "number of classes (>= 2)");
  gen_cmd->add_option("--per-class", gen.per_class, "images per class")->capture_default_str();
  gen_cmd->add_option("--size", gen.size, "square image side")->capture_default_str();
  gen_cmd->add_option("--pattern", gen.pattern, "side of the planted pattern")->capture_default_str();
  gen_cmd->add_option("--noise", gen.noise, "background noise level")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "generator seed")->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "output directory")->capture_default_str();

  TrainFlags train;
  auto* train_cmd = app.add_subcommand("train-toy", "Train the toy classifier on a manifest");
  train_cmd->alias("train");
  train_cmd->add_option("--data", train.data, "dataset manifest.json")->required();
  train_cmd->add_option("--epochs", train.epochs)->capture_default_str();
  train_cmd->add_option("--lr", train.lr, "SGD learning rate")->capture_default_str();
  train_cmd->add_option("--batch-size", train.batch_size)->capture_default_str();
  train_cmd->add_option("--seed", train.seed, "init and shuffle seed")->capture_default_str();
  train_cmd->add_flag("--train-bias", train.train_bias, "also update biases (breaks LRP conservation)");
  train_cmd->add_option("--out", train.out, "weight file to write")->capture_default_str();

  ExplainFlags ex;
  auto* explain_cmd = app.add_subcommand("explain", "Explain one image");
  explain_cmd->add_option("--model", ex.model)->required();
  explain_cmd->add_option("--image", ex.image, "P6 PPM image")->required();
  explain_cmd->add_option("--class", ex.class_k, "target class (default: predicted)");
  explain_cmd->add_flag("--ucag,!--no-ucag", ex.ucag, "run the UCAG pipeline (default) or the base explainer");
  ex.explainer.attach(explain_cmd);
  explain_cmd->add_option("--out", ex.out, "output directory")->capture_default_str();
  explain_cmd->add_option("--workers", ex.workers, "patch-level threads (UCAG_WORKERS overrides)");

  EvalFlags ev;
  auto* eval_cmd = app.add_subcommand("eval", "Score base and UCAG explanations over a manifest");
  eval_cmd->add_option("--model", ev.model)->required();
  eval_cmd->add_option("--data", ev.data, "dataset manifest.json")->required();
  ev.explainer.attach(eval_cmd);
  eval_cmd->add_option("--metrics", ev.metrics, "comma-separated metric list")->capture_default_str();
  eval_cmd->add_option("--variants", ev.variants, "base, ucag or both")->capture_default_str();
  eval_cmd->add_option("--step-fraction", ev.step_fraction, "pixels per deletion/insertion step")
      ->capture_default_str();
  eval_cmd->add_option("--limit", ev.limit, "evaluate only the first N samples");
  eval_cmd->add_option("--out", ev.out, "output directory")->capture_default_str();
  eval_cmd->add_option("--workers", ev.workers, "sample-level threads (UCAG_WORKERS overrides)");

  SweepFlags sw;
  auto* sweep_cmd = app.add_subcommand("sweep", "Deletion/insertion AUC across input resolutions");
  sweep_cmd->add_option("--model", sw.model)->required();
  sweep_cmd->add_option("--data", sw.data, "dataset manifest.json")->required();
  sw.explainer.attach(sweep_cmd);
  sweep_cmd->add_option("--scales", sw.scales, "comma-separated upscaling factors >= 1")
      ->delimiter(',')
      ->capture_default_str();
  sweep_cmd->add_option("--step-fraction", sw.step_fraction)->capture_default_str();
  sweep_cmd->add_option("--limit", sw.limit, "use only the first N samples");
  sweep_cmd->add_option("--out", sw.out, "CSV file (default: stdout)");
  sweep_cmd->add_option("--workers", sw.workers, "image-level threads (UCAG_WORKERS overrides)");

  std::string inspect_model;
  auto* inspect_cmd = app.add_subcommand("inspect-model", "Print a weight file's header");
  inspect_cmd->add_option("--model", inspect_model)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (gen_cmd->parsed()) return cmd_gen_data(gen);
    if (train_cmd->parsed()) return cmd_train(train);
    if (explain_cmd->parsed()) return cmd_explain(ex);
    if (eval_cmd->parsed()) return cmd_eval(ev);
    if (sweep_cmd->parsed()) return cmd_sweep(sw);
    if (inspect_cmd->parsed()) return cmd_inspect(inspect_model);
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const UndefinedDensity& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const FormatError& e) {
    std::cerr << "file error: " << e.what() << "\n";
    return kIo;
  } catch (const CorruptModel& e) {
    std::cerr << "model error: " << e.what() << "\n";
    return kIo;
  } catch (const UnsupportedVersion& e) {
    std::cerr << "model error: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kInternal;
  }
  return kInternal;
}
