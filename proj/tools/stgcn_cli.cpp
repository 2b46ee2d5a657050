// stgcn: synthesize, ingest, train, infer, evaluate and gradient-check.
//
// Exit codes: 0 success, 2 invalid input or configuration, 3 numerical
// failure (non-finite loss or failed gradient check), 1 anything else.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "stgcn/config.hpp"
#include "stgcn/errors.hpp"
#include "stgcn/gradient_suite.hpp"
#include "stgcn/infer.hpp"
#include "stgcn/io.hpp"
#include "stgcn/model.hpp"
#include "stgcn/serialize.hpp"
#include "stgcn/synth.hpp"
#include "stgcn/train.hpp"

namespace fs = std::filesystem;
using namespace stgcn;

namespace {

constexpr int kOk = 0;
constexpr int kInvalid = 2;
constexpr int kNumerical = 3;

std::string padded(std::size_t i, int width) {
  std::string s = std::to_string(i);
  return std::string(s.size() < static_cast<std::size_t>(width) ? width - s.size() : 0, '0') + s;
}

// Refuses to write into a directory that already holds a dataset or run.
void prepare_output_dir(const std::string& dir, const char* marker, bool force) {
  if (fs::exists(fs::path(dir) / marker) && !force) {
    throw ValidationError(dir + " already contains " + marker + "; pass --force to overwrite");
  }
  fs::create_directories(dir);
}

struct SynthArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::size_t count = 20;
  std::size_t test = 0;
  bool force = false;
};

int run_synth(const SynthArgs& a) {
  const SynthConfig cfg = synth_config_from_json(read_text_file(a.config));
  if (a.test > a.count) throw ValidationError("--test exceeds --count");
  prepare_output_dir(a.out, "manifest.json", a.force);
  const SynthDataset ds = synth_generate(cfg, *a.seed, a.count);
  DatasetManifest manifest;
  std::vector<std::string> files;
  for (std::size_t i = 0; i < ds.sequences.size(); ++i) {
    const std::string file = "seq_" + padded(i, 4) + ".stgs";
    save_stgs(ds.sequences[i], (fs::path(a.out) / file).string());
    files.push_back(file);
    const bool test = i >= a.count - a.test;
    manifest.entries.push_back({file, test ? "test" : "train", ds.sequences[i].subject});
  }
  write_text_file((fs::path(a.out) / "oracle.json").string(), synth_oracle_json(ds, files));
  save_manifest(manifest, (fs::path(a.out) / "manifest.json").string());
  std::cout << "wrote " << ds.sequences.size() << " sequences to " << a.out << "\n";
  return kOk;
}

struct IngestArgs {
  std::string nodes, labels, edges, out, subject;
  std::size_t classes = 0;
};

int run_ingest(const IngestArgs& a) {
  const StgSequence seq = ingest_cad120_style(a.nodes, a.labels, a.edges, a.classes, a.subject);
  save_stgs(seq, a.out);
  std::cout << "ingested " << seq.tracks.size() << " tracks over " << seq.steps << " segments, " << seq.clusters.size()
            << " clusters\n";
  return kOk;
}

struct RunConfigArgs {
  std::string preset, model, train;
  std::optional<std::size_t> epochs, window, overlap, max_steps;
  std::optional<float> lr0, momentum;

  void add(CLI::App* cmd, bool with_train_overrides) {
    cmd->add_option("--preset", preset, "JSON file with model and train sections");
    cmd->add_option("--model-config", model, "model configuration JSON (overrides the preset's)");
    cmd->add_option("--train-config", train, "training configuration JSON (overrides the preset's)");
    cmd->add_option("--window", window, "inference window length");
    cmd->add_option("--overlap", overlap, "inference window overlap");
    if (!with_train_overrides) return;
    cmd->add_option("--epochs", epochs);
    cmd->add_option("--lr0", lr0);
    cmd->add_option("--momentum", momentum);
    cmd->add_option("--max-steps", max_steps, "training window length");
  }

  Preset resolve() const {
    Preset p;
    if (!preset.empty()) p = preset_from_json(read_text_file(preset));
    if (!model.empty()) p.model = model_config_from_json(read_text_file(model));
    if (!train.empty()) p.train = train_config_from_json(read_text_file(train));
    if (preset.empty() && model.empty()) throw ValidationError("a model configuration is required (--preset or --model-config)");
    if (epochs) p.train.epochs = *epochs;
    if (window) p.train.window = *window;
    if (overlap) p.train.overlap = *overlap;
    if (max_steps) p.train.max_steps = *max_steps;
    if (lr0) p.train.lr0 = *lr0;
    if (momentum) p.train.momentum = *momentum;
    p.model.validate();
    p.train.validate();
    return p;
  }
};

struct TrainArgs {
  std::string manifest, out, split = "train", val_split, resume;
  std::optional<std::uint64_t> seed;
  RunConfigArgs config;
  bool cv = false;
  std::size_t threads = 1;
  bool force = false;
};

int run_train(const TrainArgs& a) {
  Preset p = a.config.resolve();
  p.train.seed = *a.seed;
  const DatasetManifest manifest = load_manifest(a.manifest);
  const auto data = load_sequences(manifest, a.manifest, a.split);
  prepare_output_dir(a.out, "curve.csv", a.force);
  const fs::path out(a.out);

  if (a.cv) {
    const auto folds = cross_validate(data, p.model, p.train, a.threads);
    nlohmann::json report = nlohmann::json::array();
    double sum = 0.0;
    for (const auto& f : folds) {
      save_checkpoint(f.result.checkpoint, (out / ("fold_" + f.held_out + ".ckpt")).string());
      report.push_back({{"held_out", f.held_out}, {"metric", f.metric}});
      sum += f.metric;
    }
    const double mean = folds.empty() ? 0.0 : sum / static_cast<double>(folds.size());
    write_text_file((out / "folds.json").string(), nlohmann::json{{"folds", report}, {"mean", mean}}.dump(2));
    std::cout << "cross-validation over " << folds.size() << " folds, mean metric " << mean << "\n";
    return kOk;
  }

  std::vector<StgSequence> validation;
  TrainOptions options;
  if (!a.val_split.empty()) {
    validation = load_sequences(manifest, a.manifest, a.val_split);
    options.validation = &validation;
  }
  std::optional<Checkpoint> resume;
  if (!a.resume.empty()) {
    resume = load_checkpoint(a.resume);
    options.resume = &*resume;
  }
  options.on_epoch = [&](const Checkpoint& ckpt, const std::vector<CurvePoint>& curve) {
    save_checkpoint(ckpt, (out / ("epoch_" + padded(ckpt.epoch, 3) + ".ckpt")).string());
    write_text_file((out / "curve.csv").string(), curve_csv(curve));
    const CurvePoint& last = curve.back();
    std::cerr << "epoch " << last.epoch << " " << last.split << " loss " << last.loss << "\n";
  };
  const TrainResult result = train(data, p.model, p.train, options);
  save_checkpoint(result.checkpoint, (out / "final.ckpt").string());
  write_text_file((out / "curve.csv").string(), curve_csv(result.curve));
  std::cout << "trained " << result.checkpoint.epoch << " epochs; checkpoint " << (out / "final.ckpt").string() << "\n";
  return kOk;
}

struct EvalArgs {
  std::string manifest, checkpoint, split = "test", out;
  std::optional<std::size_t> window, overlap;
  bool per_frame = false;
};

TrainConfig inference_config(const Checkpoint& ckpt, const EvalArgs& a) {
  TrainConfig cfg = ckpt.train;
  if (a.window) cfg.window = *a.window;
  if (a.overlap) cfg.overlap = *a.overlap;
  cfg.validate();
  return cfg;
}

int run_infer(const EvalArgs& a) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const TrainConfig cfg = inference_config(ckpt, a);
  const Model model(ckpt.model, ckpt.params);
  const DatasetManifest manifest = load_manifest(a.manifest);
  fs::create_directories(a.out);
  nlohmann::json index = nlohmann::json::array();
  for (const auto& entry : manifest.entries) {
    if (!a.split.empty() && a.split != "all" && entry.split != a.split) continue;
    const fs::path source = fs::path(a.manifest).parent_path() / entry.file;
    const StgSequence seq = load_stgs(source.string());
    ckpt.model.check_compatible(seq);
    const ScoreTimeline tl = sliding_infer(seq, model, cfg);
    const std::string blob = entry.file + ".scores.bin";
    save_tensor((fs::path(a.out) / blob).string(), tl.scores);
    index.push_back({{"file", entry.file}, {"scores", blob}, {"coverage", tl.coverage}});
  }
  write_text_file((fs::path(a.out) / "scores.json").string(),
                  nlohmann::json{{"mode", to_string(ckpt.model.mode)}, {"sequences", index}}.dump(1));
  std::cout << "scored " << index.size() << " sequences into " << a.out << "\n";
  return kOk;
}

int run_eval(const EvalArgs& a) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const TrainConfig cfg = inference_config(ckpt, a);
  const Model model(ckpt.model, ckpt.params);
  const auto data = load_sequences(load_manifest(a.manifest), a.manifest, a.split);
  for (const auto& seq : data) ckpt.model.check_compatible(seq);
  const std::string json = to_json(evaluate(model, data, cfg, a.per_frame));
  if (!a.out.empty()) write_text_file(a.out, json);
  std::cout << json << "\n";
  return kOk;
}

struct GradcheckArgs {
  std::string model;
  std::optional<std::uint64_t> seed;
};

// Accepts a bare model configuration or a preset with a "model" section.
ModelConfig load_model_config(const std::string& path) {
  const std::string text = read_text_file(path);
  if (nlohmann::json::accept(text) && nlohmann::json::parse(text).contains("model")) return preset_from_json(text).model;
  return model_config_from_json(text);
}

int run_gradcheck(const GradcheckArgs& a) {
  const ModelConfig cfg = a.model.empty() ? tiny_model_config() : load_model_config(a.model);
  const auto reports = run_gradient_suite(cfg, a.seed.value_or(0));
  bool ok = true;
  for (const auto& r : reports) {
    std::printf("%-4s %-28s coords %-5zu rel %-5zu abs-only %-4zu fail %-4zu worst_abs %.3g\n", r.passed ? "ok" : "FAIL",
                r.name.c_str(), r.coordinates, r.within_rel, r.within_abs_only, r.failures, r.worst_abs);
    ok = ok && r.passed;
  }
  std::printf("%s: %zu checks\n", ok ? "all passed" : "FAILED", reports.size());
  return ok ? kOk : kNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatio-temporal graph convolution toolkit"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "generate a synthetic dataset");
  s->add_option("--config", synth.config, "synthetic task JSON")->required();
  s->add_option("--seed", synth.seed)->required();
  s->add_option("--out", synth.out, "output directory")->required();
  s->add_option("--count", synth.count, "number of sequences");
  s->add_option("--test", synth.test, "how many of the last sequences form the test split");
  s->add_flag("--force", synth.force, "overwrite an existing dataset");

  IngestArgs ingest;
  auto* in = app.add_subcommand("ingest", "build one sequence from CSV tables");
  in->add_option("--nodes", ingest.nodes, "track_id,type,segment,values...")->required();
  in->add_option("--labels", ingest.labels, "segment,label[,frames]")->required();
  in->add_option("--edges", ingest.edges, "kind,segment,a,b,weight[,delta]");
  in->add_option("--classes", ingest.classes)->required();
  in->add_option("--subject", ingest.subject);
  in->add_option("--out", ingest.out, "output manifest path")->required();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "train a model");
  t->add_option("--manifest", tr.manifest)->required();
  t->add_option("--seed", tr.seed)->required();
  t->add_option("--out", tr.out, "run directory for checkpoints and curve.csv")->required();
  t->add_option("--split", tr.split, "training split, or 'all'");
  t->add_option("--val-split", tr.val_split, "split scored after every epoch");
  t->add_option("--resume", tr.resume, "checkpoint to continue from");
  t->add_flag("--cv", tr.cv, "leave-one-fold-out cross-validation");
  t->add_option("--threads", tr.threads, "parallel folds under --cv");
  t->add_flag("--force", tr.force, "overwrite an existing run directory");
  tr.config.add(t, true);

  EvalArgs inf;
  auto* i = app.add_subcommand("infer", "write fused score timelines");
  i->add_option("--manifest", inf.manifest)->required();
  i->add_option("--checkpoint", inf.checkpoint)->required();
  i->add_option("--out", inf.out, "output directory")->required();
  i->add_option("--split", inf.split);
  i->add_option("--window", inf.window);
  i->add_option("--overlap", inf.overlap);

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "score a checkpoint");
  e->add_option("--manifest", ev.manifest)->required();
  e->add_option("--checkpoint", ev.checkpoint)->required();
  e->add_option("--split", ev.split);
  e->add_option("--out", ev.out, "also write the metrics JSON here");
  e->add_option("--window", ev.window);
  e->add_option("--overlap", ev.overlap);
  e->add_flag("--per-frame", ev.per_frame, "weight segments by their frame counts");

  GradcheckArgs gc;
  auto* g = app.add_subcommand("gradcheck", "finite-difference check of every op and a model");
  g->add_option("--model-config", gc.model, "model config or preset; defaults to the built-in tiny model");
  g->add_option("--seed", gc.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kOk : kInvalid;
  }

  try {
    if (*s) return run_synth(synth);
    if (*in) return run_ingest(ingest);
    if (*t) return run_train(tr);
    if (*i) return run_infer(inf);
    if (*e) return run_eval(ev);
    if (*g) return run_gradcheck(gc);
  } catch (const NumericalError& err) {
    std::cerr << "numerical error: " << err.what() << "\n";
    return kNumerical;
  } catch (const ValidationError& err) {
    std::cerr << "invalid input: " << err.what() << "\n";
    return kInvalid;
  } catch (const DimensionError& err) {
    std::cerr << "dimension mismatch: " << err.what() << "\n";
    return kInvalid;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 1;
}
