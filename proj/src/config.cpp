#include "stgcn/config.hpp"

#include <fstream>
#include <sstream>

#include "json_codec.hpp"
#include "stgcn/errors.hpp"

namespace stgcn {

std::string_view to_string(Harmonization h) { return h == Harmonization::projection ? "projection" : "per_cluster"; }

Harmonization harmonization_from_string(std::string_view name) {
  if (name == "projection") return Harmonization::projection;
  if (name == "per_cluster") return Harmonization::per_cluster;
  throw ConfigurationError("unknown harmonization '" + std::string(name) + "'");
}

std::string_view to_string(FusionWeighting w) { return w == FusionWeighting::uniform ? "uniform" : "triangular"; }

FusionWeighting fusion_weighting_from_string(std::string_view name) {
  if (name == "uniform") return FusionWeighting::uniform;
  if (name == "triangular") return FusionWeighting::triangular;
  throw ConfigurationError("unknown fusion weighting '" + std::string(name) + "'");
}

void ModelConfig::validate() const {
  if (cluster_lengths.empty()) throw ConfigurationError("model needs at least one feature cluster");
  for (auto len : cluster_lengths)
    if (len == 0) throw ConfigurationError("cluster feature length must be positive");
  if (d_model == 0 || d_out == 0) throw ConfigurationError("d_model and d_out must be positive");
  if (span == 0) throw ConfigurationError("temporal span must be >= 1");
  if (classes == 0) throw ConfigurationError("model needs at least one class");
  if (harmonization == Harmonization::projection) {
    if (type_lengths.empty()) throw ConfigurationError("projection harmonization needs per-type feature lengths");
    for (std::size_t i = 0; i < type_lengths.size(); ++i) {
      if (type_lengths[i].second == 0) throw ConfigurationError("type feature length must be positive");
      for (std::size_t j = 0; j < i; ++j)
        if (type_lengths[j].first == type_lengths[i].first) throw ConfigurationError("duplicate node type length");
    }
  }
  hourglass.validate();
}

void ModelConfig::check_compatible(const StgSequence& seq) const {
  if (seq.clusters.size() != cluster_lengths.size()) {
    throw ValidationError("sequence has " + std::to_string(seq.clusters.size()) + " clusters, model expects " +
                          std::to_string(cluster_lengths.size()));
  }
  for (std::size_t c = 0; c < cluster_lengths.size(); ++c) {
    if (seq.clusters[c].feature_len != cluster_lengths[c]) {
      throw ValidationError("cluster " + std::to_string(c) + " has feature length " +
                            std::to_string(seq.clusters[c].feature_len) + ", model expects " +
                            std::to_string(cluster_lengths[c]));
    }
  }
  if (seq.classes != classes) {
    throw ValidationError("sequence has C=" + std::to_string(seq.classes) + ", model expects C=" +
                          std::to_string(classes));
  }
  if (seq.mode != mode) throw ValidationError("sequence label mode does not match the model");
}

void TrainConfig::validate() const {
  if (!(lr0 > 0.0f)) throw ConfigurationError("lr0 must be positive");
  if (!(sched_drop > 0.0f && sched_drop <= 1.0f)) throw ConfigurationError("sched_drop must be in (0, 1]");
  if (sched_step == 0) throw ConfigurationError("sched_step must be positive");
  if (max_steps == 0) throw ConfigurationError("max_steps must be positive");
  if (window == 0 || overlap >= window) throw ConfigurationError("window must exceed overlap");
  if (eval_points == 0) throw ConfigurationError("eval_points must be positive");
  if (!(momentum >= 0.0f && momentum < 1.0f)) throw ConfigurationError("momentum must be in [0, 1)");
}

namespace codec {

json parse(std::string_view text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed ") + what + ": " + e.what());
  }
}

namespace {

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigurationError(std::string("field '") + key + "': " + e.what());
  }
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const char* what) {
  if (!j.is_object()) throw ConfigurationError(std::string(what) + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw ConfigurationError(std::string("unknown ") + what + " field '" + key + "'");
  }
}

}  // namespace

json encode(const ModelConfig& cfg) {
  json types = json::object();
  for (const auto& [type, len] : cfg.type_lengths) types[std::string(to_string(type))] = len;
  return json{{"cluster_lengths", cfg.cluster_lengths},
              {"type_lengths", types},
              {"d_model", cfg.d_model},
              {"d_out", cfg.d_out},
              {"harmonization", to_string(cfg.harmonization)},
              {"span", cfg.span},
              {"levels", cfg.hourglass.levels},
              {"stride", cfg.hourglass.stride},
              {"kernel", cfg.hourglass.kernel},
              {"stack_depth", cfg.hourglass.stack_depth},
              {"skip", cfg.hourglass.skip},
              {"decoder_stgcn", cfg.hourglass.decoder_stgcn},
              {"mode", to_string(cfg.mode)},
              {"classes", cfg.classes},
              {"subtract_mean", cfg.subtract_mean},
              {"bias", cfg.bias}};
}

ModelConfig decode_model(const json& j) {
  reject_unknown(j,
                 {"cluster_lengths", "type_lengths", "d_model", "d_out", "harmonization", "span", "levels", "stride",
                  "kernel", "stack_depth", "skip", "decoder_stgcn", "mode", "classes", "subtract_mean", "bias"},
                 "model config");
  ModelConfig cfg;
  cfg.cluster_lengths = get_or(j, "cluster_lengths", cfg.cluster_lengths);
  if (j.contains("type_lengths")) {
    for (const auto& [name, len] : j.at("type_lengths").items())
      cfg.type_lengths.emplace_back(node_type_from_string(name), len.get<std::size_t>());
  }
  cfg.d_model = get_or(j, "d_model", cfg.d_model);
  cfg.d_out = get_or(j, "d_out", cfg.d_out);
  cfg.harmonization = harmonization_from_string(get_or<std::string>(j, "harmonization", "per_cluster"));
  cfg.span = get_or(j, "span", cfg.span);
  cfg.hourglass.levels = get_or(j, "levels", cfg.hourglass.levels);
  cfg.hourglass.stride = get_or(j, "stride", cfg.hourglass.stride);
  cfg.hourglass.kernel = get_or(j, "kernel", cfg.hourglass.kernel);
  cfg.hourglass.stack_depth = get_or(j, "stack_depth", cfg.hourglass.stack_depth);
  cfg.hourglass.skip = get_or(j, "skip", cfg.hourglass.skip);
  cfg.hourglass.decoder_stgcn = get_or(j, "decoder_stgcn", cfg.hourglass.decoder_stgcn);
  cfg.mode = label_mode_from_string(get_or<std::string>(j, "mode", "single"));
  cfg.classes = get_or(j, "classes", cfg.classes);
  cfg.subtract_mean = get_or(j, "subtract_mean", cfg.subtract_mean);
  cfg.bias = get_or(j, "bias", cfg.bias);
  cfg.validate();
  return cfg;
}

json encode(const TrainConfig& cfg) {
  return json{{"mode", to_string(cfg.mode)},   {"lr0", cfg.lr0},          {"sched_step", cfg.sched_step},
              {"sched_drop", cfg.sched_drop},  {"max_steps", cfg.max_steps}, {"epochs", cfg.epochs},
              {"seed", cfg.seed},              {"momentum", cfg.momentum}, {"window", cfg.window},
              {"overlap", cfg.overlap},        {"fusion", to_string(cfg.fusion)},
              {"eval_points", cfg.eval_points}};
}

TrainConfig decode_train(const json& j) {
  reject_unknown(j,
                 {"mode", "lr0", "sched_step", "sched_drop", "max_steps", "epochs", "seed", "momentum", "window",
                  "overlap", "fusion", "eval_points"},
                 "train config");
  TrainConfig cfg;
  cfg.mode = label_mode_from_string(get_or<std::string>(j, "mode", "single"));
  cfg.lr0 = get_or(j, "lr0", cfg.lr0);
  cfg.sched_step = get_or(j, "sched_step", cfg.sched_step);
  cfg.sched_drop = get_or(j, "sched_drop", cfg.sched_drop);
  cfg.max_steps = get_or(j, "max_steps", cfg.max_steps);
  cfg.epochs = get_or(j, "epochs", cfg.epochs);
  cfg.seed = get_or(j, "seed", cfg.seed);
  cfg.momentum = get_or(j, "momentum", cfg.momentum);
  cfg.window = get_or(j, "window", cfg.window);
  cfg.overlap = get_or(j, "overlap", cfg.overlap);
  cfg.fusion = fusion_weighting_from_string(get_or<std::string>(j, "fusion", "uniform"));
  cfg.eval_points = get_or(j, "eval_points", cfg.eval_points);
  cfg.validate();
  return cfg;
}

json encode(const SynthConfig& cfg) {
  json nodes = json::array();
  for (const auto& n : cfg.nodes)
    nodes.push_back({{"type", to_string(n.type)}, {"cluster", n.cluster}, {"count", n.count}});
  return json{{"classes", cfg.classes},
              {"mode", to_string(cfg.mode)},
              {"min_steps", cfg.min_steps},
              {"max_steps", cfg.max_steps},
              {"noise", cfg.noise},
              {"class_scale", cfg.class_scale},
              {"cluster_lengths", cfg.cluster_lengths},
              {"nodes", nodes},
              {"min_segment", cfg.min_segment},
              {"max_segment", cfg.max_segment},
              {"spatial_weight", cfg.spatial_weight},
              {"temporal_weight", cfg.temporal_weight},
              {"temporal_span", cfg.temporal_span},
              {"temporal_decay", cfg.temporal_decay},
              {"presence_rate", cfg.presence_rate},
              {"max_active", cfg.max_active},
              {"subjects", cfg.subjects}};
}

SynthConfig decode_synth(const json& j) {
  reject_unknown(j,
                 {"classes", "mode", "min_steps", "max_steps", "noise", "class_scale", "cluster_lengths", "nodes",
                  "min_segment", "max_segment", "spatial_weight", "temporal_weight", "temporal_span", "temporal_decay", "presence_rate",
                  "max_active", "subjects"},
                 "synth config");
  SynthConfig cfg;
  cfg.classes = get_or(j, "classes", cfg.classes);
  cfg.mode = label_mode_from_string(get_or<std::string>(j, "mode", "single"));
  cfg.min_steps = get_or(j, "min_steps", cfg.min_steps);
  cfg.max_steps = get_or(j, "max_steps", cfg.max_steps);
  cfg.noise = get_or(j, "noise", cfg.noise);
  cfg.class_scale = get_or(j, "class_scale", cfg.class_scale);
  cfg.cluster_lengths = get_or(j, "cluster_lengths", cfg.cluster_lengths);
  if (j.contains("nodes")) {
    cfg.nodes.clear();
    for (const auto& n : j.at("nodes")) {
      cfg.nodes.push_back({node_type_from_string(get_or<std::string>(n, "type", "other")),
                           get_or<std::size_t>(n, "cluster", 0), get_or<std::size_t>(n, "count", 1)});
    }
  }
  cfg.min_segment = get_or(j, "min_segment", cfg.min_segment);
  cfg.max_segment = get_or(j, "max_segment", cfg.max_segment);
  cfg.spatial_weight = get_or(j, "spatial_weight", cfg.spatial_weight);
  cfg.temporal_weight = get_or(j, "temporal_weight", cfg.temporal_weight);
  cfg.temporal_span = get_or(j, "temporal_span", cfg.temporal_span);
  cfg.temporal_decay = get_or(j, "temporal_decay", cfg.temporal_decay);
  cfg.presence_rate = get_or(j, "presence_rate", cfg.presence_rate);
  cfg.max_active = get_or(j, "max_active", cfg.max_active);
  cfg.subjects = get_or(j, "subjects", cfg.subjects);
  cfg.validate();
  return cfg;
}

}  // namespace codec

std::string to_json(const ModelConfig& cfg) { return codec::encode(cfg).dump(2); }
std::string to_json(const TrainConfig& cfg) { return codec::encode(cfg).dump(2); }
std::string to_json(const SynthConfig& cfg) { return codec::encode(cfg).dump(2); }

ModelConfig model_config_from_json(std::string_view text) {
  return codec::decode_model(codec::parse(text, "model config"));
}
TrainConfig train_config_from_json(std::string_view text) {
  return codec::decode_train(codec::parse(text, "train config"));
}
SynthConfig synth_config_from_json(std::string_view text) {
  return codec::decode_synth(codec::parse(text, "synth config"));
}

std::string to_json(const Preset& preset) {
  return codec::json{{"model", codec::encode(preset.model)}, {"train", codec::encode(preset.train)}}.dump(2);
}

Preset preset_from_json(std::string_view text) {
  const auto j = codec::parse(text, "preset");
  if (!j.is_object() || !j.contains("model") || !j.contains("train")) {
    throw ConfigurationError("preset must hold 'model' and 'train' objects");
  }
  Preset p{codec::decode_model(j.at("model")), codec::decode_train(j.at("train"))};
  if (p.model.mode != p.train.mode) throw ConfigurationError("preset model and train label modes differ");
  return p;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot open " + path + " for writing");
  out << text;
  if (!out) throw ValidationError("failed writing " + path);
}

}  // namespace stgcn
