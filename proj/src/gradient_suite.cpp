#include "stgcn/gradient_suite.hpp"

#include <random>

#include "stgcn/gcn.hpp"
#include "stgcn/model.hpp"
#include "stgcn/ops.hpp"
#include "stgcn/train.hpp"

namespace stgcn {

namespace {

constexpr std::size_t kInstanceAttempts = 50;

using Params = const std::vector<Var>&;

// Three tracks per step cycling through the model's clusters (or types in
// projection mode), random presence, chained and fully connected.
StgSequence suite_sequence(const ModelConfig& cfg, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> value(-1.0f, 1.0f);
  std::bernoulli_distribution present(0.85);
  StgSequence seq;
  seq.steps = 8;
  seq.classes = cfg.classes;
  seq.mode = cfg.mode;
  for (std::size_t c = 0; c < cfg.cluster_lengths.size(); ++c) seq.clusters.push_back({c, cfg.cluster_lengths[c]});
  for (std::size_t k = 0; k < 3; ++k) {
    NodeTrack tr;
    tr.track_id = "n" + std::to_string(k);
    tr.cluster = k % cfg.cluster_lengths.size();
    if (cfg.harmonization == Harmonization::projection) {
      const auto& [type, len] = cfg.type_lengths[k % cfg.type_lengths.size()];
      tr.type = type;
      for (std::size_t c = 0; c < cfg.cluster_lengths.size(); ++c)
        if (cfg.cluster_lengths[c] == len) tr.cluster = c;
    }
    const std::size_t len = cfg.cluster_lengths[tr.cluster];
    tr.presence.resize(seq.steps);
    tr.features = Tensor(Shape{seq.steps, len});
    for (std::size_t t = 0; t < seq.steps; ++t) {
      tr.presence[t] = present(rng) ? 1 : 0;
      if (tr.presence[t])
        for (std::size_t j = 0; j < len; ++j) tr.features.at(t, j) = value(rng);
    }
    seq.tracks.push_back(std::move(tr));
  }
  connect_spatial_fully(seq, 0.1f);
  connect_tracks_temporally(seq, cfg.span, 1.0f);
  std::uniform_int_distribution<std::size_t> label(0, cfg.classes - 1);
  seq.label_mask.assign(seq.steps, 1);
  seq.frame_counts.assign(seq.steps, 1);
  if (cfg.mode == LabelMode::single) {
    for (std::size_t t = 0; t < seq.steps; ++t) seq.labels.push_back(static_cast<std::int32_t>(label(rng)));
  } else {
    std::bernoulli_distribution on(0.4);
    for (std::size_t i = 0; i < seq.steps * cfg.classes; ++i) seq.multi_labels.push_back(on(rng) ? 1 : 0);
  }
  return seq;
}

}  // namespace

ModelConfig tiny_model_config() {
  ModelConfig cfg;
  cfg.cluster_lengths = {4};
  cfg.d_model = 4;
  cfg.d_out = 4;
  cfg.classes = 3;
  cfg.hourglass.levels = 2;
  cfg.hourglass.stack_depth = 2;
  return cfg;
}

std::vector<GradCheckReport> run_gradient_suite(const ModelConfig& model_cfg, std::uint64_t seed,
                                                const GradCheckOptions& opts) {
  model_cfg.validate();
  std::mt19937_64 rng(seed);
  auto r = [&](Shape s) {
    std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
    Tensor t(std::move(s));
    for (auto& v : t.data()) v = dist(rng);
    return t;
  };
  std::vector<GradCheckReport> out;
  auto check = [&](const char* name, OutputBuilder build, std::vector<Tensor> params) {
    out.push_back(check_gradients(name, build, std::move(params), opts, rng()));
  };

  check("matmul", [](Tape&, Params p) { return ops::matmul(p[0], p[1]); }, {r({4, 3}), r({3, 5})});
  check("add", [](Tape&, Params p) { return ops::add(p[0], p[1]); }, {r({3, 4}), r({3, 4})});
  check("sub", [](Tape&, Params p) { return ops::sub(p[0], p[1]); }, {r({3, 4}), r({3, 4})});
  check("add_row", [](Tape&, Params p) { return ops::add_row(p[0], p[1]); }, {r({5, 3}), r({3})});
  check("scale", [](Tape&, Params p) { return ops::scale(p[0], -1.7f); }, {r({2, 3, 2})});
  check("mul", [](Tape&, Params p) { return ops::mul(p[0], p[1]); }, {r({4, 3}), r({4, 3})});
  check("relu", [](Tape&, Params p) { return ops::relu(p[0]); }, {r({6, 5})});
  check("sigmoid", [](Tape&, Params p) { return ops::sigmoid(p[0]); }, {r({6, 5})});
  check("mean_axis", [](Tape&, Params p) { return ops::mean_axis(p[0], 1); }, {r({3, 4, 2})});
  check("sum", [](Tape&, Params p) { return ops::sum(p[0]); }, {r({3, 3})});
  check("concat", [](Tape&, Params p) { return ops::concat({p[0], p[1]}, 1); }, {r({3, 2}), r({3, 4})});
  check("slice", [](Tape&, Params p) { return ops::slice(p[0], 1, 1, 3); }, {r({2, 4, 2})});
  check("reshape", [](Tape&, Params p) { return ops::reshape(p[0], {6, 2}); }, {r({3, 4})});
  check("pad_axis0", [](Tape&, Params p) { return ops::pad_axis0(p[0], 5); }, {r({3, 2})});
  check("conv1d_temporal", [](Tape&, Params p) { return ops::conv1d_temporal(p[0], p[1], 2); },
        {r({6, 3, 2}), r({2, 2, 4})});
  check("deconv1d_temporal", [](Tape&, Params p) { return ops::deconv1d_temporal(p[0], p[1], 2); },
        {r({3, 2, 2}), r({3, 2, 3})});

  const std::vector<std::uint8_t> mask{1, 0, 1, 1};
  const std::vector<std::uint8_t> targets{1, 0, 1, 0, 0, 1, 1, 1, 0, 0, 1, 0};
  check("masked_bce_loss", [&](Tape&, Params p) { return masked_bce_loss(p[0], targets, mask); },
        {r({4, 3})});
  check("masked_ce_loss", [&](Tape&, Params p) { return masked_ce_loss(p[0], {2, 0, 1, 0}, mask); },
        {r({4, 3})});

  const StgSequence seq = suite_sequence(model_cfg, rng);
  const std::size_t n = seq.steps * seq.nodes_per_step();
  const NormalizedPair adj = normalize(build_adjacency(seq, model_cfg.span, true));
  check("stgcn_layer", [&](Tape&, Params p) { return stgcn_layer(p[0], adj, {{p[1]}, p[2], std::nullopt}); },
        {r({n, 4}), r({4, 5}), r({5, 3})});

  // Parameters are drawn from [-1, 1] like every other checked input; at
  // init scale most gradients sit below the float finite-difference noise.
  // An instance where some perturbation crosses a ReLU kink is redrawn: the
  // central difference there measures the kink, not the gradient.
  const Model model(model_cfg, rng());
  std::vector<std::string> names;
  for (const auto& [name, value] : model.parameters()) names.push_back(name);
  // The logits rather than the loss: with weights this large the loss
  // saturates and its gradients drop below what float differences resolve.
  const OutputBuilder logits = [&](Tape& tape, Params p) {
    std::map<std::string, Var> bound;
    for (std::size_t i = 0; i < p.size(); ++i) bound.emplace(names[i], p[i]);
    return model.forward(tape, seq, bound);
  };
  GradCheckReport report;
  for (std::size_t attempt = 1; attempt <= kInstanceAttempts; ++attempt) {
    std::vector<Tensor> values;
    for (const auto& [name, value] : model.parameters()) values.push_back(r(value.shape()));
    report = check_gradients("model", logits, std::move(values), opts, rng());
    if (report.kinks == 0) break;
  }
  out.push_back(report);
  return out;
}

}  // namespace stgcn
