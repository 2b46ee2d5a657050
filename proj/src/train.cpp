#include "stgcn/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <thread>

#include "json_codec.hpp"
#include "stgcn/errors.hpp"
#include "stgcn/infer.hpp"
#include "stgcn/serialize.hpp"

namespace stgcn {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::size_t masked_in(const std::vector<std::uint8_t>& mask) {
  std::size_t n = 0;
  for (auto m : mask) n += m ? 1 : 0;
  return n;
}

void check_scores(const Tensor& s, std::size_t steps, const char* op) {
  if (s.rank() != 2 || s.rows() != steps) {
    throw DimensionError(std::string(op) + ": scores " + shape_string(s.shape()) + " do not have " +
                         std::to_string(steps) + " rows");
  }
}

}  // namespace

Var masked_bce_loss(Var scores, const std::vector<std::uint8_t>& targets, const std::vector<std::uint8_t>& mask) {
  const Tensor& s = scores.value();
  check_scores(s, mask.size(), "masked_bce_loss");
  const std::size_t T = s.rows(), C = s.cols();
  if (targets.size() != T * C) throw DimensionError("masked_bce_loss: targets do not match [T x C]");
  const std::size_t count = masked_in(mask) * C;
  if (count == 0) throw ValidationError("masked_bce_loss: every timestep is masked out");
  double total = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    if (!mask[t]) continue;
    for (std::size_t c = 0; c < C; ++c) {
      const double x = s.at(t, c);
      const double y = targets[t * C + c] ? 1.0 : 0.0;
      total += std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
    }
  }
  Tensor value = Tensor::scalar(static_cast<float>(total / static_cast<double>(count)));
  require_finite(value, "masked_bce_loss");
  return scores.tape().record(std::move(value), {scores}, [targets, mask, count](const BackwardArgs& args) {
    const Tensor& x = *args.inputs[0];
    const double g = args.grad_output[0] / static_cast<double>(count);
    Tensor out(x.shape());
    for (std::size_t t = 0; t < x.rows(); ++t) {
      if (!mask[t]) continue;
      for (std::size_t c = 0; c < x.cols(); ++c) {
        const double p = 1.0 / (1.0 + std::exp(-static_cast<double>(x.at(t, c))));
        out.at(t, c) = static_cast<float>(g * (p - (targets[t * x.cols() + c] ? 1.0 : 0.0)));
      }
    }
    return std::vector<std::optional<Tensor>>{std::move(out)};
  });
}

Var masked_ce_loss(Var scores, const std::vector<std::int32_t>& labels, const std::vector<std::uint8_t>& mask) {
  const Tensor& s = scores.value();
  check_scores(s, mask.size(), "masked_ce_loss");
  if (labels.size() != mask.size()) throw DimensionError("masked_ce_loss: one label per timestep required");
  const std::size_t T = s.rows(), C = s.cols();
  const std::size_t count = masked_in(mask);
  if (count == 0) throw ValidationError("masked_ce_loss: every timestep is masked out");
  // Softmax rows, kept for the backward rule.
  auto softmax = std::make_shared<std::vector<double>>(T * C, 0.0);
  double total = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    if (!mask[t]) continue;
    if (labels[t] < 0 || static_cast<std::size_t>(labels[t]) >= C) {
      throw ValidationError("masked_ce_loss: label " + std::to_string(labels[t]) + " outside [0, " +
                            std::to_string(C) + ")");
    }
    double top = s.at(t, 0);
    for (std::size_t c = 1; c < C; ++c) top = std::max(top, static_cast<double>(s.at(t, c)));
    double z = 0.0;
    for (std::size_t c = 0; c < C; ++c) z += std::exp(s.at(t, c) - top);
    for (std::size_t c = 0; c < C; ++c) (*softmax)[t * C + c] = std::exp(s.at(t, c) - top) / z;
    total += top + std::log(z) - s.at(t, static_cast<std::size_t>(labels[t]));
  }
  Tensor value = Tensor::scalar(static_cast<float>(total / static_cast<double>(count)));
  require_finite(value, "masked_ce_loss");
  return scores.tape().record(std::move(value), {scores}, [labels, mask, count, softmax](const BackwardArgs& args) {
    const Tensor& x = *args.inputs[0];
    const double g = args.grad_output[0] / static_cast<double>(count);
    Tensor out(x.shape());
    for (std::size_t t = 0; t < x.rows(); ++t) {
      if (!mask[t]) continue;
      for (std::size_t c = 0; c < x.cols(); ++c) {
        const double y = static_cast<std::size_t>(labels[t]) == c ? 1.0 : 0.0;
        out.at(t, c) = static_cast<float>(g * ((*softmax)[t * x.cols() + c] - y));
      }
    }
    return std::vector<std::optional<Tensor>>{std::move(out)};
  });
}

Var sequence_loss(Var scores, const StgSequence& seq) {
  if (seq.mode == LabelMode::single) return masked_ce_loss(scores, seq.labels, seq.label_mask);
  return masked_bce_loss(scores, seq.multi_labels, seq.label_mask);
}

float step_lr(std::size_t epoch, const TrainConfig& cfg) {
  const auto k = static_cast<double>(epoch / cfg.sched_step);
  return static_cast<float>(static_cast<double>(cfg.lr0) * std::pow(static_cast<double>(cfg.sched_drop), k));
}

void sgd_step(ParameterSet& params, const std::map<std::string, Var>& bound, const Gradients& grads, float lr,
              float momentum, ParameterSet& velocity) {
  if (!(lr > 0.0f)) throw ContractError("sgd_step: learning rate must be positive");
  for (auto& [name, value] : params) {
    const Var v = bound.at(name);
    if (!grads.contains(v)) continue;
    const Tensor& g = grads[v];
    auto p = value.data();
    if (momentum > 0.0f) {
      auto [it, inserted] = velocity.try_emplace(name, Tensor(value.shape()));
      auto buf = it->second.data();
      for (std::size_t i = 0; i < p.size(); ++i) {
        buf[i] = momentum * buf[i] + g[i];
        p[i] -= lr * buf[i];
      }
    } else {
      for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
    }
    require_finite(value, ("sgd_step(" + name + ")").c_str());
  }
}

StgSequence train_window_sample(const StgSequence& seq, std::size_t max_T, std::mt19937_64& rng) {
  if (max_T == 0) throw ValidationError("window length must be >= 1");
  if (seq.steps < max_T) return pad_steps(seq, max_T);
  const std::size_t start = std::uniform_int_distribution<std::size_t>(0, seq.steps - max_T)(rng);
  return crop_steps(seq, start, max_T);
}

std::string curve_csv(const std::vector<CurvePoint>& curve) {
  std::ostringstream out;
  out.precision(9);
  out << "epoch,split,loss,metric\n";
  for (const auto& p : curve) {
    out << p.epoch << ',' << p.split << ',' << p.loss << ',';
    if (!std::isnan(p.metric)) out << p.metric;
    out << '\n';
  }
  return out.str();
}

// ---- checkpoints ----

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  using codec::json;
  const std::string blob = path + ".bin";
  std::ofstream out(blob, std::ios::binary);
  if (!out) throw ValidationError("cannot open " + blob + " for writing");
  json tensors = json::array();
  auto emit = [&](const std::string& prefix, const ParameterSet& set) {
    for (const auto& [key, t] : set) {
      tensors.push_back({{"key", prefix + key}, {"shape", t.shape()}});
      write_tensor(out, t);
    }
  };
  emit("param/", ckpt.params);
  emit("velocity/", ckpt.velocity);
  if (!out) throw ValidationError("failed writing " + blob);
  const std::size_t slash = blob.find_last_of('/');
  const json manifest{{"format", "stgcn-checkpoint"},
                      {"version", 1},
                      {"model", codec::encode(ckpt.model)},
                      {"train", codec::encode(ckpt.train)},
                      {"epoch", ckpt.epoch},
                      {"rng_state", ckpt.rng_state},
                      {"blob", slash == std::string::npos ? blob : blob.substr(slash + 1)},
                      {"tensors", tensors}};
  write_text_file(path, manifest.dump(2));
}

Checkpoint load_checkpoint(const std::string& path) {
  const auto j = codec::parse(read_text_file(path), "checkpoint manifest");
  if (!j.is_object() || j.value("format", "") != "stgcn-checkpoint") {
    throw ValidationError(path + " is not a checkpoint manifest");
  }
  Checkpoint ckpt;
  try {
    ckpt.model = codec::decode_model(j.at("model"));
    ckpt.train = codec::decode_train(j.at("train"));
    ckpt.epoch = j.at("epoch").get<std::size_t>();
    ckpt.rng_state = j.at("rng_state").get<std::string>();
    const std::size_t slash = path.find_last_of('/');
    const std::string dir = slash == std::string::npos ? "" : path.substr(0, slash + 1);
    std::ifstream in(dir + j.at("blob").get<std::string>(), std::ios::binary);
    if (!in) throw ValidationError("cannot open checkpoint blob for " + path);
    for (const auto& entry : j.at("tensors")) {
      const auto key = entry.at("key").get<std::string>();
      Tensor t = read_tensor(in);
      if (t.shape() != entry.at("shape").get<Shape>()) throw ValidationError("checkpoint tensor '" + key + "' shape mismatch");
      if (key.rfind("param/", 0) == 0) {
        ckpt.params.emplace(key.substr(6), std::move(t));
      } else if (key.rfind("velocity/", 0) == 0) {
        ckpt.velocity.emplace(key.substr(9), std::move(t));
      } else {
        throw ValidationError("unknown checkpoint tensor '" + key + "'");
      }
    }
    if (in.peek() != std::char_traits<char>::eof()) throw ValidationError("checkpoint blob has trailing bytes");
  } catch (const codec::json::exception& e) {
    throw ValidationError("malformed checkpoint manifest: " + std::string(e.what()));
  }
  Model(ckpt.model, ckpt.params);  // shape check
  return ckpt;
}

bool bitwise_equal(const Checkpoint& a, const Checkpoint& b) {
  return codec::encode(a.model) == codec::encode(b.model) && codec::encode(a.train) == codec::encode(b.train) &&
         a.epoch == b.epoch && a.params == b.params && a.velocity == b.velocity && a.rng_state == b.rng_state;
}

// ---- training loop ----

TrainResult train(const std::vector<StgSequence>& data, const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                  const TrainOptions& options) {
  if (data.empty()) throw ValidationError("train: empty dataset");
  model_cfg.validate();
  train_cfg.validate();
  if (model_cfg.mode != train_cfg.mode) throw ConfigurationError("model and training label modes differ");
  for (const auto& seq : data) {
    validate(seq);
    model_cfg.check_compatible(seq);
  }

  TrainResult result;
  Checkpoint& ckpt = result.checkpoint;
  std::mt19937_64 rng(train_cfg.seed);
  if (options.resume) {
    ckpt = *options.resume;
    std::istringstream(ckpt.rng_state) >> rng;
  } else {
    ckpt.params = init_parameters(model_cfg, train_cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  }
  ckpt.model = model_cfg;
  ckpt.train = train_cfg;
  Model model(model_cfg, std::move(ckpt.params));

  std::vector<std::size_t> order(data.size());
  for (std::size_t epoch = ckpt.epoch; epoch < train_cfg.epochs; ++epoch) {
    const float lr = step_lr(epoch, train_cfg);
    // Reset before shuffling so an epoch depends only on the RNG state.
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    std::size_t steps = 0;
    for (const std::size_t idx : order) {
      const StgSequence window = train_window_sample(data[idx], train_cfg.max_steps, rng);
      if (masked_in(window.label_mask) == 0) continue;
      try {
        Tape tape;
        const auto fwd = model.forward(tape, window, true);
        const Var loss = sequence_loss(fwd.logits, window);
        const Gradients grads = tape.backward(loss);
        sgd_step(model.parameters(), fwd.bound, grads, lr, train_cfg.momentum, ckpt.velocity);
        total += loss.value()[0];
        ++steps;
      } catch (const NumericalError& e) {
        throw NumericalError("training diverged at epoch " + std::to_string(epoch) + ", sequence " +
                             std::to_string(idx) + " (lr " + std::to_string(lr) + "): " + e.what());
      }
    }
    result.curve.push_back({epoch, "train", steps ? total / static_cast<double>(steps) : kNaN, kNaN});
    if (options.validation && !options.validation->empty()) {
      double val_loss = 0.0;
      for (const auto& seq : *options.validation) {
        Tape tape;
        val_loss += sequence_loss(model.forward(tape, seq, false).logits, seq).value()[0];
      }
      const double metric = evaluate(model, *options.validation, train_cfg).headline();
      result.curve.push_back(
          {epoch, "val", val_loss / static_cast<double>(options.validation->size()), metric});
    }
    ckpt.epoch = epoch + 1;
    std::ostringstream state;
    state << rng;
    ckpt.rng_state = state.str();
    if (options.on_epoch) {
      ckpt.params = model.parameters();
      options.on_epoch(ckpt, result.curve);
    }
  }
  if (ckpt.rng_state.empty()) {
    std::ostringstream state;
    state << rng;
    ckpt.rng_state = state.str();
  }
  ckpt.params = model.parameters();
  return result;
}

std::vector<FoldResult> cross_validate(const std::vector<StgSequence>& data, const ModelConfig& model_cfg,
                                       const TrainConfig& train_cfg, std::size_t threads) {
  std::set<std::string> subjects;
  for (const auto& seq : data) subjects.insert(seq.subject);
  if (subjects.size() < 2) throw ValidationError("cross-validation needs at least two subjects");
  std::vector<FoldResult> folds;
  for (const auto& s : subjects) folds.push_back({s, {}, 0.0});

  std::vector<std::exception_ptr> errors(folds.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t f = next++; f < folds.size(); f = next++) {
      try {
        std::vector<StgSequence> train_set, test_set;
        for (const auto& seq : data) (seq.subject == folds[f].held_out ? test_set : train_set).push_back(seq);
        folds[f].result = train(train_set, model_cfg, train_cfg);
        const Model model(model_cfg, folds[f].result.checkpoint.params);
        folds[f].metric = evaluate(model, test_set, train_cfg).headline();
      } catch (...) {
        errors[f] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t i = 0; i < std::max<std::size_t>(1, std::min(threads, folds.size())); ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return folds;
}

}  // namespace stgcn
