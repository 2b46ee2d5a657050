#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "stgcn/errors.hpp"
#include "stgcn/gradcheck.hpp"
#include "stgcn/ops.hpp"
#include "stgcn/synth.hpp"
#include "stgcn/train.hpp"
#include "test_util.hpp"

using namespace stgcn;

namespace {

float loss_value(Var v) { return v.value()[0]; }

ModelConfig tiny_model(std::size_t classes = 5) {
  ModelConfig cfg;
  cfg.cluster_lengths = {16, 12};
  cfg.d_model = 8;
  cfg.d_out = 8;
  cfg.classes = classes;
  cfg.hourglass.levels = 1;
  return cfg;
}

std::vector<StgSequence> tiny_data(std::size_t count, std::uint64_t seed = 3) {
  SynthConfig sc;
  sc.min_steps = 12;
  sc.max_steps = 20;
  return synth_generate(sc, seed, count).sequences;
}

}  // namespace

TEST_CASE("bce closed forms") {
  Tape tape;
  CHECK(std::abs(loss_value(masked_bce_loss(tape.constant(Tensor::matrix({{0}})), {1}, {1})) - std::log(2.0f)) <
        1e-6f);
  const float confident =
      loss_value(masked_bce_loss(tape.constant(Tensor::matrix({{20, -20}, {-20, 20}})), {1, 0, 0, 1}, {1, 1}));
  CHECK(confident < 1e-3f);
  CHECK_THROWS_AS(masked_bce_loss(tape.constant(Tensor::matrix({{0}})), {1}, {0}), ValidationError);
}

TEST_CASE("ce closed forms") {
  Tape tape;
  const float uniform = loss_value(masked_ce_loss(tape.constant(Tensor(Shape{1, 10})), {3}, {1}));
  CHECK(std::abs(uniform - std::log(10.0f)) < 1e-5f);
  const float margin = loss_value(masked_ce_loss(tape.constant(Tensor::matrix({{30, 0, 0}})), {0}, {1}));
  CHECK(margin < 1e-6f);
  const Tensor s = Tensor::matrix({{0.3f, -1.2f, 2.0f}, {1.0f, 0.0f, -0.5f}});
  Tensor shifted = s;
  for (std::size_t j = 0; j < 3; ++j) shifted.at(1, j) += 7.5f;
  CHECK(std::abs(loss_value(masked_ce_loss(tape.constant(s), {2, 0}, {1, 1})) -
                 loss_value(masked_ce_loss(tape.constant(shifted), {2, 0}, {1, 1}))) < 1e-5f);
  CHECK_THROWS_AS(masked_ce_loss(tape.constant(s), {3, 0}, {1, 1}), ValidationError);
}

TEST_CASE("masked-out steps do not affect either loss") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor a = testing::random_tensor({4, 3}, rng, -3, 3);
    Tensor b = a;
    for (std::size_t j = 0; j < 3; ++j) b.at(2, j) = std::uniform_real_distribution<float>(-50, 50)(rng);
    const std::vector<std::uint8_t> mask{1, 1, 0, 1};
    Tape tape;
    CHECK(loss_value(masked_ce_loss(tape.constant(a), {0, 1, 2, 2}, mask)) ==
          loss_value(masked_ce_loss(tape.constant(b), {0, 1, 2, 2}, mask)));
    const std::vector<std::uint8_t> targets{1, 0, 0, 0, 1, 1, 1, 1, 1, 0, 0, 1};
    CHECK(loss_value(masked_bce_loss(tape.constant(a), targets, mask)) ==
          loss_value(masked_bce_loss(tape.constant(b), targets, mask)));
  }
}

TEST_CASE("loss gradients pass finite differences") {
  std::mt19937_64 rng(2);
  const std::vector<std::uint8_t> mask{1, 0, 1, 1};
  const std::vector<std::uint8_t> targets{1, 0, 1, 0, 0, 1, 1, 1, 0, 0, 1, 0};
  const auto bce = check_gradients(
      "bce", [&](Tape&, const std::vector<Var>& p) { return masked_bce_loss(p[0], targets, mask); },
      {testing::random_tensor({4, 3}, rng, -2, 2)});
  CHECK(bce.passed);
  const auto ce = check_gradients(
      "ce", [&](Tape&, const std::vector<Var>& p) { return masked_ce_loss(p[0], {2, 0, 1, 0}, mask); },
      {testing::random_tensor({4, 3}, rng, -2, 2)});
  CHECK(ce.passed);
}

TEST_CASE("full model gradients pass finite differences") {
  SynthConfig sc;
  sc.min_steps = sc.max_steps = 8;
  sc.cluster_lengths = {4};
  sc.nodes = {{NodeType::actor, 0, 3}};
  sc.classes = 3;
  const StgSequence seq = synth_generate(sc, 5, 1).sequences.front();
  ModelConfig cfg;
  cfg.cluster_lengths = {4};
  cfg.d_model = cfg.d_out = 4;
  cfg.classes = 3;
  cfg.hourglass.levels = 2;
  cfg.hourglass.stack_depth = 2;
  const Model model(cfg, 9);
  std::vector<std::string> names;
  std::vector<Tensor> values;
  for (const auto& [name, value] : model.parameters()) {
    names.push_back(name);
    values.push_back(value);
  }
  const auto report = check_gradients(
      "model",
      [&](Tape& tape, const std::vector<Var>& p) {
        std::map<std::string, Var> bound;
        for (std::size_t i = 0; i < p.size(); ++i) bound.emplace(names[i], p[i]);
        return sequence_loss(model.forward(tape, seq, bound), seq);
      },
      values);
  INFO(report.within_rel << "/" << report.coordinates << " worst " << report.worst_abs);
  CHECK(report.passed);
}

TEST_CASE("learning-rate schedule") {
  TrainConfig cfg;
  CHECK(std::abs(step_lr(2, cfg) - 0.000324f) < 1e-9f);
  // Iterated product over the stored (float) constants.
  double expected = cfg.lr0;
  for (std::size_t e = 0; e < 40; ++e) {
    CHECK(step_lr(e, cfg) == static_cast<float>(expected));
    expected *= static_cast<double>(cfg.sched_drop);
  }
  cfg.sched_drop = 1.0f;
  CHECK(step_lr(17, cfg) == cfg.lr0);
  cfg.lr0 = 0.001f;
  cfg.sched_drop = 0.999f;
  cfg.sched_step = 10;
  CHECK(step_lr(9, cfg) == 0.001f);
  const double drop = cfg.sched_drop;
  CHECK(step_lr(25, cfg) == static_cast<float>(static_cast<double>(cfg.lr0) * drop * drop));
}

TEST_CASE("sgd step") {
  Tape tape;
  ParameterSet params{{"w", Tensor::vector({1, 2})}};
  std::map<std::string, Var> bound{{"w", tape.parameter(params["w"])}};
  const auto grads = tape.backward(ops::sum(ops::scale(bound["w"], 0.0f)));
  ParameterSet velocity;
  sgd_step(params, bound, grads, 0.1f, 0.0f, velocity);
  CHECK(params["w"] == Tensor::vector({1, 2}));

  Tape t2;
  bound["w"] = t2.parameter(params["w"]);
  const auto g2 = t2.backward(ops::sum(ops::scale(bound["w"], 3.0f)));
  sgd_step(params, bound, g2, 0.1f, 0.0f, velocity);
  CHECK(params["w"] == Tensor::vector({1 - 0.1f * 3, 2 - 0.1f * 3}));
  CHECK(velocity.empty());
}

TEST_CASE("window sampling") {
  auto data = tiny_data(1);
  StgSequence seq = data.front();
  std::mt19937_64 rng(4);
  const auto same = train_window_sample(crop_steps(seq, 0, 12), 12, rng);
  CHECK(same == crop_steps(seq, 0, 12));

  SynthConfig sc;
  sc.min_steps = sc.max_steps = 30;
  const auto short_seq = synth_generate(sc, 1, 1).sequences.front();
  const auto padded = train_window_sample(short_seq, 50, rng);
  CHECK(padded.steps == 50);
  std::size_t masked = 0;
  for (auto m : padded.label_mask) masked += m ? 0 : 1;
  CHECK(masked == 20);

  sc.min_steps = sc.max_steps = 120;
  const auto long_seq = synth_generate(sc, 1, 1).sequences.front();
  std::mt19937_64 a(9), b(9);
  for (int i = 0; i < 50; ++i) {
    const auto wa = train_window_sample(long_seq, 50, a);
    CHECK(wa.steps == 50);
    CHECK(wa == train_window_sample(long_seq, 50, b));
    validate(wa);
  }
}

TEST_CASE("one step on a head-only problem lowers the loss") {
  // Zero levels, no hidden mixing beyond a single layer; a small step along
  // the gradient must decrease the loss.
  auto data = tiny_data(1);
  ModelConfig cfg = tiny_model();
  cfg.hourglass.levels = 0;
  Model model(cfg, 2);
  const StgSequence& seq = data.front();
  Tape tape;
  const auto fwd = model.forward(tape, seq, true);
  const Var loss = sequence_loss(fwd.logits, seq);
  const auto grads = tape.backward(loss);
  ParameterSet velocity;
  sgd_step(model.parameters(), fwd.bound, grads, 1e-2f, 0.0f, velocity);
  Tape after;
  CHECK(loss_value(sequence_loss(model.forward(after, seq, false).logits, seq)) < loss_value(loss));
}

TEST_CASE("training is deterministic and checkpoints round-trip") {
  const auto data = tiny_data(4);
  TrainConfig tc;
  tc.seed = 77;
  tc.epochs = 2;
  tc.max_steps = 10;
  tc.momentum = 0.5f;
  const auto a = train(data, tiny_model(), tc);
  const auto b = train(data, tiny_model(), tc);
  CHECK(a.curve == b.curve);
  CHECK(bitwise_equal(a.checkpoint, b.checkpoint));
  CHECK(a.curve.size() == 2);

  const auto dir = std::filesystem::temp_directory_path() / "stgcn_test_ckpt";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "model.json").string();
  save_checkpoint(a.checkpoint, path);
  CHECK(bitwise_equal(load_checkpoint(path), a.checkpoint));

  // Resuming after epoch 1 reproduces the uninterrupted run.
  Checkpoint first;
  TrainOptions opt;
  opt.on_epoch = [&](const Checkpoint& c, const std::vector<CurvePoint>&) {
    if (c.epoch == 1) first = c;
  };
  train(data, tiny_model(), tc, opt);
  save_checkpoint(first, path);
  const Checkpoint reloaded = load_checkpoint(path);
  TrainOptions resume;
  resume.resume = &reloaded;
  const auto resumed = train(data, tiny_model(), tc, resume);
  CHECK(bitwise_equal(resumed.checkpoint, a.checkpoint));
  std::filesystem::remove_all(dir);
}

TEST_CASE("validation split is scored each epoch") {
  const auto data = tiny_data(6);
  const std::vector<StgSequence> train_set(data.begin(), data.begin() + 4), val(data.begin() + 4, data.end());
  TrainConfig tc;
  tc.seed = 1;
  tc.epochs = 2;
  tc.max_steps = 10;
  TrainOptions opt;
  opt.validation = &val;
  const auto res = train(train_set, tiny_model(), tc, opt);
  REQUIRE(res.curve.size() == 4);
  CHECK(res.curve[1].split == "val");
  CHECK(res.curve[1].metric >= 0.0);
  CHECK(res.curve[1].metric <= 1.0);
  CHECK(curve_csv(res.curve).rfind("epoch,split,loss,metric\n0,train,", 0) == 0);
}

TEST_CASE("divergence aborts with a diagnostic") {
  const auto data = tiny_data(2);
  TrainConfig tc;
  tc.seed = 1;
  tc.epochs = 3;
  tc.lr0 = 1e30f;
  tc.max_steps = 10;
  CHECK_THROWS_AS(train(data, tiny_model(), tc), NumericalError);
}

TEST_CASE("mismatched configuration is rejected") {
  const auto data = tiny_data(1);
  TrainConfig tc;
  CHECK_THROWS_AS(train(data, tiny_model(7), tc), ValidationError);
  CHECK_THROWS_AS(train({}, tiny_model(), tc), ValidationError);
}

TEST_CASE("leave-one-subject-out folds") {
  SynthConfig sc;
  sc.min_steps = 10;
  sc.max_steps = 14;
  sc.subjects = 4;
  const auto data = synth_generate(sc, 8, 8).sequences;
  TrainConfig tc;
  tc.seed = 3;
  tc.epochs = 1;
  tc.max_steps = 10;
  const auto serial = cross_validate(data, tiny_model(), tc, 1);
  const auto parallel = cross_validate(data, tiny_model(), tc, 4);
  REQUIRE(serial.size() == 4);
  for (std::size_t f = 0; f < 4; ++f) {
    CHECK(serial[f].held_out == "s" + std::to_string(f));
    CHECK(serial[f].result.curve == parallel[f].result.curve);
    CHECK(serial[f].metric == parallel[f].metric);
  }
}
