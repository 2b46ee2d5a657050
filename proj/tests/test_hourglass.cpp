#include "doctest.h"
#include "oracles.hpp"
#include "stgcn/gradcheck.hpp"
#include "stgcn/hourglass.hpp"
#include "stgcn/ops.hpp"
#include "test_util.hpp"

using namespace stgcn;

namespace {

AdjacencyPair chain_adjacency(std::size_t steps, std::size_t span) {
  AdjacencyPair adj{Tensor(Shape{steps, steps}), Tensor(Shape{steps, steps}), 1, steps};
  for (std::size_t i = 0; i < steps; ++i)
    for (std::size_t j = i + 1; j < steps && j - i <= span; ++j) adj.temporal.at(i, j) = adj.temporal.at(j, i) = 1.0f;
  return adj;
}

// Flat parameter list for one block: per level enc W_s, W_t, then down, up.
std::vector<Tensor> block_tensors(std::size_t levels, std::size_t d, std::size_t k, std::mt19937_64& rng) {
  std::vector<Tensor> out;
  for (std::size_t l = 0; l < std::max<std::size_t>(levels, 1); ++l) {
    out.push_back(testing::random_tensor({d, d}, rng));
    out.push_back(testing::random_tensor({d, d}, rng));
  }
  for (std::size_t l = 0; l < levels; ++l) {
    out.push_back(testing::random_tensor({k, d, d}, rng));
    out.push_back(testing::random_tensor({k, d, d}, rng));
  }
  return out;
}

HourglassWeights bind_block(const std::vector<Var>& p, std::size_t offset, std::size_t levels) {
  HourglassWeights w;
  std::size_t i = offset;
  for (std::size_t l = 0; l < std::max<std::size_t>(levels, 1); ++l) {
    w.encoder.push_back({{p[i]}, p[i + 1], std::nullopt});
    i += 2;
  }
  for (std::size_t l = 0; l < levels; ++l) {
    w.down.push_back(p[i++]);
    w.up.push_back(p[i++]);
  }
  return w;
}

}  // namespace

TEST_CASE("subsampling examples") {
  const auto adj = chain_adjacency(4, 1);
  const auto same = subsample_adjacency(adj, 1);
  CHECK(same.temporal == adj.temporal);
  CHECK(same.steps == 4);

  const auto gap = subsample_adjacency(adj, 2);
  CHECK(gap.temporal == Tensor(Shape{2, 2}));
  const auto reach = subsample_adjacency(chain_adjacency(4, 2), 2);
  CHECK(reach.temporal == Tensor::matrix({{0, 1}, {1, 0}}));

  const auto eight = subsample_adjacency(chain_adjacency(8, 1), 2);
  CHECK(eight.temporal.shape() == Shape{4, 4});
  CHECK(level_steps(7, 3, 2) == std::vector<std::size_t>{7, 4, 2});
}

TEST_CASE("subsampling preserves symmetry and nonnegativity") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const auto seq = testing::random_sequence(rng, 3, 2 + trial % 9, {2, 3}, 3);
    const auto sub = subsample_adjacency(build_adjacency(seq, 3, true), 2 + trial % 2);
    for (const Tensor* m : {&sub.spatial, &sub.temporal})
      for (std::size_t i = 0; i < m->rows(); ++i)
        for (std::size_t j = 0; j < m->cols(); ++j) {
          REQUIRE(m->at(i, j) >= 0.0f);
          REQUIRE(m->at(i, j) == m->at(j, i));
        }
  }
}

TEST_CASE("output keeps the input temporal extent") {
  std::mt19937_64 rng(5);
  for (std::size_t steps : {7u, 8u, 50u}) {
    for (std::size_t levels : {1u, 2u, 3u}) {
      const auto seq = testing::random_sequence(rng, 3, steps, {4}, 2);
      HourglassConfig cfg;
      cfg.levels = levels;
      const auto lv = build_levels(build_adjacency(seq, 3, false), levels, cfg.stride);
      Tape tape;
      std::vector<Var> p;
      for (auto& t : block_tensors(levels, 4, cfg.kernel, rng)) p.push_back(tape.constant(std::move(t)));
      const Var x = tape.constant(testing::random_tensor({steps * 3, 4}, rng));
      const Var y = stack_forward(x, lv, {bind_block(p, 0, levels), bind_block(p, 0, levels)}, cfg);
      CHECK(y.shape() == Shape{steps * 3, 4});
    }
  }
}

TEST_CASE("zero levels is a single layer") {
  std::mt19937_64 rng(6);
  const auto seq = testing::random_sequence(rng, 2, 5, {3}, 2);
  HourglassConfig cfg;
  cfg.levels = 0;
  const auto lv = build_levels(build_adjacency(seq, 2, false), 1, 2);
  Tape tape;
  const StgcnWeights w{{tape.constant(testing::random_tensor({3, 3}, rng))},
                       tape.constant(testing::random_tensor({3, 3}, rng)), std::nullopt};
  const Var x = tape.constant(testing::random_tensor({10, 3}, rng));
  HourglassWeights hw;
  hw.encoder.push_back(w);
  const Tensor a = hourglass_forward(x, lv, hw, cfg).value();
  const Tensor b = stgcn_layer(x, lv[0], w).value();
  INFO(shape_string(a.shape()) << " " << shape_string(b.shape()) << " " << max_abs_diff(a, b));
  CHECK(a == b);
}

TEST_CASE("skips carry the input when the decoder is silenced") {
  std::mt19937_64 rng(7);
  const auto seq = testing::random_sequence(rng, 3, 8, {4}, 2);
  HourglassConfig cfg;
  const auto lv = build_levels(build_adjacency(seq, 2, false), 2, 2);
  auto tensors = block_tensors(2, 4, 2, rng);
  // Zero the up kernels (positions 5 and 7).
  tensors[5] = Tensor(tensors[5].shape());
  tensors[7] = Tensor(tensors[7].shape());
  auto run = [&](const Tensor& input, bool skip) {
    Tape tape;
    std::vector<Var> p;
    for (const auto& t : tensors) p.push_back(tape.constant(t));
    HourglassConfig c = cfg;
    c.skip = skip;
    return hourglass_forward(tape.constant(input), lv, bind_block(p, 0, 2), c).value();
  };
  const Tensor a = testing::random_tensor({24, 4}, rng, 0.0f, 1.0f);
  const Tensor b = testing::random_tensor({24, 4}, rng, 0.0f, 1.0f);
  CHECK(run(a, false) == run(b, false));
  CHECK_FALSE(run(a, true) == run(b, true));
}

TEST_CASE("decoder stgcn layers are applied when enabled") {
  std::mt19937_64 rng(8);
  const auto seq = testing::random_sequence(rng, 2, 6, {3}, 2);
  HourglassConfig cfg;
  cfg.levels = 1;
  cfg.decoder_stgcn = true;
  const auto lv = build_levels(build_adjacency(seq, 2, false), 1, 2);
  Tape tape;
  std::vector<Var> p;
  for (auto& t : block_tensors(1, 3, 2, rng)) p.push_back(tape.constant(std::move(t)));
  HourglassWeights w = bind_block(p, 0, 1);
  CHECK_THROWS(hourglass_forward(tape.constant(testing::random_tensor({12, 3}, rng)), lv, w, cfg));
  w.decoder.push_back({{tape.constant(Tensor(Shape{3, 3}))}, tape.constant(Tensor(Shape{3, 3})), std::nullopt});
  const Tensor out = hourglass_forward(tape.constant(testing::random_tensor({12, 3}, rng)), lv, w, cfg).value();
  CHECK(out == Tensor(Shape{12, 3}));
}

TEST_CASE("pooled head") {
  Tape tape;
  const Var h = tape.constant(Tensor::matrix({{1, 2}, {3, 4}, {5, 6}, {7, 8}}));
  const Var w = tape.constant(Tensor::identity(2));
  const Var b = tape.constant(Tensor::vector({0.5f, -0.5f}));
  const Tensor out = head_forward(h, {1, 1, 0, 0}, 2, w, b).value();
  CHECK(out == Tensor::matrix({{2.5f, 2.5f}, {0.5f, -0.5f}}));
  const Tensor single = head_forward(h, {1, 1, 1, 1}, 1, w, b).value();
  CHECK(single == Tensor::matrix({{1.5f, 1.5f}, {3.5f, 3.5f}, {5.5f, 5.5f}, {7.5f, 7.5f}}));
}

TEST_CASE("two-level stack gradients pass finite differences") {
  std::mt19937_64 rng(9);
  const auto seq = testing::random_sequence(rng, 3, 8, {4}, 3);
  HourglassConfig cfg;
  const auto lv = build_levels(build_adjacency(seq, 3, false), 2, 2);
  std::vector<Tensor> params{testing::random_tensor({24, 4}, rng)};
  for (int b = 0; b < 2; ++b)
    for (auto& t : block_tensors(2, 4, 2, rng)) params.push_back(std::move(t));
  const std::size_t per_block = (params.size() - 1) / 2;
  const auto report = check_gradients(
      "hourglass",
      [&](Tape&, const std::vector<Var>& p) {
        return stack_forward(p[0], lv, {bind_block(p, 1, 2), bind_block(p, 1 + per_block, 2)}, cfg);
      },
      params);
  INFO(report.within_rel << "/" << report.coordinates << " worst " << report.worst_abs);
  CHECK(report.passed);
}
