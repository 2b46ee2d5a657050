#include "doctest.h"
#include "oracles.hpp"
#include "stgcn/errors.hpp"
#include "stgcn/gcn.hpp"
#include "stgcn/gradcheck.hpp"
#include "stgcn/ops.hpp"
#include "test_util.hpp"

using namespace stgcn;

namespace {

Tensor random_adjacency(std::size_t n, std::mt19937_64& rng, double density = 0.5) {
  std::uniform_real_distribution<float> w(0.0f, 2.0f);
  std::bernoulli_distribution edge(density);
  Tensor a(Shape{n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (edge(rng)) a.at(i, j) = a.at(j, i) = w(rng);
  return a;
}

// Block-diagonal spatial matrix over `steps` blocks of `nodes` nodes.
Tensor random_spatial(std::size_t nodes, std::size_t steps, std::mt19937_64& rng) {
  Tensor a(Shape{nodes * steps, nodes * steps});
  for (std::size_t t = 0; t < steps; ++t) {
    const Tensor block = random_adjacency(nodes, rng);
    for (std::size_t i = 0; i < nodes; ++i)
      for (std::size_t j = 0; j < nodes; ++j) a.at(t * nodes + i, t * nodes + j) = block.at(i, j);
  }
  return a;
}

double max_diff(const Tensor& got, const testing::Dense& want) {
  double worst = 0.0;
  for (std::size_t i = 0; i < got.rows(); ++i)
    for (std::size_t j = 0; j < got.cols(); ++j) worst = std::max(worst, std::abs(got.at(i, j) - want[i][j]));
  return worst;
}

}  // namespace

TEST_CASE("normalization examples") {
  CHECK(normalize_adjacency(Tensor(Shape{1, 1})).matrix() == Tensor::matrix({{1}}));
  const auto pair = normalize_adjacency(Tensor::matrix({{0, 1}, {1, 0}})).matrix();
  CHECK(max_abs_diff(pair, Tensor::matrix({{0.5f, 0.5f}, {0.5f, 0.5f}})) <= 1e-7f);
  CHECK(normalize_adjacency(Tensor(Shape{5, 5})).matrix() == Tensor::identity(5));
  CHECK_THROWS_AS(normalize_adjacency(Tensor::matrix({{0, -1}, {-1, 0}})), ValidationError);
  CHECK_THROWS_AS(normalize_adjacency(Tensor::matrix({{0, 1}, {0.5f, 0}})), ValidationError);
  CHECK_THROWS_AS(normalize_adjacency(Tensor(Shape{2, 3})), ValidationError);
}

TEST_CASE("normalized adjacency is symmetric with spectral radius at most one") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const auto n = normalize_adjacency(random_adjacency(8, rng)).matrix();
    for (std::size_t i = 0; i < 8; ++i)
      for (std::size_t j = 0; j < 8; ++j) {
        REQUIRE(n.at(i, j) == n.at(j, i));
        REQUIRE(n.at(i, j) <= 1.0f);
      }
    CHECK(testing::spectral_radius(testing::dense(n)) <= 1.0001);
  }
}

TEST_CASE("stgcn_layer matches the dense reference") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t nodes = 3, steps = 2, n = nodes * steps, d = 4, dm = 5, dout = 3;
    const Tensor as = random_spatial(nodes, steps, rng);
    const Tensor at = random_adjacency(n, rng);
    const Tensor h = testing::random_tensor({n, d}, rng);
    const Tensor ws = testing::random_tensor({d, dm}, rng);
    const Tensor wt = testing::random_tensor({dm, dout}, rng);
    Tape tape;
    const NormalizedPair adj{normalize_adjacency(as), normalize_adjacency(at), nodes, steps};
    const Var out = stgcn_layer(tape.constant(h), adj, {{tape.constant(ws)}, tape.constant(wt), std::nullopt});
    const auto want = testing::stgcn_reference(testing::dense(h), testing::dense(as), testing::dense(at),
                                               testing::dense(ws), testing::dense(wt));
    CHECK(max_diff(out.value(), want) <= 1e-5);
  }
}

TEST_CASE("zero adjacency and single node reduce to relu(H Ws Wt)") {
  std::mt19937_64 rng(4);
  for (std::size_t n : {1u, 6u}) {
    const Tensor h = testing::random_tensor({n, 3}, rng);
    const Tensor ws = testing::random_tensor({3, 4}, rng);
    const Tensor wt = testing::random_tensor({4, 2}, rng);
    Tape tape;
    const NormalizedPair adj{normalize_adjacency(Tensor(Shape{n, n})), normalize_adjacency(Tensor(Shape{n, n})), n,
                             1};
    const Var out = stgcn_layer(tape.constant(h), adj, {{tape.constant(ws)}, tape.constant(wt), std::nullopt});
    const Var direct =
        ops::relu(ops::matmul(ops::matmul(tape.constant(h), tape.constant(ws)), tape.constant(wt)));
    CHECK(max_abs_diff(out.value(), direct.value()) <= 1e-6f);
  }
}

TEST_CASE("without temporal edges the layer equals the grid form") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t nodes = 1 + trial % 4, steps = 1 + trial % 3, n = nodes * steps;
    const Tensor as = random_spatial(nodes, steps, rng);
    const Tensor h = testing::random_tensor({n, 3}, rng);
    Tape tape;
    const StgcnWeights w{{tape.constant(testing::random_tensor({3, 4}, rng))},
                         tape.constant(testing::random_tensor({4, 2}, rng)), std::nullopt};
    const NormalizedPair adj{normalize_adjacency(as), normalize_adjacency(Tensor(Shape{n, n})), nodes, steps};
    const Var a = stgcn_layer(tape.constant(h), adj, w);
    const Var b = stgcn_layer_grid(tape.constant(h), normalize_adjacency(as), w);
    CHECK(max_abs_diff(a.value(), b.value()) <= 1e-5f);
  }
}

TEST_CASE("stgcn_layer is permutation equivariant") {
  std::mt19937_64 rng(37);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 6;
    const Tensor as = random_adjacency(n, rng), at = random_adjacency(n, rng);
    const Tensor h = testing::random_tensor({n, 3}, rng);
    const Tensor ws = testing::random_tensor({3, 4}, rng), wt = testing::random_tensor({4, 2}, rng);
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    Tensor ps(Shape{n, n}), pt(Shape{n, n}), ph(Shape{n, 3});
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        ps.at(i, j) = as.at(perm[i], perm[j]);
        pt.at(i, j) = at.at(perm[i], perm[j]);
      }
      for (std::size_t j = 0; j < 3; ++j) ph.at(i, j) = h.at(perm[i], j);
    }
    Tape tape;
    const StgcnWeights w{{tape.constant(ws)}, tape.constant(wt), std::nullopt};
    const Tensor out =
        stgcn_layer(tape.constant(h), {normalize_adjacency(as), normalize_adjacency(at), n, 1}, w).value();
    const Tensor pout =
        stgcn_layer(tape.constant(ph), {normalize_adjacency(ps), normalize_adjacency(pt), n, 1}, w).value();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < 2; ++j) CHECK(std::abs(pout.at(i, j) - out.at(perm[i], j)) <= 1e-5f);
  }
}

TEST_CASE("zero input gives zero output without bias and relu(bias) with it") {
  std::mt19937_64 rng(41);
  const std::size_t n = 4;
  Tape tape;
  const NormalizedPair adj{normalize_adjacency(random_adjacency(n, rng)), normalize_adjacency(random_adjacency(n, rng)),
                           n, 1};
  StgcnWeights w{{tape.constant(testing::random_tensor({3, 5}, rng))},
                 tape.constant(testing::random_tensor({5, 2}, rng)), std::nullopt};
  CHECK(stgcn_layer(tape.constant(Tensor(Shape{n, 3})), adj, w).value() == Tensor(Shape{n, 2}));
  w.bias = tape.constant(Tensor::vector({-0.5f, 0.75f}));
  const Tensor out = stgcn_layer(tape.constant(Tensor(Shape{n, 3})), adj, w).value();
  for (std::size_t i = 0; i < n; ++i) {
    CHECK(out.at(i, 0) == 0.0f);
    CHECK(out.at(i, 1) == 0.75f);
  }
}

TEST_CASE("per-cluster weights act on their own column block") {
  std::mt19937_64 rng(43);
  const auto seq = testing::random_sequence(rng, 3, 2, {2, 3}, 1, 1.0);
  const auto packed = pack_by_cluster(seq);
  CHECK(packed.values.shape() == Shape{6, 5});
  CHECK(packed.values.at(seq.flat_index(1, 1), 2) == seq.tracks[1].features.at(1, 0));
  CHECK(packed.values.at(seq.flat_index(1, 1), 0) == 0.0f);

  const auto adj = build_adjacency(seq, 1, true);
  const NormalizedPair norm = normalize(adj);
  const Tensor w0 = testing::random_tensor({2, 4}, rng), w1 = testing::random_tensor({3, 4}, rng);
  const Tensor wt = testing::random_tensor({4, 2}, rng);
  Tape tape;
  const Var out =
      stgcn_layer(tape.constant(packed.values), norm, {{tape.constant(w0), tape.constant(w1)}, tape.constant(wt), {}});
  // Reference: project each node with its cluster's matrix, then run the layer with a single identity W_s.
  testing::Dense projected(6, std::vector<double>(4, 0.0));
  for (std::size_t k = 0; k < 3; ++k)
    for (std::size_t t = 0; t < 2; ++t) {
      const Tensor& w = seq.tracks[k].cluster == 0 ? w0 : w1;
      for (std::size_t j = 0; j < 4; ++j)
        for (std::size_t i = 0; i < w.rows(); ++i)
          projected[seq.flat_index(k, t)][j] += seq.tracks[k].features.at(t, i) * w.at(i, j);
    }
  testing::Dense eye(4, std::vector<double>(4, 0.0));
  for (std::size_t i = 0; i < 4; ++i) eye[i][i] = 1.0;
  const auto want = testing::stgcn_reference(projected, testing::dense(adj.spatial), testing::dense(adj.temporal), eye,
                                             testing::dense(wt));
  CHECK(max_diff(out.value(), want) <= 1e-5);
  CHECK_THROWS_AS(stgcn_layer(tape.constant(packed.values), norm, {{tape.constant(w0)}, tape.constant(wt), {}}),
                  DimensionError);
}

TEST_CASE("projection harmonization") {
  std::mt19937_64 rng(47);
  auto seq = testing::random_sequence(rng, 2, 3, {4, 6}, 1, 0.7);
  seq.tracks[0].type = NodeType::actor;
  seq.tracks[1].type = NodeType::object;
  Tape tape;
  TypeKernels kernels;
  kernels[0] = tape.constant(Tensor::identity(4));
  kernels[1] = tape.constant(testing::random_tensor({6, 4}, rng));
  const Tensor out = harmonize_projection(tape, seq, kernels).value();
  CHECK(out.shape() == Shape{6, 4});
  for (std::size_t t = 0; t < 3; ++t) {
    const std::size_t row = seq.flat_index(0, t);
    for (std::size_t j = 0; j < 4; ++j) CHECK(out.at(row, j) == seq.tracks[0].features.at(t, j));
    if (!seq.tracks[1].present(t))
      for (std::size_t j = 0; j < 4; ++j) CHECK(out.at(seq.flat_index(1, t), j) == 0.0f);
  }
  kernels[1].reset();
  CHECK_THROWS_AS(harmonize_projection(tape, seq, kernels), ConfigurationError);
  kernels[1] = tape.constant(Tensor(Shape{5, 4}));
  CHECK_THROWS_AS(harmonize_projection(tape, seq, kernels), ConfigurationError);
}

TEST_CASE("mixed feature lengths project to a uniform width") {
  std::mt19937_64 rng(53);
  StgSequence seq = testing::random_sequence(rng, 3, 2, {1024, 2048}, 1, 1.0);
  seq.tracks[0].type = NodeType::actor;
  seq.tracks[1].type = NodeType::object;
  seq.tracks[2].type = NodeType::action;
  Tape tape;
  TypeKernels kernels;
  kernels[static_cast<std::size_t>(NodeType::actor)] = tape.constant(Tensor(Shape{1024, 512}));
  kernels[static_cast<std::size_t>(NodeType::object)] = tape.constant(Tensor(Shape{2048, 512}));
  kernels[static_cast<std::size_t>(NodeType::action)] = tape.constant(Tensor(Shape{1024, 512}));
  CHECK(harmonize_projection(tape, seq, kernels).shape() == Shape{6, 512});
}

TEST_CASE("subtract_mean examples") {
  const Tensor two = Tensor::matrix({{1}, {3}});
  const Tensor all = Tensor::matrix({{1}, {1}});
  CHECK(subtract_mean(two, all, 2) == Tensor::matrix({{-1}, {1}}));
  CHECK(subtract_mean(Tensor::matrix({{2, 2}, {2, 2}}), Tensor::matrix({{1, 1}, {1, 1}}), 2) == Tensor(Shape{2, 2}));
  // One present node per timestep.
  CHECK(subtract_mean(Tensor::matrix({{5}, {0}}), Tensor::matrix({{1}, {0}}), 2) == Tensor(Shape{2, 1}));
}

TEST_CASE("layer gradients pass finite differences") {
  std::mt19937_64 rng(59);
  const std::size_t n = 6;
  const NormalizedPair adj{normalize_adjacency(random_spatial(3, 2, rng)), normalize_adjacency(random_adjacency(n, rng)),
                           3, 2};
  auto r = [&](Shape s) { return testing::random_tensor(std::move(s), rng); };
  const auto report = check_gradients(
      "stgcn_layer",
      [&](Tape&, const std::vector<Var>& p) { return stgcn_layer(p[0], adj, {{p[1], p[2]}, p[3], p[4]}); },
      {r({n, 5}), r({2, 4}), r({3, 4}), r({4, 3}), r({3})});
  INFO(report.within_rel << "/" << report.coordinates << " worst " << report.worst_abs);
  CHECK(report.passed);
}
