#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "json.hpp"
#include "oracles.hpp"
#include "stgcn/config.hpp"
#include "stgcn/errors.hpp"
#include "stgcn/io.hpp"

using namespace stgcn;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("stgcn_test_io_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

// Random label state on top of the oracle generator, in either mode.
StgSequence random_labelled(std::mt19937_64& rng, bool multi) {
  std::uniform_int_distribution<std::size_t> tracks(1, 5), steps(1, 12), len(1, 6);
  std::vector<std::size_t> clusters{len(rng)};
  if (rng() % 2) clusters.push_back(len(rng));
  StgSequence seq = testing::random_sequence(rng, tracks(rng), steps(rng), clusters, 3, 0.8, 4);
  std::bernoulli_distribution coin(0.5);
  for (auto& m : seq.label_mask) m = coin(rng) ? 1 : 0;
  for (auto& f : seq.frame_counts) f = static_cast<std::uint32_t>(rng() % 1000);
  seq.subject = "subject " + std::to_string(rng() % 7);
  if (multi) {
    seq.mode = LabelMode::multi;
    seq.labels.clear();
    for (std::size_t i = 0; i < seq.steps * seq.classes; ++i) seq.multi_labels.push_back(coin(rng) ? 1 : 0);
  }
  return seq;
}

}  // namespace

TEST_CASE("STGS round trip is exact for random sequences") {
  const fs::path dir = scratch("roundtrip");
  const fs::path copy = scratch("roundtrip_copy");
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 60; ++trial) {
    const StgSequence seq = random_labelled(rng, trial % 2 == 1);
    const std::string path = (dir / ("s" + std::to_string(trial) + ".stgs")).string();
    save_stgs(seq, path);
    const StgSequence back = load_stgs(path);
    REQUIRE(back == seq);
    // Re-serializing reproduces the same bytes.
    const std::string again = (copy / ("s" + std::to_string(trial) + ".stgs")).string();
    save_stgs(back, again);
    CHECK(slurp(path) == slurp(again));
    for (std::size_t k = 0; k < seq.tracks.size(); ++k)
      CHECK(slurp(path + "." + std::to_string(k) + ".bin") == slurp(again + "." + std::to_string(k) + ".bin"));
  }
}

TEST_CASE("STGS loading rejects broken files") {
  const fs::path dir = scratch("broken");
  std::mt19937_64 rng(2);
  const StgSequence seq = random_labelled(rng, false);
  const std::string path = (dir / "a.stgs").string();
  save_stgs(seq, path);

  write(dir / "garbage.stgs", "{not json");
  CHECK_THROWS_AS(load_stgs((dir / "garbage.stgs").string()), ValidationError);
  write(dir / "other.stgs", R"({"format":"something"})");
  CHECK_THROWS_AS(load_stgs((dir / "other.stgs").string()), ValidationError);

  auto j = nlohmann::json::parse(slurp(path));
  j["T"] = seq.steps + 1;
  write(dir / "wrong_t.stgs", j.dump());
  fs::copy_file(path + ".0.bin", (dir / "wrong_t.stgs.0.bin"));
  CHECK_THROWS(load_stgs((dir / "wrong_t.stgs").string()));

  fs::remove(path + ".0.bin");
  CHECK_THROWS(load_stgs(path));
}

TEST_CASE("dataset manifest") {
  const fs::path dir = scratch("manifest");
  std::mt19937_64 rng(5);
  DatasetManifest m;
  for (int i = 0; i < 4; ++i) {
    const std::string file = "seq" + std::to_string(i) + ".stgs";
    save_stgs(random_labelled(rng, false), (dir / file).string());
    m.entries.push_back({file, i < 3 ? "train" : "test", i == 0 ? "" : "fold" + std::to_string(i % 2)});
  }
  const std::string path = (dir / "manifest.json").string();
  save_manifest(m, path);
  const DatasetManifest back = load_manifest(path);
  CHECK(back.entries == m.entries);

  CHECK(load_sequences(back, path, "train").size() == 3);
  CHECK(load_sequences(back, path, "all").size() == 4);
  const auto test = load_sequences(back, path, "test");
  REQUIRE(test.size() == 1);
  CHECK(test[0].subject == "fold1");
  // No fold id: the sequence keeps its own subject.
  CHECK(load_sequences(back, path, "train")[0].subject == load_stgs((dir / "seq0.stgs").string()).subject);
  CHECK_THROWS_AS(load_sequences(back, path, "val"), ValidationError);

  m.entries.push_back({"missing.stgs", "train", ""});
  save_manifest(m, path);
  CHECK_THROWS_AS(load_manifest(path), ValidationError);
}

TEST_CASE("ingest: actor-only table with three segments") {
  const fs::path dir = scratch("ingest_actor");
  write(dir / "nodes.csv", "track_id,type,segment,f0,f1\nme,actor,0,1,2\nme,actor,1,3,4\nme,actor,2,5,6\n");
  write(dir / "labels.csv", "0,1\n1,1\n2,0\n");
  const StgSequence seq =
      ingest_cad120_style((dir / "nodes.csv").string(), (dir / "labels.csv").string(), "", 2, "s");
  CHECK(seq.steps == 3);
  REQUIRE(seq.tracks.size() == 1);
  CHECK(seq.tracks[0].type == NodeType::actor);
  CHECK(seq.tracks[0].features.at(2, 1) == 6.0f);
  REQUIRE(seq.temporal_edges.size() == 2);
  for (std::size_t t = 0; t < 2; ++t) CHECK(seq.temporal_edges[t] == TemporalEdge{0, t, 0, 1, 1.0f});
  CHECK(seq.spatial_edges.empty());
  CHECK(seq.labels == std::vector<std::int32_t>{1, 1, 0});
}

TEST_CASE("ingest: two clusters of 630 and 180 survive the manifest round trip") {
  const fs::path dir = scratch("ingest_cad");
  std::ofstream nodes(dir / "nodes.csv");
  for (int t = 0; t < 4; ++t) {
    nodes << "person,actor," << t;
    for (int j = 0; j < 630; ++j) nodes << "," << (j + t) * 0.001;
    nodes << "\n";
    for (int o = 0; o < 2; ++o) {
      if (o == 1 && t == 2) continue;
      nodes << "obj" << o << ",object," << t;
      for (int j = 0; j < 180; ++j) nodes << "," << -j * 0.01;
      nodes << "\n";
    }
  }
  nodes.close();
  write(dir / "labels.csv", "segment,label,frames\n0,3,40\n1,3,41\n3,9,12\n");
  write(dir / "edges.csv",
        "kind,segment,a,b,weight,delta\nspatial,0,person,obj0,0.25\nspatial,3,obj0,obj1,0.5\n"
        "temporal,0,person,person,0.75,3\ntemporal,1,obj1,obj1,1,2\n");
  const StgSequence seq = ingest_cad120_style((dir / "nodes.csv").string(), (dir / "labels.csv").string(),
                                              (dir / "edges.csv").string(), 10, "subject1");
  REQUIRE(seq.clusters.size() == 2);
  CHECK(seq.clusters[0].feature_len == 630);
  CHECK(seq.clusters[1].feature_len == 180);
  CHECK(seq.tracks[2].presence == std::vector<std::uint8_t>{1, 1, 0, 1});
  // Given edges are copied through; no chain edges are added.
  CHECK(seq.spatial_edges == std::vector<SpatialEdge>{{0, 0, 1, 0.25f}, {3, 1, 2, 0.5f}});
  CHECK(seq.temporal_edges == std::vector<TemporalEdge>{{0, 0, 0, 3, 0.75f}, {2, 1, 2, 2, 1.0f}});
  CHECK(seq.label_mask == std::vector<std::uint8_t>{1, 1, 0, 1});
  CHECK(seq.frame_counts[1] == 41);

  const std::string path = (dir / "seq.stgs").string();
  save_stgs(seq, path);
  const auto manifest = nlohmann::json::parse(slurp(path));
  CHECK(manifest["clusters"][0]["feature_len"] == 630);
  CHECK(manifest["clusters"][1]["feature_len"] == 180);
  CHECK(load_stgs(path) == seq);
}

TEST_CASE("ingest rejects malformed tables") {
  const fs::path dir = scratch("ingest_bad");
  write(dir / "labels.csv", "0,0\n1,0\n");
  write(dir / "nodes.csv", "a,actor,0,1,2\na,actor,1,3,4\n");
  const auto run = [&](const std::string& nodes, const std::string& edges, std::size_t classes = 2) {
    return ingest_cad120_style((dir / nodes).string(), (dir / "labels.csv").string(),
                               edges.empty() ? "" : (dir / edges).string(), classes, "");
  };
  CHECK_NOTHROW(run("nodes.csv", ""));

  write(dir / "ragged.csv", "a,actor,0,1,2\na,actor,1,3\n");
  CHECK_THROWS_AS(run("ragged.csv", ""), ValidationError);
  write(dir / "text.csv", "a,actor,0,1,x\n");
  CHECK_THROWS_AS(run("text.csv", ""), ValidationError);
  write(dir / "dup.csv", "a,actor,0,1,2\na,actor,0,1,2\n");
  CHECK_THROWS_AS(run("dup.csv", ""), ValidationError);
  write(dir / "kind.csv", "a,alien,0,1,2\n");
  CHECK_THROWS_AS(run("kind.csv", ""), ValidationError);

  write(dir / "neg.csv", "spatial,0,a,a,-0.5\n");
  CHECK_THROWS_AS(run("nodes.csv", "neg.csv"), ValidationError);
  write(dir / "negt.csv", "temporal,0,a,a,-1,1\n");
  CHECK_THROWS_AS(run("nodes.csv", "negt.csv"), ValidationError);
  write(dir / "unknown.csv", "spatial,0,a,b,0.5\n");
  CHECK_THROWS_AS(run("nodes.csv", "unknown.csv"), ValidationError);
  write(dir / "short.csv", "temporal,0,a,a,1\n");
  CHECK_THROWS_AS(run("nodes.csv", "short.csv"), ValidationError);


  write(dir / "labels.csv", "0,0\n1,5\n");
  CHECK_THROWS_AS(run("nodes.csv", ""), ValidationError);
}
