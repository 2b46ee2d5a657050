#pragma once

#include <string>
#include <vector>

#include "stgcn/graph.hpp"
#include "stgcn/synth.hpp"

namespace stgcn {

/// STGS: a JSON manifest at `path` plus one tensor blob per track, named
/// `<path>.<track index>.bin` and referenced relative to the manifest.
void save_stgs(const StgSequence& seq, const std::string& path);
StgSequence load_stgs(const std::string& path);

struct DatasetEntry {
  /// Relative to the manifest's directory.
  std::string file;
  /// "train", "test", or empty.
  std::string split;
  /// Cross-validation group; defaults to the sequence's subject.
  std::string fold;

  friend bool operator==(const DatasetEntry&, const DatasetEntry&) = default;
};

struct DatasetManifest {
  std::vector<DatasetEntry> entries;
};

void save_manifest(const DatasetManifest& manifest, const std::string& path);
/// Checks that every listed file exists and parses.
DatasetManifest load_manifest(const std::string& path);

/// Sequences of `split` ("" or "all" for every entry); fold ids replace
/// subjects so leave-one-group-out uses them.
std::vector<StgSequence> load_sequences(const DatasetManifest& manifest, const std::string& manifest_path,
                                        const std::string& split);

/// Ground-truth generative parameters and nearest-mean predictions of a
/// synthetic dataset, as JSON.
std::string synth_oracle_json(const SynthDataset& ds, const std::vector<std::string>& files);

/// Builds a single-label sequence from CSV tables.
///
/// nodes: `track_id,type,segment,v1,...,vL` with one row per track and
/// segment where the track is present. Tracks are grouped into clusters by
/// feature length, in order of first appearance.
/// labels: `segment,label[,frames]`; segments without a row are masked out.
/// edges (optional): `spatial,segment,track_a,track_b,weight` or
/// `temporal,segment,track_a,track_b,weight,delta`. Without temporal rows
/// every track is chained to its next present segment with weight 1.
/// A header row starting with a non-numeric segment field is skipped.
StgSequence ingest_cad120_style(const std::string& nodes_csv, const std::string& labels_csv,
                                const std::string& edges_csv, std::size_t classes, const std::string& subject);

}  // namespace stgcn
