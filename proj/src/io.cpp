#include "stgcn/io.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "json_codec.hpp"
#include "stgcn/config.hpp"
#include "stgcn/errors.hpp"
#include "stgcn/serialize.hpp"

namespace stgcn {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string directory_of(const std::string& path) {
  const auto parent = fs::path(path).parent_path();
  return parent.empty() ? std::string() : parent.string() + "/";
}

std::string file_name(const std::string& path) { return fs::path(path).filename().string(); }

template <typename T>
T field(const json& j, const char* key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(where + ": field '" + key + "': " + e.what());
  }
}

}  // namespace

void save_stgs(const StgSequence& seq, const std::string& path) {
  validate(seq);
  json tracks = json::array();
  for (std::size_t k = 0; k < seq.tracks.size(); ++k) {
    const NodeTrack& tr = seq.tracks[k];
    const std::string blob = path + "." + std::to_string(k) + ".bin";
    save_tensor(blob, tr.features);
    tracks.push_back({{"track_id", tr.track_id},
                      {"type", to_string(tr.type)},
                      {"cluster", tr.cluster},
                      {"presence", tr.presence},
                      {"blob", file_name(blob)}});
  }
  json clusters = json::array();
  for (const auto& c : seq.clusters) clusters.push_back({{"id", c.id}, {"feature_len", c.feature_len}});
  json spatial = json::array();
  for (const auto& e : seq.spatial_edges) spatial.push_back({e.step, e.a, e.b, e.weight});
  json temporal = json::array();
  for (const auto& e : seq.temporal_edges) temporal.push_back({e.track_a, e.step, e.track_b, e.delta, e.weight});
  json j{{"format", "stgs"},
         {"version", 1},
         {"T", seq.steps},
         {"C", seq.classes},
         {"mode", to_string(seq.mode)},
         {"subject", seq.subject},
         {"clusters", clusters},
         {"tracks", tracks},
         {"spatial_edges", spatial},
         {"temporal_edges", temporal},
         {"label_mask", seq.label_mask},
         {"frame_counts", seq.frame_counts}};
  if (seq.mode == LabelMode::single) {
    j["labels"] = seq.labels;
  } else {
    j["labels"] = seq.multi_labels;
  }
  write_text_file(path, j.dump(1));
}

StgSequence load_stgs(const std::string& path) {
  const json j = codec::parse(read_text_file(path), "STGS manifest");
  if (!j.is_object() || j.value("format", "") != "stgs") throw ValidationError(path + " is not an STGS manifest");
  StgSequence seq;
  seq.steps = field<std::size_t>(j, "T", path);
  seq.classes = field<std::size_t>(j, "C", path);
  seq.mode = label_mode_from_string(field<std::string>(j, "mode", path));
  seq.subject = j.value("subject", "");
  for (const auto& c : field<json>(j, "clusters", path))
    seq.clusters.push_back({field<std::size_t>(c, "id", path), field<std::size_t>(c, "feature_len", path)});
  const std::string dir = directory_of(path);
  for (const auto& t : field<json>(j, "tracks", path)) {
    NodeTrack tr;
    tr.track_id = field<std::string>(t, "track_id", path);
    tr.type = node_type_from_string(field<std::string>(t, "type", path));
    tr.cluster = field<std::size_t>(t, "cluster", path);
    tr.presence = field<std::vector<std::uint8_t>>(t, "presence", path);
    tr.features = load_tensor(dir + field<std::string>(t, "blob", path));
    seq.tracks.push_back(std::move(tr));
  }
  try {
    for (const auto& e : j.at("spatial_edges"))
      seq.spatial_edges.push_back({e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>(), e.at(2).get<std::size_t>(),
                                   e.at(3).get<float>()});
    for (const auto& e : j.at("temporal_edges"))
      seq.temporal_edges.push_back({e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>(),
                                    e.at(2).get<std::size_t>(), e.at(3).get<std::size_t>(), e.at(4).get<float>()});
  } catch (const json::exception& e) {
    throw ValidationError(path + ": malformed edge list: " + e.what());
  }
  seq.label_mask = field<std::vector<std::uint8_t>>(j, "label_mask", path);
  seq.frame_counts = field<std::vector<std::uint32_t>>(j, "frame_counts", path);
  if (seq.mode == LabelMode::single) {
    seq.labels = field<std::vector<std::int32_t>>(j, "labels", path);
  } else {
    seq.multi_labels = field<std::vector<std::uint8_t>>(j, "labels", path);
  }
  validate(seq);
  return seq;
}

void save_manifest(const DatasetManifest& manifest, const std::string& path) {
  json entries = json::array();
  for (const auto& e : manifest.entries) entries.push_back({{"file", e.file}, {"split", e.split}, {"fold", e.fold}});
  write_text_file(path, json{{"format", "stgcn-dataset"}, {"version", 1}, {"sequences", entries}}.dump(2));
}

DatasetManifest load_manifest(const std::string& path) {
  const json j = codec::parse(read_text_file(path), "dataset manifest");
  if (!j.is_object() || j.value("format", "") != "stgcn-dataset") {
    throw ValidationError(path + " is not a dataset manifest");
  }
  DatasetManifest m;
  const std::string dir = directory_of(path);
  for (const auto& e : field<json>(j, "sequences", path)) {
    DatasetEntry entry{field<std::string>(e, "file", path), e.value("split", ""), e.value("fold", "")};
    if (!fs::exists(dir + entry.file)) throw ValidationError(path + ": listed file " + entry.file + " does not exist");
    m.entries.push_back(std::move(entry));
  }
  if (m.entries.empty()) throw ValidationError(path + ": no sequences listed");
  return m;
}

std::vector<StgSequence> load_sequences(const DatasetManifest& manifest, const std::string& manifest_path,
                                        const std::string& split) {
  const std::string dir = directory_of(manifest_path);
  std::vector<StgSequence> out;
  for (const auto& e : manifest.entries) {
    if (!split.empty() && split != "all" && e.split != split) continue;
    StgSequence seq = load_stgs(dir + e.file);
    if (!e.fold.empty()) seq.subject = e.fold;
    out.push_back(std::move(seq));
  }
  if (out.empty()) throw ValidationError(manifest_path + ": no sequences in split '" + split + "'");
  return out;
}

std::string synth_oracle_json(const SynthDataset& ds, const std::vector<std::string>& files) {
  json means = json::array();
  for (const auto& m : ds.model.means) {
    json rows = json::array();
    for (std::size_t c = 0; c < m.rows(); ++c) {
      std::vector<float> row(m.cols());
      for (std::size_t j = 0; j < m.cols(); ++j) row[j] = m.at(c, j);
      rows.push_back(row);
    }
    means.push_back(rows);
  }
  json j{{"seed", ds.model.seed}, {"config", codec::encode(ds.model.config)}, {"means", means}};
  if (ds.model.config.mode == LabelMode::single) {
    json preds = json::object();
    for (std::size_t i = 0; i < ds.sequences.size(); ++i) preds[files.at(i)] = oracle_predict(ds.model, ds.sequences[i]);
    j["oracle_predictions"] = preds;
  }
  return j.dump(1);
}

// ---- CSV ingest ----

namespace {

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      const auto b = cell.find_first_not_of(" \t");
      const auto e = cell.find_last_not_of(" \t");
      cells.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(std::move(cells));
  }
  return rows;
}

bool is_integer(const std::string& s) {
  std::size_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  return ec == std::errc() && p == s.data() + s.size();
}

std::size_t to_index(const std::string& s, const std::string& where) {
  if (!is_integer(s)) throw ValidationError(where + ": '" + s + "' is not a nonnegative integer");
  return std::stoull(s);
}

float to_float(const std::string& s, const std::string& where) {
  float v = 0.0f;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v)) {
    throw ValidationError(where + ": '" + s + "' is not a finite number");
  }
  return v;
}

// Drops a header row whose segment column is not numeric.
void skip_header(std::vector<std::vector<std::string>>& rows, std::size_t segment_column) {
  if (!rows.empty() && rows.front().size() > segment_column && !is_integer(rows.front()[segment_column])) {
    rows.erase(rows.begin());
  }
}

}  // namespace

StgSequence ingest_cad120_style(const std::string& nodes_csv, const std::string& labels_csv,
                                const std::string& edges_csv, std::size_t classes, const std::string& subject) {
  auto node_rows = read_csv(nodes_csv);
  skip_header(node_rows, 2);
  auto label_rows = read_csv(labels_csv);
  skip_header(label_rows, 0);
  if (node_rows.empty()) throw ValidationError(nodes_csv + ": no node rows");

  struct Row {
    std::size_t segment;
    std::vector<float> values;
  };
  std::vector<std::string> track_order;
  std::map<std::string, NodeType> types;
  std::map<std::string, std::vector<Row>> by_track;
  std::size_t steps = 0;
  for (std::size_t i = 0; i < node_rows.size(); ++i) {
    const auto& r = node_rows[i];
    const std::string where = nodes_csv + ":" + std::to_string(i + 1);
    if (r.size() < 4) throw ValidationError(where + ": expected track_id,type,segment and at least one value");
    const std::string& id = r[0];
    const NodeType type = node_type_from_string(r[1]);
    if (!by_track.count(id)) {
      track_order.push_back(id);
      types[id] = type;
    } else if (types[id] != type) {
      throw ValidationError(where + ": track '" + id + "' changes type");
    }
    Row row{to_index(r[2], where), {}};
    for (std::size_t j = 3; j < r.size(); ++j) row.values.push_back(to_float(r[j], where));
    auto& rows = by_track[id];
    if (!rows.empty() && rows.front().values.size() != row.values.size()) {
      throw ValidationError(where + ": ragged row, track '" + id + "' has " + std::to_string(row.values.size()) +
                            " values where earlier rows have " + std::to_string(rows.front().values.size()));
    }
    for (const auto& prev : rows)
      if (prev.segment == row.segment) throw ValidationError(where + ": duplicate segment for track '" + id + "'");
    steps = std::max(steps, row.segment + 1);
    rows.push_back(std::move(row));
  }
  for (const auto& r : label_rows) {
    if (r.empty()) continue;
    steps = std::max(steps, to_index(r[0], labels_csv) + 1);
  }

  StgSequence seq;
  seq.steps = steps;
  seq.classes = classes;
  seq.subject = subject;
  std::map<std::string, std::size_t> index;
  for (const auto& id : track_order) {
    const std::size_t len = by_track[id].front().values.size();
    std::size_t cluster = seq.clusters.size();
    for (const auto& c : seq.clusters)
      if (c.feature_len == len) cluster = c.id;
    if (cluster == seq.clusters.size()) seq.clusters.push_back({cluster, len});
    NodeTrack tr;
    tr.track_id = id;
    tr.type = types[id];
    tr.cluster = cluster;
    tr.presence.assign(steps, 0);
    tr.features = Tensor(Shape{steps, len});
    for (const auto& row : by_track[id]) {
      tr.presence[row.segment] = 1;
      for (std::size_t j = 0; j < len; ++j) tr.features.at(row.segment, j) = row.values[j];
    }
    index[id] = seq.tracks.size();
    seq.tracks.push_back(std::move(tr));
  }

  seq.labels.assign(steps, 0);
  seq.label_mask.assign(steps, 0);
  seq.frame_counts.assign(steps, 1);
  for (std::size_t i = 0; i < label_rows.size(); ++i) {
    const auto& r = label_rows[i];
    const std::string where = labels_csv + ":" + std::to_string(i + 1);
    if (r.size() < 2 || r.size() > 3) throw ValidationError(where + ": expected segment,label[,frames]");
    const std::size_t t = to_index(r[0], where);
    const std::size_t label = to_index(r[1], where);
    if (label >= classes) throw ValidationError(where + ": label " + r[1] + " outside [0, " + std::to_string(classes) + ")");
    seq.labels[t] = static_cast<std::int32_t>(label);
    seq.label_mask[t] = 1;
    if (r.size() == 3) seq.frame_counts[t] = static_cast<std::uint32_t>(to_index(r[2], where));
  }

  bool temporal_given = false;
  if (!edges_csv.empty()) {
    auto edge_rows = read_csv(edges_csv);
    skip_header(edge_rows, 1);
    for (std::size_t i = 0; i < edge_rows.size(); ++i) {
      const auto& r = edge_rows[i];
      const std::string where = edges_csv + ":" + std::to_string(i + 1);
      auto track = [&](const std::string& id) {
        const auto it = index.find(id);
        if (it == index.end()) throw ValidationError(where + ": unknown track '" + id + "'");
        return it->second;
      };
      if (r.size() >= 5 && r[0] == "spatial" && r.size() == 5) {
        const float w = to_float(r[4], where);
        if (w < 0.0f) throw ValidationError(where + ": negative edge weight");
        seq.spatial_edges.push_back({to_index(r[1], where), track(r[2]), track(r[3]), w});
      } else if (r.size() == 6 && r[0] == "temporal") {
        const float w = to_float(r[4], where);
        if (w < 0.0f) throw ValidationError(where + ": negative edge weight");
        seq.temporal_edges.push_back({track(r[2]), to_index(r[1], where), track(r[3]), to_index(r[5], where), w});
        temporal_given = true;
      } else {
        throw ValidationError(where + ": expected spatial,segment,a,b,weight or temporal,segment,a,b,weight,delta");
      }
    }
  }
  if (!temporal_given) {
    for (std::size_t k = 0; k < seq.tracks.size(); ++k) {
      std::size_t prev = steps;
      for (std::size_t t = 0; t < steps; ++t) {
        if (!seq.tracks[k].present(t)) continue;
        if (prev != steps) seq.temporal_edges.push_back({k, prev, k, t - prev, 1.0f});
        prev = t;
      }
    }
  }
  validate(seq);
  return seq;
}

}  // namespace stgcn
