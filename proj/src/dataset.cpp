#include "multihop/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "multihop/khop.hpp"
#include "multihop/nn.hpp"

namespace fs = std::filesystem;

namespace multihop {

void Dataset::validate() const {
  if (n < 0) throw FormatError(name + ": negative node count");
  if (classes < 1) throw FormatError(name + ": need at least one class");
  if (features.rows() != n || features.cols() != feature_dim) {
    throw FormatError(name + ": features are " + std::to_string(features.rows()) + "x" +
                      std::to_string(features.cols()) + ", expected " + std::to_string(n) + "x" +
                      std::to_string(feature_dim));
  }
  if (labels.size() != static_cast<std::size_t>(n)) throw FormatError(name + ": label count mismatch");
  for (NodeId v = 0; v < n; ++v) {
    if (labels[v] < -1 || labels[v] >= classes) {
      throw FormatError(name + ": label " + std::to_string(labels[v]) + " of node " +
                        std::to_string(v) + " out of range");
    }
  }
  if (graph && graph->n() != n) throw FormatError(name + ": graph node count mismatch");
  if (meta) {
    if (meta->n != n) throw FormatError(name + ": meta table node count mismatch");
    meta->validate();
  }
  if (splits.empty()) return;

  std::vector<char> owner(static_cast<std::size_t>(n), 0);
  auto claim = [&](const std::vector<NodeId>& ids, char tag, const char* what) {
    for (NodeId v : ids) {
      if (v < 0 || v >= n) throw FormatError(name + ": " + what + " node " + std::to_string(v) + " out of range");
      if (labels[v] < 0) throw FormatError(name + ": " + what + " node " + std::to_string(v) + " is unlabeled");
      if (owner[v]) throw FormatError(name + ": node " + std::to_string(v) + " appears in more than one split slot");
      owner[v] = tag;
    }
  };
  claim(splits.train, 1, "train");
  claim(splits.val, 2, "val");
  claim(splits.test, 3, "test");
  std::vector<char> present(static_cast<std::size_t>(classes), 0);
  for (NodeId v : splits.train) present[labels[v]] = 1;
  for (int c = 0; c < classes; ++c) {
    if (!present[c]) throw FormatError(name + ": class " + std::to_string(c) + " missing from train split");
  }
}

namespace {

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw FormatError("cannot read " + p.string());
  try {
    nlohmann::json j;
    in >> j;
    return j;
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError(p.string() + ": " + ex.what());
  }
}

void write_json(const fs::path& p, const nlohmann::json& j) {
  std::ofstream out(p);
  if (!out) throw FormatError("cannot write " + p.string());
  out << j.dump() << '\n';
}

}  // namespace

FeatureMatrix load_features_csv(const std::string& path, NodeId n, int dim) {
  const fs::path p(path);
  std::vector<std::size_t> lines;
  const auto rows = read_csv(p.string(), ',', &lines);
  const bool infer = dim < 0;
  std::vector<Eigen::Triplet<double, std::int32_t>> trip;
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const std::string where = p.string() + ":" + std::to_string(lines[r]);
    const long id = parse_int(rows[r][0], where);
    if (id < 0 || id >= n) throw FormatError(where + ": node_id " + rows[r][0] + " out of range");
    if (seen[id]) throw FormatError(where + ": duplicate node_id " + rows[r][0]);
    seen[id] = 1;
    std::set<long> cols;
    for (std::size_t c = 1; c < rows[r].size(); ++c) {
      const auto& cell = rows[r][c];
      const auto colon = cell.find(':');
      if (colon == std::string::npos) throw FormatError(where + ": expected idx:val, got '" + cell + "'");
      const long idx = parse_int(std::string_view(cell).substr(0, colon), where);
      const double val = parse_double(std::string_view(cell).substr(colon + 1), where);
      if (idx < 0 || (!infer && idx >= dim)) throw FormatError(where + ": feature index " + std::to_string(idx) + " out of range");
      if (!cols.insert(idx).second) throw FormatError(where + ": repeated feature index " + std::to_string(idx));
      if (val != 0.0) trip.emplace_back(static_cast<int>(id), static_cast<int>(idx), val);
    }
  }
  for (NodeId v = 0; v < n; ++v) {
    if (!seen[v]) throw FormatError(p.string() + ": no row for node " + std::to_string(v));
  }
  if (infer) {
    dim = 0;
    for (const auto& t : trip) dim = std::max(dim, t.col() + 1);
  }
  FeatureMatrix f(n, dim);
  f.setFromTriplets(trip.begin(), trip.end());
  f.makeCompressed();
  return f;
}

namespace {

FeatureMatrix read_features_bin(const fs::path& p, NodeId n, int dim) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw FormatError("cannot read " + p.string());
  const auto count = static_cast<std::size_t>(n) * static_cast<std::size_t>(dim);
  std::vector<float> buf(count);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(count * sizeof(float)));
  if (static_cast<std::size_t>(in.gcount()) != count * sizeof(float)) {
    throw FormatError(p.string() + ": expected " + std::to_string(count) + " float32 values");
  }
  std::vector<Eigen::Triplet<double, std::int32_t>> trip;
  for (NodeId v = 0; v < n; ++v)
    for (int c = 0; c < dim; ++c)
      if (const float x = buf[static_cast<std::size_t>(v) * dim + c]; x != 0.0f) trip.emplace_back(v, c, x);
  FeatureMatrix f(n, dim);
  f.setFromTriplets(trip.begin(), trip.end());
  f.makeCompressed();
  return f;
}

std::vector<int> read_labels(const fs::path& p, NodeId n, int classes) {
  if (!fs::exists(p)) throw FormatError("missing labels file " + p.string());
  std::vector<std::size_t> lines;
  const auto rows = read_csv(p.string(), ',', &lines);
  std::vector<int> labels(static_cast<std::size_t>(n), -1);
  std::vector<char> seen(labels.size(), 0);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const std::string where = p.string() + ":" + std::to_string(lines[r]);
    if (rows[r].size() != 2) throw FormatError(where + ": expected node_id,class");
    const long id = parse_int(rows[r][0], where);
    const long c = parse_int(rows[r][1], where);
    if (id < 0 || id >= n) throw FormatError(where + ": node_id out of range");
    if (c < 0 || c >= classes) throw FormatError(where + ": class " + rows[r][1] + " out of range");
    if (seen[id]) throw FormatError(where + ": duplicate node_id " + rows[r][0]);
    seen[id] = 1;
    labels[id] = static_cast<int>(c);
  }
  return labels;
}

WeightedGraph read_edges(const fs::path& p, NodeId n) {
  std::vector<std::size_t> lines;
  const auto rows = read_csv(p.string(), '\t', &lines);
  std::map<std::pair<NodeId, NodeId>, std::pair<double, std::size_t>> directed;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const std::string where = p.string() + ":" + std::to_string(lines[r]);
    if (rows[r].size() != 2 && rows[r].size() != 3) throw FormatError(where + ": expected src<TAB>dst[<TAB>weight]");
    const long a = parse_int(rows[r][0], where);
    const long b = parse_int(rows[r][1], where);
    const double w = rows[r].size() == 3 ? parse_double(rows[r][2], where) : 1.0;
    if (a < 0 || b < 0 || a >= n || b >= n) throw FormatError(where + ": node id out of range");
    if (a == b) throw FormatError(where + ": self-loop on node " + std::to_string(a));
    if (!(w > 0.0) || !std::isfinite(w)) throw FormatError(where + ": weight must be positive");
    const auto key = std::make_pair(static_cast<NodeId>(a), static_cast<NodeId>(b));
    if (directed.count(key)) {
      throw FormatError(where + ": duplicate edge " + rows[r][0] + " -> " + rows[r][1] +
                        " (first at line " + std::to_string(directed[key].second) + ")");
    }
    directed[key] = {w, lines[r]};
  }
  // A pair may be listed once or in both orientations; mirrored rows must agree.
  std::vector<Edge> edges;
  for (const auto& [key, val] : directed) {
    const auto [a, b] = key;
    const auto mirror = directed.find({b, a});
    if (mirror != directed.end()) {
      if (mirror->second.first != val.first) {
        throw FormatError(p.string() + ":" + std::to_string(val.second) + ": asymmetric weights for " +
                          std::to_string(a) + " - " + std::to_string(b));
      }
      if (a > b) continue;
    }
    edges.push_back({a, b, val.first});
  }
  return WeightedGraph::from_edges(n, std::move(edges));
}

std::vector<NodeId> read_id_list(const nlohmann::json& j, const char* key, const fs::path& p) {
  if (!j.contains(key)) return {};
  try {
    return j.at(key).get<std::vector<NodeId>>();
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError(p.string() + ": field '" + key + "': " + ex.what());
  }
}

}  // namespace

Dataset load_dataset(const std::string& dir) {
  const fs::path root(dir);
  if (!fs::is_directory(root)) throw FormatError("dataset directory not found: " + dir);
  Dataset ds;
  ds.name = root.filename().string();
  if (ds.name.empty()) ds.name = root.parent_path().filename().string();

  const auto meta_path = root / "meta.json";
  if (!fs::exists(meta_path)) throw FormatError("missing manifest " + meta_path.string());
  const auto meta = read_json(meta_path);
  for (const char* key : {"n", "classes", "feature_dim"}) {
    if (!meta.contains(key) || !meta.at(key).is_number_integer()) {
      throw FormatError(meta_path.string() + ": missing integer field '" + key + "'");
    }
  }
  ds.n = meta.at("n").get<NodeId>();
  ds.classes = meta.at("classes").get<int>();
  ds.feature_dim = meta.at("feature_dim").get<int>();

  const std::string feat_name = meta.value("features_file", std::string("features.csv"));
  const auto feat_path = root / feat_name;
  if (!fs::exists(feat_path)) throw FormatError("missing features file " + feat_path.string());
  ds.features = feat_path.extension() == ".bin" ? read_features_bin(feat_path, ds.n, ds.feature_dim)
                                                : load_features_csv(feat_path.string(), ds.n, ds.feature_dim);
  ds.labels = read_labels(root / "labels.csv", ds.n, ds.classes);

  const auto measures_path = root / "meta_measures.csv";
  if (fs::exists(measures_path)) {
    ds.meta = load_meta_table(measures_path.string(), (root / "betas.json").string());
  }
  const auto edges_path = root / "edges.tsv";
  if (fs::exists(edges_path)) {
    ds.graph = read_edges(edges_path, ds.n);
  } else if (!ds.meta) {
    throw FormatError("missing edges file " + edges_path.string() + " (and no meta_measures.csv)");
  }

  const auto splits_path = root / "splits.json";
  if (fs::exists(splits_path)) {
    const auto sj = read_json(splits_path);
    ds.splits.train = read_id_list(sj, "train", splits_path);
    ds.splits.val = read_id_list(sj, "val", splits_path);
    ds.splits.test = read_id_list(sj, "test", splits_path);
    ds.info["split"] = "splits.json";
  }
  ds.validate();
  return ds;
}

void save_dataset(const Dataset& ds, const std::string& dir) {
  ds.validate();
  const fs::path root(dir);
  fs::create_directories(root);
  write_json(root / "meta.json", {{"n", ds.n}, {"classes", ds.classes}, {"feature_dim", ds.feature_dim}});
  {
    std::ofstream out(root / "features.csv");
    if (!out) throw FormatError("cannot write features.csv in " + dir);
    char buf[64];
    for (NodeId v = 0; v < ds.n; ++v) {
      out << v;
      for (FeatureMatrix::InnerIterator it(ds.features, v); it; ++it) {
        std::snprintf(buf, sizeof buf, ",%d:%.17g", static_cast<int>(it.index()), it.value());
        out << buf;
      }
      out << '\n';
    }
  }
  {
    std::ofstream out(root / "labels.csv");
    for (NodeId v = 0; v < ds.n; ++v)
      if (ds.labels[v] >= 0) out << v << ',' << ds.labels[v] << '\n';
  }
  if (ds.graph) {
    std::ofstream out(root / "edges.tsv");
    char buf[32];
    for (const auto& e : ds.graph->edges()) {
      std::snprintf(buf, sizeof buf, "%.17g", e.w);
      out << e.i << '\t' << e.j << '\t' << buf << '\n';
    }
  }
  if (ds.meta) save_meta_table(*ds.meta, (root / "meta_measures.csv").string(), (root / "betas.json").string());
  if (!ds.splits.empty()) {
    write_json(root / "splits.json",
               {{"train", ds.splits.train}, {"val", ds.splits.val}, {"test", ds.splits.test}});
  }
}

std::string dataset_hash(const Dataset& ds) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](const void* p, std::size_t len) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  mix(&ds.n, sizeof ds.n);
  mix(&ds.classes, sizeof ds.classes);
  mix(&ds.feature_dim, sizeof ds.feature_dim);
  for (NodeId v = 0; v < ds.n; ++v) {
    for (FeatureMatrix::InnerIterator it(ds.features, v); it; ++it) {
      const auto idx = static_cast<std::int64_t>(it.index());
      const double val = it.value();
      mix(&v, sizeof v);
      mix(&idx, sizeof idx);
      mix(&val, sizeof val);
    }
  }
  mix(ds.labels.data(), ds.labels.size() * sizeof(int));
  if (ds.graph) {
    for (const auto& e : ds.graph->edges()) {
      mix(&e.i, sizeof e.i);
      mix(&e.j, sizeof e.j);
      mix(&e.w, sizeof e.w);
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Dataset planetoid_split(Dataset ds, std::uint64_t seed, int per_class, int n_val, int n_test) {
  std::vector<std::vector<NodeId>> by_class(static_cast<std::size_t>(ds.classes));
  for (NodeId v = 0; v < ds.n; ++v)
    if (ds.labels[v] >= 0) by_class[ds.labels[v]].push_back(v);
  Splits s;
  std::vector<char> used(static_cast<std::size_t>(ds.n), 0);
  for (int c = 0; c < ds.classes; ++c) {
    if (static_cast<int>(by_class[c].size()) < per_class) {
      throw FormatError(ds.name + ": class " + std::to_string(c) + " has " +
                        std::to_string(by_class[c].size()) + " labeled nodes, need " +
                        std::to_string(per_class));
    }
    for (int i = 0; i < per_class; ++i) {
      s.train.push_back(by_class[c][i]);
      used[by_class[c][i]] = 1;
    }
  }
  std::sort(s.train.begin(), s.train.end());
  std::vector<NodeId> rest;
  for (NodeId v = 0; v < ds.n; ++v)
    if (ds.labels[v] >= 0 && !used[v]) rest.push_back(v);
  if (static_cast<int>(rest.size()) < n_val + n_test) {
    throw FormatError(ds.name + ": only " + std::to_string(rest.size()) +
                      " labeled nodes left for validation and test");
  }
  Rng rng(seed);
  std::shuffle(rest.begin(), rest.end(), rng);
  s.val.assign(rest.begin(), rest.begin() + n_val);
  s.test.assign(rest.begin() + n_val, rest.begin() + n_val + n_test);
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.test.begin(), s.test.end());
  ds.splits = std::move(s);
  ds.info["split"] = "fixed: first " + std::to_string(per_class) +
                     " per class in node order; val/test by seeded shuffle (seed " +
                     std::to_string(seed) + ")";
  ds.validate();
  return ds;
}

std::vector<Fold> stratified_kfold(std::span<const int> labels, int k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("stratified k-fold needs k >= 2");
  int classes = 0;
  for (int y : labels) classes = std::max(classes, y + 1);
  std::vector<std::vector<NodeId>> by_class(static_cast<std::size_t>(classes));
  for (std::size_t v = 0; v < labels.size(); ++v)
    if (labels[v] >= 0) by_class[labels[v]].push_back(static_cast<NodeId>(v));

  std::size_t labeled = 0;
  for (int c = 0; c < classes; ++c) {
    const auto size = by_class[c].size();
    if (size > 0 && static_cast<int>(size) < k) {
      throw std::invalid_argument("class " + std::to_string(c) + " has " + std::to_string(size) +
                                  " members, fewer than k=" + std::to_string(k));
    }
    labeled += size;
  }
  const auto K = static_cast<std::size_t>(k), C = static_cast<std::size_t>(classes);
  std::vector<std::size_t> fold_size(K, labeled / K);
  for (std::size_t f = 0; f < labeled % K; ++f) ++fold_size[f];

  // Cell (c, f) gets floor or ceil of t_c * s_f / L. The rounding that keeps
  // both margins always exists; it is found as a flow from classes to folds
  // over the cells with a fractional part.
  std::vector<std::vector<std::size_t>> count(C, std::vector<std::size_t>(K, 0));
  std::vector<std::vector<char>> open(C, std::vector<char>(K, 0));
  std::vector<std::size_t> row_need(C, 0), col_need(K, 0);
  for (std::size_t c = 0; c < C; ++c) {
    std::size_t placed = 0;
    for (std::size_t f = 0; f < K; ++f) {
      const std::size_t num = by_class[c].size() * fold_size[f];
      count[c][f] = labeled ? num / labeled : 0;
      open[c][f] = labeled && num % labeled != 0;
      placed += count[c][f];
    }
    row_need[c] = by_class[c].size() - placed;
  }
  for (std::size_t f = 0; f < K; ++f) {
    std::size_t placed = 0;
    for (std::size_t c = 0; c < C; ++c) placed += count[c][f];
    col_need[f] = fold_size[f] - placed;
  }
  // Augmenting paths alternate class -> fold over open cells and fold -> class
  // back over cells already rounded up.
  std::vector<std::vector<char>> up(C, std::vector<char>(K, 0));
  std::vector<char> seen_fold(K);
  std::function<bool(std::size_t)> augment = [&](std::size_t c) -> bool {
    for (std::size_t f = 0; f < K; ++f) {
      if (!open[c][f] || up[c][f] || seen_fold[f]) continue;
      seen_fold[f] = 1;
      if (col_need[f] > 0) {
        --col_need[f];
        up[c][f] = 1;
        return true;
      }
      for (std::size_t d = 0; d < C; ++d) {
        if (up[d][f] && augment(d)) {
          up[d][f] = 0;
          up[c][f] = 1;
          return true;
        }
      }
    }
    return false;
  };
  for (std::size_t c = 0; c < C; ++c) {
    while (row_need[c] > 0) {
      std::fill(seen_fold.begin(), seen_fold.end(), 0);
      if (!augment(c)) throw std::logic_error("stratified k-fold: no balanced rounding");
      --row_need[c];
    }
  }

  Rng rng(seed);
  std::vector<std::vector<NodeId>> test(K);
  for (std::size_t c = 0; c < C; ++c) {
    auto& members = by_class[c];
    std::shuffle(members.begin(), members.end(), rng);
    std::size_t at = 0;
    for (std::size_t f = 0; f < K; ++f) {
      const std::size_t take = count[c][f] + static_cast<std::size_t>(up[c][f]);
      test[f].insert(test[f].end(), members.begin() + at, members.begin() + at + take);
      at += take;
    }
  }
  std::vector<Fold> folds(static_cast<std::size_t>(k));
  for (int f = 0; f < k; ++f) {
    std::sort(test[f].begin(), test[f].end());
    folds[f].test = test[f];
    for (int g = 0; g < k; ++g)
      if (g != f) folds[f].train.insert(folds[f].train.end(), test[g].begin(), test[g].end());
    std::sort(folds[f].train.begin(), folds[f].train.end());
  }
  return folds;
}

Splits random_split(std::span<const int> labels, double train_frac, double val_frac,
                    std::uint64_t seed) {
  if (train_frac < 0 || val_frac < 0 || train_frac + val_frac > 1.0 + 1e-12) {
    throw std::invalid_argument("split fractions must be non-negative and sum to <= 1");
  }
  int classes = 0;
  for (int y : labels) classes = std::max(classes, y + 1);
  Rng rng(seed);
  Splits s;
  for (int c = 0; c < classes; ++c) {
    std::vector<NodeId> members;
    for (std::size_t v = 0; v < labels.size(); ++v)
      if (labels[v] == c) members.push_back(static_cast<NodeId>(v));
    std::shuffle(members.begin(), members.end(), rng);
    const auto m = static_cast<double>(members.size());
    const auto n_train = static_cast<std::size_t>(std::llround(train_frac * m));
    const auto n_val = std::min(members.size() - n_train, static_cast<std::size_t>(std::llround(val_frac * m)));
    s.train.insert(s.train.end(), members.begin(), members.begin() + n_train);
    s.val.insert(s.val.end(), members.begin() + n_train, members.begin() + n_train + n_val);
    s.test.insert(s.test.end(), members.begin() + n_train + n_val, members.end());
  }
  for (auto* part : {&s.train, &s.val, &s.test}) std::sort(part->begin(), part->end());
  return s;
}

std::pair<std::vector<NodeId>, std::vector<NodeId>> carve_validation(
    std::span<const NodeId> train, std::span<const int> labels, double fraction,
    std::uint64_t seed) {
  std::map<int, std::vector<NodeId>> by_class;
  for (NodeId v : train) by_class[labels[v]].push_back(v);
  Rng rng(seed);
  std::vector<NodeId> keep, val;
  for (auto& [c, members] : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    auto take = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(members.size())));
    // Leave at least one training node per class.
    take = std::min(take, members.size() - 1);
    val.insert(val.end(), members.begin(), members.begin() + take);
    keep.insert(keep.end(), members.begin() + take, members.end());
  }
  std::sort(keep.begin(), keep.end());
  std::sort(val.begin(), val.end());
  return {keep, val};
}

Dataset synth_twohop(NodeId n, int classes, std::uint64_t seed, const TwoHopOptions& opts) {
  if (n < 50) throw std::invalid_argument("synth_twohop needs n >= 50");
  if (classes < 2) throw std::invalid_argument("synth_twohop needs at least two classes");
  if (opts.degree < 1) throw std::invalid_argument("synth_twohop needs degree >= 1");
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  // Label y and an independent anchor a per node, both balanced. Planted
  // edges join v and u only when y_u = a_v and a_u = y_v, so a neighbor's
  // class is the anchor (independent of y_v) while a two-step walk returns
  // to class y_v.
  std::vector<int> labels(static_cast<std::size_t>(n)), anchor(static_cast<std::size_t>(n));
  for (NodeId v = 0; v < n; ++v) labels[v] = anchor[v] = static_cast<int>(v % classes);
  std::shuffle(labels.begin(), labels.end(), rng);
  std::shuffle(anchor.begin(), anchor.end(), rng);
  std::vector<std::vector<NodeId>> cell(static_cast<std::size_t>(classes * classes));
  for (NodeId v = 0; v < n; ++v) cell[labels[v] * classes + anchor[v]].push_back(v);

  std::set<std::pair<NodeId, NodeId>> pairs;
  auto add = [&](NodeId a, NodeId b) {
    if (a != b) pairs.insert({std::min(a, b), std::max(a, b)});
  };
  for (int c = 0; c < classes; ++c) {
    for (int d = c; d < classes; ++d) {
      const auto& left = cell[c * classes + d];
      const auto& right = cell[d * classes + c];
      const double others = c == d ? static_cast<double>(left.size()) - 1.0 : static_cast<double>(right.size());
      if (others <= 0.0) continue;
      const double p = std::min(1.0, opts.degree / others);
      for (std::size_t i = 0; i < left.size(); ++i)
        for (std::size_t j = c == d ? i + 1 : 0; j < right.size(); ++j)
          if (unif(rng) < p) add(left[i], right[j]);
    }
  }
  std::uniform_int_distribution<NodeId> any(0, n - 1);
  for (NodeId v = 0; v < n; ++v)
    if (unif(rng) < opts.bridge_rate) add(v, any(rng));

  // Join every remaining component to the one holding node 0 by a random edge.
  auto build = [&] {
    std::vector<Edge> edges;
    for (auto [a, b] : pairs) edges.push_back({a, b, 1.0});
    return WeightedGraph::from_edges(n, std::move(edges));
  };
  WeightedGraph g = build();
  std::vector<NodeId> main_part;
  {
    const auto dist = hop_distances(g, 0);
    for (NodeId v = 0; v < n; ++v)
      if (dist[v] != kUnreachable) main_part.push_back(v);
  }
  std::vector<char> reached(static_cast<std::size_t>(n), 0);
  for (NodeId v : main_part) reached[v] = 1;
  int joins = 0;
  for (NodeId v = 0; v < n; ++v) {
    if (reached[v]) continue;
    const auto dist = hop_distances(g, v);
    std::vector<NodeId> part;
    for (NodeId u = 0; u < n; ++u)
      if (dist[u] != kUnreachable) part.push_back(u);
    for (NodeId u : part) reached[u] = 1;
    const NodeId from = part[std::uniform_int_distribution<std::size_t>(0, part.size() - 1)(rng)];
    add(from, main_part[std::uniform_int_distribution<std::size_t>(0, main_part.size() - 1)(rng)]);
    ++joins;
  }
  if (joins > 0) g = build();
  auto graph = std::make_optional(std::move(g));

  std::vector<std::vector<NodeId>> ring1(static_cast<std::size_t>(n));
  for (NodeId v = 0; v < n; ++v) ring1[v].assign(graph->neighbors(v).begin(), graph->neighbors(v).end());

  const int dim = classes + (opts.noise_dims > 0 ? opts.noise_dims : classes);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd x(n, dim);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = gauss(rng);
  // Center the noise within each (label, anchor) cell: a node's neighbors all
  // come from one cell, whose mean would otherwise fingerprint the label.
  for (const auto& members : cell) {
    if (members.empty()) continue;
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(dim);
    for (NodeId v : members) mean += x.row(v);
    mean /= static_cast<double>(members.size());
    for (NodeId v : members) x.row(v) -= mean;
  }
  for (NodeId v = 0; v < n; ++v) x(v, labels[v]) += opts.signal;

  Dataset ds;
  ds.name = "synth_twohop";
  ds.n = n;
  ds.classes = classes;
  ds.feature_dim = dim;
  ds.features = x.sparseView().cast<double>();
  ds.features.makeCompressed();
  ds.labels = labels;
  ds.graph = std::move(graph);
  ds.splits = random_split(labels, 0.6, 0.2, seed ^ 0x5bd1e995ULL);

  Eigen::MatrixXd probe(n, 2 * dim);
  for (NodeId v = 0; v < n; ++v) {
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(dim);
    for (NodeId u : ring1[v]) mean += x.row(u);
    if (!ring1[v].empty()) mean /= static_cast<double>(ring1[v].size());
    probe.row(v) << x.row(v), mean;
  }
  ds.info["generator"] = {{"kind", "planted-two-hop"}, {"degree", opts.degree}, {"signal", opts.signal},
                          {"bridge_rate", opts.bridge_rate}, {"seed", seed}, {"component_joins", joins}};
  // 5-fold probe so every node is scored once.
  std::size_t hits = 0;
  for (const auto& fold : stratified_kfold(labels, 5, seed ^ 0x9e3779b9ULL)) {
    hits += static_cast<std::size_t>(std::llround(
        linear_probe_accuracy(probe, labels, classes, fold.train, fold.test) * static_cast<double>(fold.test.size())));
  }
  ds.info["probe_1hop_acc"] = static_cast<double>(hits) / static_cast<double>(n);
  std::vector<int> per_class(static_cast<std::size_t>(classes), 0);
  for (int y : labels) ++per_class[y];
  ds.info["majority_acc"] = static_cast<double>(*std::max_element(per_class.begin(), per_class.end())) /
                            static_cast<double>(n);
  ds.info["split"] = "stratified random 60/20/20";
  ds.validate();
  return ds;
}

Dataset synth_tabular(NodeId n, int classes, int feature_dim, std::uint64_t seed) {
  if (n < classes * 10) throw std::invalid_argument("synth_tabular needs at least 10 nodes per class");
  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_int_distribution<int> pick_class(0, classes - 1);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  Eigen::MatrixXd centers(classes, feature_dim);
  for (Eigen::Index i = 0; i < centers.size(); ++i) centers.data()[i] = 0.6 * gauss(rng);

  std::vector<int> labels(static_cast<std::size_t>(n));
  for (NodeId v = 0; v < n; ++v) labels[v] = static_cast<int>(v % classes);
  std::shuffle(labels.begin(), labels.end(), rng);

  Eigen::MatrixXd x(n, feature_dim);
  MetaTable meta;
  meta.n = n;
  MetaMeasure age{"age", {}, 2.0}, gender{"gender", {}, 0.0}, site{"site", {}, 0.0};
  constexpr int sites = 4;
  for (NodeId v = 0; v < n; ++v) {
    const int y = labels[v];
    for (int c = 0; c < feature_dim; ++c) x(v, c) = centers(y, c) + gauss(rng);
    age.values.push_back(std::round(55.0 + 6.0 * y + 4.0 * gauss(rng)));
    gender.values.push_back(unif(rng) < 0.5 ? 0.0 : 1.0);
    site.values.push_back(unif(rng) < 0.7 ? static_cast<double>(y % sites)
                                          : static_cast<double>(std::uniform_int_distribution<int>(0, sites - 1)(rng)));
  }
  meta.measures = {age, gender, site};

  Dataset ds;
  ds.name = "synth_tabular";
  ds.n = n;
  ds.classes = classes;
  ds.feature_dim = feature_dim;
  ds.features = x.sparseView();
  ds.features.makeCompressed();
  ds.labels = labels;
  ds.meta = std::move(meta);
  ds.splits = random_split(labels, 0.6, 0.2, seed ^ 0x5bd1e995ULL);
  ds.info["generator"] = {{"kind", "tabular"}, {"seed", seed}};
  ds.info["split"] = "stratified random 60/20/20";
  ds.validate();
  return ds;
}

double linear_probe_accuracy(const Eigen::MatrixXd& x, std::span<const int> labels, int classes,
                             std::span<const NodeId> train, std::span<const NodeId> eval, int iters,
                             double lr) {
  if (train.empty() || eval.empty()) return 0.0;
  const auto dim = x.cols();
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(dim + 1, classes);
  Eigen::MatrixXd xt(static_cast<Eigen::Index>(train.size()), dim + 1);
  for (std::size_t i = 0; i < train.size(); ++i) xt.row(static_cast<Eigen::Index>(i)) << x.row(train[i]), 1.0;
  for (int it = 0; it < iters; ++it) {
    Eigen::MatrixXd logits = xt * w;
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(logits.rows(), classes);
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
      const double mx = logits.row(r).maxCoeff();
      Eigen::RowVectorXd p = (logits.row(r).array() - mx).exp();
      p /= p.sum();
      p[labels[train[r]]] -= 1.0;
      g.row(r) = p;
    }
    w -= lr * (xt.transpose() * g) / static_cast<double>(train.size());
  }
  std::size_t hit = 0;
  for (NodeId v : eval) {
    Eigen::RowVectorXd row(dim + 1);
    row << x.row(v), 1.0;
    Eigen::Index arg = 0;
    (row * w).maxCoeff(&arg);
    if (arg == labels[v]) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(eval.size());
}

FeatureMatrix row_normalize(const FeatureMatrix& f) {
  FeatureMatrix out = f;
  for (Eigen::Index r = 0; r < out.outerSize(); ++r) {
    double s = 0.0;
    for (FeatureMatrix::InnerIterator it(out, r); it; ++it) s += std::abs(it.value());
    if (s == 0.0) continue;
    for (FeatureMatrix::InnerIterator it(out, r); it; ++it) it.valueRef() /= s;
  }
  return out;
}

}  // namespace multihop
