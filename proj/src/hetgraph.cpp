#include "metapath/hetgraph.hpp"

#include <algorithm>
#include <numeric>

namespace metapath {

ParseError::ParseError(const std::string& file, std::size_t line, const std::string& what)
    : GraphError(line > 0 ? file + ":" + std::to_string(line) + ": " + what : file + ": " + what),
      line_(line) {}

std::int64_t HetGraph::num_edges() const {
  std::int64_t n = 0;
  for (const auto& a : adj_) n += a.num_edges();
  return n;
}

RelationId HetGraph::relation_id(const std::string& name) const {
  auto it = std::find(relation_names_.begin(), relation_names_.end(), name);
  if (it == relation_names_.end()) throw GraphError("unknown relation '" + name + "'");
  return static_cast<RelationId>(it - relation_names_.begin());
}

HetGraph HetGraph::without_features() const {
  HetGraph g = *this;
  g.features_.setZero();
  return g;
}

bool HetGraph::adjacency_consistent() const {
  const NodeId n = num_nodes();
  for (RelationId r = 0; r < num_relations(); ++r) {
    const auto& fwd = adj_[r];
    const auto& rev = radj_[r];
    if (fwd.num_edges() != rev.num_edges()) return false;
    // Multiset equality of (src, dst) pairs read both ways.
    std::vector<std::pair<NodeId, NodeId>> a, b;
    a.reserve(fwd.targets.size());
    b.reserve(rev.targets.size());
    for (NodeId i = 0; i < n; ++i) {
      for (NodeId j : fwd.row(i)) {
        if (j < 0 || j >= n) return false;
        a.emplace_back(i, j);
      }
      for (NodeId j : rev.row(i)) {
        if (j < 0 || j >= n) return false;
        b.emplace_back(j, i);
      }
    }
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    if (a != b) return false;
  }
  return true;
}

NodeTypeId GraphBuilder::add_node_type(const std::string& name) {
  auto it = std::find(type_names_.begin(), type_names_.end(), name);
  if (it != type_names_.end()) return static_cast<NodeTypeId>(it - type_names_.begin());
  type_names_.push_back(name);
  return static_cast<NodeTypeId>(type_names_.size() - 1);
}

RelationId GraphBuilder::add_relation(const std::string& name) {
  auto it = std::find(relation_names_.begin(), relation_names_.end(), name);
  if (it != relation_names_.end()) return static_cast<RelationId>(it - relation_names_.begin());
  relation_names_.push_back(name);
  return static_cast<RelationId>(relation_names_.size() - 1);
}

void GraphBuilder::set_feature_names(std::vector<std::string> names) {
  if (!node_type_.empty()) throw GraphError("feature names must be set before nodes are added");
  feature_names_ = std::move(names);
  feature_names_set_ = true;
}

NodeId GraphBuilder::add_node(NodeTypeId type, std::span<const double> raw_features, std::string name) {
  if (type < 0 || type >= static_cast<NodeTypeId>(type_names_.size()))
    throw GraphError("node type " + std::to_string(type) + " is not registered");
  if (!feature_names_set_) {
    feature_names_.clear();
    for (std::size_t k = 0; k < raw_features.size(); ++k) feature_names_.push_back("f" + std::to_string(k));
    feature_names_set_ = true;
  }
  if (raw_features.size() != feature_names_.size())
    throw GraphError("inconsistent feature dimension: expected " + std::to_string(feature_names_.size()) +
                     ", got " + std::to_string(raw_features.size()));
  const auto id = static_cast<NodeId>(node_type_.size());
  node_type_.push_back(type);
  node_names_.push_back(name.empty() ? std::to_string(id) : std::move(name));
  raw_features_.insert(raw_features_.end(), raw_features.begin(), raw_features.end());
  return id;
}

void GraphBuilder::add_edge(NodeId src, RelationId r, NodeId dst) {
  edges_.push_back({src, r, dst});
}

namespace {

RelationCsr build_csr(NodeId n, std::vector<std::pair<NodeId, NodeId>>& pairs) {
  std::sort(pairs.begin(), pairs.end());
  RelationCsr csr;
  csr.offsets.assign(static_cast<std::size_t>(n) + 1, 0);
  csr.targets.reserve(pairs.size());
  for (const auto& [s, d] : pairs) {
    ++csr.offsets[s + 1];
    csr.targets.push_back(d);
  }
  std::partial_sum(csr.offsets.begin(), csr.offsets.end(), csr.offsets.begin());
  return csr;
}

}  // namespace

HetGraph GraphBuilder::build(bool append_type_onehot) const {
  const NodeId n = num_nodes();
  const auto num_rel = static_cast<RelationId>(relation_names_.size());
  const auto num_types = static_cast<Eigen::Index>(type_names_.size());
  const auto raw_dim = static_cast<Eigen::Index>(feature_names_.size());

  HetGraph g;
  g.node_type_ = node_type_;
  g.node_names_ = node_names_;
  g.type_names_ = type_names_;
  g.relation_names_ = relation_names_;
  g.feature_names_ = feature_names_;
  g.raw_feature_dim_ = raw_dim;

  const Eigen::Index dim = raw_dim + (append_type_onehot ? num_types : 0);
  if (dim < 1) throw GraphError("feature dimension must be at least 1");
  g.features_ = FeatureMatrix::Zero(dim, n);
  for (NodeId i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < raw_dim; ++k) g.features_(k, i) = raw_features_[i * raw_dim + k];
    if (append_type_onehot) g.features_(raw_dim + node_type_[i], i) = 1.0;
  }
  if (append_type_onehot)
    for (const auto& t : type_names_) g.feature_names_.push_back("type=" + t);

  std::vector<std::vector<std::pair<NodeId, NodeId>>> fwd(num_rel), rev(num_rel);
  for (const auto& e : edges_) {
    if (e.rel < 0 || e.rel >= num_rel) throw GraphError("edge uses unknown relation id " + std::to_string(e.rel));
    if (e.src < 0 || e.src >= n || e.dst < 0 || e.dst >= n)
      throw GraphError("dangling node id in edge (" + std::to_string(e.src) + ", " + std::to_string(e.dst) + ")");
    fwd[e.rel].emplace_back(e.src, e.dst);
    rev[e.rel].emplace_back(e.dst, e.src);
  }
  g.adj_.reserve(num_rel);
  g.radj_.reserve(num_rel);
  g.source_types_.resize(num_rel);
  g.dest_types_.resize(num_rel);
  for (RelationId r = 0; r < num_rel; ++r) {
    std::vector<bool> src_seen(num_types, false), dst_seen(num_types, false);
    for (const auto& [s, d] : fwd[r]) {
      src_seen[node_type_[s]] = true;
      dst_seen[node_type_[d]] = true;
    }
    for (NodeTypeId t = 0; t < num_types; ++t) {
      if (src_seen[t]) g.source_types_[r].push_back(t);
      if (dst_seen[t]) g.dest_types_[r].push_back(t);
    }
    g.adj_.push_back(build_csr(n, fwd[r]));
    g.radj_.push_back(build_csr(n, rev[r]));
  }
  return g;
}

bool types_compatible(const HetGraph& g, RelationId first, RelationId second) {
  const auto& dst = g.destination_types(first);
  const auto& src = g.source_types(second);
  return std::any_of(dst.begin(), dst.end(),
                     [&](NodeTypeId t) { return std::find(src.begin(), src.end(), t) != src.end(); });
}

bool is_valid(const MetaPath& mp, const HetGraph& g) {
  if (mp.empty()) return false;
  for (RelationId r : mp.relations)
    if (r < 0 || r >= g.num_relations()) return false;
  for (std::size_t k = 0; k + 1 < mp.relations.size(); ++k)
    if (!types_compatible(g, mp.relations[k], mp.relations[k + 1])) return false;
  return true;
}

std::string to_string(const MetaPath& mp, const HetGraph& g) {
  std::string out;
  for (RelationId r : mp.relations) {
    if (!out.empty()) out += " > ";
    out += (r >= 0 && r < g.num_relations()) ? g.relation_name(r) : "#" + std::to_string(r);
  }
  return out;
}

std::string to_string(Partition p) {
  switch (p) {
    case Partition::train: return "train";
    case Partition::validation: return "val";
    case Partition::test: return "test";
  }
  return "?";
}

Partition parse_partition(const std::string& s) {
  if (s == "train") return Partition::train;
  if (s == "val" || s == "validation") return Partition::validation;
  if (s == "test") return Partition::test;
  throw GraphError("unknown split '" + s + "' (expected train/val/test)");
}

std::vector<NodeId> LabeledSplit::nodes(Partition p) const {
  std::vector<NodeId> out;
  for (const auto& e : entries)
    if (e.partition == p) out.push_back(e.node);
  return out;
}

std::vector<int> LabeledSplit::labels(Partition p) const {
  std::vector<int> out;
  for (const auto& e : entries)
    if (e.partition == p) out.push_back(e.label);
  return out;
}

}  // namespace metapath
