#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace metapath {

using NodeId = std::int32_t;
using RelationId = std::int32_t;
using NodeTypeId = std::int32_t;

/// Dense feature storage, one column per node.
using FeatureMatrix = Eigen::MatrixXd;

class GraphError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file. `line()` is 1-based; 0 when the error is not tied to a line.
class ParseError : public GraphError {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Compressed per-source neighbor lists for a single relation.
struct RelationCsr {
  std::vector<std::int64_t> offsets;  // size num_nodes + 1
  std::vector<NodeId> targets;

  std::span<const NodeId> row(NodeId i) const {
    return {targets.data() + offsets[i], static_cast<std::size_t>(offsets[i + 1] - offsets[i])};
  }
  std::int64_t num_edges() const { return static_cast<std::int64_t>(targets.size()); }
};

/// Immutable heterogeneous graph: typed nodes with dense features and per-relation
/// forward/reverse adjacency. Built through GraphBuilder.
class HetGraph {
 public:
  HetGraph() = default;

  NodeId num_nodes() const { return static_cast<NodeId>(node_type_.size()); }
  RelationId num_relations() const { return static_cast<RelationId>(adj_.size()); }
  NodeTypeId num_node_types() const { return static_cast<NodeTypeId>(type_names_.size()); }
  Eigen::Index feature_dim() const { return features_.rows(); }
  /// Leading feature rows that came from the input; the rest is the one-hot type block.
  Eigen::Index raw_feature_dim() const { return raw_feature_dim_; }
  std::int64_t num_edges() const;
  std::int64_t num_edges(RelationId r) const { return adj_.at(r).num_edges(); }

  NodeTypeId node_type(NodeId i) const { return node_type_[i]; }
  const std::vector<NodeTypeId>& node_types() const { return node_type_; }
  const FeatureMatrix& features() const { return features_; }
  auto feature(NodeId i) const { return features_.col(i); }

  /// Out-neighbors of `i` under `r`, ascending; parallel edges repeat.
  std::span<const NodeId> neighbors(RelationId r, NodeId i) const { return adj_[r].row(i); }
  /// Nodes with an `r` edge into `j`, ascending.
  std::span<const NodeId> reverse_neighbors(RelationId r, NodeId j) const { return radj_[r].row(j); }

  const RelationCsr& adjacency(RelationId r) const { return adj_[r]; }
  const RelationCsr& reverse_adjacency(RelationId r) const { return radj_[r]; }

  const std::string& relation_name(RelationId r) const { return relation_names_.at(r); }
  const std::vector<std::string>& relation_names() const { return relation_names_; }
  RelationId relation_id(const std::string& name) const;
  const std::string& type_name(NodeTypeId t) const { return type_names_.at(t); }
  const std::vector<std::string>& type_names() const { return type_names_; }
  const std::string& node_name(NodeId i) const { return node_names_.at(i); }
  const std::vector<std::string>& node_names() const { return node_names_; }
  const std::vector<std::string>& feature_names() const { return feature_names_; }

  /// Node types occurring as source / destination of `r` in the actual edge set.
  const std::vector<NodeTypeId>& source_types(RelationId r) const { return source_types_[r]; }
  const std::vector<NodeTypeId>& destination_types(RelationId r) const { return dest_types_[r]; }

  /// Copy with every feature set to zero (feature-ablation runs).
  HetGraph without_features() const;

  /// Full scan of the forward/reverse bijection; used by loaders and tests.
  bool adjacency_consistent() const;

 private:
  friend class GraphBuilder;

  std::vector<NodeTypeId> node_type_;
  std::vector<std::string> node_names_;
  std::vector<std::string> type_names_;
  std::vector<std::string> relation_names_;
  std::vector<std::string> feature_names_;
  FeatureMatrix features_;
  Eigen::Index raw_feature_dim_ = 0;
  std::vector<RelationCsr> adj_;
  std::vector<RelationCsr> radj_;
  std::vector<std::vector<NodeTypeId>> source_types_;
  std::vector<std::vector<NodeTypeId>> dest_types_;
};

class GraphBuilder {
 public:
  GraphBuilder() = default;

  NodeTypeId add_node_type(const std::string& name);
  RelationId add_relation(const std::string& name);
  /// Feature names for the raw (pre one-hot) columns; fixes the raw dimension.
  void set_feature_names(std::vector<std::string> names);
  NodeId add_node(NodeTypeId type, std::span<const double> raw_features = {}, std::string name = {});
  void add_edge(NodeId src, RelationId r, NodeId dst);

  NodeId num_nodes() const { return static_cast<NodeId>(node_type_.size()); }

  /// Validates and freezes. With `append_type_onehot` the final feature vector is
  /// [raw features; one-hot node type], which guarantees dimension >= 1.
  HetGraph build(bool append_type_onehot = true) const;

 private:
  struct Edge {
    NodeId src;
    RelationId rel;
    NodeId dst;
  };
  std::vector<std::string> type_names_;
  std::vector<std::string> relation_names_;
  std::vector<std::string> feature_names_;
  bool feature_names_set_ = false;
  std::vector<NodeTypeId> node_type_;
  std::vector<std::string> node_names_;
  std::vector<double> raw_features_;
  std::vector<Edge> edges_;
};

/// Ordered relation sequence r_1 ... r_L.
struct MetaPath {
  std::vector<RelationId> relations;

  std::size_t length() const { return relations.size(); }
  bool empty() const { return relations.empty(); }
  friend bool operator==(const MetaPath&, const MetaPath&) = default;
  friend auto operator<=>(const MetaPath&, const MetaPath&) = default;
};

/// Non-empty and every consecutive pair shares a node type between the destination
/// types of r_i and the source types of r_{i+1}, as observed in `g`.
bool is_valid(const MetaPath& mp, const HetGraph& g);
bool types_compatible(const HetGraph& g, RelationId first, RelationId second);

std::string to_string(const MetaPath& mp, const HetGraph& g);

enum class Partition { train, validation, test };

std::string to_string(Partition p);
Partition parse_partition(const std::string& s);

struct LabeledNode {
  NodeId node;
  int label;
  Partition partition;
};

struct LabeledSplit {
  std::vector<LabeledNode> entries;
  std::vector<std::string> class_names;

  int num_classes() const { return static_cast<int>(class_names.size()); }
  std::vector<NodeId> nodes(Partition p) const;
  std::vector<int> labels(Partition p) const;
};

struct SplitRatios {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
};

/// Stratified by class; deterministic for a fixed seed. Ratios are normalized to
/// sum 1 (with a logged warning when they did not).
LabeledSplit split_labels(std::span<const std::pair<NodeId, int>> labels, SplitRatios ratios,
                          std::uint64_t seed, std::vector<std::string> class_names = {});

struct LoadedGraph {
  HetGraph graph;
  LabeledSplit split;
};

struct LoadOptions {
  SplitRatios ratios{};
  std::uint64_t split_seed = 0;
};

LoadedGraph load_graph(const std::filesystem::path& nodes_file, const std::filesystem::path& edges_file,
                       const std::filesystem::path& labels_file, const LoadOptions& opts = {});
/// Directory variant: nodes.tsv, edges.tsv, labels.tsv.
LoadedGraph load_graph_dir(const std::filesystem::path& dir, const LoadOptions& opts = {});

/// Writes nodes.tsv, edges.tsv and labels.tsv (with split column). Only the raw
/// feature rows are written; the one-hot type block is re-derived on load.
void write_graph(const std::filesystem::path& dir, const HetGraph& g, const LabeledSplit& split);

}  // namespace metapath
