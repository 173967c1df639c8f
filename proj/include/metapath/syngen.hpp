#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "metapath/hetgraph.hpp"
#include "metapath/scoring.hpp"

namespace metapath::syn {

class SpecError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

constexpr NodeTypeId kTypeA = 0;
constexpr NodeTypeId kTypeB = 1;

/// One hop of the planted path: follow `relation` into a node of type `type`.
struct Hop {
  RelationId relation;
  NodeTypeId type;
  friend bool operator==(const Hop&, const Hop&) = default;
};

struct SynSpec {
  int nodes_per_type = 1000;
  int num_relations = 4;
  int num_shared = 0;
  int gt_length = 2;          // used when `gt_path` is empty
  std::vector<Hop> gt_path;   // explicit planted path (optional)
  double density = 1.0;      // expected out-degree per (node, valid relation)
  double min_positive = 0.15;
  double max_positive = 0.6;
  bool attribute_gate = false;  // first-hop node must also carry attr = 1
  double attribute_rate = 0.5;
  SplitRatios ratios;
  std::uint64_t seed = 0;

  void validate() const;
};

/// valid[r][s][t]: relation r may connect a type-s source to a type-t destination.
using ValidityTable = std::vector<std::array<std::array<bool, 2>, 2>>;

/// Relation r's primary pair cycles AA, BB, AB, BA; the first `num_shared` relations
/// also reach the other destination type from the same source. When every relation
/// is shared, every relation is valid between every pair.
ValidityTable validity_table(int num_relations, int num_shared);

struct SynDataset {
  HetGraph graph;
  LabeledSplit split;
  NodeTargets labels;  // every node, label 1 iff a planted-path instance starts there
  std::vector<Hop> gt_path;
  ValidityTable validity;
  std::vector<NodeId> planted_starts;
  bool attribute_gate = false;

  MetaPath meta_path() const;
};

SynDataset generate(const SynSpec& spec);

/// Recomputes labels by depth-first search along the planted path and compares.
bool verify_labels(const SynDataset& d);

/// Writes nodes/edges/labels TSVs plus gt_path.json into `dir`.
void write_dataset(const std::filesystem::path& dir, const SynDataset& d, const SynSpec& spec);

nlohmann::json gt_path_json(const SynDataset& d, const SynSpec& spec);

}  // namespace metapath::syn
