#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "metapath/hetgraph.hpp"
#include "metapath/rng.hpp"

namespace metapath {

class ScoringError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Binary supervision on a single node; label 1 is positive, 0 negative.
struct NodeTarget {
  NodeId node;
  int label;
  friend bool operator==(const NodeTarget&, const NodeTarget&) = default;
};

/// Multi-instance supervision: positive iff at least one member is on the path.
struct Bag {
  std::vector<NodeId> members;  // ascending, non-empty
  NodeId origin;
  friend bool operator==(const Bag&, const Bag&) = default;
};

struct BagTarget {
  Bag bag;
  int label;
  friend bool operator==(const BagTarget&, const BagTarget&) = default;
};

using NodeTargets = std::vector<NodeTarget>;
using BagTargets = std::vector<BagTarget>;
using Target = std::variant<NodeTargets, BagTargets>;

std::size_t num_positive(const Target& t);
std::size_t num_units(const Target& t);
/// Node types of the nodes the next relation is scored from (targets or bag members).
std::vector<NodeTypeId> frontier_types(const HetGraph& g, const Target& t);

struct ScorerConfig {
  int restarts = 10;
  double lr = 0.05;
  int max_steps = 300;
  int patience = 20;          // steps without an improvement larger than `tolerance`
  double tolerance = 1e-6;
  double usage_threshold = 0.5;
  double init_noise = 0.3;
  std::uint64_t seed = 0;
};

struct ScoreResult {
  RelationId relation = -1;
  double score = 0.0;                // min restart MSE
  Eigen::VectorXd theta;             // feature weights of the best restart, length d + 1 (bias last)
  std::vector<NodeId> candidates;    // nodes carrying a learnable weight, ascending
  std::vector<double> weights;       // per candidate, max over restarts
  std::vector<NodeId> usage_marks;   // ascending
  std::vector<double> restart_losses;

  /// Weight of `node`, or nullopt when it is not a candidate.
  std::optional<double> weight_of(NodeId node) const;
  bool used(NodeId node) const;
};

/// Initial pseudo-labels for every node (indexed by NodeId): the minimum label over
/// labeled `r`-predecessors plus uniform noise in [-noise, noise], clamped to
/// [0.01, 0.99]; 0.5 + noise when there is no labeled predecessor. For bag targets
/// a member's label is the label of its bag.
std::vector<double> init_weights(const HetGraph& g, RelationId r, const Target& target, Rng& rng,
                                 double noise = 0.3);

ScoreResult score_relation_nodes(const HetGraph& g, RelationId r, const NodeTargets& targets,
                                 const ScorerConfig& config);
ScoreResult score_relation_bags(const HetGraph& g, RelationId s, const BagTargets& targets,
                                const ScorerConfig& config);
ScoreResult score_relation(const HetGraph& g, RelationId r, const Target& target, const ScorerConfig& config);

/// Positive bags B+(i) = { j in N_i^r : no negative k has j in N_k^r } (emitted only
/// when non-empty, in target order) followed by one negative singleton per distinct
/// r-neighbor of a negative node (ascending).
BagTargets generate_bags(const HetGraph& g, RelationId r, const NodeTargets& targets);

/// Turns a scored target into node-level pseudo-labels: a node is positive iff some
/// restart used it to realize a positive prediction (see ScoreResult::usage_marks).
/// Bag targets label every bag member; node targets label every candidate neighbor.
NodeTargets relabel(const HetGraph& g, RelationId r_chosen, const Target& target, const ScoreResult& scored,
                    const ScorerConfig& config);

}  // namespace metapath
