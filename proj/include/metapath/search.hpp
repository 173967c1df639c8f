#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "metapath/hetgraph.hpp"
#include "metapath/mpgnn.hpp"
#include "metapath/scoring.hpp"

namespace metapath {

class SearchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SearchConfig {
  int max_length = 4;
  int beam = 3;
  ScorerConfig scorer;
  TrainConfig train;        // budget of the final model
  int search_epochs = 150;  // budget of every per-prefix and pruning model
  std::uint64_t seed = 0;
  int workers = 1;
  int positive_class = -1;  // binary tasks: class treated as positive (-1 = class 1)
  bool prune = true;

  void validate() const;
};

struct CandidateScore {
  RelationId relation;
  double score;
};

struct IterationRecord {
  int depth = 0;   // 1-based length of the prefix after this iteration
  int branch = 0;  // beam slot the prefix was extended from
  std::vector<CandidateScore> scores;
  RelationId chosen = -1;
  MetaPath prefix;
  double val_f1 = 0.0;
  std::size_t target_units = 0;     // units scored against
  std::size_t target_positive = 0;  // positive units among them
};

struct PruneRecord {
  MetaPath removed;
  double individual_f1 = 0.0;
  double f1_before = 0.0;
  double f1_without = 0.0;
  bool dropped = false;
};

struct SearchTrace {
  std::string task;  // e.g. "class 1 vs rest"
  std::vector<IterationRecord> iterations;
  std::vector<MetaPath> best;  // best prefix per surviving branch
  double best_val_f1 = 0.0;
  std::string stop_reason;
};

struct SingleResult {
  MetaPath path;
  TrainResult model;
  SearchTrace trace;
};

struct BeamResult {
  std::vector<MetaPath> paths;
  TrainResult model;
  SearchTrace trace;
  std::vector<PruneRecord> prune;
};

/// Greedy search: grows one meta-path relation by relation, keeps the prefix with the
/// best validation F1, then trains that prefix with the full budget.
SingleResult learn_single(const HetGraph& g, const LabeledSplit& split, const SearchConfig& config);

/// Beam variant keeping `config.beam` prefixes per depth. Every branch, also one pushed
/// out of the beam, leaves its best prefix; the `config.beam` best of those are pruned
/// (when enabled) and trained as one model.
BeamResult learn_beam(const HetGraph& g, const LabeledSplit& split, const SearchConfig& config);

/// Backward elimination in ascending order of single-path validation F1, longer paths
/// first on ties: a path is dropped when the retrained model without it does not lose
/// validation F1. Duplicates are removed first; the last path is never dropped.
std::vector<MetaPath> prune(const std::vector<MetaPath>& paths, const HetGraph& g, const LabeledSplit& split,
                            const SearchConfig& config, std::vector<PruneRecord>* log = nullptr);

struct LearnResult {
  std::vector<MetaPath> paths;
  TrainResult model;
  std::vector<SearchTrace> traces;  // one per binary task
  std::vector<PruneRecord> prune;
};

/// Entry point used by the CLI. Binary labels run one search; with more classes each
/// class is searched one-vs-rest and the union of the found paths is pruned and trained.
LearnResult learn(const HetGraph& g, const LabeledSplit& split, const SearchConfig& config);

/// Node-level targets for one binary task over the training partition.
NodeTargets training_targets(const LabeledSplit& split, int positive_class);

nlohmann::json to_json(const SearchTrace& trace, const HetGraph& g);
nlohmann::json to_json(const std::vector<PruneRecord>& log, const HetGraph& g);
nlohmann::json to_json(const MetaPath& mp, const HetGraph& g);

}  // namespace metapath
