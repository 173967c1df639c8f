#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "metapath/diffcore.hpp"
#include "metapath/hetgraph.hpp"

namespace metapath {

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Activation { relu, identity };

std::string to_string(Activation a);
Activation parse_activation(const std::string& s);

using Param = diff::Param<double>;

/// Layers for one meta-path. Layer l (0-based) aggregates over relation
/// path.relations[L - 1 - l], so the first layer applied uses the last relation.
struct PathLayers {
  MetaPath path;
  std::vector<Param> self;      // W_0 per layer, out x in
  std::vector<Param> neighbor;  // W per layer, out x in
};

struct MPGNNModel {
  std::vector<PathLayers> paths;
  Param head_w;  // classes x (paths * hidden)
  Param head_b;  // classes x 1
  Activation activation = Activation::relu;
  int hidden = 64;
  Eigen::Index input_dim = 0;
  std::vector<std::string> class_names;

  int num_classes() const { return static_cast<int>(head_w.value.rows()); }
  std::vector<MetaPath> meta_paths() const;
  std::vector<Param*> params();
};

/// Glorot-uniform weights, zero head bias.
MPGNNModel init_model(Eigen::Index input_dim, const std::vector<MetaPath>& paths, int num_classes, int hidden,
                      Activation activation, std::uint64_t seed);

/// Final embedding of one meta-path for every node (hidden x num_nodes).
Eigen::MatrixXd mp_forward(const PathLayers& layers, const HetGraph& g, Activation activation);
Eigen::MatrixXd mp_forward(const MPGNNModel& model, const HetGraph& g, std::size_t path_index);
/// Per-path final embeddings stacked in path order ((paths * hidden) x num_nodes).
Eigen::MatrixXd multi_forward(const MPGNNModel& model, const HetGraph& g);
/// Class logits for every node.
Eigen::MatrixXd logits(const MPGNNModel& model, const HetGraph& g);

/// Mean softmax cross-entropy over `nodes`; gradients are accumulated into the
/// model's Params (call zero_grads first).
double loss_and_grad(MPGNNModel& model, const HetGraph& g, std::span<const NodeId> nodes,
                     std::span<const int> labels);

/// Relational baseline layer stack: h' = act(W_0 h + sum_r sum_{j in N_i^r} W_r h_j / |N_i^r|).
struct RgcnParams {
  std::vector<Eigen::MatrixXd> self;                   // per layer
  std::vector<std::vector<Eigen::MatrixXd>> relation;  // per layer, per relation
  Activation activation = Activation::relu;
};

RgcnParams init_rgcn(Eigen::Index input_dim, RelationId num_relations, int layers, int hidden,
                     Activation activation, std::uint64_t seed);
Eigen::MatrixXd rgcn_forward(const RgcnParams& params, const HetGraph& g);

// ---------------------------------------------------------------------------
// metrics

/// Rows = truth, columns = prediction.
Eigen::MatrixXi confusion_matrix(std::span<const int> pred, std::span<const int> truth, int num_classes);
double f1_macro(const Eigen::MatrixXi& confusion);
double f1_macro(std::span<const int> pred, std::span<const int> truth);

std::vector<int> predict(const MPGNNModel& model, const HetGraph& g, std::span<const NodeId> nodes);

// ---------------------------------------------------------------------------
// training

struct TrainConfig {
  double lr = 0.01;
  int epochs = 300;
  int hidden = 64;
  int patience = 50;  // epochs without a new best checkpoint
  std::uint64_t seed = 0;
  Activation activation = Activation::relu;
};

struct EpochRecord {
  int epoch;
  double train_loss;
  double val_loss;
  double val_f1;
};

struct TrainResult {
  MPGNNModel model;  // best-validation checkpoint
  std::vector<EpochRecord> history;
  int best_epoch = -1;
  double best_val_f1 = 0.0;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

TrainResult train(const HetGraph& g, const std::vector<MetaPath>& paths, const LabeledSplit& split,
                  const TrainConfig& config);

struct SplitMetrics {
  double f1 = 0.0;
  Eigen::MatrixXi confusion;
  std::size_t count = 0;
};

struct Metrics {
  SplitMetrics train, validation, test;
};

Metrics evaluate(const MPGNNModel& model, const HetGraph& g, const LabeledSplit& split);

// ---------------------------------------------------------------------------
// checkpoints (JSON; see docs/checkpoint.md)

void save_checkpoint(const std::filesystem::path& file, const MPGNNModel& model, const HetGraph& g);
/// Relations are resolved by name against `g`; throws ModelError on any mismatch.
MPGNNModel load_checkpoint(const std::filesystem::path& file, const HetGraph& g);

}  // namespace metapath
