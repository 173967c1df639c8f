#include "metapath/mpgnn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <spdlog/spdlog.h>

#include "metapath/rng.hpp"

namespace metapath {

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "identity"; }

Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "identity") return Activation::identity;
  throw ModelError("unknown activation '" + s + "' (expected relu or identity)");
}

std::vector<MetaPath> MPGNNModel::meta_paths() const {
  std::vector<MetaPath> out;
  for (const auto& p : paths) out.push_back(p.path);
  return out;
}

std::vector<Param*> MPGNNModel::params() {
  std::vector<Param*> out;
  for (auto& p : paths) {
    for (auto& w : p.self) out.push_back(&w);
    for (auto& w : p.neighbor) out.push_back(&w);
  }
  out.push_back(&head_w);
  out.push_back(&head_b);
  return out;
}

namespace {

Eigen::MatrixXd glorot(Eigen::Index out, Eigen::Index in, Rng& rng) {
  const double lim = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> u(-lim, lim);
  Eigen::MatrixXd m(out, in);
  for (Eigen::Index c = 0; c < in; ++c)
    for (Eigen::Index r = 0; r < out; ++r) m(r, c) = u(rng);
  return m;
}

template <typename Derived>
Eigen::MatrixXd activate(const Eigen::MatrixBase<Derived>& x, Activation a) {
  return a == Activation::relu ? diff::relu(x) : Eigen::MatrixXd(x);
}

void check_relation(const HetGraph& g, RelationId r) {
  if (r < 0 || r >= g.num_relations())
    throw ModelError("relation id " + std::to_string(r) + " out of range (graph has " +
                     std::to_string(g.num_relations()) + ")");
}

// out.col(i) = mean of m.col(j) over j in N_i^r (zero when N_i^r is empty)
Eigen::MatrixXd aggregate(const HetGraph& g, RelationId r, const Eigen::MatrixXd& m) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(m.rows(), g.num_nodes());
  for (NodeId i = 0; i < g.num_nodes(); ++i) {
    const auto nb = g.neighbors(r, i);
    if (nb.empty()) continue;
    for (NodeId j : nb) out.col(i) += m.col(j);
    out.col(i) /= static_cast<double>(nb.size());
  }
  return out;
}

// adjoint of aggregate
Eigen::MatrixXd scatter(const HetGraph& g, RelationId r, const Eigen::MatrixXd& d) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(d.rows(), g.num_nodes());
  for (NodeId i = 0; i < g.num_nodes(); ++i) {
    const auto nb = g.neighbors(r, i);
    if (nb.empty()) continue;
    const double inv = 1.0 / static_cast<double>(nb.size());
    for (NodeId j : nb) out.col(j) += inv * d.col(i);
  }
  return out;
}

struct PathCache {
  std::vector<Eigen::MatrixXd> input;  // per layer
  std::vector<Eigen::MatrixXd> pre;    // per layer, before activation
  Eigen::MatrixXd output;
};

PathCache path_forward(const PathLayers& layers, const HetGraph& g, Activation act) {
  const auto len = layers.path.relations.size();
  if (layers.self.size() != len || layers.neighbor.size() != len)
    throw ModelError("layer count does not match meta-path length");
  PathCache c;
  Eigen::MatrixXd h = g.features();
  for (std::size_t l = 0; l < len; ++l) {
    const RelationId r = layers.path.relations[len - 1 - l];
    check_relation(g, r);
    if (layers.self[l].value.cols() != h.rows())
      throw ModelError("layer " + std::to_string(l) + " expects input dimension " +
                       std::to_string(layers.self[l].value.cols()) + ", got " + std::to_string(h.rows()));
    Eigen::MatrixXd pre = layers.self[l].value * h;
    pre += aggregate(g, r, layers.neighbor[l].value * h);
    c.input.push_back(std::move(h));
    h = activate(pre, act);
    c.pre.push_back(std::move(pre));
  }
  c.output = std::move(h);
  return c;
}

void path_backward(PathLayers& layers, const HetGraph& g, Activation act, const PathCache& c, Eigen::MatrixXd dh) {
  const auto len = layers.path.relations.size();
  for (std::size_t l = len; l-- > 0;) {
    const RelationId r = layers.path.relations[len - 1 - l];
    const Eigen::MatrixXd dpre = act == Activation::relu ? Eigen::MatrixXd(diff::relu_backward(c.pre[l], dh)) : dh;
    layers.self[l].grad.noalias() += dpre * c.input[l].transpose();
    const Eigen::MatrixXd dm = scatter(g, r, dpre);
    layers.neighbor[l].grad.noalias() += dm * c.input[l].transpose();
    if (l > 0) dh = layers.self[l].value.transpose() * dpre + layers.neighbor[l].value.transpose() * dm;
  }
}

struct ModelCache {
  std::vector<PathCache> paths;
  Eigen::MatrixXd embedding;
  Eigen::MatrixXd logits;
};

ModelCache model_forward(const MPGNNModel& model, const HetGraph& g) {
  if (model.input_dim != g.feature_dim())
    throw ModelError("model expects feature dimension " + std::to_string(model.input_dim) + ", graph has " +
                     std::to_string(g.feature_dim()));
  ModelCache c;
  const auto h = static_cast<Eigen::Index>(model.hidden);
  c.embedding.resize(h * static_cast<Eigen::Index>(model.paths.size()), g.num_nodes());
  for (std::size_t k = 0; k < model.paths.size(); ++k) {
    c.paths.push_back(path_forward(model.paths[k], g, model.activation));
    c.embedding.middleRows(static_cast<Eigen::Index>(k) * h, h) = c.paths.back().output;
  }
  c.logits = model.head_w.value * c.embedding;
  c.logits.colwise() += model.head_b.value.col(0);
  return c;
}

Eigen::MatrixXd gather(const Eigen::MatrixXd& m, std::span<const NodeId> nodes) {
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(nodes.size()));
  for (std::size_t q = 0; q < nodes.size(); ++q) out.col(static_cast<Eigen::Index>(q)) = m.col(nodes[q]);
  return out;
}

std::vector<int> argmax_cols(const Eigen::MatrixXd& m) {
  std::vector<int> out(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    Eigen::Index best = 0;
    m.col(c).maxCoeff(&best);  // first maximum
    out[static_cast<std::size_t>(c)] = static_cast<int>(best);
  }
  return out;
}

double backward_from_logits(MPGNNModel& model, const HetGraph& g, const ModelCache& c, std::span<const NodeId> nodes,
                            std::span<const int> labels) {
  const Eigen::MatrixXd sel = gather(c.logits, nodes);
  const auto ce = diff::softmax_cross_entropy(sel, labels);
  const Eigen::MatrixXd emb = gather(c.embedding, nodes);
  model.head_w.grad.noalias() += ce.grad * emb.transpose();
  model.head_b.grad.col(0) += ce.grad.rowwise().sum();
  const Eigen::MatrixXd demb_sel = model.head_w.value.transpose() * ce.grad;
  Eigen::MatrixXd demb = Eigen::MatrixXd::Zero(c.embedding.rows(), c.embedding.cols());
  for (std::size_t q = 0; q < nodes.size(); ++q) demb.col(nodes[q]) += demb_sel.col(static_cast<Eigen::Index>(q));
  const auto h = static_cast<Eigen::Index>(model.hidden);
  for (std::size_t k = 0; k < model.paths.size(); ++k)
    path_backward(model.paths[k], g, model.activation, c.paths[k], demb.middleRows(static_cast<Eigen::Index>(k) * h, h));
  return ce.loss;
}

}  // namespace

MPGNNModel init_model(Eigen::Index input_dim, const std::vector<MetaPath>& paths, int num_classes, int hidden,
                      Activation activation, std::uint64_t seed) {
  if (input_dim < 1) throw ModelError("input dimension must be >= 1");
  if (hidden < 1) throw ModelError("hidden dimension must be >= 1");
  if (num_classes < 1) throw ModelError("need at least one class");
  if (paths.empty()) throw ModelError("need at least one meta-path");
  MPGNNModel m;
  m.activation = activation;
  m.hidden = hidden;
  m.input_dim = input_dim;
  for (int c = 0; c < num_classes; ++c) m.class_names.push_back(std::to_string(c));
  for (std::size_t k = 0; k < paths.size(); ++k) {
    if (paths[k].empty()) throw ModelError("empty meta-path");
    PathLayers pl;
    pl.path = paths[k];
    for (std::size_t l = 0; l < paths[k].relations.size(); ++l) {
      const Eigen::Index in = l == 0 ? input_dim : hidden;
      Rng rs(derive_seed(seed, {k, l, 0}));
      Rng rn(derive_seed(seed, {k, l, 1}));
      pl.self.emplace_back(glorot(hidden, in, rs));
      pl.neighbor.emplace_back(glorot(hidden, in, rn));
    }
    m.paths.push_back(std::move(pl));
  }
  Rng rh(derive_seed(seed, {paths.size(), 0, 2}));
  m.head_w = Param(glorot(num_classes, hidden * static_cast<Eigen::Index>(paths.size()), rh));
  m.head_b = Param(Eigen::MatrixXd::Zero(num_classes, 1));
  return m;
}

Eigen::MatrixXd mp_forward(const PathLayers& layers, const HetGraph& g, Activation activation) {
  return path_forward(layers, g, activation).output;
}

Eigen::MatrixXd mp_forward(const MPGNNModel& model, const HetGraph& g, std::size_t path_index) {
  return mp_forward(model.paths.at(path_index), g, model.activation);
}

Eigen::MatrixXd multi_forward(const MPGNNModel& model, const HetGraph& g) { return model_forward(model, g).embedding; }

Eigen::MatrixXd logits(const MPGNNModel& model, const HetGraph& g) { return model_forward(model, g).logits; }

double loss_and_grad(MPGNNModel& model, const HetGraph& g, std::span<const NodeId> nodes,
                     std::span<const int> labels) {
  const auto c = model_forward(model, g);
  return backward_from_logits(model, g, c, nodes, labels);
}

RgcnParams init_rgcn(Eigen::Index input_dim, RelationId num_relations, int layers, int hidden,
                     Activation activation, std::uint64_t seed) {
  RgcnParams p;
  p.activation = activation;
  for (int l = 0; l < layers; ++l) {
    const Eigen::Index in = l == 0 ? input_dim : hidden;
    Rng rs(derive_seed(seed, {static_cast<std::uint64_t>(l), 0}));
    p.self.push_back(glorot(hidden, in, rs));
    p.relation.emplace_back();
    for (RelationId r = 0; r < num_relations; ++r) {
      Rng rr(derive_seed(seed, {static_cast<std::uint64_t>(l), 1, static_cast<std::uint64_t>(r)}));
      p.relation.back().push_back(glorot(hidden, in, rr));
    }
  }
  return p;
}

Eigen::MatrixXd rgcn_forward(const RgcnParams& params, const HetGraph& g) {
  if (params.relation.size() != params.self.size()) throw ModelError("rgcn: layer count mismatch");
  Eigen::MatrixXd h = g.features();
  for (std::size_t l = 0; l < params.self.size(); ++l) {
    if (params.relation[l].size() != static_cast<std::size_t>(g.num_relations()))
      throw ModelError("rgcn: layer " + std::to_string(l) + " has weights for " +
                       std::to_string(params.relation[l].size()) + " relations, graph has " +
                       std::to_string(g.num_relations()));
    if (params.self[l].cols() != h.rows()) throw ModelError("rgcn: input dimension mismatch at layer " + std::to_string(l));
    Eigen::MatrixXd pre = params.self[l] * h;
    for (RelationId r = 0; r < g.num_relations(); ++r) pre += aggregate(g, r, params.relation[l][r] * h);
    h = activate(pre, params.activation);
  }
  return h;
}

Eigen::MatrixXi confusion_matrix(std::span<const int> pred, std::span<const int> truth, int num_classes) {
  if (pred.size() != truth.size()) throw std::invalid_argument("confusion_matrix: size mismatch");
  Eigen::MatrixXi cm = Eigen::MatrixXi::Zero(num_classes, num_classes);
  for (std::size_t q = 0; q < pred.size(); ++q) {
    if (pred[q] < 0 || pred[q] >= num_classes || truth[q] < 0 || truth[q] >= num_classes)
      throw std::invalid_argument("confusion_matrix: class index out of range");
    ++cm(truth[q], pred[q]);
  }
  return cm;
}

double f1_macro(const Eigen::MatrixXi& cm) {
  double sum = 0.0;
  int counted = 0;
  for (Eigen::Index c = 0; c < cm.rows(); ++c) {
    const long tp = cm(c, c);
    const long predicted = cm.col(c).sum();
    const long actual = cm.row(c).sum();
    if (predicted == 0 && actual == 0) continue;
    ++counted;
    if (tp == 0) continue;  // P or R is 0 (or 0/0)
    sum += 2.0 * static_cast<double>(tp) / static_cast<double>(predicted + actual);
  }
  return counted ? sum / counted : 0.0;
}

double f1_macro(std::span<const int> pred, std::span<const int> truth) {
  int classes = 0;
  for (int v : pred) classes = std::max(classes, v + 1);
  for (int v : truth) classes = std::max(classes, v + 1);
  return f1_macro(confusion_matrix(pred, truth, classes));
}

std::vector<int> predict(const MPGNNModel& model, const HetGraph& g, std::span<const NodeId> nodes) {
  return argmax_cols(gather(logits(model, g), nodes));
}

TrainResult train(const HetGraph& g, const std::vector<MetaPath>& paths, const LabeledSplit& split,
                  const TrainConfig& cfg) {
  if (cfg.lr <= 0 || cfg.hidden < 1 || cfg.epochs < 0 || cfg.patience < 1)
    throw TrainingError("invalid training config (lr, hidden, patience must be positive; epochs >= 0)");
  const int classes = split.num_classes();
  const auto train_nodes = split.nodes(Partition::train);
  const auto train_labels = split.labels(Partition::train);
  if (train_nodes.empty()) throw TrainingError("no training nodes");
  for (int c = 0; c < classes; ++c)
    if (std::find(train_labels.begin(), train_labels.end(), c) == train_labels.end())
      throw TrainingError("class '" + split.class_names.at(c) + "' has no training nodes");
  auto val_nodes = split.nodes(Partition::validation);
  auto val_labels = split.labels(Partition::validation);
  if (val_nodes.empty()) {
    // select on the training set when there is no validation data
    val_nodes = train_nodes;
    val_labels = train_labels;
  }

  TrainResult res;
  MPGNNModel model = init_model(g.feature_dim(), paths, classes, cfg.hidden, cfg.activation, cfg.seed);
  model.class_names = split.class_names;
  res.model = model;
  auto params = model.params();
  diff::AdamState<double> adam(cfg.lr);

  double best_val_loss = std::numeric_limits<double>::infinity();
  int since_best = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    diff::zero_grads<double>(params);
    const auto cache = model_forward(model, g);
    const double train_loss = backward_from_logits(model, g, cache, train_nodes, train_labels);
    const Eigen::MatrixXd val_logits = gather(cache.logits, val_nodes);
    const double val_loss = diff::softmax_cross_entropy(val_logits, val_labels).loss;
    if (!std::isfinite(train_loss) || !std::isfinite(val_loss))
      throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + " (train " +
                          std::to_string(train_loss) + ", val " + std::to_string(val_loss) + ", lr " +
                          std::to_string(cfg.lr) + ")");
    const auto val_pred = argmax_cols(val_logits);
    const double val_f1 = f1_macro(confusion_matrix(val_pred, val_labels, classes));
    res.history.push_back({epoch, train_loss, val_loss, val_f1});

    // the recorded metrics belong to the parameters before this epoch's update
    if (res.best_epoch < 0 || val_f1 > res.best_val_f1 || (val_f1 == res.best_val_f1 && val_loss < best_val_loss)) {
      res.best_epoch = epoch;
      res.best_val_f1 = val_f1;
      best_val_loss = val_loss;
      res.model = model;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
    diff::adam_step<double>(params, adam);
  }
  spdlog::debug("train: {} epochs, best epoch {} val F1 {:.4f}", res.history.size(), res.best_epoch,
                res.best_val_f1);
  return res;
}

Metrics evaluate(const MPGNNModel& model, const HetGraph& g, const LabeledSplit& split) {
  if (model.num_classes() != split.num_classes())
    throw ModelError("model has " + std::to_string(model.num_classes()) + " classes, labels have " +
                     std::to_string(split.num_classes()));
  const Eigen::MatrixXd lg = logits(model, g);
  Metrics m;
  auto fill = [&](Partition p, SplitMetrics& out) {
    const auto nodes = split.nodes(p);
    const auto truth = split.labels(p);
    const auto pred = argmax_cols(gather(lg, nodes));
    out.count = nodes.size();
    out.confusion = confusion_matrix(pred, truth, model.num_classes());
    out.f1 = f1_macro(out.confusion);
  };
  fill(Partition::train, m.train);
  fill(Partition::validation, m.validation);
  fill(Partition::test, m.test);
  return m;
}

}  // namespace metapath
