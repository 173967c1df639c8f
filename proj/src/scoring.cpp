#include "metapath/scoring.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <set>

#include "metapath/diffcore.hpp"

namespace metapath {

std::size_t num_positive(const Target& t) {
  return std::visit(
      [](const auto& v) {
        return static_cast<std::size_t>(std::count_if(v.begin(), v.end(), [](const auto& e) { return e.label == 1; }));
      },
      t);
}

std::size_t num_units(const Target& t) {
  return std::visit([](const auto& v) { return v.size(); }, t);
}

std::vector<NodeTypeId> frontier_types(const HetGraph& g, const Target& t) {
  std::vector<bool> seen(g.num_node_types(), false);
  if (const auto* nodes = std::get_if<NodeTargets>(&t)) {
    for (const auto& e : *nodes) seen[g.node_type(e.node)] = true;
  } else {
    for (const auto& b : std::get<BagTargets>(t))
      for (NodeId j : b.bag.members) seen[g.node_type(j)] = true;
  }
  std::vector<NodeTypeId> out;
  for (NodeTypeId k = 0; k < g.num_node_types(); ++k)
    if (seen[k]) out.push_back(k);
  return out;
}

std::optional<double> ScoreResult::weight_of(NodeId node) const {
  auto it = std::lower_bound(candidates.begin(), candidates.end(), node);
  if (it == candidates.end() || *it != node) return std::nullopt;
  return weights[static_cast<std::size_t>(it - candidates.begin())];
}

bool ScoreResult::used(NodeId node) const {
  return std::binary_search(usage_marks.begin(), usage_marks.end(), node);
}

namespace {

void check_label(int label) {
  if (label != 0 && label != 1) throw ScoringError("scoring targets must be binary (0/1), got " + std::to_string(label));
}

// Per-node label used by the weight initialisation; -1 = unlabeled. A node that is a
// member of several bags takes the minimum of their labels.
std::vector<int> member_labels(const HetGraph& g, const Target& target) {
  std::vector<int> lab(g.num_nodes(), -1);
  auto assign = [&](NodeId i, int y) {
    if (i < 0 || i >= g.num_nodes()) throw ScoringError("target node " + std::to_string(i) + " out of range");
    lab[i] = lab[i] < 0 ? y : std::min(lab[i], y);
  };
  if (const auto* nodes = std::get_if<NodeTargets>(&target)) {
    for (const auto& e : *nodes) assign(e.node, e.label);
  } else {
    for (const auto& b : std::get<BagTargets>(target))
      for (NodeId j : b.bag.members) assign(j, b.label);
  }
  return lab;
}

// Both target kinds are evaluated as bags: a node target is the singleton bag {i}.
struct Problem {
  bool node_level = true;
  std::vector<double> y;                  // per unit
  std::vector<std::int64_t> unit_offsets;  // into unit_members
  std::vector<int> unit_members;          // member indices
  std::vector<NodeId> members;            // distinct member nodes
  Eigen::MatrixXd h;                      // (d + 1) x members, bias row last
  std::vector<std::int64_t> cand_offsets;  // per member into member_cands
  std::vector<int> member_cands;          // candidate indices
  std::vector<NodeId> candidates;         // ascending
};

Problem build_problem(const HetGraph& g, RelationId r, const Target& target) {
  if (r < 0 || r >= g.num_relations()) throw ScoringError("relation id " + std::to_string(r) + " out of range");
  Problem p;
  std::vector<int> member_index(g.num_nodes(), -1);
  auto intern = [&](NodeId j) {
    if (j < 0 || j >= g.num_nodes()) throw ScoringError("target node " + std::to_string(j) + " out of range");
    if (member_index[j] < 0) {
      member_index[j] = static_cast<int>(p.members.size());
      p.members.push_back(j);
    }
    return member_index[j];
  };
  p.unit_offsets.push_back(0);
  if (const auto* nodes = std::get_if<NodeTargets>(&target)) {
    p.node_level = true;
    std::vector<bool> seen(g.num_nodes(), false);
    for (const auto& e : *nodes) {
      check_label(e.label);
      if (e.node >= 0 && e.node < g.num_nodes()) {
        if (seen[e.node]) throw ScoringError("node " + std::to_string(e.node) + " appears twice in the targets");
        seen[e.node] = true;
      }
      p.y.push_back(e.label);
      p.unit_members.push_back(intern(e.node));
      p.unit_offsets.push_back(static_cast<std::int64_t>(p.unit_members.size()));
    }
  } else {
    p.node_level = false;
    for (const auto& b : std::get<BagTargets>(target)) {
      check_label(b.label);
      if (b.bag.members.empty()) throw ScoringError("empty bag");
      p.y.push_back(b.label);
      for (NodeId j : b.bag.members) p.unit_members.push_back(intern(j));
      p.unit_offsets.push_back(static_cast<std::int64_t>(p.unit_members.size()));
    }
  }

  std::set<NodeId> cand_set;
  for (NodeId j : p.members)
    for (NodeId k : g.neighbors(r, j)) cand_set.insert(k);
  p.candidates.assign(cand_set.begin(), cand_set.end());
  std::vector<int> cand_index(g.num_nodes(), -1);
  for (std::size_t c = 0; c < p.candidates.size(); ++c) cand_index[p.candidates[c]] = static_cast<int>(c);

  const Eigen::Index d = g.feature_dim();
  p.h.resize(d + 1, static_cast<Eigen::Index>(p.members.size()));
  p.cand_offsets.push_back(0);
  for (std::size_t m = 0; m < p.members.size(); ++m) {
    const NodeId j = p.members[m];
    p.h.col(static_cast<Eigen::Index>(m)).head(d) = g.feature(j);
    p.h(d, static_cast<Eigen::Index>(m)) = 1.0;
    auto nb = g.neighbors(r, j);
    // parallel edges do not change a max
    NodeId prev = -1;
    for (NodeId k : nb) {
      if (k == prev) continue;
      prev = k;
      p.member_cands.push_back(cand_index[k]);
    }
    p.cand_offsets.push_back(static_cast<std::int64_t>(p.member_cands.size()));
  }
  return p;
}

struct Evaluation {
  double loss = 0.0;
  Eigen::VectorXd pred;       // per unit
  std::vector<int> unit_arg;  // argmax member per unit
  Eigen::VectorXd inner;      // per member: max weight over its candidates (0 if none)
  std::vector<int> inner_arg;  // per member: argmax candidate or -1
  Eigen::VectorXd a;          // per member: theta^T h
};

void evaluate(const Problem& p, const Eigen::VectorXd& theta, const Eigen::VectorXd& w, Evaluation& ev) {
  const auto nm = static_cast<Eigen::Index>(p.members.size());
  const auto nu = static_cast<Eigen::Index>(p.y.size());
  ev.a.noalias() = p.h.transpose() * theta;
  ev.inner.resize(nm);
  ev.inner_arg.assign(static_cast<std::size_t>(nm), -1);
  for (Eigen::Index m = 0; m < nm; ++m) {
    std::span<const int> cands(p.member_cands.data() + p.cand_offsets[m],
                               static_cast<std::size_t>(p.cand_offsets[m + 1] - p.cand_offsets[m]));
    const auto mx = diff::masked_max(w, cands);
    ev.inner(m) = mx.value;
    ev.inner_arg[static_cast<std::size_t>(m)] = mx.arg ? static_cast<int>(*mx.arg) : -1;
  }
  const Eigen::VectorXd member_pred = ev.a.cwiseProduct(ev.inner);
  ev.pred.resize(nu);
  ev.unit_arg.assign(static_cast<std::size_t>(nu), -1);
  double sse = 0.0;
  for (Eigen::Index b = 0; b < nu; ++b) {
    std::span<const int> mem(p.unit_members.data() + p.unit_offsets[b],
                             static_cast<std::size_t>(p.unit_offsets[b + 1] - p.unit_offsets[b]));
    const auto mx = diff::masked_max(member_pred, mem);
    ev.pred(b) = mx.value;
    ev.unit_arg[static_cast<std::size_t>(b)] = static_cast<int>(*mx.arg);
    const double e = mx.value - p.y[static_cast<std::size_t>(b)];
    sse += e * e;
  }
  ev.loss = nu > 0 ? sse / static_cast<double>(nu) : 0.0;
}

struct RestartOutcome {
  double loss;
  Eigen::VectorXd theta;
  Eigen::VectorXd w;
  std::vector<NodeId> used;
};

RestartOutcome run_restart(const HetGraph& g, RelationId r, const Target& target, const Problem& p,
                           const ScorerConfig& cfg, int restart) {
  Rng rng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(r), static_cast<std::uint64_t>(restart)}));
  const std::vector<double> w0 = init_weights(g, r, target, rng, cfg.init_noise);

  const auto nc = static_cast<Eigen::Index>(p.candidates.size());
  const Eigen::Index dim = p.h.rows();
  diff::Param<double> theta(Eigen::MatrixXd::Zero(dim, 1));
  theta.value(dim - 1, 0) = 1.0;
  diff::Param<double> u(Eigen::MatrixXd::Zero(nc, 1));
  for (Eigen::Index c = 0; c < nc; ++c) {
    const double w = w0[static_cast<std::size_t>(p.candidates[static_cast<std::size_t>(c)])];
    u.value(c, 0) = std::log(w / (1.0 - w));
  }
  std::array<diff::Param<double>*, 2> params{&theta, &u};
  diff::AdamState<double> adam(cfg.lr);

  const auto nu = static_cast<Eigen::Index>(p.y.size());
  Eigen::Map<const Eigen::VectorXd> y(p.y.data(), nu);
  Evaluation ev;
  double best = std::numeric_limits<double>::infinity();
  double plateau_ref = best;
  int last_improve = 0;
  RestartOutcome out{best, theta.value.col(0), diff::sigmoid(u.value.col(0)), {}};

  for (int step = 0;; ++step) {
    const Eigen::VectorXd w = diff::sigmoid(u.value.col(0));
    evaluate(p, theta.value.col(0), w, ev);
    if (ev.loss < best) {
      best = ev.loss;
      out.loss = ev.loss;
      out.theta = theta.value.col(0);
      out.w = w;
    }
    if (ev.loss < plateau_ref - cfg.tolerance) {
      plateau_ref = ev.loss;
      last_improve = step;
    }
    if (step >= cfg.max_steps || step - last_improve >= cfg.patience) break;

    // backward through the two max operators
    const Eigen::VectorXd dpred = diff::mse_loss_backward(ev.pred, y);
    Eigen::VectorXd dmember = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p.members.size()));
    for (Eigen::Index b = 0; b < nu; ++b) dmember(ev.unit_arg[static_cast<std::size_t>(b)]) += dpred(b);
    Eigen::VectorXd dw = Eigen::VectorXd::Zero(nc);
    for (Eigen::Index m = 0; m < dmember.size(); ++m) {
      if (dmember(m) == 0.0) continue;
      const int k = ev.inner_arg[static_cast<std::size_t>(m)];
      if (k >= 0) dw(k) += dmember(m) * ev.a(m);
    }
    theta.grad.col(0).noalias() = p.h * dmember.cwiseProduct(ev.inner);
    u.grad.col(0) = diff::sigmoid_backward(w, dw);
    diff::adam_step<double>(params, adam);
  }

  // usage at the best parameters
  evaluate(p, out.theta, out.w, ev);
  std::vector<NodeId> used;
  for (Eigen::Index b = 0; b < nu; ++b) {
    if (p.y[static_cast<std::size_t>(b)] != 1 || ev.pred(b) < cfg.usage_threshold) continue;
    const int m = ev.unit_arg[static_cast<std::size_t>(b)];
    if (p.node_level) {
      const int k = ev.inner_arg[static_cast<std::size_t>(m)];
      if (k >= 0) used.push_back(p.candidates[static_cast<std::size_t>(k)]);
    } else {
      used.push_back(p.members[static_cast<std::size_t>(m)]);
    }
  }
  out.used = std::move(used);
  return out;
}

ScoreResult score_problem(const HetGraph& g, RelationId r, const Target& target, const ScorerConfig& cfg) {
  if (num_units(target) == 0) throw ScoringError("no scoring targets");
  if (cfg.restarts < 1) throw ScoringError("restarts must be >= 1");
  const Problem p = build_problem(g, r, target);

  ScoreResult res;
  res.relation = r;
  res.candidates = p.candidates;
  res.theta = Eigen::VectorXd::Zero(g.feature_dim() + 1);
  res.theta(g.feature_dim()) = 1.0;

  if (p.candidates.empty()) {
    // every prediction is the empty max: the score is the no-evidence floor
    double floor = 0.0;
    for (double v : p.y) floor += v * v;
    res.score = floor / static_cast<double>(p.y.size());
    res.restart_losses.assign(static_cast<std::size_t>(cfg.restarts), res.score);
    return res;
  }

  res.weights.assign(p.candidates.size(), 0.0);
  res.score = std::numeric_limits<double>::infinity();
  std::set<NodeId> used;
  for (int k = 0; k < cfg.restarts; ++k) {
    auto o = run_restart(g, r, target, p, cfg, k);
    res.restart_losses.push_back(o.loss);
    if (o.loss < res.score) {
      res.score = o.loss;
      res.theta = o.theta;
    }
    for (std::size_t c = 0; c < p.candidates.size(); ++c)
      res.weights[c] = std::max(res.weights[c], o.w(static_cast<Eigen::Index>(c)));
    used.insert(o.used.begin(), o.used.end());
  }
  res.usage_marks.assign(used.begin(), used.end());
  return res;
}

}  // namespace

std::vector<double> init_weights(const HetGraph& g, RelationId r, const Target& target, Rng& rng, double noise) {
  if (r < 0 || r >= g.num_relations()) throw ScoringError("relation id " + std::to_string(r) + " out of range");
  const auto lab = member_labels(g, target);
  std::uniform_real_distribution<double> eps(-noise, noise);
  std::vector<double> w(g.num_nodes());
  for (NodeId i = 0; i < g.num_nodes(); ++i) {
    int lo = 2;
    for (NodeId j : g.reverse_neighbors(r, i))
      if (lab[j] >= 0) lo = std::min(lo, lab[j]);
    const double base = lo == 2 ? 0.5 : static_cast<double>(lo);
    w[i] = std::clamp(base + eps(rng), 0.01, 0.99);
  }
  return w;
}

ScoreResult score_relation_nodes(const HetGraph& g, RelationId r, const NodeTargets& targets,
                                 const ScorerConfig& config) {
  if (targets.empty()) throw ScoringError("zero labeled nodes to score against");
  return score_problem(g, r, Target{targets}, config);
}

ScoreResult score_relation_bags(const HetGraph& g, RelationId s, const BagTargets& targets,
                                const ScorerConfig& config) {
  if (targets.empty()) throw ScoringError("zero bags to score against");
  return score_problem(g, s, Target{targets}, config);
}

ScoreResult score_relation(const HetGraph& g, RelationId r, const Target& target, const ScorerConfig& config) {
  if (const auto* nodes = std::get_if<NodeTargets>(&target)) return score_relation_nodes(g, r, *nodes, config);
  return score_relation_bags(g, r, std::get<BagTargets>(target), config);
}

BagTargets generate_bags(const HetGraph& g, RelationId r, const NodeTargets& targets) {
  if (r < 0 || r >= g.num_relations()) throw ScoringError("relation id " + std::to_string(r) + " out of range");
  std::vector<bool> reached_by_negative(g.num_nodes(), false);
  std::set<NodeId> negative_reach;
  for (const auto& t : targets) {
    check_label(t.label);
    if (t.node < 0 || t.node >= g.num_nodes()) throw ScoringError("target node " + std::to_string(t.node) + " out of range");
    if (t.label != 0) continue;
    for (NodeId j : g.neighbors(r, t.node)) {
      reached_by_negative[j] = true;
      negative_reach.insert(j);
    }
  }
  BagTargets out;
  for (const auto& t : targets) {
    if (t.label != 1) continue;
    Bag bag{{}, t.node};
    for (NodeId j : g.neighbors(r, t.node))
      if (!reached_by_negative[j] && (bag.members.empty() || bag.members.back() != j)) bag.members.push_back(j);
    if (!bag.members.empty()) out.push_back({std::move(bag), 1});
  }
  for (NodeId j : negative_reach) out.push_back({Bag{{j}, j}, 0});
  return out;
}

NodeTargets relabel(const HetGraph& g, RelationId r_chosen, const Target& target, const ScoreResult& scored,
                    const ScorerConfig& /*config*/) {
  if (scored.relation != r_chosen)
    throw ScoringError("relabel: score result is for relation " + std::to_string(scored.relation) + ", not " +
                       std::to_string(r_chosen));
  std::set<NodeId> nodes;
  if (const auto* nt = std::get_if<NodeTargets>(&target)) {
    for (const auto& t : *nt)
      for (NodeId k : g.neighbors(r_chosen, t.node)) nodes.insert(k);
  } else {
    for (const auto& b : std::get<BagTargets>(target)) nodes.insert(b.bag.members.begin(), b.bag.members.end());
  }
  NodeTargets out;
  out.reserve(nodes.size());
  for (NodeId j : nodes) out.push_back({j, scored.used(j) ? 1 : 0});
  return out;
}

}  // namespace metapath
