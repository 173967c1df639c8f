#include "metapath/syngen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <spdlog/spdlog.h>

#include "metapath/rng.hpp"

namespace metapath::syn {

namespace {

const char* type_name(NodeTypeId t) { return t == kTypeA ? "A" : "B"; }

std::string relation_name(RelationId r) { return "r" + std::to_string(r); }

void check_path(const std::vector<Hop>& path, const ValidityTable& valid);

}  // namespace

void SynSpec::validate() const {
  if (nodes_per_type < 1) throw SpecError("nodes per type must be >= 1");
  if (num_relations < 1) throw SpecError("need at least one relation");
  if (num_shared < 0 || num_shared > num_relations)
    throw SpecError("shared relation count must be in [0, " + std::to_string(num_relations) + "]");
  const auto len = gt_path.empty() ? gt_length : static_cast<int>(gt_path.size());
  if (len < 1 || len > 6) throw SpecError("ground-truth length must be in [1, 6], got " + std::to_string(len));
  if (!(density >= 0.0)) throw SpecError("density must be >= 0");
  if (min_positive < 0 || max_positive > 1 || min_positive > max_positive)
    throw SpecError("positive-rate bounds must satisfy 0 <= min <= max <= 1");
  if (attribute_gate && !(attribute_rate > 0.0 && attribute_rate <= 1.0))
    throw SpecError("attribute rate must be in (0, 1]");
  if (!gt_path.empty()) check_path(gt_path, validity_table(num_relations, num_shared));
}

ValidityTable validity_table(int num_relations, int num_shared) {
  static constexpr std::array<std::array<NodeTypeId, 2>, 4> primary{{{kTypeA, kTypeA},
                                                                     {kTypeB, kTypeB},
                                                                     {kTypeA, kTypeB},
                                                                     {kTypeB, kTypeA}}};
  ValidityTable v(static_cast<std::size_t>(num_relations));
  const bool dense = num_shared == num_relations;
  for (int r = 0; r < num_relations; ++r) {
    auto& cell = v[r];
    cell = {};
    if (dense) {
      cell = {{{true, true}, {true, true}}};
      continue;
    }
    const auto [s, t] = primary[r % 4];
    cell[s][t] = true;
    if (r < num_shared) cell[s][1 - t] = true;
  }
  return v;
}

MetaPath SynDataset::meta_path() const {
  MetaPath mp;
  for (const auto& h : gt_path) mp.relations.push_back(h.relation);
  return mp;
}

namespace {

std::vector<Hop> draw_path(const SynSpec& spec, const ValidityTable& valid, Rng& rng) {
  std::vector<Hop> path;
  int prev = -1;  // type of the current node; -1 = start of any type
  for (int h = 0; h < spec.gt_length; ++h) {
    std::vector<Hop> options;
    for (RelationId r = 0; r < spec.num_relations; ++r)
      for (NodeTypeId t : {kTypeA, kTypeB}) {
        const bool ok = prev < 0 ? (valid[r][kTypeA][t] || valid[r][kTypeB][t]) : valid[r][prev][t];
        if (ok) options.push_back({r, t});
      }
    if (options.empty()) throw SpecError("no relation can extend the ground-truth path");
    std::uniform_int_distribution<std::size_t> pick(0, options.size() - 1);
    path.push_back(options[pick(rng)]);
    prev = path.back().type;
  }
  return path;
}

void check_path(const std::vector<Hop>& path, const ValidityTable& valid) {
  int prev = -1;
  for (std::size_t h = 0; h < path.size(); ++h) {
    const auto& hop = path[h];
    if (hop.relation < 0 || hop.relation >= static_cast<RelationId>(valid.size()))
      throw SpecError("ground-truth hop " + std::to_string(h) + " uses unknown relation");
    if (hop.type != kTypeA && hop.type != kTypeB) throw SpecError("ground-truth hop type must be A or B");
    const auto& cell = valid[hop.relation];
    const bool ok = prev < 0 ? (cell[kTypeA][hop.type] || cell[kTypeB][hop.type]) : cell[prev][hop.type];
    if (!ok)
      throw SpecError("ground-truth hop " + std::to_string(h) + " (" + relation_name(hop.relation) + " into " +
                      type_name(hop.type) + ") is not allowed by the validity table");
    prev = hop.type;
  }
}

struct Edges {
  std::vector<std::vector<std::vector<NodeId>>> out;  // [relation][node] -> destinations
};

// label[v] = 1 iff some walk from v follows the planted hops (backward dynamic program)
std::vector<int> label_nodes(const Edges& e, const std::vector<NodeTypeId>& type, const std::vector<double>& attr,
                             const std::vector<Hop>& path, bool gate) {
  const auto n = type.size();
  std::vector<char> ok(n, 1);
  for (std::size_t h = path.size(); h-- > 0;) {
    std::vector<char> prev(n, 0);
    for (std::size_t v = 0; v < n; ++v)
      for (NodeId j : e.out[path[h].relation][v]) {
        if (type[j] != path[h].type || !ok[j]) continue;
        if (h == 0 && gate && attr[j] != 1.0) continue;
        prev[v] = 1;
        break;
      }
    ok = std::move(prev);
  }
  return {ok.begin(), ok.end()};
}

}  // namespace

SynDataset generate(const SynSpec& spec) {
  spec.validate();
  const ValidityTable valid = validity_table(spec.num_relations, spec.num_shared);
  SynDataset d;
  d.validity = valid;
  d.attribute_gate = spec.attribute_gate;
  {
    Rng rng(derive_seed(spec.seed, {1}));
    d.gt_path = spec.gt_path.empty() ? draw_path(spec, valid, rng) : spec.gt_path;
  }
  check_path(d.gt_path, valid);

  const int n = spec.nodes_per_type;
  const auto total = static_cast<std::size_t>(2 * n);
  std::vector<NodeTypeId> type(total);
  for (std::size_t v = 0; v < total; ++v) type[v] = v < static_cast<std::size_t>(n) ? kTypeA : kTypeB;
  auto of_type = [&](NodeTypeId t, std::size_t k) { return static_cast<NodeId>(t * n + static_cast<int>(k)); };

  std::vector<double> attr(total, 0.0);
  if (spec.attribute_gate) {
    Rng rng(derive_seed(spec.seed, {5}));
    std::bernoulli_distribution coin(spec.attribute_rate);
    for (auto& a : attr) a = coin(rng) ? 1.0 : 0.0;
  }

  // background edges, resampled while the positive rate is above the cap
  Edges e;
  std::vector<int> labels;
  constexpr int kMaxAttempts = 20;
  for (int attempt = 0;; ++attempt) {
    Rng rng(derive_seed(spec.seed, {2, static_cast<std::uint64_t>(attempt)}));
    std::uniform_int_distribution<int> node_pick(0, n - 1);
    e.out.assign(static_cast<std::size_t>(spec.num_relations), std::vector<std::vector<NodeId>>(total));
    for (RelationId r = 0; r < spec.num_relations; ++r) {
      for (std::size_t v = 0; v < total; ++v) {
        const auto s = type[v];
        const int dests = valid[r][s][kTypeA] + valid[r][s][kTypeB];
        if (dests == 0) continue;
        std::poisson_distribution<int> degree(spec.density / dests);
        for (NodeTypeId t : {kTypeA, kTypeB}) {
          if (!valid[r][s][t]) continue;
          const int k = spec.density > 0 ? degree(rng) : 0;
          for (int q = 0; q < k; ++q) e.out[r][v].push_back(of_type(t, static_cast<std::size_t>(node_pick(rng))));
        }
      }
    }
    labels = label_nodes(e, type, attr, d.gt_path, spec.attribute_gate);
    const auto pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
    if (static_cast<double>(pos) <= spec.max_positive * static_cast<double>(total)) break;
    if (attempt + 1 >= kMaxAttempts)
      throw SpecError("positive rate stays above " + std::to_string(spec.max_positive) +
                      " at this density; lower the density");
    spdlog::debug("syngen: positive rate {:.3f} too high, resampling edges", static_cast<double>(pos) / total);
  }

  // plant path instances from negative starts until the positive floor is met
  {
    Rng rng(derive_seed(spec.seed, {3}));
    const Hop first = d.gt_path.front();
    std::vector<NodeId> first_hop_pool;
    for (std::size_t k = 0; k < static_cast<std::size_t>(n); ++k) {
      const NodeId j = of_type(first.type, k);
      if (!spec.attribute_gate || attr[j] == 1.0) first_hop_pool.push_back(j);
    }
    std::uniform_int_distribution<int> node_pick(0, n - 1);
    const auto want = static_cast<std::size_t>(std::ceil(spec.min_positive * static_cast<double>(total) - 1e-9));
    for (int round = 0;; ++round) {
      const auto pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
      if (pos >= want) break;
      std::vector<NodeId> starts;
      for (std::size_t v = 0; v < total; ++v)
        if (!labels[v] && valid[first.relation][type[v]][first.type]) starts.push_back(static_cast<NodeId>(v));
      if (starts.empty() || first_hop_pool.empty() || round >= 100)
        throw SpecError("cannot reach the requested positive rate with this ground-truth path");
      std::shuffle(starts.begin(), starts.end(), rng);
      starts.resize(std::min(starts.size(), want - pos));
      std::sort(starts.begin(), starts.end());
      for (NodeId v : starts) {
        NodeId cur = v;
        for (std::size_t h = 0; h < d.gt_path.size(); ++h) {
          NodeId next;
          if (h == 0) {
            std::uniform_int_distribution<std::size_t> pick(0, first_hop_pool.size() - 1);
            next = first_hop_pool[pick(rng)];
          } else {
            next = of_type(d.gt_path[h].type, static_cast<std::size_t>(node_pick(rng)));
          }
          e.out[d.gt_path[h].relation][cur].push_back(next);
          cur = next;
        }
        d.planted_starts.push_back(v);
      }
      labels = label_nodes(e, type, attr, d.gt_path, spec.attribute_gate);
    }
  }

  GraphBuilder b;
  b.add_node_type("A");
  b.add_node_type("B");
  for (RelationId r = 0; r < spec.num_relations; ++r) b.add_relation(relation_name(r));
  if (spec.attribute_gate)
    b.set_feature_names({"attr"});
  else
    b.set_feature_names({});
  for (std::size_t v = 0; v < total; ++v) {
    const std::string name = std::string(type_name(type[v])) + std::to_string(v % static_cast<std::size_t>(n));
    if (spec.attribute_gate)
      b.add_node(type[v], std::vector<double>{attr[v]}, name);
    else
      b.add_node(type[v], {}, name);
  }
  for (RelationId r = 0; r < spec.num_relations; ++r)
    for (std::size_t v = 0; v < total; ++v)
      for (NodeId j : e.out[r][v]) b.add_edge(static_cast<NodeId>(v), r, j);
  d.graph = b.build(true);

  std::vector<std::pair<NodeId, int>> pairs;
  for (std::size_t v = 0; v < total; ++v) {
    d.labels.push_back({static_cast<NodeId>(v), labels[v]});
    pairs.emplace_back(static_cast<NodeId>(v), labels[v]);
  }
  d.split = split_labels(pairs, spec.ratios, derive_seed(spec.seed, {4}), {"0", "1"});
  return d;
}

namespace {

bool walk_exists(const HetGraph& g, NodeId v, const std::vector<Hop>& path, std::size_t hop, bool gate) {
  if (hop == path.size()) return true;
  for (NodeId j : g.neighbors(path[hop].relation, v)) {
    if (g.node_type(j) != path[hop].type) continue;
    if (hop == 0 && gate && g.features()(0, j) != 1.0) continue;
    if (walk_exists(g, j, path, hop + 1, gate)) return true;
  }
  return false;
}

}  // namespace

bool verify_labels(const SynDataset& d) {
  if (d.labels.size() != static_cast<std::size_t>(d.graph.num_nodes())) return false;
  for (const auto& t : d.labels) {
    const int want = walk_exists(d.graph, t.node, d.gt_path, 0, d.attribute_gate) ? 1 : 0;
    if (t.label != want) return false;
  }
  return true;
}

nlohmann::json gt_path_json(const SynDataset& d, const SynSpec& spec) {
  nlohmann::json rels = nlohmann::json::array();
  nlohmann::json types = nlohmann::json::array();
  for (const auto& h : d.gt_path) {
    rels.push_back(d.graph.relation_name(h.relation));
    types.push_back(type_name(h.type));
  }
  std::size_t pos = 0;
  for (const auto& t : d.labels) pos += static_cast<std::size_t>(t.label);
  return {{"relations", std::move(rels)},
          {"hop_types", std::move(types)},
          {"attribute_gate", d.attribute_gate},
          {"positives", pos},
          {"nodes", d.graph.num_nodes()},
          {"planted_starts", d.planted_starts.size()},
          {"spec",
           {{"nodes_per_type", spec.nodes_per_type},
            {"relations", spec.num_relations},
            {"shared", spec.num_shared},
            {"gt_length", d.gt_path.size()},
            {"density", spec.density},
            {"min_positive", spec.min_positive},
            {"max_positive", spec.max_positive},
            {"attribute_rate", spec.attribute_rate},
            {"seed", spec.seed}}}};
}

void write_dataset(const std::filesystem::path& dir, const SynDataset& d, const SynSpec& spec) {
  write_graph(dir, d.graph, d.split);
  std::ofstream out(dir / "gt_path.json", std::ios::binary);
  if (!out) throw GraphError("cannot write " + (dir / "gt_path.json").string());
  out << gt_path_json(d, spec).dump(2) << '\n';
}

}  // namespace metapath::syn
