#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>

#include "metapath/syngen.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace metapath;
using namespace metapath::syn;

namespace {

std::vector<int> oracle_labels(const SynDataset& d) {
  std::vector<RelationId> rels;
  std::vector<int> types;
  for (const auto& h : d.gt_path) {
    rels.push_back(h.relation);
    types.push_back(h.type);
  }
  std::vector<int> out;
  for (NodeId v = 0; v < d.graph.num_nodes(); ++v)
    out.push_back(oracle::path_starts_at(d.graph, v, rels, types, 0, d.attribute_gate ? 0 : -1) ? 1 : 0);
  return out;
}

double positive_rate(const SynDataset& d) {
  double pos = 0;
  for (const auto& t : d.labels) pos += t.label;
  return pos / static_cast<double>(d.labels.size());
}

// I(X; Y | T) in nats for binary x, y and node type t.
double conditional_mi(const std::vector<int>& x, const std::vector<int>& y, const std::vector<int>& t) {
  double mi = 0.0;
  const double n = static_cast<double>(x.size());
  for (int type = 0; type < 2; ++type) {
    double c[2][2] = {{0, 0}, {0, 0}};
    double nt = 0;
    for (std::size_t i = 0; i < x.size(); ++i)
      if (t[i] == type) {
        c[x[i]][y[i]] += 1;
        nt += 1;
      }
    if (nt == 0) continue;
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) {
        if (c[a][b] == 0) continue;
        const double pa = (c[a][0] + c[a][1]) / nt, pb = (c[0][b] + c[1][b]) / nt;
        mi += (nt / n) * (c[a][b] / nt) * std::log((c[a][b] / nt) / (pa * pb));
      }
  }
  return mi;
}

}  // namespace

TEST_CASE("validity tables") {
  const auto sparse = validity_table(4, 0);
  REQUIRE(sparse.size() == 4);
  CHECK(sparse[0][kTypeA][kTypeA]);
  CHECK(sparse[1][kTypeB][kTypeB]);
  CHECK(sparse[2][kTypeA][kTypeB]);
  CHECK(sparse[3][kTypeB][kTypeA]);
  for (const auto& r : sparse) CHECK(r[0][0] + r[0][1] + r[1][0] + r[1][1] == 1);

  const auto shared = validity_table(4, 2);
  CHECK(shared[0][kTypeA][kTypeA]);
  CHECK(shared[0][kTypeA][kTypeB]);
  CHECK_FALSE(shared[0][kTypeB][kTypeA]);
  CHECK(shared[2][kTypeA][kTypeB]);
  CHECK_FALSE(shared[2][kTypeA][kTypeA]);

  const auto dense = validity_table(6, 6);
  for (const auto& r : dense)
    for (int s = 0; s < 2; ++s)
      for (int t = 0; t < 2; ++t) CHECK(r[s][t]);
}

TEST_CASE("spec validation") {
  SynSpec spec;
  CHECK_NOTHROW(spec.validate());
  spec.num_shared = 5;
  CHECK_THROWS_AS(spec.validate(), SpecError);
  spec = {};
  spec.gt_length = 0;
  CHECK_THROWS_AS(spec.validate(), SpecError);
  spec = {};
  spec.gt_path = {{0, kTypeB}};  // relation 0 only connects A to A
  CHECK_THROWS_AS(spec.validate(), SpecError);
  spec = {};
  spec.min_positive = 0.7;
  CHECK_THROWS_AS(spec.validate(), SpecError);
}

TEST_CASE("labels match a depth-first oracle") {
  for (int relations : {4, 8})
    for (int shared : {0, 2})
      for (int length : {1, 2, 3, 4})
        for (bool gate : {false, true}) {
          SynSpec spec;
          spec.nodes_per_type = 150;
          spec.num_relations = relations;
          spec.num_shared = shared;
          spec.gt_length = length;
          spec.attribute_gate = gate;
          spec.seed = static_cast<std::uint64_t>(relations * 100 + shared * 10 + length);
          const auto d = generate(spec);
          CAPTURE(relations);
          CAPTURE(shared);
          CAPTURE(length);
          CAPTURE(gate);
          REQUIRE(d.gt_path.size() == static_cast<std::size_t>(length));
          const auto want = oracle_labels(d);
          REQUIRE(d.labels.size() == want.size());
          int mismatches = 0;
          for (const auto& t : d.labels) mismatches += t.label != want[t.node];
          CHECK(mismatches == 0);
          CHECK(verify_labels(d));
          CHECK(is_valid(d.meta_path(), d.graph));
        }
}

TEST_CASE("without random edges only planted starts are positive") {
  SynSpec spec;
  spec.nodes_per_type = 100;
  spec.density = 0.0;
  spec.gt_path = {{2, kTypeB}, {3, kTypeA}};  // A -> B -> A
  spec.seed = 3;
  const auto d = generate(spec);
  std::set<NodeId> planted(d.planted_starts.begin(), d.planted_starts.end());
  std::set<NodeId> positives;
  for (const auto& t : d.labels)
    if (t.label) positives.insert(t.node);
  CHECK(positives == planted);
  CHECK(positive_rate(d) >= spec.min_positive);
  for (NodeId v : planted) CHECK(d.graph.node_type(v) == kTypeA);
  CHECK(d.graph.num_edges() == 2 * static_cast<std::int64_t>(planted.size()));
}

TEST_CASE("verify_labels notices a flipped label") {
  SynSpec spec;
  spec.nodes_per_type = 80;
  auto d = generate(spec);
  REQUIRE(verify_labels(d));
  d.labels[5].label = 1 - d.labels[5].label;
  CHECK_FALSE(verify_labels(d));
}

TEST_CASE("positive rate stays in range") {
  for (int relations : {4, 8})
    for (int shared : {0, 2, relations})
      for (int length : {2, 3, 4})
        for (std::uint64_t seed : {1, 2}) {
          SynSpec spec;
          spec.nodes_per_type = 300;
          spec.num_relations = relations;
          spec.num_shared = shared;
          spec.gt_length = length;
          spec.seed = seed;
          const double rate = positive_rate(generate(spec));
          CAPTURE(relations);
          CAPTURE(shared);
          CAPTURE(length);
          CHECK(rate >= 0.15);
          CHECK(rate <= 0.6);
        }
}

TEST_CASE("same seed gives an identical dataset") {
  SynSpec spec;
  spec.nodes_per_type = 200;
  spec.num_relations = 6;
  spec.num_shared = 2;
  spec.gt_length = 3;
  spec.attribute_gate = true;
  spec.seed = 12;
  const auto a = generate(spec);
  const auto b = generate(spec);
  CHECK(a.gt_path == b.gt_path);
  CHECK(a.labels == b.labels);
  CHECK(a.planted_starts == b.planted_starts);
  CHECK(a.graph.features() == b.graph.features());
  for (RelationId r = 0; r < a.graph.num_relations(); ++r) {
    CHECK(a.graph.adjacency(r).offsets == b.graph.adjacency(r).offsets);
    CHECK(a.graph.adjacency(r).targets == b.graph.adjacency(r).targets);
  }
  spec.seed = 13;
  const auto c = generate(spec);
  CHECK_FALSE(a.labels == c.labels);
}

TEST_CASE("large length-4 instance generates quickly") {
  SynSpec spec;
  spec.nodes_per_type = 1000;
  spec.num_relations = 8;
  spec.num_shared = 2;
  spec.gt_length = 4;
  spec.seed = 1;
  const auto t0 = std::chrono::steady_clock::now();
  const auto d = generate(spec);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  CHECK(secs < 10.0);
  CHECK(d.graph.num_nodes() == 2000);
  CHECK(verify_labels(d));
}

TEST_CASE("distractor edges carry no label information") {
  SynSpec spec;
  spec.nodes_per_type = 1000;
  spec.num_relations = 8;
  spec.num_shared = 2;
  spec.gt_length = 2;
  spec.seed = 21;
  const auto d = generate(spec);
  std::vector<int> y, t;
  for (const auto& l : d.labels) {
    y.push_back(l.label);
    t.push_back(d.graph.node_type(l.node));
  }
  std::set<RelationId> on_path;
  for (const auto& h : d.gt_path) on_path.insert(h.relation);

  std::mt19937_64 rng(5);
  for (RelationId r = 0; r < d.graph.num_relations(); ++r) {
    if (on_path.count(r)) continue;
    std::vector<int> x;
    for (NodeId v = 0; v < d.graph.num_nodes(); ++v) x.push_back(d.graph.neighbors(r, v).empty() ? 0 : 1);
    const double observed = conditional_mi(x, y, t);
    // shuffle labels within each node type
    std::vector<double> null;
    for (int k = 0; k < 200; ++k) {
      auto ys = y;
      for (int type = 0; type < 2; ++type) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < ys.size(); ++i)
          if (t[i] == type) idx.push_back(i);
        std::vector<int> vals;
        for (auto i : idx) vals.push_back(ys[i]);
        std::shuffle(vals.begin(), vals.end(), rng);
        for (std::size_t q = 0; q < idx.size(); ++q) ys[idx[q]] = vals[q];
      }
      null.push_back(conditional_mi(x, ys, t));
    }
    std::sort(null.begin(), null.end());
    CAPTURE(r);
    CHECK(observed < 0.01);
    CHECK(observed <= null[static_cast<std::size_t>(0.995 * null.size())]);
  }
}

TEST_CASE("dataset files") {
  SynSpec spec;
  spec.nodes_per_type = 50;
  spec.gt_length = 2;
  spec.seed = 8;
  const auto d = generate(spec);
  testutil::TempDir dir("syn");
  write_dataset(dir.path(), d, spec);
  for (const char* f : {"nodes.tsv", "edges.tsv", "labels.tsv", "gt_path.json"})
    CHECK(std::filesystem::exists(dir / f));
  const auto [g, split] = load_graph_dir(dir.path());
  CHECK(g.num_nodes() == d.graph.num_nodes());
  CHECK(g.num_edges() == d.graph.num_edges());
  CHECK(split.entries.size() == d.split.entries.size());
  const auto j = nlohmann::json::parse(testutil::read_file(dir / "gt_path.json"));
  CHECK(j["relations"].size() == 2);
  CHECK(j["relations"][0] == d.graph.relation_name(d.gt_path[0].relation));
  CHECK(j["nodes"] == 100);
}
