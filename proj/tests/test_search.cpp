#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "metapath/search.hpp"
#include "test_util.hpp"

using namespace metapath;

namespace {

// Type T nodes point at type M nodes through three relations. M nodes carry "red"
// and "blue" flags. Label 1 iff an r1 neighbor is red, or (when `two_causes`) an r2
// neighbor is blue. r3 is noise.
LoadedGraph cause_graph(std::uint64_t seed, bool two_causes, int n = 160, int m = 40, int classes = 2) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  GraphBuilder b;
  b.set_feature_names({"red", "blue"});
  const auto tt = b.add_node_type("T");
  const auto mt = b.add_node_type("M");
  const auto r1 = b.add_relation("r1");
  const auto r2 = b.add_relation("r2");
  const auto r3 = b.add_relation("r3");
  std::vector<NodeId> ts, ms;
  for (int i = 0; i < n; ++i) ts.push_back(b.add_node(tt, std::vector<double>{0.0, 0.0}));
  std::vector<bool> red(m), blue(m);
  for (int k = 0; k < m; ++k) {
    red[k] = u(rng) < 0.25;
    blue[k] = u(rng) < 0.25;
    ms.push_back(b.add_node(mt, std::vector<double>{red[k] ? 1.0 : 0.0, blue[k] ? 1.0 : 0.0}));
  }
  std::vector<std::pair<NodeId, int>> labels;
  for (int i = 0; i < n; ++i) {
    bool hit1 = false, hit2 = false;
    for (int e = 0; e < 2; ++e) {
      const int k1 = static_cast<int>(rng() % m), k2 = static_cast<int>(rng() % m), k3 = static_cast<int>(rng() % m);
      b.add_edge(ts[i], r1, ms[k1]);
      b.add_edge(ts[i], r2, ms[k2]);
      b.add_edge(ts[i], r3, ms[k3]);
      hit1 = hit1 || red[k1];
      hit2 = hit2 || blue[k2];
    }
    int y = hit1 ? 1 : 0;
    if (classes == 2 && two_causes) y = (hit1 || hit2) ? 1 : 0;
    if (classes == 3) y = hit1 ? 1 : (hit2 ? 2 : 0);
    labels.push_back({ts[i], y});
  }
  std::vector<std::string> names;
  for (int c = 0; c < classes; ++c) names.push_back(std::to_string(c));
  return {b.build(true), split_labels(labels, {0.6, 0.2, 0.2}, seed, names)};
}

SearchConfig quick_config(std::uint64_t seed = 0) {
  SearchConfig cfg;
  cfg.seed = seed;
  cfg.train.hidden = 16;
  cfg.search_epochs = 150;
  cfg.train.epochs = 300;
  return cfg;
}

MetaPath path_of(const HetGraph& g, std::initializer_list<const char*> names) {
  MetaPath p;
  for (const char* n : names) p.relations.push_back(g.relation_id(n));
  return p;
}

}  // namespace

TEST_CASE("config validation") {
  SearchConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.beam = 0;
  CHECK_THROWS_AS(cfg.validate(), SearchError);
  cfg = {};
  cfg.max_length = 0;
  CHECK_THROWS_AS(cfg.validate(), SearchError);
  cfg = {};
  cfg.workers = 0;
  CHECK_THROWS_AS(cfg.validate(), SearchError);
}

TEST_CASE("training targets") {
  LabeledSplit split;
  split.class_names = {"a", "b", "c"};
  split.entries = {{0, 2, Partition::train}, {1, 0, Partition::test}, {2, 1, Partition::train}};
  CHECK(training_targets(split, 2) == NodeTargets{{0, 1}, {2, 0}});
  CHECK(training_targets(split, 1) == NodeTargets{{0, 0}, {2, 1}});
}

TEST_CASE("a single separating relation is found") {
  auto [g, split] = cause_graph(1, false);
  const auto res = learn_single(g, split, quick_config());
  CHECK(res.path == path_of(g, {"r1"}));
  CHECK(evaluate(res.model.model, g, split).test.f1 == 1.0);
  REQUIRE_FALSE(res.trace.iterations.empty());
  const auto& first = res.trace.iterations.front();
  CHECK(first.depth == 1);
  CHECK(first.scores.size() == 3);
  for (const auto& c : first.scores)
    if (c.relation != first.chosen) CHECK(c.score > 0.05);
  CHECK_FALSE(res.trace.stop_reason.empty());
}

TEST_CASE("toy learner recovers actor, movie, director") {
  auto [g, split] = testutil::replicated_toy();
  auto cfg = quick_config();
  const auto res = learn_single(g, split, cfg);
  CHECK(to_string(res.path, g) == to_string(path_of(g, {"main_actor_in", "directed_by"}), g));
  REQUIRE(res.trace.iterations.size() >= 2);
  CHECK(g.relation_name(res.trace.iterations[0].chosen) == "main_actor_in");
  CHECK(g.relation_name(res.trace.iterations[1].chosen) == "directed_by");
  CHECK(res.trace.iterations[1].target_positive == 8);  // bags {D} and {E,G} in each training copy
}

TEST_CASE("random labels still yield a valid path") {
  const auto g = testutil::random_graph(4, 80, 3, 300, 2, 2);
  std::mt19937_64 rng(4);
  std::vector<std::pair<NodeId, int>> labels;
  for (NodeId i = 0; i < g.num_nodes(); ++i) labels.push_back({i, static_cast<int>(rng() % 2)});
  const auto split = split_labels(labels, {0.6, 0.2, 0.2}, 4, {"0", "1"});
  auto cfg = quick_config();
  cfg.search_epochs = 30;
  cfg.train.epochs = 30;
  const auto res = learn_beam(g, split, cfg);
  REQUIRE_FALSE(res.paths.empty());
  for (const auto& p : res.paths) {
    CHECK(is_valid(p, g));
    CHECK(p.length() <= 4);
  }
}

TEST_CASE("beam width one reproduces the greedy search") {
  auto [g, split] = cause_graph(2, true);
  auto cfg = quick_config(5);
  cfg.beam = 1;
  const auto single = learn_single(g, split, cfg);
  const auto beam = learn_beam(g, split, cfg);
  REQUIRE(beam.paths.size() == 1);
  CHECK(beam.paths[0] == single.path);
  CHECK(beam.model.model.head_w.value == single.model.model.head_w.value);
  REQUIRE(beam.trace.iterations.size() == single.trace.iterations.size());
  for (std::size_t k = 0; k < beam.trace.iterations.size(); ++k)
    CHECK(beam.trace.iterations[k].chosen == single.trace.iterations[k].chosen);
}

TEST_CASE("beam search finds both causes") {
  auto [g, split] = cause_graph(3, true);
  const auto cfg = quick_config();
  const auto single = learn_single(g, split, cfg);
  const auto beam = learn_beam(g, split, cfg);
  std::set<MetaPath> got(beam.paths.begin(), beam.paths.end());
  CHECK(got.count(path_of(g, {"r1"})) == 1);
  CHECK(got.count(path_of(g, {"r2"})) == 1);
  CHECK(got.count(path_of(g, {"r3"})) == 0);
  const double f1_beam = evaluate(beam.model.model, g, split).test.f1;
  const double f1_single = evaluate(single.model.model, g, split).test.f1;
  CHECK(f1_beam > f1_single);
}

TEST_CASE("pruning") {
  auto [g, split] = cause_graph(3, true);
  const auto cfg = quick_config();
  const auto r1 = path_of(g, {"r1"}), r2 = path_of(g, {"r2"}), r3 = path_of(g, {"r3"});

  SUBCASE("duplicates and noise go, causes stay") {
    std::vector<PruneRecord> log;
    const auto kept = prune({r1, r3, r2, r1}, g, split, cfg, &log);
    CHECK(std::set<MetaPath>(kept.begin(), kept.end()) == std::set<MetaPath>{r1, r2});
    REQUIRE(log.size() == 3);  // one decision per distinct path
    for (std::size_t k = 1; k < log.size(); ++k) CHECK(log[k - 1].individual_f1 <= log[k].individual_f1);
    for (const auto& rec : log) CHECK(rec.dropped == (rec.removed == r3));
  }
  SUBCASE("the last path is never dropped") {
    CHECK(prune({r3}, g, split, cfg) == std::vector<MetaPath>{r3});
    CHECK(prune({r3, r3}, g, split, cfg) == std::vector<MetaPath>{r3});
  }
  SUBCASE("pruning is optional") {
    auto no_prune = cfg;
    no_prune.prune = false;
    const auto res = learn_beam(g, split, no_prune);
    CHECK(res.prune.empty());
  }
}

TEST_CASE("one-vs-rest search covers every class") {
  auto [g, split] = cause_graph(6, true, 200, 40, 3);
  const auto res = learn(g, split, quick_config());
  CHECK(res.traces.size() == 3);
  std::set<MetaPath> got(res.paths.begin(), res.paths.end());
  CHECK(got.count(path_of(g, {"r1"})) == 1);
  CHECK(got.count(path_of(g, {"r2"})) == 1);
  CHECK(res.model.model.num_classes() == 3);
}

TEST_CASE("search is deterministic, also across worker counts") {
  auto [g, split] = cause_graph(7, true, 120);
  auto cfg = quick_config(3);
  const auto a = learn_beam(g, split, cfg);
  cfg.workers = 3;
  const auto b = learn_beam(g, split, cfg);
  CHECK(a.paths == b.paths);
  CHECK(a.model.model.head_w.value == b.model.model.head_w.value);
  CHECK(to_json(a.trace, g) == to_json(b.trace, g));
}

TEST_CASE("trace json") {
  auto [g, split] = cause_graph(1, false, 80);
  const auto res = learn_single(g, split, quick_config());
  const auto j = to_json(res.trace, g);
  CHECK(j.contains("iterations"));
  CHECK(j.contains("stop_reason"));
  CHECK(j["iterations"][0]["chosen"] == "r1");
  CHECK(to_json(path_of(g, {"r1", "r2"}), g) == nlohmann::json::array({"r1", "r2"}));
}
