#include "metapath/search.hpp"

#include <algorithm>
#include <map>
#include <optional>

#include <spdlog/spdlog.h>

#include "metapath/parallel.hpp"
#include "metapath/rng.hpp"

namespace metapath {

void SearchConfig::validate() const {
  if (max_length < 1) throw SearchError("max length must be >= 1, got " + std::to_string(max_length));
  if (beam < 1) throw SearchError("beam width must be >= 1, got " + std::to_string(beam));
  if (workers < 1) throw SearchError("workers must be >= 1, got " + std::to_string(workers));
  if (search_epochs < 0) throw SearchError("search epochs must be >= 0");
  if (scorer.restarts < 1) throw SearchError("scorer restarts must be >= 1");
  if (scorer.lr <= 0 || scorer.max_steps < 0 || scorer.patience < 1) throw SearchError("invalid scorer settings");
  if (train.lr <= 0 || train.hidden < 1 || train.epochs < 0 || train.patience < 1)
    throw SearchError("invalid training settings");
}

NodeTargets training_targets(const LabeledSplit& split, int positive_class) {
  NodeTargets out;
  for (const auto& e : split.entries)
    if (e.partition == Partition::train) out.push_back({e.node, e.label == positive_class ? 1 : 0});
  return out;
}

namespace {

std::uint64_t paths_seed(std::uint64_t base, const std::vector<MetaPath>& paths) {
  std::uint64_t s = derive_seed(base, {0x70617468ULL});
  for (const auto& mp : paths) {
    s = derive_seed(s, {mp.relations.size()});
    for (RelationId r : mp.relations) s = derive_seed(s, {static_cast<std::uint64_t>(r)});
  }
  return s;
}

TrainConfig budget(const SearchConfig& cfg, const std::vector<MetaPath>& paths, bool final_model) {
  TrainConfig tc = cfg.train;
  if (!final_model) tc.epochs = cfg.search_epochs;
  tc.seed = paths_seed(cfg.seed, paths);
  return tc;
}

double validation_f1(const HetGraph& g, const LabeledSplit& split, const SearchConfig& cfg,
                     const std::vector<MetaPath>& paths) {
  return train(g, paths, split, budget(cfg, paths, false)).best_val_f1;
}

std::vector<MetaPath> unique_paths(const std::vector<MetaPath>& paths) {
  std::vector<MetaPath> out;
  for (const auto& p : paths)
    if (std::find(out.begin(), out.end(), p) == out.end()) out.push_back(p);
  return out;
}

struct Branch {
  MetaPath prefix;
  Target target;
  MetaPath best;
  double best_f1 = -1.0;
};

struct SearchOutcome {
  std::vector<MetaPath> best;
  SearchTrace trace;
};

SearchOutcome run_search(const HetGraph& g, const LabeledSplit& split, const SearchConfig& cfg, int beam,
                         int positive_class) {
  cfg.validate();
  if (g.num_relations() == 0) throw SearchError("graph has no relations");
  const NodeTargets initial = training_targets(split, positive_class);
  const auto pos = num_positive(Target{initial});
  if (pos == 0 || pos == initial.size())
    throw SearchError("training labels for class '" + split.class_names.at(positive_class) +
                      "' are degenerate (need both positive and negative nodes)");

  SearchOutcome out;
  out.trace.task = "class " + split.class_names.at(positive_class) + " vs rest";
  std::vector<Branch> open{Branch{{}, Target{initial}, {}, -1.0}};
  std::vector<Branch> finished;
  std::map<MetaPath, double> f1_cache;

  for (int depth = 1; depth <= cfg.max_length && !open.empty(); ++depth) {
    struct Job {
      std::size_t branch;
      RelationId relation;
      ScoreResult result;
    };
    std::vector<Job> jobs;
    for (std::size_t b = 0; b < open.size(); ++b) {
      const auto frontier = frontier_types(g, open[b].target);
      for (RelationId r = 0; r < g.num_relations(); ++r) {
        const auto& src = g.source_types(r);
        const bool touches = std::any_of(src.begin(), src.end(), [&](NodeTypeId t) {
          return std::binary_search(frontier.begin(), frontier.end(), t);
        });
        if (touches) jobs.push_back({b, r, {}});
      }
    }
    if (jobs.empty()) {
      out.trace.stop_reason = "no relation leaves the frontier at depth " + std::to_string(depth);
      break;
    }

    parallel_for(jobs.size(), cfg.workers, [&](std::size_t k) {
      ScorerConfig sc = cfg.scorer;
      sc.seed = derive_seed(cfg.seed, {static_cast<std::uint64_t>(depth), jobs[k].branch});
      try {
        jobs[k].result = score_relation(g, jobs[k].relation, open[jobs[k].branch].target, sc);
      } catch (const std::exception& e) {
        throw SearchError("depth " + std::to_string(depth) + ", relation " + g.relation_name(jobs[k].relation) +
                          ": " + e.what());
      }
    });

    std::vector<std::size_t> order(jobs.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (jobs[a].result.score != jobs[b].result.score) return jobs[a].result.score < jobs[b].result.score;
      if (jobs[a].branch != jobs[b].branch) return jobs[a].branch < jobs[b].branch;
      return jobs[a].relation < jobs[b].relation;
    });
    order.resize(std::min<std::size_t>(order.size(), static_cast<std::size_t>(beam)));
    // a branch with no child left in the beam retires with its best prefix
    for (std::size_t b = 0; b < open.size(); ++b)
      if (std::none_of(order.begin(), order.end(), [&](std::size_t k) { return jobs[k].branch == b; }))
        finished.push_back(open[b]);

    std::vector<Branch> next;
    for (std::size_t k : order) {
      const Job& job = jobs[k];
      const Branch& parent = open[job.branch];
      Branch child;
      child.prefix = parent.prefix;
      child.prefix.relations.push_back(job.relation);
      child.best = parent.best;
      child.best_f1 = parent.best_f1;

      auto cached = f1_cache.find(child.prefix);
      const double f1 = cached != f1_cache.end() ? cached->second : validation_f1(g, split, cfg, {child.prefix});
      f1_cache[child.prefix] = f1;
      if (f1 > child.best_f1) {
        child.best_f1 = f1;
        child.best = child.prefix;
      }

      IterationRecord rec;
      rec.depth = depth;
      rec.branch = static_cast<int>(job.branch);
      for (const auto& j : jobs)
        if (j.branch == job.branch) rec.scores.push_back({j.relation, j.result.score});
      rec.chosen = job.relation;
      rec.prefix = child.prefix;
      rec.val_f1 = f1;
      rec.target_units = num_units(parent.target);
      rec.target_positive = num_positive(parent.target);
      out.trace.iterations.push_back(std::move(rec));
      spdlog::info("[{}] depth {} branch {}: {} (score {:.4f}) val F1 {:.4f}", out.trace.task, depth, job.branch,
                   to_string(child.prefix, g), job.result.score, f1);

      if (depth == cfg.max_length) {
        finished.push_back(std::move(child));
        continue;
      }
      // evolve the supervision for the next relation
      if (const auto* nodes = std::get_if<NodeTargets>(&parent.target)) {
        child.target = generate_bags(g, job.relation, *nodes);
      } else {
        const NodeTargets relabeled = relabel(g, job.relation, parent.target, job.result, cfg.scorer);
        child.target = generate_bags(g, job.relation, relabeled);
      }
      if (num_positive(child.target) == 0) {
        spdlog::info("[{}] {}: no positive bag left, branch stops", out.trace.task, to_string(child.prefix, g));
        if (out.trace.stop_reason.empty())
          out.trace.stop_reason = "no positive bag after " + to_string(child.prefix, g);
        finished.push_back(std::move(child));
        continue;
      }
      next.push_back(std::move(child));
    }
    open = std::move(next);
  }
  if (out.trace.stop_reason.empty()) out.trace.stop_reason = "reached max length";

  // beam order first (finished branches were ranked when they stopped)
  std::vector<Branch> all = std::move(finished);
  for (auto& b : open) all.push_back(std::move(b));
  std::stable_sort(all.begin(), all.end(), [](const Branch& a, const Branch& b) { return a.best_f1 > b.best_f1; });
  for (const auto& b : all)
    if (!b.best.empty()) out.best.push_back(b.best);
  out.best = unique_paths(out.best);
  if (out.best.size() > static_cast<std::size_t>(beam)) out.best.resize(static_cast<std::size_t>(beam));
  if (out.best.empty()) throw SearchError("search produced no meta-path");
  out.trace.best = out.best;
  out.trace.best_val_f1 = all.front().best_f1;
  return out;
}

int binary_positive(const LabeledSplit& split, const SearchConfig& cfg) {
  if (split.num_classes() < 2) throw SearchError("need at least two classes");
  const int pos = cfg.positive_class < 0 ? 1 : cfg.positive_class;
  if (pos >= split.num_classes()) throw SearchError("positive class index " + std::to_string(pos) + " out of range");
  return pos;
}

}  // namespace

SingleResult learn_single(const HetGraph& g, const LabeledSplit& split, const SearchConfig& config) {
  auto found = run_search(g, split, config, 1, binary_positive(split, config));
  SingleResult res;
  res.path = found.best.front();
  res.trace = std::move(found.trace);
  res.model = train(g, {res.path}, split, budget(config, {res.path}, true));
  return res;
}

std::vector<MetaPath> prune(const std::vector<MetaPath>& paths, const HetGraph& g, const LabeledSplit& split,
                            const SearchConfig& config, std::vector<PruneRecord>* log) {
  std::vector<MetaPath> current = unique_paths(paths);
  if (current.size() <= 1) return current;

  std::vector<std::pair<double, MetaPath>> single;
  for (const auto& p : current) single.emplace_back(validation_f1(g, split, config, {p}), p);
  // weakest first; among equals the longer path is tried first
  std::stable_sort(single.begin(), single.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return a.second.length() > b.second.length();
  });

  double cur_f1 = validation_f1(g, split, config, current);
  for (const auto& [ind_f1, p] : single) {
    if (current.size() == 1) break;
    std::vector<MetaPath> reduced;
    for (const auto& q : current)
      if (q != p) reduced.push_back(q);
    const double f = validation_f1(g, split, config, reduced);
    const bool drop = f >= cur_f1;
    if (log) log->push_back({p, ind_f1, cur_f1, f, drop});
    spdlog::info("prune: {} individual F1 {:.4f}, without it {:.4f} (current {:.4f}) -> {}", to_string(p, g), ind_f1,
                 f, cur_f1, drop ? "drop" : "keep");
    if (drop) {
      current = std::move(reduced);
      cur_f1 = f;
    }
  }
  return current;
}

BeamResult learn_beam(const HetGraph& g, const LabeledSplit& split, const SearchConfig& config) {
  auto found = run_search(g, split, config, config.beam, binary_positive(split, config));
  BeamResult res;
  res.paths = config.prune ? prune(found.best, g, split, config, &res.prune) : found.best;
  res.trace = std::move(found.trace);
  res.model = train(g, res.paths, split, budget(config, res.paths, true));
  return res;
}

LearnResult learn(const HetGraph& g, const LabeledSplit& split, const SearchConfig& config) {
  LearnResult res;
  if (split.num_classes() == 2) {
    auto beam = learn_beam(g, split, config);
    res.paths = std::move(beam.paths);
    res.model = std::move(beam.model);
    res.traces.push_back(std::move(beam.trace));
    res.prune = std::move(beam.prune);
    return res;
  }
  if (split.num_classes() < 2) throw SearchError("need at least two classes");
  std::vector<MetaPath> all;
  for (int c = 0; c < split.num_classes(); ++c) {
    SearchConfig per = config;
    per.seed = derive_seed(config.seed, {static_cast<std::uint64_t>(c)});
    auto found = run_search(g, split, per, config.beam, c);
    all.insert(all.end(), found.best.begin(), found.best.end());
    res.traces.push_back(std::move(found.trace));
  }
  all = unique_paths(all);
  res.paths = config.prune ? prune(all, g, split, config, &res.prune) : all;
  res.model = train(g, res.paths, split, budget(config, res.paths, true));
  return res;
}

nlohmann::json to_json(const MetaPath& mp, const HetGraph& g) {
  nlohmann::json names = nlohmann::json::array();
  for (RelationId r : mp.relations) names.push_back(g.relation_name(r));
  return names;
}

nlohmann::json to_json(const SearchTrace& trace, const HetGraph& g) {
  nlohmann::json iters = nlohmann::json::array();
  for (const auto& it : trace.iterations) {
    nlohmann::json scores = nlohmann::json::object();
    for (const auto& s : it.scores) scores[g.relation_name(s.relation)] = s.score;
    iters.push_back({{"depth", it.depth},
                     {"branch", it.branch},
                     {"scores", std::move(scores)},
                     {"chosen", g.relation_name(it.chosen)},
                     {"prefix", to_json(it.prefix, g)},
                     {"val_f1", it.val_f1},
                     {"target_units", it.target_units},
                     {"target_positive", it.target_positive}});
  }
  nlohmann::json best = nlohmann::json::array();
  for (const auto& mp : trace.best) best.push_back(to_json(mp, g));
  return {{"task", trace.task},
          {"iterations", std::move(iters)},
          {"best", std::move(best)},
          {"best_val_f1", trace.best_val_f1},
          {"stop_reason", trace.stop_reason}};
}

nlohmann::json to_json(const std::vector<PruneRecord>& log, const HetGraph& g) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : log)
    out.push_back({{"path", to_json(r.removed, g)},
                   {"individual_f1", r.individual_f1},
                   {"f1_before", r.f1_before},
                   {"f1_without", r.f1_without},
                   {"dropped", r.dropped}});
  return out;
}

}  // namespace metapath
