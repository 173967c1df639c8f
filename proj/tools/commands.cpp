#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "metapath/parallel.hpp"

namespace fs = std::filesystem;

namespace metapath::cli {

namespace {

void write_json(const fs::path& file, const nlohmann::json& j) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << j.dump(2) << '\n';
}

nlohmann::json read_json(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + file.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(file.string() + ": " + e.what());
  }
}

void ensure_dir(const std::string& dir) {
  if (dir.empty()) throw UsageError("--out is required");
  fs::create_directories(dir);
}

std::string join_path(const MetaPath& p, const HetGraph& g) {
  std::string s;
  for (std::size_t k = 0; k < p.relations.size(); ++k) s += (k ? ">" : "") + g.relation_name(p.relations[k]);
  return s;
}

nlohmann::json paths_json(const std::vector<MetaPath>& paths, const HetGraph& g) {
  auto arr = nlohmann::json::array();
  for (const auto& p : paths) arr.push_back(to_json(p, g));
  return arr;
}

nlohmann::json history_json(const TrainResult& res) {
  auto hist = nlohmann::json::array();
  for (const auto& e : res.history)
    hist.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}, {"val_f1", e.val_f1}});
  return hist;
}

nlohmann::json split_json(const SplitMetrics& s) {
  auto cm = nlohmann::json::array();
  for (Eigen::Index i = 0; i < s.confusion.rows(); ++i) {
    auto row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < s.confusion.cols(); ++j) row.push_back(s.confusion(i, j));
    cm.push_back(row);
  }
  return {{"f1_macro", s.f1}, {"count", s.count}, {"confusion", cm}};
}

void log_metrics(const Metrics& m) {
  spdlog::info("F1-macro train {:.4f} ({} nodes), validation {:.4f} ({}), test {:.4f} ({})", m.train.f1, m.train.count,
               m.validation.f1, m.validation.count, m.test.f1, m.test.count);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(tok);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

LoadedGraph load_data(const DataOptions& opts) {
  if (opts.dir.empty()) throw UsageError("--data is required");
  LoadOptions lo;
  lo.ratios = opts.ratios;
  lo.split_seed = opts.split_seed;
  auto loaded = load_graph_dir(opts.dir, lo);
  if (opts.no_node_features) loaded.graph = loaded.graph.without_features();
  spdlog::info("loaded {}: {} nodes, {} relations, {} edges, {} labeled, {} classes{}", opts.dir,
               loaded.graph.num_nodes(), loaded.graph.num_relations(), loaded.graph.num_edges(),
               loaded.split.entries.size(), loaded.split.num_classes(),
               opts.no_node_features ? " (features zeroed)" : "");
  return loaded;
}

MetaPath parse_meta_path(const std::string& text, const HetGraph& g) {
  MetaPath p;
  std::string tok;
  std::stringstream ss(text);
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    try {
      p.relations.push_back(g.relation_id(tok));
    } catch (const GraphError& e) {
      throw UsageError(e.what());
    }
  }
  if (p.empty()) throw UsageError("empty meta-path '" + text + "'");
  return p;
}

std::vector<MetaPath> read_meta_paths(const fs::path& file, const HetGraph& g) {
  const auto j = read_json(file);
  if (!j.contains("meta_paths") || !j["meta_paths"].is_array())
    throw std::runtime_error(file.string() + ": missing 'meta_paths' array");
  std::vector<MetaPath> out;
  for (const auto& arr : j["meta_paths"]) {
    MetaPath p;
    for (const auto& name : arr) p.relations.push_back(g.relation_id(name.get<std::string>()));
    out.push_back(p);
  }
  return out;
}

nlohmann::json metrics_json(const Metrics& m, const MPGNNModel& model, const HetGraph& g) {
  return {{"class_names", model.class_names},
          {"meta_paths", paths_json(model.meta_paths(), g)},
          {"train", split_json(m.train)},
          {"validation", split_json(m.validation)},
          {"test", split_json(m.test)}};
}

// ---------------------------------------------------------------------------

std::vector<fs::path> cmd_generate(const GenerateOptions& opts) {
  opts.spec.validate();
  ensure_dir(opts.out);
  const auto d = syn::generate(opts.spec);
  syn::write_dataset(opts.out, d, opts.spec);
  std::size_t pos = 0;
  for (const auto& t : d.labels) pos += static_cast<std::size_t>(t.label);
  spdlog::info("generated {} nodes, {} edges, {} positives; planted path {}", d.graph.num_nodes(),
               d.graph.num_edges(), pos, join_path(d.meta_path(), d.graph));
  const fs::path dir(opts.out);
  return {dir / "nodes.tsv", dir / "edges.tsv", dir / "labels.tsv", dir / "gt_path.json"};
}

std::vector<fs::path> cmd_learn(const LearnOptions& opts) {
  if (opts.mode != "beam" && opts.mode != "single") throw UsageError("--search must be 'beam' or 'single'");
  opts.search.validate();
  ensure_dir(opts.out);
  const auto [g, split] = load_data(opts.data);

  LearnResult res;
  if (opts.mode == "single") {
    if (split.num_classes() != 2) throw UsageError("--search single needs binary labels");
    auto single = learn_single(g, split, opts.search);
    res.paths = {single.path};
    res.model = std::move(single.model);
    res.traces = {std::move(single.trace)};
  } else {
    res = learn(g, split, opts.search);
  }
  const auto metrics = evaluate(res.model.model, g, split);
  log_metrics(metrics);
  for (const auto& p : res.paths) spdlog::info("meta-path: {}", to_string(p, g));

  const fs::path dir(opts.out);
  write_json(dir / "mp.json", {{"meta_paths", paths_json(res.paths, g)}, {"class_names", split.class_names}});
  save_checkpoint(dir / "model.json", res.model.model, g);
  auto traces = nlohmann::json::array();
  for (const auto& t : res.traces) traces.push_back(to_json(t, g));
  write_json(dir / "trace.json", {{"search", opts.mode},
                                  {"traces", traces},
                                  {"prune", to_json(res.prune, g)},
                                  {"final_model",
                                   {{"best_epoch", res.model.best_epoch},
                                    {"best_val_f1", res.model.best_val_f1},
                                    {"epochs_run", res.model.history.size()}}},
                                  {"metrics", metrics_json(metrics, res.model.model, g)}});
  return {dir / "mp.json", dir / "model.json", dir / "trace.json"};
}

std::vector<fs::path> cmd_train(const TrainOptions& opts) {
  ensure_dir(opts.out);
  const auto [g, split] = load_data(opts.data);
  std::vector<MetaPath> paths;
  if (!opts.paths_file.empty()) paths = read_meta_paths(opts.paths_file, g);
  for (const auto& s : opts.paths) paths.push_back(parse_meta_path(s, g));
  if (paths.empty()) throw UsageError("give meta-paths with --paths FILE or --path r1,r2,...");

  const auto res = train(g, paths, split, opts.train);
  const auto metrics = evaluate(res.model, g, split);
  log_metrics(metrics);
  const fs::path dir(opts.out);
  save_checkpoint(dir / "model.json", res.model, g);
  write_json(dir / "history.json", {{"meta_paths", paths_json(paths, g)},
                                    {"best_epoch", res.best_epoch},
                                    {"best_val_f1", res.best_val_f1},
                                    {"history", history_json(res)}});
  return {dir / "model.json", dir / "history.json"};
}

std::vector<fs::path> cmd_evaluate(const EvaluateOptions& opts) {
  if (opts.model.empty()) throw UsageError("--model is required");
  ensure_dir(opts.out);
  const auto [g, split] = load_data(opts.data);
  const auto model = load_checkpoint(opts.model, g);
  if (model.num_classes() != split.num_classes())
    throw ModelError(fmt::format("checkpoint has {} classes, labels have {}", model.num_classes(),
                                 split.num_classes()));
  if (model.class_names != split.class_names)
    throw ModelError("checkpoint class names do not match the label file");
  const auto metrics = evaluate(model, g, split);
  log_metrics(metrics);
  const auto file = fs::path(opts.out) / "metrics.json";
  write_json(file, metrics_json(metrics, model, g));
  return {file};
}

// ---------------------------------------------------------------------------
// grid

std::string format_row(const GridRow& r) {
  return fmt::format("{},{},{},{},{},{},{:.6f},{:.3f}", r.relations, r.shared, r.gt_length, r.seed, r.recovered,
                     r.exact_match ? 1 : 0, r.f1, r.seconds);
}

GridRow parse_row(const std::string& line) {
  const auto f = split_csv(line);
  if (f.size() != 8) throw std::runtime_error("malformed grid row: " + line);
  GridRow r;
  try {
    r.relations = std::stoi(f[0]);
    r.shared = std::stoi(f[1]);
    r.gt_length = std::stoi(f[2]);
    r.seed = std::stoull(f[3]);
    r.recovered = f[4];
    r.exact_match = f[5] == "1";
    r.f1 = std::stod(f[6]);
    r.seconds = std::stod(f[7]);
  } catch (const std::logic_error&) {
    throw std::runtime_error("malformed grid row: " + line);
  }
  return r;
}

GridRow run_cell(int relations, int shared, int gt_length, std::uint64_t seed, const GridOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  syn::SynSpec spec;
  spec.num_relations = relations;
  spec.num_shared = shared;
  spec.gt_length = gt_length;
  spec.nodes_per_type = opts.nodes_per_type;
  spec.density = opts.density;
  spec.seed = seed;
  const auto d = syn::generate(spec);

  SearchConfig cfg = opts.search;
  cfg.seed = seed;
  cfg.workers = 1;
  std::vector<MetaPath> paths;
  MPGNNModel model;
  if (opts.mode == "single") {
    auto res = learn_single(d.graph, d.split, cfg);
    paths = {res.path};
    model = std::move(res.model.model);
  } else {
    auto res = learn(d.graph, d.split, cfg);
    paths = res.paths;
    model = std::move(res.model.model);
  }
  GridRow row;
  row.relations = relations;
  row.shared = shared;
  row.gt_length = gt_length;
  row.seed = seed;
  for (std::size_t k = 0; k < paths.size(); ++k) row.recovered += (k ? "|" : "") + join_path(paths[k], d.graph);
  row.exact_match = paths.size() == 1 && paths[0] == d.meta_path();
  row.f1 = evaluate(model, d.graph, d.split).test.f1;
  row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return row;
}

std::vector<fs::path> cmd_grid(const GridOptions& opts) {
  if (opts.out.empty()) throw UsageError("--out is required");
  if (opts.mode != "beam" && opts.mode != "single") throw UsageError("--search must be 'beam' or 'single'");
  if (opts.workers < 1) throw UsageError("--workers must be >= 1");
  opts.search.validate();
  for (int r : opts.relations)
    for (int s : opts.shared)
      if (s < 0 || s > r) throw UsageError(fmt::format("--shared {} is out of range for {} relations", s, r));

  using Key = std::tuple<int, int, int, std::uint64_t>;
  std::vector<Key> cells;
  for (int r : opts.relations)
    for (int s : opts.shared)
      for (int l : opts.lengths)
        for (auto seed : opts.seeds) cells.emplace_back(r, s, l, seed);

  // resume: keep every complete row already on disk
  const fs::path out(opts.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  std::map<Key, GridRow> done;
  if (fs::exists(out)) {
    std::ifstream in(out);
    std::string line;
    std::getline(in, line);
    if (line != kGridHeader) throw std::runtime_error(out.string() + " exists but is not a grid file");
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      try {
        const auto row = parse_row(line);
        done[{row.relations, row.shared, row.gt_length, row.seed}] = row;
      } catch (const std::runtime_error&) {
        spdlog::warn("ignoring incomplete grid row '{}'", line);
      }
    }
  }
  std::vector<Key> todo;
  for (const auto& c : cells)
    if (!done.count(c)) todo.push_back(c);
  spdlog::info("grid: {} cells, {} already done, {} to run on {} workers", cells.size(), cells.size() - todo.size(),
               todo.size(), opts.workers);

  {
    // rewrite cleanly (drops partial lines) and append as cells finish
    std::ofstream f(out, std::ios::binary | std::ios::trunc);
    f << kGridHeader << '\n';
    for (const auto& [k, row] : done) f << format_row(row) << '\n';
  }
  std::mutex mu;
  parallel_for(todo.size(), opts.workers, [&](std::size_t i) {
    const auto [r, s, l, seed] = todo[i];
    const auto row = run_cell(r, s, l, seed, opts);
    std::lock_guard lock(mu);
    std::ofstream f(out, std::ios::binary | std::ios::app);
    f << format_row(row) << '\n';
    done[todo[i]] = row;
    spdlog::info("grid cell R={} S={} L={} seed={}: {} exact={} F1 {:.4f} ({:.1f}s)", r, s, l, seed, row.recovered,
                 row.exact_match, row.f1, row.seconds);
  });

  // final file in grid order regardless of completion order
  std::ofstream f(out, std::ios::binary | std::ios::trunc);
  f << kGridHeader << '\n';
  for (const auto& c : cells) f << format_row(done.at(c)) << '\n';
  return {out};
}

// ---------------------------------------------------------------------------
// report

std::vector<fs::path> cmd_report(const ReportOptions& opts) {
  if (opts.grid.empty() && opts.trace.empty()) throw UsageError("give --grid FILE and/or --trace FILE");
  std::vector<fs::path> written;
  if (!opts.grid.empty()) {
    std::ifstream in(opts.grid);
    if (!in) throw std::runtime_error("cannot open " + opts.grid);
    std::string line;
    std::getline(in, line);
    if (line != kGridHeader) throw std::runtime_error(opts.grid + " is not a grid file");
    std::map<std::tuple<int, int, int>, std::vector<GridRow>> cells;
    while (std::getline(in, line))
      if (!line.empty()) {
        const auto row = parse_row(line);
        cells[{row.relations, row.shared, row.gt_length}].push_back(row);
      }
    std::string csv = "relations,shared,gt_length,runs,exact_rate,f1_mean,f1_min,seconds_mean\n";
    fmt::print("{:>9} {:>6} {:>9} {:>4} {:>10} {:>8} {:>8} {:>9}\n", "relations", "shared", "gt_length", "runs",
               "exact_rate", "f1_mean", "f1_min", "seconds");
    std::size_t total = 0, exact = 0;
    for (const auto& [key, rows] : cells) {
      double f1_sum = 0, f1_min = 1, sec = 0;
      std::size_t hits = 0;
      for (const auto& r : rows) {
        f1_sum += r.f1;
        f1_min = std::min(f1_min, r.f1);
        sec += r.seconds;
        hits += r.exact_match;
      }
      const double n = static_cast<double>(rows.size());
      total += rows.size();
      exact += hits;
      const auto [rel, sh, len] = key;
      csv += fmt::format("{},{},{},{},{:.4f},{:.4f},{:.4f},{:.2f}\n", rel, sh, len, rows.size(), hits / n, f1_sum / n,
                         f1_min, sec / n);
      fmt::print("{:>9} {:>6} {:>9} {:>4} {:>10.2f} {:>8.4f} {:>8.4f} {:>9.1f}\n", rel, sh, len, rows.size(), hits / n,
                 f1_sum / n, f1_min, sec / n);
    }
    fmt::print("overall exact-match rate: {}/{}\n", exact, total);
    if (!opts.out.empty()) {
      const fs::path out(opts.out);
      if (out.has_parent_path()) fs::create_directories(out.parent_path());
      std::ofstream f(out, std::ios::binary);
      if (!f) throw std::runtime_error("cannot write " + opts.out);
      f << csv;
      written.push_back(out);
    }
  }
  if (!opts.trace.empty()) {
    const auto j = read_json(opts.trace);
    for (const auto& t : j.at("traces")) {
      fmt::print("[{}] stop: {}\n", t.value("task", ""), t.value("stop_reason", ""));
      for (const auto& it : t.at("iterations")) {
        std::string scores;
        for (const auto& [rel, score] : it.at("scores").items())
          scores += fmt::format(" {}={:.4f}", rel, score.get<double>());
        fmt::print("  depth {} branch {}: {} (val F1 {:.4f}) |{}\n", it.at("depth").get<int>(),
                   it.at("branch").get<int>(), it.at("chosen").get<std::string>(), it.at("val_f1").get<double>(),
                   scores);
      }
    }
    if (j.contains("prune"))
      for (const auto& p : j.at("prune"))
        fmt::print("prune {}: {}\n", p.at("path").dump(), p.at("dropped").get<bool>() ? "dropped" : "kept");
  }
  return written;
}

}  // namespace metapath::cli
