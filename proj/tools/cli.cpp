#include "cli.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>

#include <CLI11.hpp>
#include <fmt/chrono.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "commands.hpp"

#ifndef MPGNN_VERSION
#define MPGNN_VERSION "0.0.0"
#endif
#ifndef MPGNN_GIT_REV
#define MPGNN_GIT_REV "unknown"
#endif

namespace fs = std::filesystem;

namespace metapath::cli {

namespace {

bool is_flag(const CLI::Option* o) { return o->get_expected_max() == 0; }

bool is_plumbing(const CLI::Option* o) {
  const auto& names = o->get_lnames();
  return names.empty() || names[0] == "help" || names[0] == "config";
}

nlohmann::json typed(const std::string& s) {
  if (s == "true" || s == "false") return s == "true";
  try {
    auto j = nlohmann::json::parse(s);
    if (j.is_number()) return j;
  } catch (const nlohmann::json::exception&) {
  }
  return s;
}

/// Every option of `app` with the value it ended up with (flag, env, config or default).
nlohmann::json effective_config(const CLI::App* app) {
  nlohmann::json out = nlohmann::json::object();
  for (const CLI::Option* o : app->get_options()) {
    if (is_plumbing(o)) continue;
    const auto& name = o->get_lnames()[0];
    if (is_flag(o)) {
      out[name] = o->count() > 0 ? o->as<bool>() : false;
      continue;
    }
    auto vals = o->results();
    if (vals.empty()) {
      if (o->get_default_str().empty()) continue;
      vals = {o->get_default_str()};
    }
    if (o->get_items_expected_max() > 1) {
      auto arr = nlohmann::json::array();
      for (const auto& v : vals) arr.push_back(typed(v));
      out[name] = arr;
    } else {
      out[name] = typed(vals.back());
    }
  }
  return out;
}

/// JSON config files: a flat object of option names, or a run manifest (its "config").
/// Keys belong to whichever subcommand was given on the command line.
class JsonConfig : public CLI::Config {
 public:
  explicit JsonConfig(const CLI::App* root) : root_(root) {}

  std::string to_config(const CLI::App* app, bool, bool, std::string) const override {
    return effective_config(app).dump(2);
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(input);
    } catch (const nlohmann::json::exception& e) {
      throw CLI::ConversionError("config file is not valid JSON: " + std::string(e.what()));
    }
    if (j.is_object() && j.value("format", "") == "mpgnn-manifest") j = j.at("config");
    if (!j.is_object()) throw CLI::ConversionError("config file must hold a JSON object");
    const auto subs = root_->get_subcommands();
    if (subs.empty()) throw CLI::ConversionError("--config needs a subcommand");
    std::vector<CLI::ConfigItem> items;
    for (const auto& [key, value] : j.items()) {
      if (value.is_null()) continue;
      CLI::ConfigItem item;
      item.parents = {subs.front()->get_name()};
      item.name = key;
      const auto add = [&](const nlohmann::json& v) {
        item.inputs.push_back(v.is_string() ? v.get<std::string>() : v.dump());
      };
      if (value.is_array())
        for (const auto& v : value) add(v);
      else if (value.is_object())
        throw CLI::ConversionError("config key '" + key + "' must not be an object");
      else
        add(value);
      items.push_back(std::move(item));
    }
    return items;
  }

 private:
  const CLI::App* root_;
};

std::string fnv1a(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  std::uint64_t h = 1469598103934665603ULL;
  char buf[1 << 14];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
  }
  return fmt::format("{:016x}", h);
}

std::string utc_now() { return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(std::time(nullptr))); }

void write_manifest(const fs::path& file, const CLI::App* sub, const std::string& started,
                    const std::vector<fs::path>& outputs) {
  auto outs = nlohmann::json::array();
  for (const auto& p : outputs)
    outs.push_back({{"path", p.string()}, {"bytes", fs::file_size(p)}, {"fnv1a64", fnv1a(p)}});
  const auto config = effective_config(sub);
  nlohmann::json m = {{"format", "mpgnn-manifest"},
                      {"command", sub->get_name()},
                      {"version", MPGNN_VERSION},
                      {"revision", MPGNN_GIT_REV},
                      {"seed", config.value("seed", nlohmann::json())},
                      {"config", config},
                      {"started_at", started},
                      {"finished_at", utc_now()},
                      {"outputs", outs}};
  std::ofstream out(file, std::ios::binary);
  out << m.dump(2) << '\n';
}

void setup_logging(const std::string& level) {
  auto logger = spdlog::get("mpgnn");
  if (!logger) logger = spdlog::stderr_color_mt("mpgnn");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%H:%M:%S] [%^%l%$] %v");
  spdlog::set_level(spdlog::level::from_str(level));
}

// -- option groups ----------------------------------------------------------

void add_data_options(CLI::App* sub, DataOptions& d) {
  sub->add_option("--data", d.dir, "Directory with nodes.tsv, edges.tsv, labels.tsv")->required();
  sub->add_option("--split-seed", d.split_seed, "Seed for the stratified split when labels.tsv has none");
  sub->add_option("--train-ratio", d.ratios.train);
  sub->add_option("--val-ratio", d.ratios.validation);
  sub->add_option("--test-ratio", d.ratios.test);
  sub->add_flag("--no-node-features", d.no_node_features, "Zero every node feature (ablation)");
}

void add_train_options(CLI::App* sub, TrainConfig& t, std::string& activation) {
  sub->add_option("--epochs", t.epochs, "Epochs of the final model");
  sub->add_option("--hidden", t.hidden, "Hidden units per layer");
  sub->add_option("--lr", t.lr, "Adam learning rate of the MP-GNN");
  sub->add_option("--patience", t.patience, "Epochs without a new best checkpoint before stopping");
  sub->add_option("--activation", activation)->check(CLI::IsMember({"relu", "identity"}));
}

void add_search_options(CLI::App* sub, SearchConfig& s, std::string& activation, bool with_seed) {
  sub->add_option("--max-length", s.max_length, "Longest meta-path considered");
  sub->add_option("--beam", s.beam, "Beam width");
  sub->add_option("--search-epochs", s.search_epochs, "Epochs for every prefix and pruning model");
  sub->add_option("--restarts", s.scorer.restarts, "Random restarts of the relation scorer");
  sub->add_option("--scorer-lr", s.scorer.lr);
  sub->add_option("--scorer-steps", s.scorer.max_steps);
  sub->add_option("--scorer-patience", s.scorer.patience);
  sub->add_option("--positive-class", s.positive_class, "Positive class index for binary data (-1: class 1)");
  add_train_options(sub, s.train, activation);
  if (with_seed) sub->add_option("--seed", s.seed);
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"Learn meta-paths and train MP-GNN node classifiers on heterogeneous graphs", "mpgnn"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  app.set_version_flag("--version", std::string(MPGNN_VERSION) + " (" + MPGNN_GIT_REV + ")");
  std::string log_level = "info";
  app.add_option("--log-level", log_level)
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

  // CLI11 only reads config files on the root app, so --config lives there and
  // subcommands fall through to it.
  app.config_formatter(std::make_shared<JsonConfig>(&app));
  app.set_config("--config", "", "JSON file with option values (or a manifest.json to replay a run)");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.fallthrough();

  GenerateOptions gen;
  auto* generate = app.add_subcommand("generate", "Write a synthetic dataset with a planted meta-path");
  generate->option_defaults()->always_capture_default();
  generate->add_option("--relations", gen.spec.num_relations);
  generate->add_option("--shared", gen.spec.num_shared, "Relations valid between more than one type pair");
  generate->add_option("--gt-length", gen.spec.gt_length);
  generate->add_option("--nodes-per-type", gen.spec.nodes_per_type);
  generate->add_option("--density", gen.spec.density, "Expected out-degree per node and valid relation");
  generate->add_option("--min-positive", gen.spec.min_positive);
  generate->add_option("--max-positive", gen.spec.max_positive);
  generate->add_flag("--attribute-gate", gen.spec.attribute_gate, "First hop must also carry attr = 1");
  generate->add_option("--attribute-rate", gen.spec.attribute_rate);
  generate->add_option("--train-ratio", gen.spec.ratios.train);
  generate->add_option("--val-ratio", gen.spec.ratios.validation);
  generate->add_option("--test-ratio", gen.spec.ratios.test);
  generate->add_option("--seed", gen.spec.seed);
  generate->add_option("--out", gen.out, "Output directory")->required();

  LearnOptions lrn;
  std::string learn_act = "relu";
  bool learn_no_prune = false;
  auto* learn = app.add_subcommand("learn", "Search meta-paths and train the final MP-GNN");
  learn->option_defaults()->always_capture_default();
  add_data_options(learn, lrn.data);
  add_search_options(learn, lrn.search, learn_act, true);
  learn->add_option("--search", lrn.mode, "beam or single")->check(CLI::IsMember({"beam", "single"}));
  learn->add_flag("--no-prune", learn_no_prune, "Keep every branch's best meta-path");
  learn->add_option("--workers", lrn.search.workers, "Threads for relation scoring")->envname("MPGNN_WORKERS");
  learn->add_option("--out", lrn.out, "Output directory")->required();

  TrainOptions trn;
  std::string train_act = "relu";
  auto* trainc = app.add_subcommand("train", "Train an MP-GNN on given meta-paths");
  trainc->option_defaults()->always_capture_default();
  add_data_options(trainc, trn.data);
  add_train_options(trainc, trn.train, train_act);
  trainc->add_option("--seed", trn.train.seed);
  trainc->add_option("--paths", trn.paths_file, "mp.json written by learn");
  trainc->add_option("--path", trn.paths, "Comma-separated relation names; repeatable");
  trainc->add_option("--out", trn.out, "Output directory")->required();

  EvaluateOptions ev;
  auto* evaluatec = app.add_subcommand("evaluate", "F1-macro and confusion matrices of a checkpoint");
  evaluatec->option_defaults()->always_capture_default();
  add_data_options(evaluatec, ev.data);
  evaluatec->add_option("--model", ev.model, "Checkpoint (model.json)")->required();
  evaluatec->add_option("--out", ev.out, "Output directory for metrics.json")->required();

  GridOptions grd;
  std::string grid_act = "relu";
  bool grid_no_prune = false;
  auto* grid = app.add_subcommand("grid", "Synthetic recovery experiment over a parameter grid");
  grid->option_defaults()->always_capture_default();
  grid->add_option("--relations", grd.relations)->delimiter(',');
  grid->add_option("--shared", grd.shared)->delimiter(',');
  grid->add_option("--gt-lengths", grd.lengths)->delimiter(',');
  grid->add_option("--seeds", grd.seeds)->delimiter(',');
  grid->add_option("--nodes-per-type", grd.nodes_per_type);
  grid->add_option("--density", grd.density);
  grid->add_option("--search", grd.mode, "single or beam")->check(CLI::IsMember({"beam", "single"}));
  add_search_options(grid, grd.search, grid_act, false);
  grid->add_flag("--no-prune", grid_no_prune);
  grid->add_option("--workers", grd.workers, "Grid cells run concurrently")->envname("MPGNN_WORKERS");
  grid->add_option("--out", grd.out, "results.csv (resumed when it exists)")->required();

  ReportOptions rep;
  auto* report = app.add_subcommand("report", "Summarize a grid CSV and/or a learn trace");
  report->option_defaults()->always_capture_default();
  report->add_option("--grid", rep.grid, "results.csv from grid");
  report->add_option("--trace", rep.trace, "trace.json from learn");
  report->add_option("--out", rep.out, "Per-cell summary CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ConfigError& e) {
    // CLI11 words unknown keys as an INI problem
    const std::string what = e.what();
    const std::string prefix = "INI was not able to parse ";
    if (what.rfind(prefix, 0) != 0) {
      app.exit(e);
      return 2;
    }
    const auto key = what.substr(prefix.size());
    std::fprintf(stderr, "--config: unknown option '%s'\n", key.substr(key.find('.') + 1).c_str());
    return 2;
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  setup_logging(log_level);

  const auto started = utc_now();
  CLI::App* sub = app.get_subcommands().front();
  try {
    std::vector<fs::path> outputs;
    fs::path manifest;
    if (sub == generate) {
      outputs = cmd_generate(gen);
      manifest = fs::path(gen.out) / "manifest.json";
    } else if (sub == learn) {
      lrn.search.train.activation = parse_activation(learn_act);
      lrn.search.prune = !learn_no_prune;
      outputs = cmd_learn(lrn);
      manifest = fs::path(lrn.out) / "manifest.json";
    } else if (sub == trainc) {
      trn.train.activation = parse_activation(train_act);
      outputs = cmd_train(trn);
      manifest = fs::path(trn.out) / "manifest.json";
    } else if (sub == evaluatec) {
      outputs = cmd_evaluate(ev);
      manifest = fs::path(ev.out) / "manifest.json";
    } else if (sub == grid) {
      grd.search.train.activation = parse_activation(grid_act);
      grd.search.prune = !grid_no_prune;
      outputs = cmd_grid(grd);
      manifest = grd.out + ".manifest.json";
    } else {
      outputs = cmd_report(rep);
      if (!rep.out.empty()) manifest = rep.out + ".manifest.json";
    }
    if (!manifest.empty()) write_manifest(manifest, sub, started, outputs);
    return 0;
  } catch (const UsageError& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const SearchError& e) {
    spdlog::error("invalid configuration: {}", e.what());
    return 2;
  } catch (const syn::SpecError& e) {
    spdlog::error("invalid dataset spec: {}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
}

int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"mpgnn"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace metapath::cli
