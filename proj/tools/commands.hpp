#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "metapath/search.hpp"
#include "metapath/syngen.hpp"

namespace metapath::cli {

/// Bad flag values that survive parsing (maps to exit code 2).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct DataOptions {
  std::string dir;  // nodes.tsv, edges.tsv, labels.tsv
  std::uint64_t split_seed = 0;
  SplitRatios ratios;
  bool no_node_features = false;
};

LoadedGraph load_data(const DataOptions& opts);

struct GenerateOptions {
  syn::SynSpec spec;
  std::string out;
};

struct LearnOptions {
  DataOptions data;
  SearchConfig search;
  std::string mode = "beam";  // "beam" or "single"
  std::string out;
};

struct TrainOptions {
  DataOptions data;
  TrainConfig train;
  std::string paths_file;          // mp.json from `learn`
  std::vector<std::string> paths;  // comma-separated relation names
  std::string out;
};

struct EvaluateOptions {
  DataOptions data;
  std::string model;
  std::string out;
};

struct GridOptions {
  std::vector<int> relations{4, 8};
  std::vector<int> shared{0, 2};
  std::vector<int> lengths{2, 3};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  int nodes_per_type = 1000;
  double density = 1.0;
  std::string mode = "single";
  SearchConfig search;
  int workers = 1;  // cells run concurrently
  std::string out;
};

struct ReportOptions {
  std::string grid;
  std::string trace;
  std::string out;
};

struct GridRow {
  int relations = 0;
  int shared = 0;
  int gt_length = 0;
  std::uint64_t seed = 0;
  std::string recovered;
  bool exact_match = false;
  double f1 = 0.0;
  double seconds = 0.0;
};

inline constexpr const char* kGridHeader = "relations,shared,gt_length,seed,recovered,exact_match,f1,seconds";

std::string format_row(const GridRow& row);
GridRow parse_row(const std::string& line);
/// Runs one grid cell: generate, search, evaluate on the test split.
GridRow run_cell(int relations, int shared, int gt_length, std::uint64_t seed, const GridOptions& opts);

// Each command returns the files it wrote.
std::vector<std::filesystem::path> cmd_generate(const GenerateOptions& opts);
std::vector<std::filesystem::path> cmd_learn(const LearnOptions& opts);
std::vector<std::filesystem::path> cmd_train(const TrainOptions& opts);
std::vector<std::filesystem::path> cmd_evaluate(const EvaluateOptions& opts);
std::vector<std::filesystem::path> cmd_grid(const GridOptions& opts);
std::vector<std::filesystem::path> cmd_report(const ReportOptions& opts);

/// Paths written by `learn` (mp.json), resolved against `g`.
std::vector<MetaPath> read_meta_paths(const std::filesystem::path& file, const HetGraph& g);
MetaPath parse_meta_path(const std::string& text, const HetGraph& g);

nlohmann::json metrics_json(const Metrics& m, const MPGNNModel& model, const HetGraph& g);

}  // namespace metapath::cli
