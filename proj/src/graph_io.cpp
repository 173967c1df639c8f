#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <unordered_map>

#include "metapath/hetgraph.hpp"

namespace metapath {

namespace {

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

class TsvReader {
 public:
  explicit TsvReader(const std::filesystem::path& path) : path_(path.string()), in_(path) {
    if (!in_) throw ParseError(path_, 0, "cannot open file");
  }

  // Next non-empty line split on tabs; nullopt at EOF.
  std::optional<std::vector<std::string>> next() {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      return split_on(line, '\t');
    }
    return std::nullopt;
  }

  [[noreturn]] void fail(const std::string& what) const { throw ParseError(path_, line_no_, what); }
  std::size_t line() const { return line_no_; }

 private:
  std::string path_;
  std::ifstream in_;
  std::size_t line_no_ = 0;
};

double parse_double(const TsvReader& rd, const std::string& tok) {
  double v = 0.0;
  const auto* first = tok.data();
  const auto* last = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) rd.fail("invalid number '" + tok + "'");
  return v;
}

bool parse_int(const std::string& tok, long long& out) {
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return ec == std::errc() && ptr == tok.data() + tok.size() && !tok.empty();
}

void expect_header(TsvReader& rd, const std::vector<std::string>& want, std::vector<std::string>& header) {
  auto row = rd.next();
  if (!row) rd.fail("missing header");
  header = *row;
  if (header.size() < want.size()) rd.fail("header has too few columns");
  for (std::size_t k = 0; k < want.size(); ++k)
    if (header[k] != want[k]) rd.fail("expected header column '" + want[k] + "', got '" + header[k] + "'");
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

LoadedGraph load_graph(const std::filesystem::path& nodes_file, const std::filesystem::path& edges_file,
                       const std::filesystem::path& labels_file, const LoadOptions& opts) {
  GraphBuilder builder;
  std::unordered_map<std::string, NodeId> ids;

  {
    TsvReader rd(nodes_file);
    std::vector<std::string> header;
    expect_header(rd, {"id", "type"}, header);
    if (header.size() > 3) rd.fail("nodes header must have at most 3 columns");
    std::vector<std::string> feature_names;
    if (header.size() == 3 && !header[2].empty()) feature_names = split_on(header[2], ',');
    const auto dim = feature_names.size();
    builder.set_feature_names(feature_names);

    std::vector<double> feats;
    while (auto row = rd.next()) {
      if (row->size() < 2 || row->size() > 3) rd.fail("expected 2 or 3 tab-separated columns");
      const std::string& name = (*row)[0];
      if (name.empty()) rd.fail("empty node id");
      if (ids.contains(name)) rd.fail("duplicate node id '" + name + "'");
      feats.clear();
      if (row->size() == 3 && !(*row)[2].empty())
        for (const auto& tok : split_on((*row)[2], ',')) feats.push_back(parse_double(rd, tok));
      if (feats.size() != dim)
        rd.fail("inconsistent feature dimension: expected " + std::to_string(dim) + ", got " +
                std::to_string(feats.size()));
      const NodeTypeId t = builder.add_node_type((*row)[1]);
      ids.emplace(name, builder.add_node(t, feats, name));
    }
  }

  {
    TsvReader rd(edges_file);
    std::vector<std::string> header;
    expect_header(rd, {"src", "rel", "dst"}, header);
    while (auto row = rd.next()) {
      if (row->size() != 3) rd.fail("expected 3 tab-separated columns");
      auto s = ids.find((*row)[0]);
      auto d = ids.find((*row)[2]);
      if (s == ids.end()) rd.fail("dangling node id '" + (*row)[0] + "'");
      if (d == ids.end()) rd.fail("dangling node id '" + (*row)[2] + "'");
      if ((*row)[1].empty()) rd.fail("empty relation name");
      builder.add_edge(s->second, builder.add_relation((*row)[1]), d->second);
    }
  }

  LoadedGraph out{builder.build(true), {}};

  struct RawLabel {
    NodeId node;
    std::string cls;
    std::optional<Partition> part;
  };
  std::vector<RawLabel> raw;
  {
    TsvReader rd(labels_file);
    std::vector<std::string> header;
    expect_header(rd, {"node", "class"}, header);
    const bool has_split = header.size() >= 3 && header[2] == "split";
    std::vector<bool> seen(out.graph.num_nodes(), false);
    while (auto row = rd.next()) {
      if (row->size() < 2 || row->size() > 3) rd.fail("expected 2 or 3 tab-separated columns");
      auto it = ids.find((*row)[0]);
      if (it == ids.end()) rd.fail("dangling node id '" + (*row)[0] + "'");
      if (seen[it->second]) rd.fail("duplicate label for node '" + (*row)[0] + "'");
      seen[it->second] = true;
      RawLabel lab{it->second, (*row)[1], std::nullopt};
      if (lab.cls.empty()) rd.fail("empty class");
      const bool row_split = row->size() == 3 && !(*row)[2].empty();
      if (row_split != has_split) rd.fail("split column must be given for all rows or none");
      if (row_split) {
        try {
          lab.part = parse_partition((*row)[2]);
        } catch (const GraphError& e) {
          rd.fail(e.what());
        }
      }
      raw.push_back(std::move(lab));
    }
  }

  // Integer class names keep numeric order; anything else keeps first-appearance order.
  std::vector<std::string> classes;
  for (const auto& l : raw)
    if (std::find(classes.begin(), classes.end(), l.cls) == classes.end()) classes.push_back(l.cls);
  const bool numeric = std::all_of(classes.begin(), classes.end(), [](const std::string& c) {
    long long v;
    return parse_int(c, v);
  });
  if (numeric) {
    std::sort(classes.begin(), classes.end(), [](const std::string& a, const std::string& b) {
      long long x, y;
      parse_int(a, x);
      parse_int(b, y);
      return x < y;
    });
  }
  std::map<std::string, int> class_index;
  for (std::size_t k = 0; k < classes.size(); ++k) class_index[classes[k]] = static_cast<int>(k);

  const bool presplit = !raw.empty() && raw.front().part.has_value();
  if (presplit) {
    out.split.class_names = classes;
    for (const auto& l : raw) out.split.entries.push_back({l.node, class_index[l.cls], *l.part});
  } else {
    std::vector<std::pair<NodeId, int>> pairs;
    for (const auto& l : raw) pairs.emplace_back(l.node, class_index[l.cls]);
    out.split = split_labels(pairs, opts.ratios, opts.split_seed, classes);
  }
  return out;
}

LoadedGraph load_graph_dir(const std::filesystem::path& dir, const LoadOptions& opts) {
  return load_graph(dir / "nodes.tsv", dir / "edges.tsv", dir / "labels.tsv", opts);
}

void write_graph(const std::filesystem::path& dir, const HetGraph& g, const LabeledSplit& split) {
  std::filesystem::create_directories(dir);
  const auto raw = g.raw_feature_dim();
  {
    std::ofstream out(dir / "nodes.tsv", std::ios::binary);
    out << "id\ttype";
    if (raw > 0) {
      out << '\t';
      for (Eigen::Index k = 0; k < raw; ++k) out << (k ? "," : "") << g.feature_names()[k];
    }
    out << '\n';
    for (NodeId i = 0; i < g.num_nodes(); ++i) {
      out << g.node_name(i) << '\t' << g.type_name(g.node_type(i));
      if (raw > 0) {
        out << '\t';
        for (Eigen::Index k = 0; k < raw; ++k) out << (k ? "," : "") << format_double(g.features()(k, i));
      }
      out << '\n';
    }
  }
  {
    std::ofstream out(dir / "edges.tsv", std::ios::binary);
    out << "src\trel\tdst\n";
    // Relation-major order so that first-appearance relation ids survive a reload
    // (relations without edges cannot be represented and are dropped).
    for (RelationId r = 0; r < g.num_relations(); ++r)
      for (NodeId i = 0; i < g.num_nodes(); ++i)
        for (NodeId j : g.neighbors(r, i))
          out << g.node_name(i) << '\t' << g.relation_name(r) << '\t' << g.node_name(j) << '\n';
  }
  {
    std::ofstream out(dir / "labels.tsv", std::ios::binary);
    out << "node\tclass\tsplit\n";
    for (const auto& e : split.entries)
      out << g.node_name(e.node) << '\t' << split.class_names.at(e.label) << '\t' << to_string(e.partition) << '\n';
  }
}

}  // namespace metapath
