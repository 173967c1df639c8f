#include <fstream>

#include <json.hpp>

#include "metapath/mpgnn.hpp"

namespace metapath {

namespace {

using nlohmann::json;

constexpr int kCheckpointVersion = 1;

json matrix_json(const Eigen::MatrixXd& m) {
  json data = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Eigen::MatrixXd matrix_from(const json& j, Eigen::Index rows, Eigen::Index cols, const std::string& what) {
  const auto r = j.at("rows").get<Eigen::Index>();
  const auto c = j.at("cols").get<Eigen::Index>();
  if (r != rows || c != cols)
    throw ModelError("checkpoint: " + what + " is " + diff::shape_str(r, c) + ", expected " +
                     diff::shape_str(rows, cols));
  const auto& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != r * c) throw ModelError("checkpoint: " + what + " has wrong value count");
  Eigen::MatrixXd m(r, c);
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index q = 0; q < c; ++q) m(i, q) = data[k++].get<double>();
  return m;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& file, const MPGNNModel& model, const HetGraph& g) {
  json paths = json::array();
  for (const auto& p : model.paths) {
    json names = json::array();
    for (RelationId r : p.path.relations) names.push_back(g.relation_name(r));
    json layers = json::array();
    for (std::size_t l = 0; l < p.self.size(); ++l)
      layers.push_back({{"self", matrix_json(p.self[l].value)}, {"neighbor", matrix_json(p.neighbor[l].value)}});
    paths.push_back({{"relations", std::move(names)}, {"layers", std::move(layers)}});
  }
  json doc = {
      {"format", "mpgnn-checkpoint"},
      {"version", kCheckpointVersion},
      {"activation", to_string(model.activation)},
      {"hidden", model.hidden},
      {"input_dim", model.input_dim},
      {"feature_names", g.feature_names()},
      {"class_names", model.class_names},
      {"paths", std::move(paths)},
      {"head", {{"w", matrix_json(model.head_w.value)}, {"b", matrix_json(model.head_b.value)}}},
  };
  if (!file.parent_path().empty()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw ModelError("cannot write checkpoint " + file.string());
  out << doc.dump(1) << '\n';
}

MPGNNModel load_checkpoint(const std::filesystem::path& file, const HetGraph& g) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ModelError("cannot open checkpoint " + file.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ModelError("checkpoint " + file.string() + ": " + e.what());
  }
  try {
    if (doc.at("format") != "mpgnn-checkpoint") throw ModelError("not an mpgnn checkpoint");
    if (doc.at("version").get<int>() != kCheckpointVersion)
      throw ModelError("unsupported checkpoint version " + doc.at("version").dump());
    MPGNNModel m;
    m.activation = parse_activation(doc.at("activation").get<std::string>());
    m.hidden = doc.at("hidden").get<int>();
    m.input_dim = doc.at("input_dim").get<Eigen::Index>();
    m.class_names = doc.at("class_names").get<std::vector<std::string>>();
    if (m.input_dim != g.feature_dim())
      throw ModelError("checkpoint expects feature dimension " + std::to_string(m.input_dim) + ", graph has " +
                       std::to_string(g.feature_dim()));
    for (const auto& p : doc.at("paths")) {
      PathLayers pl;
      for (const auto& name : p.at("relations")) {
        try {
          pl.path.relations.push_back(g.relation_id(name.get<std::string>()));
        } catch (const GraphError&) {
          throw ModelError("checkpoint relation '" + name.get<std::string>() + "' not in graph");
        }
      }
      const auto& layers = p.at("layers");
      if (layers.size() != pl.path.relations.size()) throw ModelError("checkpoint layer count != meta-path length");
      Eigen::Index in_dim = m.input_dim;
      for (std::size_t l = 0; l < layers.size(); ++l) {
        const std::string tag = "layer " + std::to_string(l);
        pl.self.emplace_back(matrix_from(layers[l].at("self"), m.hidden, in_dim, tag + " self"));
        pl.neighbor.emplace_back(matrix_from(layers[l].at("neighbor"), m.hidden, in_dim, tag + " neighbor"));
        in_dim = m.hidden;
      }
      m.paths.push_back(std::move(pl));
    }
    const auto classes = static_cast<Eigen::Index>(m.class_names.size());
    const Eigen::Index emb = m.hidden * static_cast<Eigen::Index>(m.paths.size());
    m.head_w = Param(matrix_from(doc.at("head").at("w"), classes, emb, "head weight"));
    m.head_b = Param(matrix_from(doc.at("head").at("b"), classes, 1, "head bias"));
    return m;
  } catch (const json::exception& e) {
    throw ModelError("checkpoint " + file.string() + ": " + e.what());
  }
}

}  // namespace metapath
