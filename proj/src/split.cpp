#include <algorithm>
#include <array>
#include <cmath>
#include <map>

#include <spdlog/spdlog.h>

#include "metapath/hetgraph.hpp"
#include "metapath/rng.hpp"

namespace metapath {

namespace {

// Largest-remainder allocation of n items over the three ratios; ties favour
// train, then validation, then test.
std::array<std::size_t, 3> allocate(std::size_t n, const std::array<double, 3>& ratio) {
  std::array<std::size_t, 3> count{};
  std::array<double, 3> frac{};
  std::size_t used = 0;
  for (int k = 0; k < 3; ++k) {
    const double exact = ratio[k] * static_cast<double>(n);
    count[k] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    frac[k] = exact - static_cast<double>(count[k]);
    used += count[k];
  }
  while (used < n) {
    int best = 0;
    for (int k = 1; k < 3; ++k)
      if (frac[k] > frac[best] + 1e-12) best = k;
    ++count[best];
    frac[best] = -1.0;
    ++used;
  }
  if (count[0] == 0 && n > 0 && ratio[0] > 0.0) {
    // keep at least one training example per class
    for (int k : {1, 2}) {
      if (count[k] > 0) {
        --count[k];
        ++count[0];
        break;
      }
    }
  }
  return count;
}

}  // namespace

LabeledSplit split_labels(std::span<const std::pair<NodeId, int>> labels, SplitRatios ratios, std::uint64_t seed,
                          std::vector<std::string> class_names) {
  if (ratios.train < 0 || ratios.validation < 0 || ratios.test < 0)
    throw GraphError("split ratios must be non-negative");
  const double total = ratios.train + ratios.validation + ratios.test;
  if (total <= 0) throw GraphError("split ratios must not all be zero");
  if (std::abs(total - 1.0) > 1e-9) {
    spdlog::warn("split ratios {}/{}/{} do not sum to 1; normalizing to {:.4f}/{:.4f}/{:.4f}", ratios.train,
                 ratios.validation, ratios.test, ratios.train / total, ratios.validation / total,
                 ratios.test / total);
  }
  const std::array<double, 3> ratio{ratios.train / total, ratios.validation / total, ratios.test / total};

  int num_classes = 0;
  for (const auto& [node, label] : labels) {
    if (label < 0) throw GraphError("negative class index");
    num_classes = std::max(num_classes, label + 1);
  }
  if (static_cast<int>(class_names.size()) < num_classes) {
    for (int c = static_cast<int>(class_names.size()); c < num_classes; ++c) class_names.push_back(std::to_string(c));
  }
  num_classes = static_cast<int>(class_names.size());

  std::vector<std::vector<NodeId>> by_class(num_classes);
  for (const auto& [node, label] : labels) by_class[label].push_back(node);
  for (int c = 0; c < num_classes; ++c)
    if (by_class[c].empty()) throw GraphError("class '" + class_names[c] + "' has no labeled nodes");

  LabeledSplit out;
  out.class_names = std::move(class_names);
  for (int c = 0; c < num_classes; ++c) {
    auto nodes = by_class[c];
    std::sort(nodes.begin(), nodes.end());
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(c)}));
    std::shuffle(nodes.begin(), nodes.end(), rng);
    const auto count = allocate(nodes.size(), ratio);
    std::size_t pos = 0;
    for (int k = 0; k < 3; ++k) {
      for (std::size_t m = 0; m < count[k]; ++m, ++pos)
        out.entries.push_back({nodes[pos], c, static_cast<Partition>(k)});
    }
  }
  std::sort(out.entries.begin(), out.entries.end(),
            [](const LabeledNode& a, const LabeledNode& b) { return a.node < b.node; });
  return out;
}

}  // namespace metapath
