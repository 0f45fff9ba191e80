#include "augmp/graphcraft.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace augmp {

std::vector<UpdateVector> observe_benign(const std::vector<UpdateVector>& benign, double fraction,
                                         SeededRng rng) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw std::invalid_argument("observe_benign: fraction must be in (0, 1]");
  const auto count = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(benign.size()) - 1e-12));
  if (count == 0) throw std::invalid_argument("observe_benign: no benign updates visible");

  std::vector<const UpdateVector*> pool;
  for (const auto& u : benign) pool.push_back(&u);
  std::stable_sort(pool.begin(), pool.end(),
                   [](const auto* x, const auto* y) { return x->agent_id < y->agent_id; });
  // Partial Fisher-Yates: the first `count` slots are the sample.
  for (std::size_t i = 0; i < count; ++i)
    std::swap(pool[i], pool[i + rng.uniform_index(pool.size() - i)]);
  std::vector<UpdateVector> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(*pool[i]);
  std::sort(out.begin(), out.end(),
            [](const auto& x, const auto& y) { return x.agent_id < y.agent_id; });
  return out;
}

SelectionPolicy parse_selection_policy(std::string_view name) {
  if (name == "variance-top") return SelectionPolicy::kVarianceTop;
  if (name == "all") return SelectionPolicy::kAll;
  throw std::invalid_argument("unknown selection policy '" + std::string(name) + "'");
}

std::string_view to_string(SelectionPolicy policy) {
  return policy == SelectionPolicy::kAll ? "all" : "variance-top";
}

std::vector<std::size_t> select_params(const std::vector<UpdateVector>& observed, std::size_t count,
                                       SelectionPolicy policy) {
  if (observed.empty()) throw std::invalid_argument("select_params: no observed updates");
  const std::size_t dim = observed.front().values.size();
  if (count < 2) throw std::invalid_argument("select_params: need at least 2 coordinates");
  if (count > dim)
    throw std::invalid_argument("select_params: requested " + std::to_string(count) +
                                " coordinates of " + std::to_string(dim));
  std::vector<std::size_t> idx(dim);
  std::iota(idx.begin(), idx.end(), 0);
  if (policy == SelectionPolicy::kAll) {
    if (count != dim) throw std::invalid_argument("select_params: policy 'all' needs M = full dimension");
    return idx;
  }

  const auto n = static_cast<double>(observed.size());
  std::vector<double> variance(dim, 0.0);
  for (std::size_t k = 0; k < dim; ++k) {
    double mean = 0.0;
    for (const auto& u : observed) mean += u.values.at(k);
    mean /= n;
    double acc = 0.0;
    for (const auto& u : observed) acc += (u.values[k] - mean) * (u.values[k] - mean);
    variance[k] = acc / n;
  }
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t x, std::size_t y) { return variance[x] > variance[y]; });
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

CorrelationGraph build_graph(const std::vector<UpdateVector>& observed,
                             const std::vector<std::size_t>& selected) {
  if (observed.size() < 2) throw std::invalid_argument("build_graph: need at least 2 observed updates");
  if (selected.size() < 2) throw std::invalid_argument("build_graph: need at least 2 coordinates");

  std::vector<const UpdateVector*> rows;
  for (const auto& u : observed) rows.push_back(&u);
  std::stable_sort(rows.begin(), rows.end(),
                   [](const auto* x, const auto* y) { return x->agent_id < y->agent_id; });

  CorrelationGraph g;
  g.selected = selected;
  g.round = rows.front()->round;
  g.features = Matrix(rows.size(), selected.size());
  for (std::size_t b = 0; b < rows.size(); ++b) {
    g.agent_ids.push_back(rows[b]->agent_id);
    for (std::size_t m = 0; m < selected.size(); ++m)
      g.features(b, m) = rows[b]->values.at(selected[m]);
  }

  const std::size_t count = selected.size();
  std::vector<Vector> columns;
  for (std::size_t m = 0; m < count; ++m) {
    columns.push_back(g.features.column(m));
    if (norm2(columns.back()) == 0.0) ++g.degenerate_columns;
  }
  g.adjacency = Matrix(count, count);
  for (std::size_t m = 0; m < count; ++m) {
    for (std::size_t k = m + 1; k < count; ++k) {
      const double c = cosine(columns[m], columns[k]);
      g.adjacency(m, k) = c;
      g.adjacency(k, m) = c;
    }
  }
  return g;
}

}  // namespace augmp
