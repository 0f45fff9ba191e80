#pragma once

// Feature-correlation graph over update coordinates, built from the benign
// updates an adversary can observe.

#include <string_view>
#include <vector>

#include "augmp/fedsim.hpp"

namespace augmp {

struct CorrelationGraph {
  Matrix features;   // B x M, one observed update per row (agent_id order)
  Matrix adjacency;  // M x M column cosines, zero diagonal
  std::vector<std::size_t> selected;  // coordinates into the full update vector
  std::vector<int> agent_ids;         // row owners of `features`
  std::size_t degenerate_columns = 0;  // zero-norm columns, similarity set to 0
  int round = 0;
};

/// Seeded subset of ceil(fraction * benign.size()) updates, sorted by agent_id.
std::vector<UpdateVector> observe_benign(const std::vector<UpdateVector>& benign, double fraction,
                                         SeededRng rng);

enum class SelectionPolicy { kVarianceTop, kAll };

SelectionPolicy parse_selection_policy(std::string_view name);
std::string_view to_string(SelectionPolicy policy);

/// Ascending coordinate indices. kVarianceTop keeps the `count` coordinates with the
/// highest population variance across `observed` (ties to the lower index).
std::vector<std::size_t> select_params(const std::vector<UpdateVector>& observed, std::size_t count,
                                       SelectionPolicy policy);

CorrelationGraph build_graph(const std::vector<UpdateVector>& observed,
                             const std::vector<std::size_t>& selected);

}  // namespace augmp
