#pragma once

#include <span>
#include <vector>

#include "mcclk/csr.hpp"
#include "mcclk/data.hpp"
#include "mcclk/matrix.hpp"

namespace mcclk {

// Unified item+entity node space with bidirectional KG edges: node ids below
// n_items are items (item table rows), the rest are entities. Every triple
// contributes a directed edge to both endpoints; `eid` pairs each slot with
// its mirror so backward passes can stay pull-form.
struct KgAdjacency {
  idx n_nodes = 0, n_items = 0, n_relations = 0;
  std::vector<idx> offsets;   // n_nodes + 1
  std::vector<idx> nbr;       // neighbor node per slot
  std::vector<idx> rel;       // relation per slot
  std::vector<idx> mirror;    // slot index of the reverse edge
  std::vector<idx> rel_offsets;  // per relation: slots grouped for pull-form
  std::vector<idx> rel_slots;
  std::vector<idx> slot_owner;   // owning node per slot

  idx degree(idx node) const { return offsets[node + 1] - offsets[node]; }

  static KgAdjacency build(const KnowledgeGraph& kg, idx n_items);
};

// Gathers item rows (< n_items) from `items` and entity rows from `entities`
// into one n_nodes x d matrix.
Matrix gather_kg_nodes(const KgAdjacency& adj, const Matrix& items,
                       const Matrix& entities);

// Relation-aware propagation: each node's next representation is the mean of
// e_r (*) e_nbr over its KG neighborhood; nodes without triples carry their
// previous representation forward. Returns the depth-K' item rows.
Matrix relation_aware_propagate(const KgAdjacency& adj, const Matrix& items,
                                const Matrix& entities,
                                const Matrix& relations, int depth,
                                int threads);

// Both-zero vectors have similarity 0 by convention.
double cosine_sim(std::span<const double> a, std::span<const double> b);

// Per row keep the k largest off-diagonal similarities, ties at the boundary
// broken toward the smaller column; entries <= 0 are dropped so the degree
// normalization downstream stays well defined.
SparseAdjacency knn_sparsify(const Matrix& similarities, idx k);

struct SemanticGraph {
  SparseAdjacency adj;    // normalized, N x N
  SparseAdjacency adj_t;  // transpose, for backward passes
  idx k = 0;
  idx built_from_epoch = 0;
};

SemanticGraph build_semantic_graph(const KgAdjacency& adj, const Matrix& items,
                                   const Matrix& entities,
                                   const Matrix& relations, idx k, int depth,
                                   int threads, idx epoch,
                                   idx block_rows = 256);

// Optional `i j weight` export for inspection.
void export_semantic_graph(const SemanticGraph& g, const std::string& path);

}  // namespace mcclk
