#pragma once

#include <vector>

#include "mcclk/csr.hpp"
#include "mcclk/matrix.hpp"
#include "mcclk/semantic.hpp"

namespace mcclk {

// Propagation graphs derived from the train-split positives only.
struct BipartiteGraph {
  idx n_users = 0, n_items = 0;
  SparseAdjacency ui_sym;   // 1/sqrt(|N_u||N_i|), user rows
  SparseAdjacency iu_sym;   // transpose of ui_sym
  SparseAdjacency ui_mean;  // 1/|N_u|, user rows (structural view)
  SparseAdjacency iu_mean_t;  // transpose of ui_mean, for backward

  static BipartiteGraph build(const std::vector<std::pair<idx, idx>>& positives,
                              idx n_users, idx n_items);
};

// LightGCN over the interaction graph: K symmetric-normalized propagation
// rounds, output is the layerwise sum e(0)+...+e(K). Linear, so backward
// needs only the adjacency.
void collaborative_encode(const BipartiteGraph& g, const Matrix& user_tab,
                          const Matrix& item_tab, int K, int threads,
                          Matrix& z_user, Matrix& z_item);
void collaborative_backward(const BipartiteGraph& g, const Matrix& gz_user,
                            const Matrix& gz_item, int K, int threads,
                            Matrix& g_user, Matrix& g_item);

// LightGCN over the item-item semantic graph; layer 0 is the raw item table.
void semantic_encode(const SemanticGraph& s, const Matrix& item_tab, int L,
                     int threads, Matrix& z_item);
void semantic_backward(const SemanticGraph& s, const Matrix& gz_item, int L,
                       int threads, Matrix& g_item);

// Softmax over logits (e_x || e_r)^T (e_v || e_r) for an explicit neighbor
// pair list; the caller includes the query's self pair when mirroring the
// structural encoder.
std::vector<double> relation_attention(
    const Matrix& nodes, idx query,
    const std::vector<std::pair<idx, idx>>& rel_nbr_pairs,
    const Matrix& relations);

// Attention weights per adjacency slot plus a self term per node. The self
// pair uses a dedicated relation row (the last row of the relation table) and
// participates in the softmax normalization only; messages flow over the KG
// neighborhood itself.
struct AttentionCache {
  std::vector<double> weight;       // per slot
  std::vector<double> self_weight;  // per node
  std::vector<double> inv_degree;   // per node, 1/|N|, 0 for isolated nodes
};

void compute_attention(const KgAdjacency& adj, const Matrix& x0_nodes,
                       const Matrix& relations, int threads,
                       AttentionCache& cache);

struct StructuralCache {
  std::vector<Matrix> user_layers;  // L'+1 entries
  std::vector<Matrix> node_layers;  // L'+1 entries, items+entities
  Matrix x0_nodes;
  AttentionCache attn;
};

// Path-aware encoder: users average their items' previous layer; items and
// entities aggregate attention-weighted relational messages
// (1/|N|) sum beta * e_r (*) e_v. Outputs are layerwise sums. Attention is
// computed once per forward pass from layer-0 embeddings; pass
// recompute_attention=false to reuse cache.attn (frozen weights).
void structural_encode(const BipartiteGraph& g, const KgAdjacency& adj,
                       const Matrix& user_tab, const Matrix& item_tab,
                       const Matrix& entity_tab, const Matrix& relations,
                       int Lp, int threads, StructuralCache& cache,
                       Matrix& z_user, Matrix& z_item,
                       bool recompute_attention = true);

void structural_backward(const BipartiteGraph& g, const KgAdjacency& adj,
                         const StructuralCache& cache, const Matrix& relations,
                         const Matrix& gz_user, const Matrix& gz_item, int Lp,
                         int threads, Matrix& g_user, Matrix& g_item,
                         Matrix& g_entity, Matrix& g_relation);

}  // namespace mcclk
