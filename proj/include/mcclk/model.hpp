#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "mcclk/contrastive.hpp"
#include "mcclk/data.hpp"
#include "mcclk/encoders.hpp"
#include "mcclk/matrix.hpp"

namespace mcclk {

enum class Ablation { full, no_local, no_global };
enum class NegativeScope { batch, full_graph };

std::string to_string(Ablation a);
Ablation ablation_from_string(const std::string& s);

struct ModelConfig {
  idx d = 64;
  double alpha = 0.2;   // local/global contrastive mix
  double beta = 0.1;    // contrastive loss weight
  double lambda = 1e-5; // L2 weight
  double tau = 0.8;     // temperature
  idx k = 10;           // kNN degree of the semantic graph
  int K = 3;            // collaborative depth
  int K_prime = 2;      // semantic graph construction depth
  int L = 2;            // semantic encoder depth
  int L_prime = 2;      // structural depth
  double learning_rate = 1e-3;
  idx batch_size = 2048;
  idx epochs = 100;
  std::uint64_t seed = 42;
  NegativeScope negative_scope = NegativeScope::batch;
  std::string semantic_rebuild = "epoch";  // epoch | once | every:<N>
  idx patience = 10;
  std::array<double, 3> split_ratios{0.6, 0.2, 0.2};
  std::optional<double> rating_threshold;  // preprocess only

  void validate() const;
  std::string canonical_string() const;
  std::uint64_t hash() const { return fnv1a64(canonical_string()); }
};

ModelConfig parse_config_file(const std::string& path);
void apply_config_entry(ModelConfig& cfg, const std::string& key,
                        const std::string& value);

// Uniform on +/- sqrt(6 / (fan_in + fan_out)).
Matrix xavier_init(idx rows, idx cols, Rng& rng);

// All trainable parameters. The relation table carries one extra learned row
// (the last) used as the self-loop relation in structural attention.
struct ModelState {
  idx n_users = 0, n_items = 0, n_entities = 0, n_relations = 0;
  idx d = 0;
  Matrix user, item, entity, relation;
  ProjectionHead local_head, global_head;

  static ModelState init(idx n_users, idx n_items, idx n_entities,
                         idx n_relations, idx d, Rng& rng);
  static ModelState zeros_like(const ModelState& other);
  void zero_values();
  bool all_finite() const;
};

struct ParamBlock {
  std::string name;
  std::vector<std::pair<double*, idx>> spans;
  idx size() const {
    idx s = 0;
    for (auto& [p, n] : spans) s += n;
    return s;
  }
};
std::vector<ParamBlock> param_blocks(ModelState& s);

struct ModelGraphs {
  BipartiteGraph bipartite;
  KgAdjacency kg_adj;
  SemanticGraph semantic;
};

struct EncodeWorkspace {
  Matrix zu_c, zi_c, zi_s, zu_g, zi_g;
  StructuralCache struct_cache;
};

void encode_all(const ModelState& state, const ModelGraphs& graphs,
                const ModelConfig& cfg, int threads, EncodeWorkspace& ws);

// z_u* = z_u^g || z_u^c ; z_i* = z_i^g || (z_i^c + z_i^s)
void final_representations(const EncodeWorkspace& ws, Matrix& z_user,
                           Matrix& z_item);
double score_pair(const EncodeWorkspace& ws, idx u, idx i);

struct BatchTriple {
  idx user, pos, neg;
};

struct LossBreakdown {
  double bpr = 0.0, local = 0.0, global = 0.0, reg = 0.0, total = 0.0;
};

struct LossWeights {
  double bpr = 1.0, local = 0.0, global = 0.0, lambda = 0.0;
};
LossWeights loss_weights(const ModelConfig& cfg, Ablation abl);

// mean over the batch of -ln sigmoid(score(u,i) - score(u,j))
double bpr_loss(const std::vector<double>& pos_scores,
                const std::vector<double>& neg_scores);

double total_loss(double bpr, double l_local, double l_global,
                  const ModelConfig& cfg, double reg_sq);

// Forward pass over the whole graph plus the batch losses; when `grads` is
// non-null the full reverse pass accumulates into it (caller zeroes).
LossBreakdown compute_batch(const ModelState& state, const ModelGraphs& graphs,
                            const ModelConfig& cfg, const LossWeights& w,
                            const std::vector<BatchTriple>& batch, int threads,
                            EncodeWorkspace& ws, ModelState* grads);

struct AdamState {
  std::vector<double> m, v;
  idx step = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

void adam_step(ModelState& state, ModelState& grads, AdamState& adam,
               double lr);

}  // namespace mcclk
