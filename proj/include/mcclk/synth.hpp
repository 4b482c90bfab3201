#pragma once

#include <string>

#include "mcclk/common.hpp"

namespace mcclk {

// Planted-preference dataset generator. Users and items live in a shared
// latent genre space; interactions are gumbel-top-k draws from user-item
// affinity, and the KG links items to attribute entities of their genre, so
// collaborative, semantic and structural signals all carry information.
// Counts are hit exactly, ids are dense, output is byte-stable per seed.
struct SynthSpec {
  idx n_users = 0;
  idx n_items = 0;
  idx n_interactions = 0;  // positive rating records
  idx n_entities = 0;      // includes the items (shared id space)
  idx n_relations = 0;
  idx n_triples = 0;
  idx n_genres = 24;
  idx latent_dim = 16;
  double item_noise = 0.45;
  double user_noise = 0.35;
  double affinity_sharpness = 5.0;
  double popularity_sd = 0.35;
  double genre_link_prob = 0.85;
  double entity_entity_frac = 0.10;
  bool explicit_ratings = false;  // emit 1..5 stars with sub-threshold noise
  idx n_subthreshold = 0;         // extra below-threshold records
  std::uint64_t seed = 2026;

  static SynthSpec lastfm_like();
  static SynthSpec movielens1m_like();
};

// Writes ratings.txt and kg.txt (raw preprocess inputs) into out_dir.
void generate_synthetic(const SynthSpec& spec, const std::string& out_dir);

}  // namespace mcclk
