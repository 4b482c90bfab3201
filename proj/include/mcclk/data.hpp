#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mcclk/common.hpp"

namespace mcclk {

struct RatingRecord {
  idx user, item;
  double rating;
};

struct LoadedInteractions {
  std::vector<RatingRecord> records;  // ids already compacted
  idx n_users = 0, n_items = 0;
  std::vector<std::pair<idx, idx>> user_remap;  // (original, compact)
  std::vector<std::pair<idx, idx>> item_remap;
  idx duplicates_dropped = 0;
  bool identity_ids() const;
};

// `user item rating` per line, '#' comments and blank lines skipped.
LoadedInteractions load_interactions(const std::string& path);

struct InteractionGraph {
  idx n_users = 0, n_items = 0;
  std::vector<std::pair<idx, idx>> positives;  // sorted (user, item)
  std::vector<std::pair<idx, idx>> negatives;
  idx insufficient_negative_users = 0;  // fallback events for the run report
};

// Ratings at or above the threshold become positives (all of them when no
// threshold is given); sub-threshold ratings are discarded. Per user an equal
// number of negatives is drawn uniformly from items the user never rated.
InteractionGraph implicitize(const std::vector<RatingRecord>& ratings,
                             idx n_users, idx n_items,
                             std::optional<double> threshold, const Rng& rng);

struct Triple {
  idx head, relation, tail;
  bool operator==(const Triple&) const = default;
};

struct KnowledgeGraph {
  idx n_entities = 0, n_relations = 0;
  std::vector<Triple> triples;
  std::vector<idx> alignment;  // item id -> entity id (identity by convention)
  idx duplicate_triples_dropped = 0;
};

// `head relation tail` per line. Duplicate triples are dropped and counted.
KnowledgeGraph load_kg(const std::string& path);

// Remaps a raw KG onto the canonical shared id space: node ids present in
// item_remap become the item's compact id, remaining entities are packed
// beyond n_items in ascending original order. Relations are compacted too.
struct CanonicalKg {
  KnowledgeGraph kg;
  std::vector<std::pair<idx, idx>> entity_remap;
  std::vector<std::pair<idx, idx>> relation_remap;
};
CanonicalKg canonicalize_kg(const KnowledgeGraph& raw,
                            const std::vector<std::pair<idx, idx>>& item_remap,
                            idx n_items);

struct LabeledRecord {
  idx user, item;
  int label;  // 1 observed positive, 0 sampled negative
};

struct DataSplit {
  std::vector<LabeledRecord> train, eval, test;
  std::array<double, 3> ratios{};
  std::uint64_t seed = 0;
  std::string serialize() const;
};

// Deterministic per-user stratified split; global set sizes land within one
// record of the requested ratios.
DataSplit split(const InteractionGraph& graph, std::array<double, 3> ratios,
                std::uint64_t seed);

std::vector<LabeledRecord> labeled_records(const InteractionGraph& graph);
InteractionGraph graph_from_labeled(const std::vector<LabeledRecord>& records,
                                    idx n_users, idx n_items);

// Canonical on-disk layout: interactions.txt, kg.txt, split.txt in one dir.
struct SplitManifest {
  std::uint64_t seed = 0;
  std::array<double, 3> ratios{};
  idx n_train = 0, n_eval = 0, n_test = 0;
  idx n_users = 0, n_items = 0;
};

void write_interactions(const std::string& path,
                        const std::vector<LabeledRecord>& records);
void write_kg(const std::string& path, const KnowledgeGraph& kg);
void write_split_manifest(const std::string& path, const SplitManifest& m);
SplitManifest read_split_manifest(const std::string& path);
void write_remap(const std::string& path,
                 const std::vector<std::pair<idx, idx>>& remap);

struct Dataset {
  InteractionGraph graph;
  KnowledgeGraph kg;
  DataSplit splits;
  SplitManifest manifest;
  std::string interactions_path, kg_path;
};

// Loads a canonical directory and re-derives the split from the manifest
// seed, cross-checking the recorded counts.
Dataset load_dataset(const std::string& dir);

}  // namespace mcclk
