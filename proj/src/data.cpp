#include "mcclk/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <tuple>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace mcclk {

namespace {

// Splits a line into whitespace tokens; returns false for blank/comment lines.
bool tokenize(const std::string& line, std::vector<std::string>& tokens) {
  tokens.clear();
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) tokens.push_back(tok);
  if (tokens.empty()) return false;
  if (tokens[0][0] == '#') return false;
  return true;
}

idx parse_id(const std::string& tok, int line_no, const char* what) {
  idx v = 0;
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || p != tok.data() + tok.size() || v < 0)
    throw ParseError(std::string("bad ") + what + " token '" + tok + "'",
                     line_no);
  return v;
}

double parse_real(const std::string& tok, int line_no, const char* what) {
  try {
    std::size_t pos = 0;
    double v = std::stod(tok, &pos);
    if (pos != tok.size() || !std::isfinite(v)) throw std::exception();
    return v;
  } catch (...) {
    throw ParseError(std::string("bad ") + what + " token '" + tok + "'",
                     line_no);
  }
}

std::vector<std::pair<idx, idx>> compact_ids(const std::set<idx>& ids) {
  std::vector<std::pair<idx, idx>> remap;
  remap.reserve(ids.size());
  idx next = 0;
  for (idx old : ids) remap.emplace_back(old, next++);
  return remap;
}

}  // namespace

bool LoadedInteractions::identity_ids() const {
  for (const auto& [o, n] : user_remap)
    if (o != n) return false;
  for (const auto& [o, n] : item_remap)
    if (o != n) return false;
  return true;
}

LoadedInteractions load_interactions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open interaction file: " + path);
  LoadedInteractions out;
  std::vector<RatingRecord> raw;
  std::set<idx> users, items;
  std::string line;
  std::vector<std::string> tokens;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!tokenize(line, tokens)) continue;
    if (tokens.size() < 3)
      throw ParseError("expected `user item rating`", line_no);
    RatingRecord r;
    r.user = parse_id(tokens[0], line_no, "user");
    r.item = parse_id(tokens[1], line_no, "item");
    r.rating = parse_real(tokens[2], line_no, "rating");
    raw.push_back(r);
    users.insert(r.user);
    items.insert(r.item);
  }
  if (raw.empty()) throw EmptyFile("no interaction records in " + path);

  out.user_remap = compact_ids(users);
  out.item_remap = compact_ids(items);
  std::unordered_map<idx, idx> umap(out.user_remap.begin(),
                                    out.user_remap.end());
  std::unordered_map<idx, idx> imap(out.item_remap.begin(),
                                    out.item_remap.end());
  out.n_users = idx(umap.size());
  out.n_items = idx(imap.size());

  std::set<std::pair<idx, idx>> seen;
  out.records.reserve(raw.size());
  for (const RatingRecord& r : raw) {
    RatingRecord c{umap.at(r.user), imap.at(r.item), r.rating};
    if (!seen.insert({c.user, c.item}).second) {
      ++out.duplicates_dropped;  // keep first occurrence
      continue;
    }
    out.records.push_back(c);
  }
  return out;
}

InteractionGraph implicitize(const std::vector<RatingRecord>& ratings,
                             idx n_users, idx n_items,
                             std::optional<double> threshold, const Rng& rng) {
  InteractionGraph g;
  g.n_users = n_users;
  g.n_items = n_items;

  std::vector<std::vector<idx>> rated(n_users), pos(n_users);
  for (const RatingRecord& r : ratings) {
    rated[r.user].push_back(r.item);
    if (!threshold || r.rating >= *threshold) pos[r.user].push_back(r.item);
  }

  for (idx u = 0; u < n_users; ++u) {
    std::sort(rated[u].begin(), rated[u].end());
    std::sort(pos[u].begin(), pos[u].end());
    for (idx i : pos[u]) g.positives.emplace_back(u, i);

    const idx need = idx(pos[u].size());
    if (need == 0) continue;
    const idx avail = n_items - idx(rated[u].size());
    idx take = need;
    if (avail < need) {
      take = avail;
      ++g.insufficient_negative_users;
    }
    // Uniform without replacement over unrated items, via a per-user stream
    // so the result is independent of user processing order.
    Rng urng = rng.sub(std::uint64_t(u) * 2 + 1);
    std::set<idx> chosen;
    while (idx(chosen.size()) < take) {
      idx cand = idx(urng.next_below(std::uint64_t(n_items)));
      if (std::binary_search(rated[u].begin(), rated[u].end(), cand)) continue;
      chosen.insert(cand);
    }
    for (idx i : chosen) g.negatives.emplace_back(u, i);
  }
  std::sort(g.positives.begin(), g.positives.end());
  std::sort(g.negatives.begin(), g.negatives.end());
  return g;
}

KnowledgeGraph load_kg(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open kg file: " + path);
  KnowledgeGraph kg;
  std::string line;
  std::vector<std::string> tokens;
  int line_no = 0;
  std::set<std::array<idx, 3>> seen;
  idx max_entity = -1, max_relation = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!tokenize(line, tokens)) continue;
    if (tokens.size() < 3)
      throw ParseError("expected `head relation tail`", line_no);
    Triple t;
    t.head = parse_id(tokens[0], line_no, "head");
    t.relation = parse_id(tokens[1], line_no, "relation");
    t.tail = parse_id(tokens[2], line_no, "tail");
    if (!seen.insert({t.head, t.relation, t.tail}).second) {
      ++kg.duplicate_triples_dropped;
      continue;
    }
    kg.triples.push_back(t);
    max_entity = std::max({max_entity, t.head, t.tail});
    max_relation = std::max(max_relation, t.relation);
  }
  kg.n_entities = max_entity + 1;
  kg.n_relations = max_relation + 1;
  return kg;
}

CanonicalKg canonicalize_kg(const KnowledgeGraph& raw,
                            const std::vector<std::pair<idx, idx>>& item_remap,
                            idx n_items) {
  std::unordered_map<idx, idx> imap(item_remap.begin(), item_remap.end());
  std::set<idx> extra_entities;
  std::set<idx> relations;
  for (const Triple& t : raw.triples) {
    if (!imap.count(t.head)) extra_entities.insert(t.head);
    if (!imap.count(t.tail)) extra_entities.insert(t.tail);
    relations.insert(t.relation);
  }
  CanonicalKg out;
  idx next_entity = n_items;
  std::unordered_map<idx, idx> emap;
  for (idx old : extra_entities) {
    emap[old] = next_entity;
    out.entity_remap.emplace_back(old, next_entity);
    ++next_entity;
  }
  std::unordered_map<idx, idx> rmap;
  idx next_rel = 0;
  for (idx old : relations) {
    rmap[old] = next_rel;
    out.relation_remap.emplace_back(old, next_rel);
    ++next_rel;
  }
  auto map_node = [&](idx v) {
    auto it = imap.find(v);
    return it != imap.end() ? it->second : emap.at(v);
  };
  out.kg.triples.reserve(raw.triples.size());
  for (const Triple& t : raw.triples)
    out.kg.triples.push_back(
        {map_node(t.head), rmap.at(t.relation), map_node(t.tail)});
  out.kg.n_entities = next_entity;
  out.kg.n_relations = next_rel;
  out.kg.duplicate_triples_dropped = raw.duplicate_triples_dropped;
  out.kg.alignment.resize(n_items);
  for (idx i = 0; i < n_items; ++i) out.kg.alignment[i] = i;
  return out;
}

std::vector<LabeledRecord> labeled_records(const InteractionGraph& graph) {
  std::vector<LabeledRecord> all;
  all.reserve(graph.positives.size() + graph.negatives.size());
  for (const auto& [u, i] : graph.positives) all.push_back({u, i, 1});
  for (const auto& [u, i] : graph.negatives) all.push_back({u, i, 0});
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    return std::tie(a.user, a.item, a.label) <
           std::tie(b.user, b.item, b.label);
  });
  return all;
}

InteractionGraph graph_from_labeled(const std::vector<LabeledRecord>& records,
                                    idx n_users, idx n_items) {
  InteractionGraph g;
  g.n_users = n_users;
  g.n_items = n_items;
  for (const LabeledRecord& r : records)
    (r.label ? g.positives : g.negatives).emplace_back(r.user, r.item);
  std::sort(g.positives.begin(), g.positives.end());
  std::sort(g.negatives.begin(), g.negatives.end());
  return g;
}

DataSplit split(const InteractionGraph& graph, std::array<double, 3> ratios,
                std::uint64_t seed) {
  double sum = ratios[0] + ratios[1] + ratios[2];
  if (ratios[0] <= 0 || ratios[1] <= 0 || ratios[2] <= 0 ||
      std::abs(sum - 1.0) > 1e-9)
    throw BadRatios("split ratios must be positive and sum to 1");

  std::vector<LabeledRecord> all = labeled_records(graph);
  const idx total = idx(all.size());

  // Global targets by largest remainder, then per-user allocation, then a
  // correction pass so global counts land exactly on target.
  std::array<idx, 3> target;
  {
    std::array<double, 3> exact{ratios[0] * total, ratios[1] * total,
                                ratios[2] * total};
    idx assigned = 0;
    std::array<std::pair<double, int>, 3> rem;
    for (int s = 0; s < 3; ++s) {
      target[s] = idx(std::floor(exact[s]));
      assigned += target[s];
      rem[s] = {exact[s] - std::floor(exact[s]), s};
    }
    std::sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    for (int k = 0; assigned < total; ++k, ++assigned) ++target[rem[k].first];
  }

  std::vector<std::vector<LabeledRecord>> per_user(graph.n_users);
  for (const LabeledRecord& r : all) per_user[r.user].push_back(r);

  Rng rng(seed);
  std::array<std::vector<LabeledRecord>, 3> sets;
  for (idx u = 0; u < graph.n_users; ++u) {
    auto& recs = per_user[u];
    if (recs.empty()) continue;
    Rng urng = rng.sub(std::uint64_t(u));
    urng.shuffle(recs);
    const idx q = idx(recs.size());
    std::array<idx, 3> want;
    std::array<std::pair<double, int>, 3> rem;
    idx assigned = 0;
    for (int s = 0; s < 3; ++s) {
      double exact = ratios[s] * q;
      want[s] = idx(std::floor(exact));
      assigned += want[s];
      rem[s] = {exact - std::floor(exact), s};
    }
    std::sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    for (int k = 0; assigned < q; ++k, ++assigned) ++want[rem[k].first];
    idx pos = 0;
    for (int s = 0; s < 3; ++s)
      for (idx k = 0; k < want[s]; ++k) sets[s].push_back(recs[pos++]);
  }

  // Correction: move single records from over-full to under-full sets,
  // taking from the back (deterministic order).
  for (int from = 0; from < 3; ++from)
    for (int to = 0; to < 3; ++to) {
      if (from == to) continue;
      while (idx(sets[from].size()) > target[from] &&
             idx(sets[to].size()) < target[to]) {
        sets[to].push_back(sets[from].back());
        sets[from].pop_back();
      }
    }

  auto canon = [](std::vector<LabeledRecord>& v) {
    std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
      return std::tie(a.user, a.item, a.label) <
             std::tie(b.user, b.item, b.label);
    });
  };
  DataSplit out;
  out.train = std::move(sets[0]);
  out.eval = std::move(sets[1]);
  out.test = std::move(sets[2]);
  canon(out.train);
  canon(out.eval);
  canon(out.test);
  out.ratios = ratios;
  out.seed = seed;
  return out;
}

std::string DataSplit::serialize() const {
  std::ostringstream ss;
  ss << "seed " << seed << "\n";
  ss << "ratios " << ratios[0] << " " << ratios[1] << " " << ratios[2] << "\n";
  const std::array<const std::vector<LabeledRecord>*, 3> sets{&train, &eval,
                                                              &test};
  const std::array<const char*, 3> names{"train", "eval", "test"};
  for (int s = 0; s < 3; ++s) {
    ss << names[s] << " " << sets[s]->size() << "\n";
    for (const LabeledRecord& r : *sets[s])
      ss << r.user << " " << r.item << " " << r.label << "\n";
  }
  return ss.str();
}

void write_interactions(const std::string& path,
                        const std::vector<LabeledRecord>& records) {
  std::ofstream out(path);
  if (!out) throw DiskWriteError("cannot write " + path);
  for (const LabeledRecord& r : records)
    out << r.user << " " << r.item << " " << r.label << "\n";
  if (!out) throw DiskWriteError("failed writing " + path);
}

void write_kg(const std::string& path, const KnowledgeGraph& kg) {
  std::ofstream out(path);
  if (!out) throw DiskWriteError("cannot write " + path);
  for (const Triple& t : kg.triples)
    out << t.head << " " << t.relation << " " << t.tail << "\n";
  if (!out) throw DiskWriteError("failed writing " + path);
}

void write_split_manifest(const std::string& path, const SplitManifest& m) {
  std::ofstream out(path);
  if (!out) throw DiskWriteError("cannot write " + path);
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g", m.ratios[0],
                m.ratios[1], m.ratios[2]);
  out << "seed " << m.seed << "\n"
      << "ratios " << buf << "\n"
      << "users " << m.n_users << "\n"
      << "items " << m.n_items << "\n"
      << "train " << m.n_train << "\n"
      << "eval " << m.n_eval << "\n"
      << "test " << m.n_test << "\n";
  if (!out) throw DiskWriteError("failed writing " + path);
}

SplitManifest read_split_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open split manifest: " + path);
  SplitManifest m;
  std::string key;
  while (in >> key) {
    if (key == "seed")
      in >> m.seed;
    else if (key == "ratios")
      in >> m.ratios[0] >> m.ratios[1] >> m.ratios[2];
    else if (key == "users")
      in >> m.n_users;
    else if (key == "items")
      in >> m.n_items;
    else if (key == "train")
      in >> m.n_train;
    else if (key == "eval")
      in >> m.n_eval;
    else if (key == "test")
      in >> m.n_test;
    else
      in.ignore(std::numeric_limits<std::streamsize>::max(), '\n');
  }
  return m;
}

void write_remap(const std::string& path,
                 const std::vector<std::pair<idx, idx>>& remap) {
  std::ofstream out(path);
  if (!out) throw DiskWriteError("cannot write " + path);
  for (const auto& [old_id, new_id] : remap)
    out << old_id << " " << new_id << "\n";
}

Dataset load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  Dataset ds;
  ds.interactions_path = (fs::path(dir) / "interactions.txt").string();
  ds.kg_path = (fs::path(dir) / "kg.txt").string();
  const std::string manifest_path = (fs::path(dir) / "split.txt").string();
  for (const std::string& p :
       {ds.interactions_path, ds.kg_path, manifest_path})
    if (!fs::exists(p))
      throw Error("data dir " + dir + " is missing " + p +
                  " (expected interactions.txt, kg.txt, split.txt; run the "
                  "preprocess command first)");

  LoadedInteractions li = load_interactions(ds.interactions_path);
  if (!li.identity_ids())
    throw Error("canonical data in " + dir +
                " must use dense 0-based ids; run the preprocess command");
  ds.manifest = read_split_manifest(manifest_path);
  if (ds.manifest.n_users != li.n_users || ds.manifest.n_items != li.n_items)
    throw Error("split manifest disagrees with interactions.txt dimensions");

  std::vector<LabeledRecord> records;
  records.reserve(li.records.size());
  for (const RatingRecord& r : li.records)
    records.push_back({r.user, r.item, r.rating >= 0.5 ? 1 : 0});
  ds.graph = graph_from_labeled(records, li.n_users, li.n_items);
  ds.kg = load_kg(ds.kg_path);
  if (ds.kg.n_entities < li.n_items) ds.kg.n_entities = li.n_items;
  ds.kg.alignment.resize(li.n_items);
  for (idx i = 0; i < li.n_items; ++i) ds.kg.alignment[i] = i;

  ds.splits = split(ds.graph, ds.manifest.ratios, ds.manifest.seed);
  if (idx(ds.splits.train.size()) != ds.manifest.n_train ||
      idx(ds.splits.eval.size()) != ds.manifest.n_eval ||
      idx(ds.splits.test.size()) != ds.manifest.n_test)
    throw Error("re-derived split sizes disagree with split.txt manifest");
  return ds;
}

}  // namespace mcclk
