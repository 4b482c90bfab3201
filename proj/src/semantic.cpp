#include "mcclk/semantic.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace mcclk {

KgAdjacency KgAdjacency::build(const KnowledgeGraph& kg, idx n_items) {
  KgAdjacency a;
  a.n_items = n_items;
  a.n_nodes = std::max(kg.n_entities, n_items);
  a.n_relations = kg.n_relations;
  const idx n_slots = idx(kg.triples.size()) * 2;
  a.offsets.assign(a.n_nodes + 1, 0);
  a.nbr.resize(n_slots);
  a.rel.resize(n_slots);
  a.mirror.resize(n_slots);
  a.slot_owner.resize(n_slots);

  for (const Triple& t : kg.triples) {
    ++a.offsets[t.head + 1];
    ++a.offsets[t.tail + 1];
  }
  for (idx n = 0; n < a.n_nodes; ++n) a.offsets[n + 1] += a.offsets[n];
  std::vector<idx> cursor(a.offsets.begin(), a.offsets.end() - 1);
  for (const Triple& t : kg.triples) {
    const idx s_head = cursor[t.head]++;
    const idx s_tail = cursor[t.tail]++;
    a.nbr[s_head] = t.tail;
    a.rel[s_head] = t.relation;
    a.mirror[s_head] = s_tail;
    a.slot_owner[s_head] = t.head;
    a.nbr[s_tail] = t.head;
    a.rel[s_tail] = t.relation;
    a.mirror[s_tail] = s_head;
    a.slot_owner[s_tail] = t.tail;
  }

  a.rel_offsets.assign(a.n_relations + 1, 0);
  for (idx s = 0; s < n_slots; ++s) ++a.rel_offsets[a.rel[s] + 1];
  for (idx r = 0; r < a.n_relations; ++r) a.rel_offsets[r + 1] += a.rel_offsets[r];
  a.rel_slots.resize(n_slots);
  std::vector<idx> rcur(a.rel_offsets.begin(), a.rel_offsets.end() - 1);
  for (idx s = 0; s < n_slots; ++s) a.rel_slots[rcur[a.rel[s]]++] = s;
  return a;
}

Matrix gather_kg_nodes(const KgAdjacency& adj, const Matrix& items,
                       const Matrix& entities) {
  if (items.cols != entities.cols)
    throw DimensionMismatch("item/entity embedding width disagrees");
  const idx d = items.cols;
  Matrix x(adj.n_nodes, d);
  for (idx n = 0; n < adj.n_nodes; ++n) {
    if (n < adj.n_items)
      std::memcpy(x.row(n), items.row(n), d * sizeof(double));
    else if (n < entities.rows)
      std::memcpy(x.row(n), entities.row(n), d * sizeof(double));
  }
  return x;
}

Matrix relation_aware_propagate(const KgAdjacency& adj, const Matrix& items,
                                const Matrix& entities,
                                const Matrix& relations, int depth,
                                int threads) {
  if (items.rows < adj.n_items)
    throw DimensionMismatch("item table smaller than item id space");
  const idx d = items.cols;
  if (relations.cols != d)
    throw DimensionMismatch("relation embedding width disagrees");

  Matrix x = gather_kg_nodes(adj, items, entities);
  Matrix next(adj.n_nodes, d);
  for (int hop = 0; hop < depth; ++hop) {
    parallel_for(adj.n_nodes, threads, [&](idx b, idx e) {
      std::vector<double> acc(d);
      for (idx n = b; n < e; ++n) {
        const idx s0 = adj.offsets[n], s1 = adj.offsets[n + 1];
        if (s0 == s1) {  // no triples: carry forward
          std::memcpy(next.row(n), x.row(n), d * sizeof(double));
          continue;
        }
        std::fill(acc.begin(), acc.end(), 0.0);
        for (idx s = s0; s < s1; ++s) {
          const double* er = relations.row(adj.rel[s]);
          const double* ev = x.row(adj.nbr[s]);
          for (idx q = 0; q < d; ++q) acc[q] += er[q] * ev[q];
        }
        const double inv = 1.0 / double(s1 - s0);
        double* o = next.row(n);
        for (idx q = 0; q < d; ++q) o[q] = acc[q] * inv;
      }
    });
    std::swap(x, next);
  }

  Matrix out(adj.n_items, d);
  std::memcpy(out.a.data(), x.a.data(),
              std::size_t(adj.n_items) * d * sizeof(double));
  return out;
}

double cosine_sim(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw DimensionMismatch("cosine_sim dimension mismatch");
  const idx d = idx(a.size());
  const double na = norm2(a.data(), d), nb = norm2(b.data(), d);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a.data(), b.data(), d) / (na * nb);
}

namespace {

// Top-k selection for one similarity row; self excluded, ties by smaller
// column, non-positive similarities dropped.
void select_row(const double* sims, idx n, idx self, idx k,
                std::vector<std::pair<idx, double>>& out) {
  out.clear();
  std::vector<std::pair<double, idx>> cand;
  cand.reserve(n > 0 ? n - 1 : 0);
  for (idx j = 0; j < n; ++j) {
    if (j == self) continue;
    cand.emplace_back(sims[j], j);
  }
  auto better = [](const std::pair<double, idx>& a,
                   const std::pair<double, idx>& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  };
  if (k < idx(cand.size())) {
    std::nth_element(cand.begin(), cand.begin() + k, cand.end(), better);
    cand.resize(k);
  }
  std::sort(cand.begin(), cand.end(), better);
  for (const auto& [s, j] : cand)
    if (s > 0.0) out.emplace_back(j, s);
}

}  // namespace

SparseAdjacency knn_sparsify(const Matrix& similarities, idx k) {
  if (k < 1) throw Error("knn_sparsify requires k >= 1");
  const idx n = similarities.rows;
  std::vector<Edge> edges;
  std::vector<std::pair<idx, double>> kept;
  for (idx i = 0; i < n; ++i) {
    select_row(similarities.row(i), n, i, k, kept);
    for (const auto& [j, s] : kept) edges.push_back({i, j, s});
  }
  return build_csr(std::move(edges), n, similarities.cols);
}

SemanticGraph build_semantic_graph(const KgAdjacency& adj, const Matrix& items,
                                   const Matrix& entities,
                                   const Matrix& relations, idx k, int depth,
                                   int threads, idx epoch, idx block_rows) {
  const idx n = adj.n_items;
  const idx d = items.cols;
  Matrix reps = relation_aware_propagate(adj, items, entities, relations,
                                         depth, threads);

  // Row-normalize once; zero rows stay zero and produce similarity 0.
  Matrix unit(n, d);
  parallel_for(n, threads, [&](idx b, idx e) {
    for (idx i = b; i < e; ++i) {
      const double nn = norm2(reps.row(i), d);
      if (nn > 0.0)
        for (idx q = 0; q < d; ++q) unit.at(i, q) = reps.at(i, q) / nn;
    }
  });

  // Dense similarities in row blocks to bound memory.
  std::vector<std::vector<std::pair<idx, double>>> kept(n);
  Matrix block;
  for (idx b0 = 0; b0 < n; b0 += block_rows) {
    const idx b1 = std::min(n, b0 + block_rows);
    block.resize(b1 - b0, n);
    parallel_for(b1 - b0, threads, [&](idx rb, idx re) {
      for (idx r = rb; r < re; ++r) {
        const double* ur = unit.row(b0 + r);
        double* out = block.row(r);
        for (idx j = 0; j < n; ++j) out[j] = dot(ur, unit.row(j), d);
      }
    });
    parallel_for(b1 - b0, threads, [&](idx rb, idx re) {
      for (idx r = rb; r < re; ++r)
        select_row(block.row(r), n, b0 + r, k, kept[b0 + r]);
    });
  }

  std::vector<Edge> edges;
  for (idx i = 0; i < n; ++i)
    for (const auto& [j, s] : kept[i]) edges.push_back({i, j, s});

  SemanticGraph g;
  g.adj = sym_degree_normalize(build_csr(std::move(edges), n, n));
  g.adj_t = transpose(g.adj);
  g.k = k;
  g.built_from_epoch = epoch;
  return g;
}

void export_semantic_graph(const SemanticGraph& g, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DiskWriteError("cannot write " + path);
  char buf[64];
  for (idx i = 0; i < g.adj.n_rows; ++i)
    for (idx p = g.adj.row_begin(i); p < g.adj.row_end(i); ++p) {
      std::snprintf(buf, sizeof(buf), "%.17g", g.adj.values[p]);
      out << i << " " << g.adj.col_indices[p] << " " << buf << "\n";
    }
}

}  // namespace mcclk
