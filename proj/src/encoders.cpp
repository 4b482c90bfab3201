#include "mcclk/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace mcclk {

namespace {

// spmm against the leading rows of a wider matrix (items prefix of the
// unified node matrix).
void spmm_prefix(const SparseAdjacency& A, const Matrix& X, Matrix& out,
                 int threads, bool accumulate) {
  if (X.rows < A.n_cols)
    throw DimensionMismatch("spmm_prefix: operand too small");
  if (!accumulate) out.resize(A.n_rows, X.cols);
  const idx d = X.cols;
  parallel_for(A.n_rows, threads, [&](idx b, idx e) {
    for (idx r = b; r < e; ++r) {
      double* o = out.row(r);
      for (idx p = A.row_begin(r); p < A.row_end(r); ++p)
        axpy(A.values[p], X.row(A.col_indices[p]), o, d);
    }
  });
}

}  // namespace

BipartiteGraph BipartiteGraph::build(
    const std::vector<std::pair<idx, idx>>& positives, idx n_users,
    idx n_items) {
  BipartiteGraph g;
  g.n_users = n_users;
  g.n_items = n_items;
  std::vector<idx> du(n_users, 0), di(n_items, 0);
  for (const auto& [u, i] : positives) {
    ++du[u];
    ++di[i];
  }
  std::vector<Edge> sym, mean;
  sym.reserve(positives.size());
  mean.reserve(positives.size());
  for (const auto& [u, i] : positives) {
    sym.push_back({u, i, 1.0 / std::sqrt(double(du[u]) * double(di[i]))});
    mean.push_back({u, i, 1.0 / double(du[u])});
  }
  g.ui_sym = build_csr(std::move(sym), n_users, n_items);
  g.iu_sym = transpose(g.ui_sym);
  g.ui_mean = build_csr(std::move(mean), n_users, n_items);
  g.iu_mean_t = transpose(g.ui_mean);
  return g;
}

void collaborative_encode(const BipartiteGraph& g, const Matrix& user_tab,
                          const Matrix& item_tab, int K, int threads,
                          Matrix& z_user, Matrix& z_item) {
  if (user_tab.cols != item_tab.cols)
    throw DimensionMismatch("user/item embedding width disagrees");
  z_user = user_tab;
  z_item = item_tab;
  Matrix eu = user_tab, ei = item_tab, nu, ni;
  for (int k = 0; k < K; ++k) {
    spmm(g.ui_sym, ei, nu, threads);
    spmm(g.iu_sym, eu, ni, threads);
    std::swap(eu, nu);
    std::swap(ei, ni);
    add_scaled(z_user, eu, 1.0);
    add_scaled(z_item, ei, 1.0);
  }
}

void collaborative_backward(const BipartiteGraph& g, const Matrix& gz_user,
                            const Matrix& gz_item, int K, int threads,
                            Matrix& g_user, Matrix& g_item) {
  Matrix du = gz_user, di = gz_item, nu, ni;
  for (int k = 0; k < K; ++k) {
    nu = gz_user;
    spmm(g.ui_sym, di, nu, threads, /*accumulate=*/true);
    ni = gz_item;
    spmm(g.iu_sym, du, ni, threads, /*accumulate=*/true);
    std::swap(du, nu);
    std::swap(di, ni);
  }
  add_scaled(g_user, du, 1.0);
  add_scaled(g_item, di, 1.0);
}

void semantic_encode(const SemanticGraph& s, const Matrix& item_tab, int L,
                     int threads, Matrix& z_item) {
  z_item = item_tab;
  Matrix x = item_tab, nx;
  for (int l = 0; l < L; ++l) {
    spmm(s.adj, x, nx, threads);
    std::swap(x, nx);
    add_scaled(z_item, x, 1.0);
  }
}

void semantic_backward(const SemanticGraph& s, const Matrix& gz_item, int L,
                       int threads, Matrix& g_item) {
  Matrix dx = gz_item, nx;
  for (int l = 0; l < L; ++l) {
    nx = gz_item;
    spmm(s.adj_t, dx, nx, threads, /*accumulate=*/true);
    std::swap(dx, nx);
  }
  add_scaled(g_item, dx, 1.0);
}

std::vector<double> relation_attention(
    const Matrix& nodes, idx query,
    const std::vector<std::pair<idx, idx>>& rel_nbr_pairs,
    const Matrix& relations) {
  if (rel_nbr_pairs.empty())
    throw EmptyNeighborhood("relation_attention over empty neighbor set");
  const idx d = nodes.cols;
  std::vector<double> logits(rel_nbr_pairs.size());
  for (std::size_t p = 0; p < rel_nbr_pairs.size(); ++p) {
    const auto& [r, v] = rel_nbr_pairs[p];
    logits[p] = dot(nodes.row(query), nodes.row(v), d) +
                dot(relations.row(r), relations.row(r), d);
  }
  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double& l : logits) {
    l = std::exp(l - m);
    sum += l;
  }
  for (double& l : logits) l /= sum;
  return logits;
}

void compute_attention(const KgAdjacency& adj, const Matrix& x0_nodes,
                       const Matrix& relations, int threads,
                       AttentionCache& cache) {
  const idx d = x0_nodes.cols;
  const idx self_rel = relations.rows - 1;
  cache.weight.assign(adj.nbr.size(), 0.0);
  cache.self_weight.assign(adj.n_nodes, 0.0);
  cache.inv_degree.assign(adj.n_nodes, 0.0);

  std::vector<double> rel_sq(relations.rows);
  for (idx r = 0; r < relations.rows; ++r)
    rel_sq[r] = dot(relations.row(r), relations.row(r), d);

  parallel_for(adj.n_nodes, threads, [&](idx b, idx e) {
    std::vector<double> logits;
    for (idx n = b; n < e; ++n) {
      const idx s0 = adj.offsets[n], s1 = adj.offsets[n + 1];
      if (s0 == s1) {
        cache.self_weight[n] = 1.0;
        continue;
      }
      cache.inv_degree[n] = 1.0 / double(s1 - s0);
      logits.resize(s1 - s0 + 1);
      const double* xn = x0_nodes.row(n);
      for (idx s = s0; s < s1; ++s)
        logits[s - s0] =
            dot(xn, x0_nodes.row(adj.nbr[s]), d) + rel_sq[adj.rel[s]];
      logits.back() = dot(xn, xn, d) + rel_sq[self_rel];
      const double m = *std::max_element(logits.begin(), logits.end());
      double sum = 0.0;
      for (double& l : logits) {
        l = std::exp(l - m);
        sum += l;
      }
      for (idx s = s0; s < s1; ++s) cache.weight[s] = logits[s - s0] / sum;
      cache.self_weight[n] = logits.back() / sum;
    }
  });
}

namespace {

void message_forward(const KgAdjacency& adj, const AttentionCache& attn,
                     const Matrix& relations, const Matrix& x, Matrix& out,
                     int threads) {
  const idx d = x.cols;
  out.resize(adj.n_nodes, d);
  parallel_for(adj.n_nodes, threads, [&](idx b, idx e) {
    std::vector<double> acc(d);
    for (idx n = b; n < e; ++n) {
      const idx s0 = adj.offsets[n], s1 = adj.offsets[n + 1];
      double* o = out.row(n);
      if (s0 == s1) {
        std::memset(o, 0, d * sizeof(double));
        continue;
      }
      std::fill(acc.begin(), acc.end(), 0.0);
      for (idx s = s0; s < s1; ++s) {
        const double w = attn.weight[s];
        const double* er = relations.row(adj.rel[s]);
        const double* ev = x.row(adj.nbr[s]);
        for (idx q = 0; q < d; ++q) acc[q] += w * er[q] * ev[q];
      }
      const double inv = attn.inv_degree[n];
      for (idx q = 0; q < d; ++q) o[q] = acc[q] * inv;
    }
  });
}

}  // namespace

void structural_encode(const BipartiteGraph& g, const KgAdjacency& adj,
                       const Matrix& user_tab, const Matrix& item_tab,
                       const Matrix& entity_tab, const Matrix& relations,
                       int Lp, int threads, StructuralCache& cache,
                       Matrix& z_user, Matrix& z_item,
                       bool recompute_attention) {
  const idx d = item_tab.cols;
  cache.x0_nodes = gather_kg_nodes(adj, item_tab, entity_tab);
  if (recompute_attention)
    compute_attention(adj, cache.x0_nodes, relations, threads, cache.attn);

  cache.user_layers.assign(1, user_tab);
  cache.node_layers.assign(1, cache.x0_nodes);
  for (int l = 0; l < Lp; ++l) {
    Matrix nu;
    spmm_prefix(g.ui_mean, cache.node_layers[l], nu, threads, false);
    Matrix nx;
    message_forward(adj, cache.attn, relations, cache.node_layers[l], nx,
                    threads);
    cache.user_layers.push_back(std::move(nu));
    cache.node_layers.push_back(std::move(nx));
  }

  z_user = cache.user_layers[0];
  for (int l = 1; l <= Lp; ++l) add_scaled(z_user, cache.user_layers[l], 1.0);
  z_item.resize(adj.n_items, d);
  for (int l = 0; l <= Lp; ++l)
    for (idx i = 0; i < adj.n_items; ++i)
      axpy(1.0, cache.node_layers[l].row(i), z_item.row(i), d);
}

void structural_backward(const BipartiteGraph& g, const KgAdjacency& adj,
                         const StructuralCache& cache, const Matrix& relations,
                         const Matrix& gz_user, const Matrix& gz_item, int Lp,
                         int threads, Matrix& g_user, Matrix& g_item,
                         Matrix& g_entity, Matrix& g_relation) {
  const idx d = gz_item.cols;
  const idx n_nodes = adj.n_nodes;
  const idx n_items = adj.n_items;
  const idx self_rel = relations.rows - 1;

  // Each user layer contributes G_u directly; each item layer below the top
  // additionally receives A_mean^T G_u from the user update above it.
  Matrix gxu(n_items, d);
  spmm(g.iu_mean_t, gz_user, gxu, threads);

  auto pad_items = [&](const Matrix& src, Matrix& dst, bool with_user_pull) {
    dst.resize(n_nodes, d);
    for (idx i = 0; i < n_items; ++i) {
      std::memcpy(dst.row(i), src.row(i), d * sizeof(double));
      if (with_user_pull) axpy(1.0, gxu.row(i), dst.row(i), d);
    }
  };

  std::vector<double> dbeta(adj.nbr.size(), 0.0);
  Matrix dX;
  pad_items(gz_item, dX, false);  // adjoint at the top layer

  Matrix dX_new(n_nodes, d);
  for (int l = Lp - 1; l >= 0; --l) {
    const Matrix& x_l = cache.node_layers[l];
    // dbeta accumulates across layers; the softmax is shared.
    parallel_for(n_nodes, threads, [&](idx b, idx e) {
      for (idx n = b; n < e; ++n)
        for (idx s = adj.offsets[n]; s < adj.offsets[n + 1]; ++s) {
          const double* er = relations.row(adj.rel[s]);
          const double* gi = dX.row(n);
          const double* xv = x_l.row(adj.nbr[s]);
          double acc = 0.0;
          for (idx q = 0; q < d; ++q) acc += gi[q] * er[q] * xv[q];
          dbeta[s] += cache.attn.inv_degree[n] * acc;
        }
    });
    // Relation gradient for this layer, pulled per relation.
    parallel_for(adj.n_relations, threads, [&](idx rb, idx re) {
      for (idx r = rb; r < re; ++r) {
        double* gr = g_relation.row(r);
        for (idx p = adj.rel_offsets[r]; p < adj.rel_offsets[r + 1]; ++p) {
          const idx s = adj.rel_slots[p];
          const idx owner = adj.slot_owner[s];
          const double c =
              cache.attn.weight[s] * cache.attn.inv_degree[owner];
          const double* gi = dX.row(owner);
          const double* xv = x_l.row(adj.nbr[s]);
          for (idx q = 0; q < d; ++q) gr[q] += c * gi[q] * xv[q];
        }
      }
    });
    // Adjoint at layer l: direct z term, user pull, and mirrored messages.
    pad_items(gz_item, dX_new, true);
    parallel_for(n_nodes, threads, [&](idx b, idx e) {
      for (idx n = b; n < e; ++n) {
        double* o = dX_new.row(n);
        for (idx s = adj.offsets[n]; s < adj.offsets[n + 1]; ++s) {
          const idx ms = adj.mirror[s];
          const idx anchor = adj.nbr[s];
          const double c =
              cache.attn.weight[ms] * cache.attn.inv_degree[anchor];
          if (c == 0.0) continue;
          const double* er = relations.row(adj.rel[s]);
          const double* ga = dX.row(anchor);
          for (idx q = 0; q < d; ++q) o[q] += c * er[q] * ga[q];
        }
      }
    });
    std::swap(dX, dX_new);
  }

  // Softmax backward into layer-0 embeddings and relation rows. The self
  // term has no message, so its incoming gradient is zero but it still
  // shifts the normalization.
  std::vector<double> dlogit(adj.nbr.size(), 0.0);
  std::vector<double> dlogit_self(n_nodes, 0.0);
  parallel_for(n_nodes, threads, [&](idx b, idx e) {
    for (idx n = b; n < e; ++n) {
      const idx s0 = adj.offsets[n], s1 = adj.offsets[n + 1];
      if (s0 == s1) continue;
      double dot_wg = 0.0;
      for (idx s = s0; s < s1; ++s) dot_wg += cache.attn.weight[s] * dbeta[s];
      for (idx s = s0; s < s1; ++s)
        dlogit[s] = cache.attn.weight[s] * (dbeta[s] - dot_wg);
      dlogit_self[n] = cache.attn.self_weight[n] * (0.0 - dot_wg);
    }
  });

  Matrix gx0(n_nodes, d);
  parallel_for(n_nodes, threads, [&](idx b, idx e) {
    for (idx n = b; n < e; ++n) {
      double* o = gx0.row(n);
      const idx s0 = adj.offsets[n], s1 = adj.offsets[n + 1];
      for (idx s = s0; s < s1; ++s) {
        // anchor role for slot s, neighbor role for its mirror
        axpy(dlogit[s], cache.x0_nodes.row(adj.nbr[s]), o, d);
        axpy(dlogit[adj.mirror[s]], cache.x0_nodes.row(adj.nbr[s]), o, d);
      }
      if (s0 != s1) axpy(2.0 * dlogit_self[n], cache.x0_nodes.row(n), o, d);
    }
  });
  parallel_for(adj.n_relations, threads, [&](idx rb, idx re) {
    for (idx r = rb; r < re; ++r) {
      double coef = 0.0;
      for (idx p = adj.rel_offsets[r]; p < adj.rel_offsets[r + 1]; ++p)
        coef += dlogit[adj.rel_slots[p]];
      axpy(2.0 * coef, relations.row(r), g_relation.row(r), d);
    }
  });
  const double self_coef = parallel_sum(
      n_nodes, threads, [&](idx b, idx e) {
        double s = 0.0;
        for (idx n = b; n < e; ++n) s += dlogit_self[n];
        return s;
      });
  axpy(2.0 * self_coef, relations.row(self_rel), g_relation.row(self_rel), d);

  // Split node-space gradients back into the item and entity tables.
  add_scaled(g_user, gz_user, 1.0);
  for (idx i = 0; i < n_items; ++i) axpy(1.0, dX.row(i), g_item.row(i), d);
  for (idx i = 0; i < n_items; ++i) axpy(1.0, gx0.row(i), g_item.row(i), d);
  for (idx n2 = n_items; n2 < n_nodes; ++n2) {
    if (n2 >= g_entity.rows) break;
    axpy(1.0, dX.row(n2), g_entity.row(n2), d);
    axpy(1.0, gx0.row(n2), g_entity.row(n2), d);
  }
}

}  // namespace mcclk
