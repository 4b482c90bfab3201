#include "mcclk/csr.hpp"

#include <algorithm>
#include <cmath>

namespace mcclk {

SparseAdjacency build_csr(std::vector<Edge> edges, idx n_rows, idx n_cols) {
  for (const Edge& e : edges) {
    if (e.row < 0 || e.row >= n_rows || e.col < 0 || e.col >= n_cols)
      throw IndexOutOfBounds("edge (" + std::to_string(e.row) + "," +
                             std::to_string(e.col) + ") outside " +
                             std::to_string(n_rows) + "x" +
                             std::to_string(n_cols));
    if (!std::isfinite(e.w))
      throw NonFiniteValue("non-finite edge weight at (" +
                           std::to_string(e.row) + "," + std::to_string(e.col) +
                           ")");
  }
  std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  for (std::size_t i = 1; i < edges.size(); ++i)
    if (edges[i].row == edges[i - 1].row && edges[i].col == edges[i - 1].col)
      throw DuplicateEdge("duplicate edge (" + std::to_string(edges[i].row) +
                          "," + std::to_string(edges[i].col) + ")");

  SparseAdjacency A;
  A.n_rows = n_rows;
  A.n_cols = n_cols;
  A.row_offsets.assign(n_rows + 1, 0);
  A.col_indices.resize(edges.size());
  A.values.resize(edges.size());
  for (const Edge& e : edges) ++A.row_offsets[e.row + 1];
  for (idx r = 0; r < n_rows; ++r) A.row_offsets[r + 1] += A.row_offsets[r];
  for (std::size_t i = 0; i < edges.size(); ++i) {
    A.col_indices[i] = edges[i].col;
    A.values[i] = edges[i].w;
  }
  return A;
}

SparseAdjacency sym_degree_normalize(const SparseAdjacency& A) {
  std::vector<double> deg(A.n_rows, 0.0);
  for (idx r = 0; r < A.n_rows; ++r)
    for (idx p = A.row_begin(r); p < A.row_end(r); ++p) {
      if (A.values[p] < 0.0)
        throw NegativeWeight("negative weight at row " + std::to_string(r));
      deg[r] += A.values[p];
    }
  SparseAdjacency out = A;
  for (idx r = 0; r < A.n_rows; ++r) {
    const double dr = deg[r];
    for (idx p = A.row_begin(r); p < A.row_end(r); ++p) {
      const idx c = A.col_indices[p];
      // Degrees come from row sums; a column with an empty row has degree 0.
      const double dc = c < idx(deg.size()) ? deg[c] : 0.0;
      out.values[p] = (dr > 0.0 && dc > 0.0)
                          ? A.values[p] / std::sqrt(dr * dc)
                          : 0.0;
    }
  }
  return out;
}

SparseAdjacency transpose(const SparseAdjacency& A) {
  SparseAdjacency T;
  T.n_rows = A.n_cols;
  T.n_cols = A.n_rows;
  T.row_offsets.assign(T.n_rows + 1, 0);
  T.col_indices.resize(A.nnz());
  T.values.resize(A.nnz());
  for (idx p = 0; p < A.nnz(); ++p) ++T.row_offsets[A.col_indices[p] + 1];
  for (idx r = 0; r < T.n_rows; ++r) T.row_offsets[r + 1] += T.row_offsets[r];
  std::vector<idx> cursor(T.row_offsets.begin(), T.row_offsets.end() - 1);
  for (idx r = 0; r < A.n_rows; ++r)
    for (idx p = A.row_begin(r); p < A.row_end(r); ++p) {
      const idx c = A.col_indices[p];
      const idx q = cursor[c]++;
      T.col_indices[q] = r;
      T.values[q] = A.values[p];
    }
  return T;
}

std::vector<double> densify(const SparseAdjacency& A) {
  std::vector<double> dense(std::size_t(A.n_rows) * A.n_cols, 0.0);
  for (idx r = 0; r < A.n_rows; ++r)
    for (idx p = A.row_begin(r); p < A.row_end(r); ++p)
      dense[std::size_t(r) * A.n_cols + A.col_indices[p]] = A.values[p];
  return dense;
}

SparseAdjacency csr_from_dense(const std::vector<double>& dense, idx n_rows,
                               idx n_cols) {
  std::vector<Edge> edges;
  for (idx r = 0; r < n_rows; ++r)
    for (idx c = 0; c < n_cols; ++c) {
      const double v = dense[std::size_t(r) * n_cols + c];
      if (v != 0.0) edges.push_back({r, c, v});
    }
  return build_csr(std::move(edges), n_rows, n_cols);
}

void spmm(const SparseAdjacency& A, const Matrix& X, Matrix& out, int threads,
          bool accumulate) {
  if (X.rows != A.n_cols)
    throw DimensionMismatch("spmm: X has " + std::to_string(X.rows) +
                            " rows, adjacency expects " +
                            std::to_string(A.n_cols));
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

}  // namespace mcclk
