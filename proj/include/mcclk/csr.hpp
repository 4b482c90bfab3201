#pragma once

#include <vector>

#include "mcclk/common.hpp"
#include "mcclk/matrix.hpp"

namespace mcclk {

struct Edge {
  idx row, col;
  double w;
};

// Compressed sparse rows, immutable after construction. Column indices are
// strictly increasing within a row and all weights are finite.
struct SparseAdjacency {
  idx n_rows = 0, n_cols = 0;
  std::vector<idx> row_offsets;  // n_rows + 1
  std::vector<idx> col_indices;
  std::vector<double> values;

  idx nnz() const { return idx(col_indices.size()); }
  idx row_begin(idx r) const { return row_offsets[r]; }
  idx row_end(idx r) const { return row_offsets[r + 1]; }
};

SparseAdjacency build_csr(std::vector<Edge> edges, idx n_rows, idx n_cols);

// A_ij / sqrt(d_i * d_j) with d = row sums of the input; zero-degree rows or
// columns yield zero entries rather than NaN.
SparseAdjacency sym_degree_normalize(const SparseAdjacency& A);

SparseAdjacency transpose(const SparseAdjacency& A);

std::vector<double> densify(const SparseAdjacency& A);
SparseAdjacency csr_from_dense(const std::vector<double>& dense, idx n_rows,
                               idx n_cols);

// out (+)= A * X
void spmm(const SparseAdjacency& A, const Matrix& X, Matrix& out, int threads,
          bool accumulate = false);

}  // namespace mcclk
