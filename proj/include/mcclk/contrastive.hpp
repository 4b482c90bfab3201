#pragma once

#include <span>
#include <vector>

#include "mcclk/matrix.hpp"

namespace mcclk {

// One-hidden-layer map applied before similarity computation:
// W2 elu(W1 z + b1) + b2. The same struct doubles as its gradient container.
struct ProjectionHead {
  Matrix W1, W2;
  std::vector<double> b1, b2;

  void resize(idx d) {
    W1.resize(d, d);
    W2.resize(d, d);
    b1.assign(d, 0.0);
    b2.assign(d, 0.0);
  }
  void zero() {
    W1.zero();
    W2.zero();
    std::fill(b1.begin(), b1.end(), 0.0);
    std::fill(b2.begin(), b2.end(), 0.0);
  }
  idx dim() const { return W1.rows; }
};

std::vector<double> project(const ProjectionHead& head,
                            std::span<const double> z);

// Batched projection; `preact` caches the hidden pre-activation for backward.
void project_rows(const ProjectionHead& head, const Matrix& Z, Matrix& out,
                  Matrix& preact, int threads);

void project_backward(const ProjectionHead& head, const Matrix& Z,
                      const Matrix& preact, const Matrix& g_out, Matrix& g_Z,
                      ProjectionHead& g_head, int threads);

// Mean per-anchor InfoNCE with cosine similarity: the positive pair is the
// same row in the other table; negatives are the other anchors (in-batch) or
// every other row (full scope), drawn from both views. Gradients scaled by
// `weight` accumulate into gA/gB when non-null.
double info_nce(const Matrix& A, const Matrix& B,
                const std::vector<idx>& anchors, bool full_scope, double tau,
                double weight, int threads, Matrix* gA, Matrix* gB);

double local_contrastive_loss(const Matrix& Zs_p, const Matrix& Zc_p,
                              const std::vector<idx>& batch, bool full_scope,
                              double tau, double weight, int threads,
                              Matrix* gZs, Matrix* gZc);

// Symmetric two-direction loss averaged over batch items and batch users
// (the item and user halves each weighted 1/2).
double global_contrastive_loss(const Matrix& Zg_i, const Matrix& Zl_i,
                               const Matrix& Zg_u, const Matrix& Zl_u,
                               const std::vector<idx>& item_batch,
                               const std::vector<idx>& user_batch,
                               bool full_scope, double tau, double weight,
                               int threads, Matrix* gGi, Matrix* gLi,
                               Matrix* gGu, Matrix* gLu);

}  // namespace mcclk
