#include "mcclk/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace mcclk {

namespace {

double elu(double x) { return x > 0.0 ? x : std::expm1(x); }
double elu_grad(double x) { return x > 0.0 ? 1.0 : std::exp(x); }

void col_sums_add(const Matrix& M, std::vector<double>& out) {
  for (idx i = 0; i < M.rows; ++i) {
    const double* r = M.row(i);
    for (idx j = 0; j < M.cols; ++j) out[j] += r[j];
  }
}

// Unit rows plus the original norms; zero rows stay zero with norm 0.
void normalize_rows(const Matrix& X, Matrix& unit, std::vector<double>& norms,
                    int threads) {
  unit.resize(X.rows, X.cols);
  norms.assign(X.rows, 0.0);
  parallel_for(X.rows, threads, [&](idx b, idx e) {
    for (idx i = b; i < e; ++i) {
      const double n = norm2(X.row(i), X.cols);
      norms[i] = n;
      if (n > 0.0)
        for (idx q = 0; q < X.cols; ++q) unit.at(i, q) = X.at(i, q) / n;
    }
  });
}

// grad w.r.t. x from grad w.r.t. x/||x||
void normalize_backward_row(const double* g_unit, const double* unit,
                            double norm, double* g_x, idx d) {
  if (norm <= 0.0) return;
  const double proj = dot(g_unit, unit, d);
  for (idx q = 0; q < d; ++q) g_x[q] += (g_unit[q] - proj * unit[q]) / norm;
}

}  // namespace

std::vector<double> project(const ProjectionHead& head,
                            std::span<const double> z) {
  const idx d = head.dim();
  if (idx(z.size()) != d)
    throw DimensionMismatch("project: vector dimension disagrees with head");
  std::vector<double> h(d), out(d);
  for (idx i = 0; i < d; ++i)
    h[i] = elu(dot(head.W1.row(i), z.data(), d) + head.b1[i]);
  for (idx i = 0; i < d; ++i)
    out[i] = dot(head.W2.row(i), h.data(), d) + head.b2[i];
  return out;
}

void project_rows(const ProjectionHead& head, const Matrix& Z, Matrix& out,
                  Matrix& preact, int threads) {
  const idx d = head.dim();
  if (Z.cols != d)
    throw DimensionMismatch("project: table width disagrees with head");
  matmul_nt(Z, head.W1, preact, threads);
  Matrix act(Z.rows, d);
  parallel_for(Z.rows, threads, [&](idx b, idx e) {
    for (idx i = b; i < e; ++i)
      for (idx q = 0; q < d; ++q) {
        preact.at(i, q) += head.b1[q];
        act.at(i, q) = elu(preact.at(i, q));
      }
  });
  matmul_nt(act, head.W2, out, threads);
  parallel_for(Z.rows, threads, [&](idx b, idx e) {
    for (idx i = b; i < e; ++i)
      for (idx q = 0; q < d; ++q) out.at(i, q) += head.b2[q];
  });
}

void project_backward(const ProjectionHead& head, const Matrix& Z,
                      const Matrix& preact, const Matrix& g_out, Matrix& g_Z,
                      ProjectionHead& g_head, int threads) {
  const idx d = head.dim();
  Matrix act(Z.rows, d);
  for (idx i = 0; i < Z.rows; ++i)
    for (idx q = 0; q < d; ++q) act.at(i, q) = elu(preact.at(i, q));

  matmul_tn_acc(g_out, act, g_head.W2, threads);
  col_sums_add(g_out, g_head.b2);

  Matrix gh;
  matmul_nn(g_out, head.W2, gh, threads);
  parallel_for(Z.rows, threads, [&](idx b, idx e) {
    for (idx i = b; i < e; ++i)
      for (idx q = 0; q < d; ++q) gh.at(i, q) *= elu_grad(preact.at(i, q));
  });

  matmul_tn_acc(gh, Z, g_head.W1, threads);
  col_sums_add(gh, g_head.b1);
  matmul_nn(gh, head.W1, g_Z, threads, /*accumulate=*/true);
}

double info_nce(const Matrix& A, const Matrix& B,
                const std::vector<idx>& anchors, bool full_scope, double tau,
                double weight, int threads, Matrix* gA, Matrix* gB) {
  if (tau <= 0.0) throw Error("temperature must be positive");
  const idx n = idx(anchors.size());
  if (n < 2) throw BatchTooSmall("contrastive batch needs at least 2 anchors");
  if (A.rows != B.rows || A.cols != B.cols)
    throw DimensionMismatch("contrastive views must be aligned tables");
  const idx d = A.cols;

  // Negatives come from the anchor set (in-batch) or from every table row.
  std::vector<idx> neg_ids;
  if (full_scope) {
    neg_ids.resize(A.rows);
    for (idx i = 0; i < A.rows; ++i) neg_ids[i] = i;
  } else {
    neg_ids = anchors;
  }
  const idx m = idx(neg_ids.size());
  // position of each anchor inside the negative list (for the k != i holes)
  std::vector<idx> self_pos(n);
  if (full_scope) {
    for (idx i = 0; i < n; ++i) self_pos[i] = anchors[i];
  } else {
    for (idx i = 0; i < n; ++i) self_pos[i] = i;
  }

  Matrix Asub = gather_rows(A, anchors);
  Matrix Aneg = gather_rows(A, neg_ids);
  Matrix Bneg = gather_rows(B, neg_ids);

  Matrix Ah, AhN, BhN;
  std::vector<double> na, naN, nbN;
  normalize_rows(Asub, Ah, na, threads);
  normalize_rows(Aneg, AhN, naN, threads);
  normalize_rows(Bneg, BhN, nbN, threads);

  Matrix Saa, Sab;
  matmul_nt(Ah, AhN, Saa, threads);  // n x m
  matmul_nt(Ah, BhN, Sab, threads);

  std::vector<double> losses(n, 0.0);
  // Saa/Sab are overwritten in place by the softmax coefficients.
  parallel_for(n, threads, [&](idx b, idx e) {
    for (idx i = b; i < e; ++i) {
      double* saa = Saa.row(i);
      double* sab = Sab.row(i);
      const idx self = self_pos[i];
      const double pos = sab[self] / tau;
      double mx = pos;
      for (idx j = 0; j < m; ++j) {
        if (j != self && saa[j] / tau > mx) mx = saa[j] / tau;
        if (sab[j] / tau > mx) mx = sab[j] / tau;
      }
      double sum = 0.0;
      for (idx j = 0; j < m; ++j) {
        const double ea = j == self ? 0.0 : std::exp(saa[j] / tau - mx);
        const double eb = std::exp(sab[j] / tau - mx);
        saa[j] = ea;
        sab[j] = eb;
        sum += ea + eb;
      }
      losses[i] = std::log(sum) + mx - pos;
      const double inv = 1.0 / sum;
      for (idx j = 0; j < m; ++j) {
        saa[j] *= inv;
        sab[j] *= inv;
      }
      sab[self] -= 1.0;  // positive pair
    }
  });

  double total = 0.0;
  for (double l : losses) total += l;
  const double loss = total / double(n);

  if (gA == nullptr && gB == nullptr) return loss;

  const double scale = weight / (double(n) * tau);
  for (auto& v : Saa.a) v *= scale;
  for (auto& v : Sab.a) v *= scale;

  // Gradients w.r.t. the unit rows.
  Matrix gAh(n, d), gAhN(m, d), gBhN(m, d);
  matmul_nn(Saa, AhN, gAh, threads);
  matmul_nn(Sab, BhN, gAh, threads, /*accumulate=*/true);
  matmul_tn_acc(Saa, Ah, gAhN, threads);
  matmul_tn_acc(Sab, Ah, gBhN, threads);

  // Through the normalization, then scatter into the full tables. Anchor and
  // negative roles may hit the same row; do it serially in a fixed order.
  if (gA != nullptr) {
    Matrix gasub(n, d);
    for (idx i = 0; i < n; ++i)
      normalize_backward_row(gAh.row(i), Ah.row(i), na[i], gasub.row(i), d);
    scatter_add_rows(*gA, anchors, gasub);
    Matrix ganeg(m, d);
    for (idx j = 0; j < m; ++j)
      normalize_backward_row(gAhN.row(j), AhN.row(j), naN[j], ganeg.row(j), d);
    scatter_add_rows(*gA, neg_ids, ganeg);
  }
  if (gB != nullptr) {
    Matrix gbneg(m, d);
    for (idx j = 0; j < m; ++j)
      normalize_backward_row(gBhN.row(j), BhN.row(j), nbN[j], gbneg.row(j), d);
    scatter_add_rows(*gB, neg_ids, gbneg);
  }
  return loss;
}

double local_contrastive_loss(const Matrix& Zs_p, const Matrix& Zc_p,
                              const std::vector<idx>& batch, bool full_scope,
                              double tau, double weight, int threads,
                              Matrix* gZs, Matrix* gZc) {
  return info_nce(Zs_p, Zc_p, batch, full_scope, tau, weight, threads, gZs,
                  gZc);
}

double global_contrastive_loss(const Matrix& Zg_i, const Matrix& Zl_i,
                               const Matrix& Zg_u, const Matrix& Zl_u,
                               const std::vector<idx>& item_batch,
                               const std::vector<idx>& user_batch,
                               bool full_scope, double tau, double weight,
                               int threads, Matrix* gGi, Matrix* gLi,
                               Matrix* gGu, Matrix* gLu) {
  const double w = weight * 0.5;
  double loss = 0.0;
  loss += 0.5 * info_nce(Zg_i, Zl_i, item_batch, full_scope, tau, w, threads,
                         gGi, gLi);
  loss += 0.5 * info_nce(Zl_i, Zg_i, item_batch, full_scope, tau, w, threads,
                         gLi, gGi);
  loss += 0.5 * info_nce(Zg_u, Zl_u, user_batch, full_scope, tau, w, threads,
                         gGu, gLu);
  loss += 0.5 * info_nce(Zl_u, Zg_u, user_batch, full_scope, tau, w, threads,
                         gLu, gGu);
  return loss;
}

}  // namespace mcclk
