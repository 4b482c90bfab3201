#include "mcclk/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace mcclk {

double auc(const std::vector<int>& labels, const std::vector<double>& scores) {
  if (labels.size() != scores.size())
    throw DimensionMismatch("auc: labels/scores length mismatch");
  const idx n = idx(labels.size());
  idx n_pos = 0;
  for (int l : labels) n_pos += l ? 1 : 0;
  const idx n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw DegenerateLabels("auc needs at least one positive and one negative");

  std::vector<idx> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](idx a, idx b) { return scores[a] < scores[b]; });

  // average ranks over tie groups
  double pos_rank_sum = 0.0;
  idx i = 0;
  while (i < n) {
    idx j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * double(i + 1 + j);  // ranks are 1-based
    for (idx t = i; t < j; ++t)
      if (labels[order[t]]) pos_rank_sum += avg_rank;
    i = j;
  }
  return (pos_rank_sum - 0.5 * double(n_pos) * double(n_pos + 1)) /
         (double(n_pos) * double(n_neg));
}

double f1(const std::vector<int>& labels, const std::vector<double>& scores) {
  if (labels.size() != scores.size())
    throw DimensionMismatch("f1: labels/scores length mismatch");
  idx tp = 0, fp = 0, fn = 0;
  for (std::size_t t = 0; t < labels.size(); ++t) {
    const bool pred = scores[t] >= 0.0;
    if (pred && labels[t]) ++tp;
    else if (pred && !labels[t]) ++fp;
    else if (!pred && labels[t]) ++fn;
  }
  if (tp == 0) return 0.0;
  const double precision = double(tp) / double(tp + fp);
  const double recall = double(tp) / double(tp + fn);
  return 2.0 * precision * recall / (precision + recall);
}

std::vector<TopKResult> recall_at_k(
    idx n_users, idx n_items,
    const std::function<void(idx user, std::vector<double>& scores)>&
        score_user,
    const std::vector<std::vector<idx>>& train_positives,
    const std::vector<std::vector<idx>>& test_positives,
    const std::vector<idx>& ks, int threads) {
  std::vector<idx> qualifying;
  for (idx u = 0; u < n_users; ++u)
    if (!test_positives[u].empty()) qualifying.push_back(u);

  const idx max_k = ks.empty() ? 0 : *std::max_element(ks.begin(), ks.end());
  // per user: hit counts at each k
  Matrix hits(idx(qualifying.size()), idx(ks.size()));

  parallel_for(idx(qualifying.size()), threads, [&](idx b, idx e) {
    std::vector<double> scores;
    std::vector<idx> cand;
    for (idx qi = b; qi < e; ++qi) {
      const idx u = qualifying[qi];
      scores.assign(std::size_t(n_items), 0.0);
      score_user(u, scores);
      cand.clear();
      const auto& train_u = train_positives[u];
      for (idx it = 0; it < n_items; ++it)
        if (!std::binary_search(train_u.begin(), train_u.end(), it))
          cand.push_back(it);
      auto better = [&](idx a, idx bb) {
        return scores[a] != scores[bb] ? scores[a] > scores[bb] : a < bb;
      };
      const idx top = std::min<idx>(max_k, idx(cand.size()));
      std::partial_sort(cand.begin(), cand.begin() + top, cand.end(), better);
      const auto& test_u = test_positives[u];
      for (std::size_t kidx = 0; kidx < ks.size(); ++kidx) {
        const idx kk = std::min<idx>(ks[kidx], top);
        idx h = 0;
        for (idx t = 0; t < kk; ++t)
          if (std::binary_search(test_u.begin(), test_u.end(), cand[t])) ++h;
        hits.at(qi, idx(kidx)) = double(h) / double(test_u.size());
      }
    }
  });

  std::vector<TopKResult> out;
  for (std::size_t kidx = 0; kidx < ks.size(); ++kidx) {
    TopKResult r;
    r.k = ks[kidx];
    r.n_users = idx(qualifying.size());
    double sum = 0.0;
    for (idx qi = 0; qi < idx(qualifying.size()); ++qi) {
      sum += hits.at(qi, idx(kidx));
      r.per_user.emplace_back(qualifying[qi], hits.at(qi, idx(kidx)));
    }
    r.recall = qualifying.empty() ? 0.0 : sum / double(qualifying.size());
    out.push_back(std::move(r));
  }
  return out;
}

SvdProjection svd_project_2d(const Matrix& items, int max_iter, double tol) {
  const idx n = items.rows, d = items.cols;
  if (n < 2 || d < 2)
    throw Error("svd_project_2d needs at least a 2x2 table");

  // Gram matrix X^T X
  Matrix gram(d, d);
  matmul_tn_acc(items, items, gram, 1);

  auto apply = [&](const std::array<std::vector<double>, 2>& q,
                   std::array<std::vector<double>, 2>& out) {
    for (int c = 0; c < 2; ++c)
      for (idx r = 0; r < d; ++r)
        out[c][r] = dot(gram.row(r), q[c].data(), d);
  };

  // deterministic start, orthonormalized
  Rng rng(0x5bd1e995u);
  std::array<std::vector<double>, 2> q{std::vector<double>(d),
                                       std::vector<double>(d)};
  for (int c = 0; c < 2; ++c)
    for (idx r = 0; r < d; ++r) q[c][r] = rng.uniform(-1.0, 1.0);

  auto orthonormalize = [&](std::array<std::vector<double>, 2>& v) {
    double n1 = norm2(v[0].data(), d);
    if (n1 < 1e-300) {
      std::fill(v[0].begin(), v[0].end(), 0.0);
      v[0][0] = 1.0;
      n1 = 1.0;
    }
    for (idx r = 0; r < d; ++r) v[0][r] /= n1;
    const double proj = dot(v[1].data(), v[0].data(), d);
    for (idx r = 0; r < d; ++r) v[1][r] -= proj * v[0][r];
    double n2 = norm2(v[1].data(), d);
    if (n2 < 1e-300) {
      // degenerate second direction: pick the coordinate axis least aligned
      // with the first
      idx best = 0;
      double best_abs = std::abs(v[0][0]);
      for (idx r = 1; r < d; ++r)
        if (std::abs(v[0][r]) < best_abs) {
          best_abs = std::abs(v[0][r]);
          best = r;
        }
      std::fill(v[1].begin(), v[1].end(), 0.0);
      v[1][best] = 1.0;
      const double pr = dot(v[1].data(), v[0].data(), d);
      for (idx r = 0; r < d; ++r) v[1][r] -= pr * v[0][r];
      n2 = norm2(v[1].data(), d);
    }
    for (idx r = 0; r < d; ++r) v[1][r] /= n2;
  };
  orthonormalize(q);

  std::array<std::vector<double>, 2> z{std::vector<double>(d),
                                       std::vector<double>(d)};
  bool converged = false;
  for (int it = 0; it < max_iter; ++it) {
    apply(q, z);
    std::array<std::vector<double>, 2> q_new = z;
    orthonormalize(q_new);
    double drift = 0.0;
    for (int c = 0; c < 2; ++c)
      drift = std::max(drift,
                       1.0 - std::abs(dot(q_new[c].data(), q[c].data(), d)));
    q = q_new;
    if (drift < tol && it > 0) {
      converged = true;
      break;
    }
  }

  // Rayleigh quotients give the eigenvalues of the (converged) subspace.
  apply(q, z);
  std::array<double, 2> lam{dot(q[0].data(), z[0].data(), d),
                            dot(q[1].data(), z[1].data(), d)};
  // A tiny second eigenvalue stops rotating long before `drift` notices;
  // accept when the residual is negligible relative to the top eigenvalue.
  if (!converged) {
    double resid = 0.0;
    for (int c = 0; c < 2; ++c) {
      double r2 = 0.0;
      for (idx r = 0; r < d; ++r) {
        const double diff = z[c][r] - lam[c] * q[c][r];
        r2 += diff * diff;
      }
      resid = std::max(resid, std::sqrt(r2));
    }
    const double scale = std::max(std::abs(lam[0]), 1e-300);
    if (resid > 1e-8 * scale)
      throw ConvergenceFailure("svd_project_2d did not converge in " +
                               std::to_string(max_iter) + " iterations");
  }

  if (lam[1] > lam[0]) {
    std::swap(lam[0], lam[1]);
    std::swap(q[0], q[1]);
  }

  SvdProjection out;
  out.directions.resize(d, 2);
  for (idx r = 0; r < d; ++r) {
    out.directions.at(r, 0) = q[0][r];
    out.directions.at(r, 1) = q[1][r];
  }
  out.singular = {std::sqrt(std::max(0.0, lam[0])),
                  std::sqrt(std::max(0.0, lam[1]))};
  const double top = out.singular[0];
  out.singular_normalized = {top > 0.0 ? 1.0 : 0.0,
                             top > 0.0 ? out.singular[1] / top : 0.0};
  out.coords.resize(n, 2);
  for (idx i = 0; i < n; ++i) {
    out.coords.at(i, 0) = dot(items.row(i), q[0].data(), d);
    out.coords.at(i, 1) = dot(items.row(i), q[1].data(), d);
  }
  return out;
}

}  // namespace mcclk
