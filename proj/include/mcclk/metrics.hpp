#pragma once

#include <functional>
#include <vector>

#include "mcclk/matrix.hpp"

namespace mcclk {

// Rank-statistic AUC with ties counted 1/2. Needs at least one positive and
// one negative label.
double auc(const std::vector<int>& labels, const std::vector<double>& scores);

// Prediction is positive iff sigmoid(score) >= 0.5, i.e. score >= 0;
// 0 when precision + recall is 0.
double f1(const std::vector<int>& labels, const std::vector<double>& scores);

struct CtrResult {
  double auc = 0.0, f1 = 0.0;
  idx n_evaluated = 0;
};

struct TopKResult {
  idx k = 0;
  double recall = 0.0;
  idx n_users = 0;  // users with at least one test positive
  std::vector<std::pair<idx, double>> per_user;
};

// Per user: |top-k intersect test positives| / |test positives| over the
// candidate set (all items minus the user's train positives); mean over
// qualifying users; ties broken toward the smaller item id.
std::vector<TopKResult> recall_at_k(
    idx n_users, idx n_items,
    const std::function<void(idx user, std::vector<double>& scores)>&
        score_user,
    const std::vector<std::vector<idx>>& train_positives,  // sorted per user
    const std::vector<std::vector<idx>>& test_positives,   // sorted per user
    const std::vector<idx>& ks, int threads);

struct SvdProjection {
  Matrix coords;                  // N x 2
  Matrix directions;              // d x 2, orthonormal columns
  std::array<double, 2> singular; // raw singular values, non-increasing
  std::array<double, 2> singular_normalized;  // divided by the largest
};

// Top-2 right singular directions via orthogonal iteration on the d x d
// Gram matrix.
SvdProjection svd_project_2d(const Matrix& items, int max_iter = 1000,
                             double tol = 1e-14);

}  // namespace mcclk
