#pragma once

#include <Eigen/Dense>
#include <limits>
#include <span>
#include <vector>

#include "twotower/encoder.hpp"

namespace twotower {

template <typename S>
struct SampledSoftmaxResult {
  S loss = S(0);  // mean negative log-likelihood over queries
  Mat<S> grad_queries;
  Mat<S> grad_targets;
  Mat<S> grad_negatives;
};

// Sampled softmax over the mixed candidate set {in-batch targets} u {uniform
// negatives}. For query i the positive class is target i; logits are
// dot / temperature minus the candidate's log sampling probability when log_q
// is given. candidate_items (size B + M, in-batch targets first) enables
// accidental-hit masking: any candidate other than position i carrying query
// i's target item is dropped from the partition function.
template <typename S>
SampledSoftmaxResult<S> sampled_softmax_loss(const Mat<S>& queries, const Mat<S>& targets,
                                             const Mat<S>& negatives, S temperature,
                                             std::span<const std::int32_t> candidate_items = {},
                                             const Vec<S>* log_q = nullptr) {
  const Eigen::Index b = queries.cols();
  const Eigen::Index m = negatives.cols();
  const Eigen::Index c = b + m;
  if (targets.cols() != b) throw ShapeError("sampled softmax: query/target batch mismatch");
  if (queries.rows() != targets.rows() || (m > 0 && negatives.rows() != queries.rows()))
    throw ShapeError("sampled softmax: embedding dim mismatch");
  if (b < 2 && m < 1)
    throw InvalidArgument("sampled softmax: need at least one negative per query");
  if (temperature <= S(0)) throw InvalidArgument("sampled softmax: temperature must be positive");
  if (!queries.allFinite() || !targets.allFinite() || !negatives.allFinite())
    throw InvalidArgument("sampled softmax: non-finite input embeddings");
  if (!candidate_items.empty() && static_cast<Eigen::Index>(candidate_items.size()) != c)
    throw ShapeError("sampled softmax: candidate item list size mismatch");
  if (log_q && log_q->size() != c) throw ShapeError("sampled softmax: log_q size mismatch");

  // logits: B x C
  Mat<S> logits(b, c);
  logits.leftCols(b).noalias() = queries.transpose() * targets;
  if (m > 0) logits.rightCols(m).noalias() = queries.transpose() * negatives;
  logits /= temperature;
  if (log_q) logits.rowwise() -= log_q->transpose();

  // Probabilities with masked candidates held at zero.
  Mat<S> probs = Mat<S>::Zero(b, c);
  S loss = S(0);
  for (Eigen::Index i = 0; i < b; ++i) {
    auto masked = [&](Eigen::Index j) {
      return !candidate_items.empty() && j != i &&
             candidate_items[static_cast<std::size_t>(j)] ==
                 candidate_items[static_cast<std::size_t>(i)];
    };
    S max_logit = -std::numeric_limits<S>::infinity();
    for (Eigen::Index j = 0; j < c; ++j)
      if (!masked(j)) max_logit = std::max(max_logit, logits(i, j));
    S denom = S(0);
    for (Eigen::Index j = 0; j < c; ++j)
      if (!masked(j)) denom += std::exp(logits(i, j) - max_logit);
    for (Eigen::Index j = 0; j < c; ++j)
      if (!masked(j)) probs(i, j) = std::exp(logits(i, j) - max_logit) / denom;
    loss += std::log(denom) + max_logit - logits(i, i);
  }
  loss /= static_cast<S>(b);

  // d(loss)/d(logit_ij) = (p_ij - [j == i]) / B
  Mat<S> d_logits = probs;
  for (Eigen::Index i = 0; i < b; ++i) d_logits(i, i) -= S(1);
  d_logits /= static_cast<S>(b) * temperature;

  SampledSoftmaxResult<S> out;
  out.loss = loss;
  out.grad_queries.noalias() =
      targets * d_logits.leftCols(b).transpose();
  if (m > 0) out.grad_queries.noalias() += negatives * d_logits.rightCols(m).transpose();
  out.grad_targets.noalias() = queries * d_logits.leftCols(b);
  out.grad_negatives = m > 0 ? (queries * d_logits.rightCols(m)).eval() : Mat<S>(queries.rows(), 0);
  return out;
}

template <typename S>
struct ReconstructionResult {
  S loss = S(0);  // mean squared error, averaged over dims and batch
  Mat<S> grad_projection;
  Mat<S> grad_target_rows;
};

// Squared Euclidean distance between the projection output and the target
// category's embedding row, normalized by the dimension (and batch columns).
template <typename S>
ReconstructionResult<S> reconstruction_loss(const Mat<S>& projection_out,
                                            const Mat<S>& target_rows) {
  if (projection_out.rows() != target_rows.rows() || projection_out.cols() != target_rows.cols())
    throw ShapeError("reconstruction loss: shape mismatch");
  if (projection_out.size() == 0) throw ShapeError("reconstruction loss: empty input");
  const S scale = S(1) / static_cast<S>(projection_out.rows() * projection_out.cols());
  Mat<S> residual = projection_out - target_rows;
  ReconstructionResult<S> out;
  out.loss = residual.squaredNorm() * scale;
  out.grad_projection = residual * (S(2) * scale);
  out.grad_target_rows = -out.grad_projection;
  return out;
}

}  // namespace twotower
