#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fairrec/graph.hpp"

namespace fairrec {

struct LossWeights {
  double lambda_c = 1.0;
  double lambda_u = 1.0;
  double lambda_n = 1.0;
  double lambda_a = 0.004;
};

// Training-time click score: both user views against both news views.
inline NodeRef click_score_biasaware(Graph& g, NodeRef user_fair, NodeRef user_biased,
                                     NodeRef news_fair, NodeRef news_biased) {
  NodeRef u = g.add(user_fair, user_biased);
  NodeRef n = g.add(news_fair, news_biased);
  return g.matmul(u, g.transpose(n));
}

// Serving-time click score: fair views only, before the sigmoid.
inline NodeRef click_score_fair(Graph& g, NodeRef user_fair, NodeRef news_fair) {
  return g.matmul(user_fair, g.transpose(news_fair));
}

// Contrastive click loss over batched score rows. Each row holds the positive
// score first, then a shared number of negative scores; the result is the mean
// softmax cross-entropy against position zero.
inline NodeRef nce_loss_batch(Graph& g, const std::vector<std::vector<NodeRef>>& score_rows) {
  if (score_rows.empty()) throw ContractError("nce_loss_batch: empty batch");
  const std::size_t width = score_rows.front().size();
  if (width < 2) throw ContractError("nce_loss_batch: need at least one negative score");
  std::vector<NodeRef> rows;
  rows.reserve(score_rows.size());
  for (const std::vector<NodeRef>& scores : score_rows) {
    if (scores.size() != width) {
      throw ContractError("nce_loss_batch: ragged score rows (" + std::to_string(scores.size()) +
                          " vs " + std::to_string(width) + ")");
    }
    rows.push_back(g.concat(scores, 1));
  }
  // Stacking through concat also lifts rank-1 score rows to a [B x C] matrix.
  NodeRef stacked = g.concat(rows, 0);
  return g.cross_entropy(stacked, std::vector<int>(score_rows.size(), 0));
}

inline NodeRef nce_loss(Graph& g, NodeRef positive, const std::vector<NodeRef>& negatives) {
  if (negatives.empty()) throw ContractError("nce_loss: need at least one negative score");
  std::vector<NodeRef> row;
  row.reserve(negatives.size() + 1);
  row.push_back(positive);
  row.insert(row.end(), negatives.begin(), negatives.end());
  return nce_loss_batch(g, {row});
}

// Mean cross-entropy of provider logits against integer labels.
inline NodeRef discriminator_loss(Graph& g, NodeRef logits, std::vector<int> labels) {
  return g.cross_entropy(logits, std::move(labels));
}

// Probability-row form of the classification loss: rows are distributions,
// log floored so a zero-probability true class stays finite.
inline double cross_entropy_probs(const Tensor& probs, const std::vector<int>& labels) {
  if (probs.rank() != 2) throw ShapeError("cross_entropy_probs: want matrix, got " + shape_str(probs.shape));
  const std::size_t rows = probs.rows();
  const std::size_t cols = probs.cols();
  if (labels.size() != rows) {
    throw ShapeError("cross_entropy_probs: " + std::to_string(rows) + " rows vs " +
                     std::to_string(labels.size()) + " labels");
  }
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    int label = labels[r];
    if (label < 0 || static_cast<std::size_t>(label) >= cols) {
      throw IndexError("cross_entropy_probs: label " + std::to_string(label) + " outside " +
                       std::to_string(cols) + " classes");
    }
    total += -std::log(std::max(probs.at(r, static_cast<std::size_t>(label)), 1e-30));
  }
  return total / static_cast<double>(rows);
}

// Mean absolute cosine between paired representations. Pairs where either
// side has near-zero norm carry no angle; they contribute zero to the sum
// while still counting toward the denominator, and are reported as skipped.
struct OrthogonalTerm {
  NodeRef value;
  int used = 0;
  int skipped = 0;
};

inline OrthogonalTerm orthogonal_reg(Graph& g,
                                     const std::vector<std::pair<NodeRef, NodeRef>>& pairs) {
  OrthogonalTerm term;
  std::vector<NodeRef> live;
  for (const auto& [a, b] : pairs) {
    if (std::sqrt(l2_norm_sq(g.value(a).values)) < 1e-12 ||
        std::sqrt(l2_norm_sq(g.value(b).values)) < 1e-12) {
      ++term.skipped;
      continue;
    }
    live.push_back(g.abs(g.cosine_similarity(a, b)));
    ++term.used;
  }
  if (live.empty()) {
    term.value = g.constant(Tensor::scalar(0.0));
    return term;
  }
  NodeRef mean = g.reduce_mean(live.size() == 1 ? live.front() : g.concat(live, 1));
  const std::size_t total = pairs.size();
  term.value = term.used == static_cast<int>(total)
                   ? mean
                   : g.scale(mean, static_cast<double>(term.used) / static_cast<double>(total));
  return term;
}

// Weighted objective. Terms with zero weight (or absent terms) never enter
// the graph, so their parameters receive exactly zero gradient.
inline NodeRef total_loss(Graph& g, const LossWeights& w, NodeRef l_click,
                          std::optional<NodeRef> l_user_orth, std::optional<NodeRef> l_news_orth,
                          std::optional<NodeRef> l_adversarial) {
  std::optional<NodeRef> acc;
  auto accumulate = [&](NodeRef term, double weight) {
    if (weight == 0.0) return;
    NodeRef scaled = weight == 1.0 ? term : g.scale(term, weight);
    acc = acc.has_value() ? g.add(*acc, scaled) : scaled;
  };
  accumulate(l_click, w.lambda_c);
  if (l_user_orth) accumulate(*l_user_orth, w.lambda_u);
  if (l_news_orth) accumulate(*l_news_orth, w.lambda_n);
  if (l_adversarial) accumulate(*l_adversarial, -w.lambda_a);
  if (!acc) return g.constant(Tensor::scalar(0.0));
  return *acc;
}

}  // namespace fairrec
