// Literal-formula reference implementations used only by tests. These stay
// deliberately naive (set scans, materialized extremal rankings, pairwise
// loops) so they share no code path with the library implementations.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

namespace fairrec::oracle {

// True when news index d appears in the first k entries of the ranking.
inline bool in_prefix(const std::vector<int>& ranking, std::size_t k, int d) {
  for (std::size_t i = 0; i < k && i < ranking.size(); ++i) {
    if (ranking[i] == d) return true;
  }
  return false;
}

// Exposure ratio via the literal double summation: for each group, the mean
// over users of the per-article inclusion rate, then the quotient.
inline double exposure_ratio(const std::vector<std::vector<int>>& rankings,
                             const std::vector<char>& is_protected, std::size_t k) {
  std::vector<int> prot, unprot;
  for (std::size_t d = 0; d < is_protected.size(); ++d) {
    (is_protected[d] ? prot : unprot).push_back(static_cast<int>(d));
  }
  double num = 0.0, den = 0.0;
  for (const std::vector<int>& ranking : rankings) {
    double hits = 0.0;
    for (int d : prot) hits += in_prefix(ranking, k, d) ? 1.0 : 0.0;
    num += hits / static_cast<double>(prot.size());
    double misses = 0.0;
    for (int d : unprot) misses += in_prefix(ranking, k, d) ? 1.0 : 0.0;
    den += misses / static_cast<double>(unprot.size());
  }
  num /= static_cast<double>(rankings.size());
  den /= static_cast<double>(rankings.size());
  return num / den;
}

// The inner discounted sum of the normalized-difference metric for one
// concrete ranking, recounting every prefix from scratch.
inline double rnd_inner_sum(const std::vector<int>& ranking,
                            const std::vector<char>& is_protected, std::size_t k) {
  double total_protected = 0.0;
  for (char f : is_protected) total_protected += f ? 1.0 : 0.0;
  const double share = total_protected / static_cast<double>(is_protected.size());
  double sum = 0.0;
  for (std::size_t n = 10; n <= k; n += 10) {
    double in_prefix_count = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (is_protected[static_cast<std::size_t>(ranking[i])]) in_prefix_count += 1.0;
    }
    sum += (1.0 / std::log2(static_cast<double>(n))) *
           std::abs(in_prefix_count / static_cast<double>(n) - share);
  }
  return sum;
}

// Normalizer: evaluate both extremal rankings explicitly and keep the worst.
inline double rnd_normalizer(const std::vector<char>& is_protected, std::size_t k) {
  std::vector<int> prot, unprot;
  for (std::size_t d = 0; d < is_protected.size(); ++d) {
    (is_protected[d] ? prot : unprot).push_back(static_cast<int>(d));
  }
  std::vector<int> protected_first = prot;
  protected_first.insert(protected_first.end(), unprot.begin(), unprot.end());
  std::vector<int> protected_last = unprot;
  protected_last.insert(protected_last.end(), prot.begin(), prot.end());
  return std::max(rnd_inner_sum(protected_first, is_protected, k),
                  rnd_inner_sum(protected_last, is_protected, k));
}

inline double rnd(const std::vector<std::vector<int>>& rankings,
                  const std::vector<char>& is_protected, std::size_t k) {
  double mean = 0.0;
  for (const std::vector<int>& ranking : rankings) {
    mean += rnd_inner_sum(ranking, is_protected, k);
  }
  mean /= static_cast<double>(rankings.size());
  return mean / rnd_normalizer(is_protected, k);
}

// Pairwise AUC: correctly ordered positive/negative pairs, ties at half.
inline double auc(const std::vector<int>& labels, const std::vector<double>& scores) {
  double good = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < labels.size(); ++j) {
      if (labels[j] != 0) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) good += 1.0;
      else if (scores[i] == scores[j]) good += 0.5;
    }
  }
  return good / pairs;
}

// Full-sort ranking with ties by ascending id string.
inline std::vector<int> rank_by_score(const std::vector<double>& scores,
                                      const std::vector<std::string>& ids) {
  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return ids[static_cast<std::size_t>(a)] < ids[static_cast<std::size_t>(b)];
  });
  return order;
}

}  // namespace fairrec::oracle
