#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fairrec/adam.hpp"
#include "fairrec/data.hpp"
#include "fairrec/encoders.hpp"
#include "fairrec/losses.hpp"

namespace fairrec {

// Provider partition by average training clicks per article. Group 1 is
// protected (bottom share by that average), group 0 unprotected, and news
// whose provider is the reserved bucket belong to neither (-1).
struct ProviderGroups {
  double ratio = 0.0;
  std::vector<int> protected_providers;    // ascending ids
  std::vector<int> unprotected_providers;  // ascending ids
  std::vector<int> news_group;             // per news index: 1, 0, or -1
  int protected_news = 0;
  int unprotected_news = 0;
};

inline ProviderGroups partition_groups(const Corpus& corpus, double r) {
  if (!(r > 0.0 && r < 1.0)) {
    throw ContractError("partition_groups: ratio must lie strictly between 0 and 1");
  }
  const int known = static_cast<int>(corpus.providers.size());
  if (known < 2) throw ContractError("partition_groups: need at least two providers");
  for (const ProviderStats& p : corpus.providers) {
    if (p.articles < 1) {
      throw ContractError("partition_groups: provider " + p.name + " has no articles");
    }
  }
  std::vector<int> order(known);
  std::iota(order.begin(), order.end(), 0);
  auto avg = [&](int p) {
    return static_cast<double>(corpus.providers[p].train_clicks) /
           static_cast<double>(corpus.providers[p].articles);
  };
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (avg(a) != avg(b)) return avg(a) < avg(b);
    return a < b;
  });
  const int take = static_cast<int>(std::llround(r * known));
  ProviderGroups groups;
  groups.ratio = r;
  std::set<int> prot(order.begin(), order.begin() + std::min(take, known));
  for (int p = 0; p < known; ++p) {
    (prot.count(p) ? groups.protected_providers : groups.unprotected_providers).push_back(p);
  }
  groups.news_group.reserve(corpus.news.size());
  for (const NewsArticle& a : corpus.news) {
    if (a.provider >= known) {
      groups.news_group.push_back(-1);
    } else if (prot.count(a.provider)) {
      groups.news_group.push_back(1);
      ++groups.protected_news;
    } else {
      groups.news_group.push_back(0);
      ++groups.unprotected_news;
    }
  }
  return groups;
}

// Full-corpus ranking for one user: descending score, ties by ascending
// news id string.
struct RankedList {
  std::string user;
  std::vector<int> order;      // news indices, best first
  std::vector<double> scores;  // aligned with order
};

inline RankedList rank_news(std::string user, const std::vector<double>& scores,
                            const Corpus& corpus) {
  if (scores.size() != corpus.news.size()) {
    throw ShapeError("rank_news: " + std::to_string(scores.size()) + " scores for " +
                     std::to_string(corpus.news.size()) + " news");
  }
  RankedList list;
  list.user = std::move(user);
  list.order.resize(scores.size());
  std::iota(list.order.begin(), list.order.end(), 0);
  std::sort(list.order.begin(), list.order.end(), [&](int a, int b) {
    if (scores[static_cast<std::size_t>(a)] != scores[static_cast<std::size_t>(b)]) {
      return scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(b)];
    }
    return corpus.news[static_cast<std::size_t>(a)].id < corpus.news[static_cast<std::size_t>(b)].id;
  });
  list.scores.reserve(scores.size());
  for (int d : list.order) list.scores.push_back(scores[static_cast<std::size_t>(d)]);
  return list;
}

// Per-impression ranking quality. AUC uses midranks, so tied pairs count
// half; reciprocal rank averages over every positive; gains are binary.
struct ImpressionMetrics {
  double auc = 0.0;
  double mrr = 0.0;
  double ndcg10 = 0.0;
  bool valid = false;
};

inline ImpressionMetrics impression_metrics(const std::vector<int>& labels,
                                            const std::vector<double>& scores) {
  if (labels.size() != scores.size()) {
    throw ShapeError("impression_metrics: " + std::to_string(labels.size()) + " labels vs " +
                     std::to_string(scores.size()) + " scores");
  }
  ImpressionMetrics m;
  const std::size_t n = labels.size();
  std::size_t positives = 0;
  for (int l : labels) positives += l == 1 ? 1 : 0;
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) return m;
  m.valid = true;

  // AUC from the positive rank sum over ascending scores with midranks.
  std::vector<int> asc(n);
  std::iota(asc.begin(), asc.end(), 0);
  std::sort(asc.begin(), asc.end(), [&](int a, int b) {
    return scores[static_cast<std::size_t>(a)] < scores[static_cast<std::size_t>(b)];
  });
  double rank_sum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[static_cast<std::size_t>(asc[j + 1])] ==
                            scores[static_cast<std::size_t>(asc[i])]) {
      ++j;
    }
    double midrank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t t = i; t <= j; ++t) {
      if (labels[static_cast<std::size_t>(asc[t])] == 1) rank_sum += midrank;
    }
    i = j + 1;
  }
  double p = static_cast<double>(positives);
  m.auc = (rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(negatives));

  std::vector<int> desc(n);
  std::iota(desc.begin(), desc.end(), 0);
  std::stable_sort(desc.begin(), desc.end(), [&](int a, int b) {
    return scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(b)];
  });
  double rr = 0.0, dcg = 0.0;
  for (std::size_t rank = 0; rank < n; ++rank) {
    if (labels[static_cast<std::size_t>(desc[rank])] != 1) continue;
    rr += 1.0 / static_cast<double>(rank + 1);
    if (rank < 10) dcg += 1.0 / std::log2(static_cast<double>(rank + 2));
  }
  m.mrr = rr / p;
  double idcg = 0.0;
  for (std::size_t rank = 0; rank < positives && rank < 10; ++rank) {
    idcg += 1.0 / std::log2(static_cast<double>(rank + 2));
  }
  m.ndcg10 = dcg / idcg;
  return m;
}

struct AccuracyMetrics {
  double auc = 0.0;
  double mrr = 0.0;
  double ndcg10 = 0.0;
  int used = 0;
  int skipped = 0;  // impressions lacking a positive or a negative
};

// Group exposure in top-K prefixes: ratio of the two per-article inclusion
// rates, each averaged over users.
struct ExposureRatio {
  double value = 0.0;
  bool unbounded = false;  // unprotected exposure was exactly zero
};

namespace detail {

// Sums per-user doubles in user-id order so caller-side permutations cannot
// change the floating-point result.
inline double ordered_mean(std::vector<std::pair<std::string, double>> entries) {
  std::stable_sort(entries.begin(), entries.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  double sum = 0.0;
  for (const auto& [user, v] : entries) sum += v;
  return sum / static_cast<double>(entries.size());
}

}  // namespace detail

inline ExposureRatio exposure_ratio_at_k(const std::vector<RankedList>& lists,
                                         const ProviderGroups& groups, std::size_t k) {
  if (lists.empty()) throw ContractError("exposure_ratio_at_k: no ranked lists");
  if (groups.protected_news == 0 || groups.unprotected_news == 0) {
    throw ContractError("exposure_ratio_at_k: a group has no news");
  }
  std::vector<std::pair<std::string, double>> prot_rates, unprot_rates;
  for (const RankedList& list : lists) {
    if (k > list.order.size()) {
      throw ContractError("exposure_ratio_at_k: k exceeds ranking length");
    }
    int prot_hits = 0, unprot_hits = 0;
    for (std::size_t i = 0; i < k; ++i) {
      int g = groups.news_group[static_cast<std::size_t>(list.order[i])];
      if (g == 1) ++prot_hits;
      else if (g == 0) ++unprot_hits;
    }
    prot_rates.push_back({list.user, prot_hits / static_cast<double>(groups.protected_news)});
    unprot_rates.push_back({list.user, unprot_hits / static_cast<double>(groups.unprotected_news)});
  }
  double num = detail::ordered_mean(std::move(prot_rates));
  double den = detail::ordered_mean(std::move(unprot_rates));
  ExposureRatio er;
  if (den == 0.0) {
    er.unbounded = true;
    return er;
  }
  er.value = num / den;
  return er;
}

// Prefix-weighted deviation of the protected share from its corpus share,
// at depth checkpoints 10, 20, ..., K, normalized by the worse of the two
// extremal rankings (all protected first or all protected last).
inline double rnd_at_k(const std::vector<RankedList>& lists, const ProviderGroups& groups,
                       std::size_t k) {
  if (lists.empty()) throw ContractError("rnd_at_k: no ranked lists");
  if (k < 10) throw ContractError("rnd_at_k: depth checkpoints start at 10");
  if (groups.protected_news == 0 || groups.unprotected_news == 0) {
    throw ContractError("rnd_at_k: a group has no news");
  }
  const double total = static_cast<double>(groups.news_group.size());
  const double prot = static_cast<double>(groups.protected_news);
  const double share = prot / total;

  std::vector<std::pair<std::string, double>> sums;
  for (const RankedList& list : lists) {
    if (k > list.order.size()) throw ContractError("rnd_at_k: k exceeds ranking length");
    double sum = 0.0;
    int seen = 0;
    for (std::size_t i = 0; i < k; ++i) {
      if (groups.news_group[static_cast<std::size_t>(list.order[i])] == 1) ++seen;
      std::size_t n = i + 1;
      if (n >= 10 && n % 10 == 0) {
        sum += std::abs(seen / static_cast<double>(n) - share) /
               std::log2(static_cast<double>(n));
      }
    }
    sums.push_back({list.user, sum});
  }
  double mean = detail::ordered_mean(std::move(sums));

  double z_first = 0.0, z_last = 0.0;
  for (std::size_t n = 10; n <= k; n += 10) {
    double dn = static_cast<double>(n);
    double first = std::min(dn, prot);
    double last = std::max(0.0, dn - (total - prot));
    z_first += std::abs(first / dn - share) / std::log2(dn);
    z_last += std::abs(last / dn - share) / std::log2(dn);
  }
  double z = std::max(z_first, z_last);
  if (z == 0.0) throw ContractError("rnd_at_k: degenerate groups give a zero normalizer");
  return mean / z;
}

// Serving-side scorer: provider-fair representations only. News encodings
// are computed once and reused across users.
class FairScorer {
 public:
  FairScorer(const Corpus& corpus, const EncoderConfig& cfg, ParameterStore& store)
      : cfg_(cfg), store_(store) {
    news_.reserve(corpus.news.size());
    for (const NewsArticle& article : corpus.news) {
      news_.push_back(encode_news(cfg, store, article.tokens, article.provider));
    }
  }

  Tensor user_rep(const std::vector<int>& history) const {
    std::vector<DualNewsRep> clicked;
    clicked.reserve(history.size());
    for (int d : history) clicked.push_back(news_[static_cast<std::size_t>(d)]);
    return encode_user(cfg_, store_, clicked).fair;
  }

  double score(const Tensor& user, int news) const {
    const Tensor& fair = news_[static_cast<std::size_t>(news)].fair;
    double dot = 0.0;
    for (std::size_t i = 0; i < user.values.size(); ++i) {
      dot += user.values[i] * fair.values[i];
    }
    return detail::stable_sigmoid(dot);
  }

  std::vector<double> score_all(const Tensor& user) const {
    std::vector<double> out;
    out.reserve(news_.size());
    for (std::size_t d = 0; d < news_.size(); ++d) {
      out.push_back(score(user, static_cast<int>(d)));
    }
    return out;
  }

  const DualNewsRep& news_rep(int d) const { return news_[static_cast<std::size_t>(d)]; }

 private:
  EncoderConfig cfg_;
  ParameterStore& store_;
  std::vector<DualNewsRep> news_;
};

inline AccuracyMetrics accuracy_metrics(const std::vector<Impression>& impressions,
                                        const FairScorer& scorer) {
  std::vector<std::pair<std::string, ImpressionMetrics>> rows;
  AccuracyMetrics out;
  for (const Impression& imp : impressions) {
    Tensor user = scorer.user_rep(imp.history);
    std::vector<double> scores;
    scores.reserve(imp.candidates.size());
    for (int d : imp.candidates) scores.push_back(scorer.score(user, d));
    ImpressionMetrics m = impression_metrics(imp.labels, scores);
    if (!m.valid) {
      ++out.skipped;
      continue;
    }
    rows.push_back({imp.id, m});
  }
  if (rows.empty()) return out;
  std::stable_sort(rows.begin(), rows.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  for (const auto& [id, m] : rows) {
    out.auc += m.auc;
    out.mrr += m.mrr;
    out.ndcg10 += m.ndcg10;
  }
  out.used = static_cast<int>(rows.size());
  out.auc /= out.used;
  out.mrr /= out.used;
  out.ndcg10 /= out.used;
  return out;
}

// Held-out accuracy of a fresh classifier trained on frozen representations.
// High accuracy means provider identity is still decodable from the reps.
inline double discriminator_probe(const std::vector<Tensor>& reps, const std::vector<int>& labels,
                                  int num_classes, std::uint64_t seed, int steps = 200,
                                  int hidden = 64, double lr = 0.01) {
  if (reps.size() != labels.size()) {
    throw ShapeError("discriminator_probe: " + std::to_string(reps.size()) + " reps vs " +
                     std::to_string(labels.size()) + " labels");
  }
  if (reps.size() < 5) throw ContractError("discriminator_probe: too few examples");
  std::set<int> distinct(labels.begin(), labels.end());
  if (distinct.size() < 2) throw ContractError("discriminator_probe: single class present");
  for (int y : labels) {
    if (y < 0 || y >= num_classes) {
      throw IndexError("discriminator_probe: label " + std::to_string(y) + " outside " +
                       std::to_string(num_classes) + " classes");
    }
  }
  const std::size_t n = reps.size();
  const std::size_t dim = reps.front().numel();
  for (const Tensor& t : reps) {
    if (t.numel() != dim) throw ShapeError("discriminator_probe: ragged representation widths");
  }

  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(derive_seed(seed, "probe.split"));
  rng.shuffle(idx);
  const std::size_t train_n = std::max<std::size_t>(1, (n * 8) / 10);
  const std::size_t held_n = n - train_n;
  if (held_n == 0) throw ContractError("discriminator_probe: no held-out examples");

  Tensor x_train = Tensor::zeros({train_n, dim});
  std::vector<int> y_train(train_n);
  for (std::size_t i = 0; i < train_n; ++i) {
    const Tensor& r = reps[idx[i]];
    std::copy(r.values.begin(), r.values.end(), x_train.values.begin() + i * dim);
    y_train[i] = labels[idx[i]];
  }

  ParameterStore store;
  detail::add_linear(store, "probe.mlp1", dim, static_cast<std::size_t>(hidden),
                     derive_seed(seed, "probe.mlp1"));
  detail::add_linear(store, "probe.mlp2", static_cast<std::size_t>(hidden),
                     static_cast<std::size_t>(num_classes), derive_seed(seed, "probe.mlp2"));

  Graph g;
  NodeRef x = g.constant(x_train);
  NodeRef h = g.relu(detail::linear(g, store, "probe.mlp1", x, true));
  NodeRef logits = detail::linear(g, store, "probe.mlp2", h, true);
  NodeRef loss = g.cross_entropy(logits, y_train);
  AdamState adam;
  adam.lr = lr;
  for (int step = 0; step < steps; ++step) {
    if (step > 0) g.recompute();
    GradientMap grads = g.backward(loss);
    adam_apply(adam, store, grads);
  }

  const Tensor& w1 = store.at("probe.mlp1.w");
  const Tensor& b1 = store.at("probe.mlp1.b");
  const Tensor& w2 = store.at("probe.mlp2.w");
  const Tensor& b2 = store.at("probe.mlp2.b");
  std::size_t correct = 0;
  std::vector<double> hval(static_cast<std::size_t>(hidden));
  std::vector<double> out(static_cast<std::size_t>(num_classes));
  for (std::size_t i = train_n; i < n; ++i) {
    const Tensor& r = reps[idx[i]];
    for (std::size_t j = 0; j < hval.size(); ++j) {
      double s = b1.values[j];
      for (std::size_t d = 0; d < dim; ++d) s += r.values[d] * w1.at(d, j);
      hval[j] = s > 0.0 ? s : 0.0;
    }
    for (std::size_t c = 0; c < out.size(); ++c) {
      double s = b2.values[c];
      for (std::size_t j = 0; j < hval.size(); ++j) s += hval[j] * w2.at(j, c);
      out[c] = s;
    }
    std::size_t best = 0;
    for (std::size_t c = 1; c < out.size(); ++c) {
      if (out[c] > out[best]) best = c;
    }
    if (static_cast<int>(best) == labels[idx[i]]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(held_n);
}

struct FairnessCell {
  double r = 0.0;
  int k = 0;
  double er = 0.0;
  bool er_unbounded = false;
  double rnd = 0.0;
  bool valid = false;
};

struct FairnessReport {
  std::vector<FairnessCell> cells;
  AccuracyMetrics accuracy;
  double probe_accuracy = -1.0;  // negative when the probe was not run
  std::map<std::string, std::string> meta;
};

// Ranks the full corpus once per distinct test user (history taken from that
// user's first test impression) and fills the (r, K) fairness grid. Cells
// whose preconditions fail on this corpus are marked invalid, not fatal.
inline FairnessReport evaluate_fairness(const Corpus& corpus, const EncoderConfig& cfg,
                                        ParameterStore& store,
                                        std::vector<double> r_values = {0.1, 0.3, 0.5},
                                        std::vector<int> k_values = {10, 30, 50}) {
  FairScorer scorer(corpus, cfg, store);
  std::map<std::string, const Impression*> first_by_user;
  for (const Impression& imp : corpus.test) {
    first_by_user.insert({imp.user, &imp});
  }
  std::vector<RankedList> lists;
  for (const auto& [user, imp] : first_by_user) {
    Tensor rep = scorer.user_rep(imp->history);
    lists.push_back(rank_news(user, scorer.score_all(rep), corpus));
  }

  FairnessReport report;
  report.accuracy = accuracy_metrics(corpus.test, scorer);
  report.meta["news"] = std::to_string(corpus.news.size());
  report.meta["test_users"] = std::to_string(lists.size());
  report.meta["test_impressions"] = std::to_string(corpus.test.size());

  for (double r : r_values) {
    ProviderGroups groups = partition_groups(corpus, r);
    for (int k : k_values) {
      FairnessCell cell;
      cell.r = r;
      cell.k = k;
      bool feasible = static_cast<std::size_t>(k) <= corpus.news.size() && k >= 10 &&
                      groups.protected_news > 0 && groups.unprotected_news > 0 &&
                      !lists.empty();
      if (feasible) {
        ExposureRatio er = exposure_ratio_at_k(lists, groups, static_cast<std::size_t>(k));
        cell.er = er.value;
        cell.er_unbounded = er.unbounded;
        cell.rnd = rnd_at_k(lists, groups, static_cast<std::size_t>(k));
        cell.valid = true;
      }
      report.cells.push_back(cell);
    }
  }
  return report;
}

namespace detail {

inline std::ofstream open_report(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path);
  return os;
}

inline const char* kErConvention =
    "# exposure ratio: ratio of per-user means (protected rate over unprotected rate)";
inline const char* kRndConvention =
    "# rnd normalizer: max over protected-first and protected-last extremal ranking";

inline std::string cell_er_str(const FairnessCell& c) {
  if (!c.valid) return "na";
  if (c.er_unbounded) return "inf";
  return format_double(c.er);
}

inline std::string cell_rnd_str(const FairnessCell& c) {
  return c.valid ? format_double(c.rnd) : "na";
}

}  // namespace detail

inline void write_fairness_csv(const FairnessReport& report, const std::string& path) {
  std::ofstream os = detail::open_report(path);
  os << detail::kErConvention << '\n' << detail::kRndConvention << '\n';
  os << "r,k,er,rnd\n";
  for (const FairnessCell& c : report.cells) {
    os << c.r << ',' << c.k << ',' << detail::cell_er_str(c) << ',' << detail::cell_rnd_str(c)
       << '\n';
  }
  os << "# auc," << format_double(report.accuracy.auc) << '\n';
  os << "# mrr," << format_double(report.accuracy.mrr) << '\n';
  os << "# ndcg10," << format_double(report.accuracy.ndcg10) << '\n';
}

inline void write_fairness_table(const FairnessReport& report, const std::string& path) {
  std::ofstream os = detail::open_report(path);
  os << detail::kErConvention << '\n' << detail::kRndConvention << '\n';
  os << std::left << std::setw(8) << "r" << std::setw(8) << "k" << std::setw(14) << "er"
     << std::setw(14) << "rnd" << '\n';
  os << std::fixed << std::setprecision(4);
  for (const FairnessCell& c : report.cells) {
    os << std::setw(8) << c.r << std::setw(8) << c.k;
    if (!c.valid) {
      os << std::setw(14) << "na" << std::setw(14) << "na" << '\n';
    } else {
      if (c.er_unbounded) os << std::setw(14) << "inf";
      else os << std::setw(14) << c.er;
      os << std::setw(14) << c.rnd << '\n';
    }
  }
  os << "auc " << report.accuracy.auc << "  mrr " << report.accuracy.mrr << "  ndcg10 "
     << report.accuracy.ndcg10 << '\n';
  if (report.probe_accuracy >= 0.0) os << "probe_accuracy " << report.probe_accuracy << '\n';
  for (const auto& [key, value] : report.meta) os << key << ' ' << value << '\n';
}

// Plot-ready long format: one (metric, r, k, value) row per number.
inline void write_fairness_long(const FairnessReport& report, const std::string& path) {
  std::ofstream os = detail::open_report(path);
  os << detail::kErConvention << '\n' << detail::kRndConvention << '\n';
  os << "metric,r,k,value\n";
  for (const FairnessCell& c : report.cells) {
    os << "er," << c.r << ',' << c.k << ',' << detail::cell_er_str(c) << '\n';
    os << "rnd," << c.r << ',' << c.k << ',' << detail::cell_rnd_str(c) << '\n';
  }
  os << "auc,,," << format_double(report.accuracy.auc) << '\n';
  os << "mrr,,," << format_double(report.accuracy.mrr) << '\n';
  os << "ndcg10,,," << format_double(report.accuracy.ndcg10) << '\n';
  if (report.probe_accuracy >= 0.0) {
    os << "probe_accuracy,,," << format_double(report.probe_accuracy) << '\n';
  }
}

}  // namespace fairrec
