// Ranking, accuracy, and fairness metric tests. Fairness values are checked
// against the literal-formula reference implementations in oracles.hpp, which
// share no code with the library (set scans and materialized extremal
// rankings there, incremental prefix counts here).
#include "fairrec/eval.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"

namespace fairrec {
namespace {

// Corpus with one article per provider and the given per-provider training
// clicks; article i belongs to provider i.
Corpus click_corpus(const std::vector<long long>& clicks) {
  Corpus c;
  for (std::size_t i = 0; i < clicks.size(); ++i) {
    NewsArticle a;
    a.id = "N" + std::to_string(100 + i);
    a.provider = static_cast<int>(i);
    c.news.push_back(a);
    c.news_index[a.id] = static_cast<int>(i);
    ProviderStats p;
    p.name = "p" + std::to_string(100 + i);
    p.articles = 1;
    p.train_clicks = clicks[i];
    c.providers.push_back(p);
    c.provider_index[p.name] = static_cast<int>(i);
  }
  return c;
}

// Corpus of n news spread over num_providers providers round-robin, with
// ids chosen so lexicographic order equals index order.
Corpus spread_corpus(int n, int num_providers, const std::vector<long long>& provider_clicks) {
  Corpus c;
  c.providers.resize(num_providers);
  for (int p = 0; p < num_providers; ++p) {
    c.providers[p].name = "p" + std::to_string(100 + p);
    c.providers[p].train_clicks = provider_clicks[p];
    c.provider_index[c.providers[p].name] = p;
  }
  for (int i = 0; i < n; ++i) {
    NewsArticle a;
    a.id = "N" + std::to_string(100 + i);
    a.provider = i % num_providers;
    c.news.push_back(a);
    c.news_index[a.id] = i;
    ++c.providers[a.provider].articles;
  }
  return c;
}

std::vector<std::string> ids_of(const Corpus& c) {
  std::vector<std::string> out;
  for (const NewsArticle& a : c.news) out.push_back(a.id);
  return out;
}

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

// ============================================================================
// Group partition
// ============================================================================

TEST(PartitionGroups, BottomAverageClickProvidersProtected) {
  Corpus c = click_corpus({10, 5, 3, 1});
  ProviderGroups g = partition_groups(c, 0.5);
  EXPECT_EQ(g.protected_providers, (std::vector<int>{2, 3}));
  EXPECT_EQ(g.unprotected_providers, (std::vector<int>{0, 1}));
  EXPECT_EQ(g.protected_news, 2);
  EXPECT_EQ(g.unprotected_news, 2);
}

TEST(PartitionGroups, RoundsProtectedCount) {
  std::vector<long long> clicks(20);
  for (int i = 0; i < 20; ++i) clicks[i] = 100 - i;
  Corpus c = click_corpus(clicks);
  EXPECT_EQ(partition_groups(c, 0.1).protected_providers.size(), 2u);
  EXPECT_EQ(partition_groups(c, 0.3).protected_providers.size(), 6u);
  EXPECT_EQ(partition_groups(c, 0.5).protected_providers.size(), 10u);
}

TEST(PartitionGroups, TiesBreakByAscendingProviderId) {
  Corpus c = click_corpus({4, 4, 4, 4});
  ProviderGroups g = partition_groups(c, 0.5);
  EXPECT_EQ(g.protected_providers, (std::vector<int>{0, 1}));
}

TEST(PartitionGroups, FewerThanTwoProvidersRejected) {
  Corpus c = click_corpus({5});
  EXPECT_THROW(partition_groups(c, 0.5), ContractError);
  EXPECT_THROW(partition_groups(click_corpus({1, 2}), 0.0), ContractError);
  EXPECT_THROW(partition_groups(click_corpus({1, 2}), 1.0), ContractError);
}

TEST(PartitionGroups, GroupArticleCountsMatchRecount) {
  Corpus c = spread_corpus(23, 5, {9, 1, 5, 5, 0});
  ProviderGroups g = partition_groups(c, 0.5);
  // Recount from scratch by membership test.
  std::set<int> prot(g.protected_providers.begin(), g.protected_providers.end());
  int prot_news = 0, unprot_news = 0;
  for (const NewsArticle& a : c.news) {
    if (prot.count(a.provider)) ++prot_news;
    else ++unprot_news;
  }
  EXPECT_EQ(g.protected_news, prot_news);
  EXPECT_EQ(g.unprotected_news, unprot_news);
  ASSERT_EQ(g.news_group.size(), c.news.size());
  for (std::size_t d = 0; d < c.news.size(); ++d) {
    EXPECT_EQ(g.news_group[d] == 1, prot.count(c.news[d].provider) > 0);
  }
}

// ============================================================================
// Ranking
// ============================================================================

TEST(RankNews, SortsByScoreThenAscendingId) {
  Corpus c = spread_corpus(4, 2, {1, 1});
  RankedList list = rank_news("u1", {0.5, 0.9, 0.5, 0.1}, c);
  // N101 first (0.9), then the 0.5 tie resolved by id (N100 before N102).
  EXPECT_EQ(list.order, (std::vector<int>{1, 0, 2, 3}));
  EXPECT_EQ(list.scores, (std::vector<double>{0.9, 0.5, 0.5, 0.1}));
}

TEST(RankNews, MatchesFullSortOracle) {
  Rng rng(71);
  Corpus c = spread_corpus(50, 5, {1, 2, 3, 4, 5});
  std::vector<double> scores(50);
  for (double& s : scores) s = rng.uniform(0.0, 1.0);
  // Inject ties to exercise the tie rule.
  scores[7] = scores[31];
  scores[12] = scores[3];
  RankedList list = rank_news("u1", scores, c);
  std::vector<int> expected = oracle::rank_by_score(scores, ids_of(c));
  EXPECT_EQ(list.order, expected);
}

// ============================================================================
// Accuracy metrics
// ============================================================================

TEST(ImpressionMetrics, PerfectOrderingScoresOne) {
  ImpressionMetrics m = impression_metrics({1, 0, 0}, {3.0, 2.0, 1.0});
  ASSERT_TRUE(m.valid);
  EXPECT_DOUBLE_EQ(m.auc, 1.0);
  EXPECT_DOUBLE_EQ(m.mrr, 1.0);
  EXPECT_DOUBLE_EQ(m.ndcg10, 1.0);
}

TEST(ImpressionMetrics, SinglePositiveAtRankThree) {
  ImpressionMetrics m = impression_metrics({0, 0, 1, 0}, {9.0, 8.0, 7.0, 6.0});
  ASSERT_TRUE(m.valid);
  EXPECT_DOUBLE_EQ(m.mrr, 1.0 / 3.0);
}

TEST(ImpressionMetrics, SinglePositiveAtRankTwoNdcg) {
  ImpressionMetrics m = impression_metrics({0, 1, 0}, {5.0, 4.0, 3.0});
  ASSERT_TRUE(m.valid);
  EXPECT_NEAR(m.ndcg10, 1.0 / std::log2(3.0), 1e-12);
}

TEST(ImpressionMetrics, TiedScoresSplitAucPairs) {
  ImpressionMetrics m = impression_metrics({1, 0}, {0.5, 0.5});
  ASSERT_TRUE(m.valid);
  EXPECT_DOUBLE_EQ(m.auc, 0.5);
}

TEST(ImpressionMetrics, SingleClassImpressionsInvalid) {
  EXPECT_FALSE(impression_metrics({1, 1}, {1.0, 2.0}).valid);
  EXPECT_FALSE(impression_metrics({0, 0}, {1.0, 2.0}).valid);
}

TEST(ImpressionMetrics, AucMatchesPairwiseOracle) {
  Rng rng(72);
  for (int trial = 0; trial < 60; ++trial) {
    std::size_t n = 2 + rng.below(9);
    std::vector<int> labels(n);
    std::vector<double> scores(n);
    bool has_pos = false, has_neg = false;
    for (std::size_t i = 0; i < n; ++i) {
      labels[i] = rng.bernoulli(0.4) ? 1 : 0;
      (labels[i] ? has_pos : has_neg) = true;
      // Coarse grid forces frequent score ties.
      scores[i] = static_cast<double>(rng.below(4));
    }
    if (!has_pos || !has_neg) continue;
    ImpressionMetrics m = impression_metrics(labels, scores);
    ASSERT_TRUE(m.valid);
    EXPECT_NEAR(m.auc, oracle::auc(labels, scores), 1e-12);
  }
}

// ============================================================================
// Exposure ratio
// ============================================================================

// Two protected and two unprotected news; providers 0/1 unprotected by clicks.
struct TinyFairness {
  Corpus corpus = spread_corpus(4, 2, {9, 1});
  ProviderGroups groups = partition_groups(corpus, 0.5);
  // Provider 1 protected, so news 1 and 3 are protected.
};

TEST(ExposureRatio, ProportionalTopListGivesOne) {
  TinyFairness t;
  RankedList list = rank_news("u1", {0.9, 0.8, 0.1, 0.0}, t.corpus);
  // Top-2 holds news 0 (unprotected) and news 1 (protected).
  ExposureRatio er = exposure_ratio_at_k({list}, t.groups, 2);
  ASSERT_FALSE(er.unbounded);
  EXPECT_DOUBLE_EQ(er.value, 1.0);
}

TEST(ExposureRatio, AllUnprotectedTopGivesZero) {
  TinyFairness t;
  RankedList list = rank_news("u1", {0.9, 0.1, 0.8, 0.0}, t.corpus);
  ExposureRatio er = exposure_ratio_at_k({list}, t.groups, 2);
  ASSERT_FALSE(er.unbounded);
  EXPECT_DOUBLE_EQ(er.value, 0.0);
}

TEST(ExposureRatio, ZeroUnprotectedExposureIsUnbounded) {
  TinyFairness t;
  RankedList list = rank_news("u1", {0.1, 0.9, 0.0, 0.8}, t.corpus);
  ExposureRatio er = exposure_ratio_at_k({list}, t.groups, 2);
  EXPECT_TRUE(er.unbounded);
}

TEST(ExposureRatio, MatchesLiteralOracle) {
  Rng rng(73);
  for (int trial = 0; trial < 60; ++trial) {
    int d = 4 + static_cast<int>(rng.below(17));
    int users = 1 + static_cast<int>(rng.below(5));
    Corpus c = spread_corpus(d, 2, {9, 1});
    ProviderGroups g = partition_groups(c, 0.5);
    if (g.protected_news == 0 || g.unprotected_news == 0) continue;
    std::vector<RankedList> lists;
    std::vector<std::vector<int>> rankings;
    for (int u = 0; u < users; ++u) {
      std::vector<double> scores(d);
      for (double& s : scores) s = rng.uniform(0.0, 1.0);
      RankedList list = rank_news("u" + std::to_string(u), scores, c);
      rankings.push_back(list.order);
      lists.push_back(std::move(list));
    }
    std::size_t k = 1 + rng.below(static_cast<std::size_t>(d));
    std::vector<char> flags(d);
    for (int i = 0; i < d; ++i) flags[i] = g.news_group[i] == 1;
    ExposureRatio mine = exposure_ratio_at_k(lists, g, k);
    double ref = oracle::exposure_ratio(rankings, flags, k);
    if (std::isinf(ref)) {
      EXPECT_TRUE(mine.unbounded);
    } else {
      ASSERT_FALSE(mine.unbounded);
      EXPECT_NEAR(mine.value, ref, 1e-12);
    }
  }
}

TEST(ExposureRatio, RandomEqualGroupsCalibrateNearOne) {
  Rng rng(74);
  Corpus c = spread_corpus(20, 2, {9, 1});
  ProviderGroups g = partition_groups(c, 0.5);
  ASSERT_EQ(g.protected_news, 10);
  double sum = 0.0;
  const int trials = 2000;
  for (int t = 0; t < trials; ++t) {
    std::vector<RankedList> lists;
    for (int u = 0; u < 5; ++u) {
      std::vector<double> scores(20);
      for (double& s : scores) s = rng.uniform(0.0, 1.0);
      lists.push_back(rank_news("u" + std::to_string(u), scores, c));
    }
    ExposureRatio er = exposure_ratio_at_k(lists, g, 10);
    ASSERT_FALSE(er.unbounded);
    sum += er.value;
  }
  EXPECT_NEAR(sum / trials, 1.0, 0.05);
}

// ============================================================================
// Normalized discounted difference
// ============================================================================

TEST(Rnd, ProportionalPrefixGivesZero) {
  // 20 news, 6 protected (share 0.3); a ranking whose top-10 holds exactly 3
  // protected and whose top-20 holds all 6 deviates nowhere.
  Corpus c = spread_corpus(20, 2, {9, 1});
  ProviderGroups g = partition_groups(c, 0.5);
  // Round-robin provider assignment gives 10 protected; rebuild with 6.
  Corpus c6 = c;
  for (int i = 0; i < 20; ++i) c6.news[i].provider = i < 6 ? 1 : 0;
  c6.providers[0].articles = 14;
  c6.providers[1].articles = 6;
  ProviderGroups g6 = partition_groups(c6, 0.5);
  ASSERT_EQ(g6.protected_news, 6);
  std::vector<double> scores(20, 0.0);
  // Protected news 0..5: put 3 in the top 10, the rest in 10..19.
  double s = 20.0;
  std::vector<int> top{0, 1, 2, 6, 7, 8, 9, 10, 11, 12};
  std::vector<int> rest{3, 4, 5, 13, 14, 15, 16, 17, 18, 19};
  for (int d : top) scores[d] = s--;
  for (int d : rest) scores[d] = s--;
  RankedList list = rank_news("u1", scores, c6);
  EXPECT_NEAR(rnd_at_k({list}, g6, 10), 0.0, 1e-12);
  EXPECT_NEAR(rnd_at_k({list}, g6, 20), 0.0, 1e-12);
}

TEST(Rnd, ProtectedLastExtremeScoresOne) {
  Corpus c = spread_corpus(20, 2, {9, 1});
  Corpus c6 = c;
  for (int i = 0; i < 20; ++i) c6.news[i].provider = i < 6 ? 1 : 0;
  c6.providers[0].articles = 14;
  c6.providers[1].articles = 6;
  ProviderGroups g6 = partition_groups(c6, 0.5);
  std::vector<double> scores(20);
  for (int i = 0; i < 20; ++i) scores[i] = i < 6 ? 1.0 + i : 100.0 + i;
  RankedList list = rank_news("u1", scores, c6);
  // All six protected news sit at the bottom; this extreme attains the
  // normalizer here, so the metric saturates at 1.
  EXPECT_NEAR(rnd_at_k({list}, g6, 10), 1.0, 1e-12);
}

TEST(Rnd, MatchesLiteralOracle) {
  Rng rng(75);
  for (int trial = 0; trial < 60; ++trial) {
    // d > 10 so the first checkpoint never spans the whole corpus (that case
    // has a zero normalizer and is rejected, tested separately below).
    int d = 11 + static_cast<int>(rng.below(10));
    int users = 1 + static_cast<int>(rng.below(5));
    Corpus c = spread_corpus(d, 4, {9, 7, 2, 1});
    ProviderGroups g = partition_groups(c, 0.5);
    if (g.protected_news == 0 || g.unprotected_news == 0) continue;
    std::vector<RankedList> lists;
    std::vector<std::vector<int>> rankings;
    for (int u = 0; u < users; ++u) {
      std::vector<double> scores(d);
      for (double& s : scores) s = rng.uniform(0.0, 1.0);
      RankedList list = rank_news("u" + std::to_string(u), scores, c);
      rankings.push_back(list.order);
      lists.push_back(std::move(list));
    }
    std::vector<char> flags(d);
    for (int i = 0; i < d; ++i) flags[i] = g.news_group[i] == 1;
    std::size_t k = d >= 20 ? (rng.bernoulli(0.5) ? 20 : 10) : 10;
    double mine = rnd_at_k(lists, g, k);
    double ref = oracle::rnd(rankings, flags, k);
    EXPECT_NEAR(mine, ref, 1e-12) << "d=" << d << " k=" << k;
    EXPECT_GE(mine, 0.0);
    EXPECT_LE(mine, 1.0 + 1e-12);
  }
}

TEST(Rnd, UserPermutationInvariant) {
  Rng rng(76);
  Corpus c = spread_corpus(20, 2, {9, 1});
  ProviderGroups g = partition_groups(c, 0.5);
  std::vector<RankedList> lists;
  for (int u = 0; u < 4; ++u) {
    std::vector<double> scores(20);
    for (double& s : scores) s = rng.uniform(0.0, 1.0);
    lists.push_back(rank_news("u" + std::to_string(u), scores, c));
  }
  std::vector<RankedList> shuffled{lists[2], lists[0], lists[3], lists[1]};
  EXPECT_EQ(rnd_at_k(lists, g, 10), rnd_at_k(shuffled, g, 10));
  ExposureRatio a = exposure_ratio_at_k(lists, g, 10);
  ExposureRatio b = exposure_ratio_at_k(shuffled, g, 10);
  EXPECT_EQ(a.value, b.value);
}

TEST(Rnd, RequiresTenOrMore) {
  TinyFairness t;
  RankedList list = rank_news("u1", {0.9, 0.8, 0.1, 0.0}, t.corpus);
  EXPECT_THROW(rnd_at_k({list}, t.groups, 4), ContractError);
}

TEST(Rnd, SingleCheckpointSpanningCorpusRejected) {
  // With exactly 10 news and K=10 the only checkpoint holds every article,
  // so both extremal rankings deviate zero and the value is 0/0.
  Corpus c = spread_corpus(10, 2, {9, 1});
  ProviderGroups g = partition_groups(c, 0.5);
  std::vector<double> scores(10);
  for (int i = 0; i < 10; ++i) scores[i] = static_cast<double>(i);
  RankedList list = rank_news("u1", scores, c);
  EXPECT_THROW(rnd_at_k({list}, g, 10), ContractError);
}

// ============================================================================
// Fair scoring
// ============================================================================

EncoderConfig tiny_encoder() {
  EncoderConfig cfg;
  cfg.title_len = 6;
  cfg.history_len = 4;
  cfg.word_dim = 4;
  cfg.heads = 2;
  cfg.head_dim = 3;
  cfg.provider_dim = 5;
  cfg.attn_hidden = 5;
  cfg.disc_hidden = 8;
  cfg.num_classes = 3;
  return cfg;
}

Corpus scored_corpus() {
  Corpus c = spread_corpus(12, 5, {9, 7, 5, 2, 1});
  Rng rng(77);
  for (NewsArticle& a : c.news) {
    int len = 2 + static_cast<int>(rng.below(4));
    for (int t = 0; t < len; ++t) a.tokens.push_back(2 + static_cast<int>(rng.below(8)));
  }
  Impression imp;
  imp.id = "e1";
  imp.user = "u1";
  imp.time = "t1";
  imp.history = {0, 3, 5};
  imp.candidates = {1, 2, 4, 6};
  imp.labels = {1, 0, 0, 1};
  c.test.push_back(imp);
  Impression imp2;
  imp2.id = "e2";
  imp2.user = "u2";
  imp2.time = "t1";
  imp2.history = {7, 8};
  imp2.candidates = {9, 10, 11};
  imp2.labels = {0, 1, 0};
  c.test.push_back(imp2);
  return c;
}

TEST(FairScoring, EmptyHistoryScoresHalf) {
  EncoderConfig cfg = tiny_encoder();
  Corpus c = scored_corpus();
  ParameterStore store = init_model(cfg, 10, 5, 21);
  FairScorer scorer(c, cfg, store);
  Tensor user = scorer.user_rep({});
  for (std::size_t d = 0; d < c.news.size(); ++d) {
    EXPECT_DOUBLE_EQ(scorer.score(user, static_cast<int>(d)), 0.5);
  }
}

TEST(FairScoring, BiasedParametersNeverTouchServingScores) {
  EncoderConfig cfg = tiny_encoder();
  Corpus c = scored_corpus();
  ParameterStore store = init_model(cfg, 10, 5, 21);
  FairScorer before(c, cfg, store);
  Tensor user_before = before.user_rep({0, 3, 5});
  std::vector<double> scores_before;
  for (std::size_t d = 0; d < c.news.size(); ++d) {
    scores_before.push_back(before.score(user_before, static_cast<int>(d)));
  }
  for (auto& [name, tensor] : store) {
    if (name.rfind("news_biased.", 0) == 0 || name.rfind("user_biased.", 0) == 0 ||
        name == "embed.provider") {
      for (double& v : tensor.values) v = v * 3.7 - 1.9;
    }
  }
  FairScorer after(c, cfg, store);
  Tensor user_after = after.user_rep({0, 3, 5});
  for (std::size_t d = 0; d < c.news.size(); ++d) {
    EXPECT_EQ(after.score(user_after, static_cast<int>(d)), scores_before[d]);
  }
}

TEST(FairScoring, SigmoidPreservesRawDotRanking) {
  EncoderConfig cfg = tiny_encoder();
  Corpus c = scored_corpus();
  ParameterStore store = init_model(cfg, 10, 5, 23);
  FairScorer scorer(c, cfg, store);
  Tensor user = scorer.user_rep({1, 4});
  std::vector<double> sig, raw;
  for (std::size_t d = 0; d < c.news.size(); ++d) {
    sig.push_back(scorer.score(user, static_cast<int>(d)));
    DualNewsRep rep = encode_news(cfg, store, c.news[d].tokens, c.news[d].provider);
    double s = 0.0;
    for (std::size_t i = 0; i < user.values.size(); ++i) {
      s += user.values[i] * rep.fair.values[i];
    }
    raw.push_back(s);
  }
  EXPECT_EQ(oracle::rank_by_score(sig, ids_of(c)), oracle::rank_by_score(raw, ids_of(c)));
}

// ============================================================================
// Discriminator probe
// ============================================================================

TEST(Probe, LabelFunctionRepsScoreNearPerfect) {
  Rng rng(78);
  std::vector<Tensor> reps;
  std::vector<int> labels;
  for (int i = 0; i < 600; ++i) {
    int cls = static_cast<int>(rng.below(4));
    Tensor t = Tensor::zeros({1, 8});
    t.values[static_cast<std::size_t>(cls)] = 1.0;
    for (double& v : t.values) v += rng.uniform(-0.05, 0.05);
    reps.push_back(std::move(t));
    labels.push_back(cls);
  }
  double acc = discriminator_probe(reps, labels, 4, 79, 200, 32, 0.01);
  EXPECT_GE(acc, 0.99);
}

TEST(Probe, ShuffledLabelsFallToMajorityBaseline) {
  Rng rng(80);
  std::vector<Tensor> reps;
  std::vector<int> labels;
  const int n = 2000;
  for (int i = 0; i < n; ++i) {
    Tensor t = Tensor::zeros({1, 8});
    for (double& v : t.values) v = rng.uniform(-1.0, 1.0);
    reps.push_back(std::move(t));
    labels.push_back(i % 4);  // equal class shares, so the baseline is 0.25
  }
  rng.shuffle(labels);
  double acc = discriminator_probe(reps, labels, 4, 81, 200, 32, 0.01);
  EXPECT_NEAR(acc, 0.25, 0.03);
}

TEST(Probe, SingleClassRejected) {
  std::vector<Tensor> reps(10, Tensor::zeros({1, 4}));
  std::vector<int> labels(10, 2);
  EXPECT_THROW(discriminator_probe(reps, labels, 4, 1, 10, 8, 0.01), ContractError);
}

// ============================================================================
// Fairness report
// ============================================================================

TEST(Report, CoversGridAndWritesConventions) {
  EncoderConfig cfg = tiny_encoder();
  Corpus c = scored_corpus();
  ParameterStore store = init_model(cfg, 10, 5, 25);
  FairnessReport report = evaluate_fairness(c, cfg, store);
  ASSERT_EQ(report.cells.size(), 9u);
  int valid_cells = 0;
  for (const FairnessCell& cell : report.cells) {
    if (cell.valid) {
      ++valid_cells;
      EXPECT_EQ(cell.k, 10);  // only K=10 fits a 12-news corpus
      EXPECT_GE(cell.rnd, 0.0);
      EXPECT_LE(cell.rnd, 1.0 + 1e-12);
    }
  }
  EXPECT_EQ(valid_cells, 3);
  EXPECT_EQ(report.accuracy.used, 2);

  std::string dir = testing::TempDir();
  write_fairness_csv(report, dir + "fair.csv");
  write_fairness_table(report, dir + "fair.txt");
  write_fairness_long(report, dir + "fair_long.csv");
  std::string csv = slurp(dir + "fair.csv");
  EXPECT_NE(csv.find("ratio of per-user means"), std::string::npos);
  EXPECT_NE(csv.find("extremal ranking"), std::string::npos);
  EXPECT_NE(csv.find("r,k,er,rnd"), std::string::npos);
  std::string longform = slurp(dir + "fair_long.csv");
  EXPECT_NE(longform.find("metric,r,k,value"), std::string::npos);
  EXPECT_NE(longform.find("auc,,,"), std::string::npos);
}

TEST(Report, EvaluationIsDeterministic) {
  EncoderConfig cfg = tiny_encoder();
  Corpus c = scored_corpus();
  ParameterStore store = init_model(cfg, 10, 5, 25);
  FairnessReport a = evaluate_fairness(c, cfg, store);
  FairnessReport b = evaluate_fairness(c, cfg, store);
  ASSERT_EQ(a.cells.size(), b.cells.size());
  for (std::size_t i = 0; i < a.cells.size(); ++i) {
    EXPECT_EQ(a.cells[i].er, b.cells[i].er);
    EXPECT_EQ(a.cells[i].rnd, b.cells[i].rnd);
  }
  EXPECT_EQ(a.accuracy.auc, b.accuracy.auc);
}

}  // namespace
}  // namespace fairrec
