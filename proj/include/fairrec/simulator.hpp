#pragma once

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "fairrec/data.hpp"

namespace fairrec {

// Synthetic click-log generator. Providers get Zipf-skewed article counts,
// rank-based popularity, and a home topic they cover more than the rest;
// each article carries a provider-independent quality; each user prefers a
// couple of topics. Titles mix topic words, quality-level words, and
// provider-style words, so the title alone reveals topic, quality, and
// provider. Candidate slates are drawn uniformly, so popularity enters only
// through the click model: click probability is logistic(alpha * interest +
// beta * popularity + gamma * quality - offset). Alpha and gamma scale
// signals a ranker should keep; beta scales the provider bias a fair ranker
// is expected to shed. Home topics cycle through providers, so every topic
// gets home providers from both ends of the popularity range.
struct SimulatorConfig {
  int users = 2000;
  int news = 500;
  int providers = 20;
  int topics = 10;
  double provider_zipf = 1.0;  // article/popularity skew across providers
  double topic_skew = 0.5;     // share of a provider's articles on its home topic
  double alpha = 4.0;          // interest weight in the click model
  double beta = 2.0;           // popularity weight in the click model
  double gamma = 2.0;          // article quality weight in the click model
  double click_offset = 3.0;   // subtracted inside the logistic
  int impressions_per_user = 8;
  int candidates_per_impression = 10;
  int title_words = 6;     // topic words per title
  int provider_words = 2;  // provider-style words per title
  int quality_words = 2;   // quality-level words per title
};

struct Simulation {
  Corpus corpus;
  std::vector<int> topic;                      // per news
  std::vector<double> popularity;              // per news: its provider's popularity in [0, 1]
  std::vector<double> quality;                 // per news, in [0, 1), provider-independent
  std::vector<std::vector<double>> user_topic; // per user, weight per topic

  double interest(int user, int news) const {
    return user_topic[static_cast<std::size_t>(user)]
                     [static_cast<std::size_t>(topic[static_cast<std::size_t>(news)])];
  }
};

namespace detail {

inline double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

inline std::string padded(const std::string& prefix, int value, int width) {
  std::ostringstream os;
  os << prefix << std::setw(width) << std::setfill('0') << value;
  return os.str();
}

}  // namespace detail

inline Simulation simulate(const SimulatorConfig& cfg, std::uint64_t seed) {
  if (cfg.users < 1 || cfg.users > 9999) throw ContractError("simulate: users must be in [1, 9999]");
  if (cfg.news < 2 || cfg.news > 9999) throw ContractError("simulate: news must be in [2, 9999]");
  if (cfg.providers < 2 || cfg.providers > 99) {
    throw ContractError("simulate: providers must be in [2, 99]");
  }
  if (cfg.providers > cfg.news) {
    throw ContractError("simulate: need at least one article per provider");
  }
  if (cfg.topics < 1) throw ContractError("simulate: topics must be positive");
  if (cfg.impressions_per_user < 3 || cfg.impressions_per_user > 99) {
    throw ContractError("simulate: impressions per user must be in [3, 99]");
  }
  if (cfg.candidates_per_impression < 2 || cfg.candidates_per_impression > cfg.news) {
    throw ContractError("simulate: candidates per impression must be in [2, news]");
  }
  if (cfg.title_words < 1 || cfg.provider_words < 0 || cfg.quality_words < 0) {
    throw ContractError("simulate: title needs at least one topic word");
  }
  if (cfg.provider_zipf < 0.0 || cfg.alpha < 0.0 || cfg.beta < 0.0 || cfg.gamma < 0.0) {
    throw ContractError("simulate: zipf, alpha, beta, and gamma must be non-negative");
  }
  if (cfg.topic_skew < 0.0 || cfg.topic_skew > 1.0) {
    throw ContractError("simulate: topic skew must lie in [0, 1]");
  }

  Simulation sim;
  Corpus& corpus = sim.corpus;
  Rng rng(derive_seed(seed, "simulate"));

  std::vector<double> provider_weight(static_cast<std::size_t>(cfg.providers));
  for (int p = 0; p < cfg.providers; ++p) {
    provider_weight[static_cast<std::size_t>(p)] =
        1.0 / std::pow(static_cast<double>(p + 1), cfg.provider_zipf);
  }

  // Provider popularity: rank-normalized Zipf weight, shared by all of a
  // provider's articles, so the bias in clicks is a pure function of the
  // provider. Zipf weights fall with the index, so the rank is the index.
  std::vector<double> provider_pop(static_cast<std::size_t>(cfg.providers));
  for (int p = 0; p < cfg.providers; ++p) {
    provider_pop[static_cast<std::size_t>(p)] =
        static_cast<double>(cfg.providers - 1 - p) / static_cast<double>(cfg.providers - 1);
  }

  // News: the first article of each provider is pinned so every provider
  // exists; the rest follow the Zipf weights. Click popularity stays at the
  // provider level.
  sim.topic.resize(static_cast<std::size_t>(cfg.news));
  sim.popularity.resize(static_cast<std::size_t>(cfg.news));
  sim.quality.resize(static_cast<std::size_t>(cfg.news));
  std::vector<std::string> titles(static_cast<std::size_t>(cfg.news));
  std::vector<int> provider_of(static_cast<std::size_t>(cfg.news));
  for (int d = 0; d < cfg.news; ++d) {
    std::size_t sd = static_cast<std::size_t>(d);
    int p = d < cfg.providers ? d : static_cast<int>(rng.weighted(provider_weight));
    provider_of[sd] = p;
    int home = p % cfg.topics;
    sim.topic[sd] = rng.bernoulli(cfg.topic_skew)
                        ? home
                        : static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.topics)));
    sim.popularity[sd] = provider_pop[static_cast<std::size_t>(p)];
    sim.quality[sd] = rng.uniform(0.0, 1.0);
    int level = std::min(9, static_cast<int>(sim.quality[sd] * 10.0));
    std::string title;
    for (int w = 0; w < cfg.title_words; ++w) {
      if (w) title += ' ';
      title += "tp" + std::to_string(sim.topic[sd]) + "w" + std::to_string(rng.below(30));
    }
    for (int w = 0; w < cfg.quality_words; ++w) {
      title += " ql" + std::to_string(level) + "w" + std::to_string(rng.below(3));
    }
    for (int w = 0; w < cfg.provider_words; ++w) {
      title += " pv" + std::to_string(p) + "w" + std::to_string(rng.below(10));
    }
    titles[sd] = std::move(title);
  }

  // Assemble the corpus the same way the loader would finalize it: providers
  // get lexicographic ids (names are zero-padded so that matches their index),
  // the vocabulary comes from all titles, tokens via vocabulary lookup.
  for (int p = 0; p < cfg.providers; ++p) {
    ProviderStats stats;
    stats.name = detail::padded("prov", p, 2);
    corpus.providers.push_back(stats);
    corpus.provider_index[corpus.providers.back().name] = p;
  }
  for (int d = 0; d < cfg.news; ++d) {
    NewsArticle article;
    article.id = detail::padded("N", d, 4);
    article.raw_title = titles[static_cast<std::size_t>(d)];
    article.provider = provider_of[static_cast<std::size_t>(d)];
    corpus.news_index[article.id] = d;
    corpus.news.push_back(std::move(article));
    ++corpus.providers[static_cast<std::size_t>(provider_of[static_cast<std::size_t>(d)])].articles;
  }
  corpus.vocab = build_vocabulary(titles);
  for (NewsArticle& article : corpus.news) {
    for (const std::string& word : tokenize(article.raw_title)) {
      article.tokens.push_back(corpus.vocab.lookup(word));
    }
  }

  // Users: one strong and one secondary topic over a noisy low base, so two
  // distinct articles almost never tie on interest alone.
  sim.user_topic.resize(static_cast<std::size_t>(cfg.users));
  for (int u = 0; u < cfg.users; ++u) {
    std::vector<double>& theta = sim.user_topic[static_cast<std::size_t>(u)];
    theta.resize(static_cast<std::size_t>(cfg.topics));
    for (int t = 0; t < cfg.topics; ++t) {
      theta[static_cast<std::size_t>(t)] = rng.uniform(0.05, 0.25);
    }
    int primary = static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.topics)));
    theta[static_cast<std::size_t>(primary)] = 0.8;
    if (cfg.topics >= 2) {
      int secondary = static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.topics - 1)));
      if (secondary >= primary) ++secondary;
      theta[static_cast<std::size_t>(secondary)] = 0.5;
    }
  }

  // Impressions: uniform candidate slates without replacement, clicks from
  // the logistic model, history accumulating each user's earlier clicks. The
  // last two slots per user become the valid and test splits.
  const int slots = cfg.impressions_per_user;
  for (int u = 0; u < cfg.users; ++u) {
    std::string user_id = detail::padded("u", u, 4);
    std::vector<int> clicked;
    for (int s = 0; s < slots; ++s) {
      Impression imp;
      imp.id = detail::padded("i", u, 4) + detail::padded("x", s, 2);
      imp.user = user_id;
      imp.time = detail::padded("t", s, 2);
      imp.history = clicked;
      std::vector<double> weights(static_cast<std::size_t>(cfg.news), 1.0);
      for (int k = 0; k < cfg.candidates_per_impression; ++k) {
        int d = static_cast<int>(rng.weighted(weights));
        weights[static_cast<std::size_t>(d)] = 0.0;
        double score = cfg.alpha * sim.interest(u, d) +
                       cfg.beta * sim.popularity[static_cast<std::size_t>(d)] +
                       cfg.gamma * sim.quality[static_cast<std::size_t>(d)] - cfg.click_offset;
        int label = rng.bernoulli(detail::logistic(score)) ? 1 : 0;
        imp.candidates.push_back(d);
        imp.labels.push_back(label);
        if (label == 1) clicked.push_back(d);
      }
      if (s < slots - 2) {
        corpus.train.push_back(std::move(imp));
      } else if (s == slots - 2) {
        corpus.valid.push_back(std::move(imp));
      } else {
        corpus.test.push_back(std::move(imp));
      }
    }
  }

  for (const Impression& imp : corpus.train) {
    for (std::size_t i = 0; i < imp.candidates.size(); ++i) {
      if (imp.labels[i] == 1) {
        ++corpus.providers[static_cast<std::size_t>(corpus.news[static_cast<std::size_t>(
                               imp.candidates[i])].provider)].train_clicks;
      }
    }
  }
  return sim;
}

// Writes the corpus files plus ground_truth.tsv, which records the generative
// state: per news its topic, normalized popularity, and quality, per user its
// topic weights. The corpus files round-trip through load_corpus unchanged.
inline void write_simulation(const Simulation& sim, const std::string& dir) {
  write_corpus(sim.corpus, dir);
  std::ofstream os(dir + "/ground_truth.tsv", std::ios::binary);
  if (!os) throw IoError("cannot write " + dir + "/ground_truth.tsv");
  os << "# news\tid\ttopic\tpopularity\tquality | user\tid\ttopic weights\n";
  os << std::setprecision(10);
  for (std::size_t d = 0; d < sim.corpus.news.size(); ++d) {
    os << "news\t" << sim.corpus.news[d].id << '\t' << sim.topic[d] << '\t' << sim.popularity[d]
       << '\t' << sim.quality[d] << '\n';
  }
  for (std::size_t u = 0; u < sim.user_topic.size(); ++u) {
    os << "user\t" << detail::padded("u", static_cast<int>(u), 4) << '\t';
    for (std::size_t t = 0; t < sim.user_topic[u].size(); ++t) {
      if (t) os << ' ';
      os << sim.user_topic[u][t];
    }
    os << '\n';
  }
}

}  // namespace fairrec
