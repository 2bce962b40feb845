#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fairrec/common.hpp"

namespace fairrec {

inline constexpr int kPadToken = 0;
inline constexpr int kOovToken = 1;

struct NewsArticle {
  std::string id;
  std::string raw_title;
  std::vector<int> tokens;
  int provider = 0;

  bool operator==(const NewsArticle&) const = default;
};

struct Impression {
  std::string id;
  std::string user;
  std::string time;
  std::vector<int> history;     // news indices, oldest to newest
  std::vector<int> candidates;  // news indices
  std::vector<int> labels;      // 0/1, aligned with candidates

  bool operator==(const Impression&) const = default;
};

struct ProviderStats {
  std::string name;
  long long articles = 0;
  long long train_clicks = 0;

  bool operator==(const ProviderStats&) const = default;
};

// Token ids: 0 pads, 1 marks out-of-vocabulary; real words start at 2 in
// order of descending corpus count, ties by ascending word.
struct Vocabulary {
  std::map<std::string, int> ids;

  int size() const { return static_cast<int>(ids.size()) + 2; }

  int lookup(const std::string& word) const {
    auto it = ids.find(word);
    return it == ids.end() ? kOovToken : it->second;
  }

  bool operator==(const Vocabulary&) const = default;
};

// Lowercased maximal alphanumeric runs; everything else separates.
inline std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char raw : text) {
    unsigned char c = static_cast<unsigned char>(raw);
    if (std::isalnum(c)) {
      cur += static_cast<char>(std::tolower(c));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

inline Vocabulary build_vocabulary(const std::vector<std::string>& titles, int min_count = 2) {
  std::map<std::string, long long> counts;
  for (const std::string& title : titles) {
    for (const std::string& word : tokenize(title)) ++counts[word];
  }
  std::vector<std::pair<std::string, long long>> kept;
  for (const auto& [word, count] : counts) {
    if (count >= min_count) kept.push_back({word, count});
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocabulary vocab;
  int next = 2;
  for (const auto& [word, count] : kept) vocab.ids[word] = next++;
  return vocab;
}

struct NewsTable {
  std::vector<NewsArticle> news;
  std::map<std::string, int> news_index;
  Vocabulary vocab;
  std::vector<ProviderStats> providers;  // index is the provider id
  std::map<std::string, int> provider_index;
  int unmapped_news = 0;      // articles assigned to the reserved bucket
  int ignored_map_lines = 0;  // provider-map lines naming unknown news
};

namespace detail {

inline ParseError parse_error(const std::string& path, std::size_t line, const std::string& what) {
  return ParseError(path + ":" + std::to_string(line) + ": " + what);
}

inline std::ifstream open_or_throw(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  return is;
}

}  // namespace detail

// News file columns: id, category, subcategory, title, then free columns the
// loader ignores. The provider map holds (news id, provider name) pairs;
// unmapped news land in the reserved bucket one past the last provider id.
inline NewsTable load_news(const std::string& news_path, const std::string& provider_map_path) {
  NewsTable table;
  {
    std::ifstream is = detail::open_or_throw(news_path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      std::vector<std::string> cols = split(line, '\t');
      if (cols.size() < 4) {
        throw detail::parse_error(news_path, lineno,
                                  "expected at least 4 tab-separated columns, got " +
                                      std::to_string(cols.size()));
      }
      if (table.news_index.count(cols[0])) {
        throw detail::parse_error(news_path, lineno, "duplicate news id " + cols[0]);
      }
      table.news_index[cols[0]] = static_cast<int>(table.news.size());
      NewsArticle article;
      article.id = cols[0];
      article.raw_title = cols[3];
      table.news.push_back(std::move(article));
    }
  }

  std::map<std::string, std::string> provider_of;
  {
    std::ifstream is = detail::open_or_throw(provider_map_path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      std::vector<std::string> cols = split(line, '\t');
      if (cols.size() != 2 || cols[0].empty() || cols[1].empty()) {
        throw detail::parse_error(provider_map_path, lineno,
                                  "expected (news id, provider name), got '" + line + "'");
      }
      if (!table.news_index.count(cols[0])) {
        ++table.ignored_map_lines;
        continue;
      }
      auto [it, inserted] = provider_of.insert({cols[0], cols[1]});
      if (!inserted) {
        throw detail::parse_error(provider_map_path, lineno,
                                  "news " + cols[0] + " mapped to more than one provider");
      }
    }
  }

  for (const auto& [news_id, name] : provider_of) {
    if (!table.provider_index.count(name)) table.provider_index[name] = 0;
  }
  int next_id = 0;
  for (auto& [name, id] : table.provider_index) id = next_id++;  // map order is lexicographic
  table.providers.resize(table.provider_index.size());
  for (const auto& [name, id] : table.provider_index) table.providers[id].name = name;

  const int bucket = static_cast<int>(table.providers.size());
  std::vector<std::string> titles;
  titles.reserve(table.news.size());
  for (NewsArticle& article : table.news) {
    auto it = provider_of.find(article.id);
    if (it == provider_of.end()) {
      article.provider = bucket;
      ++table.unmapped_news;
    } else {
      article.provider = table.provider_index.at(it->second);
      ++table.providers[article.provider].articles;
    }
    titles.push_back(article.raw_title);
  }

  table.vocab = build_vocabulary(titles);
  for (NewsArticle& article : table.news) {
    article.tokens.clear();
    for (const std::string& word : tokenize(article.raw_title)) {
      article.tokens.push_back(table.vocab.lookup(word));
    }
  }
  return table;
}

// Behaviors columns: impression id, user id, time, space-separated history
// news ids (may be empty), space-separated candidates of the form "Nid-0/1".
inline std::vector<Impression> load_behaviors(const std::string& path,
                                              const std::map<std::string, int>& news_index) {
  std::vector<Impression> out;
  std::ifstream is = detail::open_or_throw(path);
  std::string line;
  std::size_t lineno = 0;
  auto resolve = [&](const std::string& id) {
    auto it = news_index.find(id);
    if (it == news_index.end()) {
      throw detail::parse_error(path, lineno, "unknown news id " + id);
    }
    return it->second;
  };
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cols = split(line, '\t');
    if (cols.size() != 5) {
      throw detail::parse_error(path, lineno, "expected 5 tab-separated columns, got " +
                                                  std::to_string(cols.size()));
    }
    Impression imp;
    imp.id = cols[0];
    imp.user = cols[1];
    imp.time = cols[2];
    for (const std::string& token : split(cols[3], ' ')) {
      if (!token.empty()) imp.history.push_back(resolve(token));
    }
    for (const std::string& token : split(cols[4], ' ')) {
      if (token.empty()) continue;
      std::size_t dash = token.rfind('-');
      std::string suffix = dash == std::string::npos ? "" : token.substr(dash + 1);
      if (suffix != "0" && suffix != "1") {
        throw detail::parse_error(path, lineno, "candidate '" + token +
                                                    "' lacks a 0/1 click suffix");
      }
      imp.candidates.push_back(resolve(token.substr(0, dash)));
      imp.labels.push_back(suffix == "1" ? 1 : 0);
    }
    out.push_back(std::move(imp));
  }
  return out;
}

struct Corpus {
  std::vector<NewsArticle> news;
  std::map<std::string, int> news_index;
  Vocabulary vocab;
  std::vector<ProviderStats> providers;
  std::map<std::string, int> provider_index;
  int unmapped_news = 0;
  std::vector<Impression> train;
  std::vector<Impression> valid;
  std::vector<Impression> test;

  int bucket_id() const { return static_cast<int>(providers.size()); }

  bool operator==(const Corpus&) const = default;
};

// Expects news.tsv, providers.tsv, and behaviors_{train,valid,test}.tsv.
// Per-provider click counts come from the training split only.
inline Corpus load_corpus(const std::string& dir) {
  Corpus corpus;
  NewsTable table = load_news(dir + "/news.tsv", dir + "/providers.tsv");
  corpus.news = std::move(table.news);
  corpus.news_index = std::move(table.news_index);
  corpus.vocab = std::move(table.vocab);
  corpus.providers = std::move(table.providers);
  corpus.provider_index = std::move(table.provider_index);
  corpus.unmapped_news = table.unmapped_news;
  corpus.train = load_behaviors(dir + "/behaviors_train.tsv", corpus.news_index);
  corpus.valid = load_behaviors(dir + "/behaviors_valid.tsv", corpus.news_index);
  corpus.test = load_behaviors(dir + "/behaviors_test.tsv", corpus.news_index);
  const int known = static_cast<int>(corpus.providers.size());
  for (const Impression& imp : corpus.train) {
    for (std::size_t i = 0; i < imp.candidates.size(); ++i) {
      if (imp.labels[i] != 1) continue;
      int provider = corpus.news[imp.candidates[i]].provider;
      if (provider < known) ++corpus.providers[provider].train_clicks;
    }
  }
  return corpus;
}

// Writes the same file set load_corpus reads. Columns the corpus does not
// retain are filled with "na" placeholders.
inline void write_corpus(const Corpus& corpus, const std::string& dir) {
  auto open_out = [&](const std::string& name) {
    std::ofstream os(dir + "/" + name, std::ios::binary);
    if (!os) throw IoError("cannot write " + dir + "/" + name);
    return os;
  };
  {
    std::ofstream os = open_out("news.tsv");
    for (const NewsArticle& article : corpus.news) {
      os << article.id << "\tna\tna\t" << article.raw_title << "\tna\tna\tna\tna\n";
    }
  }
  {
    std::ofstream os = open_out("providers.tsv");
    for (const NewsArticle& article : corpus.news) {
      if (article.provider < corpus.bucket_id()) {
        os << article.id << '\t' << corpus.providers[article.provider].name << '\n';
      }
    }
  }
  auto write_split = [&](const std::string& name, const std::vector<Impression>& list) {
    std::ofstream os = open_out(name);
    for (const Impression& imp : list) {
      os << imp.id << '\t' << imp.user << '\t' << imp.time << '\t';
      for (std::size_t i = 0; i < imp.history.size(); ++i) {
        if (i) os << ' ';
        os << corpus.news[imp.history[i]].id;
      }
      os << '\t';
      for (std::size_t i = 0; i < imp.candidates.size(); ++i) {
        if (i) os << ' ';
        os << corpus.news[imp.candidates[i]].id << '-' << imp.labels[i];
      }
      os << '\n';
    }
  };
  write_split("behaviors_train.tsv", corpus.train);
  write_split("behaviors_valid.tsv", corpus.valid);
  write_split("behaviors_test.tsv", corpus.test);
}

// Class targets for provider classification: the busiest providers by
// training clicks keep dedicated classes, everything else (including the
// unmapped bucket) shares the final merged class. Ties break toward the
// lower provider id.
inline std::vector<int> discriminator_labels(const Corpus& corpus, int num_classes) {
  if (num_classes < 2) throw ContractError("discriminator_labels: need at least 2 classes");
  const int known = static_cast<int>(corpus.providers.size());
  std::vector<int> order(known);
  for (int i = 0; i < known; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (corpus.providers[a].train_clicks != corpus.providers[b].train_clicks) {
      return corpus.providers[a].train_clicks > corpus.providers[b].train_clicks;
    }
    return a < b;
  });
  std::vector<int> labels(known + 1, num_classes - 1);
  for (int rank = 0; rank < known && rank < num_classes - 1; ++rank) {
    labels[order[rank]] = rank;
  }
  return labels;
}

struct TrainingInstance {
  int impression = 0;  // index into the impression list it was sampled from
  int positive = 0;    // news index
  std::vector<int> negatives;
};

struct SampledInstances {
  std::vector<TrainingInstance> instances;
  int skipped_impressions = 0;  // impressions with clicks but no non-clicks
};

// One instance per clicked candidate; negatives drawn from the same
// impression's non-clicks, without replacement when enough exist.
inline SampledInstances sample_instances(const std::vector<Impression>& impressions,
                                         int negatives_per_click, std::uint64_t seed) {
  if (negatives_per_click < 1) {
    throw ContractError("sample_instances: need at least one negative per click");
  }
  const std::size_t f = static_cast<std::size_t>(negatives_per_click);
  SampledInstances out;
  Rng rng(seed);
  for (std::size_t idx = 0; idx < impressions.size(); ++idx) {
    const Impression& imp = impressions[idx];
    std::vector<int> clicked;
    std::vector<int> pool;
    for (std::size_t i = 0; i < imp.candidates.size(); ++i) {
      (imp.labels[i] == 1 ? clicked : pool).push_back(imp.candidates[i]);
    }
    if (clicked.empty()) continue;
    if (pool.empty()) {
      ++out.skipped_impressions;
      continue;
    }
    for (int pos : clicked) {
      TrainingInstance inst;
      inst.impression = static_cast<int>(idx);
      inst.positive = pos;
      if (pool.size() >= f) {
        std::vector<int> draw = pool;
        for (std::size_t j = 0; j < f; ++j) {
          std::size_t k = j + rng.below(draw.size() - j);
          std::swap(draw[j], draw[k]);
        }
        inst.negatives.assign(draw.begin(), draw.begin() + static_cast<std::ptrdiff_t>(f));
      } else {
        for (std::size_t j = 0; j < f; ++j) {
          inst.negatives.push_back(pool[rng.below(pool.size())]);
        }
      }
      out.instances.push_back(std::move(inst));
    }
  }
  return out;
}

}  // namespace fairrec
