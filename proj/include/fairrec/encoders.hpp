#pragma once

#include <cmath>
#include <fstream>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "fairrec/common.hpp"
#include "fairrec/graph.hpp"
#include "fairrec/params.hpp"

namespace fairrec {

enum class Backbone { kMhsa, kMeanpool };

inline const char* backbone_name(Backbone b) {
  return b == Backbone::kMhsa ? "mhsa" : "meanpool";
}

inline Backbone parse_backbone(const std::string& s) {
  if (s == "mhsa") return Backbone::kMhsa;
  if (s == "meanpool") return Backbone::kMeanpool;
  throw ConfigError("backbone must be 'mhsa' or 'meanpool', got '" + s + "'");
}

struct EncoderConfig {
  std::size_t title_len = 30;    // leading title tokens consumed
  std::size_t history_len = 50;  // most recent clicks consumed
  std::size_t word_dim = 300;
  std::size_t heads = 20;
  std::size_t head_dim = 20;
  std::size_t provider_dim = 400;
  std::size_t attn_hidden = 200;  // attention-pooling MLP hidden width
  std::size_t disc_hidden = 256;  // discriminator MLP hidden width
  std::size_t num_classes = 51;   // discriminator output classes
  Backbone backbone = Backbone::kMhsa;

  // News and user representations share this width by construction.
  std::size_t rep_dim() const { return heads * head_dim; }
};

// Paired fair/biased vectors, each [1 x rep_dim].
struct DualNewsRep {
  Tensor fair;
  Tensor biased;
  bool fair_degenerate = false;  // empty/all-padding title
};

struct DualUserRep {
  Tensor fair;
  Tensor biased;
  bool degenerate = false;  // empty click history
};

// Collected by builders on request so tests can inspect attention rows.
struct EncoderTrace {
  std::vector<NodeRef> mhsa_attention;  // [L x L] per head
  std::vector<NodeRef> pool_attention;  // [1 x L]
};

// ============================================================================
// Parameter initialization
// ============================================================================

inline std::size_t provider_rows(std::size_t num_providers) {
  // One embedding row per provider plus the trailing unknown-provider bucket.
  return num_providers + 1;
}

namespace detail {

inline Tensor init_uniform(Shape shape, double bound, std::uint64_t seed) {
  Tensor t(std::move(shape));
  Rng rng(seed);
  for (double& v : t.values) v = rng.uniform(-bound, bound);
  return t;
}

// Weight matrices get U[-1/sqrt(fan_in), +1/sqrt(fan_in)], biases zero; each
// parameter draws from its own name-derived stream so init is independent of
// construction order.
inline void add_linear(ParameterStore& store, const std::string& prefix,
                       std::size_t in, std::size_t out, std::uint64_t seed) {
  double bound = 1.0 / std::sqrt(static_cast<double>(in));
  store.add(prefix + ".w", init_uniform({in, out}, bound, derive_seed(seed, prefix + ".w")));
  store.add(prefix + ".b", Tensor::zeros({out}));
}

inline void add_mhsa(ParameterStore& store, const std::string& prefix,
                     std::size_t in_dim, std::size_t heads, std::size_t head_dim,
                     std::uint64_t seed) {
  double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
  for (std::size_t k = 0; k < heads; ++k) {
    std::string h = prefix + ".h" + std::to_string(k);
    for (const char* part : {".wq", ".wk", ".wv"})
      store.add(h + part,
                init_uniform({in_dim, head_dim}, bound, derive_seed(seed, h + part)));
  }
  std::size_t rep = heads * head_dim;
  double obound = 1.0 / std::sqrt(static_cast<double>(rep));
  store.add(prefix + ".wo",
            init_uniform({rep, rep}, obound, derive_seed(seed, prefix + ".wo")));
}

inline void add_attention_pool(ParameterStore& store, const std::string& prefix,
                               std::size_t dim, std::size_t hidden,
                               std::uint64_t seed) {
  add_linear(store, prefix + ".p1", dim, hidden, seed);
  add_linear(store, prefix + ".p2", hidden, 1, seed);
}

}  // namespace detail

// Builds the full parameter set for one model instance.
inline ParameterStore init_model(const EncoderConfig& cfg, std::size_t vocab_size,
                                 std::size_t num_providers, std::uint64_t seed) {
  if (vocab_size < 2)
    throw ContractError("init_model: vocabulary must include pad and oov rows");
  ParameterStore store;
  std::size_t rep = cfg.rep_dim();
  store.add("embed.word",
            detail::init_uniform({vocab_size, cfg.word_dim}, 0.1,
                                 derive_seed(seed, "embed.word")));
  store.add("embed.provider",
            detail::init_uniform({provider_rows(num_providers), cfg.provider_dim},
                                 0.1, derive_seed(seed, "embed.provider")));
  if (cfg.backbone == Backbone::kMhsa) {
    detail::add_mhsa(store, "news_fair.mhsa", cfg.word_dim, cfg.heads, cfg.head_dim,
                     seed);
    detail::add_attention_pool(store, "news_fair.pool", rep, cfg.attn_hidden, seed);
  } else {
    detail::add_linear(store, "news_fair.proj", cfg.word_dim, rep, seed);
  }
  detail::add_linear(store, "news_biased.mlp1", cfg.provider_dim, cfg.provider_dim,
                     seed);
  detail::add_linear(store, "news_biased.mlp2", cfg.provider_dim, rep, seed);
  detail::add_mhsa(store, "user_fair.mhsa", rep, cfg.heads, cfg.head_dim, seed);
  detail::add_attention_pool(store, "user_fair.pool", rep, cfg.attn_hidden, seed);
  // The biased user model is attention pooling alone: its output stays a
  // convex mix of clicked-news biased vectors, so any user-independent
  // direction it carries also appears in the biased news vectors, where the
  // orthogonal regularizer can see it.
  detail::add_attention_pool(store, "user_biased.pool", rep, cfg.attn_hidden, seed);
  detail::add_linear(store, "disc.mlp1", rep, cfg.disc_hidden, seed);
  detail::add_linear(store, "disc.mlp2", cfg.disc_hidden, cfg.num_classes, seed);
  return store;
}

inline bool is_discriminator_param(const std::string& name) {
  return starts_with(name, "disc.");
}

// Coarse grouping for gradient-norm reporting: text before the first dot.
inline std::string param_group(const std::string& name) {
  return name.substr(0, name.find('.'));
}

// ============================================================================
// Graph builders
// ============================================================================

namespace detail {

inline NodeRef linear(Graph& g, ParameterStore& store, const std::string& prefix,
                      NodeRef x, bool trainable) {
  NodeRef w = g.param(prefix + ".w", store.at(prefix + ".w"), trainable);
  NodeRef b = g.param(prefix + ".b", store.at(prefix + ".b"), trainable);
  return g.add(g.matmul(x, w), b);
}

// Multi-head self-attention over x [L x in_dim] -> [L x rep].
inline NodeRef mhsa(Graph& g, ParameterStore& store, const std::string& prefix,
                    NodeRef x, std::size_t heads, std::size_t head_dim,
                    bool trainable, EncoderTrace* trace) {
  double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
  std::vector<NodeRef> outs;
  outs.reserve(heads);
  for (std::size_t k = 0; k < heads; ++k) {
    std::string h = prefix + ".h" + std::to_string(k);
    NodeRef q = g.matmul(x, g.param(h + ".wq", store.at(h + ".wq"), trainable));
    NodeRef key = g.matmul(x, g.param(h + ".wk", store.at(h + ".wk"), trainable));
    NodeRef v = g.matmul(x, g.param(h + ".wv", store.at(h + ".wv"), trainable));
    NodeRef attn = g.softmax(g.scale(g.matmul(q, g.transpose(key)), inv_sqrt));
    if (trace) trace->mhsa_attention.push_back(attn);
    outs.push_back(g.matmul(attn, v));
  }
  NodeRef cat = outs.size() == 1 ? outs[0] : g.concat(outs, 1);
  return g.matmul(cat, g.param(prefix + ".wo", store.at(prefix + ".wo"), trainable));
}

// Additive attention pooling over h [L x dim] -> [1 x dim]: a two-layer MLP
// (tanh hidden) scores each position, softmax weights the rows.
inline NodeRef attention_pool(Graph& g, ParameterStore& store,
                              const std::string& prefix, NodeRef h, bool trainable,
                              EncoderTrace* trace) {
  NodeRef hidden = g.tanh(linear(g, store, prefix + ".p1", h, trainable));
  NodeRef logits = linear(g, store, prefix + ".p2", hidden, trainable);  // [L x 1]
  NodeRef weights = g.softmax(g.transpose(logits));                      // [1 x L]
  if (trace) trace->pool_attention.push_back(weights);
  return g.matmul(weights, h);
}

// Drops padding tokens and truncates to the title window. Self-attention and
// pooling over the compacted sequence equal the padded-and-masked forms, and
// the reserved pad row stays gradient-free.
inline std::vector<int> compact_title(const std::vector<int>& title_ids,
                                      std::size_t title_len) {
  std::vector<int> out;
  out.reserve(std::min(title_ids.size(), title_len));
  for (std::size_t i = 0; i < title_ids.size() && i < title_len; ++i)
    if (title_ids[i] != 0) out.push_back(title_ids[i]);
  return out;
}

}  // namespace detail

// Fair news representation from title tokens alone -> [1 x rep].
// Empty/all-padding titles yield a constant zero vector, flagged degenerate.
inline NodeRef build_news_fair(Graph& g, const EncoderConfig& cfg,
                               ParameterStore& store,
                               const std::vector<int>& title_ids, bool trainable,
                               EncoderTrace* trace = nullptr,
                               bool* degenerate = nullptr) {
  std::vector<int> ids = detail::compact_title(title_ids, cfg.title_len);
  if (degenerate) *degenerate = ids.empty();
  if (ids.empty()) return g.constant(Tensor::zeros({1, cfg.rep_dim()}));
  NodeRef table = g.param("embed.word", store.at("embed.word"), trainable);
  NodeRef x = g.embedding_lookup(table, ids, 0);
  if (cfg.backbone == Backbone::kMeanpool) {
    // Mean of non-pad word embeddings, projected to the representation width.
    NodeRef mean = g.scale(
        g.matmul(g.constant(Tensor({1, ids.size()},
                                   std::vector<double>(ids.size(), 1.0))),
                 x),
        1.0 / static_cast<double>(ids.size()));
    return detail::linear(g, store, "news_fair.proj", mean, trainable);
  }
  NodeRef h = detail::mhsa(g, store, "news_fair.mhsa", x, cfg.heads, cfg.head_dim,
                           trainable, trace);
  return detail::attention_pool(g, store, "news_fair.pool", h, trainable, trace);
}

// Biased news representation from the provider ID alone -> [1 x rep].
// IDs outside [0, H] map to the unknown-provider bucket row H.
inline NodeRef build_news_biased(Graph& g, const EncoderConfig& cfg,
                                 ParameterStore& store, int provider_id,
                                 bool trainable) {
  Tensor& table = store.at("embed.provider");
  int bucket = static_cast<int>(table.shape[0]) - 1;
  int id = (provider_id < 0 || provider_id > bucket) ? bucket : provider_id;
  NodeRef t = g.param("embed.provider", table, trainable);
  NodeRef e = g.embedding_lookup(t, {id});
  NodeRef hidden = g.relu(detail::linear(g, store, "news_biased.mlp1", e, trainable));
  return detail::linear(g, store, "news_biased.mlp2", hidden, trainable);
}

enum class UserSide { kFair, kBiased };

// User representation from clicked-news representations (fair side consumes
// fair reps, biased side biased reps). Only the m most recent entries count;
// an empty history yields a constant zero vector, flagged degenerate.
inline NodeRef build_user(Graph& g, const EncoderConfig& cfg, ParameterStore& store,
                          const std::vector<NodeRef>& history_reps, UserSide side,
                          bool trainable, EncoderTrace* trace = nullptr,
                          bool* degenerate = nullptr) {
  std::size_t n = history_reps.size();
  std::size_t take = std::min(n, cfg.history_len);
  if (degenerate) *degenerate = take == 0;
  if (take == 0) return g.constant(Tensor::zeros({1, cfg.rep_dim()}));
  std::vector<NodeRef> recent(history_reps.end() - static_cast<long>(take),
                              history_reps.end());
  NodeRef x = recent.size() == 1 ? recent[0] : g.concat(recent, 0);
  if (side == UserSide::kBiased) {
    // Attention pooling alone: the biased user vector stays a convex mix of
    // the clicked-news biased vectors (see init_model).
    return detail::attention_pool(g, store, "user_biased.pool", x, trainable, trace);
  }
  NodeRef h = detail::mhsa(g, store, "user_fair.mhsa", x, cfg.heads, cfg.head_dim,
                           trainable, trace);
  return detail::attention_pool(g, store, "user_fair.pool", h, trainable, trace);
}

// Provider logits [B x num_classes] from fair news representations [B x rep].
inline NodeRef build_discriminator(Graph& g, const EncoderConfig& cfg,
                                   ParameterStore& store, NodeRef fair_reps,
                                   bool trainable) {
  if (g.value(fair_reps).cols() != cfg.rep_dim())
    throw ShapeError("discriminator: input width " +
                     std::to_string(g.value(fair_reps).cols()) +
                     " does not match representation dim " +
                     std::to_string(cfg.rep_dim()));
  NodeRef hidden =
      g.relu(detail::linear(g, store, "disc.mlp1", fair_reps, trainable));
  return detail::linear(g, store, "disc.mlp2", hidden, trainable);
}

// ============================================================================
// Value-level wrappers (build a throwaway graph, return plain tensors)
// ============================================================================

inline DualNewsRep encode_news(const EncoderConfig& cfg, ParameterStore& store,
                               const std::vector<int>& title_ids, int provider_id) {
  Graph g;
  DualNewsRep rep;
  NodeRef fair =
      build_news_fair(g, cfg, store, title_ids, false, nullptr, &rep.fair_degenerate);
  NodeRef biased = build_news_biased(g, cfg, store, provider_id, false);
  rep.fair = g.value(fair);
  rep.biased = g.value(biased);
  return rep;
}

inline DualUserRep encode_user(const EncoderConfig& cfg, ParameterStore& store,
                               const std::vector<DualNewsRep>& history) {
  Graph g;
  std::vector<NodeRef> fair_h, biased_h;
  fair_h.reserve(history.size());
  biased_h.reserve(history.size());
  for (const DualNewsRep& h : history) {
    fair_h.push_back(g.constant(h.fair));
    biased_h.push_back(g.constant(h.biased));
  }
  DualUserRep rep;
  NodeRef fair = build_user(g, cfg, store, fair_h, UserSide::kFair, false, nullptr,
                            &rep.degenerate);
  NodeRef biased = build_user(g, cfg, store, biased_h, UserSide::kBiased, false);
  rep.fair = g.value(fair);
  rep.biased = g.value(biased);
  return rep;
}

// ============================================================================
// Pretrained word embeddings
// ============================================================================

struct EmbeddingLoadStats {
  std::size_t loaded = 0;   // vocabulary rows overwritten
  std::size_t skipped = 0;  // file words outside the vocabulary
};

// Text format: one word followed by word_dim floats per line, whitespace
// separated. Vocabulary words found in the file replace their random rows;
// everything else keeps its initialization.
inline EmbeddingLoadStats load_pretrained_embeddings(
    ParameterStore& store, const std::unordered_map<std::string, int>& word_id,
    const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("embeddings: cannot open: " + path);
  Tensor& table = store.at("embed.word");
  std::size_t dim = table.shape[1];
  EmbeddingLoadStats stats;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    std::vector<double> vals;
    vals.reserve(dim);
    double x;
    while (ls >> x) vals.push_back(x);
    if (vals.size() != dim)
      throw ParseError("embeddings: " + path + ":" + std::to_string(line_no) +
                       ": expected " + std::to_string(dim) + " values, got " +
                       std::to_string(vals.size()));
    auto it = word_id.find(word);
    if (it == word_id.end()) {
      ++stats.skipped;
      continue;
    }
    std::size_t row = static_cast<std::size_t>(it->second);
    if (row >= table.shape[0])
      throw IndexError("embeddings: vocabulary id " + std::to_string(it->second) +
                       " exceeds table rows");
    std::copy(vals.begin(), vals.end(), table.values.begin() + row * dim);
    ++stats.loaded;
  }
  return stats;
}

}  // namespace fairrec
