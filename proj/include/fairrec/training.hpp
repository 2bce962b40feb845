#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "fairrec/adam.hpp"
#include "fairrec/data.hpp"
#include "fairrec/encoders.hpp"
#include "fairrec/eval.hpp"
#include "fairrec/losses.hpp"

namespace fairrec {

struct TrainConfig {
  int negatives = 4;
  std::size_t batch_size = 32;
  int epochs = 3;
  double lr = 1e-4;
  double clip_norm = 5.0;
  int disc_inner_steps = 1;  // 0 freezes the discriminator entirely
  LossWeights weights;
  bool zero_biased = false;  // ablation: biased vectors pinned to zero
};

// Pre-update measurements on one batch. Side quantities are reported even
// when their weight is zero; only weighted terms enter the objective.
struct StepReport {
  double l_click = 0.0;
  double l_disc = 0.0;
  double l_adv = 0.0;
  double l_user_orth = 0.0;
  double l_news_orth = 0.0;
  double total = 0.0;
  double disc_accuracy = 0.0;      // batch accuracy before the first disc update
  double disc_grad_norm = 0.0;     // pre-clip global norm, first inner step
  double encoder_grad_norm = 0.0;  // pre-clip global norm
  int orth_user_used = 0;
  int orth_user_skipped = 0;
  int orth_news_used = 0;
  int orth_news_skipped = 0;
};

namespace detail {

inline double gradient_norm(const GradientMap& grads) {
  double sq = 0.0;
  for (const auto& [name, g] : grads) sq += l2_norm_sq(g.values);
  return std::sqrt(sq);
}

inline double scalar_of(const Graph& g, NodeRef node, const char* component) {
  double v = g.value(node).values[0];
  if (!std::isfinite(v)) {
    throw NumericError(std::string("train_step: ") + component + " is not finite");
  }
  return v;
}

}  // namespace detail

// Alternating optimization: each step first fits the discriminator to the
// current fair representations (encoders frozen), then updates the encoders
// against the just-updated, now-frozen discriminator.
class Trainer {
 public:
  Trainer(const Corpus& corpus, const EncoderConfig& cfg, const TrainConfig& tcfg,
          ParameterStore& store)
      : corpus_(corpus),
        cfg_(cfg),
        tcfg_(tcfg),
        store_(store),
        provider_labels_(discriminator_labels(corpus, static_cast<int>(cfg.num_classes))) {
    if (tcfg.lr <= 0.0) throw ContractError("Trainer: learning rate must be positive");
    if (tcfg.clip_norm <= 0.0) throw ContractError("Trainer: clip norm must be positive");
    if (tcfg.disc_inner_steps < 0) {
      throw ContractError("Trainer: discriminator inner steps must be non-negative");
    }
    adam_disc_.lr = tcfg.lr;
    adam_enc_.lr = tcfg.lr;
  }

  StepReport step(const std::vector<TrainingInstance>& batch) {
    StepReport report;
    train_discriminator(batch, report);
    train_encoders(batch, report);
    return report;
  }

  void train_discriminator(const std::vector<TrainingInstance>& batch, StepReport& report) {
    if (batch.empty()) throw ContractError("train_step: empty batch");
    if (tcfg_.disc_inner_steps == 0) return;
    std::vector<int> news = unique_news(batch);
    Graph g;
    std::vector<NodeRef> fair_rows;
    std::vector<int> labels;
    fair_rows.reserve(news.size());
    labels.reserve(news.size());
    for (int d : news) {
      const NewsArticle& a = corpus_.news[static_cast<std::size_t>(d)];
      fair_rows.push_back(build_news_fair(g, cfg_, store_, a.tokens, false));
      labels.push_back(provider_labels_[static_cast<std::size_t>(a.provider)]);
    }
    NodeRef mat = fair_rows.size() == 1 ? fair_rows.front() : g.concat(fair_rows, 0);
    NodeRef logits = build_discriminator(g, cfg_, store_, mat, true);
    NodeRef loss = discriminator_loss(g, logits, labels);
    for (int inner = 0; inner < tcfg_.disc_inner_steps; ++inner) {
      if (inner > 0) g.recompute();
      double value = detail::scalar_of(g, loss, "l_disc");
      GradientMap grads = g.backward(loss);
      if (inner == 0) {
        report.l_disc = value;
        report.disc_accuracy = argmax_accuracy(g.value(logits), labels);
        report.disc_grad_norm = detail::gradient_norm(grads);
      }
      clip_global_norm(grads, tcfg_.clip_norm);
      adam_apply(adam_disc_, store_, grads);
    }
  }

  void train_encoders(const std::vector<TrainingInstance>& batch, StepReport& report) {
    if (batch.empty()) throw ContractError("train_step: empty batch");
    std::vector<int> news = unique_news(batch);
    std::vector<int> impressions = unique_impressions(batch);
    Graph g;

    std::map<int, NodeRef> news_fair, news_biased, news_sum_t;
    std::vector<int> labels;
    std::vector<NodeRef> fair_rows;
    for (int d : news) {
      const NewsArticle& a = corpus_.news[static_cast<std::size_t>(d)];
      NodeRef fair = build_news_fair(g, cfg_, store_, a.tokens, true);
      NodeRef biased = tcfg_.zero_biased
                           ? g.constant(Tensor::zeros({1, cfg_.rep_dim()}))
                           : build_news_biased(g, cfg_, store_, a.provider, true);
      news_fair[d] = fair;
      news_biased[d] = biased;
      news_sum_t[d] = g.transpose(g.add(fair, biased));
      fair_rows.push_back(fair);
      labels.push_back(provider_labels_[static_cast<std::size_t>(a.provider)]);
    }

    std::map<int, NodeRef> user_sum, user_fair, user_biased;
    for (int i : impressions) {
      const Impression& imp = corpus_.train[static_cast<std::size_t>(i)];
      std::vector<NodeRef> hist_fair, hist_biased;
      hist_fair.reserve(imp.history.size());
      hist_biased.reserve(imp.history.size());
      for (int d : imp.history) {
        hist_fair.push_back(news_fair.at(d));
        hist_biased.push_back(news_biased.at(d));
      }
      NodeRef fair = build_user(g, cfg_, store_, hist_fair, UserSide::kFair, true);
      NodeRef biased = tcfg_.zero_biased
                           ? g.constant(Tensor::zeros({1, cfg_.rep_dim()}))
                           : build_user(g, cfg_, store_, hist_biased, UserSide::kBiased, true);
      user_fair[i] = fair;
      user_biased[i] = biased;
      user_sum[i] = g.add(fair, biased);
    }

    std::vector<std::vector<NodeRef>> rows;
    rows.reserve(batch.size());
    for (const TrainingInstance& inst : batch) {
      NodeRef u = user_sum.at(inst.impression);
      std::vector<NodeRef> row{g.matmul(u, news_sum_t.at(inst.positive))};
      for (int d : inst.negatives) row.push_back(g.matmul(u, news_sum_t.at(d)));
      rows.push_back(std::move(row));
    }
    NodeRef l_click = nce_loss_batch(g, rows);

    NodeRef mat = fair_rows.size() == 1 ? fair_rows.front() : g.concat(fair_rows, 0);
    NodeRef logits = build_discriminator(g, cfg_, store_, mat, false);
    NodeRef l_adv = discriminator_loss(g, logits, labels);

    std::vector<std::pair<NodeRef, NodeRef>> user_pairs, news_pairs;
    for (int i : impressions) user_pairs.push_back({user_fair.at(i), user_biased.at(i)});
    for (int d : news) news_pairs.push_back({news_fair.at(d), news_biased.at(d)});
    OrthogonalTerm user_orth = orthogonal_reg(g, user_pairs);
    OrthogonalTerm news_orth = orthogonal_reg(g, news_pairs);

    NodeRef total = total_loss(g, tcfg_.weights, l_click, user_orth.value, news_orth.value, l_adv);

    report.l_click = detail::scalar_of(g, l_click, "l_click");
    report.l_adv = detail::scalar_of(g, l_adv, "l_adv");
    report.l_user_orth = detail::scalar_of(g, user_orth.value, "l_user_orth");
    report.l_news_orth = detail::scalar_of(g, news_orth.value, "l_news_orth");
    report.total = detail::scalar_of(g, total, "total");
    report.orth_user_used = user_orth.used;
    report.orth_user_skipped = user_orth.skipped;
    report.orth_news_used = news_orth.used;
    report.orth_news_skipped = news_orth.skipped;

    GradientMap grads = g.backward(total);
    report.encoder_grad_norm = detail::gradient_norm(grads);
    clip_global_norm(grads, tcfg_.clip_norm);
    adam_apply(adam_enc_, store_, grads);
  }

  const std::vector<int>& provider_labels() const { return provider_labels_; }

 private:
  std::vector<int> unique_news(const std::vector<TrainingInstance>& batch) const {
    std::set<int> uniq;
    for (const TrainingInstance& inst : batch) {
      check_news(inst.positive);
      uniq.insert(inst.positive);
      for (int d : inst.negatives) {
        check_news(d);
        uniq.insert(d);
      }
      if (inst.impression < 0 ||
          static_cast<std::size_t>(inst.impression) >= corpus_.train.size()) {
        throw IndexError("train_step: impression index " + std::to_string(inst.impression) +
                         " outside the training split");
      }
      const Impression& imp = corpus_.train[static_cast<std::size_t>(inst.impression)];
      for (int d : imp.history) {
        check_news(d);
        uniq.insert(d);
      }
    }
    return {uniq.begin(), uniq.end()};
  }

  static std::vector<int> unique_impressions(const std::vector<TrainingInstance>& batch) {
    std::set<int> uniq;
    for (const TrainingInstance& inst : batch) uniq.insert(inst.impression);
    return {uniq.begin(), uniq.end()};
  }

  void check_news(int d) const {
    if (d < 0 || static_cast<std::size_t>(d) >= corpus_.news.size()) {
      throw IndexError("train_step: news index " + std::to_string(d) + " outside the corpus");
    }
  }

  static double argmax_accuracy(const Tensor& logits, const std::vector<int>& labels) {
    int correct = 0;
    for (std::size_t r = 0; r < logits.rows(); ++r) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < logits.cols(); ++c) {
        if (logits.at(r, c) > logits.at(r, best)) best = c;
      }
      if (static_cast<int>(best) == labels[r]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(logits.rows());
  }

  const Corpus& corpus_;
  EncoderConfig cfg_;
  TrainConfig tcfg_;
  ParameterStore& store_;
  std::vector<int> provider_labels_;
  AdamState adam_disc_;
  AdamState adam_enc_;
};

// ============================================================================
// Full training runs
// ============================================================================

struct EpochLog {
  int epoch = 0;
  double l_click = 0.0;  // epoch means of the per-step pre-update values
  double l_disc = 0.0;
  double l_adv = 0.0;
  double l_user_orth = 0.0;
  double l_news_orth = 0.0;
  double val_auc = 0.0;
  double val_rnd10 = 0.0;  // NaN when undefined on this corpus
};

struct TrainOutputs {
  ParameterStore params;  // parameters of the best-validation-AUC epoch
  int best_epoch = 0;     // 0 means initial parameters (epochs == 0)
  double best_val_auc = 0.0;
  std::vector<EpochLog> log;
  int instance_count = 0;
  int skipped_impressions = 0;
};

namespace detail {

inline double validation_rnd10(const Corpus& corpus, const FairScorer& scorer) {
  try {
    std::map<std::string, const Impression*> first_by_user;
    for (const Impression& imp : corpus.valid) first_by_user.insert({imp.user, &imp});
    std::vector<RankedList> lists;
    for (const auto& [user, imp] : first_by_user) {
      Tensor rep = scorer.user_rep(imp->history);
      lists.push_back(rank_news(user, scorer.score_all(rep), corpus));
    }
    ProviderGroups groups = partition_groups(corpus, 0.5);
    return rnd_at_k(lists, groups, 10);
  } catch (const ContractError&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

}  // namespace detail

inline void write_train_log(const std::vector<EpochLog>& log, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path);
  os << "epoch,l_click,l_disc,l_adv,l_user_orth,l_news_orth,val_auc,val_rnd10\n";
  for (const EpochLog& e : log) {
    os << e.epoch << ',' << format_double(e.l_click) << ',' << format_double(e.l_disc) << ','
       << format_double(e.l_adv) << ',' << format_double(e.l_user_orth) << ','
       << format_double(e.l_news_orth) << ',' << format_double(e.val_auc) << ','
       << (std::isfinite(e.val_rnd10) ? format_double(e.val_rnd10) : std::string("na")) << '\n';
  }
}

// Initializes a model from the run seed, trains with per-epoch reshuffles,
// and returns the parameters of the epoch with the highest validation AUC.
inline TrainOutputs train_run(const Corpus& corpus, const EncoderConfig& cfg,
                              const TrainConfig& tcfg, std::uint64_t seed,
                              const std::string& log_csv = "",
                              const std::string& checkpoint_dir = "") {
  if (corpus.train.empty()) throw ContractError("train_run: empty training split");
  if (corpus.news.empty()) throw ContractError("train_run: corpus has no news");
  if (tcfg.batch_size == 0) throw ContractError("train_run: batch size must be positive");
  if (tcfg.epochs < 0) throw ContractError("train_run: epochs must be non-negative");

  ParameterStore store =
      init_model(cfg, static_cast<std::size_t>(corpus.vocab.size()), corpus.providers.size(),
                 derive_seed(seed, "init"));
  SampledInstances sampled =
      sample_instances(corpus.train, tcfg.negatives, derive_seed(seed, "negatives"));
  if (sampled.instances.empty()) {
    throw ContractError("train_run: no impression has both a click and a non-click");
  }

  Trainer trainer(corpus, cfg, tcfg, store);
  TrainOutputs out;
  out.instance_count = static_cast<int>(sampled.instances.size());
  out.skipped_impressions = sampled.skipped_impressions;

  ParameterStore best = store;
  double best_auc = -std::numeric_limits<double>::infinity();
  int best_epoch = 0;

  for (int epoch = 1; epoch <= tcfg.epochs; ++epoch) {
    std::vector<std::size_t> order(sampled.instances.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(seed, "epoch." + std::to_string(epoch)));
    rng.shuffle(order);

    EpochLog log;
    log.epoch = epoch;
    int steps = 0;
    for (std::size_t start = 0; start < order.size(); start += tcfg.batch_size) {
      std::size_t stop = std::min(order.size(), start + tcfg.batch_size);
      std::vector<TrainingInstance> batch;
      batch.reserve(stop - start);
      for (std::size_t i = start; i < stop; ++i) batch.push_back(sampled.instances[order[i]]);
      StepReport report = trainer.step(batch);
      log.l_click += report.l_click;
      log.l_disc += report.l_disc;
      log.l_adv += report.l_adv;
      log.l_user_orth += report.l_user_orth;
      log.l_news_orth += report.l_news_orth;
      ++steps;
    }
    log.l_click /= steps;
    log.l_disc /= steps;
    log.l_adv /= steps;
    log.l_user_orth /= steps;
    log.l_news_orth /= steps;

    FairScorer scorer(corpus, cfg, store);
    log.val_auc = accuracy_metrics(corpus.valid, scorer).auc;
    log.val_rnd10 = detail::validation_rnd10(corpus, scorer);
    out.log.push_back(log);

    if (!checkpoint_dir.empty()) {
      save_checkpoint(store, checkpoint_dir + "/epoch_" + std::to_string(epoch) + ".ckpt");
    }
    if (log.val_auc > best_auc) {
      best_auc = log.val_auc;
      best_epoch = epoch;
      best = store;
    }
  }

  out.params = std::move(best);
  out.best_epoch = best_epoch;
  out.best_val_auc = best_epoch == 0 ? 0.0 : best_auc;
  if (!checkpoint_dir.empty()) save_checkpoint(out.params, checkpoint_dir + "/best.ckpt");
  if (!log_csv.empty()) write_train_log(out.log, log_csv);
  return out;
}

}  // namespace fairrec
