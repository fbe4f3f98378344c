#pragma once

// Pairwise hinge training for both models.
//   Q-USER-CNN: max(0, margin - (cos(v_u+, h(q)) - cos(v_u-, h(q))))
//   Q-A-CNN:    max(0, margin - (cos(h(a+), h(q)) - cos(h(a-), h(q))))

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "qexpert/corpus/dataset.hpp"
#include "qexpert/corpus/sampling.hpp"
#include "qexpert/corpus/text.hpp"
#include "qexpert/log.hpp"
#include "qexpert/model.hpp"
#include "qexpert/optim.hpp"

namespace qexpert {

struct TrainConfig {
  double margin = 0.1;
  OptimizerKind optimizer = OptimizerKind::adam;
  double learning_rate = 1e-5;
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  std::size_t patience = 5;
  std::size_t max_pairs_per_question = 10;
  std::uint64_t seed = 0;
  bool skip_unresolvable = true;

  void validate() const {
    if (!(margin > 0.0)) throw std::invalid_argument("margin must be > 0");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be > 0");
    if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  }
};

inline double hinge_loss(double s_pos, double s_neg, double margin) {
  return std::max(0.0, margin - (s_pos - s_neg));
}

/// d loss / d s_pos; d loss / d s_neg is the negation. Zero at and beyond the kink.
inline double hinge_grad_pos(double s_pos, double s_neg, double margin) {
  return margin - (s_pos - s_neg) > 0.0 ? -1.0 : 0.0;
}

/// A question and its answers, tokenized and encoded to fixed length.
struct EncodedQuestion {
  std::vector<std::int32_t> ids;
  std::unordered_map<std::string, std::vector<std::int32_t>> answer_ids;  // only answers with text
};

struct TextEncoder {
  const Vocab* vocab = nullptr;
  TokenizerMode mode = TokenizerMode::whitespace;
  std::size_t length = 50;

  std::vector<std::int32_t> operator()(std::string_view text) const {
    return encode_text(tokenize(text, mode), *vocab, length);
  }
};

using EncodedCorpus = std::unordered_map<std::string, EncodedQuestion>;

inline EncodedCorpus encode_dataset(const Dataset& ds, const TextEncoder& enc) {
  EncodedCorpus out;
  for (const auto& r : ds.records) {
    EncodedQuestion q;
    q.ids = enc(r.text);
    for (const auto& a : r.answers)
      if (a.text) q.answer_ids.emplace(a.user_id, enc(*a.text));
    out.emplace(r.question_id, std::move(q));
  }
  return out;
}

struct BatchStats {
  double mean_loss = 0.0;
  double total_loss = 0.0;
  std::size_t used = 0;
  std::size_t skipped = 0;
};

struct EpochStats {
  double total_loss = 0.0;
  double mean_loss = 0.0;
  std::size_t triples = 0;
  std::size_t skipped = 0;
  std::vector<double> batch_means;
  std::vector<std::size_t> batch_sizes;
};

template <typename T>
class Trainer {
 public:
  Trainer(ModelParams<T>& params, const EncodedCorpus& corpus, TrainConfig cfg) : params_(params), corpus_(corpus), cfg_(cfg) {
    cfg_.validate();
    opt_.kind = cfg_.optimizer;
    opt_.learning_rate = cfg_.learning_rate;
    opt_.validate();
    params_.enable_grads();
  }

  const TrainConfig& config() const { return cfg_; }
  OptimizerState<T>& optimizer() { return opt_; }

  /// Zeroes gradients, runs forward/backward over the batch (train mode) and
  /// leaves the mean-loss gradient in the parameter buffers.
  template <typename Rng>
  BatchStats accumulate_gradients(std::span<const Triple> batch, Rng& rng) {
    params_.zero_grads();
    return run(batch, rng, true);
  }

  /// Mean batch loss without touching gradients.
  template <typename Rng>
  BatchStats batch_loss(std::span<const Triple> batch, Rng& rng) {
    return run(batch, rng, false);
  }

  /// One optimizer step over all trainable groups.
  template <typename Rng>
  BatchStats train_step(std::span<const Triple> batch, Rng& rng) {
    auto stats = accumulate_gradients(batch, rng);
    optim::step(params_.trainable(), opt_);
    return stats;
  }

  template <typename Rng>
  EpochStats train_epoch(std::vector<Triple>& triples, Rng& rng) {
    std::shuffle(triples.begin(), triples.end(), rng);
    EpochStats ep;
    for (std::size_t start = 0; start < triples.size(); start += cfg_.batch_size) {
      const std::size_t n = std::min(cfg_.batch_size, triples.size() - start);
      const auto s = train_step(std::span<const Triple>(triples).subspan(start, n), rng);
      ep.total_loss += s.total_loss;
      ep.triples += s.used;
      ep.skipped += s.skipped;
      ep.batch_means.push_back(s.mean_loss);
      ep.batch_sizes.push_back(s.used);
    }
    ep.mean_loss = ep.triples ? ep.total_loss / double(ep.triples) : 0.0;
    return ep;
  }

 private:
  const std::vector<std::int32_t>* answer_ids(const EncodedQuestion& q, const std::string& user) const {
    auto it = q.answer_ids.find(user);
    return it == q.answer_ids.end() ? nullptr : &it->second;
  }

  bool resolvable(const Triple& t) const {
    auto it = corpus_.find(t.question_id);
    if (it == corpus_.end()) return false;
    if (params_.config.kind == ModelKind::quser)
      return params_.find_user(t.pos_user_id) && params_.find_user(t.neg_user_id);
    return answer_ids(it->second, t.pos_user_id) && answer_ids(it->second, t.neg_user_id);
  }

  template <typename Rng>
  BatchStats run(std::span<const Triple> batch, Rng& rng, bool backward) {
    BatchStats stats;
    // Group by question in order of first appearance; one tower pass per question.
    std::vector<std::pair<std::string, std::vector<const Triple*>>> groups;
    std::unordered_map<std::string, std::size_t> group_of;
    for (const auto& t : batch) {
      if (!resolvable(t)) {
        if (!cfg_.skip_unresolvable)
          throw std::out_of_range("unresolvable triple (" + t.question_id + ", " + t.pos_user_id + ", " + t.neg_user_id + ")");
        log::warn("skipping unresolvable triple (" + t.question_id + ", " + t.pos_user_id + ", " + t.neg_user_id + ")");
        ++stats.skipped;
        continue;
      }
      auto [it, inserted] = group_of.emplace(t.question_id, groups.size());
      if (inserted) groups.emplace_back(t.question_id, std::vector<const Triple*>{});
      groups[it->second].second.push_back(&t);
      ++stats.used;
    }
    if (stats.used == 0) return stats;
    const T scale = T(1.0 / double(stats.used));
    const std::size_t d = params_.output_dim();
    const bool user_grads = backward && params_.config.fine_tune_users && params_.user_table.has_grad();

    for (const auto& [qid, triples] : groups) {
      const auto& q = corpus_.at(qid);
      auto qc = tower_forward(params_, q.ids, nn::Mode::train, rng);
      std::vector<T> g_q(d, T(0));
      if (params_.config.kind == ModelKind::quser) {
        for (const auto* t : triples) {
          const auto pi = *params_.find_user(t->pos_user_id), ni = *params_.find_user(t->neg_user_id);
          const auto vp = params_.user_table.row(pi), vn = params_.user_table.row(ni);
          const double sp = double(nn::cosine<T>(qc.output, vp)), sn = double(nn::cosine<T>(qc.output, vn));
          const double loss = hinge_loss(sp, sn, cfg_.margin);
          stats.total_loss += loss;
          if (!backward || loss <= 0.0) continue;
          auto gp = user_grads ? params_.user_table.grad().subspan(pi * d, d) : std::span<T>();
          auto gn = user_grads ? params_.user_table.grad().subspan(ni * d, d) : std::span<T>();
          nn::cosine_backward<T>(qc.output, vp, -scale, g_q, gp);
          nn::cosine_backward<T>(qc.output, vn, scale, g_q, gn);
        }
      } else {
        // Answers of this question, each through the shared tower once.
        std::vector<std::pair<std::string, TowerCache<T>>> answers;
        std::vector<std::vector<T>> g_answers;
        auto answer_cache = [&](const std::string& user) -> std::size_t {
          for (std::size_t i = 0; i < answers.size(); ++i)
            if (answers[i].first == user) return i;
          answers.emplace_back(user, tower_forward(params_, *answer_ids(q, user), nn::Mode::train, rng));
          g_answers.emplace_back(d, T(0));
          return answers.size() - 1;
        };
        for (const auto* t : triples) {
          const auto ai = answer_cache(t->pos_user_id);
          const auto bi = answer_cache(t->neg_user_id);
          const auto& hp = answers[ai].second.output;
          const auto& hn = answers[bi].second.output;
          const double sp = double(nn::cosine<T>(qc.output, hp)), sn = double(nn::cosine<T>(qc.output, hn));
          const double loss = hinge_loss(sp, sn, cfg_.margin);
          stats.total_loss += loss;
          if (!backward || loss <= 0.0) continue;
          nn::cosine_backward<T>(qc.output, hp, -scale, g_q, g_answers[ai]);
          nn::cosine_backward<T>(qc.output, hn, scale, g_q, g_answers[bi]);
        }
        if (backward)
          for (std::size_t i = 0; i < answers.size(); ++i) tower_backward(params_, answers[i].second, std::span<const T>(g_answers[i]));
      }
      if (backward) tower_backward(params_, qc, std::span<const T>(g_q));
    }
    stats.mean_loss = stats.total_loss / double(stats.used);
    return stats;
  }

  ModelParams<T>& params_;
  const EncodedCorpus& corpus_;
  TrainConfig cfg_;
  OptimizerState<T> opt_;
};

}  // namespace qexpert
