#pragma once

// Candidate-pool ranking and Top-1 accuracy.

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "qexpert/corpus/dataset.hpp"
#include "qexpert/corpus/sampling.hpp"
#include "qexpert/log.hpp"
#include "qexpert/model.hpp"
#include "qexpert/train.hpp"
#include "qexpert/util.hpp"

namespace qexpert {

struct RankedUser {
  std::string user_id;
  double score = 0.0;
};

/// Descending score, ties by ascending user id. nullopt scores are excluded.
inline std::vector<RankedUser> rank_scores(const std::vector<std::string>& users,
                                           const std::vector<std::optional<double>>& scores) {
  std::vector<RankedUser> out;
  for (std::size_t i = 0; i < users.size(); ++i)
    if (scores[i]) out.push_back({users[i], *scores[i]});
  std::sort(out.begin(), out.end(), [](const RankedUser& a, const RankedUser& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.user_id < b.user_id;
  });
  return out;
}

/// Scores a candidate pool for one question; nullopt marks a user the scorer cannot resolve.
using PoolScorer = std::function<std::vector<std::optional<double>>(const QuestionRecord&, const CandidatePool&)>;

/// Q-USER-CNN: encode the question once, cosine against each user row.
template <typename T>
std::vector<std::optional<double>> score_users(const ModelParams<T>& p, std::span<const std::int32_t> q_ids,
                                               const std::vector<std::string>& users) {
  const auto h = question_forward(p, q_ids);
  std::vector<std::optional<double>> out;
  out.reserve(users.size());
  for (const auto& u : users) {
    const auto idx = p.find_user(u);
    if (!idx) {
      out.emplace_back();
      continue;
    }
    out.emplace_back(double(nn::cosine<T>(h, p.user_table.row(*idx))));
  }
  return out;
}

template <typename T>
std::vector<RankedUser> rank_candidates(const ModelParams<T>& p, std::span<const std::int32_t> q_ids,
                                        const CandidatePool& pool) {
  const auto scores = score_users(p, q_ids, pool.candidates);
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (!scores[i]) log::warn("question " + pool.question_id + ": unknown pool user " + pool.candidates[i] + " excluded");
  return rank_scores(pool.candidates, scores);
}

template <typename T>
PoolScorer make_user_scorer(const ModelParams<T>& p, TextEncoder enc) {
  return [&p, enc](const QuestionRecord& r, const CandidatePool& pool) {
    return score_users(p, enc(r.text), pool.candidates);
  };
}

/// First answer text of every user in `ds`, used to represent candidates that
/// did not answer the question being ranked.
inline std::unordered_map<std::string, std::string> profile_answers(const Dataset& ds) {
  std::unordered_map<std::string, std::string> out;
  for (const auto& r : ds.records)
    for (const auto& a : r.answers)
      if (a.text) out.emplace(a.user_id, *a.text);
  return out;
}

/// Q-A-CNN: a candidate is their answer to this question, else their profile answer.
template <typename T>
PoolScorer make_answer_scorer(const ModelParams<T>& p, TextEncoder enc,
                              std::unordered_map<std::string, std::string> profiles) {
  return [&p, enc, profiles = std::move(profiles)](const QuestionRecord& r, const CandidatePool& pool) {
    const auto h = question_forward(p, enc(r.text));
    std::vector<std::optional<double>> out;
    for (const auto& u : pool.candidates) {
      const std::string* text = nullptr;
      if (const auto* a = r.find_answer(u); a && a->text) text = &*a->text;
      if (!text)
        if (auto it = profiles.find(u); it != profiles.end()) text = &it->second;
      if (!text) {
        out.emplace_back();
        continue;
      }
      const auto ha = question_forward(p, enc(*text));
      out.emplace_back(double(nn::cosine<T>(h, ha)));
    }
    return out;
  };
}

struct QuestionRanking {
  std::string question_id;
  std::string gold;
  std::vector<RankedUser> ranked;
};

struct EvalReport {
  std::string split;
  std::size_t k = 10;
  std::uint64_t seed = 0;
  std::size_t questions = 0;
  std::size_t correct = 0;
  double top1_accuracy = 0.0;
  std::vector<std::pair<std::string, std::string>> skipped;  // (question id, reason)
  std::vector<QuestionRanking> rankings;
};

struct EvalOptions {
  std::size_t threads = 0;  // 0: QEXPERT_THREADS or 1
  bool keep_rankings = false;
};

inline std::size_t eval_threads(std::size_t requested) {
  if (requested) return requested;
  if (const char* env = std::getenv("QEXPERT_THREADS")) {
    std::size_t n = 0;
    if (parse_number(std::string_view(env), n) && n > 0) return n;
  }
  return 1;
}

/// One pool per eligible question, drawn from the rng stream (seed, question id).
inline EvalReport evaluate_top1(const PoolScorer& scorer, const Dataset& split, const std::vector<std::string>& all_users,
                                std::size_t k, std::uint64_t seed, EvalOptions opts = {}) {
  std::vector<std::string> users = all_users;
  std::sort(users.begin(), users.end());
  users.erase(std::unique(users.begin(), users.end()), users.end());

  struct Outcome {
    bool evaluated = false;
    bool correct = false;
    std::string skip;
    QuestionRanking ranking;
  };
  std::vector<Outcome> outcomes(split.records.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto& r = split.records[i];
      auto rng = question_rng(seed, r.question_id);
      auto pool = sample_candidate_pool(r, users, k, rng);
      auto& o = outcomes[i];
      if (!pool.pool) {
        o.skip = pool.skip_reason;
        continue;
      }
      const auto scores = scorer(r, *pool.pool);
      if (!scores[pool.pool->gold_index]) {
        o.skip = "gold user " + pool.pool->gold() + " has no representation";
        continue;
      }
      o.ranking = {r.question_id, pool.pool->gold(), rank_scores(pool.pool->candidates, scores)};
      o.evaluated = true;
      o.correct = o.ranking.ranked.front().user_id == o.ranking.gold;
    }
  };
  const std::size_t threads = std::min(eval_threads(opts.threads), std::max<std::size_t>(1, split.records.size()));
  if (threads <= 1) {
    work(0, split.records.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (split.records.size() + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
      const std::size_t b = t * chunk, e = std::min(split.records.size(), b + chunk);
      if (b < e) pool.emplace_back(work, b, e);
    }
    for (auto& th : pool) th.join();
  }

  EvalReport rep;
  rep.split = to_string(split.split);
  rep.k = k;
  rep.seed = seed;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    auto& o = outcomes[i];
    if (!o.evaluated) {
      rep.skipped.emplace_back(split.records[i].question_id, o.skip);
      continue;
    }
    ++rep.questions;
    if (o.correct) ++rep.correct;
    if (opts.keep_rankings) rep.rankings.push_back(std::move(o.ranking));
  }
  if (rep.questions == 0) throw std::runtime_error("evaluation split " + rep.split + " has no eligible questions");
  rep.top1_accuracy = double(rep.correct) / double(rep.questions);
  return rep;
}

/// Tab-separated key/value report; byte-identical for identical inputs.
inline void write_report(std::ostream& out, const EvalReport& rep) {
  out << "split\t" << rep.split << '\n'
      << "k\t" << rep.k << '\n'
      << "seed\t" << rep.seed << '\n'
      << "questions\t" << rep.questions << '\n'
      << "correct\t" << rep.correct << '\n'
      << "top1\t" << format_real(rep.top1_accuracy) << '\n'
      << "skipped\t" << rep.skipped.size() << '\n';
  for (const auto& [q, why] : rep.skipped) out << "skip\t" << q << '\t' << why << '\n';
  for (const auto& r : rep.rankings) {
    out << "ranking\t" << r.question_id << '\t' << r.gold << '\t';
    for (std::size_t i = 0; i < r.ranked.size(); ++i)
      out << (i ? "," : "") << r.ranked[i].user_id << ':' << format_real(r.ranked[i].score);
    out << '\n';
  }
}

inline std::string report_string(const EvalReport& rep) {
  std::ostringstream os;
  write_report(os, rep);
  return os.str();
}

}  // namespace qexpert
