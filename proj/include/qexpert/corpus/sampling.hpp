#pragma once

#include <algorithm>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "qexpert/corpus/dataset.hpp"

namespace qexpert {

/// (question, better user, worse user): votes(pos) > votes(neg) on that question.
struct Triple {
  std::string question_id;
  std::string pos_user_id;
  std::string neg_user_id;

  friend bool operator==(const Triple&, const Triple&) = default;
  friend auto operator<=>(const Triple&, const Triple&) = default;
};

/// Strictly ordered answerer pairs of one question, largest vote gap first,
/// capped at max_pairs. Equal gaps are ordered by (pos, neg) user id.
inline std::vector<Triple> question_triples(const QuestionRecord& r, std::size_t max_pairs = 10) {
  struct Cand {
    std::int64_t gap;
    const Answer* pos;
    const Answer* neg;
  };
  std::vector<Cand> cands;
  for (const auto& a : r.answers)
    for (const auto& b : r.answers)
      if (a.votes > b.votes) cands.push_back({a.votes - b.votes, &a, &b});
  std::sort(cands.begin(), cands.end(), [](const Cand& x, const Cand& y) {
    if (x.gap != y.gap) return x.gap > y.gap;
    return std::tie(x.pos->user_id, x.neg->user_id) < std::tie(y.pos->user_id, y.neg->user_id);
  });
  if (cands.size() > max_pairs) cands.resize(max_pairs);
  std::vector<Triple> out;
  out.reserve(cands.size());
  for (const auto& c : cands) out.push_back({r.question_id, c.pos->user_id, c.neg->user_id});
  return out;
}

/// Training triples for a whole split, shuffled with rng.
template <typename Rng>
std::vector<Triple> make_triples(const Dataset& ds, Rng& rng, std::size_t max_pairs_per_question = 10) {
  std::vector<Triple> out;
  for (const auto& r : ds.records) {
    auto t = question_triples(r, max_pairs_per_question);
    out.insert(out.end(), std::make_move_iterator(t.begin()), std::make_move_iterator(t.end()));
  }
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

struct CandidatePool {
  std::string question_id;
  std::vector<std::string> candidates;
  std::size_t gold_index = 0;

  const std::string& gold() const { return candidates.at(gold_index); }
};

struct PoolOutcome {
  std::optional<CandidatePool> pool;
  std::string skip_reason;  // set when pool is empty
};

/// Gold expert plus K-1 users drawn uniformly without replacement from
/// `all_users` (sorted, distinct) minus the gold; candidate order shuffled.
template <typename Rng>
PoolOutcome sample_candidate_pool(const QuestionRecord& r, const std::vector<std::string>& all_users, std::size_t k,
                                  Rng& rng) {
  if (k < 1) throw std::invalid_argument("candidate pool size must be >= 1");
  if (k > all_users.size())
    throw std::invalid_argument("candidate pool size " + std::to_string(k) + " exceeds " +
                                std::to_string(all_users.size()) + " distinct users");
  PoolOutcome out;
  const auto gold = r.gold_user();
  if (!gold) {
    out.skip_reason = "tied top vote";
    return out;
  }
  if (!std::binary_search(all_users.begin(), all_users.end(), *gold)) {
    out.skip_reason = "gold user " + *gold + " not in user set";
    return out;
  }
  std::vector<std::string> others;
  others.reserve(all_users.size() - 1);
  for (const auto& u : all_users)
    if (u != *gold) others.push_back(u);
  // Partial Fisher-Yates: the first k-1 entries become a uniform sample.
  for (std::size_t i = 0; i + 1 < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, others.size() - 1);
    std::swap(others[i], others[pick(rng)]);
  }
  CandidatePool pool;
  pool.question_id = r.question_id;
  pool.candidates.assign(others.begin(), others.begin() + std::ptrdiff_t(k - 1));
  pool.candidates.push_back(*gold);
  std::shuffle(pool.candidates.begin(), pool.candidates.end(), rng);
  pool.gold_index = std::size_t(std::find(pool.candidates.begin(), pool.candidates.end(), *gold) - pool.candidates.begin());
  out.pool = std::move(pool);
  return out;
}

}  // namespace qexpert
