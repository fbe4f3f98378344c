#pragma once

// Synthetic QA community with planted expertise. Each user belongs to one
// topic; each topic owns a disjoint keyword set and one designated expert who
// answers every question of the topic with the strictly highest vote count.

#include <algorithm>
#include <cstdint>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "qexpert/corpus/dataset.hpp"

namespace qexpert {

struct SyntheticConfig {
  std::size_t topics = 5;
  std::size_t users = 50;
  std::size_t train_questions = 1000;
  std::size_t dev_questions = 100;
  std::size_t test_questions = 200;  // per test split (test1 and test2)
  std::size_t vocab_size = 600;      // topic keywords + global tokens
  double noise_rate = 0.1;           // fraction of tokens drawn from the whole vocabulary
  std::size_t min_length = 8;
  std::size_t max_length = 30;       // <= 50
  std::size_t max_peers = 3;         // same-topic answerers besides the expert
  std::size_t max_distractors = 2;   // answerers from other topics
  bool answer_texts = true;
  std::uint64_t seed = 0;
};

struct SyntheticData {
  Dataset train, dev, test1, test2;
  std::vector<std::string> users;                     // sorted ids
  std::map<std::string, std::size_t> user_topic;
  std::vector<std::string> topic_expert;              // expert id per topic
  std::vector<std::vector<std::string>> topic_keywords;
  std::vector<std::string> global_tokens;
  std::map<std::string, std::size_t> question_topic;  // every split
  std::map<std::string, std::string> expert_of_question;
};

namespace detail {
inline std::string padded(std::size_t v, int width) {
  std::string s = std::to_string(v);
  return std::string(std::size_t(std::max(0, width - int(s.size()))), '0') + s;
}
}  // namespace detail

inline SyntheticData generate_synthetic(const SyntheticConfig& cfg) {
  if (cfg.topics < 1) throw std::invalid_argument("synthetic config needs at least one topic");
  if (cfg.users < cfg.topics)
    throw std::invalid_argument("synthetic config has fewer users (" + std::to_string(cfg.users) + ") than topics (" +
                                std::to_string(cfg.topics) + ")");
  if (cfg.min_length < 1 || cfg.max_length < cfg.min_length || cfg.max_length > 50)
    throw std::invalid_argument("synthetic lengths must satisfy 1 <= min <= max <= 50");
  if (!(cfg.noise_rate >= 0.0 && cfg.noise_rate <= 1.0)) throw std::invalid_argument("noise rate must lie in [0,1]");
  const std::size_t per_topic = cfg.vocab_size / (cfg.topics + 1);
  if (per_topic < 1) throw std::invalid_argument("vocab too small for the number of topics");

  std::mt19937_64 rng(cfg.seed);
  SyntheticData out;

  for (std::size_t t = 0; t < cfg.topics; ++t) {
    out.topic_keywords.emplace_back();
    for (std::size_t j = 0; j < per_topic; ++j) out.topic_keywords[t].push_back("t" + std::to_string(t) + "w" + std::to_string(j));
  }
  for (std::size_t j = per_topic * cfg.topics; j < cfg.vocab_size; ++j)
    out.global_tokens.push_back("g" + std::to_string(j - per_topic * cfg.topics));
  std::vector<std::string> all_tokens;
  for (const auto& kw : out.topic_keywords) all_tokens.insert(all_tokens.end(), kw.begin(), kw.end());
  all_tokens.insert(all_tokens.end(), out.global_tokens.begin(), out.global_tokens.end());

  std::vector<std::vector<std::string>> topic_users(cfg.topics);
  for (std::size_t u = 0; u < cfg.users; ++u) {
    const std::string id = "u" + detail::padded(u, 4);
    const std::size_t topic = u % cfg.topics;
    out.users.push_back(id);
    out.user_topic[id] = topic;
    topic_users[topic].push_back(id);
  }
  for (std::size_t t = 0; t < cfg.topics; ++t) out.topic_expert.push_back(topic_users[t].front());

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> length_dist(cfg.min_length, cfg.max_length);
  auto text_for = [&](std::size_t topic) {
    const auto& kw = out.topic_keywords[topic];
    std::uniform_int_distribution<std::size_t> pick_kw(0, kw.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_any(0, all_tokens.size() - 1);
    const std::size_t len = length_dist(rng);
    std::string s;
    for (std::size_t i = 0; i < len; ++i) {
      if (i) s += ' ';
      s += unit(rng) < cfg.noise_rate ? all_tokens[pick_any(rng)] : kw[pick_kw(rng)];
    }
    return s;
  };

  auto make_split = [&](Split split, std::size_t count, Dataset& ds) {
    ds.split = split;
    std::uniform_int_distribution<std::size_t> pick_topic(0, cfg.topics - 1);
    for (std::size_t q = 0; q < count; ++q) {
      QuestionRecord r;
      r.question_id = to_string(split) + "-" + detail::padded(q, 6);
      const std::size_t topic = pick_topic(rng);
      r.text = text_for(topic);

      std::vector<std::string> peers(topic_users[topic].begin() + 1, topic_users[topic].end());
      std::shuffle(peers.begin(), peers.end(), rng);
      const std::size_t peer_cap = std::min(cfg.max_peers, peers.size());
      const std::size_t n_peers = peer_cap ? std::uniform_int_distribution<std::size_t>(1, peer_cap)(rng) : 0;
      peers.resize(n_peers);

      std::vector<std::string> outsiders;
      for (std::size_t t = 0; t < cfg.topics; ++t)
        if (t != topic) outsiders.insert(outsiders.end(), topic_users[t].begin(), topic_users[t].end());
      std::shuffle(outsiders.begin(), outsiders.end(), rng);
      const std::size_t out_cap = std::min(cfg.max_distractors, outsiders.size());
      outsiders.resize(std::uniform_int_distribution<std::size_t>(0, out_cap)(rng));

      std::int64_t top_other = 0;
      for (const auto& u : peers) {
        const auto v = std::uniform_int_distribution<std::int64_t>(2, 12)(rng);
        top_other = std::max(top_other, v);
        r.answers.push_back({u, v, std::nullopt});
      }
      for (const auto& u : outsiders) {
        const auto v = std::uniform_int_distribution<std::int64_t>(0, 3)(rng);
        top_other = std::max(top_other, v);
        r.answers.push_back({u, v, std::nullopt});
      }
      const std::string& expert = out.topic_expert[topic];
      const auto expert_votes = top_other + 1 + std::uniform_int_distribution<std::int64_t>(0, 5)(rng);
      r.answers.push_back({expert, expert_votes, std::nullopt});
      std::shuffle(r.answers.begin(), r.answers.end(), rng);
      if (cfg.answer_texts)
        for (auto& a : r.answers) a.text = text_for(out.user_topic.at(a.user_id));

      out.question_topic[r.question_id] = topic;
      out.expert_of_question[r.question_id] = expert;
      ds.records.push_back(std::move(r));
    }
  };
  make_split(Split::train, cfg.train_questions, out.train);
  make_split(Split::dev, cfg.dev_questions, out.dev);
  make_split(Split::test1, cfg.test_questions, out.test1);
  make_split(Split::test2, cfg.test_questions, out.test2);
  return out;
}

}  // namespace qexpert
