#include <cmath>
#include <random>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <gtest/gtest.h>

#include "qexpert/embed.hpp"
#include "qexpert/tensor.hpp"

using namespace qexpert;

namespace {

QuestionRecord answered_by(std::string id, std::vector<std::string> users) {
  QuestionRecord r;
  r.question_id = std::move(id);
  std::int64_t v = 0;
  for (auto& u : users) r.answers.push_back({u, v++, std::nullopt});
  return r;
}

double cos_rows(const EmbeddingTable& t, std::size_t a, std::size_t b) {
  return nn::cosine<double>(t.row(a), t.row(b));
}

UserGraph two_cliques(std::size_t n) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < 2 * n; ++i) names.push_back("v" + std::string(i < 10 ? "0" : "") + std::to_string(i));
  std::vector<std::tuple<std::string, std::string, std::uint32_t>> edges;
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) edges.emplace_back(names[c * n + i], names[c * n + j], 1u);
  edges.emplace_back(names[0], names[n], 1u);
  return UserGraph::from_edges(names, edges);
}

}  // namespace

TEST(UserGraph, TriangleFromOneQuestion) {
  Dataset ds;
  ds.records.push_back(answered_by("q1", {"A", "B", "C"}));
  const auto g = build_user_graph(ds);
  ASSERT_EQ(g.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(g.weight(i, j), i == j ? 0u : 1u);
}

TEST(UserGraph, WeightCountsCoAnswers) {
  Dataset ds;
  for (int i = 0; i < 3; ++i) ds.records.push_back(answered_by("q" + std::to_string(i), {"A", "B"}));
  ds.records.push_back(answered_by("solo", {"Z"}));
  const auto g = build_user_graph(ds);
  EXPECT_EQ(g.weight(g.index_of("A"), g.index_of("B")), 3u);
  EXPECT_EQ(g.weight(g.index_of("B"), g.index_of("A")), 3u);
  EXPECT_TRUE(g.adjacency[g.index_of("Z")].empty());
  EXPECT_THROW(build_user_graph(Dataset{}), std::invalid_argument);
}

TEST(Walks, TwoVertexAlternates) {
  const auto g = UserGraph::from_edges({"a", "b"}, {{"a", "b", 1u}});
  std::mt19937_64 rng(0);
  const auto c = generate_walks(g, 3, 7, rng);
  ASSERT_EQ(c.walks.size(), 6u);
  for (const auto& w : c.walks) {
    ASSERT_EQ(w.size(), 7u);
    for (std::size_t i = 1; i < w.size(); ++i) EXPECT_NE(w[i], w[i - 1]);
  }
}

TEST(Walks, IsolatedVertexIsSingleton) {
  const auto g = UserGraph::from_edges({"a", "b", "lonely"}, {{"a", "b", 2u}});
  std::mt19937_64 rng(1);
  const auto c = generate_walks(g, 2, 10, rng);
  std::size_t singletons = 0;
  for (const auto& w : c.walks) {
    EXPECT_LE(w.size(), 10u);
    if (w.front() == std::int32_t(g.index_of("lonely"))) {
      EXPECT_EQ(w.size(), 1u);
      ++singletons;
    }
  }
  EXPECT_EQ(singletons, 2u);
  EXPECT_THROW(generate_walks(g, 0, 10, rng), std::invalid_argument);
  EXPECT_THROW(generate_walks(g, 1, 1, rng), std::invalid_argument);
}

TEST(Walks, StarLeavesVisitedUniformly) {
  const auto g = UserGraph::from_edges({"c", "l1", "l2", "l3", "l4"},
                                       {{"c", "l1", 1u}, {"c", "l2", 1u}, {"c", "l3", 1u}, {"c", "l4", 1u}});
  std::mt19937_64 rng(99);
  const auto c = generate_walks(g, 10000, 2, rng);
  std::vector<double> hits(5, 0.0);
  double steps = 0;
  for (const auto& w : c.walks)
    if (w.front() == 0) {
      ++hits[std::size_t(w[1])];
      ++steps;
    }
  ASSERT_EQ(steps, 10000.0);
  for (std::size_t leaf = 1; leaf <= 4; ++leaf) EXPECT_NEAR(hits[leaf] / steps, 0.25, 0.02);
}

TEST(Walks, DeterministicGivenSeed) {
  const auto g = two_cliques(5);
  std::mt19937_64 a(3), b(3);
  EXPECT_EQ(generate_walks(g, 4, 12, a).walks, generate_walks(g, 4, 12, b).walks);
}

TEST(SkipGram, PairCountFormula) {
  const std::vector<std::vector<std::int32_t>> corpus{{0}, {0, 1}, {0, 1, 2, 3, 4, 5, 6}};
  std::size_t brute = 0;
  for (const auto& s : corpus)
    for (std::size_t i = 0; i < s.size(); ++i)
      for (std::size_t j = 0; j < s.size(); ++j)
        brute += i != j && (i > j ? i - j : j - i) <= 2;
  EXPECT_EQ(skipgram_pair_count(corpus, 2), brute);
  EXPECT_EQ(skipgram_pair_count({{7}}, 5), 0u);
}

TEST(SkipGram, LossDecreasesOverEpochs) {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> topic(0, 3), word(0, 9), len(5, 12);
  std::vector<std::vector<std::int32_t>> corpus;
  for (int s = 0; s < 1000; ++s) {
    const int t = topic(rng);
    std::vector<std::int32_t> sent(std::size_t(len(rng)));
    for (auto& w : sent) w = t * 10 + word(rng);
    corpus.push_back(sent);
  }
  SkipGramConfig cfg{16, 3, 5, 5, 0.025, 7};
  const auto res = train_skipgram(corpus, 40, cfg);
  ASSERT_EQ(res.epoch_loss.size(), 5u);
  EXPECT_LT(res.epoch_loss.back(), res.epoch_loss.front());
  EXPECT_EQ(res.pairs_per_epoch, skipgram_pair_count(corpus, 3));
  EXPECT_EQ(res.vectors.size(), 40u * 16u);
}

TEST(SkipGram, ExclusiveCoOccurrenceGivesHighestCosine) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> other(2, 11), len(4, 8);
  std::vector<std::vector<std::int32_t>> corpus;
  for (int s = 0; s < 1000; ++s) {
    if (s % 4 == 0) {
      corpus.push_back({0, 1, 0, 1});
      continue;
    }
    std::vector<std::int32_t> sent(std::size_t(len(rng)));
    for (auto& w : sent) w = other(rng);
    corpus.push_back(sent);
  }
  const auto res = train_skipgram(corpus, 12, SkipGramConfig{20, 2, 5, 5, 0.025, 1});
  EmbeddingTable t(std::vector<std::string>{"0", "1", "2", "3", "4", "5", "6", "7", "8", "9", "10", "11"}, 20, res.vectors);
  const double pair = cos_rows(t, 0, 1);
  for (std::size_t x = 2; x < 12; ++x) {
    EXPECT_GT(pair, cos_rows(t, 0, x));
    EXPECT_GT(pair, cos_rows(t, 1, x));
  }
}

TEST(SkipGram, RejectsBadInput) {
  EXPECT_THROW(train_skipgram({}, 3, SkipGramConfig{}), std::invalid_argument);
  EXPECT_THROW(train_skipgram({{0, 5}}, 3, SkipGramConfig{}), std::out_of_range);
  SkipGramConfig cfg;
  cfg.window = 0;
  EXPECT_THROW(train_skipgram({{0, 1}}, 3, cfg), std::invalid_argument);
}

TEST(DeepWalk, TwoCliquesSeparate) {
  const auto g = two_cliques(10);
  DeepWalkConfig cfg;
  cfg.dim = 32;
  const auto t = deepwalk(g, cfg);
  EXPECT_EQ(t.dim(), 32u);
  double intra = 0, inter = 0;
  std::size_t ni = 0, nx = 0;
  for (std::size_t i = 0; i < 20; ++i)
    for (std::size_t j = i + 1; j < 20; ++j) {
      if ((i < 10) == (j < 10))
        intra += cos_rows(t, i, j), ++ni;
      else
        inter += cos_rows(t, i, j), ++nx;
    }
  EXPECT_GT(intra / double(ni), inter / double(nx));
}

TEST(DeepWalk, DefaultDimensionAndCoverage) {
  Dataset ds;
  ds.records.push_back(answered_by("q1", {"a", "b", "c"}));
  ds.records.push_back(answered_by("q2", {"c", "d"}));
  ds.records.push_back(answered_by("q3", {"e"}));
  DeepWalkConfig cfg;
  cfg.walks_per_vertex = 2;
  cfg.epochs = 1;
  const auto t = deepwalk(ds, cfg);
  EXPECT_EQ(t.dim(), 200u);
  EXPECT_EQ(t.tokens(), ds.users());
}

TEST(VectorFile, HeaderAndHeaderless) {
  std::istringstream with("2 3\nfoo 1 2 3\nbar 0.5 -1 2e-3\n");
  const auto a = load_vectors(with);
  EXPECT_EQ(a.size(), 2u);
  EXPECT_EQ(a.dim(), 3u);
  EXPECT_DOUBLE_EQ(a["bar"][2], 2e-3);
  std::istringstream without("foo 1 2 3\nbar 4 5 6\n");
  const auto b = load_vectors(without);
  EXPECT_EQ(b.size(), 2u);
  EXPECT_DOUBLE_EQ(b["foo"][1], 2.0);
}

TEST(VectorFile, RaggedRowNamesLine) {
  std::istringstream in("2 3\nfoo 1 2 3\nbar 1 2\n");
  try {
    load_vectors(in, "vecs");
    FAIL() << "expected VectorFileError";
  } catch (const VectorFileError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  std::istringstream dup("a 1\na 2\n");
  EXPECT_THROW(load_vectors(dup), VectorFileError);
  std::istringstream count("3 1\na 1\n");
  EXPECT_THROW(load_vectors(count), VectorFileError);
  std::istringstream bad("a 1 x\n");
  EXPECT_THROW(load_vectors(bad), VectorFileError);
}

TEST(VectorFile, EmptyTableAndRoundTrip) {
  std::istringstream empty("0 7\n");
  const auto e = load_vectors(empty);
  EXPECT_EQ(e.size(), 0u);
  EXPECT_EQ(e.dim(), 7u);

  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> d(-1, 1);
  std::vector<double> vals(5 * 4);
  for (auto& v : vals) v = d(rng);
  EmbeddingTable t({"a", "b", "c", "d", "e"}, 4, vals);
  std::ostringstream os;
  save_vectors(t, os);
  EXPECT_EQ(os.str().substr(0, 4), "5 4\n");
  std::istringstream is(os.str());
  const auto back = load_vectors(is);
  EXPECT_EQ(back.tokens(), t.tokens());
  EXPECT_EQ(back.values(), t.values());
}
