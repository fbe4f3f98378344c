#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "qexpert/model.hpp"
#include "qexpert/optim.hpp"
#include "toy.hpp"

using namespace qexpert;

namespace {

// Plain-loop forward pass written without the nn helpers.
std::vector<double> oracle_forward(const ModelParams<double>& p, const std::vector<std::int32_t>& ids) {
  const std::size_t L = ids.size(), k = p.embed_dim();
  std::vector<double> merged;
  for (const auto& layer : p.convs) {
    const std::size_t m = layer.region_size, F = layer.bias.size();
    for (std::size_t f = 0; f < F; ++f) {
      double best = -1e300;
      for (std::size_t t = 0; t + m <= L; ++t) {
        double s = layer.bias[f];
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < k; ++j)
            s += p.word_table[std::size_t(ids[t + i]) * k + j] * layer.filters[(f * m + i) * k + j];
        s = s > 0 ? s : 0;
        best = s > best ? s : best;
      }
      merged.push_back(best);
    }
  }
  const std::size_t d = p.proj_bias.size();
  std::vector<double> out(d);
  for (std::size_t o = 0; o < d; ++o) {
    double s = p.proj_bias[o];
    for (std::size_t i = 0; i < merged.size(); ++i) s += merged[i] * p.proj_weight[i * d + o];
    out[o] = s;
  }
  return out;
}

}  // namespace

TEST(Model, PaperShapes) {
  ModelConfig cfg;
  cfg.conv.region_sizes = {2, 3, 4};
  cfg.conv.filters_per_size = 500;
  cfg.conv.embed_dim = 100;
  const auto vocab = toy::vocab(20);
  const auto users = toy::users(3, 200, 1);
  auto p = init_model<float>(cfg, vocab, nullptr, &users, 0);
  EXPECT_EQ(p.proj_weight.shape(), (Shape{1500, 200}));
  std::mt19937_64 rng(0);
  const auto ids = toy::random_ids(50, vocab.size(), rng);
  const auto c = tower_forward(p, ids, nn::Mode::eval, rng);
  EXPECT_EQ(c.pooled.size(), 1500u);
  EXPECT_EQ(c.output.size(), 200u);
  EXPECT_EQ(c.conv_maps[0].dim(0), 49u);
  for (auto v : c.output) EXPECT_TRUE(std::isfinite(v));
}

TEST(Model, AllPadGivesProjectionBias) {
  const auto vocab = toy::vocab(10);
  const auto users = toy::users(3, 8, 1);
  auto p = init_model<double>(toy::config(), vocab, nullptr, &users, 3);
  for (auto& b : p.proj_bias.data()) b = 0.25;
  const std::vector<std::int32_t> pad(6, Vocab::kPad);
  const auto out = question_forward(p, pad);
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out[i], p.proj_bias[i]);
}

TEST(Model, MatchesStraightLineOracle) {
  const auto vocab = toy::vocab(12);
  const auto users = toy::users(4, 8, 2);
  auto cfg = toy::config();
  cfg.conv.region_sizes = {2};
  auto p = init_model<double>(cfg, vocab, nullptr, &users, 5);
  toy::perturb(p, 11);
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const auto ids = toy::random_ids(6, vocab.size(), rng);
    const auto got = question_forward(p, ids);
    const auto want = oracle_forward(p, ids);
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
  }
  auto qa = init_model<double>(toy::config(ModelKind::qa), vocab, nullptr, nullptr, 5);
  toy::perturb(qa, 12);
  const auto ids = toy::random_ids(6, vocab.size(), rng);
  const auto got = answer_forward(qa, ids, nn::Mode::eval, rng);
  const auto want = oracle_forward(qa, ids);
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
}

TEST(Model, ConcatenationOrderIsAscendingRegionSize) {
  const auto vocab = toy::vocab(8);
  auto cfg = toy::config(ModelKind::qa);
  cfg.conv.region_sizes = {3, 2};
  const auto p = init_model<double>(cfg, vocab, nullptr, nullptr, 0);
  ASSERT_EQ(p.convs.size(), 2u);
  EXPECT_EQ(p.convs[0].region_size, 2u);
  EXPECT_EQ(p.convs[1].region_size, 3u);
}

TEST(Model, OutOfRangeIdIsError) {
  const auto vocab = toy::vocab(5);
  const auto users = toy::users(2, 8, 0);
  const auto p = init_model<double>(toy::config(), vocab, nullptr, &users, 0);
  std::vector<std::int32_t> ids(6, 0);
  ids[3] = 99;
  EXPECT_THROW(question_forward(p, ids), std::out_of_range);
}

TEST(Model, UserVectorLookup) {
  const auto vocab = toy::vocab(5);
  const auto users = toy::users(3, 8, 7);
  const auto p = init_model<double>(toy::config(), vocab, nullptr, &users, 0);
  const auto row = user_vector(p, "user1");
  for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(row[j], users["user1"][j]);
  EXPECT_THROW(user_vector(p, "ghost"), UnknownUserError);
  EXPECT_THROW(score(p, std::vector<std::int32_t>(6, 2), "ghost"), UnknownUserError);
}

TEST(Model, UserRowChangesOnlyWhenFineTuned) {
  const auto vocab = toy::vocab(5);
  const auto users = toy::users(3, 8, 7);
  for (bool fine_tune : {false, true}) {
    auto cfg = toy::config();
    cfg.fine_tune_users = fine_tune;
    auto p = init_model<double>(cfg, vocab, nullptr, &users, 0);
    p.user_table.enable_grad();
    p.enable_grads();
    for (auto& g : p.user_table.grad()) g = 0.5;
    const std::vector<double> before(p.user_table.data().begin(), p.user_table.data().end());
    OptimizerState<double> s;
    s.kind = OptimizerKind::sgd;
    s.learning_rate = 0.1;
    optim::step(p.trainable(), s);
    const std::vector<double> after(p.user_table.data().begin(), p.user_table.data().end());
    EXPECT_EQ(before != after, fine_tune);
  }
}

TEST(Model, ScoreInvariances) {
  const auto vocab = toy::vocab(9);
  auto users = toy::users(2, 8, 3);
  auto p = init_model<double>(toy::config(), vocab, nullptr, &users, 1);
  toy::perturb(p, 2);
  std::mt19937_64 rng(8);
  const auto ids = toy::random_ids(6, vocab.size(), rng);
  const auto h = question_forward(p, ids);
  auto row0 = p.user_table.row(0);
  std::copy(h.begin(), h.end(), row0.begin());
  EXPECT_NEAR(score(p, ids, "user0"), 1.0, 1e-12);
  auto row1 = p.user_table.row(1);
  std::vector<double> orth(8, 0.0);
  orth[0] = -h[1];
  orth[1] = h[0];
  std::copy(orth.begin(), orth.end(), row1.begin());
  EXPECT_NEAR(score(p, ids, "user1"), 0.0, 1e-12);

  for (std::size_t j = 0; j < 8; ++j) row1[j] = users["user1"][j];
  const double s = score(p, ids, "user1");
  for (auto& v : row1) v *= 7.3;
  EXPECT_NEAR(score(p, ids, "user1"), s, 1e-12);
}

TEST(Model, SiameseTowersAgree) {
  const auto vocab = toy::vocab(9);
  auto p = init_model<double>(toy::config(ModelKind::qa), vocab, nullptr, nullptr, 1);
  p.config.dropout_rate = 0.5;
  std::mt19937_64 rng(1);
  const auto ids = toy::random_ids(6, vocab.size(), rng);
  EXPECT_EQ(question_forward(p, ids, nn::Mode::eval, rng), answer_forward(p, ids, nn::Mode::eval, rng));
  EXPECT_FALSE(p.has_users());
}

TEST(Model, EvalIsPureAndZeroDropoutTrainMatchesEval) {
  const auto vocab = toy::vocab(9);
  const auto users = toy::users(2, 8, 3);
  auto p = init_model<double>(toy::config(), vocab, nullptr, &users, 1);
  toy::perturb(p, 4);
  std::mt19937_64 rng(1);
  const auto ids = toy::random_ids(6, vocab.size(), rng);
  EXPECT_EQ(question_forward(p, ids), question_forward(p, ids));
  p.config.dropout_rate = 0.0;
  EXPECT_EQ(question_forward(p, ids, nn::Mode::train, rng), question_forward(p, ids));
  p.config.dropout_rate = 0.5;
  std::mt19937_64 a(3), b(3);
  EXPECT_EQ(question_forward(p, ids, nn::Mode::train, a), question_forward(p, ids, nn::Mode::train, b));
}

TEST(Model, PretrainedWordsAndPadRow) {
  const auto vocab = toy::vocab(4);
  EmbeddingTable words(4);
  words.add("w1", std::vector<double>{1, 2, 3, 4});
  const auto users = toy::users(2, 8, 3);
  const auto p = init_model<double>(toy::config(), vocab, &words, &users, 0);
  for (std::size_t j = 0; j < 4; ++j) {
    EXPECT_EQ(p.word_table.at(0, j), 0.0);
    EXPECT_EQ(p.word_table.at(std::size_t(vocab.id("w1")), j), double(j + 1));
    EXPECT_LE(std::abs(p.word_table.at(std::size_t(vocab.id("w2")), j)), 0.5 / 4);
  }
  EmbeddingTable wrong(5);
  EXPECT_THROW(init_model<double>(toy::config(), vocab, &wrong, &users, 0), ShapeError);
  const auto narrow = toy::users(2, 7, 0);
  EXPECT_THROW(init_model<double>(toy::config(), vocab, nullptr, &narrow, 0), ShapeError);
}
