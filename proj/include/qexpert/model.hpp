#pragma once

// Convolutional text tower shared by Q-USER-CNN (question tower + user lookup)
// and Q-A-CNN (one siamese tower for questions and answers).
//
//   ids -> word rows (L x k) -> per region size m: conv -> relu -> 1-max pool
//       -> concat (ascending m, then filter index) -> dropout -> linear -> d

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "qexpert/corpus/text.hpp"
#include "qexpert/embed.hpp"
#include "qexpert/tensor.hpp"

namespace qexpert {

enum class ModelKind { quser, qa };

inline std::string to_string(ModelKind k) { return k == ModelKind::quser ? "quser" : "qa"; }

inline ModelKind parse_model_kind(std::string_view s) {
  if (s == "quser" || s == "q-user-cnn") return ModelKind::quser;
  if (s == "qa" || s == "q-a-cnn") return ModelKind::qa;
  throw std::invalid_argument("unknown model '" + std::string(s) + "' (expected quser or qa)");
}

struct ModelConfig {
  ModelKind kind = ModelKind::quser;
  ConvSpec conv;
  std::size_t output_dim = 200;
  double dropout_rate = 0.5;
  bool fine_tune_users = false;
  bool fine_tune_words = true;
};

class UnknownUserError : public std::out_of_range {
 public:
  explicit UnknownUserError(const std::string& user) : std::out_of_range("unknown user " + user), user_(user) {}
  const std::string& user() const noexcept { return user_; }

 private:
  std::string user_;
};

template <typename T>
struct ConvLayer {
  std::size_t region_size = 0;
  Tensor<T> filters;  // F x m x k
  Tensor<T> bias;     // F
};

template <typename T>
struct ModelParams {
  ModelConfig config;
  Tensor<T> word_table;  // V x k, row 0 is PAD
  Tensor<T> user_table;  // U x d (Q-USER-CNN only)
  std::vector<std::string> user_ids;
  std::unordered_map<std::string, std::size_t> user_index;
  std::vector<ConvLayer<T>> convs;
  Tensor<T> proj_weight;  // total_filters x d
  Tensor<T> proj_bias;    // d

  std::size_t vocab_size() const { return word_table.dim(0); }
  std::size_t embed_dim() const { return word_table.dim(1); }
  std::size_t output_dim() const { return proj_bias.size(); }
  bool has_users() const { return !user_table.empty(); }

  void set_users(std::vector<std::string> ids) {
    user_ids = std::move(ids);
    user_index.clear();
    for (std::size_t i = 0; i < user_ids.size(); ++i)
      if (!user_index.emplace(user_ids[i], i).second) throw std::invalid_argument("duplicate user id " + user_ids[i]);
  }

  std::optional<std::size_t> find_user(const std::string& id) const {
    auto it = user_index.find(id);
    if (it == user_index.end()) return std::nullopt;
    return it->second;
  }

  /// Every parameter tensor in checkpoint order.
  std::vector<Tensor<T>*> all_tensors() {
    std::vector<Tensor<T>*> out{&word_table};
    if (has_users()) out.push_back(&user_table);
    for (auto& c : convs) {
      out.push_back(&c.filters);
      out.push_back(&c.bias);
    }
    out.push_back(&proj_weight);
    out.push_back(&proj_bias);
    return out;
  }

  std::vector<std::string> tensor_names() const {
    std::vector<std::string> out{"word_table"};
    if (has_users()) out.push_back("user_table");
    for (const auto& c : convs) {
      out.push_back("conv" + std::to_string(c.region_size) + ".filters");
      out.push_back("conv" + std::to_string(c.region_size) + ".bias");
    }
    out.push_back("proj.weight");
    out.push_back("proj.bias");
    return out;
  }

  /// Tensors the optimizer updates; the caller owns the gradient buffers via enable_grad().
  std::vector<Tensor<T>*> trainable() {
    std::vector<Tensor<T>*> out;
    if (config.fine_tune_words) out.push_back(&word_table);
    if (has_users() && config.fine_tune_users) out.push_back(&user_table);
    for (auto& c : convs) {
      out.push_back(&c.filters);
      out.push_back(&c.bias);
    }
    out.push_back(&proj_weight);
    out.push_back(&proj_bias);
    return out;
  }

  void enable_grads() {
    for (auto* t : trainable()) t->enable_grad();
  }
  void zero_grads() {
    for (auto* t : trainable()) t->zero_grad();
  }
};

/// Allocates and initialises parameters. Word rows come from `words` where the
/// token is present (uniform in +-0.5/k otherwise); PAD is zero. For Q-USER-CNN
/// the user table is copied from `users`, whose dimension fixes the output size.
template <typename T>
ModelParams<T> init_model(const ModelConfig& cfg, const Vocab& vocab, const EmbeddingTable* words,
                          const EmbeddingTable* users, std::uint64_t seed) {
  cfg.conv.validate();
  ModelParams<T> p;
  p.config = cfg;
  const std::size_t k = cfg.conv.embed_dim;
  std::mt19937_64 rng(seed);

  if (words && words->dim() != k)
    throw ShapeError("word vectors have dim " + std::to_string(words->dim()) + ", model expects " + std::to_string(k));
  p.word_table = Tensor<T>({vocab.size(), k});
  std::uniform_real_distribution<double> word_init(-0.5 / double(k), 0.5 / double(k));
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    auto row = p.word_table.row(i);
    if (i == std::size_t(Vocab::kPad)) continue;
    if (words && words->contains(vocab.token(std::int32_t(i)))) {
      auto src = (*words)[vocab.token(std::int32_t(i))];
      for (std::size_t j = 0; j < k; ++j) row[j] = T(src[j]);
    } else {
      for (auto& v : row) v = T(word_init(rng));
    }
  }

  if (cfg.kind == ModelKind::quser) {
    if (!users) throw std::invalid_argument("Q-USER-CNN needs a user embedding table");
    if (users->size() == 0) throw std::invalid_argument("user embedding table is empty");
    if (users->dim() != cfg.output_dim)
      throw ShapeError("user vectors have dim " + std::to_string(users->dim()) + ", model output dim is " +
                       std::to_string(cfg.output_dim));
    p.user_table = Tensor<T>({users->size(), users->dim()});
    for (std::size_t i = 0; i < users->size(); ++i) {
      auto src = users->row(i);
      auto dst = p.user_table.row(i);
      for (std::size_t j = 0; j < src.size(); ++j) dst[j] = T(src[j]);
    }
    p.set_users(users->tokens());
  }

  const std::size_t fpm = cfg.conv.filters_per_size;
  auto sizes = cfg.conv.region_sizes;
  std::sort(sizes.begin(), sizes.end());
  for (auto m : sizes) {
    ConvLayer<T> layer;
    layer.region_size = m;
    layer.filters = Tensor<T>({fpm, m, k});
    layer.bias = Tensor<T>({fpm});
    nn::glorot_uniform(layer.filters, m * k, fpm, rng);
    p.convs.push_back(std::move(layer));
  }
  const std::size_t merged = fpm * sizes.size();
  p.proj_weight = Tensor<T>({merged, cfg.output_dim});
  p.proj_bias = Tensor<T>({cfg.output_dim});
  nn::glorot_uniform(p.proj_weight, merged, cfg.output_dim, rng);
  return p;
}

/// Intermediate values of one tower pass, kept for backward.
template <typename T>
struct TowerCache {
  std::vector<std::int32_t> ids;
  Tensor<T> embedded;                  // L x k
  std::vector<Tensor<T>> conv_maps;    // pre-activation, per region size
  std::vector<std::vector<std::size_t>> argmax;
  std::vector<T> pooled;               // merged 1-max values
  nn::DropoutMask<T> mask;
  std::vector<T> dropped;
  std::vector<T> output;
};

template <typename T, typename Rng>
TowerCache<T> tower_forward(const ModelParams<T>& p, std::span<const std::int32_t> ids, nn::Mode mode, Rng& rng) {
  const std::size_t k = p.embed_dim();
  TowerCache<T> c;
  c.ids.assign(ids.begin(), ids.end());
  if (ids.empty()) throw std::invalid_argument("tower_forward: empty id sequence");
  c.embedded = Tensor<T>({ids.size(), k});
  for (std::size_t t = 0; t < ids.size(); ++t) {
    if (ids[t] < 0 || std::size_t(ids[t]) >= p.vocab_size())
      throw std::out_of_range("token id " + std::to_string(ids[t]) + " outside word table of size " +
                              std::to_string(p.vocab_size()));
    auto src = p.word_table.row(std::size_t(ids[t]));
    std::copy(src.begin(), src.end(), c.embedded.row(t).begin());
  }
  const std::size_t fpm = p.convs.empty() ? 0 : p.convs.front().bias.size();
  c.pooled.assign(fpm * p.convs.size(), T(0));
  c.argmax.assign(p.convs.size(), std::vector<std::size_t>(fpm, 0));
  for (std::size_t li = 0; li < p.convs.size(); ++li) {
    const auto& layer = p.convs[li];
    c.conv_maps.push_back(nn::conv_text(c.embedded, layer.filters, layer.bias));
    const auto act = nn::relu(c.conv_maps.back());
    nn::max_pool_columns(act, std::span<T>(c.pooled).subspan(li * fpm, fpm), std::span<std::size_t>(c.argmax[li]));
  }
  c.dropped = nn::dropout_apply<T>(c.pooled, p.config.dropout_rate, mode, rng, &c.mask);
  c.output = nn::linear<T>(c.dropped, p.proj_weight, p.proj_bias);
  return c;
}

/// Accumulates parameter gradients for one tower pass given dL/d(output).
template <typename T>
void tower_backward(ModelParams<T>& p, const TowerCache<T>& c, std::span<const T> grad_out) {
  const std::size_t k = p.embed_dim();
  const auto g_dropped = nn::linear_backward<T>(c.dropped, p.proj_weight, grad_out, p.proj_weight.grad(), p.proj_bias.grad());
  const auto g_pooled = nn::dropout_backward<T>(c.mask, g_dropped);
  const std::size_t fpm = p.convs.front().bias.size();
  const bool words = p.config.fine_tune_words && p.word_table.has_grad();
  std::vector<T> g_embedded(words ? c.embedded.size() : 0, T(0));
  for (std::size_t li = 0; li < p.convs.size(); ++li) {
    auto& layer = p.convs[li];
    const auto& maps = c.conv_maps[li];
    std::vector<T> g_act(maps.size(), T(0));
    bool any = false;
    for (std::size_t f = 0; f < fpm; ++f) {
      const T g = g_pooled[li * fpm + f];
      if (g == T(0)) continue;
      g_act[c.argmax[li][f] * fpm + f] = g;
      any = true;
    }
    if (!any) continue;
    const auto g_maps = nn::relu_backward<T>(maps.data(), g_act);
    nn::conv_text_backward<T>(c.embedded, layer.filters, g_maps, g_embedded, layer.filters.grad(), layer.bias.grad());
  }
  if (words) {
    auto gw = p.word_table.grad();
    for (std::size_t t = 0; t < c.ids.size(); ++t) {
      T* dst = gw.data() + std::size_t(c.ids[t]) * k;
      const T* src = g_embedded.data() + t * k;
      for (std::size_t j = 0; j < k; ++j) dst[j] += src[j];
    }
  }
}

/// h(q): the d-dimensional question encoding.
template <typename T, typename Rng>
std::vector<T> question_forward(const ModelParams<T>& p, std::span<const std::int32_t> ids, nn::Mode mode, Rng& rng) {
  return tower_forward(p, ids, mode, rng).output;
}

template <typename T>
std::vector<T> question_forward(const ModelParams<T>& p, std::span<const std::int32_t> ids) {
  std::mt19937_64 unused(0);
  return tower_forward(p, ids, nn::Mode::eval, unused).output;
}

/// Q-A-CNN answer tower: the same parameters as the question tower.
template <typename T, typename Rng>
std::vector<T> answer_forward(const ModelParams<T>& p, std::span<const std::int32_t> ids, nn::Mode mode, Rng& rng) {
  return tower_forward(p, ids, mode, rng).output;
}

template <typename T>
std::span<const T> user_vector(const ModelParams<T>& p, const std::string& user_id) {
  const auto idx = p.find_user(user_id);
  if (!idx) throw UnknownUserError(user_id);
  return p.user_table.row(*idx);
}

/// cos(h(q), v_u) with the tower in eval mode.
template <typename T>
T score(const ModelParams<T>& p, std::span<const std::int32_t> q_ids, const std::string& user_id) {
  const auto h = question_forward(p, q_ids);
  return nn::cosine<T>(h, user_vector(p, user_id));
}

}  // namespace qexpert
