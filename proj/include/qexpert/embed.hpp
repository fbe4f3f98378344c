#pragma once

// User co-answer graph, truncated random walks, skip-gram with negative
// sampling, and the word-vector text format.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include "qexpert/corpus/dataset.hpp"
#include "qexpert/corpus/text.hpp"
#include "qexpert/util.hpp"

namespace qexpert {

/// Dense id -> vector table keyed by token (word or user id).
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  explicit EmbeddingTable(std::size_t dim) : dim_(dim) {}
  EmbeddingTable(std::vector<std::string> tokens, std::size_t dim, std::vector<double> values)
      : tokens_(std::move(tokens)), dim_(dim), values_(std::move(values)) {
    if (values_.size() != tokens_.size() * dim_)
      throw std::invalid_argument("embedding table: " + std::to_string(values_.size()) + " values for " +
                                  std::to_string(tokens_.size()) + " tokens of dim " + std::to_string(dim_));
    for (std::size_t i = 0; i < tokens_.size(); ++i)
      if (!index_.emplace(tokens_[i], i).second) throw std::invalid_argument("duplicate token '" + tokens_[i] + "'");
  }

  std::size_t size() const noexcept { return tokens_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  bool trainable = false;

  const std::vector<std::string>& tokens() const noexcept { return tokens_; }
  bool contains(const std::string& token) const { return index_.count(token) > 0; }
  std::size_t index_of(const std::string& token) const {
    auto it = index_.find(token);
    if (it == index_.end()) throw std::out_of_range("token '" + token + "' not in embedding table");
    return it->second;
  }
  std::span<const double> row(std::size_t i) const { return std::span<const double>(values_).subspan(i * dim_, dim_); }
  std::span<double> row(std::size_t i) { return std::span<double>(values_).subspan(i * dim_, dim_); }
  std::span<const double> operator[](const std::string& token) const { return row(index_of(token)); }
  const std::vector<double>& values() const noexcept { return values_; }

  void add(const std::string& token, std::span<const double> vec) {
    if (vec.size() != dim_)
      throw std::invalid_argument("vector for '" + token + "' has dim " + std::to_string(vec.size()) + ", table dim " +
                                  std::to_string(dim_));
    if (!index_.emplace(token, tokens_.size()).second) throw std::invalid_argument("duplicate token '" + token + "'");
    tokens_.push_back(token);
    values_.insert(values_.end(), vec.begin(), vec.end());
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t dim_ = 0;
  std::vector<double> values_;
};

class VectorFileError : public std::runtime_error {
 public:
  VectorFileError(const std::string& source, std::size_t line, const std::string& what)
      : std::runtime_error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Reads `[<count> <dim>]` then `token v1 ... vd` lines. The header is optional.
inline EmbeddingTable load_vectors(std::istream& in, const std::string& source = "<stream>") {
  std::string line;
  std::size_t lineno = 0;
  std::optional<std::size_t> declared_count;
  std::size_t dim = 0;
  EmbeddingTable table;
  bool first = true;
  std::vector<double> vec;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::vector<std::string> fields;
    for (std::string f; ls >> f;) fields.push_back(std::move(f));
    if (fields.empty()) continue;
    if (first) {
      first = false;
      std::size_t count = 0, d = 0;
      if (fields.size() == 2 && parse_number(fields[0], count) && parse_number(fields[1], d)) {
        if (d == 0) throw VectorFileError(source, lineno, "header declares dimension 0");
        declared_count = count;
        dim = d;
        table = EmbeddingTable(dim);
        continue;
      }
    }
    if (fields.size() < 2) throw VectorFileError(source, lineno, "entry has no values");
    const std::size_t d = fields.size() - 1;
    if (dim == 0) {
      dim = d;
      table = EmbeddingTable(dim);
    }
    if (d != dim)
      throw VectorFileError(source, lineno,
                            "entry '" + fields[0] + "' has " + std::to_string(d) + " values, expected " + std::to_string(dim));
    vec.assign(d, 0.0);
    for (std::size_t i = 0; i < d; ++i)
      if (!parse_number(fields[i + 1], vec[i]) || !std::isfinite(vec[i]))
        throw VectorFileError(source, lineno, "bad value '" + fields[i + 1] + "'");
    if (table.contains(fields[0])) throw VectorFileError(source, lineno, "duplicate token '" + fields[0] + "'");
    table.add(fields[0], vec);
  }
  if (declared_count && *declared_count != table.size())
    throw VectorFileError(source, lineno,
                          "header declares " + std::to_string(*declared_count) + " entries, found " + std::to_string(table.size()));
  return table;
}

inline EmbeddingTable load_vectors(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open vector file " + path);
  return load_vectors(in, path);
}

/// Headered text format with shortest round-trip decimal values.
inline void save_vectors(const EmbeddingTable& table, std::ostream& out) {
  out << table.size() << ' ' << table.dim() << '\n';
  for (std::size_t i = 0; i < table.size(); ++i) {
    out << table.tokens()[i];
    for (double v : table.row(i)) out << ' ' << format_real(v);
    out << '\n';
  }
}

inline void save_vectors(const EmbeddingTable& table, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write vector file " + path);
  save_vectors(table, out);
  out.flush();
  if (!out) throw std::runtime_error("write failed for " + path);
}

// ---------------------------------------------------------------------------
// Graph and walks

struct UserGraph {
  std::vector<std::string> vertices;  // sorted user ids
  // adjacency[v] = (neighbor, weight) sorted by neighbor; symmetric, no self-loops
  std::vector<std::vector<std::pair<std::size_t, std::uint32_t>>> adjacency;

  std::size_t size() const noexcept { return vertices.size(); }
  std::uint32_t weight(std::size_t u, std::size_t v) const {
    for (const auto& [n, w] : adjacency.at(u))
      if (n == v) return w;
    return 0;
  }
  std::size_t index_of(const std::string& user) const {
    auto it = std::lower_bound(vertices.begin(), vertices.end(), user);
    if (it == vertices.end() || *it != user) throw std::out_of_range("user " + user + " not in graph");
    return std::size_t(it - vertices.begin());
  }

  /// Builds from an explicit weighted edge list over vertex names.
  static UserGraph from_edges(std::vector<std::string> vertices,
                              const std::vector<std::tuple<std::string, std::string, std::uint32_t>>& edges) {
    std::sort(vertices.begin(), vertices.end());
    vertices.erase(std::unique(vertices.begin(), vertices.end()), vertices.end());
    UserGraph g;
    g.vertices = std::move(vertices);
    std::map<std::pair<std::size_t, std::size_t>, std::uint32_t> w;
    for (const auto& [a, b, weight] : edges) {
      const auto i = g.index_of(a), j = g.index_of(b);
      if (i == j) throw std::invalid_argument("self-loop on " + a);
      if (weight < 1) throw std::invalid_argument("edge weight must be >= 1");
      w[{std::min(i, j), std::max(i, j)}] += weight;
    }
    g.adjacency.assign(g.vertices.size(), {});
    for (const auto& [e, weight] : w) {
      g.adjacency[e.first].emplace_back(e.second, weight);
      g.adjacency[e.second].emplace_back(e.first, weight);
    }
    for (auto& adj : g.adjacency) std::sort(adj.begin(), adj.end());
    return g;
  }
};

/// Co-answer graph: edge weight = number of questions both users answered.
inline UserGraph build_user_graph(const Dataset& ds) {
  if (ds.records.empty()) throw std::invalid_argument("cannot build a user graph from an empty dataset");
  std::vector<std::tuple<std::string, std::string, std::uint32_t>> edges;
  for (const auto& r : ds.records)
    for (std::size_t i = 0; i < r.answers.size(); ++i)
      for (std::size_t j = i + 1; j < r.answers.size(); ++j)
        edges.emplace_back(r.answers[i].user_id, r.answers[j].user_id, 1u);
  return UserGraph::from_edges(ds.users(), edges);
}

struct WalkCorpus {
  std::vector<std::vector<std::int32_t>> walks;
  std::size_t walk_length = 40;
  std::size_t walks_per_vertex = 10;
};

/// r passes over a shuffled vertex order; each step picks a neighbour with
/// probability proportional to edge weight. Degree-0 vertices give [v].
template <typename Rng>
WalkCorpus generate_walks(const UserGraph& g, std::size_t walks_per_vertex, std::size_t walk_length, Rng& rng) {
  if (walks_per_vertex < 1) throw std::invalid_argument("walks_per_vertex must be >= 1");
  if (walk_length < 2) throw std::invalid_argument("walk_length must be >= 2");
  std::vector<std::vector<std::uint64_t>> cumulative(g.size());
  for (std::size_t v = 0; v < g.size(); ++v) {
    std::uint64_t acc = 0;
    for (const auto& [n, w] : g.adjacency[v]) cumulative[v].push_back(acc += w);
  }
  WalkCorpus corpus;
  corpus.walk_length = walk_length;
  corpus.walks_per_vertex = walks_per_vertex;
  std::vector<std::size_t> order(g.size());
  for (std::size_t pass = 0; pass < walks_per_vertex; ++pass) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (auto start : order) {
      std::vector<std::int32_t> walk{std::int32_t(start)};
      std::size_t cur = start;
      while (walk.size() < walk_length && !cumulative[cur].empty()) {
        std::uniform_int_distribution<std::uint64_t> pick(0, cumulative[cur].back() - 1);
        const auto r = pick(rng);
        const auto idx = std::size_t(std::upper_bound(cumulative[cur].begin(), cumulative[cur].end(), r) - cumulative[cur].begin());
        cur = g.adjacency[cur][idx].first;
        walk.push_back(std::int32_t(cur));
      }
      corpus.walks.push_back(std::move(walk));
    }
  }
  return corpus;
}

// ---------------------------------------------------------------------------
// Skip-gram with negative sampling

struct SkipGramConfig {
  std::size_t dim = 100;
  std::size_t window = 5;
  std::size_t negatives = 5;
  std::size_t epochs = 5;
  double learning_rate = 0.025;
  std::uint64_t seed = 0;
};

struct SkipGramResult {
  std::vector<double> vectors;  // vocab_size x dim input-side vectors
  std::vector<double> epoch_loss;  // mean per-pair logistic loss
  std::size_t pairs_per_epoch = 0;
};

/// Number of (center, context) pairs one pass over `corpus` produces.
inline std::size_t skipgram_pair_count(const std::vector<std::vector<std::int32_t>>& corpus, std::size_t window) {
  std::size_t n = 0;
  for (const auto& s : corpus)
    for (std::size_t i = 0; i < s.size(); ++i) n += std::min(i, window) + std::min(s.size() - 1 - i, window);
  return n;
}

inline SkipGramResult train_skipgram(const std::vector<std::vector<std::int32_t>>& corpus, std::size_t vocab_size,
                                     const SkipGramConfig& cfg) {
  if (corpus.empty()) throw std::invalid_argument("skip-gram corpus is empty");
  if (cfg.window < 1) throw std::invalid_argument("skip-gram window must be >= 1");
  if (cfg.negatives < 1) throw std::invalid_argument("skip-gram negatives must be >= 1");
  if (cfg.dim < 1) throw std::invalid_argument("skip-gram dim must be >= 1");
  std::vector<double> counts(vocab_size, 0.0);
  for (const auto& s : corpus)
    for (auto id : s) {
      if (id < 0 || std::size_t(id) >= vocab_size)
        throw std::out_of_range("skip-gram id " + std::to_string(id) + " outside table of size " + std::to_string(vocab_size));
      counts[std::size_t(id)] += 1.0;
    }
  for (auto& c : counts) c = std::pow(c, 0.75);

  const std::size_t d = cfg.dim;
  std::mt19937_64 rng(cfg.seed);
  SkipGramResult res;
  res.vectors.resize(vocab_size * d);
  std::uniform_real_distribution<double> init(-0.5 / double(d), 0.5 / double(d));
  for (auto& v : res.vectors) v = init(rng);
  std::vector<double> context(vocab_size * d, 0.0);
  std::discrete_distribution<std::int32_t> noise(counts.begin(), counts.end());

  res.pairs_per_epoch = skipgram_pair_count(corpus, cfg.window);
  const double total = double(res.pairs_per_epoch * cfg.epochs);
  double processed = 0;
  std::vector<double> grad_in(d);
  auto sigmoid = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };

  // One logistic update of (center, target) with label; returns the loss term.
  auto update = [&](double* in, std::int32_t target, double label, double lr) {
    double* out = context.data() + std::size_t(target) * d;
    double z = 0;
    for (std::size_t i = 0; i < d; ++i) z += in[i] * out[i];
    const double p = sigmoid(z);
    const double g = lr * (label - p);
    for (std::size_t i = 0; i < d; ++i) {
      grad_in[i] += g * out[i];
      out[i] += g * in[i];
    }
    const double q = label > 0.5 ? p : 1.0 - p;
    return -std::log(std::max(q, 1e-300));
  };

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double loss = 0;
    std::size_t pairs = 0;
    for (const auto& s : corpus) {
      for (std::size_t i = 0; i < s.size(); ++i) {
        const std::size_t lo = i >= cfg.window ? i - cfg.window : 0;
        const std::size_t hi = std::min(s.size() - 1, i + cfg.window);
        double* in = res.vectors.data() + std::size_t(s[i]) * d;
        for (std::size_t j = lo; j <= hi; ++j) {
          if (j == i) continue;
          const double lr = cfg.learning_rate * std::max(1e-4, 1.0 - processed / total);
          std::fill(grad_in.begin(), grad_in.end(), 0.0);
          loss += update(in, s[j], 1.0, lr);
          for (std::size_t k = 0; k < cfg.negatives; ++k) {
            const auto neg = noise(rng);
            if (neg == s[j]) continue;
            loss += update(in, neg, 0.0, lr);
          }
          for (std::size_t t = 0; t < d; ++t) in[t] += grad_in[t];
          ++pairs;
          processed += 1;
        }
      }
    }
    res.epoch_loss.push_back(pairs ? loss / double(pairs) : 0.0);
  }
  return res;
}

struct DeepWalkConfig {
  std::size_t dim = 200;
  std::size_t walks_per_vertex = 10;
  std::size_t walk_length = 40;
  std::size_t window = 5;
  std::size_t negatives = 5;
  std::size_t epochs = 5;
  double learning_rate = 0.025;
  std::uint64_t seed = 0;
};

/// Walks over `g` fed to skip-gram; returns a table keyed by vertex name.
inline EmbeddingTable deepwalk(const UserGraph& g, const DeepWalkConfig& cfg) {
  std::mt19937_64 rng(cfg.seed);
  const auto walks = generate_walks(g, cfg.walks_per_vertex, cfg.walk_length, rng);
  SkipGramConfig sg{cfg.dim, cfg.window, cfg.negatives, cfg.epochs, cfg.learning_rate, rng()};
  auto res = train_skipgram(walks.walks, g.size(), sg);
  EmbeddingTable table(g.vertices, cfg.dim, std::move(res.vectors));
  return table;
}

inline EmbeddingTable deepwalk(const Dataset& ds, const DeepWalkConfig& cfg) { return deepwalk(build_user_graph(ds), cfg); }

/// Skip-gram over tokenized question (and answer) texts; rows follow vocab ids.
inline EmbeddingTable train_word_vectors(const Dataset& ds, const Vocab& vocab, TokenizerMode mode,
                                         const SkipGramConfig& cfg) {
  std::vector<std::vector<std::int32_t>> sentences;
  auto add = [&](const std::string& text) {
    std::vector<std::int32_t> ids;
    for (const auto& t : tokenize(text, mode)) {
      const auto id = vocab.id(t);
      if (id != Vocab::kUnk) ids.push_back(id);
    }
    if (!ids.empty()) sentences.push_back(std::move(ids));
  };
  for (const auto& r : ds.records) {
    add(r.text);
    for (const auto& a : r.answers)
      if (a.text) add(*a.text);
  }
  if (sentences.empty()) throw std::invalid_argument("no in-vocabulary text to train word vectors on");
  auto res = train_skipgram(sentences, vocab.size(), cfg);
  return EmbeddingTable(vocab.tokens(), cfg.dim, std::move(res.vectors));
}

}  // namespace qexpert
