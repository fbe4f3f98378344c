#pragma once

// End-to-end runs: load splits, build vocabulary and embeddings, train with
// early stopping on dev Top-1, evaluate, and the hyperparameter grid.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "qexpert/checkpoint.hpp"
#include "qexpert/corpus/dataset.hpp"
#include "qexpert/corpus/sampling.hpp"
#include "qexpert/corpus/text.hpp"
#include "qexpert/embed.hpp"
#include "qexpert/eval.hpp"
#include "qexpert/model.hpp"
#include "qexpert/train.hpp"

namespace qexpert {

inline std::vector<std::size_t> parse_size_list(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    if (item.empty()) continue;
    std::size_t v = 0;
    if (!parse_number(item, v) || v == 0) throw std::invalid_argument("bad size list '" + s + "'");
    out.push_back(v);
  }
  if (out.empty()) throw std::invalid_argument("empty size list");
  return out;
}

inline std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, sep);)
    if (!item.empty()) out.push_back(item);
  return out;
}

/// Everything a run needs; mirrors the key = value config file.
struct RunConfig {
  std::string train_path, dev_path, test1_path, test2_path;
  std::string format = "tsv";
  std::string tokenizer = "whitespace";
  std::size_t min_count = 1;
  std::size_t seq_len = 50;

  std::string word_vectors = "skipgram";  // skipgram | random | <path>
  std::size_t word_dim = 100;
  std::size_t sg_window = 5;
  std::size_t sg_negatives = 5;
  std::size_t sg_epochs = 5;
  double sg_lr = 0.025;

  std::string user_vectors = "deepwalk";  // deepwalk | <path>
  std::size_t user_dim = 200;
  std::size_t walks_per_vertex = 10;
  std::size_t walk_length = 40;
  std::size_t dw_window = 5;
  std::size_t dw_negatives = 5;
  std::size_t dw_epochs = 5;

  std::string model = "quser";
  std::string region_sizes = "2,3,4,5";
  std::string preset = "desk";  // desk: 100 filters per size, paper: 500
  std::size_t filters_per_size = 0;  // 0: from preset
  double dropout = 0.5;
  bool fine_tune_users = false;

  double margin = 0.1;
  std::string optimizer = "adam";
  double lr = 1e-5;
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  std::size_t patience = 5;
  std::size_t max_pairs = 10;
  std::uint64_t seed = 0;

  std::size_t k = 10;
  std::string out_dir = "out";

  std::string grid_region_sizes = "2,3,4;3,4,5;2,3,4,5";
  std::string grid_optimizers = "sgd,adam";
  std::string grid_word_vectors = "skipgram";
  std::string grid_lrs = "1e-4,1e-5";
  std::string grid_models = "quser,qa";

  std::size_t resolved_filters() const {
    if (filters_per_size) return filters_per_size;
    if (preset == "desk") return 100;
    if (preset == "paper") return 500;
    throw std::invalid_argument("unknown preset '" + preset + "' (expected desk or paper)");
  }

  ModelConfig model_config() const {
    ModelConfig m;
    m.kind = parse_model_kind(model);
    m.conv.region_sizes = parse_size_list(region_sizes);
    m.conv.filters_per_size = resolved_filters();
    m.conv.input_length = seq_len;
    m.conv.embed_dim = word_dim;
    m.output_dim = user_dim;
    m.dropout_rate = dropout;
    m.fine_tune_users = fine_tune_users;
    return m;
  }

  TrainConfig train_config() const {
    TrainConfig t;
    t.margin = margin;
    t.optimizer = parse_optimizer(optimizer);
    t.learning_rate = lr;
    t.epochs = epochs;
    t.batch_size = batch_size;
    t.patience = patience;
    t.max_pairs_per_question = max_pairs;
    t.seed = seed;
    return t;
  }

  SkipGramConfig skipgram_config() const { return {word_dim, sg_window, sg_negatives, sg_epochs, sg_lr, seed}; }
  DeepWalkConfig deepwalk_config() const {
    return {user_dim, walks_per_vertex, walk_length, dw_window, dw_negatives, dw_epochs, 0.025, seed};
  }

  /// Checks every value and referenced path before any compute.
  void validate() const {
    if (train_path.empty()) throw std::invalid_argument("config: train path is required");
    for (const auto* p : {&train_path, &dev_path, &test1_path, &test2_path})
      if (!p->empty() && !std::filesystem::exists(*p)) throw std::invalid_argument("config: file not found: " + *p);
    for (const auto* src : {&word_vectors, &user_vectors})
      if (*src != "skipgram" && *src != "random" && *src != "deepwalk" && !std::filesystem::exists(*src))
        throw std::invalid_argument("config: vector file not found: " + *src);
    if (word_vectors == "deepwalk") throw std::invalid_argument("config: word_vectors cannot be deepwalk");
    if (user_vectors == "skipgram" || user_vectors == "random")
      throw std::invalid_argument("config: user_vectors must be deepwalk or a vector file");
    parse_format(format);
    parse_tokenizer(tokenizer);
    if (min_count < 1) throw std::invalid_argument("config: min_count must be >= 1");
    if (k < 1) throw std::invalid_argument("config: k must be >= 1");
    model_config().conv.validate();
    train_config().validate();
    if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("config: dropout must lie in [0, 1)");
  }
};

/// Loaded splits plus everything derived from the training split.
struct Experiment {
  RunConfig config;
  Dataset train, dev, test1, test2;
  bool has_dev = false, has_test1 = false, has_test2 = false;
  Vocab vocab;
  TextEncoder encoder;
  std::vector<std::string> all_users;  // pool population: train answerers
  std::optional<EmbeddingTable> word_vectors;
  std::optional<EmbeddingTable> user_vectors;
  EncodedCorpus train_encoded;
  std::unordered_map<std::string, std::string> profiles;

  Experiment() = default;
  Experiment(const Experiment&) = delete;
  Experiment& operator=(const Experiment&) = delete;

  const Dataset& split(Split s) const {
    switch (s) {
      case Split::train: return train;
      case Split::dev: return dev;
      case Split::test1: return test1;
      case Split::test2: return test2;
    }
    return train;
  }
  bool has(Split s) const {
    return s == Split::train || (s == Split::dev && has_dev) || (s == Split::test1 && has_test1) ||
           (s == Split::test2 && has_test2);
  }
};

/// Loads datasets and builds the vocabulary. Embeddings are built lazily.
inline void load_experiment(Experiment& ex, const RunConfig& cfg) {
  cfg.validate();
  ex.config = cfg;
  const auto fmt = parse_format(cfg.format);
  ex.train = parse_dataset(cfg.train_path, fmt, Split::train);
  if (!cfg.dev_path.empty()) ex.dev = parse_dataset(cfg.dev_path, fmt, Split::dev), ex.has_dev = true;
  if (!cfg.test1_path.empty()) ex.test1 = parse_dataset(cfg.test1_path, fmt, Split::test1), ex.has_test1 = true;
  if (!cfg.test2_path.empty()) ex.test2 = parse_dataset(cfg.test2_path, fmt, Split::test2), ex.has_test2 = true;
  check_disjoint({&ex.train, &ex.dev, &ex.test1, &ex.test2});
  const auto mode = parse_tokenizer(cfg.tokenizer);
  ex.vocab = build_vocab(ex.train, cfg.min_count, mode);
  ex.encoder = TextEncoder{&ex.vocab, mode, cfg.seq_len};
  ex.all_users = ex.train.users();
  ex.train_encoded = encode_dataset(ex.train, ex.encoder);
  ex.profiles = profile_answers(ex.train);
}

inline void load_experiment(Experiment& ex, const RunConfig& cfg, Dataset train, Dataset dev, Dataset test1, Dataset test2) {
  ex.config = cfg;
  ex.train = std::move(train);
  ex.dev = std::move(dev);
  ex.test1 = std::move(test1);
  ex.test2 = std::move(test2);
  ex.has_dev = !ex.dev.records.empty();
  ex.has_test1 = !ex.test1.records.empty();
  ex.has_test2 = !ex.test2.records.empty();
  check_disjoint({&ex.train, &ex.dev, &ex.test1, &ex.test2});
  const auto mode = parse_tokenizer(cfg.tokenizer);
  ex.vocab = build_vocab(ex.train, cfg.min_count, mode);
  ex.encoder = TextEncoder{&ex.vocab, mode, cfg.seq_len};
  ex.all_users = ex.train.users();
  ex.train_encoded = encode_dataset(ex.train, ex.encoder);
  ex.profiles = profile_answers(ex.train);
}

/// Word vectors per source: skipgram trains on the train split, random gives none.
inline std::optional<EmbeddingTable> make_word_vectors(const Experiment& ex, const std::string& source) {
  if (source == "random") return std::nullopt;
  if (source == "skipgram")
    return train_word_vectors(ex.train, ex.vocab, ex.encoder.mode, ex.config.skipgram_config());
  return load_vectors(source);
}

inline EmbeddingTable make_user_vectors(const Experiment& ex) {
  if (ex.config.user_vectors == "deepwalk") return deepwalk(ex.train, ex.config.deepwalk_config());
  return load_vectors(ex.config.user_vectors);
}

inline void ensure_embeddings(Experiment& ex, bool need_users) {
  if (!ex.word_vectors && ex.config.word_vectors != "random") ex.word_vectors = make_word_vectors(ex, ex.config.word_vectors);
  if (need_users && !ex.user_vectors) ex.user_vectors = make_user_vectors(ex);
}

template <typename T>
PoolScorer make_scorer(const ModelParams<T>& p, const Experiment& ex) {
  if (p.config.kind == ModelKind::quser) return make_user_scorer(p, ex.encoder);
  return make_answer_scorer(p, ex.encoder, ex.profiles);
}

template <typename T>
EvalReport evaluate_split(const ModelParams<T>& p, const Experiment& ex, Split s, std::size_t k, std::uint64_t seed,
                          EvalOptions opts = {}) {
  return evaluate_top1(make_scorer(p, ex), ex.split(s), ex.all_users, k, seed, opts);
}

struct EpochRecord {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double dev_top1 = std::numeric_limits<double>::quiet_NaN();
  double best_dev_error = std::numeric_limits<double>::quiet_NaN();
};

template <typename T>
struct FitResult {
  ModelParams<T> best;
  std::size_t best_epoch = 0;
  double best_dev_top1 = std::numeric_limits<double>::quiet_NaN();
  std::vector<EpochRecord> history;
  std::vector<EpochStats> epochs;
};

/// Called after every epoch with the live parameters; return false to stop.
template <typename T>
using EpochHook = std::function<bool(const EpochRecord&, const ModelParams<T>&)>;

/// Trains `params` for up to cfg.epochs, tracking the best dev-Top-1 snapshot
/// with early stopping after `patience` epochs without improvement. Without a
/// dev split the final parameters are kept.
template <typename T>
FitResult<T> fit(ModelParams<T> params, const Experiment& ex, const TrainConfig& cfg, EpochHook<T> hook = {}) {
  FitResult<T> res;
  std::mt19937_64 rng(cfg.seed);
  auto triples = make_triples(ex.train, rng, cfg.max_pairs_per_question);
  if (triples.empty()) throw std::runtime_error("training split yields no triples (all votes tied?)");
  Trainer<T> trainer(params, ex.train_encoded, cfg);
  std::size_t since_best = 0;
  res.best = params;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    auto stats = trainer.train_epoch(triples, rng);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.mean_loss = stats.mean_loss;
    bool improved = !ex.has_dev;
    if (ex.has_dev) {
      rec.dev_top1 = evaluate_split(params, ex, Split::dev, ex.config.k, cfg.seed).top1_accuracy;
      if (std::isnan(res.best_dev_top1) || rec.dev_top1 > res.best_dev_top1) {
        res.best_dev_top1 = rec.dev_top1;
        improved = true;
      }
      rec.best_dev_error = 1.0 - res.best_dev_top1;
    }
    if (improved) {
      res.best = params;
      res.best_epoch = epoch;
      since_best = 0;
    } else {
      ++since_best;
    }
    res.history.push_back(rec);
    res.epochs.push_back(std::move(stats));
    if (hook && !hook(rec, params)) break;
    if (ex.has_dev && cfg.patience > 0 && since_best >= cfg.patience) break;
  }
  for (auto* t : res.best.all_tensors()) t->drop_grad();
  return res;
}

/// `epoch \t mean_loss \t dev_top1` per line.
inline void write_metrics(std::ostream& out, const std::vector<EpochRecord>& history) {
  for (const auto& r : history)
    out << r.epoch << '\t' << format_real(r.mean_loss) << '\t' << (std::isnan(r.dev_top1) ? "nan" : format_real(r.dev_top1))
        << '\n';
}

/// `epoch \t best_dev_error`, non-increasing by construction.
inline void write_best_dev(std::ostream& out, const std::vector<EpochRecord>& history) {
  for (const auto& r : history)
    out << r.epoch << '\t' << (std::isnan(r.best_dev_error) ? "nan" : format_real(r.best_dev_error)) << '\n';
}

template <typename T>
ModelParams<T> init_for(const Experiment& ex, const ModelConfig& mc, std::uint64_t seed) {
  const EmbeddingTable* words = ex.word_vectors ? &*ex.word_vectors : nullptr;
  const EmbeddingTable* users = mc.kind == ModelKind::quser ? &*ex.user_vectors : nullptr;
  return init_model<T>(mc, ex.vocab, words, users, seed);
}

struct GridRow {
  std::string method;
  std::string region_sizes;
  std::string hyperparameter;
  std::string word_embedding;
  std::string optimizer;
  double test1_top1 = std::numeric_limits<double>::quiet_NaN();
  double test2_top1 = std::numeric_limits<double>::quiet_NaN();
};

inline void write_grid(std::ostream& out, const std::vector<GridRow>& rows) {
  out << "method\tregion_sizes\thyperparameter\tword_embedding\toptimizer\ttest1_top1\ttest2_top1\n";
  auto cell = [](double v) { return std::isnan(v) ? std::string("nan") : format_real(v); };
  for (const auto& r : rows)
    out << r.method << '\t' << '(' << r.region_sizes << ')' << '\t' << r.hyperparameter << '\t' << r.word_embedding << '\t'
        << r.optimizer << '\t' << cell(r.test1_top1) << '\t' << cell(r.test2_top1) << '\n';
}

inline std::string format_lr(double lr) {
  std::ostringstream os;
  os << lr;
  return os.str();
}

/// Every cell of models x region-size sets x word sources x optimizers x learning rates.
template <typename T>
std::vector<GridRow> run_grid(Experiment& ex, const std::function<void(const GridRow&)>& on_row = {}) {
  const auto& cfg = ex.config;
  std::vector<GridRow> rows;
  const auto models = split_list(cfg.grid_models, ',');
  const bool need_users = std::find(models.begin(), models.end(), "quser") != models.end();
  if (need_users && !ex.user_vectors) ex.user_vectors = make_user_vectors(ex);
  std::map<std::string, std::optional<EmbeddingTable>> word_cache;
  for (const auto& model : models) {
    for (const auto& sizes : split_list(cfg.grid_region_sizes, ';')) {
      for (const auto& source : split_list(cfg.grid_word_vectors, ',')) {
        if (!word_cache.count(source)) word_cache.emplace(source, make_word_vectors(ex, source));
        for (const auto& opt : split_list(cfg.grid_optimizers, ',')) {
          for (const auto& lr_text : split_list(cfg.grid_lrs, ',')) {
            double lr = 0;
            if (!parse_number(lr_text, lr)) throw std::invalid_argument("bad grid learning rate '" + lr_text + "'");
            RunConfig cell = cfg;
            cell.model = model;
            cell.region_sizes = sizes;
            cell.optimizer = opt;
            cell.lr = lr;
            const auto mc = cell.model_config();
            const auto tc = cell.train_config();
            const auto& words = word_cache.at(source);
            auto params = init_model<T>(mc, ex.vocab, words ? &*words : nullptr,
                                        mc.kind == ModelKind::quser ? &*ex.user_vectors : nullptr, cfg.seed);
            auto fitted = fit<T>(std::move(params), ex, tc);
            GridRow row;
            row.method = mc.kind == ModelKind::quser ? "Q-USER-CNN" : "Q-A-CNN";
            row.region_sizes = sizes;
            row.hyperparameter = std::to_string(cfg.word_dim) + " " + std::to_string(cfg.user_dim) + " " + format_lr(lr);
            row.word_embedding = source;
            row.optimizer = opt;
            if (ex.has_test1) row.test1_top1 = evaluate_split(fitted.best, ex, Split::test1, cfg.k, cfg.seed).top1_accuracy;
            if (ex.has_test2) row.test2_top1 = evaluate_split(fitted.best, ex, Split::test2, cfg.k, cfg.seed).top1_accuracy;
            if (on_row) on_row(row);
            rows.push_back(std::move(row));
          }
        }
      }
    }
  }
  return rows;
}

}  // namespace qexpert
