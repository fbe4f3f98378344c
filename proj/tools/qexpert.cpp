// qexpert: command-line front end for expert identification runs.
//
//   qexpert --config run.toml ingest
//   qexpert --config run.toml embed users --out users.vec
//   qexpert --config run.toml train quser
//   qexpert --config run.toml eval --model quser --split test1 --k 10
//   qexpert --config run.toml rank --model quser --question "..." --pool pool.txt
//   qexpert --config run.toml grid
//   qexpert synth --out data/

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "qexpert/corpus/synthetic.hpp"
#include "qexpert/log.hpp"
#include "qexpert/pipeline.hpp"

namespace fs = std::filesystem;
using namespace qexpert;
using Real = float;

namespace {

void bind_run_config(CLI::App& app, RunConfig& c) {
  app.add_option("--train", c.train_path, "training split file")->group("Data");
  app.add_option("--dev", c.dev_path, "dev split file")->group("Data");
  app.add_option("--test1", c.test1_path, "first held-out split")->group("Data");
  app.add_option("--test2", c.test2_path, "second held-out split")->group("Data");
  app.add_option("--format", c.format, "dataset format: tsv | jsonl")->group("Data");
  app.add_option("--tokenizer", c.tokenizer, "whitespace | char_bigram")->group("Data");
  app.add_option("--min_count", c.min_count, "vocabulary frequency threshold")->group("Data");
  app.add_option("--seq_len", c.seq_len, "fixed question/answer length")->group("Data");

  app.add_option("--word_vectors", c.word_vectors, "skipgram | random | <vector file>")->group("Embeddings");
  app.add_option("--word_dim", c.word_dim)->group("Embeddings");
  app.add_option("--sg_window", c.sg_window)->group("Embeddings");
  app.add_option("--sg_negatives", c.sg_negatives)->group("Embeddings");
  app.add_option("--sg_epochs", c.sg_epochs)->group("Embeddings");
  app.add_option("--sg_lr", c.sg_lr)->group("Embeddings");
  app.add_option("--user_vectors", c.user_vectors, "deepwalk | <vector file>")->group("Embeddings");
  app.add_option("--user_dim", c.user_dim)->group("Embeddings");
  app.add_option("--walks_per_vertex", c.walks_per_vertex)->group("Embeddings");
  app.add_option("--walk_length", c.walk_length)->group("Embeddings");
  app.add_option("--dw_window", c.dw_window)->group("Embeddings");
  app.add_option("--dw_negatives", c.dw_negatives)->group("Embeddings");
  app.add_option("--dw_epochs", c.dw_epochs)->group("Embeddings");

  app.add_option("--model", c.model, "quser | qa")->group("Model");
  app.add_option("--region_sizes", c.region_sizes, "comma-separated filter heights")->group("Model");
  app.add_option("--preset", c.preset, "desk (100 filters/size) | paper (500)")->group("Model");
  app.add_option("--filters_per_size", c.filters_per_size, "overrides the preset when > 0")->group("Model");
  app.add_option("--dropout", c.dropout)->group("Model");
  app.add_flag("--fine_tune_users", c.fine_tune_users)->group("Model");

  app.add_option("--margin", c.margin)->group("Training");
  app.add_option("--optimizer", c.optimizer, "sgd | adam")->group("Training");
  app.add_option("--lr", c.lr)->group("Training");
  app.add_option("--epochs", c.epochs)->group("Training");
  app.add_option("--batch_size", c.batch_size)->group("Training");
  app.add_option("--patience", c.patience)->group("Training");
  app.add_option("--max_pairs", c.max_pairs)->group("Training");
  app.add_option("--seed", c.seed)->group("Training");

  app.add_option("--k", c.k, "candidate pool size")->group("Evaluation");
  app.add_option("--out_dir", c.out_dir)->group("Output");

  app.add_option("--grid_region_sizes", c.grid_region_sizes, "';'-separated region-size sets")->group("Grid");
  app.add_option("--grid_optimizers", c.grid_optimizers)->group("Grid");
  app.add_option("--grid_word_vectors", c.grid_word_vectors)->group("Grid");
  app.add_option("--grid_lrs", c.grid_lrs)->group("Grid");
  app.add_option("--grid_models", c.grid_models)->group("Grid");
}

std::string path_in(const RunConfig& c, const std::string& name) { return (fs::path(c.out_dir) / name).string(); }

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
  if (!out) throw std::runtime_error("write failed for " + path);
}

int cmd_ingest(const RunConfig& cfg) {
  Experiment ex;
  load_experiment(ex, cfg);
  std::cout << "split\trecords\tanswers\tusers\n";
  for (auto s : {Split::train, Split::dev, Split::test1, Split::test2}) {
    if (!ex.has(s)) continue;
    const auto& ds = ex.split(s);
    std::size_t answers = 0;
    for (const auto& r : ds.records) answers += r.answers.size();
    std::cout << to_string(s) << '\t' << ds.size() << '\t' << answers << '\t' << ds.users().size() << '\n';
  }
  std::cout << "vocab_size\t" << ex.vocab.size() << "\tmin_count=" << cfg.min_count << '\n';
  std::cout << "top_tokens\t";
  for (std::size_t i = 2; i < std::min<std::size_t>(ex.vocab.size(), 12); ++i) std::cout << (i > 2 ? " " : "") << ex.vocab.token(std::int32_t(i));
  std::cout << '\n';
  return 0;
}

int cmd_embed(const RunConfig& cfg, const std::string& what, std::string out) {
  if (what != "users" && what != "words") throw std::invalid_argument("embed target must be users or words");
  Experiment ex;
  load_experiment(ex, cfg);
  if (out.empty()) {
    fs::create_directories(cfg.out_dir);
    out = path_in(cfg, what == "users" ? "users.vec" : "words.vec");
  }
  if (what == "users") {
    save_vectors(make_user_vectors(ex), out);
  } else {
    auto words = make_word_vectors(ex, cfg.word_vectors == "random" ? "skipgram" : cfg.word_vectors);
    save_vectors(*words, out);
  }
  std::cout << out << '\n';
  return 0;
}

void save_user_list(const std::string& path, const std::vector<std::string>& users) {
  std::ostringstream os;
  for (const auto& u : users) os << u << '\n';
  write_file(path, os.str());
}

std::vector<std::string> load_user_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open user list " + path);
  std::vector<std::string> users;
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) users.push_back(line);
  return users;
}

int cmd_train(const RunConfig& cfg) {
  Experiment ex;
  load_experiment(ex, cfg);
  const auto mc = cfg.model_config();
  const auto tc = cfg.train_config();
  fs::create_directories(cfg.out_dir);
  ensure_embeddings(ex, mc.kind == ModelKind::quser);
  auto params = init_for<Real>(ex, mc, cfg.seed);
  const std::string name = to_string(mc.kind);
  auto res = fit<Real>(std::move(params), ex, tc, [&](const EpochRecord& r, const ModelParams<Real>&) {
    log::info(name + " epoch " + std::to_string(r.epoch) + " loss " + format_real(r.mean_loss) + " dev_top1 " +
              (std::isnan(r.dev_top1) ? std::string("nan") : format_real(r.dev_top1)));
    return true;
  });
  std::ostringstream metrics, best;
  write_metrics(metrics, res.history);
  write_best_dev(best, res.history);
  write_file(path_in(cfg, name + ".metrics.tsv"), metrics.str());
  write_file(path_in(cfg, name + ".best_dev.tsv"), best.str());
  ex.vocab.save(path_in(cfg, "vocab.txt"));
  save_user_list(path_in(cfg, name + ".users.txt"), res.best.user_ids);
  save_checkpoint(path_in(cfg, name + ".ckpt"), res.best, tc, ex.vocab.fingerprint(), res.best_epoch);
  std::cout << path_in(cfg, name + ".ckpt") << '\n';
  return 0;
}

Checkpoint<Real> load_trained(const RunConfig& cfg, const std::string& checkpoint, const Vocab& vocab) {
  const std::string name = to_string(parse_model_kind(cfg.model));
  const auto users = load_user_list(path_in(cfg, name + ".users.txt"));
  return load_checkpoint<Real>(checkpoint.empty() ? path_in(cfg, name + ".ckpt") : checkpoint, vocab, users);
}

int cmd_eval(const RunConfig& cfg, const std::string& split_name, std::string checkpoint, std::string vocab_path,
             std::string out, bool dump) {
  Experiment ex;
  load_experiment(ex, cfg);
  const auto split = parse_split(split_name);
  if (!ex.has(split)) throw std::invalid_argument("split " + split_name + " is not configured");
  const auto vocab = Vocab::load(vocab_path.empty() ? path_in(cfg, "vocab.txt") : vocab_path);
  const auto ck = load_trained(cfg, checkpoint, vocab);
  EvalOptions opts;
  opts.keep_rankings = dump;
  // Scoring must use the vocabulary the checkpoint was verified against.
  TextEncoder enc{&vocab, ex.encoder.mode, cfg.seq_len};
  PoolScorer scorer = ck.params.config.kind == ModelKind::quser ? make_user_scorer(ck.params, enc)
                                                                 : make_answer_scorer(ck.params, enc, ex.profiles);
  const auto rep = evaluate_top1(scorer, ex.split(split), ex.all_users, cfg.k, cfg.seed, opts);
  if (out.empty()) {
    fs::create_directories(cfg.out_dir);
    out = path_in(cfg, to_string(ck.params.config.kind) + ".eval_" + split_name + ".txt");
  }
  write_file(out, report_string(rep));
  std::cout << "top1\t" << format_real(rep.top1_accuracy) << "\tquestions\t" << rep.questions << "\tskipped\t"
            << rep.skipped.size() << '\n';
  return 0;
}

int cmd_rank(const RunConfig& cfg, const std::string& question, const std::string& pool_path, std::string checkpoint,
             std::string vocab_path) {
  const auto vocab = Vocab::load(vocab_path.empty() ? path_in(cfg, "vocab.txt") : vocab_path);
  const auto ck = load_trained(cfg, checkpoint, vocab);
  std::ifstream in(pool_path);
  if (!in) throw std::runtime_error("cannot open pool file " + pool_path);
  // Pool lines: user_id [TAB answer text]; answer text is used by the Q-A-CNN model.
  std::vector<std::string> users;
  std::unordered_map<std::string, std::string> answers;
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    const auto user = line.substr(0, tab);
    users.push_back(user);
    if (tab != std::string::npos) answers[user] = line.substr(tab + 1);
  }
  TextEncoder enc{&vocab, parse_tokenizer(cfg.tokenizer), cfg.seq_len};
  const auto q_ids = enc(question);
  std::vector<std::optional<double>> scores;
  if (ck.params.config.kind == ModelKind::quser) {
    scores = score_users(ck.params, q_ids, users);
  } else {
    const auto h = question_forward(ck.params, q_ids);
    for (const auto& u : users) {
      auto it = answers.find(u);
      if (it == answers.end()) {
        scores.emplace_back();
        continue;
      }
      scores.emplace_back(double(nn::cosine<Real>(h, question_forward(ck.params, enc(it->second)))));
    }
  }
  for (std::size_t i = 0; i < users.size(); ++i)
    if (!scores[i]) std::cerr << "unknown user\t" << users[i] << '\n';
  const auto ranked = rank_scores(users, scores);
  for (std::size_t i = 0; i < ranked.size(); ++i)
    std::cout << (i + 1) << '\t' << ranked[i].user_id << '\t' << format_real(ranked[i].score) << '\n';
  return 0;
}

int cmd_grid(const RunConfig& cfg, std::string out) {
  Experiment ex;
  load_experiment(ex, cfg);
  if (out.empty()) {
    fs::create_directories(cfg.out_dir);
    out = path_in(cfg, "grid.tsv");
  }
  const auto rows = run_grid<Real>(ex, [](const GridRow& r) {
    log::info("grid " + r.method + " (" + r.region_sizes + ") " + r.word_embedding + " " + r.optimizer + " " + r.hyperparameter +
              " test1 " + format_real(r.test1_top1));
  });
  std::ostringstream os;
  write_grid(os, rows);
  write_file(out, os.str());
  std::cout << os.str();
  return 0;
}

int cmd_synth(const SyntheticConfig& sc, const std::string& out_dir, const std::string& format) {
  const auto data = generate_synthetic(sc);
  fs::create_directories(out_dir);
  const auto fmt = parse_format(format);
  const std::string ext = fmt == DatasetFormat::tsv ? ".tsv" : ".jsonl";
  write_dataset((fs::path(out_dir) / ("train" + ext)).string(), data.train, fmt);
  write_dataset((fs::path(out_dir) / ("dev" + ext)).string(), data.dev, fmt);
  write_dataset((fs::path(out_dir) / ("test1" + ext)).string(), data.test1, fmt);
  write_dataset((fs::path(out_dir) / ("test2" + ext)).string(), data.test2, fmt);
  write_expert_map((fs::path(out_dir) / "experts.tsv").string(), data.expert_of_question);
  std::cout << out_dir << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Expert identification for QA communities (Q-USER-CNN and Q-A-CNN)"};
  app.set_config("--config", "", "key = value run configuration");
  app.require_subcommand(1);
  app.fallthrough();
  RunConfig cfg;
  bind_run_config(app, cfg);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "only log warnings");

  auto* ingest = app.add_subcommand("ingest", "parse and summarise the configured splits");

  auto* embed = app.add_subcommand("embed", "train user (DeepWalk) or word (skip-gram) vectors");
  std::string embed_what, embed_out;
  embed->add_option("target", embed_what, "users | words")->required();
  embed->add_option("--out", embed_out, "output vector file");

  auto* train = app.add_subcommand("train", "train a model and save the best-dev checkpoint");
  std::string train_model, train_out;
  bool train_grid = false;
  train->add_option("model", train_model, "quser | qa");
  train->add_option("--out", train_out, "output directory");
  train->add_flag("--grid", train_grid, "run the hyperparameter grid instead");

  auto* eval = app.add_subcommand("eval", "Top-1 accuracy of a checkpoint on one split");
  std::string eval_split = "test1", eval_ckpt, eval_vocab, eval_out;
  bool eval_dump = false;
  eval->add_option("--split", eval_split, "train | dev | test1 | test2");
  eval->add_option("--checkpoint", eval_ckpt);
  eval->add_option("--vocab", eval_vocab);
  eval->add_option("--out", eval_out, "report file");
  eval->add_flag("--dump", eval_dump, "include per-question rankings");

  auto* rank = app.add_subcommand("rank", "rank a pool of users for one question");
  std::string rank_question, rank_pool, rank_ckpt, rank_vocab;
  rank->add_option("--question", rank_question, "question text")->required();
  rank->add_option("--pool", rank_pool, "file with one user id per line")->required();
  rank->add_option("--checkpoint", rank_ckpt);
  rank->add_option("--vocab", rank_vocab);

  auto* grid = app.add_subcommand("grid", "train and evaluate every grid cell, one TSV row each");
  std::string grid_out;
  grid->add_option("--out", grid_out, "results file");

  auto* synth = app.add_subcommand("synth", "write a synthetic dataset with planted experts");
  SyntheticConfig sc;
  std::string synth_out = "synthetic";
  synth->add_option("--out", synth_out, "output directory");
  synth->add_option("--topics", sc.topics);
  synth->add_option("--users", sc.users);
  synth->add_option("--train_questions", sc.train_questions);
  synth->add_option("--dev_questions", sc.dev_questions);
  synth->add_option("--test_questions", sc.test_questions);
  synth->add_option("--vocab_size", sc.vocab_size);
  synth->add_option("--noise", sc.noise_rate);
  synth->add_option("--synth_seed", sc.seed);

  CLI11_PARSE(app, argc, argv);
  if (quiet) log::set_level(log::Level::warn);

  try {
    if (*ingest) return cmd_ingest(cfg);
    if (*embed) return cmd_embed(cfg, embed_what, embed_out);
    if (*train) {
      if (!train_model.empty()) cfg.model = train_model;
      if (!train_out.empty()) cfg.out_dir = train_out;
      return train_grid ? cmd_grid(cfg, "") : cmd_train(cfg);
    }
    if (*eval) return cmd_eval(cfg, eval_split, eval_ckpt, eval_vocab, eval_out, eval_dump);
    if (*rank) return cmd_rank(cfg, rank_question, rank_pool, rank_ckpt, rank_vocab);
    if (*grid) return cmd_grid(cfg, grid_out);
    if (*synth) return cmd_synth(sc, synth_out, cfg.format);
  } catch (const std::exception& e) {
    std::cerr << "qexpert: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
