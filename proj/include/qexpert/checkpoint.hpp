#pragma once

// Binary checkpoint container. Byte layout is documented in docs/checkpoint_format.md.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "qexpert/model.hpp"
#include "qexpert/train.hpp"
#include "qexpert/util.hpp"

namespace qexpert {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[8] = {'Q', 'X', 'C', 'K', 'P', 'T', '\0', '\n'};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class CheckpointVersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class FingerprintMismatchError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CorruptCheckpointError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

inline std::uint64_t user_fingerprint(const std::vector<std::string>& users) {
  std::uint64_t h = fnv1a64("users");
  for (const auto& u : users) {
    h = fnv1a64(u, h);
    h = fnv1a64("\n", h);
  }
  return h;
}

template <typename T>
struct Checkpoint {
  std::uint32_t format_version = kCheckpointVersion;
  ModelParams<T> params;
  TrainConfig train;
  std::uint64_t vocab_fingerprint = 0;
  std::uint64_t user_fingerprint = 0;
  std::uint64_t epoch = 0;
};

namespace detail {

inline std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

inline std::vector<std::size_t> parse_sizes(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    std::size_t v = 0;
    if (!parse_number(item, v)) throw CorruptCheckpointError("bad size list '" + s + "'");
    out.push_back(v);
  }
  return out;
}

inline std::string config_text(const ModelConfig& m, const TrainConfig& t) {
  std::ostringstream os;
  os << "model=" << to_string(m.kind) << '\n'
     << "region_sizes=" << join_sizes(m.conv.region_sizes) << '\n'
     << "filters_per_size=" << m.conv.filters_per_size << '\n'
     << "seq_len=" << m.conv.input_length << '\n'
     << "word_dim=" << m.conv.embed_dim << '\n'
     << "output_dim=" << m.output_dim << '\n'
     << "dropout=" << format_real(m.dropout_rate) << '\n'
     << "fine_tune_users=" << (m.fine_tune_users ? 1 : 0) << '\n'
     << "fine_tune_words=" << (m.fine_tune_words ? 1 : 0) << '\n'
     << "margin=" << format_real(t.margin) << '\n'
     << "optimizer=" << to_string(t.optimizer) << '\n'
     << "lr=" << format_real(t.learning_rate) << '\n'
     << "epochs=" << t.epochs << '\n'
     << "batch_size=" << t.batch_size << '\n'
     << "patience=" << t.patience << '\n'
     << "max_pairs_per_question=" << t.max_pairs_per_question << '\n'
     << "seed=" << t.seed << '\n';
  return os.str();
}

inline void parse_config_text(const std::string& text, ModelConfig& m, TrainConfig& t) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  for (std::string line; std::getline(is, line);) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw CorruptCheckpointError("bad config line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto get = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw CorruptCheckpointError(std::string("config field '") + key + "' missing");
    return it->second;
  };
  auto num = [&](const char* key, auto& out) {
    if (!parse_number(get(key), out)) throw CorruptCheckpointError(std::string("config field '") + key + "' malformed");
  };
  try {
    m.kind = parse_model_kind(get("model"));
    t.optimizer = parse_optimizer(get("optimizer"));
  } catch (const std::invalid_argument& e) {
    throw CorruptCheckpointError(e.what());
  }
  m.conv.region_sizes = parse_sizes(get("region_sizes"));
  num("filters_per_size", m.conv.filters_per_size);
  num("seq_len", m.conv.input_length);
  num("word_dim", m.conv.embed_dim);
  num("output_dim", m.output_dim);
  num("dropout", m.dropout_rate);
  m.fine_tune_users = get("fine_tune_users") == "1";
  m.fine_tune_words = get("fine_tune_words") == "1";
  num("margin", t.margin);
  num("lr", t.learning_rate);
  num("epochs", t.epochs);
  num("batch_size", t.batch_size);
  num("patience", t.patience);
  num("max_pairs_per_question", t.max_pairs_per_question);
  num("seed", t.seed);
}

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  template <typename U>
  void pod(U v) {
    static_assert(std::is_trivially_copyable_v<U>);
    out_.write(reinterpret_cast<const char*>(&v), sizeof(U));
  }
  void str(const std::string& s) {
    pod(std::uint32_t(s.size()));
    out_.write(s.data(), std::streamsize(s.size()));
  }
  template <typename U>
  void array(std::span<const U> v) {
    out_.write(reinterpret_cast<const char*>(v.data()), std::streamsize(v.size_bytes()));
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}
  template <typename U>
  U pod() {
    U v{};
    read(reinterpret_cast<char*>(&v), sizeof(U));
    return v;
  }
  std::string str(std::size_t max_len = 1 << 20) {
    const auto n = pod<std::uint32_t>();
    if (n > max_len) throw CorruptCheckpointError("string field of implausible length " + std::to_string(n));
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }
  template <typename U>
  void array(std::span<U> v) {
    read(reinterpret_cast<char*>(v.data()), v.size_bytes());
  }

 private:
  void read(char* dst, std::size_t n) {
    in_.read(dst, std::streamsize(n));
    if (std::size_t(in_.gcount()) != n) throw CorruptCheckpointError("checkpoint is truncated");
  }
  std::istream& in_;
};

}  // namespace detail

template <typename T>
void save_checkpoint(std::ostream& out, ModelParams<T>& params, const TrainConfig& train, std::uint64_t vocab_fp,
                     std::uint64_t epoch) {
  static_assert(std::endian::native == std::endian::little, "checkpoint format is little-endian");
  detail::Writer w(out);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  w.pod(kCheckpointVersion);
  w.pod(std::uint32_t(sizeof(T)));
  w.str(detail::config_text(params.config, train));
  w.pod(vocab_fp);
  w.pod(user_fingerprint(params.user_ids));
  w.pod(epoch);
  const auto tensors = params.all_tensors();
  const auto names = params.tensor_names();
  w.pod(std::uint32_t(tensors.size()));
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    w.str(names[i]);
    w.pod(std::uint32_t(tensors[i]->rank()));
    for (auto e : tensors[i]->shape()) w.pod(std::uint64_t(e));
    w.array(std::span<const T>(tensors[i]->data()));
  }
  out.write("QXEND\0\0\n", 8);
}

template <typename T>
void save_checkpoint(const std::string& path, ModelParams<T>& params, const TrainConfig& train, std::uint64_t vocab_fp,
                     std::uint64_t epoch) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint " + path);
  save_checkpoint(out, params, train, vocab_fp, epoch);
  out.flush();
  if (!out) throw CheckpointError("write failed for " + path);
}

/// Loads and verifies against the supplied vocabulary and user id list
/// (users may be empty for Q-A-CNN).
template <typename T>
Checkpoint<T> load_checkpoint(std::istream& in, const Vocab& vocab, const std::vector<std::string>& users) {
  detail::Reader r(in);
  char magic[8];
  in.read(magic, 8);
  if (in.gcount() != 8) throw CorruptCheckpointError("checkpoint is truncated");
  if (std::memcmp(magic, kCheckpointMagic, 8) != 0) throw CorruptCheckpointError("not a checkpoint file (bad magic)");
  Checkpoint<T> ck;
  ck.format_version = r.pod<std::uint32_t>();
  if (ck.format_version != kCheckpointVersion)
    throw CheckpointVersionError("checkpoint format version " + std::to_string(ck.format_version) + ", expected " +
                                 std::to_string(kCheckpointVersion));
  const auto scalar = r.pod<std::uint32_t>();
  if (scalar != sizeof(T))
    throw CheckpointVersionError("checkpoint stores " + std::to_string(scalar) + "-byte scalars, reader expects " +
                                 std::to_string(sizeof(T)));
  detail::parse_config_text(r.str(), ck.params.config, ck.train);
  ck.vocab_fingerprint = r.pod<std::uint64_t>();
  ck.user_fingerprint = r.pod<std::uint64_t>();
  ck.epoch = r.pod<std::uint64_t>();
  if (ck.vocab_fingerprint != vocab.fingerprint())
    throw FingerprintMismatchError("vocabulary fingerprint mismatch: checkpoint was trained with a different vocabulary");
  if (ck.user_fingerprint != user_fingerprint(users))
    throw FingerprintMismatchError("user-id fingerprint mismatch: checkpoint was trained with a different user set");

  const auto count = r.pod<std::uint32_t>();
  if (count > 4096) throw CorruptCheckpointError("implausible tensor count");
  std::map<std::string, Tensor<T>> tensors;
  std::vector<std::string> order;
  for (std::uint32_t i = 0; i < count; ++i) {
    auto name = r.str(4096);
    const auto rank = r.pod<std::uint32_t>();
    if (rank == 0 || rank > 8) throw CorruptCheckpointError("tensor " + name + " has invalid rank");
    Shape shape(rank);
    for (auto& e : shape) {
      e = std::size_t(r.pod<std::uint64_t>());
      if (e == 0 || e > (std::uint64_t(1) << 32)) throw CorruptCheckpointError("tensor " + name + " has invalid extent");
    }
    Tensor<T> t(shape);
    r.array(t.data());
    order.push_back(name);
    tensors.emplace(std::move(name), std::move(t));
  }
  char trailer[8];
  in.read(trailer, 8);
  if (in.gcount() != 8 || std::memcmp(trailer, "QXEND\0\0\n", 8) != 0) throw CorruptCheckpointError("checkpoint is truncated");

  auto take = [&](const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw CorruptCheckpointError("tensor " + name + " missing");
    return std::move(it->second);
  };
  auto& p = ck.params;
  p.word_table = take("word_table");
  if (p.word_table.rank() != 2 || p.word_table.dim(0) != vocab.size())
    throw FingerprintMismatchError("word table rows do not match the vocabulary size");
  if (p.config.kind == ModelKind::quser) {
    p.user_table = take("user_table");
    if (p.user_table.dim(0) != users.size()) throw FingerprintMismatchError("user table rows do not match the user list");
    p.set_users(users);
  }
  auto sizes = p.config.conv.region_sizes;
  std::sort(sizes.begin(), sizes.end());
  for (auto m : sizes) {
    ConvLayer<T> layer;
    layer.region_size = m;
    layer.filters = take("conv" + std::to_string(m) + ".filters");
    layer.bias = take("conv" + std::to_string(m) + ".bias");
    p.convs.push_back(std::move(layer));
  }
  p.proj_weight = take("proj.weight");
  p.proj_bias = take("proj.bias");
  return ck;
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::string& path, const Vocab& vocab, const std::vector<std::string>& users) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path);
  return load_checkpoint<T>(in, vocab, users);
}

}  // namespace qexpert
