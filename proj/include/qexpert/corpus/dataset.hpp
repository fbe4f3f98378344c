#pragma once

// Question records, dataset splits, and the two on-disk dataset formats:
//   tsv:   question_id \t question_text \t user:votes[,user:votes...] [\t base64(answer_text)]...
//   jsonl: {"id": ..., "text": ..., "answers": [{"user": ..., "votes": ..., "text": ...}]}

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "qexpert/util.hpp"

namespace qexpert {

struct Answer {
  std::string user_id;
  std::int64_t votes = 0;
  std::optional<std::string> text;
};

struct QuestionRecord {
  std::string question_id;
  std::string text;
  std::vector<Answer> answers;

  const Answer* find_answer(std::string_view user) const {
    for (const auto& a : answers)
      if (a.user_id == user) return &a;
    return nullptr;
  }
  std::int64_t votes_of(std::string_view user) const {
    const auto* a = find_answer(user);
    if (!a) throw std::out_of_range("user " + std::string(user) + " did not answer " + question_id);
    return a->votes;
  }
  /// The unique strict-maximum-vote answerer, if there is one.
  std::optional<std::string> gold_user() const {
    const Answer* best = nullptr;
    bool tied = false;
    for (const auto& a : answers) {
      if (!best || a.votes > best->votes) {
        best = &a;
        tied = false;
      } else if (a.votes == best->votes) {
        tied = true;
      }
    }
    if (!best || tied) return std::nullopt;
    return best->user_id;
  }
};

enum class Split { train, dev, test1, test2 };

inline std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::dev: return "dev";
    case Split::test1: return "test1";
    case Split::test2: return "test2";
  }
  return "?";
}

inline Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "dev") return Split::dev;
  if (s == "test1") return Split::test1;
  if (s == "test2") return Split::test2;
  throw std::invalid_argument("unknown split '" + std::string(s) + "' (expected train|dev|test1|test2)");
}

struct Dataset {
  Split split = Split::train;
  std::vector<QuestionRecord> records;

  std::size_t size() const { return records.size(); }

  /// Distinct answering users, sorted.
  std::vector<std::string> users() const {
    std::set<std::string> s;
    for (const auto& r : records)
      for (const auto& a : r.answers) s.insert(a.user_id);
    return {s.begin(), s.end()};
  }
};

enum class DatasetFormat { tsv, jsonl };

inline DatasetFormat parse_format(std::string_view s) {
  if (s == "tsv") return DatasetFormat::tsv;
  if (s == "jsonl" || s == "json") return DatasetFormat::jsonl;
  throw std::invalid_argument("unknown dataset format '" + std::string(s) + "' (expected tsv or jsonl)");
}

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : std::runtime_error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class DuplicateIdError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::vector<std::string_view> split_on(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

inline QuestionRecord parse_tsv_line(std::string_view line, const std::string& source, std::size_t lineno) {
  const auto fields = split_on(line, '\t');
  if (fields.size() < 3) throw ParseError(source, lineno, "expected at least 3 tab-separated fields (id, text, answers)");
  QuestionRecord rec;
  rec.question_id = std::string(fields[0]);
  if (rec.question_id.empty()) throw ParseError(source, lineno, "empty question id");
  rec.text = std::string(fields[1]);
  if (fields[2].empty()) throw ParseError(source, lineno, "empty answers field");
  for (auto item : split_on(fields[2], ',')) {
    const auto colon = item.rfind(':');
    if (colon == std::string_view::npos || colon == 0)
      throw ParseError(source, lineno, "answer entry '" + std::string(item) + "' is not user:votes");
    Answer a;
    a.user_id = std::string(item.substr(0, colon));
    if (!parse_number(item.substr(colon + 1), a.votes) || a.votes < 0)
      throw ParseError(source, lineno, "votes in '" + std::string(item) + "' must be a non-negative integer");
    rec.answers.push_back(std::move(a));
  }
  if (fields.size() > 3) {
    if (fields.size() - 3 != rec.answers.size())
      throw ParseError(source, lineno,
                       "extended record has " + std::to_string(fields.size() - 3) + " answer texts for " +
                           std::to_string(rec.answers.size()) + " answers");
    for (std::size_t i = 0; i < rec.answers.size(); ++i) {
      if (fields[3 + i].empty()) continue;
      try {
        rec.answers[i].text = base64::decode(fields[3 + i]);
      } catch (const std::exception& e) {
        throw ParseError(source, lineno, "answer text " + std::to_string(i) + ": " + e.what());
      }
    }
  }
  return rec;
}

inline QuestionRecord parse_json_line(std::string_view line, const std::string& source, std::size_t lineno) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(source, lineno, std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("id") || !j.contains("text") || !j.contains("answers"))
    throw ParseError(source, lineno, "record needs fields id, text, answers");
  QuestionRecord rec;
  try {
    rec.question_id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
    rec.text = j.at("text").get<std::string>();
    const auto& answers = j.at("answers");
    if (!answers.is_array() || answers.empty()) throw ParseError(source, lineno, "answers must be a non-empty array");
    for (const auto& aj : answers) {
      Answer a;
      a.user_id = aj.at("user").is_string() ? aj.at("user").get<std::string>() : aj.at("user").dump();
      a.votes = aj.at("votes").get<std::int64_t>();
      if (a.votes < 0) throw ParseError(source, lineno, "votes must be non-negative");
      if (aj.contains("text") && !aj.at("text").is_null()) a.text = aj.at("text").get<std::string>();
      rec.answers.push_back(std::move(a));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(source, lineno, std::string("bad field: ") + e.what());
  }
  if (rec.question_id.empty()) throw ParseError(source, lineno, "empty question id");
  return rec;
}

}  // namespace detail

/// Parses one record per line from a stream. Blank lines are skipped.
inline Dataset parse_dataset(std::istream& in, DatasetFormat format, Split split = Split::train,
                             const std::string& source = "<stream>") {
  Dataset ds;
  ds.split = split;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    QuestionRecord rec = format == DatasetFormat::tsv ? detail::parse_tsv_line(line, source, lineno)
                                                      : detail::parse_json_line(line, source, lineno);
    std::unordered_set<std::string_view> users;
    for (const auto& a : rec.answers)
      if (!users.insert(a.user_id).second)
        throw ParseError(source, lineno, "user " + a.user_id + " answers question " + rec.question_id + " twice");
    if (!seen.insert(rec.question_id).second)
      throw DuplicateIdError(source + ":" + std::to_string(lineno) + ": duplicate question id " + rec.question_id);
    ds.records.push_back(std::move(rec));
  }
  return ds;
}

inline Dataset parse_dataset(const std::string& path, DatasetFormat format, Split split = Split::train) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset file " + path);
  return parse_dataset(in, format, split, path);
}

inline void write_dataset(std::ostream& out, const Dataset& ds, DatasetFormat format) {
  for (const auto& r : ds.records) {
    if (format == DatasetFormat::tsv) {
      out << r.question_id << '\t' << r.text << '\t';
      bool any_text = false;
      for (std::size_t i = 0; i < r.answers.size(); ++i) {
        out << (i ? "," : "") << r.answers[i].user_id << ':' << r.answers[i].votes;
        any_text = any_text || r.answers[i].text.has_value();
      }
      if (any_text)
        for (const auto& a : r.answers) out << '\t' << (a.text ? base64::encode(*a.text) : std::string());
      out << '\n';
    } else {
      nlohmann::json j;
      j["id"] = r.question_id;
      j["text"] = r.text;
      j["answers"] = nlohmann::json::array();
      for (const auto& a : r.answers) {
        nlohmann::json aj{{"user", a.user_id}, {"votes", a.votes}};
        if (a.text) aj["text"] = *a.text;
        j["answers"].push_back(std::move(aj));
      }
      out << j.dump() << '\n';
    }
  }
}

inline void write_dataset(const std::string& path, const Dataset& ds, DatasetFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write dataset file " + path);
  write_dataset(out, ds, format);
  if (!out) throw std::runtime_error("write failed for " + path);
}

/// Throws if any question id appears in more than one split.
inline void check_disjoint(const std::vector<const Dataset*>& splits) {
  std::unordered_map<std::string, Split> owner;
  for (const auto* ds : splits)
    for (const auto& r : ds->records) {
      auto [it, inserted] = owner.emplace(r.question_id, ds->split);
      if (!inserted && it->second != ds->split)
        throw DuplicateIdError("question " + r.question_id + " appears in both " + to_string(it->second) + " and " +
                               to_string(ds->split));
    }
}

/// Ground-truth expert map: question_id \t user_id lines.
inline void write_expert_map(const std::string& path, const std::map<std::string, std::string>& experts) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write expert map " + path);
  for (const auto& [q, u] : experts) out << q << '\t' << u << '\n';
}

inline std::map<std::string, std::string> read_expert_map(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open expert map " + path);
  std::map<std::string, std::string> m;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError(path, lineno, "expected question_id<TAB>user_id");
    m.emplace(line.substr(0, tab), line.substr(tab + 1));
  }
  return m;
}

}  // namespace qexpert
