// Copyright 2026 The RankOIE Authors - All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "rankoie/common.hpp"

namespace rankoie {

// Token span, inclusive on both ends. `head` marks the syntactic head token;
// predicted spans only ever need to contain a gold head, so spans recovered
// from label sequences default head to start.
struct Span {
  int start = 0;
  int end = 0;
  int head = 0;

  bool contains(int token) const { return token >= start && token <= end; }
  bool overlaps(const Span& o) const { return start <= o.end && o.start <= end; }
  bool same_range(const Span& o) const { return start == o.start && end == o.end; }
  bool operator==(const Span& o) const = default;
};

struct Sentence {
  std::string id;
  std::vector<std::string> tokens;
  // Token positions to feed as predicate candidates at extraction time,
  // strictly increasing. Supplied by the dataset file; no tagging here.
  std::vector<int> candidate_predicates;

  int length() const { return static_cast<int>(tokens.size()); }
};

// One assertion: a predicate span plus arguments ordered by start index.
struct Extraction {
  std::string sentence_id;
  Span predicate;
  std::vector<Span> args;
  double confidence = 0.0;  // mean log-probability; only meaningful when scored
  int polarity = 0;         // +1 / -1 once annotated against gold, 0 otherwise

  int arg_count() const { return static_cast<int>(args.size()); }

  bool same_spans(const Extraction& o) const {
    if (!predicate.same_range(o.predicate) || args.size() != o.args.size()) return false;
    for (std::size_t i = 0; i < args.size(); ++i) {
      if (!args[i].same_range(o.args[i])) return false;
    }
    return true;
  }
};

struct Dataset {
  std::vector<Sentence> sentences;
  std::map<std::string, std::vector<Extraction>> gold;

  const Sentence* find_sentence(const std::string& id) const {
    auto it = index_.find(id);
    return it == index_.end() ? nullptr : &sentences[it->second];
  }

  const std::vector<Extraction>* gold_for(const std::string& id) const {
    auto it = gold.find(id);
    return it == gold.end() ? nullptr : &it->second;
  }

  void rebuild_index() {
    index_.clear();
    for (std::size_t i = 0; i < sentences.size(); ++i) index_[sentences[i].id] = i;
  }

  std::size_t extraction_count() const {
    std::size_t n = 0;
    for (const auto& [id, xs] : gold) n += xs.size();
    return n;
  }

 private:
  std::unordered_map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

class Vocab {
 public:
  static constexpr int kPadId = 0;
  static constexpr int kUnkId = 1;
  static constexpr const char* kPadToken = "<pad>";
  static constexpr const char* kUnkToken = "<unk>";

  Vocab() {
    add(kPadToken);
    add(kUnkToken);
  }

  explicit Vocab(const std::vector<std::string>& id_to_word) {
    for (const auto& w : id_to_word) add(w);
    if (size() < 2 || words_[kPadId] != kPadToken || words_[kUnkId] != kUnkToken) {
      throw DataError("vocabulary is missing its reserved symbols");
    }
  }

  int add(const std::string& word) {
    auto [it, inserted] = ids_.emplace(word, static_cast<int>(words_.size()));
    if (inserted) words_.push_back(word);
    return it->second;
  }

  int lookup(const std::string& word) const {
    auto it = ids_.find(word);
    return it == ids_.end() ? kUnkId : it->second;
  }

  bool contains(const std::string& word) const { return ids_.count(word) > 0; }
  int size() const { return static_cast<int>(words_.size()); }
  const std::vector<std::string>& words() const { return words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> ids_;
};

// Tokens kept iff corpus frequency >= min_count; ordering is frequency
// descending then lexicographic, so two runs on the same data assign
// identical ids.
inline Vocab build_vocab(const Dataset& d, int min_count = 1) {
  if (min_count < 1) throw ConfigError("vocab min_count must be >= 1");
  std::map<std::string, std::size_t> freq;
  for (const auto& s : d.sentences) {
    for (const auto& w : s.tokens) ++freq[w];
  }
  std::vector<std::pair<std::string, std::size_t>> order(freq.begin(), freq.end());
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocab v;
  for (const auto& [word, count] : order) {
    if (count >= static_cast<std::size_t>(min_count)) v.add(word);
  }
  return v;
}

// ---------------------------------------------------------------------------
// Dataset file format: UTF-8 JSON-lines, one object per sentence.
// {"id": ..., "tokens": [...], "candidate_predicates": [...],
//  "extractions": [{"predicate": {"start","end","head"}, "args": [...]}, ...]}
// All indices 0-based inclusive.
// ---------------------------------------------------------------------------

namespace detail {

inline Span parse_span(const nlohmann::json& j, const std::string& where, bool* head_missing) {
  if (!j.is_object() || !j.contains("start") || !j.contains("end")) {
    throw DataError(where + ": span must be an object with start and end");
  }
  Span s;
  s.start = j.at("start").get<int>();
  s.end = j.at("end").get<int>();
  if (j.contains("head") && !j.at("head").is_null()) {
    s.head = j.at("head").get<int>();
  } else {
    s.head = s.start;
    if (head_missing) *head_missing = true;
  }
  return s;
}

inline void check_span(const Span& s, int n, const std::string& where) {
  if (!(0 <= s.start && s.start <= s.head && s.head <= s.end && s.end < n)) {
    std::ostringstream os;
    os << where << ": span out of bounds or misordered (start=" << s.start << " head=" << s.head
       << " end=" << s.end << " sentence length=" << n << ")";
    throw DataError(os.str());
  }
}

}  // namespace detail

// Normalizes argument order (by start, then end) and validates bounds and
// overlap. Two arguments with an identical range are tolerated here; the
// cleaning pass removes such extractions. Any other overlap is an error.
inline void validate_extraction(Extraction& x, int n, const std::string& where) {
  detail::check_span(x.predicate, n, where + " predicate");
  for (std::size_t i = 0; i < x.args.size(); ++i) {
    detail::check_span(x.args[i], n, where + " arg " + std::to_string(i));
  }
  std::stable_sort(x.args.begin(), x.args.end(), [](const Span& a, const Span& b) {
    if (a.start != b.start) return a.start < b.start;
    return a.end < b.end;
  });
  for (std::size_t i = 0; i < x.args.size(); ++i) {
    if (x.args[i].overlaps(x.predicate)) {
      throw DataError(where + ": arg " + std::to_string(i) + " overlaps the predicate");
    }
    if (i + 1 < x.args.size() && x.args[i].overlaps(x.args[i + 1]) &&
        !x.args[i].same_range(x.args[i + 1])) {
      throw DataError(where + ": args " + std::to_string(i) + " and " + std::to_string(i + 1) +
                      " overlap");
    }
  }
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("cannot open dataset file: " + path);
  Dataset d;
  std::string line;
  std::size_t line_no = 0;
  std::size_t heads_defaulted = 0;
  std::unordered_map<std::string, std::size_t> seen_ids;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ":" + std::to_string(line_no) + ": JSON parse error: " + e.what());
    }
    if (j.is_object() && j.contains("rankoie_meta")) continue;  // artifact header line
    const std::string where = path + ":" + std::to_string(line_no);
    try {
      Sentence s;
      s.id = j.at("id").get<std::string>();
      s.tokens = j.at("tokens").get<std::vector<std::string>>();
      if (s.tokens.empty()) throw DataError(where + ": sentence '" + s.id + "' has no tokens");
      if (!seen_ids.emplace(s.id, line_no).second) {
        throw DataError(where + ": duplicate sentence id '" + s.id + "'");
      }
      if (j.contains("candidate_predicates")) {
        s.candidate_predicates = j.at("candidate_predicates").get<std::vector<int>>();
      }
      for (std::size_t i = 0; i < s.candidate_predicates.size(); ++i) {
        const int v = s.candidate_predicates[i];
        if (v < 0 || v >= s.length()) {
          throw DataError(where + ": sentence '" + s.id + "' candidate predicate " +
                          std::to_string(v) + " out of bounds");
        }
        if (i > 0 && s.candidate_predicates[i - 1] >= v) {
          throw DataError(where + ": sentence '" + s.id +
                          "' candidate predicates must be strictly increasing");
        }
      }
      std::vector<Extraction> extractions;
      if (j.contains("extractions")) {
        for (const auto& je : j.at("extractions")) {
          Extraction x;
          x.sentence_id = s.id;
          bool head_missing = false;
          x.predicate =
              detail::parse_span(je.at("predicate"), where + " sentence '" + s.id + "'", &head_missing);
          if (je.contains("args")) {
            for (const auto& ja : je.at("args")) {
              x.args.push_back(
                  detail::parse_span(ja, where + " sentence '" + s.id + "'", &head_missing));
            }
          }
          if (head_missing) ++heads_defaulted;
          validate_extraction(x, s.length(), where + " sentence '" + s.id + "'");
          extractions.push_back(std::move(x));
        }
      }
      d.gold[s.id] = std::move(extractions);
      d.sentences.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + ": malformed record: " + e.what());
    }
  }
  d.rebuild_index();
  if (heads_defaulted > 0) {
    log_warn("=== HEAD INDICES MISSING: " + std::to_string(heads_defaulted) + " span(s) in " + path +
             " carry no head; defaulting head = span start. Head-inclusion scoring degrades to "
             "start-inclusion for these spans. ===");
  }
  return d;
}

inline void save_dataset(const Dataset& d, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write dataset file: " + path);
  auto span_json = [](const Span& s) {
    return nlohmann::json{{"start", s.start}, {"end", s.end}, {"head", s.head}};
  };
  for (const auto& s : d.sentences) {
    nlohmann::json j;
    j["id"] = s.id;
    j["tokens"] = s.tokens;
    j["candidate_predicates"] = s.candidate_predicates;
    nlohmann::json exts = nlohmann::json::array();
    auto it = d.gold.find(s.id);
    if (it != d.gold.end()) {
      for (const auto& x : it->second) {
        nlohmann::json je;
        je["predicate"] = span_json(x.predicate);
        nlohmann::json args = nlohmann::json::array();
        for (const auto& a : x.args) args.push_back(span_json(a));
        je["args"] = args;
        exts.push_back(je);
      }
    }
    j["extractions"] = exts;
    out << j.dump() << "\n";
  }
}

// ---------------------------------------------------------------------------
// Cleaning: keep gold extractions that have a predicate, at least two
// arguments, and no repeated argument range. Sentences whose gold set empties
// out stay in the dataset; they still contribute candidates and negatives.
// ---------------------------------------------------------------------------

struct CleanStats {
  std::size_t kept = 0;
  std::size_t dropped = 0;
  std::size_t emptied_sentences = 0;
};

inline Dataset clean(const Dataset& d, CleanStats* stats = nullptr) {
  Dataset out;
  out.sentences = d.sentences;
  CleanStats local;
  for (const auto& [id, extractions] : d.gold) {
    std::vector<Extraction> kept;
    for (const auto& x : extractions) {
      if (x.arg_count() < 2) {
        ++local.dropped;
        continue;
      }
      bool repeated = false;
      for (std::size_t i = 0; i + 1 < x.args.size(); ++i) {
        if (x.args[i].same_range(x.args[i + 1])) {  // args are sorted by range
          repeated = true;
          break;
        }
      }
      if (repeated) {
        ++local.dropped;
        continue;
      }
      kept.push_back(x);
      ++local.kept;
    }
    if (kept.empty() && !extractions.empty()) ++local.emptied_sentences;
    out.gold[id] = std::move(kept);
  }
  out.rebuild_index();
  if (stats) *stats = local;
  return out;
}

}  // namespace rankoie
