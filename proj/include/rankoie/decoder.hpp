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
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "rankoie/bio.hpp"
#include "rankoie/common.hpp"
#include "rankoie/corpus.hpp"
#include "rankoie/tagger.hpp"

namespace rankoie {

struct ScoredSequence {
  double score = 0.0;  // sum over positions of log P(y_t)
  LabelSequence labels;

  double confidence() const {
    return labels.empty() ? -std::numeric_limits<double>::infinity()
                          : score / static_cast<double>(labels.size());
  }
};

// Mean per-token log-probability of a fixed label sequence.
inline double sequence_confidence(const LabelDistributions& dists, const LabelSequence& y) {
  if (y.empty() || static_cast<int>(y.size()) != dists.length()) {
    throw DataError("label sequence length does not match distribution length");
  }
  double log_sum = 0.0;
  for (int t = 0; t < dists.length(); ++t) {
    const LabelId id = y[static_cast<std::size_t>(t)];
    if (id < 0 || id >= dists.alphabet_size()) throw DataError("label id out of range");
    log_sum += std::log(dists.probs(t, id));
  }
  return log_sum / static_cast<double>(y.size());
}

namespace detail {

struct KBestCand {
  double score;
  int prev_state;       // -1 at t = 0
  int prev_index;       // index into the previous state's candidate list
  std::size_t lex;      // rank of the full prefix in lexicographic order
};

}  // namespace detail

// Exact top-k label sequences under the transition-validity constraint.
// Sequences are ordered by score descending; equal scores break toward the
// lexicographically smallest label-id sequence. Paths with -inf score are
// reported only when no finite path exists.
inline std::vector<ScoredSequence> kbest(const LabelDistributions& dists,
                                         const LabelAlphabet& alphabet, int k) {
  const int n = dists.length();
  const int L = alphabet.size();
  if (k < 1) throw ConfigError("k must be >= 1");
  if (n < 1) throw DataError("cannot decode an empty sequence");
  if (dists.alphabet_size() != L) {
    throw DataError("distribution width does not match the label alphabet");
  }

  Eigen::MatrixXd lp(n, L);
  for (int t = 0; t < n; ++t) {
    for (int s = 0; s < L; ++s) lp(t, s) = std::log(dists.probs(t, s));
  }

  using detail::KBestCand;
  std::vector<std::vector<std::vector<KBestCand>>> table(
      static_cast<std::size_t>(n),
      std::vector<std::vector<KBestCand>>(static_cast<std::size_t>(L)));

  for (int s = 0; s < L; ++s) {
    if (!is_valid_transition(-1, s)) continue;
    table[0][static_cast<std::size_t>(s)].push_back(KBestCand{lp(0, s), -1, -1, 0});
  }
  // Lexicographic rank of a length-1 sequence is the rank of its label id
  // among the valid starts; state order already gives it.
  {
    std::size_t next = 0;
    for (int s = 0; s < L; ++s) {
      for (auto& c : table[0][static_cast<std::size_t>(s)]) c.lex = next++;
    }
  }

  for (int t = 1; t < n; ++t) {
    for (int s = 0; s < L; ++s) {
      auto& list = table[static_cast<std::size_t>(t)][static_cast<std::size_t>(s)];
      for (int p = 0; p < L; ++p) {
        if (!is_valid_transition(p, s)) continue;
        const auto& prev_list = table[static_cast<std::size_t>(t - 1)][static_cast<std::size_t>(p)];
        for (int i = 0; i < static_cast<int>(prev_list.size()); ++i) {
          list.push_back(KBestCand{prev_list[static_cast<std::size_t>(i)].score + lp(t, s), p, i,
                                   prev_list[static_cast<std::size_t>(i)].lex});
        }
      }
      // Candidates ending in the same state share their last label, so the
      // prefix rank decides lexicographic ties.
      std::sort(list.begin(), list.end(), [](const KBestCand& a, const KBestCand& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.lex < b.lex;
      });
      if (static_cast<int>(list.size()) > k) list.resize(static_cast<std::size_t>(k));
    }
    // Re-rank the kept candidates globally: order by prefix rank, then by the
    // new last label. Prefix ranks are unique per sequence, yet one prefix
    // may extend into several states; the state id settles those ties.
    std::vector<std::pair<int, int>> kept;  // (state, index in list)
    for (int s = 0; s < L; ++s) {
      const auto& list = table[static_cast<std::size_t>(t)][static_cast<std::size_t>(s)];
      for (int i = 0; i < static_cast<int>(list.size()); ++i) kept.emplace_back(s, i);
    }
    std::sort(kept.begin(), kept.end(), [&](const std::pair<int, int>& a,
                                            const std::pair<int, int>& b) {
      const auto& ca = table[static_cast<std::size_t>(t)][static_cast<std::size_t>(a.first)]
                            [static_cast<std::size_t>(a.second)];
      const auto& cb = table[static_cast<std::size_t>(t)][static_cast<std::size_t>(b.first)]
                            [static_cast<std::size_t>(b.second)];
      if (ca.lex != cb.lex) return ca.lex < cb.lex;
      return a.first < b.first;
    });
    for (std::size_t r = 0; r < kept.size(); ++r) {
      table[static_cast<std::size_t>(t)][static_cast<std::size_t>(kept[r].first)]
           [static_cast<std::size_t>(kept[r].second)].lex = r;
    }
  }

  std::vector<std::pair<int, int>> finals;
  for (int s = 0; s < L; ++s) {
    const auto& list = table[static_cast<std::size_t>(n - 1)][static_cast<std::size_t>(s)];
    for (int i = 0; i < static_cast<int>(list.size()); ++i) finals.emplace_back(s, i);
  }
  auto cand_at = [&](const std::pair<int, int>& ref) -> const KBestCand& {
    return table[static_cast<std::size_t>(n - 1)][static_cast<std::size_t>(ref.first)]
                [static_cast<std::size_t>(ref.second)];
  };
  std::sort(finals.begin(), finals.end(),
            [&](const std::pair<int, int>& a, const std::pair<int, int>& b) {
              const KBestCand& ca = cand_at(a);
              const KBestCand& cb = cand_at(b);
              if (ca.score != cb.score) return ca.score > cb.score;
              return ca.lex < cb.lex;
            });
  const bool any_finite = !finals.empty() && std::isfinite(cand_at(finals.front()).score);

  std::vector<ScoredSequence> result;
  for (const auto& ref : finals) {
    if (static_cast<int>(result.size()) >= k) break;
    const KBestCand& c = cand_at(ref);
    if (any_finite && !std::isfinite(c.score)) break;  // sorted, so the rest are -inf too
    ScoredSequence seq;
    seq.score = c.score;
    seq.labels.assign(static_cast<std::size_t>(n), 0);
    int state = ref.first;
    int index = ref.second;
    for (int t = n - 1; t >= 0; --t) {
      seq.labels[static_cast<std::size_t>(t)] = state;
      const KBestCand& step =
          table[static_cast<std::size_t>(t)][static_cast<std::size_t>(state)]
               [static_cast<std::size_t>(index)];
      state = step.prev_state;
      index = step.prev_index;
    }
    result.push_back(std::move(seq));
  }
  return result;
}

inline ScoredSequence viterbi(const LabelDistributions& dists, const LabelAlphabet& alphabet) {
  return kbest(dists, alphabet, 1).front();
}

// ---------------------------------------------------------------------------
// Extraction generation
// ---------------------------------------------------------------------------

struct GeneratedExtraction {
  Extraction extraction;
  int predicate_index = 0;
  LabelSequence labels;
};

namespace detail {

inline std::vector<int> span_signature(const Extraction& e) {
  std::vector<int> sig{e.predicate.start, e.predicate.end};
  for (const Span& a : e.args) {
    sig.push_back(a.start);
    sig.push_back(a.end);
  }
  return sig;
}

}  // namespace detail

// Decodes the k best label sequences for one candidate predicate and keeps
// the distinct span tuples, highest confidence first. Sequences that assign
// no predicate label are dropped.
inline std::vector<GeneratedExtraction> generate_for_predicate(const Model& m, const Sentence& s,
                                                               int predicate_index, int k) {
  const LabelAlphabet alphabet = m.alphabet();
  LabelDistributions dists = forward(m, s, predicate_index);
  std::vector<ScoredSequence> seqs = kbest(dists, alphabet, k);
  std::vector<GeneratedExtraction> out;
  std::vector<std::vector<int>> seen;
  for (ScoredSequence& seq : seqs) {
    std::optional<Extraction> e = decode(seq.labels, s.id, alphabet);
    if (!e) continue;
    std::vector<int> sig = detail::span_signature(*e);
    if (std::find(seen.begin(), seen.end(), sig) != seen.end()) continue;
    seen.push_back(std::move(sig));
    e->confidence = seq.confidence();
    GeneratedExtraction g;
    g.extraction = std::move(*e);
    g.predicate_index = predicate_index;
    g.labels = std::move(seq.labels);
    out.push_back(std::move(g));
  }
  return out;
}

inline std::vector<GeneratedExtraction> generate_for_sentence(const Model& m, const Sentence& s,
                                                              int k) {
  std::vector<GeneratedExtraction> out;
  for (int v : s.candidate_predicates) {
    std::vector<GeneratedExtraction> part = generate_for_predicate(m, s, v, k);
    out.insert(out.end(), std::make_move_iterator(part.begin()),
               std::make_move_iterator(part.end()));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Extraction dump files: JSONL with an optional leading metadata object.
// A confidence of -inf round-trips as JSON null.
// ---------------------------------------------------------------------------

struct ExtractionDump {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<GeneratedExtraction> items;
};

namespace detail {

inline nlohmann::json span_to_json(const Span& s) {
  return nlohmann::json{{"start", s.start}, {"end", s.end}, {"head", s.head}};
}

inline Span span_from_json(const nlohmann::json& j, const std::string& where) {
  if (!j.is_object() || !j.contains("start") || !j.contains("end")) {
    throw DataError("malformed span in " + where);
  }
  Span s;
  s.start = j.at("start").get<int>();
  s.end = j.at("end").get<int>();
  s.head = j.contains("head") && !j.at("head").is_null() ? j.at("head").get<int>() : s.start;
  if (s.start < 0 || s.end < s.start || s.head < s.start || s.head > s.end) {
    throw DataError("invalid span bounds in " + where);
  }
  return s;
}

}  // namespace detail

inline void save_extraction_dump(const std::string& path,
                                 std::span<const GeneratedExtraction> items,
                                 const LabelAlphabet& alphabet, const nlohmann::json& meta) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write extraction dump: " + path);
  if (!meta.empty()) {
    nlohmann::json head;
    head["rankoie_meta"] = meta;
    out << head.dump() << "\n";
  }
  for (const GeneratedExtraction& g : items) {
    nlohmann::json line;
    line["sentence_id"] = g.extraction.sentence_id;
    line["predicate_index"] = g.predicate_index;
    line["predicate"] = detail::span_to_json(g.extraction.predicate);
    nlohmann::json args = nlohmann::json::array();
    for (const Span& a : g.extraction.args) args.push_back(detail::span_to_json(a));
    line["args"] = args;
    line["label_sequence"] = alphabet.to_strings(g.labels);
    if (std::isfinite(g.extraction.confidence)) {
      line["confidence"] = g.extraction.confidence;
    } else {
      line["confidence"] = nullptr;
    }
    out << line.dump() << "\n";
  }
  if (!out) throw DataError("failed to write extraction dump: " + path);
}

inline ExtractionDump load_extraction_dump(const std::string& path, const LabelAlphabet& alphabet) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("cannot open extraction dump: " + path);
  ExtractionDump dump;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("malformed JSON at " + where + ": " + e.what());
    }
    if (j.contains("rankoie_meta")) {
      dump.meta = j.at("rankoie_meta");
      continue;
    }
    GeneratedExtraction g;
    try {
      g.extraction.sentence_id = j.at("sentence_id").get<std::string>();
      g.predicate_index = j.at("predicate_index").get<int>();
      g.extraction.predicate = detail::span_from_json(j.at("predicate"), where);
      for (const auto& ja : j.at("args")) {
        g.extraction.args.push_back(detail::span_from_json(ja, where));
      }
      if (j.contains("label_sequence")) {
        g.labels = alphabet.parse_all(j.at("label_sequence").get<std::vector<std::string>>());
      }
      const auto& jc = j.at("confidence");
      g.extraction.confidence =
          jc.is_null() ? -std::numeric_limits<double>::infinity() : jc.get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw DataError("malformed extraction at " + where + ": " + e.what());
    }
    if (g.extraction.confidence > 0.0) {
      throw DataError("confidence must be <= 0 at " + where);
    }
    dump.items.push_back(std::move(g));
  }
  return dump;
}

}  // namespace rankoie
