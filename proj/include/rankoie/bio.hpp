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

#include <optional>
#include <string>
#include <vector>

#include "rankoie/common.hpp"
#include "rankoie/corpus.hpp"

namespace rankoie {

// Labels are dense integer ids over a fixed alphabet parameterized by the
// maximum argument count M:
//   0        O
//   1, 2     B-P, I-P          (role 0, the predicate)
//   2r+1,    B-Ar, I-Ar        (role r in 1..M)
//   2r+2
// Alphabet size = 2*(M+1) + 1. The id order doubles as the tie-breaking
// order in decoding, so it is part of the observable contract.
using LabelId = int;
using LabelSequence = std::vector<LabelId>;

enum class LabelKind { O, B, I };

class LabelAlphabet {
 public:
  explicit LabelAlphabet(int max_args = 4) : max_args_(max_args) {
    if (max_args < 1) throw ConfigError("max_args must be >= 1");
  }

  int max_args() const { return max_args_; }
  int size() const { return 2 * (max_args_ + 1) + 1; }

  static LabelKind kind(LabelId id) {
    if (id == 0) return LabelKind::O;
    return (id % 2 == 1) ? LabelKind::B : LabelKind::I;
  }

  // role 0 = predicate, role r >= 1 = argument r; -1 for O.
  static int role(LabelId id) { return id == 0 ? -1 : (id - 1) / 2; }

  LabelId begin_of(int role) const {
    check_role(role);
    return 2 * role + 1;
  }
  LabelId inside_of(int role) const {
    check_role(role);
    return 2 * role + 2;
  }

  bool valid_id(LabelId id) const { return id >= 0 && id < size(); }

  std::string to_string(LabelId id) const {
    if (!valid_id(id)) throw DataError("label id out of range: " + std::to_string(id));
    if (id == 0) return "O";
    const std::string prefix = kind(id) == LabelKind::B ? "B-" : "I-";
    const int r = role(id);
    return r == 0 ? prefix + "P" : prefix + "A" + std::to_string(r);
  }

  LabelId parse(const std::string& text) const {
    if (text == "O") return 0;
    if (text.size() < 3 || (text[0] != 'B' && text[0] != 'I') || text[1] != '-') {
      throw DataError("malformed label string: '" + text + "'");
    }
    const bool inside = text[0] == 'I';
    int r;
    if (text.substr(2) == "P") {
      r = 0;
    } else if (text[2] == 'A') {
      try {
        r = std::stoi(text.substr(3));
      } catch (const std::exception&) {
        throw DataError("malformed label string: '" + text + "'");
      }
      if (r < 1) throw DataError("malformed label string: '" + text + "'");
    } else {
      throw DataError("malformed label string: '" + text + "'");
    }
    if (r > max_args_) {
      throw DataError("label '" + text + "' exceeds the configured argument limit of " +
                      std::to_string(max_args_));
    }
    return inside ? inside_of(r) : begin_of(r);
  }

  std::vector<std::string> to_strings(const LabelSequence& y) const {
    std::vector<std::string> out;
    out.reserve(y.size());
    for (LabelId id : y) out.push_back(to_string(id));
    return out;
  }

  LabelSequence parse_all(const std::vector<std::string>& texts) const {
    LabelSequence out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(parse(t));
    return out;
  }

 private:
  void check_role(int role) const {
    if (role < 0 || role > max_args_) {
      throw DataError("label role out of range: " + std::to_string(role));
    }
  }
  int max_args_;
};

// An I label must continue a run of its own role: it cannot open a sequence,
// follow O, or follow a label of a different role. `prev` < 0 denotes the
// sequence start. B after B of the same role is allowed; decoding keeps only
// the first run per role.
inline bool is_valid_transition(LabelId prev, LabelId next) {
  if (LabelAlphabet::kind(next) != LabelKind::I) return true;
  if (prev < 0) return false;
  if (LabelAlphabet::kind(prev) == LabelKind::O) return false;
  return LabelAlphabet::role(prev) == LabelAlphabet::role(next);
}

inline bool is_valid_sequence(const LabelSequence& y, int* bad_pos = nullptr) {
  LabelId prev = -1;
  for (std::size_t t = 0; t < y.size(); ++t) {
    if (!is_valid_transition(prev, y[t])) {
      if (bad_pos) *bad_pos = static_cast<int>(t);
      return false;
    }
    prev = y[t];
  }
  return true;
}

// Maps an extraction onto per-token labels. Argument i (in the extraction's
// start-ordered arg list) takes role i+1. Preconditions: spans in bounds,
// pairwise non-overlapping, arg count within the alphabet's limit.
inline LabelSequence encode(int n, const Extraction& x, const LabelAlphabet& alphabet) {
  if (x.arg_count() > alphabet.max_args()) {
    throw DataError("extraction in sentence '" + x.sentence_id + "' has " +
                    std::to_string(x.arg_count()) + " args, alphabet allows " +
                    std::to_string(alphabet.max_args()));
  }
  LabelSequence y(static_cast<std::size_t>(n), 0);
  auto place = [&](const Span& span, int role) {
    if (span.start < 0 || span.end >= n) {
      throw DataError("span out of bounds in sentence '" + x.sentence_id + "'");
    }
    for (int t = span.start; t <= span.end; ++t) {
      if (y[static_cast<std::size_t>(t)] != 0) {
        throw DataError("overlapping spans in sentence '" + x.sentence_id + "' at token " +
                        std::to_string(t));
      }
      y[static_cast<std::size_t>(t)] =
          t == span.start ? alphabet.begin_of(role) : alphabet.inside_of(role);
    }
  };
  place(x.predicate, 0);
  for (int i = 0; i < x.arg_count(); ++i) place(x.args[static_cast<std::size_t>(i)], i + 1);
  return y;
}

// Recovers an extraction from a transition-valid label sequence. Only the
// first maximal B..I run of each role counts; later runs of the same role are
// dropped. Returns nullopt when no predicate run exists. Recovered spans set
// head = start. Roles with no run are skipped and the remaining argument
// spans are ordered by start index.
inline std::optional<Extraction> decode(const LabelSequence& y, const std::string& sentence_id,
                                        const LabelAlphabet& alphabet) {
  int bad_pos = -1;
  if (!is_valid_sequence(y, &bad_pos)) {
    throw DataError("invalid label transition at position " + std::to_string(bad_pos) +
                    " in sentence '" + sentence_id + "'");
  }
  const int num_roles = alphabet.max_args() + 1;
  std::vector<Span> first_run(static_cast<std::size_t>(num_roles), Span{-1, -1, -1});
  std::size_t t = 0;
  while (t < y.size()) {
    if (LabelAlphabet::kind(y[t]) != LabelKind::B) {
      ++t;
      continue;
    }
    const int role = LabelAlphabet::role(y[t]);
    std::size_t end = t;
    while (end + 1 < y.size() && y[end + 1] == alphabet.inside_of(role)) ++end;
    auto& slot = first_run[static_cast<std::size_t>(role)];
    if (slot.start < 0) {
      slot = Span{static_cast<int>(t), static_cast<int>(end), static_cast<int>(t)};
    }
    t = end + 1;
  }
  if (first_run[0].start < 0) return std::nullopt;
  Extraction x;
  x.sentence_id = sentence_id;
  x.predicate = first_run[0];
  for (int role = 1; role < num_roles; ++role) {
    if (first_run[static_cast<std::size_t>(role)].start >= 0) {
      x.args.push_back(first_run[static_cast<std::size_t>(role)]);
    }
  }
  std::sort(x.args.begin(), x.args.end(),
            [](const Span& a, const Span& b) { return a.start < b.start; });
  return x;
}

}  // namespace rankoie
