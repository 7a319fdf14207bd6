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

// Synthetic labeled corpus for end-to-end tests. Sentences come from a small
// template grammar with a vocabulary of roughly two hundred word types. Some
// templates add a relative clause whose verb is offered as an extraction
// candidate but never carries a gold extraction, so generated output always
// contains negatives for calibration to push down.

#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "rankoie/common.hpp"
#include "rankoie/corpus.hpp"

namespace rankoie::testsupport {

struct WordBank {
  std::vector<std::string> names;
  std::vector<std::string> verbs;
  std::vector<std::string> clause_verbs;
  std::vector<std::string> nouns;
  std::vector<std::string> adjectives;
  std::vector<std::string> determiners;
  std::vector<std::string> prepositions;
};

inline const WordBank& word_bank() {
  static const WordBank bank = [] {
    WordBank b;
    const char* name_stems[] = {"mira",  "tobin", "ada",   "felix",  "noor",  "ivan",  "sela",
                                "bruno", "petra", "oskar", "lena",   "marco", "tansy", "rufus",
                                "vera",  "colin", "dara",  "emil",   "freya", "gauri", "hana",
                                "ilya",  "jonas", "kira",  "liam",   "mona",  "nils",  "oona",
                                "pavel", "quinn", "rosa",  "stefan", "talia", "ursa",  "viktor",
                                "wanda", "xeno",  "yara",  "zelda",  "arlo"};
    for (const char* s : name_stems) {
      b.names.push_back(s);
      b.names.push_back(std::string(s) + "son");
    }
    const char* verb_stems[] = {"built", "painted", "sold",    "bought",  "repaired", "visited",
                                "found", "carried", "planted", "cooked",  "washed",   "borrowed",
                                "moved", "cleaned", "opened",  "closed",  "studied",  "measured",
                                "wrote", "stacked", "counted", "wrapped", "weighed",  "traded"};
    for (const char* s : verb_stems) b.verbs.push_back(s);
    const char* clause_stems[] = {"admired", "trusted", "followed", "ignored",
                                  "praised", "avoided", "greeted",  "remembered"};
    for (const char* s : clause_stems) b.clause_verbs.push_back(s);
    const char* noun_stems[] = {"barn",   "ledger", "engine", "garden", "bridge", "piano",
                                "lantern", "wagon",  "kettle", "statue", "window", "carpet",
                                "basket",  "mirror", "shelf",  "fence",  "boiler", "clock",
                                "turbine", "canoe",  "anvil",  "loom",   "stove",  "chart"};
    for (const char* s : noun_stems) b.nouns.push_back(s);
    const char* adj_stems[] = {"old",    "small", "heavy", "broken", "bright", "narrow",
                               "quiet",  "rusty", "spare", "green",  "tall",   "crooked"};
    for (const char* s : adj_stems) b.adjectives.push_back(s);
    b.determiners = {"the", "a"};
    b.prepositions = {"near", "behind", "beside", "under"};
    return b;
  }();
  return bank;
}

namespace detail {

inline const std::string& pick(const std::vector<std::string>& pool, Rng& rng) {
  return pool[static_cast<std::size_t>(rng.bounded(static_cast<std::uint64_t>(pool.size())))];
}

inline Span token_span(int t) { return Span{t, t, t}; }

}  // namespace detail

// Builds `count` sentences whose ids carry the given prefix. Gold extractions
// point at the main verb; roughly a third of the sentences embed a relative
// clause ("NAME , who CLAUSE_VERB NAME , VERB ...") whose verb joins
// candidate_predicates without any gold extraction.
inline Dataset make_corpus(int count, const std::string& id_prefix, std::uint64_t seed) {
  const WordBank& bank = word_bank();
  Rng rng(derive_seed(seed, "corpus"));
  Dataset d;
  for (int i = 0; i < count; ++i) {
    Sentence s;
    s.id = id_prefix + std::to_string(i);
    Extraction x;
    x.sentence_id = s.id;

    const std::uint64_t shape = rng.bounded(6);
    auto put = [&](const std::string& w) {
      s.tokens.push_back(w);
      return static_cast<int>(s.tokens.size()) - 1;
    };

    int subject_start = -1;
    int clause_verb = -1;
    if (shape >= 4) {
      // Relative clause: subject , who CLAUSE_VERB NAME ,
      subject_start = put(detail::pick(bank.names, rng));
      put(",");
      put("who");
      clause_verb = put(detail::pick(bank.clause_verbs, rng));
      put(detail::pick(bank.names, rng));
      put(",");
    } else {
      subject_start = put(detail::pick(bank.names, rng));
    }
    x.args.push_back(detail::token_span(subject_start));

    const int verb = put(detail::pick(bank.verbs, rng));
    x.predicate = detail::token_span(verb);

    // Object: either a bare name or a determiner phrase, optionally adjective.
    const std::uint64_t obj_kind = rng.bounded(3);
    if (obj_kind == 0) {
      x.args.push_back(detail::token_span(put(detail::pick(bank.names, rng))));
    } else {
      const int det = put(detail::pick(bank.determiners, rng));
      if (obj_kind == 2) put(detail::pick(bank.adjectives, rng));
      const int noun = put(detail::pick(bank.nouns, rng));
      x.args.push_back(Span{det, noun, noun});
    }

    // Optional third argument: preposition plus name.
    if (shape == 1 || shape == 3) {
      put(detail::pick(bank.prepositions, rng));
      x.args.push_back(detail::token_span(put(detail::pick(bank.names, rng))));
    }

    s.candidate_predicates.push_back(verb);
    if (clause_verb >= 0) {
      s.candidate_predicates.push_back(clause_verb);
      std::sort(s.candidate_predicates.begin(), s.candidate_predicates.end());
    }
    d.gold[s.id].push_back(std::move(x));
    d.sentences.push_back(std::move(s));
  }
  d.rebuild_index();
  return d;
}

// Five short fixed sentences, enough for a model to memorize exactly.
inline Dataset make_tiny_corpus() {
  Dataset d;
  const std::vector<std::vector<std::string>> rows = {
      {"mira", "built", "the", "barn"},
      {"tobin", "sold", "a", "piano"},
      {"ada", "painted", "the", "fence"},
      {"felix", "bought", "a", "kettle"},
      {"noor", "repaired", "the", "clock"},
  };
  for (std::size_t i = 0; i < rows.size(); ++i) {
    Sentence s;
    s.id = "tiny-" + std::to_string(i);
    s.tokens = rows[i];
    s.candidate_predicates = {1};
    Extraction x;
    x.sentence_id = s.id;
    x.predicate = Span{1, 1, 1};
    x.args = {Span{0, 0, 0}, Span{2, 3, 3}};
    d.gold[s.id].push_back(std::move(x));
    d.sentences.push_back(std::move(s));
  }
  d.rebuild_index();
  return d;
}

}  // namespace rankoie::testsupport
