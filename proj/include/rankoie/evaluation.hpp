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
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "rankoie/common.hpp"
#include "rankoie/corpus.hpp"
#include "rankoie/decoder.hpp"
#include "rankoie/tagger.hpp"

namespace rankoie {

struct PRPoint {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

struct EvalCounts {
  std::size_t predicted = 0;
  std::size_t gold = 0;
  std::size_t matched = 0;
};

struct EvalReport {
  double auc = 0.0;
  double best_f1 = 0.0;
  std::vector<PRPoint> points;
  EvalCounts counts;
};

// A prediction is credited when it has the same argument count as the gold
// extraction, its predicate span contains the gold predicate head, and each
// argument span contains the corresponding gold argument head. Argument
// order matters; there is no partial credit.
inline bool match(const Extraction& pred, const Extraction& gold) {
  if (pred.sentence_id != gold.sentence_id) return false;
  if (pred.arg_count() != gold.arg_count()) return false;
  if (!pred.predicate.contains(gold.predicate.head)) return false;
  for (std::size_t i = 0; i < pred.args.size(); ++i) {
    if (!pred.args[i].contains(gold.args[i].head)) return false;
  }
  return true;
}

namespace detail {

// Sweep order: confidence descending; ties resolved by sentence id, then the
// span tuple, then the candidate predicate index, so the curve never depends
// on input order.
inline bool sweep_before(const GeneratedExtraction& a, const GeneratedExtraction& b) {
  const double ca = a.extraction.confidence;
  const double cb = b.extraction.confidence;
  if (ca != cb) return ca > cb;
  if (a.extraction.sentence_id != b.extraction.sentence_id) {
    return a.extraction.sentence_id < b.extraction.sentence_id;
  }
  const std::vector<int> sa = span_signature(a.extraction);
  const std::vector<int> sb = span_signature(b.extraction);
  if (sa != sb) return sa < sb;
  return a.predicate_index < b.predicate_index;
}

}  // namespace detail

// Precision-recall sweep with greedy gold crediting: each prediction, taken
// in sweep order, claims the first still-unclaimed gold extraction of its
// sentence (in gold file order) that it matches. One point per prefix.
inline std::vector<PRPoint> pr_curve(std::span<const GeneratedExtraction> predictions,
                                     const Dataset& gold) {
  const std::size_t total_gold = gold.extraction_count();
  if (total_gold == 0) throw DataError("gold set is empty; nothing to evaluate against");

  std::vector<std::size_t> order(predictions.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return detail::sweep_before(predictions[a], predictions[b]);
  });

  std::unordered_map<std::string, std::vector<bool>> claimed;
  std::vector<PRPoint> points;
  points.reserve(predictions.size());
  std::size_t matched = 0;
  std::size_t seen = 0;
  for (std::size_t idx : order) {
    const GeneratedExtraction& p = predictions[idx];
    const std::vector<Extraction>* gold_list = gold.gold_for(p.extraction.sentence_id);
    if (!gold_list && !gold.find_sentence(p.extraction.sentence_id)) {
      throw DataError("prediction references unknown sentence '" + p.extraction.sentence_id + "'");
    }
    ++seen;
    if (gold_list) {
      std::vector<bool>& used = claimed[p.extraction.sentence_id];
      used.resize(gold_list->size(), false);
      for (std::size_t g = 0; g < gold_list->size(); ++g) {
        if (used[g]) continue;
        if (match(p.extraction, (*gold_list)[g])) {
          used[g] = true;
          ++matched;
          break;
        }
      }
    }
    points.push_back(PRPoint{p.extraction.confidence,
                             static_cast<double>(matched) / static_cast<double>(seen),
                             static_cast<double>(matched) / static_cast<double>(total_gold)});
  }
  return points;
}

// Trapezoidal area under the sweep. Runs of points at the same recall are
// collapsed to their last (lowest-precision) member, and the curve is
// anchored at recall zero with the first collapsed precision.
inline double auc(std::span<const PRPoint> points) {
  if (points.empty()) throw DataError("cannot integrate an empty curve");
  std::vector<PRPoint> steps;
  steps.reserve(points.size());
  for (const PRPoint& p : points) {
    if (!steps.empty() && steps.back().recall == p.recall) {
      steps.back() = p;
    } else {
      steps.push_back(p);
    }
  }
  double area = 0.0;
  double prev_recall = 0.0;
  double prev_precision = steps.front().precision;
  for (const PRPoint& p : steps) {
    area += (p.recall - prev_recall) * (p.precision + prev_precision) / 2.0;
    prev_recall = p.recall;
    prev_precision = p.precision;
  }
  return area;
}

inline double best_f1(std::span<const PRPoint> points) {
  if (points.empty()) throw DataError("cannot score an empty curve");
  double best = 0.0;
  for (const PRPoint& p : points) {
    const double denom = p.precision + p.recall;
    const double f1 = denom > 0.0 ? 2.0 * p.precision * p.recall / denom : 0.0;
    best = std::max(best, f1);
  }
  return best;
}

// Full report; an empty prediction set scores zero rather than erroring so
// that untrained models remain evaluable.
inline EvalReport evaluate_extractions(std::span<const GeneratedExtraction> predictions,
                                       const Dataset& gold) {
  EvalReport report;
  report.counts.predicted = predictions.size();
  report.counts.gold = gold.extraction_count();
  if (report.counts.gold == 0) throw DataError("gold set is empty; nothing to evaluate against");
  if (predictions.empty()) return report;
  report.points = pr_curve(predictions, gold);
  report.auc = auc(report.points);
  report.best_f1 = best_f1(report.points);
  report.counts.matched = static_cast<std::size_t>(
      std::llround(report.points.back().recall * static_cast<double>(report.counts.gold)));
  return report;
}

inline nlohmann::json eval_report_to_json(const EvalReport& r) {
  nlohmann::json points = nlohmann::json::array();
  for (const PRPoint& p : r.points) {
    nlohmann::json t;
    if (std::isfinite(p.threshold)) {
      t = p.threshold;
    } else {
      t = nullptr;
    }
    points.push_back(nlohmann::json::array({t, p.precision, p.recall}));
  }
  return nlohmann::json{
      {"auc", r.auc},
      {"best_f1", r.best_f1},
      {"points", points},
      {"counts",
       {{"predicted", r.counts.predicted}, {"gold", r.counts.gold}, {"matched", r.counts.matched}}},
      {"conventions", {{"auc", "trapezoid+anchor"}, {"f1", "sweep-max"}, {"credit", "greedy"}}}};
}

// Rescores a fixed extraction set under `model` (spans untouched, confidence
// recomputed from the stored label sequences), then evaluates.
inline EvalReport rerank_eval(std::span<const GeneratedExtraction> base_dump, const Model& model,
                              const Dataset& gold, int workers = 1) {
  std::vector<GeneratedExtraction> rescored(base_dump.begin(), base_dump.end());
  parallel_chunks(rescored.size(), 8, workers,
                  [&](std::size_t, std::size_t begin, std::size_t end) {
                    for (std::size_t i = begin; i < end; ++i) {
                      GeneratedExtraction& g = rescored[i];
                      const Sentence* s = gold.find_sentence(g.extraction.sentence_id);
                      if (!s) {
                        throw DataError("dump references unknown sentence '" +
                                        g.extraction.sentence_id + "'");
                      }
                      if (g.labels.empty()) {
                        throw DataError("dump entry for sentence '" + g.extraction.sentence_id +
                                        "' carries no label sequence; cannot rerank");
                      }
                      LabelDistributions dists = forward(model, *s, g.predicate_index);
                      g.extraction.confidence = sequence_confidence(dists, g.labels);
                    }
                  });
  return evaluate_extractions(rescored, gold);
}

}  // namespace rankoie
