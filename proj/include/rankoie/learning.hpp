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
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "rankoie/bio.hpp"
#include "rankoie/common.hpp"
#include "rankoie/corpus.hpp"
#include "rankoie/decoder.hpp"
#include "rankoie/evaluation.hpp"
#include "rankoie/tagger.hpp"

namespace rankoie {

// ---------------------------------------------------------------------------
// Labeled samples and the growing extraction pool
// ---------------------------------------------------------------------------

struct LabeledSample {
  std::string sentence_id;
  int predicate_index = 0;
  LabelSequence labels;
  int polarity = 0;  // +1 or -1 against gold
  int source_iteration = 0;
};

struct PoolKey {
  std::string sentence_id;
  int predicate_index = 0;
  LabelSequence labels;

  bool operator<(const PoolKey& o) const {
    return std::tie(sentence_id, predicate_index, labels) <
           std::tie(o.sentence_id, o.predicate_index, o.labels);
  }
};

// Keyed by (sentence, predicate, label sequence); map order doubles as the
// deterministic traversal order. Insertion keeps the first-seen sample, so
// polarities never flip across iterations.
using ExtractionPool = std::map<PoolKey, LabeledSample>;

inline bool pool_insert(ExtractionPool& pool, LabeledSample sample) {
  PoolKey key{sample.sentence_id, sample.predicate_index, sample.labels};
  return pool.emplace(std::move(key), std::move(sample)).second;
}

inline void save_pool(const std::string& path, const ExtractionPool& pool,
                      const LabelAlphabet& alphabet, const nlohmann::json& meta) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write pool file: " + path);
  if (!meta.empty()) {
    nlohmann::json head;
    head["rankoie_meta"] = meta;
    out << head.dump() << "\n";
  }
  for (const auto& [key, s] : pool) {
    nlohmann::json line{{"sentence_id", s.sentence_id},
                        {"predicate_index", s.predicate_index},
                        {"label_sequence", alphabet.to_strings(s.labels)},
                        {"polarity", s.polarity},
                        {"source_iteration", s.source_iteration}};
    out << line.dump() << "\n";
  }
  if (!out) throw DataError("failed to write pool file: " + path);
}

struct LoadedPool {
  nlohmann::json meta = nlohmann::json::object();
  ExtractionPool pool;
};

inline LoadedPool load_pool(const std::string& path, const LabelAlphabet& alphabet) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("cannot open pool file: " + path);
  LoadedPool result;
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
      result.meta = j.at("rankoie_meta");
      continue;
    }
    LabeledSample s;
    try {
      s.sentence_id = j.at("sentence_id").get<std::string>();
      s.predicate_index = j.at("predicate_index").get<int>();
      s.labels = alphabet.parse_all(j.at("label_sequence").get<std::vector<std::string>>());
      s.polarity = j.at("polarity").get<int>();
      s.source_iteration = j.at("source_iteration").get<int>();
    } catch (const nlohmann::json::exception& e) {
      throw DataError("malformed pool entry at " + where + ": " + e.what());
    }
    if (s.polarity != 1 && s.polarity != -1) {
      throw DataError("polarity must be +1 or -1 at " + where);
    }
    pool_insert(result.pool, std::move(s));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Shared knobs for training and the iteration loop
// ---------------------------------------------------------------------------

struct LearnConfig {
  int mle_epochs = 50;
  int calib_epochs = 5;
  int patience = 2;
  int max_iterations = 10;
  int batch_size = 80;
  int beam_k = 5;
  bool positive_only = false;
  int workers = 1;
  std::uint64_t seed = 0;

  void validate() const {
    if (mle_epochs < 1) throw ConfigError("mle_epochs must be >= 1");
    if (calib_epochs < 1) throw ConfigError("calib_epochs must be >= 1");
    if (patience < 1) throw ConfigError("patience must be >= 1");
    if (max_iterations < 0) throw ConfigError("max_iterations must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (beam_k < 1) throw ConfigError("beam_k must be >= 1");
  }
};

// ---------------------------------------------------------------------------
// Dataset-wide generation (parallel across sentences, output in input order)
// ---------------------------------------------------------------------------

inline std::vector<GeneratedExtraction> generate_dataset(const Model& m, const Dataset& d, int k,
                                                         int workers) {
  std::vector<std::vector<GeneratedExtraction>> per_sentence(d.sentences.size());
  parallel_chunks(d.sentences.size(), 8, workers,
                  [&](std::size_t, std::size_t begin, std::size_t end) {
                    for (std::size_t i = begin; i < end; ++i) {
                      per_sentence[i] = generate_for_sentence(m, d.sentences[i], k);
                    }
                  });
  std::vector<GeneratedExtraction> out;
  for (auto& part : per_sentence) {
    out.insert(out.end(), std::make_move_iterator(part.begin()),
               std::make_move_iterator(part.end()));
  }
  return out;
}

inline double dev_generate_auc(const Model& m, const Dataset& dev, int k, int workers) {
  const std::vector<GeneratedExtraction> preds = generate_dataset(m, dev, k, workers);
  return evaluate_extractions(preds, dev).auc;
}

// ---------------------------------------------------------------------------
// MLE pretraining
// ---------------------------------------------------------------------------

struct MleEpoch {
  int epoch = 0;
  double train_loss = 0.0;
  double dev_loss = 0.0;
};

struct MleResult {
  Model model;
  std::vector<MleEpoch> history;
  int best_epoch = 0;
  std::size_t skipped_extractions = 0;
};

namespace detail {

struct MleItems {
  std::vector<MleItem> items;
  std::size_t skipped = 0;
};

// One training item per (sentence, gold extraction), labeled by the
// extraction's BIO encoding and conditioned on its predicate head. Gold
// extractions that exceed the model's argument budget are skipped.
inline MleItems build_mle_items(const Dataset& d, const LabelAlphabet& alphabet) {
  MleItems out;
  for (const Sentence& s : d.sentences) {
    const std::vector<Extraction>* gold = d.gold_for(s.id);
    if (!gold) continue;
    for (const Extraction& x : *gold) {
      if (x.arg_count() > alphabet.max_args()) {
        ++out.skipped;
        continue;
      }
      MleItem item;
      item.sentence = &s;
      item.predicate_index = x.predicate.head;
      item.gold = encode(s.length(), x, alphabet);
      out.items.push_back(std::move(item));
    }
  }
  return out;
}

inline std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(idx);
  return idx;
}

}  // namespace detail

inline MleResult train_mle(const Dataset& train, const Dataset& dev, const ModelConfig& mc,
                           const LearnConfig& lc, std::ostream* metrics = nullptr) {
  mc.validate();
  lc.validate();
  const LabelAlphabet alphabet(mc.max_args);
  detail::MleItems train_items = detail::build_mle_items(train, alphabet);
  detail::MleItems dev_items = detail::build_mle_items(dev, alphabet);
  if (train_items.skipped > 0) {
    log_warn(std::to_string(train_items.skipped) +
             " gold extraction(s) exceed max_args and were skipped for training");
  }
  if (train_items.items.empty()) throw DataError("no usable training extractions");

  MleResult result;
  result.model = Model::init(mc, build_vocab(train));
  result.skipped_extractions = train_items.skipped;
  OptimizerState opt = OptimizerState::like(result.model.params);

  Model best = result.model;
  double best_metric = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  int since_improved = 0;
  std::uint64_t step = 0;

  for (int epoch = 1; epoch <= lc.mle_epochs; ++epoch) {
    const std::vector<std::size_t> order =
        detail::shuffled_indices(train_items.items.size(), derive_seed(lc.seed, "shuffle.mle",
                                                                       static_cast<std::uint64_t>(epoch)));
    double loss_weighted = 0.0;
    std::size_t tokens_total = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(lc.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(lc.batch_size));
      std::vector<MleItem> batch;
      batch.reserve(stop - start);
      std::size_t batch_tokens = 0;
      for (std::size_t i = start; i < stop; ++i) {
        batch.push_back(train_items.items[order[i]]);
        batch_tokens += batch.back().gold.size();
      }
      BatchOptions bo;
      bo.train = true;
      bo.dropout_seed = derive_seed(lc.seed, "dropout", step);
      bo.workers = lc.workers;
      Gradients grads = Gradients::like(result.model.params);
      const double loss = mle_loss(result.model, batch, bo, &grads);
      adadelta_step(result.model, opt, grads);
      loss_weighted += loss * static_cast<double>(batch_tokens);
      tokens_total += batch_tokens;
      ++step;
    }
    const double train_loss = loss_weighted / static_cast<double>(tokens_total);

    BatchOptions eval_bo;
    eval_bo.train = false;
    eval_bo.workers = lc.workers;
    const double dev_loss = dev_items.items.empty()
                                ? train_loss
                                : mle_loss(result.model, dev_items.items, eval_bo, nullptr);
    result.history.push_back(MleEpoch{epoch, train_loss, dev_loss});
    if (metrics) {
      (*metrics) << "mle epoch " << epoch << " train_loss " << train_loss << " dev_loss "
                 << dev_loss << "\n";
    }

    if (dev_loss < best_metric) {
      best_metric = dev_loss;
      best = result.model;
      best_epoch = epoch;
      since_improved = 0;
    } else {
      ++since_improved;
      if (since_improved >= lc.patience) break;
    }
  }
  result.model = std::move(best);
  result.best_epoch = best_epoch;
  return result;
}

// ---------------------------------------------------------------------------
// Annotation: polarity against gold under the evaluation matcher
// ---------------------------------------------------------------------------

inline std::vector<LabeledSample> annotate(std::span<const GeneratedExtraction> candidates,
                                           const Dataset& gold, int source_iteration) {
  std::vector<LabeledSample> out;
  out.reserve(candidates.size());
  for (const GeneratedExtraction& c : candidates) {
    if (!gold.find_sentence(c.extraction.sentence_id)) {
      throw DataError("candidate references unknown sentence '" + c.extraction.sentence_id + "'");
    }
    int polarity = -1;
    if (const std::vector<Extraction>* gl = gold.gold_for(c.extraction.sentence_id)) {
      for (const Extraction& g : *gl) {
        if (match(c.extraction, g)) {
          polarity = 1;
          break;
        }
      }
    }
    out.push_back(LabeledSample{c.extraction.sentence_id, c.predicate_index, c.labels, polarity,
                                source_iteration});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Hinge calibration
// ---------------------------------------------------------------------------

struct CalibEpoch {
  int epoch = 0;  // 0 records the unmodified input model
  double hinge_loss = 0.0;
  double dev_auc = 0.0;
};

struct CalibrationResult {
  Model model;
  std::vector<CalibEpoch> history;
  int best_epoch = 0;
  double best_dev_auc = 0.0;
};

// Fine-tunes a copy of `model` on the pool with the margin loss, eval-mode
// forward passes (confidences are deployed without dropout, so they are
// calibrated without it), and selects the epoch with the best dev generation
// AUC. Epoch 0, the unmodified model, competes in the selection, so a round
// never returns a model worse on dev than its input.
inline CalibrationResult calibrate(const Model& model, const ExtractionPool& pool,
                                   const Dataset& data, const Dataset& dev, const LearnConfig& lc,
                                   std::uint64_t round_seed, std::ostream* metrics = nullptr,
                                   const std::string& log_prefix = "calib") {
  lc.validate();
  if (pool.empty()) throw DataError("calibration pool is empty");

  std::vector<HingeItem> samples;
  samples.reserve(pool.size());
  for (const auto& [key, s] : pool) {
    if (lc.positive_only && s.polarity < 0) continue;
    const Sentence* sentence = data.find_sentence(s.sentence_id);
    if (!sentence) throw DataError("pool references unknown sentence '" + s.sentence_id + "'");
    samples.push_back(HingeItem{sentence, s.predicate_index, s.labels, s.polarity});
  }
  if (samples.empty()) {
    throw DataError("calibration pool has no usable samples (positive_only with no positives)");
  }

  CalibrationResult result;
  result.model = model;
  OptimizerState opt = OptimizerState::like(result.model.params);

  Model best = result.model;
  double best_auc = dev_generate_auc(result.model, dev, lc.beam_k, lc.workers);
  int best_epoch = 0;
  result.history.push_back(CalibEpoch{0, 0.0, best_auc});
  if (metrics) {
    (*metrics) << log_prefix << " epoch 0 dev_auc " << best_auc << "\n";
  }

  for (int epoch = 1; epoch <= lc.calib_epochs; ++epoch) {
    const std::vector<std::size_t> order = detail::shuffled_indices(
        samples.size(), derive_seed(round_seed, "shuffle.calib", static_cast<std::uint64_t>(epoch)));
    double loss_weighted = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(lc.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(lc.batch_size));
      std::vector<HingeItem> batch;
      batch.reserve(stop - start);
      for (std::size_t i = start; i < stop; ++i) batch.push_back(samples[order[i]]);
      BatchOptions bo;
      bo.train = false;
      bo.workers = lc.workers;
      Gradients grads = Gradients::like(result.model.params);
      const double loss = hinge_loss(result.model, batch, bo, &grads);
      adadelta_step(result.model, opt, grads);
      loss_weighted += loss * static_cast<double>(batch.size());
    }
    const double epoch_loss = loss_weighted / static_cast<double>(samples.size());
    const double auc_now = dev_generate_auc(result.model, dev, lc.beam_k, lc.workers);
    result.history.push_back(CalibEpoch{epoch, epoch_loss, auc_now});
    if (metrics) {
      (*metrics) << log_prefix << " epoch " << epoch << " hinge_loss " << epoch_loss << " dev_auc "
                 << auc_now << "\n";
    }
    if (auc_now > best_auc) {
      best_auc = auc_now;
      best = result.model;
      best_epoch = epoch;
    }
  }
  result.model = std::move(best);
  result.best_epoch = best_epoch;
  result.best_dev_auc = best_auc;
  return result;
}

// ---------------------------------------------------------------------------
// Iterative loop: generate, annotate, pool, calibrate, evaluate, repeat
// ---------------------------------------------------------------------------

struct IterationState {
  int iteration = 0;  // completed iterations
  Model model;        // best model over the run (dev generation AUC)
  ExtractionPool pool;
  std::vector<double> dev_auc_history;
  int best_iteration = 0;  // 0 means the starting model was never beaten
  double best_dev_auc = 0.0;
};

struct IterateOptions {
  std::string run_dir;  // empty: keep everything in memory, write nothing
  std::string config_hash;
  bool resume = false;
  std::ostream* metrics = nullptr;
};

namespace detail {

inline std::string iter_dir(const std::string& run_dir, int t) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "iter_%03d", t);
  return run_dir + "/" + buf;
}

inline void write_manifest(const std::string& run_dir, const std::string& config_hash,
                           const IterationState& state, int since_improved) {
  nlohmann::json m;
  m["config_hash"] = config_hash;
  m["iterations"] = state.iteration;
  m["dev_auc_history"] = state.dev_auc_history;
  m["best_iteration"] = state.best_iteration;
  m["best_dev_auc"] = state.best_dev_auc;
  m["patience_counter"] = since_improved;
  std::ofstream out(run_dir + "/manifest.json");
  if (!out) throw DataError("cannot write manifest in " + run_dir);
  out << m.dump(2) << "\n";
}

}  // namespace detail

inline IterationState iterate(const Dataset& train, const Dataset& dev, const Model& base,
                              const LearnConfig& lc, const IterateOptions& opt = {}) {
  lc.validate();
  const LabelAlphabet alphabet = base.alphabet();

  IterationState state;
  state.model = base;
  Model current = base;
  int since_improved = 0;
  int start_iteration = 1;

  const bool with_artifacts = !opt.run_dir.empty();
  if (with_artifacts) std::filesystem::create_directories(opt.run_dir);

  if (with_artifacts && opt.resume &&
      std::filesystem::exists(opt.run_dir + "/manifest.json")) {
    std::ifstream in(opt.run_dir + "/manifest.json");
    nlohmann::json m;
    try {
      in >> m;
    } catch (const nlohmann::json::exception& e) {
      throw DataError("malformed manifest in " + opt.run_dir + ": " + e.what());
    }
    if (m.at("config_hash").get<std::string>() != opt.config_hash) {
      throw ConfigError("run directory " + opt.run_dir +
                        " was produced under a different configuration; refusing to resume");
    }
    state.iteration = m.at("iterations").get<int>();
    state.dev_auc_history = m.at("dev_auc_history").get<std::vector<double>>();
    state.best_iteration = m.at("best_iteration").get<int>();
    state.best_dev_auc = m.at("best_dev_auc").get<double>();
    since_improved = m.at("patience_counter").get<int>();
    if (state.iteration > 0) {
      const std::string last_dir = detail::iter_dir(opt.run_dir, state.iteration);
      current = load_checkpoint(last_dir + "/model.ckpt").model;
      state.pool = load_pool(last_dir + "/pool.jsonl", alphabet).pool;
      state.model = state.best_iteration > 0
                        ? load_checkpoint(detail::iter_dir(opt.run_dir, state.best_iteration) +
                                          "/model.ckpt")
                              .model
                        : base;
    }
    start_iteration = state.iteration + 1;
    log_info("resuming run at iteration " + std::to_string(start_iteration));
  }

  if (state.iteration == 0) {
    state.best_dev_auc = dev_generate_auc(base, dev, lc.beam_k, lc.workers);
    state.best_iteration = 0;
    if (opt.metrics) (*opt.metrics) << "iterate base dev_auc " << state.best_dev_auc << "\n";
  }

  for (int t = start_iteration; t <= lc.max_iterations; ++t) {
    if (since_improved >= lc.patience) break;

    const std::vector<GeneratedExtraction> generated =
        generate_dataset(current, train, lc.beam_k, lc.workers);
    const std::vector<LabeledSample> samples = annotate(generated, train, t);
    std::size_t added = 0;
    std::size_t positives = 0;
    for (const LabeledSample& s : samples) {
      if (s.polarity > 0) ++positives;
      if (pool_insert(state.pool, s)) ++added;
    }

    CalibrationResult calib =
        calibrate(current, state.pool, train, dev, lc, derive_seed(lc.seed, "calib.round",
                                                                   static_cast<std::uint64_t>(t)),
                  opt.metrics, "iter " + std::to_string(t) + " calib");
    current = std::move(calib.model);
    const double dev_auc = calib.best_dev_auc;

    state.dev_auc_history.push_back(dev_auc);
    state.iteration = t;
    if (dev_auc > state.best_dev_auc) {
      state.best_dev_auc = dev_auc;
      state.best_iteration = t;
      state.model = current;
      since_improved = 0;
    } else {
      ++since_improved;
    }
    if (opt.metrics) {
      (*opt.metrics) << "iterate " << t << " dev_auc " << dev_auc << " pool " << state.pool.size()
                     << " generated " << generated.size() << " positives " << positives
                     << " new " << added << "\n";
    }

    if (with_artifacts) {
      const std::string dir = detail::iter_dir(opt.run_dir, t);
      std::filesystem::create_directories(dir);
      nlohmann::json meta{{"config_hash", opt.config_hash}, {"iteration", t}};
      save_checkpoint(current, dir + "/model.ckpt", opt.config_hash);
      nlohmann::json dump_meta = meta;
      dump_meta["kind"] = "extractions";
      save_extraction_dump(dir + "/generated.jsonl", generated, alphabet, dump_meta);
      nlohmann::json pool_meta = meta;
      pool_meta["kind"] = "pool";
      save_pool(dir + "/pool.jsonl", state.pool, alphabet, pool_meta);
      nlohmann::json it_metrics{{"iteration", t},
                                {"dev_auc", dev_auc},
                                {"pool_size", state.pool.size()},
                                {"generated", generated.size()},
                                {"positives", positives},
                                {"config_hash", opt.config_hash}};
      std::ofstream mo(dir + "/metrics.json");
      if (!mo) throw DataError("cannot write metrics in " + dir);
      mo << it_metrics.dump(2) << "\n";
      detail::write_manifest(opt.run_dir, opt.config_hash, state, since_improved);
    }
  }
  return state;
}

}  // namespace rankoie
