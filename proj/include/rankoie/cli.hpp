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
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rankoie/common.hpp"
#include "rankoie/corpus.hpp"
#include "rankoie/decoder.hpp"
#include "rankoie/evaluation.hpp"
#include "rankoie/learning.hpp"
#include "rankoie/tagger.hpp"

namespace rankoie {

// ---------------------------------------------------------------------------
// Run configuration. Flat key=value config file, overridable by flags;
// precedence is flag > file > default.
// ---------------------------------------------------------------------------

struct RunConfig {
  ModelConfig model;
  LearnConfig learn;
  std::string train_path;
  std::string dev_path;
  std::string test_path;
  std::string run_dir;
  std::uint64_t seed = 0;
  int workers = 1;
  bool force = false;

  // Keeps the per-component copies of seed and workers in sync.
  void finalize() {
    model.seed = seed;
    learn.seed = seed;
    learn.workers = workers;
    model.validate();
    learn.validate();
  }
};

namespace detail {

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + key + "' expects a boolean, got '" + v + "'");
}

inline long long parse_int(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    const long long n = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' expects an integer, got '" + v + "'");
  }
}

inline double parse_real(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' expects a number, got '" + v + "'");
  }
}

inline std::string format_real(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace detail

inline void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "word_dim") cfg.model.word_dim = static_cast<int>(detail::parse_int(value, key));
  else if (key == "predicate_indicator_dim")
    cfg.model.predicate_indicator_dim = static_cast<int>(detail::parse_int(value, key));
  else if (key == "hidden_dim") cfg.model.hidden_dim = static_cast<int>(detail::parse_int(value, key));
  else if (key == "num_layers") cfg.model.num_layers = static_cast<int>(detail::parse_int(value, key));
  else if (key == "recurrent_dropout") cfg.model.recurrent_dropout = detail::parse_real(value, key);
  else if (key == "max_args") cfg.model.max_args = static_cast<int>(detail::parse_int(value, key));
  else if (key == "beam_k") cfg.learn.beam_k = static_cast<int>(detail::parse_int(value, key));
  else if (key == "batch_size") cfg.learn.batch_size = static_cast<int>(detail::parse_int(value, key));
  else if (key == "mle_epochs") cfg.learn.mle_epochs = static_cast<int>(detail::parse_int(value, key));
  else if (key == "calib_epochs") cfg.learn.calib_epochs = static_cast<int>(detail::parse_int(value, key));
  else if (key == "patience") cfg.learn.patience = static_cast<int>(detail::parse_int(value, key));
  else if (key == "max_iterations")
    cfg.learn.max_iterations = static_cast<int>(detail::parse_int(value, key));
  else if (key == "positive_only") cfg.learn.positive_only = detail::parse_bool(value, key);
  else if (key == "train_path") cfg.train_path = value;
  else if (key == "dev_path") cfg.dev_path = value;
  else if (key == "test_path") cfg.test_path = value;
  else if (key == "run_dir") cfg.run_dir = value;
  else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(detail::parse_int(value, key));
  else if (key == "workers") cfg.workers = static_cast<int>(detail::parse_int(value, key));
  else throw ConfigError("unknown config key '" + key + "'");
}

inline void load_config_file(const std::string& path, RunConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("cannot open config file: " + path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line.resize(hash_pos);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    line = line.substr(first, last - first + 1);
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": expected key=value");
    }
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      if (b == std::string::npos) return std::string();
      const auto e = s.find_last_not_of(" \t");
      return s.substr(b, e - b + 1);
    };
    apply_config_entry(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

// Hash over every setting that affects artifact content. The worker count,
// run directory, and force flag change scheduling or plumbing only, so they
// stay out; two runs with equal hashes produce interchangeable artifacts.
inline std::string config_hash(const RunConfig& cfg) {
  std::ostringstream canon;
  canon << "batch_size=" << cfg.learn.batch_size << "\n"
        << "beam_k=" << cfg.learn.beam_k << "\n"
        << "calib_epochs=" << cfg.learn.calib_epochs << "\n"
        << "dev_path=" << cfg.dev_path << "\n"
        << "hidden_dim=" << cfg.model.hidden_dim << "\n"
        << "max_args=" << cfg.model.max_args << "\n"
        << "max_iterations=" << cfg.learn.max_iterations << "\n"
        << "mle_epochs=" << cfg.learn.mle_epochs << "\n"
        << "num_layers=" << cfg.model.num_layers << "\n"
        << "patience=" << cfg.learn.patience << "\n"
        << "positive_only=" << (cfg.learn.positive_only ? "true" : "false") << "\n"
        << "predicate_indicator_dim=" << cfg.model.predicate_indicator_dim << "\n"
        << "recurrent_dropout=" << detail::format_real(cfg.model.recurrent_dropout) << "\n"
        << "seed=" << cfg.seed << "\n"
        << "test_path=" << cfg.test_path << "\n"
        << "train_path=" << cfg.train_path << "\n"
        << "word_dim=" << cfg.model.word_dim << "\n";
  return hex64(fnv1a64(canon.str()));
}

// Refuses artifacts produced under a different configuration unless --force.
inline void check_artifact_hash(const std::string& artifact_hash, const RunConfig& cfg,
                                const std::string& what) {
  if (artifact_hash.empty()) return;  // external artifact without provenance
  if (cfg.force) return;
  const std::string expected = config_hash(cfg);
  if (artifact_hash != expected) {
    throw ConfigError(what + " was produced under config hash " + artifact_hash +
                      " but the current config hashes to " + expected +
                      "; pass --force to use it anyway");
  }
}

inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const MissingArtifactError*>(&e)) return 3;
  if (dynamic_cast<const NumericError*>(&e)) return 4;
  if (dynamic_cast<const DataError*>(&e)) return 5;
  return 1;
}

namespace detail {

inline void require_path(const std::string& value, const std::string& name) {
  if (value.empty()) throw ConfigError("missing required setting '" + name + "'");
}

inline std::string artifact_path(const RunConfig& cfg, const std::string& flag_value,
                                 const std::string& default_name) {
  if (!flag_value.empty()) return flag_value;
  require_path(cfg.run_dir, "run_dir");
  return cfg.run_dir + "/" + default_name;
}

inline std::ofstream open_metrics_log(const RunConfig& cfg) {
  require_path(cfg.run_dir, "run_dir");
  std::filesystem::create_directories(cfg.run_dir);
  std::ofstream out(cfg.run_dir + "/metrics.log", std::ios::app);
  if (!out) throw DataError("cannot open metrics log in " + cfg.run_dir);
  return out;
}

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << j.dump(2) << "\n";
  if (!out) throw DataError("failed to write " + path);
}

inline Model load_model_artifact(const std::string& path, const RunConfig& cfg,
                                 const std::string& what) {
  LoadedCheckpoint ck = load_checkpoint(path);
  check_artifact_hash(ck.config_hash, cfg, what + " '" + path + "'");
  return std::move(ck.model);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// convert: released-benchmark CoNLL files -> corpus JSON-lines
// ---------------------------------------------------------------------------

struct ConvertOptions {
  std::string input_dir;
  std::string output_dir;
  bool clean_train = true;
  bool clean_dev = true;
  bool clean_test = true;
};

namespace detail {

struct ConllStats {
  std::size_t blocks = 0;
  std::size_t malformed = 0;
  std::size_t no_predicate = 0;
  std::size_t multi_instance = 0;
};

struct ConllSentence {
  std::vector<std::string> tokens;
  std::vector<Extraction> extractions;
  std::vector<int> predicate_heads;
};

inline std::vector<std::string> split_columns(const std::string& line) {
  std::vector<std::string> cols;
  if (line.find('\t') != std::string::npos) {
    std::size_t begin = 0;
    for (;;) {
      const std::size_t tab = line.find('\t', begin);
      if (tab == std::string::npos) {
        cols.push_back(line.substr(begin));
        break;
      }
      cols.push_back(line.substr(begin, tab - begin));
      begin = tab + 1;
    }
  } else {
    std::istringstream ss(line);
    std::string col;
    while (ss >> col) cols.push_back(col);
  }
  return cols;
}

// Label format "<role>-B" / "<role>-I" / "O" with role "P" or "A<k>".
// Returns (role, is_begin); role -1 encodes O. Throws on anything else.
inline std::pair<int, bool> parse_conll_label(const std::string& label) {
  if (label == "O") return {-1, false};
  const std::size_t dash = label.rfind('-');
  if (dash == std::string::npos || dash + 2 != label.size()) {
    throw DataError("unrecognized label '" + label + "'");
  }
  const char kind = label[dash + 1];
  if (kind != 'B' && kind != 'I') throw DataError("unrecognized label '" + label + "'");
  const std::string role = label.substr(0, dash);
  if (role == "P") return {0, kind == 'B'};
  if (role.size() >= 2 && role[0] == 'A') {
    int idx = 0;
    for (std::size_t i = 1; i < role.size(); ++i) {
      if (role[i] < '0' || role[i] > '9') throw DataError("unrecognized label '" + label + "'");
      idx = idx * 10 + (role[i] - '0');
    }
    return {idx + 1, kind == 'B'};
  }
  throw DataError("unrecognized label '" + label + "'");
}

// One block of rows = one (sentence, extraction) instance.
inline void absorb_conll_block(const std::vector<std::vector<std::string>>& rows,
                               std::map<std::string, ConllSentence>& sentences,
                               std::vector<std::string>& order, ConllStats& stats) {
  ++stats.blocks;
  if (rows.front().size() < 8) throw DataError("row has fewer than 8 columns");
  const std::string sent_id = rows.front()[5];
  std::vector<std::string> tokens;
  tokens.reserve(rows.size());
  std::vector<std::pair<int, bool>> labels;
  labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() < 8) throw DataError("row has fewer than 8 columns");
    if (r[5] != sent_id) throw DataError("sentence id changes inside a block");
    tokens.push_back(r[1]);
    labels.push_back(parse_conll_label(r[7]));
  }
  int head_pred = -1;
  try {
    head_pred = static_cast<int>(std::stoll(rows.front().at(4)));
  } catch (const std::exception&) {
    head_pred = -1;
  }

  // First maximal run per role; a second run of the same role marks the
  // extraction as multi-instance, which the benchmark cleaning removes.
  const int n = static_cast<int>(tokens.size());
  std::map<int, Span> runs;
  bool multi_instance = false;
  int t = 0;
  while (t < n) {
    const int role = labels[static_cast<std::size_t>(t)].first;
    if (role < 0) {
      ++t;
      continue;
    }
    int end = t;
    while (end + 1 < n) {
      const auto [next_role, next_begin] = labels[static_cast<std::size_t>(end + 1)];
      if (next_role != role || next_begin) break;
      ++end;
    }
    if (runs.count(role)) {
      multi_instance = true;
    } else {
      runs[role] = Span{t, end, t};
    }
    t = end + 1;
  }

  auto it = sentences.find(sent_id);
  if (it == sentences.end()) {
    it = sentences.emplace(sent_id, ConllSentence{tokens, {}, {}}).first;
    order.push_back(sent_id);
  } else if (it->second.tokens != tokens) {
    throw DataError("token mismatch across blocks of sentence '" + sent_id + "'");
  }

  if (!runs.count(0)) {
    ++stats.no_predicate;
    return;
  }
  if (multi_instance) {
    ++stats.multi_instance;
    return;
  }

  Extraction x;
  x.sentence_id = sent_id;
  x.predicate = runs.at(0);
  if (head_pred >= x.predicate.start && head_pred <= x.predicate.end) {
    x.predicate.head = head_pred;
  }
  for (const auto& [role, span] : runs) {
    if (role >= 1) x.args.push_back(span);
  }
  it->second.predicate_heads.push_back(x.predicate.head);
  it->second.extractions.push_back(std::move(x));
}

inline Dataset parse_conll_file(const std::string& path, ConllStats& stats) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("cannot open benchmark file: " + path);
  std::map<std::string, ConllSentence> sentences;
  std::vector<std::string> order;
  std::vector<std::vector<std::string>> block;
  std::string line;
  bool first_content = true;

  auto flush = [&]() {
    if (block.empty()) return;
    try {
      absorb_conll_block(block, sentences, order, stats);
    } catch (const DataError& e) {
      ++stats.malformed;
      const std::string near =
          block.front().size() > 5 ? block.front()[5] : std::string("?");
      log_warn(path + ": skipping malformed block near sentence '" + near + "': " + e.what());
    }
    block.clear();
  };

  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const bool blank = line.find_first_not_of(" \t") == std::string::npos;
    if (blank) {
      flush();
      continue;
    }
    if (first_content) {
      first_content = false;
      if (line.rfind("word_id", 0) == 0) continue;  // column header
    }
    block.push_back(split_columns(line));
  }
  flush();

  Dataset d;
  for (const std::string& id : order) {
    ConllSentence& cs = sentences.at(id);
    Sentence s;
    s.id = id;
    s.tokens = std::move(cs.tokens);
    std::vector<int> heads = cs.predicate_heads;
    std::sort(heads.begin(), heads.end());
    heads.erase(std::unique(heads.begin(), heads.end()), heads.end());
    for (int h : heads) {
      if (h >= 0 && h < s.length()) s.candidate_predicates.push_back(h);
    }
    d.gold[s.id] = std::move(cs.extractions);
    d.sentences.push_back(std::move(s));
  }
  d.rebuild_index();
  return d;
}

inline std::string find_split_file(const std::string& dir, const std::string& split) {
  for (const char* pattern : {".oie.conll", ".conll", ".oie"}) {
    const std::string candidate = dir + "/" + split + pattern;
    if (std::filesystem::exists(candidate)) return candidate;
  }
  return {};
}

}  // namespace detail

inline void cmd_convert(const RunConfig& cfg, const ConvertOptions& opt) {
  (void)cfg;
  detail::require_path(opt.input_dir, "--input");
  detail::require_path(opt.output_dir, "--output");
  if (!std::filesystem::is_directory(opt.input_dir)) {
    throw MissingArtifactError("benchmark directory not found: " + opt.input_dir);
  }
  std::filesystem::create_directories(opt.output_dir);

  const std::vector<std::pair<std::string, bool>> splits{
      {"train", opt.clean_train}, {"dev", opt.clean_dev}, {"test", opt.clean_test}};
  bool any = false;
  for (const auto& [split, do_clean] : splits) {
    const std::string src = detail::find_split_file(opt.input_dir, split);
    if (src.empty()) continue;
    any = true;
    detail::ConllStats stats;
    Dataset raw = detail::parse_conll_file(src, stats);
    const std::size_t raw_extractions = raw.extraction_count();
    Dataset final_ds = raw;
    CleanStats clean_stats;
    if (do_clean) final_ds = clean(raw, &clean_stats);
    const std::string out_path = opt.output_dir + "/" + split + ".jsonl";
    save_dataset(final_ds, out_path);
    if (stats.malformed > 0) {
      log_warn(split + ": " + std::to_string(stats.malformed) + " malformed block(s) skipped");
    }
    log_warn(split +
             ": argument head indices are not present in the benchmark format; spans default "
             "head = start (head-inclusion scoring degrades to start-inclusion)");
    std::cout << "convert " << split << ": sentences=" << final_ds.sentences.size()
              << " extractions=" << final_ds.extraction_count() << " (raw_extractions="
              << raw_extractions << " blocks=" << stats.blocks << " malformed=" << stats.malformed
              << " no_predicate=" << stats.no_predicate
              << " multi_instance=" << stats.multi_instance << ") -> " << out_path << "\n";
  }
  if (!any) {
    throw MissingArtifactError("no train/dev/test benchmark files found in " + opt.input_dir);
  }
}

// ---------------------------------------------------------------------------
// train: MLE pretraining of the base model
// ---------------------------------------------------------------------------

inline void cmd_train(const RunConfig& cfg) {
  detail::require_path(cfg.train_path, "train_path");
  Dataset train = load_dataset(cfg.train_path);
  Dataset dev;
  if (!cfg.dev_path.empty()) dev = load_dataset(cfg.dev_path);

  std::ofstream metrics = detail::open_metrics_log(cfg);
  MleResult result = train_mle(train, dev, cfg.model, cfg.learn, &metrics);

  const std::string hash = config_hash(cfg);
  const std::string ckpt = cfg.run_dir + "/base.ckpt";
  save_checkpoint(result.model, ckpt, hash);

  nlohmann::json epochs = nlohmann::json::array();
  for (const MleEpoch& e : result.history) {
    epochs.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"dev_loss", e.dev_loss}});
  }
  detail::write_json_file(cfg.run_dir + "/train_metrics.json",
                          {{"config_hash", hash},
                           {"best_epoch", result.best_epoch},
                           {"skipped_extractions", result.skipped_extractions},
                           {"epochs", epochs}});
  std::cout << "train: epochs=" << result.history.size() << " best_epoch=" << result.best_epoch
            << " dev_loss=" << result.history[static_cast<std::size_t>(result.best_epoch - 1)].dev_loss
            << " checkpoint=" << ckpt << "\n";
}

// ---------------------------------------------------------------------------
// generate: decode a dataset into an extraction dump
// ---------------------------------------------------------------------------

struct GenerateOptions {
  std::string checkpoint;
  std::string data;
  std::string output;
};

inline void cmd_generate(const RunConfig& cfg, const GenerateOptions& opt) {
  const std::string ckpt = detail::artifact_path(cfg, opt.checkpoint, "base.ckpt");
  const std::string data_path = opt.data.empty() ? cfg.train_path : opt.data;
  detail::require_path(data_path, "--data");
  const std::string out_path = detail::artifact_path(cfg, opt.output, "generated.jsonl");

  Model model = detail::load_model_artifact(ckpt, cfg, "checkpoint");
  Dataset data = load_dataset(data_path);
  const std::vector<GeneratedExtraction> items =
      generate_dataset(model, data, cfg.learn.beam_k, cfg.workers);
  const std::string hash = config_hash(cfg);
  save_extraction_dump(out_path, items, model.alphabet(),
                       {{"kind", "extractions"}, {"config_hash", hash}, {"data", data_path}});
  std::cout << "generate: extractions=" << items.size() << " sentences=" << data.sentences.size()
            << " output=" << out_path << "\n";
}

// ---------------------------------------------------------------------------
// calibrate: one hinge-calibration round over an annotated dump
// ---------------------------------------------------------------------------

struct CalibrateOptions {
  std::string checkpoint;
  std::string dump;
  std::string output;
};

inline void cmd_calibrate(const RunConfig& cfg, const CalibrateOptions& opt) {
  detail::require_path(cfg.train_path, "train_path");
  detail::require_path(cfg.dev_path, "dev_path");
  const std::string ckpt = detail::artifact_path(cfg, opt.checkpoint, "base.ckpt");
  const std::string dump_path = detail::artifact_path(cfg, opt.dump, "generated.jsonl");
  const std::string out_ckpt = detail::artifact_path(cfg, opt.output, "calibrated.ckpt");

  Model model = detail::load_model_artifact(ckpt, cfg, "checkpoint");
  Dataset train = load_dataset(cfg.train_path);
  Dataset dev = load_dataset(cfg.dev_path);
  ExtractionDump dump = load_extraction_dump(dump_path, model.alphabet());
  check_artifact_hash(dump.meta.value("config_hash", ""), cfg, "extraction dump '" + dump_path + "'");

  ExtractionPool pool;
  for (LabeledSample& s : annotate(dump.items, train, 0)) pool_insert(pool, std::move(s));

  std::ofstream metrics = detail::open_metrics_log(cfg);
  // Round index 1: a standalone calibration is the first round of a run.
  CalibrationResult result = calibrate(model, pool, train, dev, cfg.learn,
                                       derive_seed(cfg.seed, "calib.round", 1), &metrics, "calib");

  const std::string hash = config_hash(cfg);
  save_checkpoint(result.model, out_ckpt, hash);
  nlohmann::json epochs = nlohmann::json::array();
  for (const CalibEpoch& e : result.history) {
    epochs.push_back({{"epoch", e.epoch}, {"hinge_loss", e.hinge_loss}, {"dev_auc", e.dev_auc}});
  }
  detail::write_json_file(cfg.run_dir + "/calib_metrics.json",
                          {{"config_hash", hash},
                           {"pool_size", pool.size()},
                           {"best_epoch", result.best_epoch},
                           {"best_dev_auc", result.best_dev_auc},
                           {"epochs", epochs}});
  std::cout << "calibrate: pool=" << pool.size() << " best_epoch=" << result.best_epoch
            << " dev_auc=" << result.best_dev_auc << " checkpoint=" << out_ckpt << "\n";
}

// ---------------------------------------------------------------------------
// iterate: the full self-training loop
// ---------------------------------------------------------------------------

struct IterateCmdOptions {
  std::string checkpoint;
  bool resume = false;
};

inline void cmd_iterate(const RunConfig& cfg, const IterateCmdOptions& opt) {
  detail::require_path(cfg.train_path, "train_path");
  detail::require_path(cfg.dev_path, "dev_path");
  const std::string ckpt = detail::artifact_path(cfg, opt.checkpoint, "base.ckpt");

  Model base = detail::load_model_artifact(ckpt, cfg, "checkpoint");
  Dataset train = load_dataset(cfg.train_path);
  Dataset dev = load_dataset(cfg.dev_path);

  std::ofstream metrics = detail::open_metrics_log(cfg);
  IterateOptions io;
  io.run_dir = cfg.run_dir;
  io.config_hash = config_hash(cfg);
  io.resume = opt.resume;
  io.metrics = &metrics;
  IterationState state = iterate(train, dev, base, cfg.learn, io);

  const std::string out_ckpt = cfg.run_dir + "/iterated.ckpt";
  save_checkpoint(state.model, out_ckpt, io.config_hash);
  detail::write_json_file(cfg.run_dir + "/iterate_metrics.json",
                          {{"config_hash", io.config_hash},
                           {"iterations", state.iteration},
                           {"dev_auc_history", state.dev_auc_history},
                           {"best_iteration", state.best_iteration},
                           {"best_dev_auc", state.best_dev_auc},
                           {"pool_size", state.pool.size()}});
  std::cout << "iterate: iterations=" << state.iteration
            << " best_iteration=" << state.best_iteration << " dev_auc=" << state.best_dev_auc
            << " checkpoint=" << out_ckpt << "\n";
}

// ---------------------------------------------------------------------------
// evaluate: score a dump against gold
// ---------------------------------------------------------------------------

struct EvaluateOptions {
  std::string dump;
  std::string gold;
  std::string output;
};

inline void cmd_evaluate(const RunConfig& cfg, const EvaluateOptions& opt) {
  const std::string dump_path = detail::artifact_path(cfg, opt.dump, "generated.jsonl");
  const std::string gold_path = opt.gold.empty()
                                    ? (!cfg.test_path.empty() ? cfg.test_path : cfg.dev_path)
                                    : opt.gold;
  detail::require_path(gold_path, "--gold");
  const std::string out_path = detail::artifact_path(cfg, opt.output, "eval_report.json");

  Dataset gold = load_dataset(gold_path);
  const LabelAlphabet alphabet(cfg.model.max_args);
  ExtractionDump dump = load_extraction_dump(dump_path, alphabet);
  check_artifact_hash(dump.meta.value("config_hash", ""), cfg, "extraction dump '" + dump_path + "'");

  EvalReport report = evaluate_extractions(dump.items, gold);
  nlohmann::json j = eval_report_to_json(report);
  j["config_hash"] = config_hash(cfg);
  detail::write_json_file(out_path, j);
  std::cout << "evaluate: auc=" << report.auc << " best_f1=" << report.best_f1
            << " predicted=" << report.counts.predicted << " gold=" << report.counts.gold
            << " matched=" << report.counts.matched << " report=" << out_path << "\n";
}

// ---------------------------------------------------------------------------
// rerank: rescore a fixed dump with another model, then score
// ---------------------------------------------------------------------------

struct RerankOptions {
  std::string checkpoint;
  std::string dump;
  std::string gold;
  std::string output;
};

inline void cmd_rerank(const RunConfig& cfg, const RerankOptions& opt) {
  const std::string ckpt = detail::artifact_path(cfg, opt.checkpoint, "calibrated.ckpt");
  const std::string dump_path = detail::artifact_path(cfg, opt.dump, "generated.jsonl");
  const std::string gold_path = opt.gold.empty() ? cfg.dev_path : opt.gold;
  detail::require_path(gold_path, "--gold");
  const std::string out_path = detail::artifact_path(cfg, opt.output, "eval_rerank.json");

  Model model = detail::load_model_artifact(ckpt, cfg, "checkpoint");
  Dataset gold = load_dataset(gold_path);
  ExtractionDump dump = load_extraction_dump(dump_path, model.alphabet());
  check_artifact_hash(dump.meta.value("config_hash", ""), cfg, "extraction dump '" + dump_path + "'");

  EvalReport report = rerank_eval(dump.items, model, gold, cfg.workers);
  nlohmann::json j = eval_report_to_json(report);
  j["config_hash"] = config_hash(cfg);
  detail::write_json_file(out_path, j);
  std::cout << "rerank: auc=" << report.auc << " best_f1=" << report.best_f1
            << " predicted=" << report.counts.predicted << " report=" << out_path << "\n";
}

}  // namespace rankoie
