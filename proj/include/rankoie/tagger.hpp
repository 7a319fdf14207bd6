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

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "rankoie/bio.hpp"
#include "rankoie/common.hpp"
#include "rankoie/corpus.hpp"
#include "rankoie/tensors.hpp"

namespace rankoie {

struct ModelConfig {
  int word_dim = 100;
  int predicate_indicator_dim = 100;
  int hidden_dim = 64;
  int num_layers = 4;  // directions alternate: layers 0,2,... run left-to-right
  double recurrent_dropout = 0.1;
  int max_args = 4;
  std::uint64_t seed = 0;

  int input_dim() const { return word_dim + predicate_indicator_dim; }
  int alphabet_size() const { return 2 * (max_args + 1) + 1; }

  void validate() const {
    if (word_dim < 1 || predicate_indicator_dim < 1 || hidden_dim < 1) {
      throw ConfigError("model dimensions must be >= 1");
    }
    if (num_layers < 1) throw ConfigError("num_layers must be >= 1");
    if (!(recurrent_dropout >= 0.0 && recurrent_dropout < 1.0)) {
      throw ConfigError("recurrent_dropout must be in [0, 1)");
    }
    if (max_args < 1) throw ConfigError("max_args must be >= 1");
  }
};

inline nlohmann::json model_config_to_json(const ModelConfig& c) {
  return nlohmann::json{{"word_dim", c.word_dim},
                        {"predicate_indicator_dim", c.predicate_indicator_dim},
                        {"hidden_dim", c.hidden_dim},
                        {"num_layers", c.num_layers},
                        {"recurrent_dropout", c.recurrent_dropout},
                        {"max_args", c.max_args},
                        {"seed", c.seed}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.word_dim = j.at("word_dim").get<int>();
  c.predicate_indicator_dim = j.at("predicate_indicator_dim").get<int>();
  c.hidden_dim = j.at("hidden_dim").get<int>();
  c.num_layers = j.at("num_layers").get<int>();
  c.recurrent_dropout = j.at("recurrent_dropout").get<double>();
  c.max_args = j.at("max_args").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.validate();
  return c;
}

// Per-position label distributions; row t is a probability distribution over
// the label alphabet.
struct LabelDistributions {
  Eigen::MatrixXd probs;  // n x alphabet

  int length() const { return static_cast<int>(probs.rows()); }
  int alphabet_size() const { return static_cast<int>(probs.cols()); }
};

// ---------------------------------------------------------------------------
// Model: word embeddings, a 2-row predicate-indicator table, stacked
// single-direction recurrent layers with gated residual mixing of a linear
// input projection, and a label softmax over the last layer's outputs.
//
// Per-layer parameter names (prefix l<k>.):
//   w_x (4h x in), w_h (4h x h), b (4h)    cell pre-activations, gate order
//                                          [input; forget; candidate; output]
//   hw_wx (h x in), hw_wh (h x h), hw_b    mixing gate pre-activation
//   proj (h x in)                          input projection on the carry path
// ---------------------------------------------------------------------------

struct Model {
  ModelConfig config;
  Vocab vocab;
  Tensors params;

  LabelAlphabet alphabet() const { return LabelAlphabet(config.max_args); }

  static Model init(const ModelConfig& config, Vocab vocab) {
    config.validate();
    Model m;
    m.config = config;
    m.vocab = std::move(vocab);
    register_tensors(m.config, m.vocab.size(), m.params);
    initialize_values(m);
    return m;
  }

  // Registry order is the checkpoint payload order; keep it stable.
  static void register_tensors(const ModelConfig& c, int vocab_size, Tensors& t) {
    const std::size_t h = static_cast<std::size_t>(c.hidden_dim);
    t.add("word_emb", static_cast<std::size_t>(vocab_size), static_cast<std::size_t>(c.word_dim));
    t.add("pred_emb", 2, static_cast<std::size_t>(c.predicate_indicator_dim));
    for (int l = 0; l < c.num_layers; ++l) {
      const std::size_t in = static_cast<std::size_t>(l == 0 ? c.input_dim() : c.hidden_dim);
      const std::string p = "l" + std::to_string(l) + ".";
      t.add(p + "w_x", 4 * h, in);
      t.add(p + "w_h", 4 * h, h);
      t.add(p + "b", 4 * h, 1);
      t.add(p + "hw_wx", h, in);
      t.add(p + "hw_wh", h, h);
      t.add(p + "hw_b", h, 1);
      t.add(p + "proj", h, in);
    }
    t.add("w_label", static_cast<std::size_t>(c.alphabet_size()), h);
    t.add("b_label", static_cast<std::size_t>(c.alphabet_size()), 1);
  }

 private:
  static void fill_uniform(Tensors::View v, Rng& rng, double lo, double hi) {
    for (Eigen::Index c = 0; c < v.cols(); ++c) {
      for (Eigen::Index r = 0; r < v.rows(); ++r) v(r, c) = rng.uniform(lo, hi);
    }
  }

  static void fill_glorot(Tensors::View v, Rng& rng) {
    const double r = std::sqrt(6.0 / static_cast<double>(v.rows() + v.cols()));
    fill_uniform(v, rng, -r, r);
  }

  static void initialize_values(Model& m) {
    Rng rng(derive_seed(m.config.seed, "init"));
    const int h = m.config.hidden_dim;
    fill_uniform(m.params.view("word_emb"), rng, -0.1, 0.1);
    fill_uniform(m.params.view("pred_emb"), rng, -0.1, 0.1);
    for (int l = 0; l < m.config.num_layers; ++l) {
      const std::string p = "l" + std::to_string(l) + ".";
      fill_glorot(m.params.view(p + "w_x"), rng);
      fill_glorot(m.params.view(p + "w_h"), rng);
      auto b = m.params.view(p + "b");
      b.setZero();
      b.block(h, 0, h, 1).setConstant(1.0);  // forget gate opens at start
      fill_glorot(m.params.view(p + "hw_wx"), rng);
      fill_glorot(m.params.view(p + "hw_wh"), rng);
      m.params.view(p + "hw_b").setConstant(-1.0);  // bias the mix toward the carry path
      fill_glorot(m.params.view(p + "proj"), rng);
    }
    fill_glorot(m.params.view("w_label"), rng);
    m.params.view("b_label").setZero();
  }
};

using Gradients = Tensors;

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

struct LayerCache {
  Eigen::MatrixXd gates;    // 4h x n, post-nonlinearity [i; f; cand; o]
  Eigen::MatrixXd cell;     // h x n
  Eigen::MatrixXd hidden;   // h x n
  Eigen::MatrixXd mix;      // h x n, mixing gate value
  Eigen::MatrixXd carry;    // h x n, proj * input
  Eigen::MatrixXd out;      // h x n
  Eigen::VectorXd dropout;  // h, per-sequence recurrent mask (already scaled)
};

struct ForwardCache {
  Eigen::MatrixXd input;  // input_dim x n
  std::vector<int> word_ids;
  int predicate_index = 0;
  std::vector<LayerCache> layers;
  LabelDistributions dists;
};

namespace detail {

inline Eigen::ArrayXd sigmoid(const Eigen::ArrayXd& x) { return 1.0 / (1.0 + (-x).exp()); }

inline std::vector<int> layer_order(int layer, int n) {
  std::vector<int> order(static_cast<std::size_t>(n));
  if (layer % 2 == 0) {
    for (int t = 0; t < n; ++t) order[static_cast<std::size_t>(t)] = t;
  } else {
    for (int t = 0; t < n; ++t) order[static_cast<std::size_t>(t)] = n - 1 - t;
  }
  return order;
}

}  // namespace detail

// Row t of the result is the word embedding of token t concatenated with the
// indicator embedding selected by position equality with the candidate
// predicate index.
inline Eigen::MatrixXd embed(const Model& m, const Sentence& s, int predicate_index) {
  const int n = s.length();
  if (predicate_index < 0 || predicate_index >= n) {
    throw DataError("predicate index " + std::to_string(predicate_index) +
                    " out of bounds in sentence '" + s.id + "'");
  }
  auto word_emb = m.params.view("word_emb");
  auto pred_emb = m.params.view("pred_emb");
  Eigen::MatrixXd x(n, m.config.input_dim());
  for (int t = 0; t < n; ++t) {
    const int wid = m.vocab.lookup(s.tokens[static_cast<std::size_t>(t)]);
    x.row(t).head(m.config.word_dim) = word_emb.row(wid);
    x.row(t).tail(m.config.predicate_indicator_dim) = pred_emb.row(t == predicate_index ? 1 : 0);
  }
  return x;
}

// One recurrent pass. In train mode a recurrent dropout mask is sampled once
// per layer from `dropout_seed` and applied to the previous hidden state at
// every time step; eval mode (train=false) is a pure function of parameters
// and inputs.
inline LabelDistributions forward_pass(const Model& m, const Sentence& s, int predicate_index,
                                       bool train, std::uint64_t dropout_seed,
                                       ForwardCache* cache) {
  const int n = s.length();
  const int h = m.config.hidden_dim;
  const double p_drop = train ? m.config.recurrent_dropout : 0.0;

  Eigen::MatrixXd input = embed(m, s, predicate_index).transpose();  // input_dim x n
  Rng drop_rng(dropout_seed);

  if (cache) {
    cache->input = input;
    cache->predicate_index = predicate_index;
    cache->word_ids.resize(static_cast<std::size_t>(n));
    for (int t = 0; t < n; ++t) {
      cache->word_ids[static_cast<std::size_t>(t)] =
          m.vocab.lookup(s.tokens[static_cast<std::size_t>(t)]);
    }
    cache->layers.assign(static_cast<std::size_t>(m.config.num_layers), LayerCache{});
  }

  Eigen::MatrixXd layer_in = input;
  Eigen::MatrixXd layer_out;
  for (int l = 0; l < m.config.num_layers; ++l) {
    const std::string pfx = "l" + std::to_string(l) + ".";
    auto w_x = m.params.view(pfx + "w_x");
    auto w_h = m.params.view(pfx + "w_h");
    auto b = m.params.view(pfx + "b");
    auto hw_wx = m.params.view(pfx + "hw_wx");
    auto hw_wh = m.params.view(pfx + "hw_wh");
    auto hw_b = m.params.view(pfx + "hw_b");
    auto proj = m.params.view(pfx + "proj");

    Eigen::VectorXd drop = Eigen::VectorXd::Ones(h);
    if (p_drop > 0.0) {
      const double scale = 1.0 / (1.0 - p_drop);
      for (int i = 0; i < h; ++i) drop(i) = drop_rng.uniform() < p_drop ? 0.0 : scale;
    }

    Eigen::MatrixXd pre_x = w_x * layer_in;   // 4h x n
    pre_x.colwise() += b.col(0);
    Eigen::MatrixXd pre_gx = hw_wx * layer_in;  // h x n
    pre_gx.colwise() += hw_b.col(0);
    Eigen::MatrixXd carry = proj * layer_in;  // h x n

    Eigen::MatrixXd gates(4 * h, n), cell(h, n), hidden(h, n), mix(h, n), out(h, n);
    Eigen::VectorXd h_prev = Eigen::VectorXd::Zero(h);
    Eigen::VectorXd c_prev = Eigen::VectorXd::Zero(h);
    const std::vector<int> order = detail::layer_order(l, n);
    for (int j = 0; j < n; ++j) {
      const int t = order[static_cast<std::size_t>(j)];
      const Eigen::VectorXd h_masked = drop.cwiseProduct(h_prev);
      Eigen::VectorXd pre = pre_x.col(t) + w_h * h_masked;  // 4h
      Eigen::ArrayXd gi = detail::sigmoid(pre.head(h).array());
      Eigen::ArrayXd gf = detail::sigmoid(pre.segment(h, h).array());
      Eigen::ArrayXd gc = pre.segment(2 * h, h).array().tanh();
      Eigen::ArrayXd go = detail::sigmoid(pre.tail(h).array());
      Eigen::ArrayXd c_now = gf * c_prev.array() + gi * gc;
      Eigen::ArrayXd h_now = go * c_now.tanh();
      Eigen::ArrayXd g_mix = detail::sigmoid((pre_gx.col(t) + hw_wh * h_masked).array());
      Eigen::ArrayXd o_now = g_mix * h_now + (1.0 - g_mix) * carry.col(t).array();

      gates.col(t).head(h) = gi.matrix();
      gates.col(t).segment(h, h) = gf.matrix();
      gates.col(t).segment(2 * h, h) = gc.matrix();
      gates.col(t).tail(h) = go.matrix();
      cell.col(t) = c_now.matrix();
      hidden.col(t) = h_now.matrix();
      mix.col(t) = g_mix.matrix();
      out.col(t) = o_now.matrix();
      h_prev = h_now.matrix();
      c_prev = c_now.matrix();
    }

    if (cache) {
      LayerCache& lc = cache->layers[static_cast<std::size_t>(l)];
      lc.gates = std::move(gates);
      lc.cell = std::move(cell);
      lc.hidden = std::move(hidden);
      lc.mix = std::move(mix);
      lc.carry = std::move(carry);
      lc.out = out;
      lc.dropout = drop;
    }
    layer_out = std::move(out);
    layer_in = layer_out;
  }

  auto w_label = m.params.view("w_label");
  auto b_label = m.params.view("b_label");
  Eigen::MatrixXd logits = w_label * layer_out;  // L x n
  logits.colwise() += b_label.col(0);

  LabelDistributions dists;
  dists.probs.resize(n, logits.rows());
  for (int t = 0; t < n; ++t) {
    Eigen::ArrayXd z = logits.col(t).array();
    const double zmax = z.maxCoeff();
    Eigen::ArrayXd e = (z - zmax).exp();
    dists.probs.row(t) = (e / e.sum()).matrix().transpose();
  }
  if (cache) cache->dists = dists;
  return dists;
}

inline LabelDistributions forward(const Model& m, const Sentence& s, int predicate_index) {
  return forward_pass(m, s, predicate_index, /*train=*/false, /*dropout_seed=*/0, nullptr);
}

// Accumulates parameter gradients for a loss whose derivative with respect to
// the pre-softmax logits is `dlogits` (n x alphabet).
inline void backward_pass(const Model& m, const ForwardCache& cache, const Eigen::MatrixXd& dlogits,
                          Gradients& grads) {
  const int n = static_cast<int>(cache.input.cols());
  const int h = m.config.hidden_dim;

  const Eigen::MatrixXd& last_out = cache.layers.back().out;
  Eigen::MatrixXd dz = dlogits.transpose();  // L x n
  grads.view("w_label") += dz * last_out.transpose();
  grads.view("b_label").col(0) += dz.rowwise().sum();
  Eigen::MatrixXd d_out = m.params.view("w_label").transpose() * dz;  // h x n

  for (int l = m.config.num_layers - 1; l >= 0; --l) {
    const LayerCache& lc = cache.layers[static_cast<std::size_t>(l)];
    const std::string pfx = "l" + std::to_string(l) + ".";
    auto w_x = m.params.view(pfx + "w_x");
    auto w_h = m.params.view(pfx + "w_h");
    auto hw_wx = m.params.view(pfx + "hw_wx");
    auto hw_wh = m.params.view(pfx + "hw_wh");
    auto proj = m.params.view(pfx + "proj");
    const Eigen::MatrixXd& u =
        l == 0 ? cache.input : cache.layers[static_cast<std::size_t>(l - 1)].out;

    Eigen::MatrixXd d_pre(4 * h, n);    // cell pre-activation grads
    Eigen::MatrixXd d_pre_mix(h, n);    // mixing gate pre-activation grads
    Eigen::MatrixXd d_carry(h, n);      // carry path grads
    Eigen::MatrixXd h_masked_prev(h, n);  // dropout-masked h_{t-1} per position

    Eigen::VectorXd dh_carry = Eigen::VectorXd::Zero(h);
    Eigen::VectorXd dc_carry = Eigen::VectorXd::Zero(h);
    const std::vector<int> order = detail::layer_order(l, n);
    for (int j = n - 1; j >= 0; --j) {
      const int t = order[static_cast<std::size_t>(j)];
      const Eigen::VectorXd h_prev =
          j > 0 ? Eigen::VectorXd(lc.hidden.col(order[static_cast<std::size_t>(j - 1)]))
                : Eigen::VectorXd(Eigen::VectorXd::Zero(h));
      const Eigen::VectorXd c_prev =
          j > 0 ? Eigen::VectorXd(lc.cell.col(order[static_cast<std::size_t>(j - 1)]))
                : Eigen::VectorXd(Eigen::VectorXd::Zero(h));
      const Eigen::VectorXd h_masked = lc.dropout.cwiseProduct(h_prev);
      h_masked_prev.col(t) = h_masked;

      const Eigen::ArrayXd gi = lc.gates.col(t).head(h).array();
      const Eigen::ArrayXd gf = lc.gates.col(t).segment(h, h).array();
      const Eigen::ArrayXd gc = lc.gates.col(t).segment(2 * h, h).array();
      const Eigen::ArrayXd go = lc.gates.col(t).tail(h).array();
      const Eigen::ArrayXd g_mix = lc.mix.col(t).array();
      const Eigen::ArrayXd c_tanh = lc.cell.col(t).array().tanh();

      const Eigen::ArrayXd dout_t = d_out.col(t).array();
      const Eigen::ArrayXd dg_mix =
          dout_t * (lc.hidden.col(t).array() - lc.carry.col(t).array());
      const Eigen::ArrayXd dh = dout_t * g_mix + dh_carry.array();
      d_carry.col(t) = (dout_t * (1.0 - g_mix)).matrix();
      const Eigen::ArrayXd ds_mix = dg_mix * g_mix * (1.0 - g_mix);
      d_pre_mix.col(t) = ds_mix.matrix();

      const Eigen::ArrayXd do_ = dh * c_tanh;
      const Eigen::ArrayXd dc = dh * go * (1.0 - c_tanh.square()) + dc_carry.array();
      const Eigen::ArrayXd df = dc * c_prev.array();
      const Eigen::ArrayXd di = dc * gc;
      const Eigen::ArrayXd dgc = dc * gi;
      dc_carry = (dc * gf).matrix();

      Eigen::VectorXd da(4 * h);
      da.head(h) = (di * gi * (1.0 - gi)).matrix();
      da.segment(h, h) = (df * gf * (1.0 - gf)).matrix();
      da.segment(2 * h, h) = (dgc * (1.0 - gc.square())).matrix();
      da.tail(h) = (do_ * go * (1.0 - go)).matrix();
      d_pre.col(t) = da;

      Eigen::VectorXd d_masked = w_h.transpose() * da + hw_wh.transpose() * ds_mix.matrix();
      dh_carry = lc.dropout.cwiseProduct(d_masked);
    }

    grads.view(pfx + "w_x") += d_pre * u.transpose();
    grads.view(pfx + "w_h") += d_pre * h_masked_prev.transpose();
    grads.view(pfx + "b").col(0) += d_pre.rowwise().sum();
    grads.view(pfx + "hw_wx") += d_pre_mix * u.transpose();
    grads.view(pfx + "hw_wh") += d_pre_mix * h_masked_prev.transpose();
    grads.view(pfx + "hw_b").col(0) += d_pre_mix.rowwise().sum();
    grads.view(pfx + "proj") += d_carry * u.transpose();

    d_out = w_x.transpose() * d_pre + hw_wx.transpose() * d_pre_mix + proj.transpose() * d_carry;
  }

  // d_out now holds input-embedding gradients.
  auto g_word = grads.view("word_emb");
  auto g_pred = grads.view("pred_emb");
  const int wd = m.config.word_dim;
  const int pd = m.config.predicate_indicator_dim;
  for (int t = 0; t < n; ++t) {
    g_word.row(cache.word_ids[static_cast<std::size_t>(t)]) +=
        d_out.col(t).head(wd).transpose();
    g_pred.row(t == cache.predicate_index ? 1 : 0) += d_out.col(t).tail(pd).transpose();
  }
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

struct MleItem {
  const Sentence* sentence = nullptr;
  int predicate_index = 0;
  LabelSequence gold;
};

struct HingeItem {
  const Sentence* sentence = nullptr;
  int predicate_index = 0;
  LabelSequence labels;
  int polarity = 0;  // +1 or -1
};

struct BatchOptions {
  bool train = true;
  std::uint64_t dropout_seed = 0;
  int workers = 1;
};

inline double hinge_term(int polarity, double confidence) {
  return std::max(0.0, 1.0 - static_cast<double>(polarity) * confidence);
}

namespace detail {

// Gradient work is split into fixed-size chunks reduced in chunk order, so
// the floating-point summation order does not depend on the worker count.
constexpr std::size_t kGradChunk = 8;

template <typename Fn>
double run_chunked(const Model& m, std::size_t n_items, const BatchOptions& opt, Gradients* grads,
                   Fn&& per_item) {
  if (n_items == 0) return 0.0;
  const std::size_t num_chunks = (n_items + kGradChunk - 1) / kGradChunk;
  std::vector<std::unique_ptr<Gradients>> chunk_grads(num_chunks);
  std::vector<double> item_loss(n_items, 0.0);
  parallel_chunks(n_items, kGradChunk, opt.workers,
                  [&](std::size_t chunk, std::size_t begin, std::size_t end) {
                    Gradients* local = nullptr;
                    if (grads) {
                      chunk_grads[chunk] = std::make_unique<Gradients>(Gradients::like(m.params));
                      local = chunk_grads[chunk].get();
                    }
                    for (std::size_t i = begin; i < end; ++i) {
                      item_loss[i] = per_item(i, local);
                    }
                  });
  if (grads) {
    for (auto& cg : chunk_grads) {
      if (cg) grads->add_scaled(*cg, 1.0);
    }
  }
  double total = 0.0;
  for (double v : item_loss) total += v;
  return total;
}

inline void check_labels(const Sentence& s, const LabelSequence& y, int alphabet_size) {
  if (static_cast<int>(y.size()) != s.length()) {
    throw DataError("label sequence length " + std::to_string(y.size()) +
                    " does not match sentence '" + s.id + "' length " +
                    std::to_string(s.length()));
  }
  for (LabelId id : y) {
    if (id < 0 || id >= alphabet_size) {
      throw DataError("label id out of range in sentence '" + s.id + "'");
    }
  }
}

}  // namespace detail

// Negative log-likelihood of the gold labels, summed over the batch and
// divided by the total token count. Gradients, when requested, are
// accumulated for every parameter.
inline double mle_loss(const Model& m, std::span<const MleItem> items, const BatchOptions& opt,
                       Gradients* grads = nullptr) {
  const int L = m.config.alphabet_size();
  std::size_t total_tokens = 0;
  for (const auto& it : items) {
    detail::check_labels(*it.sentence, it.gold, L);
    total_tokens += it.gold.size();
  }
  if (total_tokens == 0) return 0.0;
  const double inv_tokens = 1.0 / static_cast<double>(total_tokens);

  const double sum = detail::run_chunked(
      m, items.size(), opt, grads, [&](std::size_t i, Gradients* local) -> double {
        const MleItem& item = items[i];
        const std::uint64_t seed = derive_seed(opt.dropout_seed, "item", i);
        ForwardCache cache;
        ForwardCache* cache_ptr = local ? &cache : nullptr;
        LabelDistributions dists =
            forward_pass(m, *item.sentence, item.predicate_index, opt.train, seed, cache_ptr);
        const int n = item.sentence->length();
        double nll = 0.0;
        for (int t = 0; t < n; ++t) {
          nll -= std::log(dists.probs(t, item.gold[static_cast<std::size_t>(t)]));
        }
        if (local) {
          Eigen::MatrixXd dlogits = dists.probs * inv_tokens;
          for (int t = 0; t < n; ++t) {
            dlogits(t, item.gold[static_cast<std::size_t>(t)]) -= inv_tokens;
          }
          backward_pass(m, cache, dlogits, *local);
        }
        return nll;
      });
  return sum * inv_tokens;
}

// Mean margin loss over annotated label sequences; the margin is taken on
// the sequence's mean log-probability. Only samples with an active margin
// contribute gradient.
inline double hinge_loss(const Model& m, std::span<const HingeItem> items, const BatchOptions& opt,
                         Gradients* grads = nullptr,
                         std::vector<double>* confidences_out = nullptr) {
  const int L = m.config.alphabet_size();
  for (const auto& it : items) {
    detail::check_labels(*it.sentence, it.labels, L);
    if (it.polarity != 1 && it.polarity != -1) {
      throw DataError("sample polarity must be +1 or -1 in sentence '" + it.sentence->id + "'");
    }
  }
  if (items.empty()) return 0.0;
  const double inv_count = 1.0 / static_cast<double>(items.size());
  if (confidences_out) confidences_out->assign(items.size(), 0.0);

  const double sum = detail::run_chunked(
      m, items.size(), opt, grads, [&](std::size_t i, Gradients* local) -> double {
        const HingeItem& item = items[i];
        const std::uint64_t seed = derive_seed(opt.dropout_seed, "item", i);
        ForwardCache cache;
        ForwardCache* cache_ptr = local ? &cache : nullptr;
        LabelDistributions dists =
            forward_pass(m, *item.sentence, item.predicate_index, opt.train, seed, cache_ptr);
        const int n = item.sentence->length();
        double log_sum = 0.0;
        for (int t = 0; t < n; ++t) {
          log_sum += std::log(dists.probs(t, item.labels[static_cast<std::size_t>(t)]));
        }
        const double conf = log_sum / static_cast<double>(n);
        if (confidences_out) (*confidences_out)[i] = conf;
        const double loss = hinge_term(item.polarity, conf);
        if (local && loss > 0.0) {
          const double scale =
              static_cast<double>(item.polarity) * inv_count / static_cast<double>(n);
          Eigen::MatrixXd dlogits = dists.probs * scale;
          for (int t = 0; t < n; ++t) {
            dlogits(t, item.labels[static_cast<std::size_t>(t)]) -= scale;
          }
          backward_pass(m, cache, dlogits, *local);
        }
        return loss;
      });
  return sum * inv_count;
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

struct OptimizerState {
  static constexpr double kRho = 0.95;
  static constexpr double kEpsilon = 1e-6;
  Tensors sq_grad;    // running average of squared gradients
  Tensors sq_update;  // running average of squared updates

  static OptimizerState like(const Tensors& params) {
    OptimizerState s;
    s.sq_grad = Tensors::like(params);
    s.sq_update = Tensors::like(params);
    return s;
  }
};

inline void adadelta_step(Model& m, OptimizerState& state, const Tensors& grads) {
  if (!grads.same_shape(m.params)) throw Error("gradient shapes do not match parameters");
  std::size_t bad = 0;
  if (!grads.all_finite(&bad)) {
    throw NumericError("non-finite gradient in parameter '" + grads.name_at(bad) + "'");
  }
  constexpr double rho = OptimizerState::kRho;
  constexpr double eps = OptimizerState::kEpsilon;
  double* theta = m.params.data();
  double* acc_g = state.sq_grad.data();
  double* acc_u = state.sq_update.data();
  const double* g = grads.data();
  const std::size_t count = m.params.size();
  for (std::size_t i = 0; i < count; ++i) {
    acc_g[i] = rho * acc_g[i] + (1.0 - rho) * g[i] * g[i];
    const double step = -std::sqrt(acc_u[i] + eps) / std::sqrt(acc_g[i] + eps) * g[i];
    acc_u[i] = rho * acc_u[i] + (1.0 - rho) * step * step;
    theta[i] += step;
  }
  if (!m.params.all_finite(&bad)) {
    throw NumericError("non-finite parameter value in '" + m.params.name_at(bad) +
                       "' after optimizer step");
  }
}

// ---------------------------------------------------------------------------
// Checkpoints: versioned binary container. Parameter payload is row-major
// little-endian f64 per tensor, in registry order; loading restores values
// bit for bit.
// ---------------------------------------------------------------------------

namespace detail {

constexpr char kCheckpointMagic[8] = {'R', 'A', 'N', 'K', 'O', 'I', 'E', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload assumes a little-endian host");

inline void write_tensors_row_major(std::ofstream& out, const Tensors& t) {
  for (const auto& e : t.entries()) {
    auto v = t.view(e.name);
    for (std::size_t r = 0; r < e.rows; ++r) {
      for (std::size_t c = 0; c < e.cols; ++c) {
        const double value = v(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
        out.write(reinterpret_cast<const char*>(&value), sizeof(double));
      }
    }
  }
}

inline void read_tensors_row_major(std::ifstream& in, Tensors& t, const std::string& path) {
  for (const auto& e : t.entries()) {
    auto v = t.view(e.name);
    for (std::size_t r = 0; r < e.rows; ++r) {
      for (std::size_t c = 0; c < e.cols; ++c) {
        double value;
        in.read(reinterpret_cast<char*>(&value), sizeof(double));
        if (!in) throw DataError("checkpoint truncated while reading '" + e.name + "': " + path);
        v(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = value;
      }
    }
  }
}

}  // namespace detail

struct LoadedCheckpoint {
  Model model;
  std::optional<OptimizerState> optimizer;
  std::string config_hash;
};

inline void save_checkpoint(const Model& m, const std::string& path,
                            const std::string& config_hash,
                            const OptimizerState* optimizer = nullptr) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  nlohmann::json header;
  header["format_version"] = detail::kCheckpointVersion;
  header["model"] = model_config_to_json(m.config);
  header["vocab"] = m.vocab.words();
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& e : m.params.entries()) {
    tensors.push_back({{"name", e.name}, {"rows", e.rows}, {"cols", e.cols}});
  }
  header["tensors"] = tensors;
  header["has_optimizer"] = optimizer != nullptr;
  header["config_hash"] = config_hash;
  const std::string header_text = header.dump();

  out.write(detail::kCheckpointMagic, sizeof(detail::kCheckpointMagic));
  const std::uint32_t version = detail::kCheckpointVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  const std::uint64_t header_len = header_text.size();
  out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
  out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
  detail::write_tensors_row_major(out, m.params);
  if (optimizer) {
    detail::write_tensors_row_major(out, optimizer->sq_grad);
    detail::write_tensors_row_major(out, optimizer->sq_update);
  }
  if (!out) throw DataError("failed to write checkpoint: " + path);
}

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, detail::kCheckpointMagic, sizeof(magic)) != 0) {
    throw DataError("not a checkpoint file: " + path);
  }
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (version != detail::kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version) + ": " + path);
  }
  std::uint64_t header_len = 0;
  in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
  std::string header_text(header_len, '\0');
  in.read(header_text.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw DataError("checkpoint header truncated: " + path);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed checkpoint header: " + path + ": " + e.what());
  }

  LoadedCheckpoint result;
  result.model.config = model_config_from_json(header.at("model"));
  result.model.vocab = Vocab(header.at("vocab").get<std::vector<std::string>>());
  Model::register_tensors(result.model.config, result.model.vocab.size(), result.model.params);
  result.config_hash = header.value("config_hash", "");

  for (const auto& jt : header.at("tensors")) {
    const std::string name = jt.at("name").get<std::string>();
    const auto& e = result.model.params.entry(name);
    if (e.rows != jt.at("rows").get<std::size_t>() || e.cols != jt.at("cols").get<std::size_t>()) {
      throw DataError("checkpoint tensor '" + name + "' has unexpected shape: " + path);
    }
  }
  detail::read_tensors_row_major(in, result.model.params, path);
  if (header.at("has_optimizer").get<bool>()) {
    OptimizerState opt = OptimizerState::like(result.model.params);
    detail::read_tensors_row_major(in, opt.sq_grad, path);
    detail::read_tensors_row_major(in, opt.sq_update, path);
    result.optimizer = std::move(opt);
  }
  return result;
}

}  // namespace rankoie
