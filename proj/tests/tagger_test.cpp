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

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <unistd.h>

#include <catch2/catch_amalgamated.hpp>

#include "rankoie/common.hpp"
#include "rankoie/corpus.hpp"
#include "rankoie/tagger.hpp"

namespace rankoie {
namespace {

namespace fs = std::filesystem;

bool same_matrix(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  return std::memcmp(a.data(), b.data(), static_cast<std::size_t>(a.size()) * sizeof(double)) == 0;
}

// Small fixture: vocabulary of eight surface forms plus reserved symbols,
// two short sentences, and a model sized for quick numerical checks.
struct Fixture {
  ModelConfig config;
  Model model;
  std::vector<Sentence> sentences;

  static ModelConfig small_config() {
    ModelConfig c;
    c.word_dim = 6;
    c.predicate_indicator_dim = 4;
    c.hidden_dim = 8;
    c.num_layers = 2;
    c.recurrent_dropout = 0.0;
    c.max_args = 2;
    c.seed = 17;
    return c;
  }

  static Vocab small_vocab() {
    Vocab v;
    for (const char* w : {"anna", "likes", "green", "tea", "bram", "sells", "old", "maps"}) {
      v.add(w);
    }
    return v;
  }

  Fixture() : config(small_config()), model(Model::init(config, small_vocab())) {
    Sentence a;
    a.id = "fx-0";
    a.tokens = {"anna", "likes", "green", "tea"};
    a.candidate_predicates = {1};
    sentences.push_back(a);
    Sentence b;
    b.id = "fx-1";
    b.tokens = {"bram", "sells", "old", "maps", "tea"};
    b.candidate_predicates = {1};
    sentences.push_back(b);
  }

  LabelSequence gold_for(const Sentence& s) const {
    const LabelAlphabet a = model.alphabet();
    Extraction x;
    x.sentence_id = s.id;
    x.predicate = Span{1, 1, 1};
    x.args = {Span{0, 0, 0}, Span{2, 3, 2}};
    return encode(s.length(), x, a);
  }
};

TEST_CASE("model config validation rejects bad dimensions", "[tagger]") {
  ModelConfig c = Fixture::small_config();
  c.hidden_dim = 0;
  REQUIRE_THROWS_AS(c.validate(), ConfigError);
  c = Fixture::small_config();
  c.num_layers = 0;
  REQUIRE_THROWS_AS(c.validate(), ConfigError);
  c = Fixture::small_config();
  c.recurrent_dropout = 1.0;
  REQUIRE_THROWS_AS(c.validate(), ConfigError);
  c = Fixture::small_config();
  c.recurrent_dropout = -0.1;
  REQUIRE_THROWS_AS(c.validate(), ConfigError);
  c = Fixture::small_config();
  c.max_args = 0;
  REQUIRE_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("model config survives JSON round-trip", "[tagger]") {
  ModelConfig c = Fixture::small_config();
  c.recurrent_dropout = 0.25;
  const ModelConfig back = model_config_from_json(model_config_to_json(c));
  REQUIRE(back.word_dim == c.word_dim);
  REQUIRE(back.predicate_indicator_dim == c.predicate_indicator_dim);
  REQUIRE(back.hidden_dim == c.hidden_dim);
  REQUIRE(back.num_layers == c.num_layers);
  REQUIRE(back.recurrent_dropout == c.recurrent_dropout);
  REQUIRE(back.max_args == c.max_args);
  REQUIRE(back.seed == c.seed);
}

TEST_CASE("initialization sets gate biases and bounded embeddings", "[tagger]") {
  Fixture fx;
  const int h = fx.config.hidden_dim;

  for (int layer = 0; layer < fx.config.num_layers; ++layer) {
    const std::string prefix = "l" + std::to_string(layer) + ".";
    auto b = fx.model.params.view(prefix + "b");
    for (int i = 0; i < 4 * h; ++i) {
      const bool forget_block = i >= h && i < 2 * h;
      REQUIRE(b(i, 0) == (forget_block ? 1.0 : 0.0));
    }
    auto hw_b = fx.model.params.view(prefix + "hw_b");
    for (int i = 0; i < h; ++i) REQUIRE(hw_b(i, 0) == -1.0);
  }

  auto b_label = fx.model.params.view("b_label");
  for (int i = 0; i < b_label.rows(); ++i) REQUIRE(b_label(i, 0) == 0.0);

  auto emb = fx.model.params.view("word_emb");
  for (int r = 0; r < emb.rows(); ++r) {
    for (int c = 0; c < emb.cols(); ++c) {
      REQUIRE(std::abs(emb(r, c)) <= 0.1);
    }
  }

  // Weight matrices stay inside their uniform fan bound.
  const auto& e = fx.model.params.entry("l0.w_x");
  const double bound = std::sqrt(6.0 / static_cast<double>(e.rows + e.cols));
  auto w = fx.model.params.view("l0.w_x");
  for (int r = 0; r < w.rows(); ++r) {
    for (int c = 0; c < w.cols(); ++c) {
      REQUIRE(std::abs(w(r, c)) <= bound);
    }
  }
}

TEST_CASE("initialization is reproducible per seed", "[tagger]") {
  ModelConfig c = Fixture::small_config();
  const Model a = Model::init(c, Fixture::small_vocab());
  const Model b = Model::init(c, Fixture::small_vocab());
  REQUIRE(a.params.size() == b.params.size());
  REQUIRE(std::memcmp(a.params.data(), b.params.data(), a.params.size() * sizeof(double)) == 0);

  c.seed = 18;
  const Model d = Model::init(c, Fixture::small_vocab());
  REQUIRE(std::memcmp(a.params.data(), d.params.data(), a.params.size() * sizeof(double)) != 0);
}

TEST_CASE("forward emits a probability distribution per token", "[tagger]") {
  Fixture fx;
  for (const Sentence& s : fx.sentences) {
    const LabelDistributions dists = forward(fx.model, s, 1);
    REQUIRE(dists.length() == s.length());
    REQUIRE(dists.alphabet_size() == fx.config.alphabet_size());
    for (int t = 0; t < dists.length(); ++t) {
      double sum = 0.0;
      for (int l = 0; l < dists.alphabet_size(); ++l) {
        REQUIRE(dists.probs(t, l) > 0.0);
        sum += dists.probs(t, l);
      }
      REQUIRE_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-12));
    }
  }
}

TEST_CASE("evaluation forward is pure", "[tagger]") {
  Fixture fx;
  const Sentence& s = fx.sentences[0];
  const LabelDistributions a = forward(fx.model, s, 1);
  const LabelDistributions b = forward(fx.model, s, 1);
  REQUIRE(same_matrix(a.probs, b.probs));
}

TEST_CASE("zero dropout in training mode matches evaluation mode", "[tagger]") {
  Fixture fx;  // dropout 0 in the fixture config
  const Sentence& s = fx.sentences[0];
  const LabelDistributions eval_out = forward(fx.model, s, 1);
  const LabelDistributions train_out = forward_pass(fx.model, s, 1, true, 1234, nullptr);
  REQUIRE(same_matrix(eval_out.probs, train_out.probs));
}

TEST_CASE("recurrent dropout is seed-reproducible and changes the output", "[tagger]") {
  ModelConfig c = Fixture::small_config();
  c.recurrent_dropout = 0.4;
  const Model m = Model::init(c, Fixture::small_vocab());
  Fixture fx;
  const Sentence& s = fx.sentences[1];

  const LabelDistributions a = forward_pass(m, s, 1, true, 77, nullptr);
  const LabelDistributions b = forward_pass(m, s, 1, true, 77, nullptr);
  REQUIRE(same_matrix(a.probs, b.probs));

  const LabelDistributions other_seed = forward_pass(m, s, 1, true, 78, nullptr);
  REQUIRE_FALSE(same_matrix(a.probs, other_seed.probs));

  const LabelDistributions eval_out = forward_pass(m, s, 1, false, 77, nullptr);
  REQUIRE_FALSE(same_matrix(a.probs, eval_out.probs));
}

TEST_CASE("predicate indicator changes the distribution", "[tagger]") {
  Fixture fx;
  const Sentence& s = fx.sentences[1];
  const LabelDistributions a = forward(fx.model, s, 1);
  const LabelDistributions b = forward(fx.model, s, 3);
  REQUIRE_FALSE(same_matrix(a.probs, b.probs));
}

TEST_CASE("embedding lookup rejects out-of-range predicate positions", "[tagger]") {
  Fixture fx;
  REQUIRE_THROWS_AS(forward(fx.model, fx.sentences[0], -1), DataError);
  REQUIRE_THROWS_AS(forward(fx.model, fx.sentences[0], 99), DataError);
}

TEST_CASE("batch loss equals a hand accumulation of token likelihoods", "[tagger]") {
  Fixture fx;
  std::vector<MleItem> items;
  for (const Sentence& s : fx.sentences) {
    items.push_back(MleItem{&s, 1, fx.gold_for(s)});
  }
  BatchOptions opt;
  opt.train = false;

  double manual = 0.0;
  std::size_t tokens = 0;
  for (const MleItem& it : items) {
    const LabelDistributions dists = forward(fx.model, *it.sentence, it.predicate_index);
    double nll = 0.0;
    for (int t = 0; t < dists.length(); ++t) {
      nll -= std::log(dists.probs(t, it.gold[static_cast<std::size_t>(t)]));
    }
    manual += nll;
    tokens += it.gold.size();
  }
  manual /= static_cast<double>(tokens);

  const double got = mle_loss(fx.model, items, opt);
  REQUIRE_THAT(got, Catch::Matchers::WithinRel(manual, 1e-14));
}

TEST_CASE("margin terms match hand-computed values", "[tagger]") {
  REQUIRE(hinge_term(1, -0.5) == 1.5);
  REQUIRE(hinge_term(-1, -0.5) == 0.5);
  REQUIRE(hinge_term(-1, -2.5) == 0.0);
  REQUIRE(hinge_term(1, 0.0) == 1.0);
  REQUIRE(hinge_term(-1, -1.0) == 0.0);  // margin exactly met
}

TEST_CASE("margin loss averages per-sample terms on mean log-probability", "[tagger]") {
  Fixture fx;
  std::vector<HingeItem> items;
  for (const Sentence& s : fx.sentences) {
    items.push_back(HingeItem{&s, 1, fx.gold_for(s), 1});
    items.push_back(HingeItem{&s, 1, LabelSequence(static_cast<std::size_t>(s.length()), 0), -1});
  }
  BatchOptions opt;
  opt.train = false;

  double manual = 0.0;
  for (const HingeItem& it : items) {
    const LabelDistributions dists = forward(fx.model, *it.sentence, it.predicate_index);
    double log_sum = 0.0;
    for (int t = 0; t < dists.length(); ++t) {
      log_sum += std::log(dists.probs(t, it.labels[static_cast<std::size_t>(t)]));
    }
    manual += hinge_term(it.polarity, log_sum / static_cast<double>(it.labels.size()));
  }
  manual /= static_cast<double>(items.size());

  std::vector<double> confidences;
  const double got = hinge_loss(fx.model, items, opt, nullptr, &confidences);
  REQUIRE_THAT(got, Catch::Matchers::WithinRel(manual, 1e-14));
  REQUIRE(confidences.size() == items.size());
  for (double c : confidences) REQUIRE(c <= 0.0);
}

TEST_CASE("satisfied margins contribute exactly zero gradient", "[tagger]") {
  Fixture fx;
  // A fresh model spreads mass over the alphabet, so every sequence sits
  // well below the -1 confidence mark and violated-margin terms vanish for
  // negative-polarity samples.
  std::vector<HingeItem> items;
  for (const Sentence& s : fx.sentences) {
    items.push_back(HingeItem{&s, 1, fx.gold_for(s), -1});
  }
  BatchOptions opt;
  opt.train = false;

  Gradients grads = Gradients::like(fx.model.params);
  const double loss = hinge_loss(fx.model, items, opt, &grads);
  REQUIRE(loss == 0.0);
  for (std::size_t i = 0; i < grads.size(); ++i) REQUIRE(grads.data()[i] == 0.0);
}

TEST_CASE("invalid polarity is rejected", "[tagger]") {
  Fixture fx;
  std::vector<HingeItem> items = {HingeItem{&fx.sentences[0], 1, fx.gold_for(fx.sentences[0]), 0}};
  BatchOptions opt;
  REQUIRE_THROWS_AS(hinge_loss(fx.model, items, opt), DataError);
}

TEST_CASE("label sequences must match sentence length", "[tagger]") {
  Fixture fx;
  std::vector<MleItem> items = {MleItem{&fx.sentences[0], 1, LabelSequence{0, 0}}};
  BatchOptions opt;
  REQUIRE_THROWS_AS(mle_loss(fx.model, items, opt), DataError);
}

// Central finite differences against analytic gradients. The loss callback
// is evaluated twice per sampled parameter with a +/- h bump.
template <typename LossFn>
void check_gradients(Model& m, const Tensors& analytic, LossFn&& loss_of, int samples,
                     std::uint64_t seed, double tol) {
  const double h = 1e-5;
  Rng rng(seed);
  const std::size_t count = m.params.size();
  int checked = 0;
  while (checked < samples) {
    const std::size_t i = static_cast<std::size_t>(rng.bounded(count));
    double* slot = m.params.data() + i;
    const double saved = *slot;
    *slot = saved + h;
    const double up = loss_of();
    *slot = saved - h;
    const double down = loss_of();
    *slot = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double exact = analytic.data()[i];
    const double denom = std::max({std::abs(numeric), std::abs(exact), 1e-6});
    const double rel = std::abs(numeric - exact) / denom;
    INFO("parameter " << m.params.name_at(i) << " flat index " << i << " numeric " << numeric
                      << " analytic " << exact);
    REQUIRE(rel <= tol);
    ++checked;
  }
}

TEST_CASE("analytic likelihood gradients match finite differences", "[tagger]") {
  Fixture fx;
  std::vector<MleItem> items;
  for (const Sentence& s : fx.sentences) {
    items.push_back(MleItem{&s, 1, fx.gold_for(s)});
  }
  BatchOptions opt;
  opt.train = false;

  Gradients grads = Gradients::like(fx.model.params);
  mle_loss(fx.model, items, opt, &grads);

  check_gradients(
      fx.model, grads, [&]() { return mle_loss(fx.model, items, opt); }, 80, 404, 1e-4);
}

TEST_CASE("analytic margin gradients match finite differences", "[tagger]") {
  Fixture fx;
  // Bias one label upward so some negative samples sit inside the margin and
  // both active and inactive terms are represented.
  fx.model.params.view("b_label")(0, 0) = 2.0;

  std::vector<HingeItem> items;
  for (const Sentence& s : fx.sentences) {
    items.push_back(HingeItem{&s, 1, fx.gold_for(s), 1});
    items.push_back(HingeItem{&s, 1, LabelSequence(static_cast<std::size_t>(s.length()), 0), -1});
  }
  BatchOptions opt;
  opt.train = false;

  std::vector<double> confidences;
  Gradients grads = Gradients::like(fx.model.params);
  hinge_loss(fx.model, items, opt, &grads, &confidences);

  bool any_active_negative = false;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].polarity == -1 && hinge_term(-1, confidences[i]) > 0.0) {
      any_active_negative = true;
    }
  }
  REQUIRE(any_active_negative);

  check_gradients(
      fx.model, grads, [&]() { return hinge_loss(fx.model, items, opt); }, 80, 505, 1e-4);
}

TEST_CASE("losses and gradients do not depend on the worker count", "[tagger]") {
  Fixture fx;
  std::vector<MleItem> items;
  for (int rep = 0; rep < 5; ++rep) {
    for (const Sentence& s : fx.sentences) {
      items.push_back(MleItem{&s, 1, fx.gold_for(s)});
    }
  }

  BatchOptions serial;
  serial.train = true;
  serial.dropout_seed = 99;
  serial.workers = 1;
  BatchOptions parallel = serial;
  parallel.workers = 3;

  Gradients g1 = Gradients::like(fx.model.params);
  Gradients g3 = Gradients::like(fx.model.params);
  const double l1 = mle_loss(fx.model, items, serial, &g1);
  const double l3 = mle_loss(fx.model, items, parallel, &g3);
  REQUIRE(l1 == l3);
  REQUIRE(std::memcmp(g1.data(), g3.data(), g1.size() * sizeof(double)) == 0);
}

TEST_CASE("optimizer follows the leaky-average update rule", "[tagger]") {
  Fixture fx;
  constexpr double rho = OptimizerState::kRho;
  constexpr double eps = OptimizerState::kEpsilon;

  // Independent scalar reference: accumulate squared gradients, scale the
  // step by the ratio of root averages, accumulate squared steps.
  std::vector<double> theta(fx.model.params.data(),
                            fx.model.params.data() + fx.model.params.size());
  std::vector<double> acc_g(theta.size(), 0.0), acc_u(theta.size(), 0.0);

  OptimizerState state = OptimizerState::like(fx.model.params);
  Rng rng(88);
  for (int step = 0; step < 5; ++step) {
    Gradients grads = Gradients::like(fx.model.params);
    for (std::size_t i = 0; i < grads.size(); ++i) {
      grads.data()[i] = rng.uniform(-1.0, 1.0);
    }
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double g = grads.data()[i];
      acc_g[i] = rho * acc_g[i] + (1.0 - rho) * g * g;
      const double delta = -std::sqrt(acc_u[i] + eps) / std::sqrt(acc_g[i] + eps) * g;
      acc_u[i] = rho * acc_u[i] + (1.0 - rho) * delta * delta;
      theta[i] += delta;
    }
    adadelta_step(fx.model, state, grads);
    for (std::size_t i = 0; i < theta.size(); ++i) {
      REQUIRE(fx.model.params.data()[i] == theta[i]);
    }
  }
}

TEST_CASE("optimizer decreases a memorization loss", "[tagger]") {
  Fixture fx;
  std::vector<MleItem> items;
  for (const Sentence& s : fx.sentences) {
    items.push_back(MleItem{&s, 1, fx.gold_for(s)});
  }
  BatchOptions opt;
  opt.train = false;  // no dropout, deterministic descent

  OptimizerState state = OptimizerState::like(fx.model.params);
  const double before = mle_loss(fx.model, items, opt);
  for (int step = 0; step < 60; ++step) {
    Gradients grads = Gradients::like(fx.model.params);
    mle_loss(fx.model, items, opt, &grads);
    adadelta_step(fx.model, state, grads);
  }
  const double after = mle_loss(fx.model, items, opt);
  REQUIRE(after < before);
}

TEST_CASE("non-finite gradients are rejected with the parameter name", "[tagger]") {
  Fixture fx;
  OptimizerState state = OptimizerState::like(fx.model.params);
  Gradients grads = Gradients::like(fx.model.params);
  const auto& e = fx.model.params.entry("l1.w_h");
  grads.data()[e.offset + 3] = std::numeric_limits<double>::quiet_NaN();
  try {
    adadelta_step(fx.model, state, grads);
    FAIL("expected a numeric error");
  } catch (const NumericError& err) {
    REQUIRE(std::string(err.what()).find("l1.w_h") != std::string::npos);
  }
}

TEST_CASE("checkpoints restore parameters bit for bit", "[tagger]") {
  Fixture fx;
  const fs::path dir = fs::temp_directory_path() / ("rankoie-ckpt-" + std::to_string(::getpid()));
  fs::create_directories(dir);
  const std::string path = (dir / "model.ckpt").string();

  save_checkpoint(fx.model, path, "cafe0123feedbeef");
  const LoadedCheckpoint back = load_checkpoint(path);
  REQUIRE(back.config_hash == "cafe0123feedbeef");
  REQUIRE_FALSE(back.optimizer.has_value());
  REQUIRE(back.model.params.size() == fx.model.params.size());
  REQUIRE(std::memcmp(back.model.params.data(), fx.model.params.data(),
                      fx.model.params.size() * sizeof(double)) == 0);
  REQUIRE(back.model.vocab.words() == fx.model.vocab.words());
  REQUIRE(back.model.config.hidden_dim == fx.config.hidden_dim);

  // Forward output of the restored model is identical.
  const LabelDistributions a = forward(fx.model, fx.sentences[0], 1);
  const LabelDistributions b = forward(back.model, fx.sentences[0], 1);
  REQUIRE(same_matrix(a.probs, b.probs));

  fs::remove_all(dir);
}

TEST_CASE("checkpoints carry optimizer state when asked", "[tagger]") {
  Fixture fx;
  const fs::path dir =
      fs::temp_directory_path() / ("rankoie-ckpt-opt-" + std::to_string(::getpid()));
  fs::create_directories(dir);
  const std::string path = (dir / "model.ckpt").string();

  OptimizerState state = OptimizerState::like(fx.model.params);
  Rng rng(4);
  for (std::size_t i = 0; i < state.sq_grad.size(); ++i) {
    state.sq_grad.data()[i] = rng.uniform();
    state.sq_update.data()[i] = rng.uniform();
  }
  save_checkpoint(fx.model, path, "hash", &state);
  const LoadedCheckpoint back = load_checkpoint(path);
  REQUIRE(back.optimizer.has_value());
  REQUIRE(std::memcmp(back.optimizer->sq_grad.data(), state.sq_grad.data(),
                      state.sq_grad.size() * sizeof(double)) == 0);
  REQUIRE(std::memcmp(back.optimizer->sq_update.data(), state.sq_update.data(),
                      state.sq_update.size() * sizeof(double)) == 0);

  fs::remove_all(dir);
}

TEST_CASE("corrupted and missing checkpoints are reported", "[tagger]") {
  Fixture fx;
  REQUIRE_THROWS_AS(load_checkpoint("/nonexistent/model.ckpt"), MissingArtifactError);

  const fs::path dir =
      fs::temp_directory_path() / ("rankoie-ckpt-bad-" + std::to_string(::getpid()));
  fs::create_directories(dir);
  const std::string path = (dir / "model.ckpt").string();
  save_checkpoint(fx.model, path, "h");

  // Truncate the payload.
  const auto full = fs::file_size(path);
  fs::resize_file(path, full / 2);
  REQUIRE_THROWS_AS(load_checkpoint(path), DataError);

  // Garbage magic.
  std::ofstream out(path, std::ios::binary);
  out << "NOTACKPT garbage";
  out.close();
  REQUIRE_THROWS_AS(load_checkpoint(path), DataError);

  fs::remove_all(dir);
}

}  // namespace
}  // namespace rankoie
