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

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rankoie/cli.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::string run_dir;
  std::string train_path;
  std::string dev_path;
  std::string test_path;
  long long seed = -1;
  int workers = 0;
  bool force = false;
  std::vector<std::string> overrides;  // key=value pairs
};

void add_common_flags(CLI::App* cmd, CommonFlags* flags) {
  cmd->add_option("--config", flags->config_path, "flat key=value config file");
  cmd->add_option("--run-dir", flags->run_dir, "directory for artifacts and logs");
  cmd->add_option("--train", flags->train_path, "training dataset (JSON lines)");
  cmd->add_option("--dev", flags->dev_path, "development dataset (JSON lines)");
  cmd->add_option("--test", flags->test_path, "test dataset (JSON lines)");
  cmd->add_option("--seed", flags->seed, "master random seed");
  cmd->add_option("--workers", flags->workers, "worker threads (0 = all cores)");
  cmd->add_flag("--force", flags->force, "accept artifacts with mismatched config hashes");
  cmd->add_option("--set", flags->overrides, "override any config key (key=value, repeatable)");
}

// Precedence: flag > config file > built-in default.
rankoie::RunConfig build_config(const CommonFlags& flags) {
  rankoie::RunConfig cfg;
  if (!flags.config_path.empty()) rankoie::load_config_file(flags.config_path, cfg);
  for (const std::string& kv : flags.overrides) {
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos) {
      throw rankoie::ConfigError("--set expects key=value, got '" + kv + "'");
    }
    rankoie::apply_config_entry(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!flags.run_dir.empty()) cfg.run_dir = flags.run_dir;
  if (!flags.train_path.empty()) cfg.train_path = flags.train_path;
  if (!flags.dev_path.empty()) cfg.dev_path = flags.dev_path;
  if (!flags.test_path.empty()) cfg.test_path = flags.test_path;
  if (flags.seed >= 0) cfg.seed = static_cast<std::uint64_t>(flags.seed);
  if (flags.workers > 0) cfg.workers = flags.workers;
  cfg.force = flags.force;
  cfg.finalize();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sequence-labeling open information extraction toolkit"};
  app.require_subcommand(1);

  CommonFlags convert_flags, train_flags, generate_flags, calibrate_flags, iterate_flags,
      evaluate_flags, rerank_flags;
  rankoie::ConvertOptions convert_opt;
  rankoie::GenerateOptions generate_opt;
  rankoie::CalibrateOptions calibrate_opt;
  rankoie::IterateCmdOptions iterate_opt;
  rankoie::EvaluateOptions evaluate_opt;
  rankoie::RerankOptions rerank_opt;

  CLI::App* convert = app.add_subcommand("convert", "ingest released benchmark CoNLL files");
  add_common_flags(convert, &convert_flags);
  convert->add_option("--input", convert_opt.input_dir, "benchmark directory")->required();
  convert->add_option("--output", convert_opt.output_dir, "output directory for JSON lines");
  convert->add_flag("!--no-clean-train", convert_opt.clean_train, "skip cleaning the train split");
  convert->add_flag("!--no-clean-dev", convert_opt.clean_dev, "skip cleaning the dev split");
  convert->add_flag("!--no-clean-test", convert_opt.clean_test, "skip cleaning the test split");

  CLI::App* train = app.add_subcommand("train", "MLE-train the base tagging model");
  add_common_flags(train, &train_flags);

  CLI::App* generate = app.add_subcommand("generate", "decode a dataset into an extraction dump");
  add_common_flags(generate, &generate_flags);
  generate->add_option("--checkpoint", generate_opt.checkpoint, "model checkpoint");
  generate->add_option("--data", generate_opt.data, "dataset to decode (default: train_path)");
  generate->add_option("--output", generate_opt.output, "dump output path");

  CLI::App* calibrate = app.add_subcommand("calibrate", "hinge-calibrate confidences on a dump");
  add_common_flags(calibrate, &calibrate_flags);
  calibrate->add_option("--checkpoint", calibrate_opt.checkpoint, "model checkpoint");
  calibrate->add_option("--dump", calibrate_opt.dump, "extraction dump over the training split");
  calibrate->add_option("--output", calibrate_opt.output, "calibrated checkpoint path");

  CLI::App* iterate = app.add_subcommand("iterate", "run the iterative learning loop");
  add_common_flags(iterate, &iterate_flags);
  iterate->add_option("--checkpoint", iterate_opt.checkpoint, "base model checkpoint");
  iterate->add_flag("--resume", iterate_opt.resume, "continue from the run directory's manifest");

  CLI::App* evaluate = app.add_subcommand("evaluate", "score an extraction dump against gold");
  add_common_flags(evaluate, &evaluate_flags);
  evaluate->add_option("--dump", evaluate_opt.dump, "extraction dump to score");
  evaluate->add_option("--gold", evaluate_opt.gold, "gold dataset (default: test_path/dev_path)");
  evaluate->add_option("--output", evaluate_opt.output, "report output path");

  CLI::App* rerank = app.add_subcommand("rerank", "rescore a dump with a model, then evaluate");
  add_common_flags(rerank, &rerank_flags);
  rerank->add_option("--checkpoint", rerank_opt.checkpoint, "rescoring model checkpoint");
  rerank->add_option("--dump", rerank_opt.dump, "extraction dump to rescore");
  rerank->add_option("--gold", rerank_opt.gold, "gold dataset (default: dev_path)");
  rerank->add_option("--output", rerank_opt.output, "report output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (convert->parsed()) {
      rankoie::RunConfig cfg = build_config(convert_flags);
      if (convert_opt.output_dir.empty()) convert_opt.output_dir = cfg.run_dir;
      rankoie::cmd_convert(cfg, convert_opt);
    } else if (train->parsed()) {
      rankoie::cmd_train(build_config(train_flags));
    } else if (generate->parsed()) {
      rankoie::cmd_generate(build_config(generate_flags), generate_opt);
    } else if (calibrate->parsed()) {
      rankoie::cmd_calibrate(build_config(calibrate_flags), calibrate_opt);
    } else if (iterate->parsed()) {
      rankoie::cmd_iterate(build_config(iterate_flags), iterate_opt);
    } else if (evaluate->parsed()) {
      rankoie::cmd_evaluate(build_config(evaluate_flags), evaluate_opt);
    } else if (rerank->parsed()) {
      rankoie::cmd_rerank(build_config(rerank_flags), rerank_opt);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return rankoie::exit_code_for(e);
  }
  return 0;
}
