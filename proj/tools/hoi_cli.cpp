// SPDX-License-Identifier: Apache-2.0
// Command-line entry point: gen-data, train, sample, eval, ablate, plot.
#include "hoi/errors.hpp"
#include "hoi/pipeline.hpp"

#include "CLI11.hpp"

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

namespace {

hoi::RunConfig loadConfig(const std::string& path) {
  return path.empty() ? hoi::RunConfig{} : hoi::loadRunConfig(path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Human-object interaction forecasting with coupled diffusion branches"};
  app.require_subcommand(1);

  std::string configPath, dataPath, evalDataPath, outPath, outDir, checkpointPath, resumePath, gtPath;
  std::uint64_t seed = 0;
  int count = 0;
  int samples = 1;
  std::vector<std::uint64_t> seeds{1, 2, 3};

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic JSON-lines dataset");
  gen->add_option("--config", configPath, "Run config (JSON)")->check(CLI::ExistingFile);
  gen->add_option("--count", count, "Number of sequences")->required();
  gen->add_option("--seed", seed, "Generator seed")->required();
  gen->add_option("--out", outPath, "Output dataset path")->required();

  auto* train = app.add_subcommand("train", "Run the three-stage training schedule");
  train->add_option("--config", configPath, "Run config (JSON)")->check(CLI::ExistingFile);
  train->add_option("--data", dataPath, "Training dataset")->required()->check(CLI::ExistingFile);
  train->add_option("--out-dir", outDir, "Directory for checkpoints and loss.log")->required();
  train->add_option("--seed", seed, "Training seed (overrides the config)")->required();
  train->add_option("--resume", resumePath, "Stage-1 checkpoint to continue from")->check(CLI::ExistingFile);

  auto* sample = app.add_subcommand("sample", "Forecast every sequence of a dataset");
  sample->add_option("--checkpoint", checkpointPath, "Model checkpoint")->required();
  sample->add_option("--data", dataPath, "Input dataset")->required();
  sample->add_option("--seed", seed, "Sampling seed")->required();
  sample->add_option("--out", outPath, "Predictions output path")->required();

  auto* eval = app.add_subcommand("eval", "Score forecasts against the ground truth");
  eval->add_option("--checkpoint", checkpointPath, "Model checkpoint")->required();
  eval->add_option("--data", dataPath, "Evaluation dataset")->required();
  eval->add_option("--seed", seed, "Sampling seed")->required();
  eval->add_option("--samples", samples, "Samples per sequence")->check(CLI::PositiveNumber);
  eval->add_option("--out", outPath, "JSON report path");

  auto* ablate = app.add_subcommand("ablate", "Train and compare the four ablation variants");
  ablate->add_option("--config", configPath, "Run config (JSON)")->check(CLI::ExistingFile);
  ablate->add_option("--data", dataPath, "Training dataset")->required()->check(CLI::ExistingFile);
  ablate->add_option("--eval-data", evalDataPath, "Held-out dataset (generated when omitted)")
      ->check(CLI::ExistingFile);
  ablate->add_option("--seeds", seeds, "Seeds")->delimiter(',');
  ablate->add_option("--out", outPath, "JSON table path");

  auto* plot = app.add_subcommand("plot", "Write one trajectory SVG per sequence");
  plot->add_option("--predictions", outPath, "Predictions file from sample")->required();
  plot->add_option("--gt", gtPath, "Ground-truth dataset")->required();
  plot->add_option("--out-dir", outDir, "Image directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) {
      hoi::pipeline::cmdGenData(loadConfig(configPath), count, seed, outPath, std::cout);
    } else if (train->parsed()) {
      hoi::RunConfig cfg = loadConfig(configPath);
      cfg.seed = seed;
      hoi::pipeline::cmdTrain(cfg, dataPath, outDir, resumePath, std::cout);
    } else if (sample->parsed()) {
      hoi::pipeline::cmdSample(checkpointPath, dataPath, seed, outPath, std::cout);
    } else if (eval->parsed()) {
      hoi::pipeline::cmdEval(checkpointPath, dataPath, seed, samples, outPath, std::cout);
    } else if (ablate->parsed()) {
      hoi::pipeline::cmdAblate(loadConfig(configPath), dataPath, evalDataPath, seeds, outPath, std::cout);
    } else if (plot->parsed()) {
      const auto written = hoi::pipeline::cmdPlot(outPath, gtPath, outDir);
      std::cout << "wrote " << written.size() << " images to " << outDir << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
