// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "hoi/config.hpp"
#include "hoi/data.hpp"
#include "hoi/metrics.hpp"
#include "hoi/training.hpp"

#include "json.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace hoi::pipeline {

/// Sequence i uses a seed derived from (seed, i). Throws ConfigError
/// "empty dataset requested" for count 0.
std::vector<data::HoiSequence> generateDataset(const RunConfig& cfg, int count, std::uint64_t seed);

struct DatasetStats {
  int sequences = 0;
  double contactFrameFraction = 0.0;  // frames with at least one active group
  double meanActiveGroups = 0.0;      // over frames with contact
};
DatasetStats datasetStats(const std::vector<data::HoiSequence>& dataset);

void cmdGenData(const RunConfig& cfg, int count, std::uint64_t seed, const std::string& outPath, std::ostream& out);

void cmdTrain(const RunConfig& cfg, const std::string& dataPath, const std::string& outDir,
              const std::string& resumeFrom, std::ostream& out);

/// One sampled sequence in the dataset schema: observed frames kept, future
/// frames replaced by the forecast, plus a "prediction" object with the
/// future-frame contact estimates of both branches.
nlohmann::json predictionRecord(const data::HoiSequence& s, const metrics::Forecast& f);
std::vector<nlohmann::json> sampleDataset(metrics::Forecaster& forecaster,
                                          const std::vector<data::HoiSequence>& dataset, std::uint64_t seed);
void cmdSample(const std::string& checkpointPath, const std::string& dataPath, std::uint64_t seed,
               const std::string& outPath, std::ostream& out);

/// Prints the table and writes the JSON report; returns the report.
metrics::EvalReport cmdEval(const std::string& checkpointPath, const std::string& dataPath, std::uint64_t seed,
                            int samplesPerSequence, const std::string& outPath, std::ostream& out);

enum class Variant { Joint, Decoupled, Consistency, Full };
std::string variantLabel(Variant v);

struct AblationRow {
  Variant variant;
  std::uint64_t seed = 0;
  metrics::SequenceMetrics metrics;
};

struct AblationResult {
  std::vector<AblationRow> rows;
  /// Per seed: the freshly attached HIM reproduced variant (c) bitwise.
  std::vector<bool> himIdentity;

  const AblationRow& at(Variant v, std::uint64_t seed) const;
  std::string table() const;
  nlohmann::json toJson() const;
};

/// Trains and evaluates the four variants per seed:
/// (a) one network over [h, o]; (b) decoupled branches with contact channels
/// but no consistency loss; (c) adds the consistency loss; (d) adds HIM.
/// Every variant gets the stage-1 and stage-3 branch budgets; (d) also runs
/// the HIM stage. (c) and (d) share their stage-1 weights.
AblationResult runAblation(const RunConfig& cfg, const std::vector<data::HoiSequence>& train,
                           const std::vector<data::HoiSequence>& heldOut, const std::vector<std::uint64_t>& seeds,
                           std::ostream* progress = nullptr);

void cmdAblate(const RunConfig& cfg, const std::string& dataPath, const std::string& evalDataPath,
               const std::vector<std::uint64_t>& seeds, const std::string& outPath, std::ostream& out);

/// Writes one SVG per sequence; returns the written paths.
std::vector<std::string> cmdPlot(const std::string& predictionsPath, const std::string& gtPath,
                                 const std::string& outDir);

}  // namespace hoi::pipeline
