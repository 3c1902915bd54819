// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "hoi/checkpoint.hpp"
#include "hoi/config.hpp"
#include "hoi/diffusion.hpp"
#include "hoi/model.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace hoi::training {

/// Masked squared error between the human-side contact estimate and the
/// contacts implied by the predicted object poses, divided by the number of
/// unmasked coordinates. Zero when nothing is unmasked.
Var lossConsistency(Var contactHuman, Var objectPose, const Matrix& restSlots, const Matrix& channelMask);

/// Squared error of the human state [h, C] against the clean target with
/// masked contact channels excluded, divided by the counted entries.
Var lossHuman(Var motion, Var contact, const SequenceTensors& s, bool includePast = true);
/// Squared error of the object motion, divided by the entry count.
Var lossObject(Var object, const SequenceTensors& s, bool includePast = true);

struct LossValues {
  Var human, object, consistency, all;
};

/// One denoising draw per sequence: step t[i] with Gaussian noise[i] over the
/// full diffusion state. Each term is summed over the batch and divided by
/// the batch's counted entries before the weighted combination.
LossValues computeLosses(Graph& g, CoopModel& model, const diffusion::NoiseSchedule& sched,
                         const std::vector<const SequenceTensors*>& batch, const std::vector<int>& t,
                         const std::vector<Matrix>& noise, const LossWeights& weights, bool useHim);

struct LogRow {
  long step = 0;
  int stage = 0;
  double human = 0.0;
  double object = 0.0;
  double consistency = 0.0;
  double all = 0.0;
};

/// "step <n> stage <s> L_human <v> L_object <v> L_consistency <v> L_all <v>"
std::string formatLogRow(const LogRow& row);

/// Parameter groups a stage updates for this model and configuration.
std::vector<ParamGroup> stageGroups(const CoopModel& model, int stage);

/// Runs one stage in place. Steps are numbered from stepOffset + 1. Every
/// step's losses go to onStep before logging.
struct StageOptions {
  long stepOffset = 0;
  std::function<void(const LogRow&)> onLog;   // interval means every logEvery steps
  std::function<void(const LogRow&)> onStep;  // raw per-step values
};
void trainStage(CoopModel& model, const std::vector<SequenceTensors>& data, const RunConfig& cfg, int stage,
                const StageOptions& opts = {});

checkpoint::Checkpoint captureModel(CoopModel& model, int stage);
CoopModel modelFromCheckpoint(const checkpoint::Checkpoint& ckpt);

struct TrainOptions {
  std::string outDir;      // checkpoints and loss log go here when nonempty
  std::string resumeFrom;  // stage-1 checkpoint; training continues at stage 2
  std::function<void(const LogRow&)> onLog;
};

struct TrainResult {
  CoopModel model;
  std::vector<LogRow> log;
  std::vector<std::string> checkpoints;
};

/// Three-stage schedule: branches, then HIM alone with the branches frozen,
/// then everything. Without HIM the second stage is skipped.
TrainResult train(const std::vector<data::HoiSequence>& dataset, const RunConfig& cfg,
                  const TrainOptions& opts = {});

}  // namespace hoi::training
