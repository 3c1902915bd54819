// SPDX-License-Identifier: Apache-2.0
#include "hoi/metrics.hpp"

#include "hoi/checkpoint.hpp"
#include "hoi/diffusion.hpp"
#include "hoi/errors.hpp"
#include "hoi/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <iomanip>
#include <random>
#include <sstream>

namespace hoi::metrics {

double mpjpe(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& gt) {
  if (pred.rows() != gt.rows() || pred.cols() != gt.cols() || pred.cols() % 3 != 0) {
    throw ShapeMismatch("mpjpe needs equal frames x (K*3) arrays");
  }
  if (pred.size() == 0) throw ShapeMismatch("mpjpe of an empty array");
  const Eigen::Index points = pred.cols() / 3;
  double total = 0.0;
  for (Eigen::Index f = 0; f < pred.rows(); ++f) {
    for (Eigen::Index k = 0; k < points; ++k) {
      total += (pred.block(f, k * 3, 1, 3) - gt.block(f, k * 3, 1, 3)).norm();
    }
  }
  return total / static_cast<double>(pred.rows() * points);
}

double quaternionDistance(const geometry::Quat& a, const geometry::Quat& b) {
  return std::min((a - b).norm(), (a + b).norm());
}

PoseErrors transRotErr(const std::vector<data::ObjectPose>& pred, const std::vector<data::ObjectPose>& gt) {
  if (pred.size() != gt.size() || pred.empty()) {
    throw ShapeMismatch("pose error needs equal nonempty pose lists");
  }
  PoseErrors e;
  for (size_t i = 0; i < pred.size(); ++i) {
    e.translation += (pred[i].centroid - gt[i].centroid).norm();
    const auto qp = geometry::matrixToQuaternion(pred[i].transform().rotation());
    const auto qg = geometry::matrixToQuaternion(gt[i].transform().rotation());
    e.rotation += quaternionDistance(qp, qg);
  }
  e.translation /= static_cast<double>(pred.size());
  e.rotation /= static_cast<double>(pred.size());
  return e;
}

std::vector<Capsule> skeletonCapsules(const Eigen::MatrixX3d& joints, double radius) {
  const auto& parents = data::skeletonParents();
  if (joints.rows() != static_cast<Eigen::Index>(parents.size())) {
    throw ShapeMismatch("capsule body needs the built-in skeleton's " + std::to_string(parents.size()) + " joints");
  }
  std::vector<Capsule> body;
  for (size_t j = 0; j < parents.size(); ++j) {
    if (parents[j] < 0) continue;
    body.push_back({joints.row(parents[j]).transpose(), joints.row(static_cast<Eigen::Index>(j)).transpose(), radius});
  }
  return body;
}

double capsuleSignedDistance(const Vec3& p, const std::vector<Capsule>& body) {
  double best = -std::numeric_limits<double>::infinity();
  for (const Capsule& c : body) {
    const Vec3 ab = c.b - c.a;
    const double len2 = ab.squaredNorm();
    const double s = len2 > 0.0 ? std::clamp((p - c.a).dot(ab) / len2, 0.0, 1.0) : 0.0;
    best = std::max(best, c.radius - (p - (c.a + s * ab)).norm());
  }
  return best;
}

double penetration(const Eigen::MatrixX3d& objectPoints, const std::vector<Capsule>& body) {
  if (objectPoints.rows() == 0) return 0.0;
  Eigen::Index inside = 0;
  for (Eigen::Index i = 0; i < objectPoints.rows(); ++i) {
    if (capsuleSignedDistance(objectPoints.row(i).transpose(), body) >= 0.0) ++inside;
  }
  return 100.0 * static_cast<double>(inside) / static_cast<double>(objectPoints.rows());
}

Forecast ModelForecaster::forecast(const data::HoiSequence& s, std::uint64_t seed) {
  const SequenceTensors tensors = prepare(s, model_.config());
  const ModelConfig& cfg = model_.config();
  const diffusion::NoiseSchedule sched = diffusion::makeSchedule(cfg.diffusionSteps, cfg.schedule);

  // History encodings do not depend on the denoising state; compute them once.
  Graph encoderGraph;
  const CoopModel::Context encoded = model_.encode(encoderGraph, tensors);
  const Matrix clean = model_.cleanState(tensors);
  const int past = tensors.pastLen;

  auto denoiser = [&](const Matrix& x, int t) -> Matrix {
    Graph g;
    CoopModel::Context ctx;
    if (model_.decoupled()) {
      ctx.human = g.constant(encoded.human.value());
      ctx.object = g.constant(encoded.object.value());
      for (const Var& v : encoded.contactTokens) ctx.contactTokens.push_back(g.constant(v.value()));
    } else {
      ctx.joint = g.constant(encoded.joint.value());
    }
    const CoopModel::Prediction p = model_.predict(g, ctx, g.constant(x), t, useHim_);
    Matrix out(x.rows(), x.cols());
    if (model_.decoupled()) {
      out << p.motion.value(), p.contact.value(), p.object.value();
    } else {
      out << p.motion.value(), p.object.value();
    }
    return out;
  };
  diffusion::StateProjection clamp;
  if (!cfg.noisePast) {
    clamp = [&](Matrix& x, int) { x.topRows(past) = clean.topRows(past); };
  }
  Matrix state = diffusion::sampleLoop(denoiser, clean.rows(), clean.cols(), sched, seed, clamp);
  if (clamp) clamp(state, 0);

  const int hc = cfg.humanChannels();
  Forecast f;
  f.human = state.leftCols(hc);
  if (model_.decoupled()) f.contact = state.middleCols(hc, cfg.contactChannels());
  f.object = state.rightCols(data::kObjectChannels);
  return f;
}

Forecast OracleForecaster::forecast(const data::HoiSequence& s, std::uint64_t) {
  return {data::humanMatrix(s), data::contactMatrix(s), data::objectMatrix(s)};
}

Eigen::MatrixXd objectContacts(const Eigen::MatrixXd& objectRows, const Eigen::MatrixX3d& restSlots) {
  Eigen::MatrixXd out(objectRows.rows(), restSlots.rows() * 3);
  for (Eigen::Index f = 0; f < objectRows.rows(); ++f) {
    const geometry::RigidTransform tr = data::objectPoseFromRow(objectRows.row(f)).transform();
    const Eigen::MatrixX3d moved = geometry::contactFromObject(tr, geometry::PointCloud(restSlots)).points();
    for (Eigen::Index q = 0; q < moved.rows(); ++q) out.block(f, q * 3, 1, 3) = moved.row(q);
  }
  return out;
}

namespace {

Eigen::MatrixXd positionsOf(const Eigen::MatrixXd& humanRows) {
  const Eigen::Index joints = humanRows.cols() / data::kJointChannels;
  Eigen::MatrixXd out(humanRows.rows(), joints * 3);
  for (Eigen::Index j = 0; j < joints; ++j) {
    out.middleCols(j * 3, 3) = humanRows.middleCols(j * data::kJointChannels, 3);
  }
  return out;
}

Eigen::MatrixX3d jointsOfRow(const Eigen::RowVectorXd& positions) {
  Eigen::MatrixX3d out(positions.size() / 3, 3);
  for (Eigen::Index j = 0; j < out.rows(); ++j) out.row(j) = positions.segment(j * 3, 3);
  return out;
}

}  // namespace

SequenceMetrics scoreForecast(const data::HoiSequence& s, const Forecast& f) {
  const int past = s.pastLen;
  const int future = s.futureLen;
  const Eigen::MatrixXd gtHuman = data::humanMatrix(s);
  const Eigen::MatrixXd gtObject = data::objectMatrix(s);
  if (f.human.rows() != gtHuman.rows() || f.human.cols() != gtHuman.cols() || f.object.rows() != gtObject.rows() ||
      f.object.cols() != gtObject.cols()) {
    throw ShapeMismatch("forecast does not match the sequence layout");
  }
  const Eigen::MatrixXd predHuman = f.human.bottomRows(future);
  const Eigen::MatrixXd predObject = f.object.bottomRows(future);
  const Eigen::MatrixX3d& cloud = s.restCloud.points();

  SequenceMetrics m;
  const Eigen::MatrixXd predJoints = positionsOf(predHuman);
  m.mpjpeH = 1000.0 * mpjpe(predJoints, positionsOf(gtHuman.bottomRows(future)));
  m.mpjpeO = 1000.0 * mpjpe(objectContacts(predObject, cloud), objectContacts(gtObject.bottomRows(future), cloud));

  std::vector<data::ObjectPose> pp, gp;
  for (int i = 0; i < future; ++i) {
    pp.push_back(data::objectPoseFromRow(predObject.row(i)));
    gp.push_back(data::objectPoseFromRow(gtObject.row(past + i)));
  }
  const PoseErrors e = transRotErr(pp, gp);
  m.transErr = 1000.0 * e.translation;
  m.rotErr = 1000.0 * e.rotation;

  double pene = 0.0;
  for (int i = 0; i < future; ++i) {
    const auto body = skeletonCapsules(jointsOfRow(predJoints.row(i)));
    pene += penetration(geometry::applyRigid(pp[static_cast<size_t>(i)].transform(), s.restCloud).points(), body);
  }
  m.pene = 10.0 * pene / future;

  if (f.contact.size() != 0) {
    const Eigen::MatrixX3d slots = s.restContactSlots();
    const Eigen::MatrixXd fromObject = objectContacts(predObject, slots);
    const Eigen::MatrixXd mask = data::contactMask(s).bottomRows(future);
    const int k = s.samplesPerGroup();
    double total = 0.0;
    for (int i = 0; i < future; ++i) {
      for (Eigen::Index gi = 0; gi < mask.cols(); ++gi) {
        if (mask(i, gi) == 0.0) continue;
        for (int q = 0; q < k; ++q) {
          const Eigen::Index c = (gi * k + q) * 3;
          total += (f.contact.block(past + i, c, 1, 3) - fromObject.block(i, c, 1, 3)).norm();
          m.contactCount += 1.0;
        }
      }
    }
    m.contactGap = m.contactCount > 0.0 ? std::optional<double>(1000.0 * total / m.contactCount) : std::nullopt;
  }
  return m;
}

std::uint64_t sampleSeed(std::uint64_t seed, std::size_t index, int sample) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(sample)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

EvalReport evaluate(Forecaster& forecaster, const std::vector<data::HoiSequence>& dataset, std::uint64_t seed,
                    int samplesPerSequence) {
  if (dataset.empty()) throw ConfigError("evaluation needs a nonempty dataset");
  if (samplesPerSequence < 1) throw ConfigError("samples per sequence must be at least 1");
  EvalReport report;
  report.seed = seed;
  report.samplesPerSequence = samplesPerSequence;
  double gapTotal = 0.0, gapCount = 0.0;
  for (size_t i = 0; i < dataset.size(); ++i) {
    SequenceMetrics seq;
    double seqGap = 0.0, seqGapCount = 0.0;
    bool hasGap = false;
    for (int j = 0; j < samplesPerSequence; ++j) {
      const SequenceMetrics m = scoreForecast(dataset[i], forecaster.forecast(dataset[i], sampleSeed(seed, i, j)));
      seq.mpjpeH += m.mpjpeH;
      seq.mpjpeO += m.mpjpeO;
      seq.transErr += m.transErr;
      seq.rotErr += m.rotErr;
      seq.pene += m.pene;
      if (m.contactGap) {
        hasGap = true;
        seqGap += *m.contactGap * m.contactCount;
        seqGapCount += m.contactCount;
      }
    }
    const double n = samplesPerSequence;
    seq.mpjpeH /= n;
    seq.mpjpeO /= n;
    seq.transErr /= n;
    seq.rotErr /= n;
    seq.pene /= n;
    if (hasGap) {
      seq.contactGap = seqGap / seqGapCount;
      seq.contactCount = seqGapCount;
      gapTotal += seqGap;
      gapCount += seqGapCount;
    }
    report.perSequence.push_back(seq);
  }
  const double n = static_cast<double>(dataset.size());
  for (const auto& s : report.perSequence) {
    report.mean.mpjpeH += s.mpjpeH / n;
    report.mean.mpjpeO += s.mpjpeO / n;
    report.mean.transErr += s.transErr / n;
    report.mean.rotErr += s.rotErr / n;
    report.mean.pene += s.pene / n;
  }
  if (gapCount > 0.0) {
    report.mean.contactGap = gapTotal / gapCount;
    report.mean.contactCount = gapCount;
  }
  return report;
}

namespace {

nlohmann::json metricsJson(const SequenceMetrics& m) {
  nlohmann::json j = {{"mpjpe_h", m.mpjpeH}, {"mpjpe_o", m.mpjpeO}, {"trans_err", m.transErr},
                      {"rot_err", m.rotErr}, {"pene", m.pene}};
  j["contact_gap"] = m.contactGap ? nlohmann::json(*m.contactGap) : nlohmann::json(nullptr);
  return j;
}

}  // namespace

nlohmann::json EvalReport::toJson() const {
  nlohmann::json j = {{"format", "hoi-eval-report"}, {"version", 1}, {"seed", seed},
                      {"samples_per_sequence", samplesPerSequence}};
  j["mean"] = metricsJson(mean);
  j["sequences"] = nlohmann::json::array();
  for (const auto& s : perSequence) j["sequences"].push_back(metricsJson(s));
  return j;
}

std::string EvalReport::table() const {
  std::ostringstream os;
  auto row = [&os](const std::string& label, const SequenceMetrics& m) {
    os << std::left << std::setw(10) << label << std::right << std::fixed << std::setprecision(2) << std::setw(12)
       << m.mpjpeH << std::setw(12) << m.mpjpeO << std::setw(12) << m.transErr << std::setw(12) << m.rotErr
       << std::setw(12) << m.pene << std::setw(12);
    if (m.contactGap) {
      os << *m.contactGap;
    } else {
      os << "n/a";
    }
    os << '\n';
  };
  os << std::left << std::setw(10) << "sequence" << std::right << std::setw(12) << "MPJPE-H" << std::setw(12)
     << "MPJPE-O" << std::setw(12) << "Trans.Err" << std::setw(12) << "Rot.Err" << std::setw(12) << "Pene."
     << std::setw(12) << "Gap" << '\n';
  for (size_t i = 0; i < perSequence.size(); ++i) row(std::to_string(i), perSequence[i]);
  row("mean", mean);
  return os.str();
}

std::unique_ptr<Forecaster> forecasterFromCheckpoint(const std::string& path, std::unique_ptr<CoopModel>& storage) {
  const checkpoint::Checkpoint ckpt = checkpoint::load(path);
  if (ckpt.metadata.value("kind", std::string()) == "oracle") return std::make_unique<OracleForecaster>();
  storage = std::make_unique<CoopModel>(training::modelFromCheckpoint(ckpt));
  return std::make_unique<ModelForecaster>(*storage);
}

}  // namespace hoi::metrics
