// SPDX-License-Identifier: Apache-2.0
#include "hoi/model.hpp"

#include "hoi/errors.hpp"

#include <random>

namespace hoi {

SequenceTensors prepare(const data::HoiSequence& s, const ModelConfig& cfg) {
  s.validate();
  if (s.pastLen != cfg.pastLen || s.futureLen != cfg.futureLen) {
    throw ShapeMismatch("sequence window " + std::to_string(s.pastLen) + "+" + std::to_string(s.futureLen) +
                        " does not match the model's " + std::to_string(cfg.pastLen) + "+" +
                        std::to_string(cfg.futureLen));
  }
  if (s.numJoints() != cfg.joints || s.numGroups() != cfg.groups || s.samplesPerGroup() != cfg.samplesPerGroup) {
    throw ShapeMismatch("sequence joint/contact layout does not match the model");
  }
  SequenceTensors t;
  t.pastLen = s.pastLen;
  t.human = data::humanMatrix(s);
  t.contacts = data::contactMatrix(s);
  t.channelMask = data::contactChannelMask(s);
  t.groupMask = data::contactMask(s);
  t.object = data::objectMatrix(s);
  t.restCloud = s.restCloud.points();
  t.restSlots = s.restContactSlots();
  return t;
}

CoopModel::CoopModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  if (decoupled()) {
    human_ = human::HumanBranch(cfg, rng);
    object_ = object::ObjectBranch(cfg, rng);
  } else {
    joint_ = human::JointBranch(cfg, rng);
  }
}

void CoopModel::attachHim() {
  if (!decoupled()) throw ConfigError("HIM requires the decoupled model");
  him_ = him::initHim(object_, human_.width());
}

CoopModel::Context CoopModel::encode(Graph& g, const SequenceTensors& s) {
  const int p = s.pastLen;
  Context ctx;
  if (decoupled()) {
    human::HumanConditions hc{s.human.topRows(p), s.contacts.topRows(p), s.groupMask.topRows(p)};
    ctx.human = human_.encodeConditions(g, hc);
    ctx.object = object_.encodeConditions(g, s.object.topRows(p), s.restCloud);
    ctx.contactTokens = object_.aggregateContacts(g, {s.contacts.topRows(p), s.groupMask.topRows(p)});
  } else {
    Matrix history(p, s.human.cols() + s.object.cols());
    history << s.human.topRows(p), s.object.topRows(p);
    ctx.joint = joint_.encodeConditions(g, history);
  }
  return ctx;
}

int CoopModel::stateChannels() const {
  return cfg_.humanChannels() + (decoupled() ? cfg_.contactChannels() : 0) + data::kObjectChannels;
}

Matrix CoopModel::cleanState(const SequenceTensors& s) const {
  Matrix x(s.frames(), stateChannels());
  if (decoupled()) {
    x << s.human, s.contacts, s.object;
  } else {
    x << s.human, s.object;
  }
  return x;
}

CoopModel::Prediction CoopModel::predict(Graph& g, const Context& ctx, Var noised, int t, bool useHim) {
  if (noised.cols() != stateChannels()) {
    throw ShapeMismatch("diffusion state has " + std::to_string(noised.cols()) + " channels, expected " +
                        std::to_string(stateChannels()));
  }
  const int hc = cfg_.humanChannels();
  Prediction out;
  if (!decoupled()) {
    const Var clean = joint_.predict(g, noised, t, ctx.joint).clean;
    out.motion = ad::sliceCols(clean, 0, hc);
    out.object = ad::sliceCols(clean, hc, data::kObjectChannels);
    return out;
  }
  const int cc = cfg_.contactChannels();
  const human::HumanBranch::Output h = human_.predict(g, ad::sliceCols(noised, 0, hc + cc), t, ctx.human);
  out.motion = h.motion;
  out.contact = h.contact;
  const Var noisedObject = ad::sliceCols(noised, hc + cc, data::kObjectChannels);
  if (him_ && useHim) {
    // Control features are taken as fixed inputs; HIM does not train the human branch.
    object::HimInjection injection{&*him_, g.constant(h.hidden.value()), cfg_.himFusion};
    out.object = object_.predict(g, noisedObject, t, ctx.contactTokens, ctx.object, &injection);
  } else {
    out.object = object_.predict(g, noisedObject, t, ctx.contactTokens, ctx.object);
  }
  return out;
}

void CoopModel::visitGroup(ParamGroup group, const nn::ParamVisitor& f) {
  switch (group) {
    case ParamGroup::Human:
      if (decoupled()) human_.visitParameters(f);
      break;
    case ParamGroup::Object:
      if (decoupled()) object_.visitParameters(f);
      break;
    case ParamGroup::Him:
      if (him_) him_->visitParameters(f);
      break;
    case ParamGroup::Joint:
      if (!decoupled()) joint_.visitParameters(f);
      break;
  }
}

void CoopModel::visitParameters(const nn::ParamVisitor& f) {
  for (ParamGroup g : {ParamGroup::Human, ParamGroup::Object, ParamGroup::Him, ParamGroup::Joint}) visitGroup(g, f);
}

void CoopModel::setTrainable(const std::vector<ParamGroup>& groups) {
  visitParameters([](const std::string&, nn::Parameter& p) { p.trainable = false; });
  for (ParamGroup g : groups) visitGroup(g, [](const std::string&, nn::Parameter& p) { p.trainable = true; });
}

std::vector<nn::Parameter*> CoopModel::trainableParameters() {
  std::vector<nn::Parameter*> out;
  visitParameters([&](const std::string&, nn::Parameter& p) {
    if (p.trainable) out.push_back(&p);
  });
  return out;
}

}  // namespace hoi
