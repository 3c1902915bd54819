// SPDX-License-Identifier: Apache-2.0
#include "hoi/plot.hpp"

#include "hoi/errors.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <sstream>

namespace hoi::plot {

std::pair<double, double> Projection::apply(double x, double z) const {
  return {margin + (x - minX) * scale, size - margin - (z - minZ) * scale};
}

Projection fitProjection(const std::vector<const data::HoiSequence*>& sequences) {
  double lo[2] = {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  double hi[2] = {-lo[0], -lo[1]};
  auto extend = [&](double x, double z) {
    lo[0] = std::min(lo[0], x);
    hi[0] = std::max(hi[0], x);
    lo[1] = std::min(lo[1], z);
    hi[1] = std::max(hi[1], z);
  };
  for (const auto* s : sequences) {
    for (const auto& h : s->human) {
      for (Eigen::Index j = 0; j < h.jointPositions.rows(); ++j) extend(h.jointPositions(j, 0), h.jointPositions(j, 2));
    }
    for (const auto& o : s->object) extend(o.centroid.x(), o.centroid.z());
  }
  Projection p;
  if (!(lo[0] <= hi[0])) throw ShapeMismatch("nothing to plot");
  const double span = std::max({hi[0] - lo[0], hi[1] - lo[1], 1e-9});
  p.minX = lo[0];
  p.minZ = lo[1];
  p.scale = (p.size - 2.0 * p.margin) / span;
  return p;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

template <typename PointAt>
void polyline(std::ostringstream& os, const Projection& p, int frames, PointAt at, const char* stroke,
              double width) {
  os << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"" << fmt(width) << "\" points=\"";
  for (int f = 0; f < frames; ++f) {
    const auto [x, z] = at(f);
    const auto [u, v] = p.apply(x, z);
    os << (f ? " " : "") << fmt(u) << ',' << fmt(v);
  }
  os << "\"/>\n";
}

void drawSequence(std::ostringstream& os, const Projection& p, const data::HoiSequence& s, const char* joints,
                  const char* object) {
  const int frames = s.numFrames();
  for (int j = 0; j < s.numJoints(); ++j) {
    polyline(os, p, frames, [&](int f) {
      const auto& q = s.human[static_cast<size_t>(f)].jointPositions;
      return std::pair<double, double>{q(j, 0), q(j, 2)};
    }, joints, 1.0);
  }
  polyline(os, p, frames, [&](int f) {
    const auto& c = s.object[static_cast<size_t>(f)].centroid;
    return std::pair<double, double>{c.x(), c.z()};
  }, object, 3.0);
}

}  // namespace

std::string trajectorySvg(const data::HoiSequence& predicted, const data::HoiSequence& truth) {
  if (predicted.numFrames() != truth.numFrames() || predicted.numJoints() != truth.numJoints()) {
    throw ShapeMismatch("prediction and ground truth have different layouts");
  }
  const Projection p = fitProjection({&truth, &predicted});
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(p.size) << "\" height=\"" << fmt(p.size)
     << "\">\n";
  os << "<g id=\"truth\">\n";
  drawSequence(os, p, truth, "#999999", "#000000");
  os << "</g>\n<g id=\"prediction\">\n";
  drawSequence(os, p, predicted, "#3366cc", "#cc3333");
  os << "</g>\n</svg>\n";
  return os.str();
}

}  // namespace hoi::plot
