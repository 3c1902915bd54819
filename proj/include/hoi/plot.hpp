// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "hoi/data.hpp"

#include <string>
#include <vector>

namespace hoi::plot {

/// Top-down (x, z) orthographic view fitted into a square canvas.
struct Projection {
  double minX = 0.0, minZ = 0.0, scale = 1.0;
  double size = 480.0, margin = 20.0;

  /// Canvas coordinates; canvas y grows downward, so z is flipped.
  std::pair<double, double> apply(double x, double z) const;
};

/// Fits the projection to every joint and centroid of both sequences.
Projection fitProjection(const std::vector<const data::HoiSequence*>& sequences);

/// Joint trajectories (thin) and object centroid track (thick) for ground
/// truth and prediction, as an SVG document.
std::string trajectorySvg(const data::HoiSequence& predicted, const data::HoiSequence& truth);

}  // namespace hoi::plot
