#pragma once

#include "mote/types.hpp"

#include <string>
#include <vector>

namespace mote::svg {

/// Hex fill for a behavior class, stable across plots.
const char* class_color(BehaviorClass c);

/// Layers x experts grid, diverging blue-white-red scale centered at
/// zero. Cells listed in `marked` get a red circle outline. Exactly
/// rows*cols <rect> cells and marked.size() <circle> marks.
std::string heatmap(const MatX& values, const std::vector<ExpertAddr>& marked,
                    const std::string& title);

struct ScatterPoint {
  Real x = 0, y = 0;
  BehaviorClass cls = BehaviorClass::Unknown;
};

/// 2D scatter colored by class. Data points carry class="pt"; the legend
/// has one class="legend-entry" text per class present in the data.
std::string scatter(const std::vector<ScatterPoint>& points,
                    const std::string& title);

}  // namespace mote::svg
