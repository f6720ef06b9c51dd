#pragma once

#include "meshstitch/imaging.hpp"

namespace meshstitch {

struct MetricConfig {
  int window = 3;                 // odd window side length
  double intensity_scale = 255.0; // reported in 8-bit intensity units
};

struct MetricResult {
  double value = 0.0;      // intensity_scale * sqrt(mean of (1 - NCC))
  long long windows = 0;   // windows fully valid in both masks
};

// Alignment error over the shared valid area: per window, the normalized
// cross-correlation of the two luminance patches; the score is the RMS of
// (1 - NCC) over all windows whose every pixel is valid in both masks.
// Constant-vs-constant windows correlate perfectly; constant-vs-varying
// windows contribute zero correlation. Inputs must share dimensions.
MetricResult rmse_ncc(const RasterImage& a, const Mask& mask_a,
                      const RasterImage& b, const Mask& mask_b,
                      const MetricConfig& cfg = {});

}  // namespace meshstitch
