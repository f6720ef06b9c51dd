#include "meshstitch/metrics.hpp"

#include "meshstitch/types.hpp"

#include <cmath>
#include <stdexcept>

namespace meshstitch {

MetricResult rmse_ncc(const RasterImage& a, const Mask& mask_a,
                      const RasterImage& b, const Mask& mask_b,
                      const MetricConfig& cfg) {
  if (cfg.window < 3 || cfg.window % 2 == 0)
    throw std::invalid_argument("metric window must be odd and >= 3");
  if (a.width != b.width || a.height != b.height ||
      mask_a.width != a.width || mask_a.height != a.height ||
      mask_b.width != b.width || mask_b.height != b.height)
    throw std::invalid_argument("metric inputs must share dimensions");

  const RasterImage la = to_luminance(a);
  const RasterImage lb = to_luminance(b);
  const int r = cfg.window / 2;
  const int n = cfg.window * cfg.window;
  constexpr double kVarEps = 1e-20;

  double sum = 0.0;
  long long windows = 0;
  for (int y = r; y < la.height - r; ++y) {
    for (int x = r; x < la.width - r; ++x) {
      bool valid = true;
      for (int dy = -r; dy <= r && valid; ++dy)
        for (int dx = -r; dx <= r; ++dx)
          if (!mask_a.at(x + dx, y + dy) || !mask_b.at(x + dx, y + dy)) {
            valid = false;
            break;
          }
      if (!valid) continue;

      double sa = 0.0, sb = 0.0, saa = 0.0, sbb = 0.0, sab = 0.0;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          const double va = la.at(x + dx, y + dy);
          const double vb = lb.at(x + dx, y + dy);
          sa += va;
          sb += vb;
          saa += va * va;
          sbb += vb * vb;
          sab += va * vb;
        }
      // expanded form keeps the score exactly invariant to affine intensity
      // changes of either patch
      const double var_a = n * saa - sa * sa;
      const double var_b = n * sbb - sb * sb;
      double ncc;
      if (var_a <= kVarEps && var_b <= kVarEps)
        ncc = 1.0;  // two flat patches agree perfectly
      else if (var_a <= kVarEps || var_b <= kVarEps)
        ncc = 0.0;  // flat against textured carries no signal
      else
        ncc = (n * sab - sa * sb) / std::sqrt(var_a * var_b);
      sum += 1.0 - ncc;
      ++windows;
    }
  }

  if (windows == 0)
    throw StitchError(Stage::Overlap,
                      "no overlapping window with full support in both masks");
  MetricResult result;
  result.windows = windows;
  result.value = cfg.intensity_scale * std::sqrt(std::max(0.0, sum) / windows);
  return result;
}

}  // namespace meshstitch
