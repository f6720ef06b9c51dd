#pragma once

#include "meshstitch/types.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

namespace meshstitch {

/// Row-major intensity grid, 1 (luminance) or 3 (RGB) channels, values in [0,1].
struct RasterImage {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<float> samples;  // width*height*channels, interleaved

  static RasterImage zeros(int w, int h, int c = 1);
  static RasterImage constant(int w, int h, float value, int c = 1);

  bool empty() const { return width <= 0 || height <= 0; }
  std::size_t index(int x, int y, int c = 0) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  float at(int x, int y, int c = 0) const { return samples[index(x, y, c)]; }
  float& at(int x, int y, int c = 0) { return samples[index(x, y, c)]; }
};

/// Binary validity grid matching a canvas or image.
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;  // 0 or 1

  static Mask filled(int w, int h, std::uint8_t value = 1);

  bool at(int x, int y) const {
    return data[static_cast<std::size_t>(y) * width + x] != 0;
  }
  void set(int x, int y, bool v) {
    data[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0;
  }
  bool in_bounds(int x, int y) const {
    return x >= 0 && x < width && y >= 0 && y < height;
  }
  std::size_t count() const;
};

struct GradientImage {
  RasterImage magnitude;  // single channel, >= 0 everywhere
};

struct Pyramid {
  std::vector<RasterImage> levels;  // level 0 = full resolution
};

/// Rec. 601 luminance; returns the input unchanged when already single-channel.
RasterImage to_luminance(const RasterImage& img);

/// Bilinear sample at (x,y). Returns nullopt when the 2x2 support is not fully
/// inside the image; coordinates in [0,w-1]x[0,h-1] are valid (the support is
/// clamped so lattice points on the last row/column stay exact).
std::optional<std::array<float, 3>> sample_bilinear(const RasterImage& img,
                                                    double x, double y);

/// Single-channel fast path; img must have channels == 1.
std::optional<double> sample_bilinear_scalar(const RasterImage& img, double x,
                                             double y);

/// Bilinear sample valid only where all 4 support pixels are mask-valid.
std::optional<double> sample_bilinear_masked(const RasterImage& img,
                                             const Mask& mask, double x,
                                             double y);

/// Central differences on the interior, one-sided at borders. Color input is
/// converted to luminance first.
GradientImage gradient_magnitude(const RasterImage& img);

/// x/y derivative rasters under the same stencil as gradient_magnitude.
void gradient_xy(const RasterImage& lum, RasterImage& gx, RasterImage& gy);

/// 5-tap binomial blur ([1,4,6,4,1]/16, reflected borders) then 2x decimation;
/// output dimensions are ceil(input/2).
RasterImage downsample_half(const RasterImage& img);

/// Mask-normalized variant for canvases with invalid regions: blur weights are
/// renormalized over valid pixels, output pixel valid iff its source pixel is.
void downsample_half_masked(const RasterImage& img, const Mask& mask,
                            RasterImage& out_img, Mask& out_mask);

/// Gaussian pyramid with the 5-tap kernel. Levels are clamped down so that the
/// coarsest level keeps both dimensions >= min_dim. Throws on empty input.
Pyramid build_pyramid(const RasterImage& img, int levels, int min_dim = 2);

/// All pixels within Chebyshev radius r valid.
Mask erode(const Mask& mask, int radius);

/// Exact Euclidean distance (pixels) to the nearest invalid-or-outside pixel;
/// 0 on invalid pixels. Used for feather weights.
std::vector<double> distance_to_boundary(const Mask& mask);

}  // namespace meshstitch
