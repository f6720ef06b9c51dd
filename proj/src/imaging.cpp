#include "meshstitch/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace meshstitch {

RasterImage RasterImage::zeros(int w, int h, int c) {
  RasterImage img;
  img.width = w;
  img.height = h;
  img.channels = c;
  img.samples.assign(static_cast<std::size_t>(w) * h * c, 0.0f);
  return img;
}

RasterImage RasterImage::constant(int w, int h, float value, int c) {
  RasterImage img = zeros(w, h, c);
  std::fill(img.samples.begin(), img.samples.end(), value);
  return img;
}

Mask Mask::filled(int w, int h, std::uint8_t value) {
  Mask m;
  m.width = w;
  m.height = h;
  m.data.assign(static_cast<std::size_t>(w) * h, value);
  return m;
}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(
      std::count_if(data.begin(), data.end(), [](std::uint8_t v) { return v != 0; }));
}

RasterImage to_luminance(const RasterImage& img) {
  if (img.channels == 1) return img;
  RasterImage out = RasterImage::zeros(img.width, img.height, 1);
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
  for (std::size_t i = 0; i < n; ++i) {
    const float* px = &img.samples[i * 3];
    out.samples[i] = 0.299f * px[0] + 0.587f * px[1] + 0.114f * px[2];
  }
  return out;
}

namespace {

// Support indices and weights for a bilinear lookup. Valid for coordinates in
// [0, w-1] x [0, h-1]; the cell is clamped at the far edge so that lattice
// points on the last row/column interpolate with weight 1 on a real pixel.
struct BilinearSupport {
  int x0, y0;
  double fx, fy;
};

bool bilinear_support(const RasterImage& img, double x, double y,
                      BilinearSupport& s) {
  if (!(x >= 0.0) || !(y >= 0.0) || x > img.width - 1 || y > img.height - 1)
    return false;
  s.x0 = std::min(static_cast<int>(x), img.width - 2);
  s.y0 = std::min(static_cast<int>(y), img.height - 2);
  if (img.width == 1) s.x0 = 0;
  if (img.height == 1) s.y0 = 0;
  s.fx = x - s.x0;
  s.fy = y - s.y0;
  return true;
}

}  // namespace

std::optional<std::array<float, 3>> sample_bilinear(const RasterImage& img,
                                                    double x, double y) {
  BilinearSupport s;
  if (img.empty() || !bilinear_support(img, x, y, s)) return std::nullopt;
  const int x1 = std::min(s.x0 + 1, img.width - 1);
  const int y1 = std::min(s.y0 + 1, img.height - 1);
  std::array<float, 3> out{0.0f, 0.0f, 0.0f};
  for (int c = 0; c < img.channels; ++c) {
    const double v00 = img.at(s.x0, s.y0, c);
    const double v10 = img.at(x1, s.y0, c);
    const double v01 = img.at(s.x0, y1, c);
    const double v11 = img.at(x1, y1, c);
    const double top = v00 + s.fx * (v10 - v00);
    const double bot = v01 + s.fx * (v11 - v01);
    out[c] = static_cast<float>(top + s.fy * (bot - top));
  }
  return out;
}

std::optional<double> sample_bilinear_scalar(const RasterImage& img, double x,
                                             double y) {
  BilinearSupport s;
  if (img.empty() || !bilinear_support(img, x, y, s)) return std::nullopt;
  const int x1 = std::min(s.x0 + 1, img.width - 1);
  const int y1 = std::min(s.y0 + 1, img.height - 1);
  const double v00 = img.at(s.x0, s.y0);
  const double v10 = img.at(x1, s.y0);
  const double v01 = img.at(s.x0, y1);
  const double v11 = img.at(x1, y1);
  const double top = v00 + s.fx * (v10 - v00);
  const double bot = v01 + s.fx * (v11 - v01);
  return top + s.fy * (bot - top);
}

std::optional<double> sample_bilinear_masked(const RasterImage& img,
                                             const Mask& mask, double x,
                                             double y) {
  BilinearSupport s;
  if (img.empty() || !bilinear_support(img, x, y, s)) return std::nullopt;
  const int x1 = std::min(s.x0 + 1, img.width - 1);
  const int y1 = std::min(s.y0 + 1, img.height - 1);
  if (!mask.at(s.x0, s.y0) || !mask.at(x1, s.y0) || !mask.at(s.x0, y1) ||
      !mask.at(x1, y1))
    return std::nullopt;
  const double v00 = img.at(s.x0, s.y0);
  const double v10 = img.at(x1, s.y0);
  const double v01 = img.at(s.x0, y1);
  const double v11 = img.at(x1, y1);
  const double top = v00 + s.fx * (v10 - v00);
  const double bot = v01 + s.fx * (v11 - v01);
  return top + s.fy * (bot - top);
}

void gradient_xy(const RasterImage& lum, RasterImage& gx, RasterImage& gy) {
  const RasterImage& im = lum;  // caller passes single-channel
  const int w = im.width, h = im.height;
  gx = RasterImage::zeros(w, h, 1);
  gy = RasterImage::zeros(w, h, 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double dx, dy;
      if (w == 1)
        dx = 0.0;
      else if (x == 0)
        dx = im.at(1, y) - im.at(0, y);
      else if (x == w - 1)
        dx = im.at(w - 1, y) - im.at(w - 2, y);
      else
        dx = 0.5 * (im.at(x + 1, y) - im.at(x - 1, y));
      if (h == 1)
        dy = 0.0;
      else if (y == 0)
        dy = im.at(x, 1) - im.at(x, 0);
      else if (y == h - 1)
        dy = im.at(x, h - 1) - im.at(x, h - 2);
      else
        dy = 0.5 * (im.at(x, y + 1) - im.at(x, y - 1));
      gx.at(x, y) = static_cast<float>(dx);
      gy.at(x, y) = static_cast<float>(dy);
    }
  }
}

GradientImage gradient_magnitude(const RasterImage& img) {
  const RasterImage lum = to_luminance(img);
  RasterImage gx, gy;
  gradient_xy(lum, gx, gy);
  GradientImage g;
  g.magnitude = RasterImage::zeros(img.width, img.height, 1);
  for (std::size_t i = 0; i < g.magnitude.samples.size(); ++i) {
    const double dx = gx.samples[i];
    const double dy = gy.samples[i];
    g.magnitude.samples[i] = static_cast<float>(std::sqrt(dx * dx + dy * dy));
  }
  return g;
}

namespace {

constexpr double kKernel5[5] = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16,
                                1.0 / 16};

// reflect-101 index (never reads outside [0,n-1] for n >= 2)
inline int reflect(int i, int n) {
  if (n == 1) return 0;
  if (i < 0) i = -i;
  if (i >= n) i = 2 * n - 2 - i;
  return std::clamp(i, 0, n - 1);
}

}  // namespace

RasterImage downsample_half(const RasterImage& img) {
  const int w = img.width, h = img.height, ch = img.channels;
  const int ow = (w + 1) / 2, oh = (h + 1) / 2;
  // horizontal blur into temp, then vertical blur + decimate
  RasterImage tmp = RasterImage::zeros(w, h, ch);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int k = -2; k <= 2; ++k)
          acc += kKernel5[k + 2] * img.at(reflect(x + k, w), y, c);
        tmp.at(x, y, c) = static_cast<float>(acc);
      }
    }
  }
  RasterImage out = RasterImage::zeros(ow, oh, ch);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int k = -2; k <= 2; ++k)
          acc += kKernel5[k + 2] * tmp.at(x * 2, reflect(y * 2 + k, h), c);
        out.at(x, y, c) = static_cast<float>(acc);
      }
    }
  }
  return out;
}

void downsample_half_masked(const RasterImage& img, const Mask& mask,
                            RasterImage& out_img, Mask& out_mask) {
  const int w = img.width, h = img.height, ch = img.channels;
  const int ow = (w + 1) / 2, oh = (h + 1) / 2;
  out_img = RasterImage::zeros(ow, oh, ch);
  out_mask = Mask::filled(ow, oh, 0);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      const int sx = x * 2, sy = y * 2;
      if (!mask.at(sx, sy)) continue;
      out_mask.set(x, y, true);
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0, wsum = 0.0;
        for (int ky = -2; ky <= 2; ++ky) {
          const int yy = reflect(sy + ky, h);
          for (int kx = -2; kx <= 2; ++kx) {
            const int xx = reflect(sx + kx, w);
            if (!mask.at(xx, yy)) continue;
            const double kw = kKernel5[kx + 2] * kKernel5[ky + 2];
            acc += kw * img.at(xx, yy, c);
            wsum += kw;
          }
        }
        out_img.at(x, y, c) = wsum > 0.0 ? static_cast<float>(acc / wsum) : 0.0f;
      }
    }
  }
}

Pyramid build_pyramid(const RasterImage& img, int levels, int min_dim) {
  if (img.empty())
    throw StitchError(Stage::Io, "build_pyramid: empty image");
  levels = std::max(1, levels);
  Pyramid pyr;
  pyr.levels.push_back(img);
  for (int l = 1; l < levels; ++l) {
    const RasterImage& prev = pyr.levels.back();
    const int ow = (prev.width + 1) / 2, oh = (prev.height + 1) / 2;
    if (ow < min_dim || oh < min_dim) break;  // clamp levels down
    pyr.levels.push_back(downsample_half(prev));
  }
  return pyr;
}

Mask erode(const Mask& mask, int radius) {
  if (radius <= 0) return mask;
  const int w = mask.width, h = mask.height;
  // separable two-pass min; pixels within `radius` of the border become invalid
  Mask tmp = Mask::filled(w, h, 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      bool ok = true;
      for (int k = -radius; k <= radius && ok; ++k) {
        const int xx = x + k;
        ok = xx >= 0 && xx < w && mask.at(xx, y);
      }
      tmp.set(x, y, ok);
    }
  }
  Mask out = Mask::filled(w, h, 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      bool ok = true;
      for (int k = -radius; k <= radius && ok; ++k) {
        const int yy = y + k;
        ok = yy >= 0 && yy < h && tmp.at(x, yy);
      }
      out.set(x, y, ok);
    }
  }
  return out;
}

namespace {

// Felzenszwalb 1D squared distance transform.
void edt_1d(const std::vector<double>& f, std::vector<double>& d) {
  const int n = static_cast<int>(f.size());
  d.assign(n, 0.0);
  std::vector<int> v(n);
  std::vector<double> z(n + 1);
  int k = 0;
  v[0] = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  for (int q = 1; q < n; ++q) {
    double s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k]);
    while (s <= z[k]) {
      --k;
      s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k]);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double dq = q - v[k];
    d[q] = dq * dq + f[v[k]];
  }
}

}  // namespace

std::vector<double> distance_to_boundary(const Mask& mask) {
  // pad with an invalid one-pixel ring so the canvas border counts as boundary
  const int w = mask.width + 2, h = mask.height + 2;
  const double inf = 1e18;
  std::vector<double> grid(static_cast<std::size_t>(w) * h, 0.0);
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      grid[static_cast<std::size_t>(y + 1) * w + (x + 1)] =
          mask.at(x, y) ? inf : 0.0;

  std::vector<double> col(h), dcol(h);
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) col[y] = grid[static_cast<std::size_t>(y) * w + x];
    edt_1d(col, dcol);
    for (int y = 0; y < h; ++y) grid[static_cast<std::size_t>(y) * w + x] = dcol[y];
  }
  std::vector<double> row(w), drow(w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) row[x] = grid[static_cast<std::size_t>(y) * w + x];
    edt_1d(row, drow);
    for (int x = 0; x < w; ++x) grid[static_cast<std::size_t>(y) * w + x] = drow[x];
  }

  std::vector<double> out(static_cast<std::size_t>(mask.width) * mask.height);
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      out[static_cast<std::size_t>(y) * mask.width + x] =
          std::sqrt(grid[static_cast<std::size_t>(y + 1) * w + (x + 1)]);
  return out;
}

}  // namespace meshstitch
