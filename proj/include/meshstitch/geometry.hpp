#pragma once

#include "meshstitch/features.hpp"
#include "meshstitch/imaging.hpp"
#include "meshstitch/types.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace meshstitch {

// Plane projective transform, kept Frobenius-normalized with h22 >= 0.
struct Homography {
  Mat3 H = Mat3::Identity();

  Vec2 apply(const Vec2& p) const;
  Homography inverse() const;
  Homography normalized() const;
  static Homography from_matrix(const Mat3& m) { return Homography{m}.normalized(); }
};

// Direct linear transform from point pairs (2 rows each) and line pairs
// (2 rows each: both source endpoints against the target line). Inputs are
// Hartley-normalized before the solve. Throws on rank deficiency or a
// near-singular result.
Homography dlt_estimate(const std::vector<PointMatch>& points,
                        const std::vector<LineMatch>& lines);

struct RansacConfig {
  double threshold = 3.0;     // px, for point and line residuals alike
  int max_iterations = 2000;
  double confidence = 0.999;
  int min_consensus = 8;      // point + line inliers combined
  std::uint64_t seed = 42;
};

struct RansacResult {
  Homography model;
  std::vector<int> point_inliers;  // indices into set.points
  std::vector<int> line_inliers;   // indices into set.matched_lines
  int iterations = 0;
};

// Robust homography from minimal 4-point samples with adaptive iteration
// count; the consensus set mixes point and line inliers and the final model
// is refit twice on its own inliers. Deterministic for a fixed seed.
RansacResult ransac_homography(const CorrespondenceSet& set,
                               const RansacConfig& cfg = {});

// Regular deformation grid over an axis-aligned rectangle. Vertices are
// stored row-major; the stacked coordinate vector interleaves (x, y) per
// vertex, so vertex v owns entries 2v and 2v+1.
struct Mesh {
  int cells_x = 32;
  int cells_y = 32;
  double x0 = 0.0;
  double y0 = 0.0;
  double width = 0.0;
  double height = 0.0;

  int vertex_cols() const { return cells_x + 1; }
  int vertex_rows() const { return cells_y + 1; }
  int vertex_count() const { return vertex_cols() * vertex_rows(); }
  int dof_count() const { return 2 * vertex_count(); }
  int vertex_index(int ix, int iy) const { return iy * vertex_cols() + ix; }
  double cell_width() const { return width / cells_x; }
  double cell_height() const { return height / cells_y; }

  Vec2 rest_vertex(int ix, int iy) const {
    return Vec2(x0 + ix * cell_width(), y0 + iy * cell_height());
  }
  Eigen::VectorXd rest_positions() const;
  Mesh scaled(double s) const;
  bool contains(const Vec2& p, double eps = 1e-9) const;
};

// A point expressed as bilinear weights over its enclosing cell's corners,
// ordered TL, TR, BL, BR.
struct BilinearAnchor {
  int v[4];
  double w[4];
};

BilinearAnchor anchor_point(const Mesh& mesh, const Vec2& p);
Vec2 anchor_interpolate(const BilinearAnchor& a, const Eigen::VectorXd& V);

// Result of resampling an image under a global homography. `offset` places
// the canvas origin in destination coordinates.
struct WarpResult {
  RasterImage image;
  Mask mask;
  Vec2i offset;
};

WarpResult warp_global(const RasterImage& src, const Homography& h);

struct Rect {
  double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;
  bool contains(const Vec2& p, double eps = 1e-9) const {
    return p.x() >= x0 - eps && p.x() <= x1 + eps && p.y() >= y0 - eps &&
           p.y() <= y1 + eps;
  }
};

struct TransferStats {
  int dropped_points = 0;
  int dropped_lines = 0;
};

// Re-express a correspondence set in the mosaic frame: source positions go
// through the homography plus shift, destination positions shift only.
// Entries whose source geometry leaves `domain` are dropped and counted.
CorrespondenceSet transfer_correspondences(const CorrespondenceSet& set,
                                           const Homography& h,
                                           const Vec2& shift,
                                           const Rect& domain,
                                           TransferStats* stats = nullptr);

}  // namespace meshstitch
