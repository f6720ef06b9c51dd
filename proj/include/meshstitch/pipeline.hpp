#pragma once

#include "meshstitch/energy.hpp"
#include "meshstitch/features.hpp"
#include "meshstitch/geometry.hpp"
#include "meshstitch/imaging.hpp"
#include "meshstitch/metrics.hpp"
#include "meshstitch/types.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <vector>

namespace meshstitch {

struct StitchConfig {
  int mesh_cells_x = 32;
  int mesh_cells_y = 32;
  int pyramid_levels = 3;
  int max_iterations = 10;      // per pyramid level
  double convergence_px = 1.0;  // mean vertex displacement, level pixels
  EnergyWeights weights;
  DetectorConfig detector;
  RansacConfig ransac;          // seed below overrides ransac.seed
  LineSampling sampling;
  int photometric_stride = 4;   // finest-level sample stride, halved per level
  MetricConfig metric;
  std::uint64_t seed = 42;

  void validate() const;  // throws std::invalid_argument
};

struct IterationTrace {
  int iteration = 0;  // 1-based within its level
  double mean_displacement = 0.0;
  double energy_before = 0.0;
  double energy_after = 0.0;
  int photometric_samples = 0;
  int photometric_skipped = 0;
};

struct LevelTrace {
  int level = 0;  // 0 = full resolution
  int width = 0;
  int height = 0;
  bool converged = false;
  std::vector<IterationTrace> iterations;
};

struct StitchReport {
  int source_width = 0, source_height = 0;
  int target_width = 0, target_height = 0;

  int points_matched = 0;
  int lines_matched = 0;
  int lines_unmatched = 0;
  int dropped_points = 0;
  int dropped_lines = 0;

  Mat3 homography = Mat3::Identity();  // source -> target, normalized
  int ransac_iterations = 0;
  int point_inliers = 0;
  int line_inliers = 0;

  int canvas_width = 0, canvas_height = 0;
  Vec2i source_offset = Vec2i::Zero();  // warped source placement on canvas
  Vec2i target_offset = Vec2i::Zero();

  std::vector<LevelTrace> levels;
  double mean_vertex_displacement = 0.0;  // final vs rest, full resolution
  int degenerate_cells = 0;

  double rmse_ncc_global = 0.0;   // before mesh refinement
  double rmse_ncc_refined = 0.0;  // after mesh refinement
  long long metric_windows = 0;   // refined-overlap window count

  StitchConfig config;

  nlohmann::ordered_json to_json() const;
};

struct StitchResult {
  RasterImage panorama;
  Mask panorama_mask;
  RasterImage warped_source;  // refined source on the shared canvas
  Mask warped_source_mask;
  RasterImage target_canvas;  // target placed on the shared canvas
  Mask target_canvas_mask;
  Mask overlap_mask;          // refined source AND target valid

  Homography global;
  Mesh mesh;                  // full-resolution rest mesh on the canvas
  Eigen::VectorXd vertices;   // optimized vertex positions
  StitchReport report;
};

// Full two-stage pipeline: correspondences (detected, or `corr_override` in
// original image coordinates) -> robust global homography -> shared canvas ->
// coarse-to-fine mesh refinement -> per-cell warp -> feathered blend ->
// alignment metric. Errors carry the failing stage.
StitchResult stitch(const RasterImage& source, const RasterImage& target,
                    const StitchConfig& cfg = {},
                    const CorrespondenceSet* corr_override = nullptr);

struct MeshWarpResult {
  RasterImage image;
  Mask mask;
  int degenerate_cells = 0;
};

// Backward-map the image through per-cell homographies fitted from the
// deformed quad corners to the rest quad corners. Non-convex or near-zero
// area cells are skipped and counted. Output matches the input dimensions.
MeshWarpResult warp_mesh(const RasterImage& img, const Mask& mask,
                         const Mesh& mesh, const Eigen::VectorXd& V);

// Feathered combination: exclusive regions copy through, overlap blends with
// weights proportional to each mask's distance to its own boundary.
RasterImage blend_linear(const RasterImage& a, const Mask& mask_a,
                         const RasterImage& b, const Mask& mask_b,
                         Mask* out_mask = nullptr);

}  // namespace meshstitch
