#pragma once

#include "meshstitch/imaging.hpp"
#include "meshstitch/types.hpp"

#include <string>
#include <vector>

namespace meshstitch {

struct PointMatch {
  Vec2 p;        // source image position (pixels)
  Vec2 p_prime;  // target image position (pixels)
  double score = 1.0;  // match confidence in [0,1]
};

struct LineSegment {
  Vec2 p_s;  // start endpoint
  Vec2 p_e;  // end endpoint

  double length() const { return (p_e - p_s).norm(); }
};

/// Homogeneous line [a,b,c] through two points, normalized so a^2+b^2 = 1.
Vec3 line_through(const Vec2& a, const Vec2& b);

struct LineMatch {
  LineSegment seg;        // source segment
  LineSegment seg_prime;  // matched segment on the target
  Vec3 line_prime;        // target line, normalized (a'^2+b'^2 = 1)

  static LineMatch from_segments(const LineSegment& src, const LineSegment& dst);
};

struct CorrespondenceSet {
  std::vector<PointMatch> points;
  std::vector<LineMatch> matched_lines;
  std::vector<LineSegment> unmatched_lines;  // source-image segments

  std::size_t total_lines() const {
    return matched_lines.size() + unmatched_lines.size();
  }
};

struct DetectorConfig {
  // Harris corners + NCC patch matching
  int max_corners = 500;
  double harris_k = 0.04;
  double harris_quality = 0.01;  // keep responses >= quality * max response
  int nms_radius = 5;
  int patch_size = 11;  // odd
  double ratio_test = 0.8;
  double min_ncc = 0.6;

  // gradient-chained line segments
  double min_line_length = 10.0;
  double grad_threshold = 0.08;
  double chain_angle_tol_deg = 22.5;
  double max_line_rms_dev = 1.5;  // straightness gate for a chained region

  // transfer-based line matching
  double line_match_dist = 5.0;       // max endpoint-to-line distance (px)
  double line_match_angle_deg = 10.0;  // max angular difference
  double line_match_overlap = 0.3;     // min mutual projection overlap fraction
};

/// Harris corners matched by normalized cross-correlation of patches with a
/// ratio test; mutual-best only, sorted by descending score.
std::vector<PointMatch> detect_and_match_points(const RasterImage& src,
                                                const RasterImage& dst,
                                                const DetectorConfig& cfg);

/// Chained gradient edges fitted to segments.
std::vector<LineSegment> detect_lines(const RasterImage& img,
                                      const DetectorConfig& cfg);

struct LineMatchResult {
  std::vector<LineMatch> matched;
  std::vector<LineSegment> unmatched_src;
};

/// Detect segments on both images and match by transferring source segments
/// with a homography pre-fit from point matches; pre_matches may be supplied
/// to reuse already-computed point matches (detected internally when empty).
/// Falls back to identity-transform matching when no pre-homography exists.
/// Every source segment lands in exactly one of matched / unmatched_src.
LineMatchResult detect_and_match_lines(const RasterImage& src,
                                       const RasterImage& dst,
                                       const DetectorConfig& cfg,
                                       std::vector<PointMatch> pre_matches = {});

/// JSON correspondence file (see README for the schema). Throws on parse or
/// validation failure with line/field diagnostics.
CorrespondenceSet load_correspondences(const std::string& path,
                                       double min_line_length = 10.0);
void save_correspondences(const std::string& path, const CorrespondenceSet& set);

}  // namespace meshstitch
