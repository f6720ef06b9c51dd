#include "meshstitch/pipeline.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace meshstitch {

void StitchConfig::validate() const {
  if (mesh_cells_x < 1 || mesh_cells_y < 1)
    throw std::invalid_argument("mesh cell counts must be >= 1");
  if (pyramid_levels < 1)
    throw std::invalid_argument("pyramid levels must be >= 1");
  if (max_iterations < 1)
    throw std::invalid_argument("iteration cap must be >= 1");
  if (!(convergence_px > 0.0))
    throw std::invalid_argument("convergence threshold must be > 0");
  if (photometric_stride < 1)
    throw std::invalid_argument("photometric stride must be >= 1");
  if (metric.window < 3 || metric.window % 2 == 0)
    throw std::invalid_argument("metric window must be odd and >= 3");
}

namespace {

RasterImage expand_to_rgb(const RasterImage& img) {
  if (img.channels == 3) return img;
  RasterImage out = RasterImage::zeros(img.width, img.height, 3);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const float v = img.at(x, y);
      out.at(x, y, 0) = v;
      out.at(x, y, 1) = v;
      out.at(x, y, 2) = v;
    }
  return out;
}

void paste(RasterImage& canvas, Mask& canvas_mask, const RasterImage& img,
           const Mask* img_mask, int ox, int oy) {
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      if (img_mask && !img_mask->at(x, y)) continue;
      for (int c = 0; c < img.channels; ++c)
        canvas.at(x + ox, y + oy, c) = img.at(x, y, c);
      canvas_mask.set(x + ox, y + oy, true);
    }
}

void check_bounds(const Vec2& p, int w, int h, const std::string& what) {
  if (p.x() < 0.0 || p.x() > w - 1 || p.y() < 0.0 || p.y() > h - 1)
    throw StitchError(Stage::Features,
                      what + " at (" + std::to_string(p.x()) + ", " +
                          std::to_string(p.y()) + ") is outside the image");
}

void validate_correspondences(const CorrespondenceSet& set, int sw, int sh,
                              int tw, int th) {
  for (std::size_t i = 0; i < set.points.size(); ++i) {
    check_bounds(set.points[i].p, sw, sh,
                 "point match " + std::to_string(i) + " source position");
    check_bounds(set.points[i].p_prime, tw, th,
                 "point match " + std::to_string(i) + " target position");
  }
  for (std::size_t i = 0; i < set.matched_lines.size(); ++i) {
    const LineMatch& m = set.matched_lines[i];
    const std::string tag = "line match " + std::to_string(i);
    check_bounds(m.seg.p_s, sw, sh, tag + " source start");
    check_bounds(m.seg.p_e, sw, sh, tag + " source end");
    check_bounds(m.seg_prime.p_s, tw, th, tag + " target start");
    check_bounds(m.seg_prime.p_e, tw, th, tag + " target end");
  }
  for (std::size_t i = 0; i < set.unmatched_lines.size(); ++i) {
    const std::string tag = "unmatched line " + std::to_string(i);
    check_bounds(set.unmatched_lines[i].p_s, sw, sh, tag + " start");
    check_bounds(set.unmatched_lines[i].p_e, sw, sh, tag + " end");
  }
}

CorrespondenceSet scale_correspondences(const CorrespondenceSet& set,
                                        double s) {
  CorrespondenceSet out;
  for (const PointMatch& m : set.points)
    out.points.push_back({m.p * s, m.p_prime * s, m.score});
  for (const LineMatch& m : set.matched_lines)
    out.matched_lines.push_back(LineMatch::from_segments(
        {m.seg.p_s * s, m.seg.p_e * s},
        {m.seg_prime.p_s * s, m.seg_prime.p_e * s}));
  for (const LineSegment& seg : set.unmatched_lines)
    out.unmatched_lines.push_back({seg.p_s * s, seg.p_e * s});
  return out;
}

struct MaskedPyramid {
  std::vector<RasterImage> images;
  std::vector<Mask> masks;
};

MaskedPyramid build_masked_pyramid(const RasterImage& img, const Mask& mask,
                                   int max_levels, int min_dim) {
  MaskedPyramid p;
  p.images.push_back(img);
  p.masks.push_back(mask);
  while (static_cast<int>(p.images.size()) < max_levels) {
    const RasterImage& prev = p.images.back();
    const int nw = (prev.width + 1) / 2;
    const int nh = (prev.height + 1) / 2;
    if (nw < min_dim || nh < min_dim) break;
    RasterImage next;
    Mask next_mask;
    downsample_half_masked(prev, p.masks.back(), next, next_mask);
    p.images.push_back(std::move(next));
    p.masks.push_back(std::move(next_mask));
  }
  return p;
}

// all bilinear support pixels valid, mirroring the sampler's clamped support
bool support_valid(const Mask& mask, double x, double y) {
  if (x < 0.0 || y < 0.0 || x > mask.width - 1 || y > mask.height - 1)
    return false;
  const int x0 = std::min(static_cast<int>(x), mask.width - 2);
  const int y0 = std::min(static_cast<int>(y), mask.height - 2);
  if (mask.width == 1 || mask.height == 1) {
    const int cx = std::max(0, std::min(static_cast<int>(x), mask.width - 1));
    const int cy = std::max(0, std::min(static_cast<int>(y), mask.height - 1));
    return mask.at(cx, cy);
  }
  return mask.at(x0, y0) && mask.at(x0 + 1, y0) && mask.at(x0, y0 + 1) &&
         mask.at(x0 + 1, y0 + 1);
}

}  // namespace

MeshWarpResult warp_mesh(const RasterImage& img, const Mask& mask,
                         const Mesh& mesh, const Eigen::VectorXd& V) {
  if (V.size() != mesh.dof_count())
    throw std::invalid_argument("vertex vector size does not match the mesh");
  if (!V.allFinite())
    throw StitchError(Stage::Solve, "mesh vertices are not finite");

  MeshWarpResult out;
  out.image = RasterImage::zeros(img.width, img.height, img.channels);
  out.mask = Mask::filled(img.width, img.height, 0);

  for (int cy = 0; cy < mesh.cells_y; ++cy) {
    for (int cx = 0; cx < mesh.cells_x; ++cx) {
      const int vi[4] = {mesh.vertex_index(cx, cy), mesh.vertex_index(cx + 1, cy),
                         mesh.vertex_index(cx + 1, cy + 1),
                         mesh.vertex_index(cx, cy + 1)};
      Vec2 rest[4], def[4];
      rest[0] = mesh.rest_vertex(cx, cy);
      rest[1] = mesh.rest_vertex(cx + 1, cy);
      rest[2] = mesh.rest_vertex(cx + 1, cy + 1);
      rest[3] = mesh.rest_vertex(cx, cy + 1);
      bool at_rest = true;
      for (int k = 0; k < 4; ++k) {
        def[k] = Vec2(V(2 * vi[k]), V(2 * vi[k] + 1));
        at_rest = at_rest && def[k].x() == rest[k].x() &&
                  def[k].y() == rest[k].y();
      }

      const double rx0 = rest[0].x(), rx1 = rest[1].x();
      const double ry0 = rest[0].y(), ry1 = rest[3].y();

      if (at_rest) {
        // exact copy path keeps identity meshes bit-identical
        const int x_lo = std::max(0, static_cast<int>(std::ceil(rx0 - 1e-9)));
        const int x_hi = std::min(img.width - 1,
                                  static_cast<int>(std::floor(rx1 + 1e-9)));
        const int y_lo = std::max(0, static_cast<int>(std::ceil(ry0 - 1e-9)));
        const int y_hi = std::min(img.height - 1,
                                  static_cast<int>(std::floor(ry1 + 1e-9)));
        for (int y = y_lo; y <= y_hi; ++y)
          for (int x = x_lo; x <= x_hi; ++x) {
            if (!mask.at(x, y)) continue;
            for (int c = 0; c < img.channels; ++c)
              out.image.at(x, y, c) = img.at(x, y, c);
            out.mask.set(x, y, true);
          }
        continue;
      }

      // reject non-convex or collapsed quads
      double sign = 0.0;
      bool degenerate = false;
      for (int k = 0; k < 4 && !degenerate; ++k) {
        const Vec2 e1 = def[(k + 1) % 4] - def[k];
        const Vec2 e2 = def[(k + 2) % 4] - def[(k + 1) % 4];
        const double cross = e1.x() * e2.y() - e1.y() * e2.x();
        if (std::fabs(cross) < 1e-12)
          degenerate = true;
        else if (sign == 0.0)
          sign = cross > 0 ? 1.0 : -1.0;
        else if (sign * cross < 0.0)
          degenerate = true;
      }
      if (degenerate) {
        ++out.degenerate_cells;
        continue;
      }

      // homography sending the deformed quad back onto the rest quad
      Eigen::Matrix<double, 8, 8> a = Eigen::Matrix<double, 8, 8>::Zero();
      Eigen::Matrix<double, 8, 1> rhs;
      for (int k = 0; k < 4; ++k) {
        const double dx = def[k].x(), dy = def[k].y();
        const double rx = rest[k].x(), ry = rest[k].y();
        a.row(2 * k) << dx, dy, 1, 0, 0, 0, -rx * dx, -rx * dy;
        a.row(2 * k + 1) << 0, 0, 0, dx, dy, 1, -ry * dx, -ry * dy;
        rhs(2 * k) = rx;
        rhs(2 * k + 1) = ry;
      }
      const Eigen::Matrix<double, 8, 1> h =
          a.colPivHouseholderQr().solve(rhs);
      if (!h.allFinite() || (a * h - rhs).norm() > 1e-6 * (1.0 + rhs.norm())) {
        ++out.degenerate_cells;
        continue;
      }
      Mat3 cell;
      cell << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), 1.0;

      double bx0 = def[0].x(), bx1 = def[0].x();
      double by0 = def[0].y(), by1 = def[0].y();
      for (int k = 1; k < 4; ++k) {
        bx0 = std::min(bx0, def[k].x());
        bx1 = std::max(bx1, def[k].x());
        by0 = std::min(by0, def[k].y());
        by1 = std::max(by1, def[k].y());
      }
      const int x_lo = std::max(0, static_cast<int>(std::floor(bx0)));
      const int x_hi =
          std::min(img.width - 1, static_cast<int>(std::ceil(bx1)));
      const int y_lo = std::max(0, static_cast<int>(std::floor(by0)));
      const int y_hi =
          std::min(img.height - 1, static_cast<int>(std::ceil(by1)));

      constexpr double kEps = 1e-6;
      for (int y = y_lo; y <= y_hi; ++y) {
        for (int x = x_lo; x <= x_hi; ++x) {
          const Vec3 q = cell * Vec3(x, y, 1.0);
          if (std::fabs(q.z()) < 1e-12) continue;
          const double px = q.x() / q.z();
          const double py = q.y() / q.z();
          if (px < rx0 - kEps || px > rx1 + kEps || py < ry0 - kEps ||
              py > ry1 + kEps)
            continue;
          if (!support_valid(mask, px, py)) continue;
          const auto s = sample_bilinear(img, px, py);
          if (!s) continue;
          for (int c = 0; c < img.channels; ++c)
            out.image.at(x, y, c) = (*s)[c];
          out.mask.set(x, y, true);
        }
      }
    }
  }
  return out;
}

RasterImage blend_linear(const RasterImage& a, const Mask& mask_a,
                         const RasterImage& b, const Mask& mask_b,
                         Mask* out_mask) {
  if (a.width != b.width || a.height != b.height || a.channels != b.channels ||
      mask_a.width != a.width || mask_a.height != a.height ||
      mask_b.width != b.width || mask_b.height != b.height)
    throw std::invalid_argument("blend inputs must share dimensions");

  const std::vector<double> da = distance_to_boundary(mask_a);
  const std::vector<double> db = distance_to_boundary(mask_b);
  RasterImage out = RasterImage::zeros(a.width, a.height, a.channels);
  Mask om = Mask::filled(a.width, a.height, 0);
  for (int y = 0; y < a.height; ++y)
    for (int x = 0; x < a.width; ++x) {
      const bool va = mask_a.at(x, y), vb = mask_b.at(x, y);
      if (!va && !vb) continue;
      const std::size_t i = static_cast<std::size_t>(y) * a.width + x;
      double wa;
      if (va && vb)
        wa = da[i] / (da[i] + db[i]);
      else
        wa = va ? 1.0 : 0.0;
      for (int c = 0; c < a.channels; ++c)
        out.at(x, y, c) = static_cast<float>(wa * a.at(x, y, c) +
                                             (1.0 - wa) * b.at(x, y, c));
      om.set(x, y, true);
    }
  if (out_mask) *out_mask = om;
  return out;
}

StitchResult stitch(const RasterImage& source, const RasterImage& target,
                    const StitchConfig& cfg,
                    const CorrespondenceSet* corr_override) {
  cfg.validate();
  if (source.empty() || target.empty())
    throw StitchError(Stage::Io, "input images must be nonempty");

  StitchResult result;
  StitchReport& report = result.report;
  report.config = cfg;
  report.config.ransac.seed = cfg.seed;
  report.source_width = source.width;
  report.source_height = source.height;
  report.target_width = target.width;
  report.target_height = target.height;

  // channel harmonization for compositing
  RasterImage src_color = source;
  RasterImage tgt_color = target;
  if (src_color.channels != tgt_color.channels) {
    src_color = expand_to_rgb(src_color);
    tgt_color = expand_to_rgb(tgt_color);
  }

  // stage 1: correspondences
  CorrespondenceSet set;
  if (corr_override) {
    set = *corr_override;
  } else {
    set.points = detect_and_match_points(source, target, cfg.detector);
    const LineMatchResult lines =
        detect_and_match_lines(source, target, cfg.detector, set.points);
    set.matched_lines = lines.matched;
    set.unmatched_lines = lines.unmatched_src;
  }
  validate_correspondences(set, source.width, source.height, target.width,
                           target.height);
  report.points_matched = static_cast<int>(set.points.size());
  report.lines_matched = static_cast<int>(set.matched_lines.size());
  report.lines_unmatched = static_cast<int>(set.unmatched_lines.size());
  if (set.points.size() < 4)
    throw StitchError(Stage::Features,
                      "need at least 4 point matches, found " +
                          std::to_string(set.points.size()));

  // stage 2: robust global homography
  RansacConfig rcfg = cfg.ransac;
  rcfg.seed = cfg.seed;
  const RansacResult fit = ransac_homography(set, rcfg);
  if (fit.point_inliers.size() < 4)
    throw StitchError(Stage::Ransac,
                      "only " + std::to_string(fit.point_inliers.size()) +
                          " point inliers; the mesh would be under-constrained");
  result.global = fit.model;
  report.homography = fit.model.H;
  report.ransac_iterations = fit.iterations;
  report.point_inliers = static_cast<int>(fit.point_inliers.size());
  report.line_inliers = static_cast<int>(fit.line_inliers.size());

  // keep inliers; demote rejected matched lines to collinearity-only segments
  CorrespondenceSet inliers;
  for (int i : fit.point_inliers) inliers.points.push_back(set.points[i]);
  {
    std::vector<char> is_line_inlier(set.matched_lines.size(), 0);
    for (int i : fit.line_inliers) is_line_inlier[i] = 1;
    for (std::size_t i = 0; i < set.matched_lines.size(); ++i) {
      if (is_line_inlier[i])
        inliers.matched_lines.push_back(set.matched_lines[i]);
      else
        inliers.unmatched_lines.push_back(set.matched_lines[i].seg);
    }
    for (const LineSegment& seg : set.unmatched_lines)
      inliers.unmatched_lines.push_back(seg);
  }

  // stage 3: shared canvas
  const WarpResult gw = warp_global(src_color, fit.model);
  if (gw.image.width < 2 || gw.image.height < 2)
    throw StitchError(Stage::Overlap, "warped source collapses to a sliver");
  const Vec2i origin(std::min(gw.offset.x(), 0), std::min(gw.offset.y(), 0));
  const int canvas_w =
      std::max(gw.offset.x() + gw.image.width, tgt_color.width) - origin.x();
  const int canvas_h =
      std::max(gw.offset.y() + gw.image.height, tgt_color.height) - origin.y();
  if (static_cast<long long>(canvas_w) * canvas_h > 100000000LL)
    throw StitchError(Stage::Overlap, "mosaic canvas is unreasonably large");
  const Vec2i src_off = gw.offset - origin;
  const Vec2i tgt_off = -origin;
  report.canvas_width = canvas_w;
  report.canvas_height = canvas_h;
  report.source_offset = src_off;
  report.target_offset = tgt_off;

  RasterImage src_canvas =
      RasterImage::zeros(canvas_w, canvas_h, src_color.channels);
  Mask src_mask = Mask::filled(canvas_w, canvas_h, 0);
  paste(src_canvas, src_mask, gw.image, &gw.mask, src_off.x(), src_off.y());
  RasterImage tgt_canvas =
      RasterImage::zeros(canvas_w, canvas_h, tgt_color.channels);
  Mask tgt_mask = Mask::filled(canvas_w, canvas_h, 0);
  paste(tgt_canvas, tgt_mask, tgt_color, nullptr, tgt_off.x(), tgt_off.y());

  long long overlap = 0;
  for (int y = 0; y < canvas_h; ++y)
    for (int x = 0; x < canvas_w; ++x)
      if (src_mask.at(x, y) && tgt_mask.at(x, y)) ++overlap;
  if (overlap == 0)
    throw StitchError(Stage::Overlap,
                      "globally aligned images do not overlap");

  report.rmse_ncc_global =
      rmse_ncc(src_canvas, src_mask, tgt_canvas, tgt_mask, cfg.metric).value;

  // stage 4: mesh refinement over a coarse-to-fine pyramid
  Mesh mesh;
  mesh.cells_x = cfg.mesh_cells_x;
  mesh.cells_y = cfg.mesh_cells_y;
  mesh.x0 = src_off.x();
  mesh.y0 = src_off.y();
  mesh.width = gw.image.width - 1;
  mesh.height = gw.image.height - 1;
  result.mesh = mesh;

  const Rect domain{mesh.x0, mesh.y0, mesh.x0 + mesh.width,
                    mesh.y0 + mesh.height};
  TransferStats tstats;
  const Vec2 shift(-origin.x(), -origin.y());
  const CorrespondenceSet canvas_corr =
      transfer_correspondences(inliers, fit.model, shift, domain, &tstats);
  report.dropped_points = tstats.dropped_points;
  report.dropped_lines = tstats.dropped_lines;

  const RasterImage src_lum = to_luminance(src_canvas);
  const RasterImage tgt_lum = to_luminance(tgt_canvas);
  const int min_dim =
      2 * std::max(cfg.mesh_cells_x + 1, cfg.mesh_cells_y + 1);
  const MaskedPyramid src_pyr =
      build_masked_pyramid(src_lum, src_mask, cfg.pyramid_levels, min_dim);
  const MaskedPyramid tgt_pyr =
      build_masked_pyramid(tgt_lum, tgt_mask, cfg.pyramid_levels, min_dim);
  const int levels = static_cast<int>(
      std::min(src_pyr.images.size(), tgt_pyr.images.size()));

  Eigen::VectorXd V;
  for (int level = levels - 1; level >= 0; --level) {
    const double scale = std::ldexp(1.0, -level);
    const Mesh level_mesh = mesh.scaled(scale);
    if (level == levels - 1)
      V = level_mesh.rest_positions();
    else
      V *= 2.0;

    const CorrespondenceSet level_corr =
        scale_correspondences(canvas_corr, scale);
    const RasterImage& lum = src_pyr.images[level];
    const Mask& lmask = src_pyr.masks[level];
    const RasterImage gmag = gradient_magnitude(lum).magnitude;
    const PhotometricTarget ptarget =
        make_photometric_target(tgt_pyr.images[level], tgt_pyr.masks[level]);
    const int stride = std::max(1, cfg.photometric_stride >> level);
    const PhotometricSamples samples =
        collect_photometric_samples(level_mesh, lum, gmag, lmask, stride);

    LevelTrace trace;
    trace.level = level;
    trace.width = lum.width;
    trace.height = lum.height;
    for (int it = 1; it <= cfg.max_iterations; ++it) {
      EnergySystem sys(level_mesh.dof_count());
      for (const PointMatch& m : level_corr.points)
        add_point_term(sys, level_mesh, m, cfg.weights.alpha);
      for (const LineMatch& m : level_corr.matched_lines) {
        add_line_term(sys, level_mesh, m, cfg.sampling, cfg.weights.beta);
        add_collinearity_term(sys, level_mesh, m.seg, cfg.sampling,
                              cfg.weights.delta);
      }
      for (const LineSegment& seg : level_corr.unmatched_lines)
        add_collinearity_term(sys, level_mesh, seg, cfg.sampling,
                              cfg.weights.delta);
      const PhotometricStats pstats = add_photometric_term(
          sys, samples, ptarget, V, cfg.weights.gamma, cfg.weights.lambda);
      add_similarity_term(sys, level_mesh, cfg.weights.eta);

      IterationTrace step;
      step.iteration = it;
      step.photometric_samples = pstats.used;
      step.photometric_skipped = pstats.skipped;
      step.energy_before = sys.evaluate(V);
      const Eigen::VectorXd next = sys.solve(V);
      step.energy_after = sys.evaluate(next);

      double disp = 0.0;
      for (int v = 0; v < level_mesh.vertex_count(); ++v)
        disp += std::hypot(next(2 * v) - V(2 * v),
                           next(2 * v + 1) - V(2 * v + 1));
      disp /= level_mesh.vertex_count();
      step.mean_displacement = disp;
      trace.iterations.push_back(step);
      V = next;
      if (disp < cfg.convergence_px) {
        trace.converged = true;
        break;
      }
    }
    report.levels.push_back(std::move(trace));
  }
  result.vertices = V;

  {
    const Eigen::VectorXd rest = mesh.rest_positions();
    double disp = 0.0;
    for (int v = 0; v < mesh.vertex_count(); ++v)
      disp += std::hypot(V(2 * v) - rest(2 * v), V(2 * v + 1) - rest(2 * v + 1));
    report.mean_vertex_displacement = disp / mesh.vertex_count();
  }

  // stage 5: render and blend
  MeshWarpResult refined = warp_mesh(src_canvas, src_mask, mesh, V);
  report.degenerate_cells = refined.degenerate_cells;

  const MetricResult refined_metric =
      rmse_ncc(refined.image, refined.mask, tgt_canvas, tgt_mask, cfg.metric);
  report.rmse_ncc_refined = refined_metric.value;
  report.metric_windows = refined_metric.windows;

  result.panorama = blend_linear(refined.image, refined.mask, tgt_canvas,
                                 tgt_mask, &result.panorama_mask);
  result.overlap_mask = Mask::filled(canvas_w, canvas_h, 0);
  for (int y = 0; y < canvas_h; ++y)
    for (int x = 0; x < canvas_w; ++x)
      result.overlap_mask.set(x, y,
                              refined.mask.at(x, y) && tgt_mask.at(x, y));
  result.warped_source = std::move(refined.image);
  result.warped_source_mask = std::move(refined.mask);
  result.target_canvas = std::move(tgt_canvas);
  result.target_canvas_mask = std::move(tgt_mask);
  return result;
}

nlohmann::ordered_json StitchReport::to_json() const {
  using json = nlohmann::ordered_json;
  json j;
  j["inputs"] = {{"source", {source_width, source_height}},
                 {"target", {target_width, target_height}}};
  j["correspondences"] = {{"points", points_matched},
                          {"lines_matched", lines_matched},
                          {"lines_unmatched", lines_unmatched},
                          {"dropped_points", dropped_points},
                          {"dropped_lines", dropped_lines}};
  json h = json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) h.push_back(homography(r, c));
  j["global"] = {{"homography", h},
                 {"ransac_iterations", ransac_iterations},
                 {"point_inliers", point_inliers},
                 {"line_inliers", line_inliers}};
  j["canvas"] = {{"width", canvas_width},
                 {"height", canvas_height},
                 {"source_offset", {source_offset.x(), source_offset.y()}},
                 {"target_offset", {target_offset.x(), target_offset.y()}}};
  json level_list = json::array();
  for (const LevelTrace& lt : levels) {
    json steps = json::array();
    for (const IterationTrace& st : lt.iterations)
      steps.push_back({{"iteration", st.iteration},
                       {"mean_displacement", st.mean_displacement},
                       {"energy_before", st.energy_before},
                       {"energy_after", st.energy_after},
                       {"photometric_samples", st.photometric_samples},
                       {"photometric_skipped", st.photometric_skipped}});
    level_list.push_back({{"level", lt.level},
                          {"width", lt.width},
                          {"height", lt.height},
                          {"converged", lt.converged},
                          {"iterations", steps}});
  }
  j["refinement"] = {{"mesh", {config.mesh_cells_x, config.mesh_cells_y}},
                     {"levels", level_list},
                     {"mean_vertex_displacement", mean_vertex_displacement},
                     {"degenerate_cells", degenerate_cells}};
  j["metrics"] = {{"rmse_ncc_global", rmse_ncc_global},
                  {"rmse_ncc_refined", rmse_ncc_refined},
                  {"overlap_windows", metric_windows},
                  {"window", config.metric.window}};
  j["config"] = {{"seed", config.seed},
                 {"mesh", {config.mesh_cells_x, config.mesh_cells_y}},
                 {"pyramid_levels", config.pyramid_levels},
                 {"max_iterations", config.max_iterations},
                 {"convergence_px", config.convergence_px},
                 {"photometric_stride", config.photometric_stride},
                 {"weights",
                  {{"alpha", config.weights.alpha},
                   {"beta", config.weights.beta},
                   {"gamma", config.weights.gamma},
                   {"delta", config.weights.delta},
                   {"eta", config.weights.eta},
                   {"lambda", config.weights.lambda}}},
                 {"metric_window", config.metric.window}};
  return j;
}

}  // namespace meshstitch
