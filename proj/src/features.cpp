#include "meshstitch/features.hpp"

#include "meshstitch/geometry.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <numeric>

namespace meshstitch {

Vec3 line_through(const Vec2& a, const Vec2& b) {
  Vec3 l = Vec3(a.x(), a.y(), 1.0).cross(Vec3(b.x(), b.y(), 1.0));
  const double n = std::hypot(l.x(), l.y());
  if (n < 1e-12)
    throw StitchError(Stage::Features, "degenerate line through coincident points");
  return l / n;
}

LineMatch LineMatch::from_segments(const LineSegment& src, const LineSegment& dst) {
  LineMatch m;
  m.seg = src;
  m.seg_prime = dst;
  m.line_prime = line_through(dst.p_s, dst.p_e);
  return m;
}

namespace {

constexpr double kKernel5[5] = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};

inline int reflect(int i, int n) {
  if (n == 1) return 0;
  if (i < 0) i = -i;
  if (i >= n) i = 2 * n - 2 - i;
  return std::clamp(i, 0, n - 1);
}

RasterImage blur5(const RasterImage& img) {
  const int w = img.width, h = img.height;
  RasterImage tmp = RasterImage::zeros(w, h, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int k = -2; k <= 2; ++k)
        acc += kKernel5[k + 2] * img.at(reflect(x + k, w), y);
      tmp.at(x, y) = static_cast<float>(acc);
    }
  RasterImage out = RasterImage::zeros(w, h, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int k = -2; k <= 2; ++k)
        acc += kKernel5[k + 2] * tmp.at(x, reflect(y + k, h));
      out.at(x, y) = static_cast<float>(acc);
    }
  return out;
}

struct Corner {
  int x, y;
  double response;
};

std::vector<Corner> harris_corners(const RasterImage& lum,
                                   const DetectorConfig& cfg) {
  const int w = lum.width, h = lum.height;
  RasterImage gx, gy;
  gradient_xy(lum, gx, gy);
  RasterImage ixx = RasterImage::zeros(w, h, 1);
  RasterImage iyy = RasterImage::zeros(w, h, 1);
  RasterImage ixy = RasterImage::zeros(w, h, 1);
  for (std::size_t i = 0; i < ixx.samples.size(); ++i) {
    const double dx = gx.samples[i], dy = gy.samples[i];
    ixx.samples[i] = static_cast<float>(dx * dx);
    iyy.samples[i] = static_cast<float>(dy * dy);
    ixy.samples[i] = static_cast<float>(dx * dy);
  }
  ixx = blur5(ixx);
  iyy = blur5(iyy);
  ixy = blur5(ixy);

  std::vector<double> response(static_cast<std::size_t>(w) * h, 0.0);
  double max_r = 0.0;
  for (std::size_t i = 0; i < response.size(); ++i) {
    const double a = ixx.samples[i], b = iyy.samples[i], c = ixy.samples[i];
    const double det = a * b - c * c;
    const double tr = a + b;
    response[i] = det - cfg.harris_k * tr * tr;
    max_r = std::max(max_r, response[i]);
  }
  if (max_r <= 0.0) return {};

  const double threshold = cfg.harris_quality * max_r;
  const int margin = cfg.patch_size / 2 + 1;
  const int r = cfg.nms_radius;
  std::vector<Corner> corners;
  for (int y = margin; y < h - margin; ++y) {
    for (int x = margin; x < w - margin; ++x) {
      const double v = response[static_cast<std::size_t>(y) * w + x];
      if (v < threshold) continue;
      bool is_max = true;
      for (int dy = -r; dy <= r && is_max; ++dy) {
        const int yy = y + dy;
        if (yy < 0 || yy >= h) continue;
        for (int dx = -r; dx <= r; ++dx) {
          const int xx = x + dx;
          if (xx < 0 || xx >= w || (dx == 0 && dy == 0)) continue;
          const double u = response[static_cast<std::size_t>(yy) * w + xx];
          // strict on earlier pixels, non-strict after, so plateaus keep one corner
          if (u > v || (u == v && (dy < 0 || (dy == 0 && dx < 0)))) {
            is_max = false;
            break;
          }
        }
      }
      if (is_max) corners.push_back({x, y, v});
    }
  }
  std::sort(corners.begin(), corners.end(), [](const Corner& a, const Corner& b) {
    if (a.response != b.response) return a.response > b.response;
    return a.y != b.y ? a.y < b.y : a.x < b.x;
  });
  if (static_cast<int>(corners.size()) > cfg.max_corners)
    corners.resize(cfg.max_corners);
  return corners;
}

// mean-subtracted, L2-normalized patch; empty when flat
std::vector<float> patch_descriptor(const RasterImage& lum, int cx, int cy,
                                    int patch) {
  const int r = patch / 2;
  std::vector<float> d(static_cast<std::size_t>(patch) * patch);
  double mean = 0.0;
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx) {
      const float v = lum.at(cx + dx, cy + dy);
      d[static_cast<std::size_t>(dy + r) * patch + (dx + r)] = v;
      mean += v;
    }
  mean /= static_cast<double>(d.size());
  double norm2 = 0.0;
  for (auto& v : d) {
    v = static_cast<float>(v - mean);
    norm2 += static_cast<double>(v) * v;
  }
  if (norm2 < 1e-12) return {};
  const float inv = static_cast<float>(1.0 / std::sqrt(norm2));
  for (auto& v : d) v *= inv;
  return d;
}

double ncc(const std::vector<float>& a, const std::vector<float>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    acc += static_cast<double>(a[i]) * b[i];
  return acc;
}

}  // namespace

std::vector<PointMatch> detect_and_match_points(const RasterImage& src,
                                                const RasterImage& dst,
                                                const DetectorConfig& cfg) {
  const RasterImage src_lum = to_luminance(src);
  const RasterImage dst_lum = to_luminance(dst);
  const std::vector<Corner> src_corners = harris_corners(src_lum, cfg);
  const std::vector<Corner> dst_corners = harris_corners(dst_lum, cfg);
  if (src_corners.empty() || dst_corners.empty()) return {};

  std::vector<std::vector<float>> src_desc(src_corners.size());
  std::vector<std::vector<float>> dst_desc(dst_corners.size());
  for (std::size_t i = 0; i < src_corners.size(); ++i)
    src_desc[i] = patch_descriptor(src_lum, src_corners[i].x, src_corners[i].y,
                                   cfg.patch_size);
  for (std::size_t j = 0; j < dst_corners.size(); ++j)
    dst_desc[j] = patch_descriptor(dst_lum, dst_corners[j].x, dst_corners[j].y,
                                   cfg.patch_size);

  const double ratio2 = cfg.ratio_test * cfg.ratio_test;
  std::vector<int> best_for_src(src_corners.size(), -1);
  std::vector<double> best_ncc(src_corners.size(), -2.0);
  for (std::size_t i = 0; i < src_corners.size(); ++i) {
    if (src_desc[i].empty()) continue;
    double first = -2.0, second = -2.0;
    int arg = -1;
    for (std::size_t j = 0; j < dst_corners.size(); ++j) {
      if (dst_desc[j].empty()) continue;
      const double v = ncc(src_desc[i], dst_desc[j]);
      if (v > first) {
        second = first;
        first = v;
        arg = static_cast<int>(j);
      } else if (v > second) {
        second = v;
      }
    }
    if (arg < 0 || first < cfg.min_ncc) continue;
    // Lowe-style ratio on descriptor distance: ||a-b||^2 = 2(1-ncc)
    if (second > -1.5 && (1.0 - first) > ratio2 * (1.0 - second)) continue;
    best_for_src[i] = arg;
    best_ncc[i] = first;
  }

  std::vector<int> best_for_dst(dst_corners.size(), -1);
  std::vector<double> best_for_dst_ncc(dst_corners.size(), -2.0);
  for (std::size_t j = 0; j < dst_corners.size(); ++j) {
    if (dst_desc[j].empty()) continue;
    for (std::size_t i = 0; i < src_corners.size(); ++i) {
      if (src_desc[i].empty()) continue;
      const double v = ncc(src_desc[i], dst_desc[j]);
      if (v > best_for_dst_ncc[j]) {
        best_for_dst_ncc[j] = v;
        best_for_dst[j] = static_cast<int>(i);
      }
    }
  }

  std::vector<PointMatch> matches;
  for (std::size_t i = 0; i < src_corners.size(); ++i) {
    const int j = best_for_src[i];
    if (j < 0 || best_for_dst[j] != static_cast<int>(i)) continue;
    PointMatch m;
    m.p = Vec2(src_corners[i].x, src_corners[i].y);
    m.p_prime = Vec2(dst_corners[j].x, dst_corners[j].y);
    m.score = std::clamp(0.5 * (1.0 + best_ncc[i]), 0.0, 1.0);
    matches.push_back(m);
  }
  std::stable_sort(matches.begin(), matches.end(),
                   [](const PointMatch& a, const PointMatch& b) {
                     return a.score > b.score;
                   });
  return matches;
}

namespace {

struct EdgePixel {
  int x, y;
  double mag, angle;
};

}  // namespace

std::vector<LineSegment> detect_lines(const RasterImage& img,
                                      const DetectorConfig& cfg) {
  const RasterImage lum = to_luminance(img);
  const int w = lum.width, h = lum.height;
  RasterImage gx, gy;
  gradient_xy(lum, gx, gy);

  std::vector<double> mag(static_cast<std::size_t>(w) * h);
  std::vector<double> angle(mag.size());
  std::vector<int> order;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      const double dx = gx.samples[i], dy = gy.samples[i];
      mag[i] = std::hypot(dx, dy);
      angle[i] = std::atan2(dy, dx);
      if (mag[i] >= cfg.grad_threshold) order.push_back(static_cast<int>(i));
    }
  // strongest seeds first; ties broken by index for determinism
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (mag[a] != mag[b]) return mag[a] > mag[b];
    return a < b;
  });

  const double tol = cfg.chain_angle_tol_deg * M_PI / 180.0;
  auto angle_close = [&](double a, double b) {
    double d = std::fabs(a - b);
    if (d > M_PI) d = 2.0 * M_PI - d;
    return d <= tol;
  };

  std::vector<std::uint8_t> used(mag.size(), 0);
  std::vector<LineSegment> segments;
  std::vector<int> region;
  for (int seed : order) {
    if (used[seed]) continue;
    const double seed_angle = angle[seed];
    region.clear();
    region.push_back(seed);
    used[seed] = 1;
    for (std::size_t head = 0; head < region.size(); ++head) {
      const int cx = region[head] % w;
      const int cy = region[head] / w;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0) continue;
          const int nx = cx + dx, ny = cy + dy;
          if (nx < 0 || nx >= w || ny < 0 || ny >= h) continue;
          const std::size_t ni = static_cast<std::size_t>(ny) * w + nx;
          if (used[ni] || mag[ni] < cfg.grad_threshold) continue;
          if (!angle_close(angle[ni], seed_angle)) continue;
          used[ni] = 1;
          region.push_back(static_cast<int>(ni));
        }
    }
    if (region.size() < 2) continue;

    // PCA fit: centroid + dominant direction
    double mx = 0.0, my = 0.0;
    for (int i : region) {
      mx += i % w;
      my += i / w;
    }
    mx /= region.size();
    my /= region.size();
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (int i : region) {
      const double ex = i % w - mx, ey = i / w - my;
      sxx += ex * ex;
      sxy += ex * ey;
      syy += ey * ey;
    }
    const double tr = sxx + syy;
    const double det = sxx * syy - sxy * sxy;
    const double lam = 0.5 * (tr + std::sqrt(std::max(0.0, tr * tr - 4.0 * det)));
    Vec2 dir(lam - syy, sxy);
    if (dir.norm() < 1e-9) dir = Vec2(sxy, lam - sxx);
    if (dir.norm() < 1e-9) dir = Vec2(1.0, 0.0);
    dir.normalize();

    double tmin = 1e18, tmax = -1e18, dev2 = 0.0;
    for (int i : region) {
      const Vec2 e(i % w - mx, i / w - my);
      const double t = e.dot(dir);
      const double o = e.x() * -dir.y() + e.y() * dir.x();
      tmin = std::min(tmin, t);
      tmax = std::max(tmax, t);
      dev2 += o * o;
    }
    if (std::sqrt(dev2 / region.size()) > cfg.max_line_rms_dev) continue;
    if (tmax - tmin < cfg.min_line_length) continue;

    LineSegment seg;
    seg.p_s = Vec2(mx, my) + tmin * dir;
    seg.p_e = Vec2(mx, my) + tmax * dir;
    if (seg.p_e.x() < seg.p_s.x() ||
        (seg.p_e.x() == seg.p_s.x() && seg.p_e.y() < seg.p_s.y()))
      std::swap(seg.p_s, seg.p_e);
    segments.push_back(seg);
  }
  // stable output order: by start point, then end point
  std::sort(segments.begin(), segments.end(),
            [](const LineSegment& a, const LineSegment& b) {
              if (a.p_s.x() != b.p_s.x()) return a.p_s.x() < b.p_s.x();
              if (a.p_s.y() != b.p_s.y()) return a.p_s.y() < b.p_s.y();
              if (a.p_e.x() != b.p_e.x()) return a.p_e.x() < b.p_e.x();
              return a.p_e.y() < b.p_e.y();
            });
  return segments;
}

namespace {

double segment_angle(const Vec2& a, const Vec2& b) {
  const Vec2 d = b - a;
  double ang = std::atan2(d.y(), d.x());
  if (ang < 0) ang += M_PI;  // undirected
  if (ang >= M_PI) ang -= M_PI;
  return ang;
}

double angle_diff_mod_pi(double a, double b) {
  double d = std::fabs(a - b);
  if (d > M_PI / 2) d = M_PI - d;
  return d;
}

double point_line_distance(const Vec2& p, const Vec3& line) {
  return std::fabs(line.x() * p.x() + line.y() * p.y() + line.z());
}

}  // namespace

LineMatchResult detect_and_match_lines(const RasterImage& src,
                                       const RasterImage& dst,
                                       const DetectorConfig& cfg,
                                       std::vector<PointMatch> pre_matches) {
  LineMatchResult result;
  const std::vector<LineSegment> src_segs = detect_lines(src, cfg);
  const std::vector<LineSegment> dst_segs = detect_lines(dst, cfg);
  if (src_segs.empty()) return result;
  if (dst_segs.empty()) {
    result.unmatched_src = src_segs;
    return result;
  }

  // pre-homography for candidate transfer; identity when points are too few
  Homography pre;
  if (pre_matches.empty())
    pre_matches = detect_and_match_points(src, dst, cfg);
  if (pre_matches.size() >= 4) {
    CorrespondenceSet point_only;
    point_only.points = pre_matches;
    RansacConfig rcfg;
    rcfg.min_consensus = 4;  // pre-fit only guides candidate search
    try {
      pre = ransac_homography(point_only, rcfg).model;
    } catch (const StitchError&) {
      // keep identity fallback
    }
  }

  const double angle_tol = cfg.line_match_angle_deg * M_PI / 180.0;
  std::vector<Vec3> dst_lines(dst_segs.size());
  std::vector<double> dst_angles(dst_segs.size());
  for (std::size_t j = 0; j < dst_segs.size(); ++j) {
    dst_lines[j] = line_through(dst_segs[j].p_s, dst_segs[j].p_e);
    dst_angles[j] = segment_angle(dst_segs[j].p_s, dst_segs[j].p_e);
  }

  for (const LineSegment& s : src_segs) {
    const Vec2 qs = pre.apply(s.p_s);
    const Vec2 qe = pre.apply(s.p_e);
    const double pred_angle = segment_angle(qs, qe);
    const double pred_len = (qe - qs).norm();

    int best = -1;
    double best_overlap = 0.0, best_dist = 1e18;
    for (std::size_t j = 0; j < dst_segs.size(); ++j) {
      if (angle_diff_mod_pi(pred_angle, dst_angles[j]) > angle_tol) continue;
      const double ds = point_line_distance(qs, dst_lines[j]);
      const double de = point_line_distance(qe, dst_lines[j]);
      if (std::max(ds, de) > cfg.line_match_dist) continue;
      // overlap of projections onto the target segment direction
      const Vec2 d = (dst_segs[j].p_e - dst_segs[j].p_s).normalized();
      const double a0 = 0.0, a1 = (dst_segs[j].p_e - dst_segs[j].p_s).norm();
      double b0 = (qs - dst_segs[j].p_s).dot(d);
      double b1 = (qe - dst_segs[j].p_s).dot(d);
      if (b0 > b1) std::swap(b0, b1);
      const double overlap = std::min(a1, b1) - std::max(a0, b0);
      const double min_len = std::min(a1 - a0, std::max(pred_len, 1e-9));
      if (overlap < cfg.line_match_overlap * min_len) continue;
      const double dist = 0.5 * (ds + de);
      if (overlap > best_overlap ||
          (overlap == best_overlap && dist < best_dist)) {
        best = static_cast<int>(j);
        best_overlap = overlap;
        best_dist = dist;
      }
    }
    if (best >= 0)
      result.matched.push_back(LineMatch::from_segments(s, dst_segs[best]));
    else
      result.unmatched_src.push_back(s);
  }
  return result;
}

namespace {

using nlohmann::json;

Vec2 parse_xy(const json& arr, const std::string& where, std::size_t offset) {
  const double x = arr.at(offset).get<double>();
  const double y = arr.at(offset + 1).get<double>();
  if (!std::isfinite(x) || !std::isfinite(y))
    throw StitchError(Stage::Features, where + ": non-finite coordinate");
  return Vec2(x, y);
}

LineSegment parse_segment(const json& arr, const std::string& where,
                          double min_len) {
  if (!arr.is_array() || arr.size() != 4)
    throw StitchError(Stage::Features,
                      where + ": expected [xs,ys,xe,ye] array of 4 numbers");
  LineSegment seg{parse_xy(arr, where, 0), parse_xy(arr, where, 2)};
  if (seg.length() < min_len)
    throw StitchError(Stage::Features,
                      where + ": segment length " + std::to_string(seg.length()) +
                          " below minimum " + std::to_string(min_len));
  return seg;
}

}  // namespace

CorrespondenceSet load_correspondences(const std::string& path,
                                       double min_line_length) {
  std::ifstream in(path);
  if (!in)
    throw StitchError(Stage::Features, "cannot open correspondence file: " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw StitchError(Stage::Features,
                      "parse error in " + path + ": " + e.what());
  }

  CorrespondenceSet set;
  try {
    if (doc.contains("points")) {
      const json& pts = doc.at("points");
      for (std::size_t i = 0; i < pts.size(); ++i) {
        const std::string where = "points[" + std::to_string(i) + "]";
        const json& row = pts.at(i);
        if (!row.is_array() || row.size() != 4)
          throw StitchError(Stage::Features,
                            where + ": expected [x1,y1,x2,y2] array of 4 numbers");
        PointMatch m;
        m.p = parse_xy(row, where, 0);
        m.p_prime = parse_xy(row, where, 2);
        m.score = 1.0;
        set.points.push_back(m);
      }
    }
    if (doc.contains("lines_matched")) {
      const json& lm = doc.at("lines_matched");
      for (std::size_t i = 0; i < lm.size(); ++i) {
        const std::string where = "lines_matched[" + std::to_string(i) + "]";
        const json& row = lm.at(i);
        if (!row.is_object() || !row.contains("src") || !row.contains("dst"))
          throw StitchError(Stage::Features,
                            where + ": expected {\"src\":[...],\"dst\":[...]}");
        set.matched_lines.push_back(LineMatch::from_segments(
            parse_segment(row.at("src"), where + ".src", min_line_length),
            parse_segment(row.at("dst"), where + ".dst", min_line_length)));
      }
    }
    if (doc.contains("lines_unmatched")) {
      const json& lu = doc.at("lines_unmatched");
      for (std::size_t i = 0; i < lu.size(); ++i) {
        const std::string where = "lines_unmatched[" + std::to_string(i) + "]";
        set.unmatched_lines.push_back(
            parse_segment(lu.at(i), where, min_line_length));
      }
    }
  } catch (const json::exception& e) {
    throw StitchError(Stage::Features,
                      "invalid correspondence file " + path + ": " + e.what());
  }
  return set;
}

void save_correspondences(const std::string& path, const CorrespondenceSet& set) {
  nlohmann::ordered_json doc;
  doc["points"] = json::array();
  for (const PointMatch& m : set.points)
    doc["points"].push_back(
        {m.p.x(), m.p.y(), m.p_prime.x(), m.p_prime.y()});
  doc["lines_matched"] = json::array();
  for (const LineMatch& m : set.matched_lines) {
    nlohmann::ordered_json row;
    row["src"] = {m.seg.p_s.x(), m.seg.p_s.y(), m.seg.p_e.x(), m.seg.p_e.y()};
    row["dst"] = {m.seg_prime.p_s.x(), m.seg_prime.p_s.y(), m.seg_prime.p_e.x(),
                  m.seg_prime.p_e.y()};
    doc["lines_matched"].push_back(row);
  }
  doc["lines_unmatched"] = json::array();
  for (const LineSegment& s : set.unmatched_lines)
    doc["lines_unmatched"].push_back({s.p_s.x(), s.p_s.y(), s.p_e.x(), s.p_e.y()});

  std::ofstream out(path);
  if (!out)
    throw StitchError(Stage::Io, "cannot write correspondence file: " + path);
  out << doc.dump(2) << "\n";
}

}  // namespace meshstitch
