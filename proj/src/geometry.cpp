#include "meshstitch/geometry.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <random>

namespace meshstitch {

namespace {

constexpr double kHomogeneousEps = 1e-12;
constexpr double kMaxCondition = 1e12;

Vec2 dehomogenize(const Vec3& q, Stage stage, const char* what) {
  if (std::fabs(q.z()) < kHomogeneousEps)
    throw StitchError(stage, std::string(what) + ": point maps to infinity");
  return Vec2(q.x() / q.z(), q.y() / q.z());
}

}  // namespace

Vec2 Homography::apply(const Vec2& p) const {
  return dehomogenize(H * Vec3(p.x(), p.y(), 1.0), Stage::Overlap,
                      "homography apply");
}

Homography Homography::normalized() const {
  const double f = H.norm();
  if (f < kHomogeneousEps)
    throw StitchError(Stage::Ransac, "homography is numerically zero");
  Mat3 m = H / f;
  double pivot = m(2, 2);
  if (std::fabs(pivot) < 1e-9) {
    // fall back to the largest-magnitude entry to fix the sign
    double best = 0.0;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c)
        if (std::fabs(m(r, c)) > std::fabs(best)) best = m(r, c);
    pivot = best;
  }
  if (pivot < 0.0) m = -m;
  return Homography{m};
}

Homography Homography::inverse() const {
  const double det = H.determinant();
  if (std::fabs(det) < 1e-15)
    throw StitchError(Stage::Overlap, "homography is not invertible");
  return Homography{H.inverse()}.normalized();
}

namespace {

// Translate-and-scale so the given points have zero centroid and RMS sqrt(2).
Mat3 hartley_transform(const std::vector<Vec2>& pts) {
  Vec2 c = Vec2::Zero();
  for (const Vec2& p : pts) c += p;
  c /= static_cast<double>(pts.size());
  double rms = 0.0;
  for (const Vec2& p : pts) rms += (p - c).squaredNorm();
  rms = std::sqrt(rms / static_cast<double>(pts.size()));
  if (rms < 1e-12)
    throw StitchError(Stage::Ransac,
                      "degenerate correspondence set: all positions coincide");
  const double s = std::sqrt(2.0) / rms;
  Mat3 t;
  t << s, 0, -s * c.x(), 0, s, -s * c.y(), 0, 0, 1;
  return t;
}

Vec2 apply_affine(const Mat3& t, const Vec2& p) {
  return Vec2(t(0, 0) * p.x() + t(0, 2), t(1, 1) * p.y() + t(1, 2));
}

}  // namespace

Homography dlt_estimate(const std::vector<PointMatch>& points,
                        const std::vector<LineMatch>& lines) {
  const int rows = 2 * static_cast<int>(points.size() + lines.size());
  if (rows < 8)
    throw StitchError(Stage::Ransac,
                      "not enough correspondences for a homography: " +
                          std::to_string(rows) + " constraint rows, need 8");

  std::vector<Vec2> src, dst;
  for (const PointMatch& m : points) {
    src.push_back(m.p);
    dst.push_back(m.p_prime);
  }
  for (const LineMatch& m : lines) {
    src.push_back(m.seg.p_s);
    src.push_back(m.seg.p_e);
    dst.push_back(m.seg_prime.p_s);
    dst.push_back(m.seg_prime.p_e);
  }
  const Mat3 t1 = hartley_transform(src);
  const Mat3 t2 = hartley_transform(dst);

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(rows, 9);
  int r = 0;
  for (const PointMatch& m : points) {
    const Vec2 p = apply_affine(t1, m.p);
    const Vec2 q = apply_affine(t2, m.p_prime);
    a.row(r++) << 0, 0, 0, -p.x(), -p.y(), -1, q.y() * p.x(), q.y() * p.y(),
        q.y();
    a.row(r++) << p.x(), p.y(), 1, 0, 0, 0, -q.x() * p.x(), -q.x() * p.y(),
        -q.x();
  }
  for (const LineMatch& m : lines) {
    const Vec3 l = line_through(apply_affine(t2, m.seg_prime.p_s),
                                apply_affine(t2, m.seg_prime.p_e));
    for (const Vec2& e : {m.seg.p_s, m.seg.p_e}) {
      const Vec2 p = apply_affine(t1, e);
      a.row(r++) << l.x() * p.x(), l.x() * p.y(), l.x(), l.y() * p.x(),
          l.y() * p.y(), l.y(), l.z() * p.x(), l.z() * p.y(), l.z();
    }
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  // a homography has 8 dof: the system must constrain all of them
  if (sv.size() < 8 || sv(7) <= 1e-10 * sv(0))
    throw StitchError(Stage::Ransac,
                      "rank-deficient correspondence configuration");
  const Eigen::VectorXd hvec = svd.matrixV().col(8);
  Mat3 hn;
  hn << hvec(0), hvec(1), hvec(2), hvec(3), hvec(4), hvec(5), hvec(6), hvec(7),
      hvec(8);

  const Homography h = Homography::from_matrix(t2.inverse() * hn * t1);
  Eigen::JacobiSVD<Mat3> cond(h.H);
  const auto& cs = cond.singularValues();
  if (cs(2) < kHomogeneousEps || cs(0) / cs(2) > kMaxCondition)
    throw StitchError(Stage::Ransac, "estimated homography is near-singular");
  return h;
}

namespace {

bool point_is_inlier(const Homography& h, const PointMatch& m, double thr) {
  const Vec3 q = h.H * Vec3(m.p.x(), m.p.y(), 1.0);
  if (std::fabs(q.z()) < kHomogeneousEps) return false;
  const Vec2 mapped(q.x() / q.z(), q.y() / q.z());
  return (mapped - m.p_prime).norm() <= thr;
}

bool line_is_inlier(const Homography& h, const LineMatch& m, double thr) {
  for (const Vec2& e : {m.seg.p_s, m.seg.p_e}) {
    const Vec3 q = h.H * Vec3(e.x(), e.y(), 1.0);
    if (std::fabs(q.z()) < kHomogeneousEps) return false;
    const double d = std::fabs(m.line_prime.x() * (q.x() / q.z()) +
                               m.line_prime.y() * (q.y() / q.z()) +
                               m.line_prime.z());
    if (d > thr) return false;
  }
  return true;
}

struct InlierSets {
  std::vector<int> points, lines;
  int total() const {
    return static_cast<int>(points.size() + lines.size());
  }
};

InlierSets classify_inliers(const Homography& h, const CorrespondenceSet& set,
                            double thr) {
  InlierSets out;
  for (std::size_t i = 0; i < set.points.size(); ++i)
    if (point_is_inlier(h, set.points[i], thr))
      out.points.push_back(static_cast<int>(i));
  for (std::size_t i = 0; i < set.matched_lines.size(); ++i)
    if (line_is_inlier(h, set.matched_lines[i], thr))
      out.lines.push_back(static_cast<int>(i));
  return out;
}

Homography fit_to_inliers(const CorrespondenceSet& set, const InlierSets& in) {
  std::vector<PointMatch> pts;
  std::vector<LineMatch> lns;
  for (int i : in.points) pts.push_back(set.points[i]);
  for (int i : in.lines) lns.push_back(set.matched_lines[i]);
  return dlt_estimate(pts, lns);
}

}  // namespace

RansacResult ransac_homography(const CorrespondenceSet& set,
                               const RansacConfig& cfg) {
  const int n_points = static_cast<int>(set.points.size());
  if (n_points < 4)
    throw StitchError(Stage::Ransac,
                      "need at least 4 point matches, have " +
                          std::to_string(n_points));

  std::mt19937_64 rng(cfg.seed);
  auto draw = [&](int n) { return static_cast<int>(rng() % n); };

  InlierSets best;
  Homography best_model;
  bool have_model = false;
  int required = cfg.max_iterations;
  int it = 0;
  while (it < required && it < cfg.max_iterations) {
    ++it;
    int idx[4];
    for (int k = 0; k < 4;) {
      const int cand = draw(n_points);
      bool dup = false;
      for (int j = 0; j < k; ++j) dup = dup || idx[j] == cand;
      if (!dup) idx[k++] = cand;
    }
    std::vector<PointMatch> sample;
    for (int k = 0; k < 4; ++k) sample.push_back(set.points[idx[k]]);
    Homography h;
    try {
      h = dlt_estimate(sample, {});
    } catch (const StitchError&) {
      continue;  // degenerate sample
    }
    const InlierSets in = classify_inliers(h, set, cfg.threshold);
    if (in.total() > best.total()) {
      best = in;
      best_model = h;
      have_model = true;
      const double w =
          static_cast<double>(in.points.size()) / static_cast<double>(n_points);
      const double w4 = std::min(0.999999, w * w * w * w);
      if (w4 > 0.0) {
        const double need =
            std::log(1.0 - cfg.confidence) / std::log(1.0 - w4);
        required = static_cast<int>(std::clamp(
            std::ceil(need), 1.0, static_cast<double>(cfg.max_iterations)));
      }
    }
  }

  if (!have_model || best.total() < cfg.min_consensus)
    throw StitchError(Stage::Ransac,
                      "consensus too small: " + std::to_string(best.total()) +
                          " inliers, need " + std::to_string(cfg.min_consensus));

  // two refit rounds so the reported inliers hold under the reported model
  Homography model = fit_to_inliers(set, best);
  InlierSets in = classify_inliers(model, set, cfg.threshold);
  if (in.total() >= 8) {
    model = fit_to_inliers(set, in);
    in = classify_inliers(model, set, cfg.threshold);
  }
  if (in.total() < cfg.min_consensus)
    throw StitchError(Stage::Ransac,
                      "consensus collapsed after refit: " +
                          std::to_string(in.total()) + " inliers, need " +
                          std::to_string(cfg.min_consensus));

  RansacResult result;
  result.model = model;
  result.point_inliers = std::move(in.points);
  result.line_inliers = std::move(in.lines);
  result.iterations = it;
  return result;
}

Eigen::VectorXd Mesh::rest_positions() const {
  Eigen::VectorXd v(dof_count());
  for (int iy = 0; iy < vertex_rows(); ++iy)
    for (int ix = 0; ix < vertex_cols(); ++ix) {
      const Vec2 p = rest_vertex(ix, iy);
      const int vi = vertex_index(ix, iy);
      v(2 * vi) = p.x();
      v(2 * vi + 1) = p.y();
    }
  return v;
}

Mesh Mesh::scaled(double s) const {
  Mesh m = *this;
  m.x0 *= s;
  m.y0 *= s;
  m.width *= s;
  m.height *= s;
  return m;
}

bool Mesh::contains(const Vec2& p, double eps) const {
  return p.x() >= x0 - eps && p.x() <= x0 + width + eps && p.y() >= y0 - eps &&
         p.y() <= y0 + height + eps;
}

BilinearAnchor anchor_point(const Mesh& mesh, const Vec2& p) {
  if (!mesh.contains(p, 1e-6))
    throw StitchError(Stage::Overlap, "point outside deformation grid");
  const double fx = (p.x() - mesh.x0) / mesh.cell_width();
  const double fy = (p.y() - mesh.y0) / mesh.cell_height();
  const int ix = std::clamp(static_cast<int>(std::floor(fx)), 0, mesh.cells_x - 1);
  const int iy = std::clamp(static_cast<int>(std::floor(fy)), 0, mesh.cells_y - 1);
  const double u = std::clamp(fx - ix, 0.0, 1.0);
  const double v = std::clamp(fy - iy, 0.0, 1.0);
  BilinearAnchor a;
  a.v[0] = mesh.vertex_index(ix, iy);
  a.v[1] = mesh.vertex_index(ix + 1, iy);
  a.v[2] = mesh.vertex_index(ix, iy + 1);
  a.v[3] = mesh.vertex_index(ix + 1, iy + 1);
  a.w[0] = (1.0 - u) * (1.0 - v);
  a.w[1] = u * (1.0 - v);
  a.w[2] = (1.0 - u) * v;
  a.w[3] = u * v;
  return a;
}

Vec2 anchor_interpolate(const BilinearAnchor& a, const Eigen::VectorXd& V) {
  Vec2 p = Vec2::Zero();
  for (int k = 0; k < 4; ++k)
    p += a.w[k] * Vec2(V(2 * a.v[k]), V(2 * a.v[k] + 1));
  return p;
}

WarpResult warp_global(const RasterImage& src, const Homography& h) {
  if (src.empty())
    throw StitchError(Stage::Overlap, "cannot warp an empty image");
  const Vec2 corners[4] = {Vec2(0, 0), Vec2(src.width - 1, 0),
                           Vec2(0, src.height - 1),
                           Vec2(src.width - 1, src.height - 1)};
  Vec2 lo(1e300, 1e300), hi(-1e300, -1e300);
  double sign = 0.0;
  for (const Vec2& c : corners) {
    const Vec3 q = h.H * Vec3(c.x(), c.y(), 1.0);
    if (std::fabs(q.z()) < 1e-9)
      throw StitchError(Stage::Overlap,
                        "degenerate global transform: image corner maps to "
                        "infinity");
    if (sign == 0.0)
      sign = q.z() > 0 ? 1.0 : -1.0;
    else if (sign * q.z() <= 0.0)
      throw StitchError(Stage::Overlap,
                        "degenerate global transform: image crosses the plane "
                        "at infinity");
    const Vec2 m(q.x() / q.z(), q.y() / q.z());
    lo = lo.cwiseMin(m);
    hi = hi.cwiseMax(m);
  }
  const Vec2i offset(static_cast<int>(std::floor(lo.x())),
                     static_cast<int>(std::floor(lo.y())));
  const int w = static_cast<int>(std::ceil(hi.x())) - offset.x() + 1;
  const int hgt = static_cast<int>(std::ceil(hi.y())) - offset.y() + 1;
  if (w <= 0 || hgt <= 0 ||
      static_cast<long long>(w) * hgt > 100000000LL)
    throw StitchError(Stage::Overlap, "global warp canvas is unreasonable: " +
                                          std::to_string(w) + "x" +
                                          std::to_string(hgt));

  const Mat3 hinv = h.inverse().H;
  WarpResult out;
  out.image = RasterImage::zeros(w, hgt, src.channels);
  out.mask = Mask::filled(w, hgt, 0);
  out.offset = offset;
  for (int y = 0; y < hgt; ++y) {
    for (int x = 0; x < w; ++x) {
      const Vec3 q = hinv * Vec3(x + offset.x(), y + offset.y(), 1.0);
      if (std::fabs(q.z()) < kHomogeneousEps) continue;
      const auto s = sample_bilinear(src, q.x() / q.z(), q.y() / q.z());
      if (!s) continue;
      for (int c = 0; c < src.channels; ++c)
        out.image.at(x, y, c) = (*s)[c];
      out.mask.set(x, y, true);
    }
  }
  return out;
}

CorrespondenceSet transfer_correspondences(const CorrespondenceSet& set,
                                           const Homography& h,
                                           const Vec2& shift,
                                           const Rect& domain,
                                           TransferStats* stats) {
  TransferStats local;
  CorrespondenceSet out;
  auto map_src = [&](const Vec2& p) -> std::optional<Vec2> {
    const Vec3 q = h.H * Vec3(p.x(), p.y(), 1.0);
    if (std::fabs(q.z()) < kHomogeneousEps) return std::nullopt;
    const Vec2 m = Vec2(q.x() / q.z(), q.y() / q.z()) + shift;
    if (!domain.contains(m)) return std::nullopt;
    return m;
  };

  for (const PointMatch& m : set.points) {
    const auto p = map_src(m.p);
    if (!p) {
      ++local.dropped_points;
      continue;
    }
    out.points.push_back({*p, m.p_prime + shift, m.score});
  }
  for (const LineMatch& m : set.matched_lines) {
    const auto s = map_src(m.seg.p_s);
    const auto e = map_src(m.seg.p_e);
    if (!s || !e) {
      ++local.dropped_lines;
      continue;
    }
    out.matched_lines.push_back(LineMatch::from_segments(
        {*s, *e}, {m.seg_prime.p_s + shift, m.seg_prime.p_e + shift}));
  }
  for (const LineSegment& seg : set.unmatched_lines) {
    const auto s = map_src(seg.p_s);
    const auto e = map_src(seg.p_e);
    if (!s || !e) {
      ++local.dropped_lines;
      continue;
    }
    out.unmatched_lines.push_back({*s, *e});
  }
  if (stats) *stats = local;
  return out;
}

}  // namespace meshstitch
