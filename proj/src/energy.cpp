#include "meshstitch/energy.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>

namespace meshstitch {

EnergySystem::EnergySystem(int dofs)
    : n_(dofs),
      a_dense_(Eigen::MatrixXd::Zero(dofs, dofs)),
      b_(Eigen::VectorXd::Zero(dofs)) {}

void EnergySystem::add_residual(
    const std::vector<std::pair<int, double>>& coeffs, double constant,
    double weight) {
  if (weight == 0.0) return;
  for (const auto& [i, ci] : coeffs) {
    for (const auto& [j, cj] : coeffs) a_dense_(i, j) += weight * ci * cj;
    b_(i) -= weight * constant * ci;
  }
  k_ += weight * constant * constant;
  built_ = false;
}

double EnergySystem::evaluate(const Eigen::VectorXd& x) const {
  return x.dot(a_dense_ * x) - 2.0 * b_.dot(x) + k_;
}

Eigen::VectorXd EnergySystem::gradient(const Eigen::VectorXd& x) const {
  return 2.0 * (a_dense_ * x - b_);
}

void EnergySystem::ensure_built() const {
  if (built_) return;
  a_ = a_dense_.sparseView();
  a_.makeCompressed();
  built_ = true;
}

Eigen::VectorXd EnergySystem::solve(const Eigen::VectorXd& x0) const {
  ensure_built();
  const double tol = 1e-8 * std::max(b_.norm(), 1e-12);

  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(a_);
  if (ldlt.info() == Eigen::Success) {
    Eigen::VectorXd x = ldlt.solve(b_);
    if (x.allFinite()) {
      // one step of iterative refinement
      const Eigen::VectorXd r = b_ - a_ * x;
      const Eigen::VectorXd dx = ldlt.solve(r);
      if (dx.allFinite()) x += dx;
      if ((a_ * x - b_).norm() <= tol) return x;
    }
  }

  // Singular-but-consistent systems (e.g. under-pinned similarity-only
  // setups) are handled by conjugate gradient anchored at the seed.
  Eigen::ConjugateGradient<Eigen::SparseMatrix<double>,
                           Eigen::Lower | Eigen::Upper>
      cg(a_);
  cg.setTolerance(1e-14);
  cg.setMaxIterations(4 * n_);
  const Eigen::VectorXd x = cg.solveWithGuess(b_, x0);
  if (x.allFinite() && (a_ * x - b_).norm() <= std::max(tol, 1e-6))
    return x;
  throw StitchError(Stage::Solve,
                    "deformation system is singular or inconsistent");
}

int line_key_point_count(double length, const LineSampling& sampling) {
  const int by_length =
      static_cast<int>(std::floor(length / sampling.spacing)) + 1;
  return std::max(sampling.min_points, by_length);
}

namespace {

void anchor_coeffs(const BilinearAnchor& a, double scale, int dim,
                   std::vector<std::pair<int, double>>& out) {
  for (int k = 0; k < 4; ++k)
    out.emplace_back(2 * a.v[k] + dim, scale * a.w[k]);
}

}  // namespace

void add_point_term(EnergySystem& sys, const Mesh& mesh, const PointMatch& m,
                    double weight) {
  const BilinearAnchor a = anchor_point(mesh, m.p);
  std::vector<std::pair<int, double>> coeffs;
  anchor_coeffs(a, 1.0, 0, coeffs);
  sys.add_residual(coeffs, -m.p_prime.x(), weight);
  coeffs.clear();
  anchor_coeffs(a, 1.0, 1, coeffs);
  sys.add_residual(coeffs, -m.p_prime.y(), weight);
}

void add_line_term(EnergySystem& sys, const Mesh& mesh, const LineMatch& m,
                   const LineSampling& sampling, double weight) {
  const int count = line_key_point_count(m.seg.length(), sampling);
  const Vec3& l = m.line_prime;
  for (int j = 0; j < count; ++j) {
    const double u = static_cast<double>(j) / (count - 1);
    const Vec2 p = (1.0 - u) * m.seg.p_s + u * m.seg.p_e;
    const BilinearAnchor a = anchor_point(mesh, p);
    std::vector<std::pair<int, double>> coeffs;
    anchor_coeffs(a, l.x(), 0, coeffs);
    anchor_coeffs(a, l.y(), 1, coeffs);
    sys.add_residual(coeffs, l.z(), weight);
  }
}

void add_collinearity_term(EnergySystem& sys, const Mesh& mesh,
                           const LineSegment& seg, const LineSampling& sampling,
                           double weight) {
  const int count = line_key_point_count(seg.length(), sampling);
  const BilinearAnchor as = anchor_point(mesh, seg.p_s);
  const BilinearAnchor ae = anchor_point(mesh, seg.p_e);
  for (int j = 1; j + 1 < count; ++j) {
    const double u = static_cast<double>(j) / (count - 1);
    const Vec2 p = (1.0 - u) * seg.p_s + u * seg.p_e;
    const BilinearAnchor aj = anchor_point(mesh, p);
    for (int dim = 0; dim < 2; ++dim) {
      std::vector<std::pair<int, double>> coeffs;
      anchor_coeffs(aj, 1.0, dim, coeffs);
      anchor_coeffs(as, -(1.0 - u), dim, coeffs);
      anchor_coeffs(ae, -u, dim, coeffs);
      sys.add_residual(coeffs, 0.0, weight);
    }
  }
}

namespace {

// Residual pair expressing the apex in similarity coordinates over the base
// b1 -> b2: apex = b1 + u (b2 - b1) + v R90 (b2 - b1), with (u, v) taken from
// the rest shape and R90 (x, y) = (y, -x).
void add_triangle_residuals(EnergySystem& sys, int apex, int b1, int b2,
                            const Vec2& ra, const Vec2& r1, const Vec2& r2,
                            double weight) {
  const Vec2 d = r2 - r1;
  const Vec2 e = ra - r1;
  const double d2 = d.squaredNorm();
  const double u = e.dot(d) / d2;
  const double v = (e.x() * d.y() - e.y() * d.x()) / d2;

  sys.add_residual({{2 * apex, 1.0},
                    {2 * b1, -1.0 + u},
                    {2 * b2, -u},
                    {2 * b1 + 1, v},
                    {2 * b2 + 1, -v}},
                   0.0, weight);
  sys.add_residual({{2 * apex + 1, 1.0},
                    {2 * b1 + 1, -1.0 + u},
                    {2 * b2 + 1, -u},
                    {2 * b1, -v},
                    {2 * b2, v}},
                   0.0, weight);
}

}  // namespace

void add_similarity_term(EnergySystem& sys, const Mesh& mesh, double weight) {
  const double per_triangle =
      weight / (2.0 * mesh.cells_x * mesh.cells_y);
  for (int cy = 0; cy < mesh.cells_y; ++cy)
    for (int cx = 0; cx < mesh.cells_x; ++cx) {
      const int tl = mesh.vertex_index(cx, cy);
      const int tr = mesh.vertex_index(cx + 1, cy);
      const int bl = mesh.vertex_index(cx, cy + 1);
      const int br = mesh.vertex_index(cx + 1, cy + 1);
      const Vec2 r_tl = mesh.rest_vertex(cx, cy);
      const Vec2 r_tr = mesh.rest_vertex(cx + 1, cy);
      const Vec2 r_bl = mesh.rest_vertex(cx, cy + 1);
      const Vec2 r_br = mesh.rest_vertex(cx + 1, cy + 1);
      // both triangles share the TR-BL diagonal as their base
      add_triangle_residuals(sys, tl, tr, bl, r_tl, r_tr, r_bl, per_triangle);
      add_triangle_residuals(sys, br, tr, bl, r_br, r_tr, r_bl, per_triangle);
    }
}

PhotometricTarget make_photometric_target(const RasterImage& lum,
                                          const Mask& mask) {
  PhotometricTarget t;
  t.lum = to_luminance(lum);
  gradient_xy(t.lum, t.gx, t.gy);
  t.gmag = gradient_magnitude(t.lum).magnitude;
  gradient_xy(t.gmag, t.gmx, t.gmy);
  t.valid = erode(mask, 2);
  return t;
}

PhotometricSamples collect_photometric_samples(const Mesh& mesh,
                                               const RasterImage& src_lum,
                                               const RasterImage& src_gmag,
                                               const Mask& src_mask,
                                               int stride) {
  PhotometricSamples out;
  const int x_lo = static_cast<int>(std::ceil(mesh.x0));
  const int x_hi = static_cast<int>(std::floor(mesh.x0 + mesh.width));
  const int y_lo = static_cast<int>(std::ceil(mesh.y0));
  const int y_hi = static_cast<int>(std::floor(mesh.y0 + mesh.height));
  for (int y = y_lo; y <= y_hi; y += stride)
    for (int x = x_lo; x <= x_hi; x += stride) {
      if (!src_mask.in_bounds(x, y) || !src_mask.at(x, y)) continue;
      out.anchors.push_back(anchor_point(mesh, Vec2(x, y)));
      out.positions.emplace_back(x, y);
      out.lum.push_back(src_lum.at(x, y));
      out.gmag.push_back(src_gmag.at(x, y));
    }
  return out;
}

PhotometricStats add_photometric_term(EnergySystem& sys,
                                      const PhotometricSamples& samples,
                                      const PhotometricTarget& target,
                                      const Eigen::VectorXd& V, double gamma,
                                      double lambda) {
  PhotometricStats stats;
  std::vector<std::pair<int, double>> coeffs;
  for (std::size_t i = 0; i < samples.anchors.size(); ++i) {
    const BilinearAnchor& a = samples.anchors[i];
    const Vec2 q = anchor_interpolate(a, V);
    const auto tv = sample_bilinear_masked(target.lum, target.valid, q.x(), q.y());
    if (!tv) {
      ++stats.skipped;
      continue;
    }
    const double gx = *sample_bilinear_scalar(target.gx, q.x(), q.y());
    const double gy = *sample_bilinear_scalar(target.gy, q.x(), q.y());
    coeffs.clear();
    anchor_coeffs(a, gx, 0, coeffs);
    anchor_coeffs(a, gy, 1, coeffs);
    sys.add_residual(coeffs,
                     *tv - gx * q.x() - gy * q.y() - samples.lum[i], gamma);

    const double tm = *sample_bilinear_scalar(target.gmag, q.x(), q.y());
    const double mx = *sample_bilinear_scalar(target.gmx, q.x(), q.y());
    const double my = *sample_bilinear_scalar(target.gmy, q.x(), q.y());
    coeffs.clear();
    anchor_coeffs(a, mx, 0, coeffs);
    anchor_coeffs(a, my, 1, coeffs);
    sys.add_residual(coeffs,
                     tm - mx * q.x() - my * q.y() - samples.gmag[i],
                     gamma * lambda);
    ++stats.used;
  }
  return stats;
}

}  // namespace meshstitch
