#pragma once

#include "meshstitch/features.hpp"
#include "meshstitch/geometry.hpp"
#include "meshstitch/imaging.hpp"
#include "meshstitch/types.hpp"

#include <Eigen/Sparse>

#include <vector>

namespace meshstitch {

struct EnergyWeights {
  double alpha = 1.0;   // feature alignment
  double beta = 1.0;    // matched-line alignment
  double gamma = 1.0;   // photometric consistency
  double delta = 1.0;   // collinearity preservation
  double eta = 0.2;     // shape similarity
  double lambda = 1.0;  // gradient-magnitude share inside the photometric term
};

// Quadratic objective accumulated from weighted affine residuals
// r = c^T x + d, each contributing w * r^2. Internally
// E(x) = x^T A x - 2 b^T x + k with A sparse symmetric PSD, so the
// minimizer solves A x = b.
class EnergySystem {
 public:
  explicit EnergySystem(int dofs);

  int dofs() const { return n_; }

  // coeffs lists (dof index, coefficient); repeated indices accumulate
  void add_residual(const std::vector<std::pair<int, double>>& coeffs,
                    double constant, double weight);

  double evaluate(const Eigen::VectorXd& x) const;
  Eigen::VectorXd gradient(const Eigen::VectorXd& x) const;  // 2 (A x - b)

  // Direct sparse LDLT with one refinement step, verified against a residual
  // bound; falls back to conjugate gradient seeded at x0 (which handles
  // consistent singular systems by staying near the seed). Throws when both
  // fail the residual check.
  Eigen::VectorXd solve(const Eigen::VectorXd& x0) const;

 private:
  void ensure_built() const;

  int n_;
  Eigen::MatrixXd a_dense_;  // accumulated symmetric normal matrix
  Eigen::VectorXd b_;
  double k_ = 0.0;
  mutable bool built_ = false;
  mutable Eigen::SparseMatrix<double> a_;
};

// Key-point sampling along a segment: count grows with length, endpoints
// always included.
struct LineSampling {
  double spacing = 10.0;
  int min_points = 3;
};

int line_key_point_count(double length, const LineSampling& sampling);

// Feature alignment: the interpolated source position must land on the
// matched destination position. Two scalar residuals, weight each.
void add_point_term(EnergySystem& sys, const Mesh& mesh, const PointMatch& m,
                    double weight);

// Matched-line alignment: each key point's interpolated position must lie on
// the destination line (unit-normalized coefficients). One residual per key
// point.
void add_line_term(EnergySystem& sys, const Mesh& mesh, const LineMatch& m,
                   const LineSampling& sampling, double weight);

// Collinearity preservation: each interior key point must stay on the segment
// spanned by the warped endpoints. Two residuals per interior point; exactly
// affine-invariant.
void add_collinearity_term(EnergySystem& sys, const Mesh& mesh,
                           const LineSegment& seg, const LineSampling& sampling,
                           double weight);

// Shape preservation: each cell splits into two triangles across the
// TR-BL diagonal and every apex must keep its similarity coordinates
// relative to the base. Normalized by the triangle count; exactly
// similarity-invariant.
void add_similarity_term(EnergySystem& sys, const Mesh& mesh, double weight);

// Fixed per-level data for the photometric term: the comparison image's
// luminance, gradients, gradient magnitude and its gradients, plus a validity
// mask eroded so bilinear sampling never straddles the boundary.
struct PhotometricTarget {
  RasterImage lum;
  RasterImage gx, gy;
  RasterImage gmag;
  RasterImage gmx, gmy;
  Mask valid;
};

PhotometricTarget make_photometric_target(const RasterImage& lum,
                                          const Mask& mask);

// Source-side samples taken once per level at rest positions on an integer
// stride grid over the mesh domain.
struct PhotometricSamples {
  std::vector<BilinearAnchor> anchors;
  std::vector<Vec2> positions;
  std::vector<float> lum;
  std::vector<float> gmag;
};

PhotometricSamples collect_photometric_samples(const Mesh& mesh,
                                               const RasterImage& src_lum,
                                               const RasterImage& src_gmag,
                                               const Mask& src_mask,
                                               int stride);

struct PhotometricStats {
  int used = 0;
  int skipped = 0;
};

// Gauss-Newton linearization of the photometric difference about the current
// vertex positions V: per sample, a luminance residual with weight `gamma`
// and a gradient-magnitude residual with weight `gamma * lambda`. Samples
// whose current warped position falls outside the valid target area are
// skipped and counted.
PhotometricStats add_photometric_term(EnergySystem& sys,
                                      const PhotometricSamples& samples,
                                      const PhotometricTarget& target,
                                      const Eigen::VectorXd& V, double gamma,
                                      double lambda);

}  // namespace meshstitch
