#include "meshstitch/energy.hpp"

#include "support/oracles.hpp"
#include "support/synthetic.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

using namespace meshstitch;
namespace oracle = testsupport::oracle;

namespace {

Mesh small_mesh() {
  Mesh mesh;
  mesh.cells_x = 5;
  mesh.cells_y = 4;
  mesh.x0 = 0.0;
  mesh.y0 = 0.0;
  mesh.width = 49.0;
  mesh.height = 39.0;
  return mesh;
}

double rel_diff(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12});
}

std::vector<PointMatch> random_points(const Mesh& mesh, std::mt19937_64& rng,
                                      int n) {
  std::uniform_real_distribution<double> ux(mesh.x0, mesh.x0 + mesh.width);
  std::uniform_real_distribution<double> uy(mesh.y0, mesh.y0 + mesh.height);
  std::uniform_real_distribution<double> noise(-6.0, 6.0);
  std::vector<PointMatch> out;
  for (int i = 0; i < n; ++i) {
    const Vec2 p(ux(rng), uy(rng));
    out.push_back(PointMatch{p, p + Vec2(noise(rng), noise(rng)), 1.0});
  }
  return out;
}

std::vector<LineMatch> random_lines(const Mesh& mesh, std::mt19937_64& rng,
                                    int n) {
  std::uniform_real_distribution<double> ux(mesh.x0 + 2, mesh.x0 + mesh.width - 2);
  std::uniform_real_distribution<double> uy(mesh.y0 + 2, mesh.y0 + mesh.height - 2);
  std::uniform_real_distribution<double> noise(-4.0, 4.0);
  std::vector<LineMatch> out;
  for (int i = 0; i < n; ++i) {
    Vec2 a(ux(rng), uy(rng)), b(ux(rng), uy(rng));
    if ((b - a).norm() < 15.0) {
      --i;
      continue;
    }
    const Vec2 na(noise(rng), noise(rng)), nb(noise(rng), noise(rng));
    out.push_back(LineMatch::from_segments(LineSegment{a, b},
                                           LineSegment{a + na, b + nb}));
  }
  return out;
}

}  // namespace

TEST_CASE("energy weight defaults") {
  const EnergyWeights w;
  CHECK(w.alpha == 1.0);
  CHECK(w.beta == 1.0);
  CHECK(w.gamma == 1.0);
  CHECK(w.delta == 1.0);
  CHECK(w.eta == 0.2);
  CHECK(w.lambda == 1.0);
}

TEST_CASE("key point count grows with segment length") {
  const LineSampling s;  // spacing 10, min 3
  CHECK(line_key_point_count(5.0, s) == 3);
  CHECK(line_key_point_count(10.0, s) == 3);
  CHECK(line_key_point_count(29.9, s) == 3);
  CHECK(line_key_point_count(30.0, s) == 4);
  CHECK(line_key_point_count(35.0, s) == 4);
  CHECK(line_key_point_count(100.0, s) == 11);
  CHECK(line_key_point_count(12.0, LineSampling{5.0, 2}) == 3);
}

TEST_CASE("residual accumulation matches direct evaluation") {
  EnergySystem sys(6);
  struct Residual {
    std::vector<std::pair<int, double>> coeffs;
    double constant;
    double weight;
  };
  const std::vector<Residual> residuals = {
      {{{0, 1.0}}, -2.0, 3.0},
      {{{1, 1.0}, {3, 2.0}}, -1.0, 2.0},
      {{{2, 1.0}, {2, 1.0}}, 0.5, 1.5},  // duplicate index accumulates to 2 x2
      {{{0, -0.5}, {4, 1.25}, {5, 0.75}}, 4.0, 0.25},
  };
  for (const auto& r : residuals) sys.add_residual(r.coeffs, r.constant, r.weight);

  std::mt19937_64 rng(61);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::VectorXd x(6);
    for (int i = 0; i < 6; ++i) x[i] = u(rng);
    double direct = 0.0;
    for (const auto& r : residuals) {
      double v = r.constant;
      for (const auto& [idx, c] : r.coeffs) v += c * x[idx];
      direct += r.weight * v * v;
    }
    CHECK(rel_diff(sys.evaluate(x), direct) < 1e-12);

    // quadratic energy: central differences are exact up to rounding
    const Eigen::VectorXd g = sys.gradient(x);
    for (int i = 0; i < 6; ++i) {
      const double h = 1e-4;
      Eigen::VectorXd xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      const double fd = (sys.evaluate(xp) - sys.evaluate(xm)) / (2.0 * h);
      CHECK(std::abs(g[i] - fd) < 1e-6 * std::max(1.0, std::abs(g[i])));
    }
  }
}

TEST_CASE("solver reaches the unconstrained minimum") {
  EnergySystem sys(4);
  sys.add_residual({{0, 1.0}}, -3.0, 2.0);
  sys.add_residual({{1, 1.0}, {0, -1.0}}, 0.0, 1.0);
  sys.add_residual({{2, 1.0}, {3, 1.0}}, -5.0, 1.0);
  sys.add_residual({{3, 1.0}}, -1.0, 4.0);
  sys.add_residual({{2, 1.0}}, 0.0, 0.5);

  const Eigen::VectorXd x = sys.solve(Eigen::VectorXd::Zero(4));
  CHECK(sys.gradient(x).norm() < 1e-8);
  std::mt19937_64 rng(62);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (int i = 0; i < 10; ++i) {
    Eigen::VectorXd y = x;
    for (int k = 0; k < 4; ++k) y[k] += u(rng);
    CHECK(sys.evaluate(y) >= sys.evaluate(x) - 1e-12);
  }
}

TEST_CASE("solver handles the floating similarity-only system") {
  const Mesh mesh = small_mesh();
  EnergySystem sys(mesh.dof_count());
  add_similarity_term(sys, mesh, 0.2);
  const Eigen::VectorXd rest = mesh.rest_positions();
  CHECK(std::abs(sys.evaluate(rest)) < 1e-9);

  const Eigen::VectorXd x = sys.solve(rest);
  REQUIRE(x.allFinite());
  CHECK(sys.evaluate(x) < 1e-9);
  CHECK(sys.gradient(x).norm() < 1e-6);
}

TEST_CASE("point term matches its oracle") {
  const Mesh mesh = small_mesh();
  std::mt19937_64 rng(63);
  const auto points = random_points(mesh, rng, 6);
  const double alpha = 1.3;

  EnergySystem sys(mesh.dof_count());
  for (const auto& m : points) add_point_term(sys, mesh, m, alpha);

  for (int trial = 0; trial < 5; ++trial) {
    const Eigen::VectorXd v = testsupport::perturbed_vertices(mesh, rng, 3.0);
    CHECK(rel_diff(sys.evaluate(v),
                   oracle::point_energy(mesh, v, points, alpha)) < 1e-10);
  }
}

TEST_CASE("line term matches its oracle") {
  const Mesh mesh = small_mesh();
  std::mt19937_64 rng(64);
  const auto lines = random_lines(mesh, rng, 4);
  const LineSampling sampling;
  const double beta = 0.9;

  EnergySystem sys(mesh.dof_count());
  for (const auto& m : lines) add_line_term(sys, mesh, m, sampling, beta);

  for (int trial = 0; trial < 5; ++trial) {
    const Eigen::VectorXd v = testsupport::perturbed_vertices(mesh, rng, 3.0);
    CHECK(rel_diff(sys.evaluate(v),
                   oracle::line_energy(mesh, v, lines, sampling, beta)) < 1e-10);
  }
}

TEST_CASE("collinearity term matches its oracle and vanishes on straight stays") {
  const Mesh mesh = small_mesh();
  std::mt19937_64 rng(65);
  std::vector<LineSegment> segs;
  for (const auto& m : random_lines(mesh, rng, 4)) segs.push_back(m.seg);
  const LineSampling sampling;
  const double delta = 1.1;

  EnergySystem sys(mesh.dof_count());
  for (const auto& s : segs) add_collinearity_term(sys, mesh, s, sampling, delta);

  CHECK(std::abs(sys.evaluate(mesh.rest_positions())) < 1e-9);
  for (int trial = 0; trial < 5; ++trial) {
    const Eigen::VectorXd v = testsupport::perturbed_vertices(mesh, rng, 3.0);
    CHECK(rel_diff(sys.evaluate(v), oracle::collinearity_energy(
                                        mesh, v, segs, sampling, delta)) < 1e-10);
  }
}

TEST_CASE("similarity term matches its oracle and vanishes at rest") {
  const Mesh mesh = small_mesh();
  std::mt19937_64 rng(66);
  const double eta = 0.25;

  EnergySystem sys(mesh.dof_count());
  add_similarity_term(sys, mesh, eta);

  CHECK(std::abs(sys.evaluate(mesh.rest_positions())) < 1e-9);
  for (int trial = 0; trial < 5; ++trial) {
    const Eigen::VectorXd v = testsupport::perturbed_vertices(mesh, rng, 3.0);
    CHECK(rel_diff(sys.evaluate(v), oracle::similarity_energy(mesh, v, eta)) <
          1e-10);
  }
}

TEST_CASE("similarity energy is invariant to global similarity transforms") {
  const Mesh mesh = small_mesh();
  EnergySystem sys(mesh.dof_count());
  add_similarity_term(sys, mesh, 0.2);
  std::mt19937_64 rng(67);
  for (int i = 0; i < 10; ++i) {
    const Eigen::VectorXd v =
        testsupport::mapped_vertices(mesh, testsupport::random_similarity(rng));
    CHECK(std::abs(sys.evaluate(v)) < 1e-9);
  }
}

TEST_CASE("collinearity energy is invariant to global affine transforms") {
  const Mesh mesh = small_mesh();
  std::mt19937_64 rng(68);
  std::vector<LineSegment> segs;
  for (const auto& m : random_lines(mesh, rng, 4)) segs.push_back(m.seg);
  EnergySystem sys(mesh.dof_count());
  for (const auto& s : segs) add_collinearity_term(sys, mesh, s, LineSampling{}, 1.0);
  for (int i = 0; i < 10; ++i) {
    const Eigen::VectorXd v =
        testsupport::mapped_vertices(mesh, testsupport::random_affine(rng));
    CHECK(std::abs(sys.evaluate(v)) < 1e-9);
  }
}

TEST_CASE("photometric linearization matches its oracle away from the expansion point") {
  const Mesh mesh = small_mesh();
  const RasterImage src = testsupport::render_texture(50, 40, 5);
  const RasterImage dst = testsupport::render_texture(50, 40, 6);

  const PhotometricTarget target =
      make_photometric_target(dst, Mask::filled(50, 40));
  const RasterImage src_lum = to_luminance(src);
  const RasterImage src_gmag = gradient_magnitude(src).magnitude;
  const PhotometricSamples samples = collect_photometric_samples(
      mesh, src_lum, src_gmag, Mask::filled(50, 40), 3);
  REQUIRE(samples.positions.size() > 100);

  std::mt19937_64 rng(69);
  for (int trial = 0; trial < 3; ++trial) {
    const Eigen::VectorXd v_lin = testsupport::perturbed_vertices(mesh, rng, 2.0);
    EnergySystem sys(mesh.dof_count());
    const PhotometricStats stats =
        add_photometric_term(sys, samples, target, v_lin, 1.2, 0.8);
    CHECK(stats.used + stats.skipped ==
          static_cast<int>(samples.positions.size()));
    CHECK(stats.used > 50);

    // at the linearization point and at a second configuration
    CHECK(rel_diff(sys.evaluate(v_lin),
                   oracle::photometric_linearized_energy(
                       mesh, samples, target, v_lin, v_lin, 1.2, 0.8)) < 1e-10);
    const Eigen::VectorXd v2 = testsupport::perturbed_vertices(mesh, rng, 2.0);
    CHECK(rel_diff(sys.evaluate(v2),
                   oracle::photometric_linearized_energy(
                       mesh, samples, target, v_lin, v2, 1.2, 0.8)) < 1e-10);
  }
}

TEST_CASE("sample collection walks the stride grid under the mask") {
  Mesh mesh;
  mesh.cells_x = 4;
  mesh.cells_y = 4;
  mesh.x0 = 0.0;
  mesh.y0 = 0.0;
  mesh.width = 29.0;
  mesh.height = 23.0;
  const RasterImage img = testsupport::render_texture(30, 24, 7);
  const RasterImage gmag = gradient_magnitude(img).magnitude;

  Mask mask = Mask::filled(30, 24);
  const PhotometricSamples all =
      collect_photometric_samples(mesh, img, gmag, mask, 4);
  CHECK(all.positions.size() == 8 * 6);  // x: 0..28 step 4, y: 0..20 step 4

  mask.set(4, 4, false);
  const PhotometricSamples holed =
      collect_photometric_samples(mesh, img, gmag, mask, 4);
  CHECK(holed.positions.size() == 8 * 6 - 1);
}

TEST_CASE("assembled gradient matches finite differences of the direct energy") {
  const Mesh mesh = small_mesh();
  std::mt19937_64 rng(70);

  CorrespondenceSet corr;
  corr.points = random_points(mesh, rng, 5);
  corr.matched_lines = random_lines(mesh, rng, 3);
  for (const auto& m : random_lines(mesh, rng, 2))
    corr.unmatched_lines.push_back(m.seg);

  const RasterImage src = testsupport::render_texture(50, 40, 8);
  const RasterImage dst = testsupport::render_texture(50, 40, 9);
  const PhotometricTarget target =
      make_photometric_target(dst, Mask::filled(50, 40));
  const RasterImage src_lum = to_luminance(src);
  const RasterImage src_gmag = gradient_magnitude(src).magnitude;
  const PhotometricSamples samples = collect_photometric_samples(
      mesh, src_lum, src_gmag, Mask::filled(50, 40), 4);

  EnergyWeights w;
  w.alpha = 1.1;
  w.beta = 0.7;
  w.gamma = 0.9;
  w.delta = 1.3;
  w.eta = 0.2;
  w.lambda = 0.6;
  const LineSampling sampling;

  const Eigen::VectorXd v_lin = testsupport::perturbed_vertices(mesh, rng, 1.5);
  EnergySystem sys(mesh.dof_count());
  for (const auto& m : corr.points) add_point_term(sys, mesh, m, w.alpha);
  for (const auto& m : corr.matched_lines) {
    add_line_term(sys, mesh, m, sampling, w.beta);
    add_collinearity_term(sys, mesh, m.seg, sampling, w.delta);
  }
  for (const auto& s : corr.unmatched_lines)
    add_collinearity_term(sys, mesh, s, sampling, w.delta);
  add_photometric_term(sys, samples, target, v_lin, w.gamma, w.lambda);
  add_similarity_term(sys, mesh, w.eta);

  oracle::EnergyInputs in;
  in.mesh = &mesh;
  in.corr = &corr;
  in.samples = &samples;
  in.target = &target;
  in.sampling = sampling;
  in.weights = w;

  const Eigen::VectorXd v2 = testsupport::perturbed_vertices(mesh, rng, 1.5);
  CHECK(rel_diff(sys.evaluate(v2),
                 oracle::total_linearized_energy(in, v_lin, v2)) < 1e-10);

  const Eigen::VectorXd g = sys.gradient(v2);
  const double h = 1e-4;
  for (int i = 0; i < mesh.dof_count(); i += 7) {  // probe a spread of dofs
    Eigen::VectorXd vp = v2, vm = v2;
    vp[i] += h;
    vm[i] -= h;
    const double fd = (oracle::total_linearized_energy(in, v_lin, vp) -
                       oracle::total_linearized_energy(in, v_lin, vm)) /
                      (2.0 * h);
    CHECK(std::abs(g[i] - fd) < 1e-5 * std::max(1.0, std::abs(g[i])));
  }
}
