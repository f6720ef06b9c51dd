#include "meshstitch/image_io.hpp"
#include "meshstitch/pipeline.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace meshstitch;

std::vector<double> parse_csv_numbers(const std::string& text,
                                      std::size_t expected,
                                      const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t pos = 0;
      out.push_back(std::stod(item, &pos));
      if (pos != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw std::invalid_argument(what + ": cannot parse '" + item + "'");
    }
  }
  if (out.size() != expected)
    throw std::invalid_argument(what + ": expected " +
                                std::to_string(expected) + " values, got " +
                                std::to_string(out.size()));
  return out;
}

void apply_mesh_flag(StitchConfig& cfg, const std::string& text) {
  const auto v = parse_csv_numbers(text, 2, "--mesh");
  if (v[0] < 1 || v[1] < 1 || v[0] != std::floor(v[0]) ||
      v[1] != std::floor(v[1]))
    throw std::invalid_argument("--mesh: cell counts must be positive integers");
  cfg.mesh_cells_x = static_cast<int>(v[0]);
  cfg.mesh_cells_y = static_cast<int>(v[1]);
}

void apply_weights_flag(StitchConfig& cfg, const std::string& text) {
  const auto v = parse_csv_numbers(
      text, 6, "--weights (alpha,beta,gamma,delta,eta,lambda)");
  cfg.weights.alpha = v[0];
  cfg.weights.beta = v[1];
  cfg.weights.gamma = v[2];
  cfg.weights.delta = v[3];
  cfg.weights.eta = v[4];
  cfg.weights.lambda = v[5];
}

void apply_weights_json(EnergyWeights& w, const nlohmann::json& obj) {
  for (const auto& [key, value] : obj.items()) {
    if (key == "alpha")
      w.alpha = value.get<double>();
    else if (key == "beta")
      w.beta = value.get<double>();
    else if (key == "gamma")
      w.gamma = value.get<double>();
    else if (key == "delta")
      w.delta = value.get<double>();
    else if (key == "eta")
      w.eta = value.get<double>();
    else if (key == "lambda")
      w.lambda = value.get<double>();
    else
      throw std::invalid_argument("unknown weight key in config: " + key);
  }
}

void apply_config_file(StitchConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file: " + path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
    if (!doc.is_object())
      throw std::invalid_argument("config file must hold a JSON object");
    for (const auto& [key, value] : doc.items()) {
      if (key == "mesh") {
        if (!value.is_array() || value.size() != 2)
          throw std::invalid_argument("config mesh must be [m, n]");
        cfg.mesh_cells_x = value.at(0).get<int>();
        cfg.mesh_cells_y = value.at(1).get<int>();
      } else if (key == "levels") {
        cfg.pyramid_levels = value.get<int>();
      } else if (key == "max_iterations") {
        cfg.max_iterations = value.get<int>();
      } else if (key == "convergence_px") {
        cfg.convergence_px = value.get<double>();
      } else if (key == "seed") {
        cfg.seed = value.get<std::uint64_t>();
      } else if (key == "photometric_stride") {
        cfg.photometric_stride = value.get<int>();
      } else if (key == "window") {
        cfg.metric.window = value.get<int>();
      } else if (key == "weights") {
        apply_weights_json(cfg.weights, value);
      } else {
        throw std::invalid_argument("unknown config key: " + key);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("invalid config file " + path + ": " +
                                e.what());
  }
}

void write_json_file(const std::string& path, const nlohmann::ordered_json& j) {
  std::ofstream out(path);
  if (!out) throw StitchError(Stage::Io, "cannot write " + path);
  out << j.dump(2) << "\n";
}

struct StitchArgs {
  std::string source, target;
  std::string out = "panorama.png";
  std::string report, correspondences, config;
  std::string save_warped, save_mask;
  std::uint64_t seed = 42;
  std::string mesh, weights;
  int levels = 3;
  int window = 3;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* mesh_opt = nullptr;
  CLI::Option* levels_opt = nullptr;
  CLI::Option* window_opt = nullptr;
  CLI::Option* weights_opt = nullptr;
};

int run_stitch(const StitchArgs& a) {
  StitchConfig cfg;
  if (!a.config.empty()) apply_config_file(cfg, a.config);
  if (*a.seed_opt) cfg.seed = a.seed;
  if (*a.mesh_opt) apply_mesh_flag(cfg, a.mesh);
  if (*a.levels_opt) cfg.pyramid_levels = a.levels;
  if (*a.window_opt) cfg.metric.window = a.window;
  if (*a.weights_opt) apply_weights_flag(cfg, a.weights);
  cfg.validate();

  const RasterImage source = load_image(a.source);
  const RasterImage target = load_image(a.target);
  std::optional<CorrespondenceSet> corr;
  if (!a.correspondences.empty())
    corr = load_correspondences(a.correspondences,
                                cfg.detector.min_line_length);

  const StitchResult result =
      stitch(source, target, cfg, corr ? &*corr : nullptr);

  save_image(a.out, result.panorama);
  if (!a.report.empty()) write_json_file(a.report, result.report.to_json());
  if (!a.save_warped.empty()) save_image(a.save_warped, result.warped_source);
  if (!a.save_mask.empty()) save_mask(a.save_mask, result.panorama_mask);

  std::cout << "panorama " << result.panorama.width << "x"
            << result.panorama.height << " -> " << a.out
            << "\nrmse_ncc global " << result.report.rmse_ncc_global
            << " refined " << result.report.rmse_ncc_refined << "\n";
  return 0;
}

struct EvalArgs {
  std::string a, b;
  std::string mask_a, mask_b;
  std::string report;
  int window = 3;
  CLI::Option* window_opt = nullptr;
};

int run_eval(const EvalArgs& e) {
  const RasterImage a = load_image(e.a);
  const RasterImage b = load_image(e.b);
  const Mask ma =
      e.mask_a.empty() ? Mask::filled(a.width, a.height) : load_mask(e.mask_a);
  const Mask mb =
      e.mask_b.empty() ? Mask::filled(b.width, b.height) : load_mask(e.mask_b);
  MetricConfig cfg;
  if (*e.window_opt) cfg.window = e.window;

  const MetricResult r = rmse_ncc(a, ma, b, mb, cfg);
  nlohmann::ordered_json j = {{"rmse_ncc", r.value},
                              {"overlap_pixels", r.windows},
                              {"window", cfg.window}};
  std::cout << j.dump(2) << "\n";
  if (!e.report.empty()) write_json_file(e.report, j);
  return 0;
}

struct FeaturesArgs {
  std::string source, target;
  std::string out = "correspondences.json";
  std::string viz;
};

void draw_square(RasterImage& img, int cx, int cy, int r, float red,
                 float green, float blue) {
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx) {
      const int x = cx + dx, y = cy + dy;
      if (x < 0 || y < 0 || x >= img.width || y >= img.height) continue;
      img.at(x, y, 0) = red;
      img.at(x, y, 1) = green;
      img.at(x, y, 2) = blue;
    }
}

void draw_segment(RasterImage& img, const Vec2& a, const Vec2& b, float red,
                  float green, float blue) {
  const int steps =
      std::max(1, static_cast<int>(std::ceil((b - a).lpNorm<Eigen::Infinity>())));
  for (int i = 0; i <= steps; ++i) {
    const Vec2 p = a + (static_cast<double>(i) / steps) * (b - a);
    const int x = static_cast<int>(std::lround(p.x()));
    const int y = static_cast<int>(std::lround(p.y()));
    if (x < 0 || y < 0 || x >= img.width || y >= img.height) continue;
    img.at(x, y, 0) = red;
    img.at(x, y, 1) = green;
    img.at(x, y, 2) = blue;
  }
}

RasterImage render_matches(const RasterImage& src, const RasterImage& dst,
                           const CorrespondenceSet& set) {
  auto to_rgb = [](const RasterImage& img) {
    RasterImage out = RasterImage::zeros(img.width, img.height, 3);
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        for (int c = 0; c < 3; ++c)
          out.at(x, y, c) = img.at(x, y, img.channels == 3 ? c : 0);
    return out;
  };
  const RasterImage left = to_rgb(src);
  const RasterImage right = to_rgb(dst);
  RasterImage canvas = RasterImage::zeros(left.width + right.width,
                                          std::max(left.height, right.height), 3);
  for (int y = 0; y < left.height; ++y)
    for (int x = 0; x < left.width; ++x)
      for (int c = 0; c < 3; ++c) canvas.at(x, y, c) = left.at(x, y, c);
  for (int y = 0; y < right.height; ++y)
    for (int x = 0; x < right.width; ++x)
      for (int c = 0; c < 3; ++c)
        canvas.at(x + left.width, y, c) = right.at(x, y, c);

  const Vec2 off(left.width, 0.0);
  for (const PointMatch& m : set.points) {
    draw_square(canvas, static_cast<int>(std::lround(m.p.x())),
                static_cast<int>(std::lround(m.p.y())), 1, 0.f, 1.f, 0.f);
    draw_square(canvas, static_cast<int>(std::lround(m.p_prime.x() + off.x())),
                static_cast<int>(std::lround(m.p_prime.y())), 1, 0.f, 1.f, 0.f);
  }
  for (const LineMatch& m : set.matched_lines) {
    draw_segment(canvas, m.seg.p_s, m.seg.p_e, 0.2f, 0.4f, 1.f);
    draw_segment(canvas, m.seg_prime.p_s + off, m.seg_prime.p_e + off, 0.2f,
                 0.4f, 1.f);
  }
  for (const LineSegment& s : set.unmatched_lines)
    draw_segment(canvas, s.p_s, s.p_e, 1.f, 0.2f, 0.2f);
  return canvas;
}

int run_features(const FeaturesArgs& f) {
  const RasterImage source = load_image(f.source);
  const RasterImage target = load_image(f.target);
  const DetectorConfig detector;

  CorrespondenceSet set;
  set.points = detect_and_match_points(source, target, detector);
  const LineMatchResult lines =
      detect_and_match_lines(source, target, detector, set.points);
  set.matched_lines = lines.matched;
  set.unmatched_lines = lines.unmatched_src;

  save_correspondences(f.out, set);
  if (!f.viz.empty()) save_image(f.viz, render_matches(source, target, set));

  std::cout << "points " << set.points.size() << ", lines matched "
            << set.matched_lines.size() << ", unmatched "
            << set.unmatched_lines.size() << " -> " << f.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Two-stage image stitcher: robust global homography, then mesh-based "
      "local refinement"};
  app.require_subcommand(1);

  StitchArgs sa;
  CLI::App* sc = app.add_subcommand("stitch", "stitch a source image onto a target");
  sc->add_option("source", sa.source, "source image (warped side)")->required();
  sc->add_option("target", sa.target, "target image (reference)")->required();
  sc->add_option("-o,--out", sa.out, "panorama output path");
  sc->add_option("--report", sa.report, "write the JSON run report here");
  sc->add_option("--correspondences", sa.correspondences,
                 "correspondence JSON; skips built-in detection");
  sc->add_option("--config", sa.config, "flat JSON config file");
  sa.seed_opt = sc->add_option("--seed", sa.seed, "random seed (default 42)");
  sa.mesh_opt = sc->add_option("--mesh", sa.mesh, "mesh cells as M,N");
  sa.levels_opt = sc->add_option("--levels", sa.levels, "pyramid levels");
  sa.window_opt = sc->add_option("--window", sa.window, "metric window (odd)");
  sa.weights_opt = sc->add_option(
      "--weights", sa.weights, "alpha,beta,gamma,delta,eta,lambda");
  sc->add_option("--save-warped", sa.save_warped,
                 "write the refined warped source image");
  sc->add_option("--save-mask", sa.save_mask, "write the panorama mask");

  EvalArgs ea;
  CLI::App* ec =
      app.add_subcommand("eval", "alignment metric between two aligned images");
  ec->add_option("a", ea.a, "first image")->required();
  ec->add_option("b", ea.b, "second image")->required();
  ec->add_option("--mask-a", ea.mask_a, "validity mask for the first image");
  ec->add_option("--mask-b", ea.mask_b, "validity mask for the second image");
  ea.window_opt = ec->add_option("--window", ea.window, "metric window (odd)");
  ec->add_option("--report", ea.report, "also write the metric JSON here");

  FeaturesArgs fa;
  CLI::App* fc = app.add_subcommand(
      "features", "detect and match features; write a correspondence file");
  fc->add_option("source", fa.source, "source image")->required();
  fc->add_option("target", fa.target, "target image")->required();
  fc->add_option("-o,--out", fa.out, "correspondence JSON output path");
  fc->add_option("--viz", fa.viz, "write a side-by-side match visualization");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (sc->parsed()) return run_stitch(sa);
    if (ec->parsed()) return run_eval(ea);
    if (fc->parsed()) return run_features(fa);
    return 2;
  } catch (const StitchError& e) {
    std::cerr << "error [" << stage_name(e.stage()) << "]: " << e.what()
              << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
