#include "meshstitch/features.hpp"

#include "support/synthetic.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

using namespace meshstitch;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  const auto dir =
      std::filesystem::temp_directory_path() / "meshstitch_feature_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

double point_line_distance(const Vec3& line, const Vec2& p) {
  return std::abs(line.x() * p.x() + line.y() * p.y() + line.z());
}

// bright rectangle on a dark background; its four sides are step edges
RasterImage rect_image(int w, int h, int x0, int y0, int x1, int y1) {
  RasterImage img = RasterImage::constant(w, h, 0.1f);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) img.at(x, y) = 0.9f;
  return img;
}

}  // namespace

TEST_CASE("homogeneous line construction") {
  const Vec3 l = line_through(Vec2(0, 0), Vec2(4, 0));
  CHECK(std::abs(l.x() * l.x() + l.y() * l.y() - 1.0) < 1e-12);
  CHECK(point_line_distance(l, Vec2(0, 0)) < 1e-12);
  CHECK(point_line_distance(l, Vec2(4, 0)) < 1e-12);
  CHECK(point_line_distance(l, Vec2(1, 5)) == doctest::Approx(5.0));

  const Vec3 g = line_through(Vec2(3, -2), Vec2(-1, 7));
  CHECK(std::abs(g.x() * g.x() + g.y() * g.y() - 1.0) < 1e-12);
  CHECK(point_line_distance(g, Vec2(3, -2)) < 1e-12);
  CHECK(point_line_distance(g, Vec2(-1, 7)) < 1e-12);

  CHECK_THROWS_AS(line_through(Vec2(1, 1), Vec2(1, 1)), StitchError);
}

TEST_CASE("line match derives the target line from the target segment") {
  const LineSegment src{Vec2(0, 0), Vec2(10, 0)};
  const LineSegment dst{Vec2(2, 3), Vec2(12, 8)};
  const LineMatch m = LineMatch::from_segments(src, dst);
  CHECK(point_line_distance(m.line_prime, dst.p_s) < 1e-12);
  CHECK(point_line_distance(m.line_prime, dst.p_e) < 1e-12);
  CHECK(m.seg.p_s == src.p_s);
  CHECK(m.seg_prime.p_e == dst.p_e);
}

TEST_CASE("corners match themselves at zero distance") {
  const RasterImage img = testsupport::render_texture(96, 72, 1);
  const DetectorConfig cfg;
  const auto matches = detect_and_match_points(img, img, cfg);
  REQUIRE(matches.size() >= 10);
  for (const auto& m : matches) {
    CHECK((m.p - m.p_prime).norm() == 0.0);
    CHECK(m.score > 0.9);
  }
}

TEST_CASE("corners follow an integer translation") {
  const int w = 96, h = 72;
  const Vec2 t(3.0, 2.0);
  const RasterImage src = testsupport::render_texture(w, h, 2);
  const RasterImage dst = testsupport::render_texture_mapped(
      w, h, 2, [&](const Vec2& q) { return Vec2(q + t); });
  // dst(q) = texture(q + t), so content at src position p sits at dst p - t
  const auto matches = detect_and_match_points(src, dst, DetectorConfig{});
  REQUIRE(matches.size() >= 5);
  for (const auto& m : matches)
    CHECK((m.p_prime - (m.p - t)).norm() < 1e-9);
}

TEST_CASE("a step edge yields one long horizontal segment") {
  RasterImage img = RasterImage::constant(40, 30, 0.0f);
  for (int y = 15; y < 30; ++y)
    for (int x = 0; x < 40; ++x) img.at(x, y) = 1.0f;

  const auto segments = detect_lines(img, DetectorConfig{});
  REQUIRE(segments.size() >= 1);
  double best_len = 0.0;
  LineSegment best = segments.front();
  for (const auto& s : segments)
    if (s.length() > best_len) {
      best_len = s.length();
      best = s;
    }
  CHECK(best_len >= 30.0);
  const Vec2 dir = (best.p_e - best.p_s).normalized();
  CHECK(std::abs(dir.y()) < 0.05);        // horizontal
  CHECK(std::abs(best.p_s.y() - 14.5) < 1.5);
}

TEST_CASE("segments match across a translation and leave extras unmatched") {
  const int w = 96, h = 72;
  const Vec2 t(4.0, 3.0);
  RasterImage src = rect_image(w, h, 14, 16, 50, 40);
  // a second rectangle present only in the source stays unmatched
  for (int y = 52; y <= 66; ++y)
    for (int x = 66; x <= 88; ++x) src.at(x, y) = 0.9f;
  const RasterImage dst =
      rect_image(w, h, 14 + int(t.x()), 16 + int(t.y()), 50 + int(t.x()),
                 40 + int(t.y()));

  std::vector<PointMatch> pre;
  for (const Vec2& p : {Vec2(20, 20), Vec2(60, 24), Vec2(30, 55), Vec2(70, 40),
                        Vec2(45, 60), Vec2(25, 35)})
    pre.push_back(PointMatch{p, p + t, 1.0});

  const LineMatchResult res =
      detect_and_match_lines(src, dst, DetectorConfig{}, pre);
  CHECK(res.matched.size() >= 3);
  for (const auto& m : res.matched) {
    const Vec2 mid = 0.5 * (m.seg.p_s + m.seg.p_e) + t;
    CHECK(point_line_distance(m.line_prime, mid) < 1.5);
  }
  CHECK(res.unmatched_src.size() >= 3);
}

TEST_CASE("correspondence files round trip") {
  CorrespondenceSet set;
  set.points.push_back(PointMatch{Vec2(1.5, 2.25), Vec2(3.5, 4.75), 1.0});
  set.points.push_back(PointMatch{Vec2(10, 20), Vec2(30, 40), 1.0});
  set.matched_lines.push_back(LineMatch::from_segments(
      LineSegment{Vec2(0, 0), Vec2(25, 5)}, LineSegment{Vec2(2, 1), Vec2(27, 7)}));
  set.unmatched_lines.push_back(LineSegment{Vec2(5, 5), Vec2(5, 45)});

  const auto path = temp_file("roundtrip.json");
  save_correspondences(path.string(), set);
  const CorrespondenceSet back = load_correspondences(path.string(), 10.0);

  REQUIRE(back.points.size() == 2);
  CHECK((back.points[0].p - set.points[0].p).norm() < 1e-12);
  CHECK((back.points[1].p_prime - set.points[1].p_prime).norm() < 1e-12);
  REQUIRE(back.matched_lines.size() == 1);
  CHECK((back.matched_lines[0].seg.p_e - Vec2(25, 5)).norm() < 1e-12);
  CHECK((back.matched_lines[0].seg_prime.p_s - Vec2(2, 1)).norm() < 1e-12);
  CHECK(point_line_distance(back.matched_lines[0].line_prime, Vec2(27, 7)) <
        1e-12);
  REQUIRE(back.unmatched_lines.size() == 1);
  CHECK(back.unmatched_lines[0].length() == doctest::Approx(40.0));
}

TEST_CASE("correspondence diagnostics name the offending entry") {
  const auto bad_point = temp_file("bad_point.json");
  {
    std::ofstream out(bad_point);
    out << R"({"points": [[1, 2, 3]]})";
  }
  try {
    load_correspondences(bad_point.string(), 10.0);
    FAIL("expected a parse failure");
  } catch (const StitchError& e) {
    CHECK(e.stage() == Stage::Features);
    CHECK(std::string(e.what()).find("points[0]") != std::string::npos);
  }

  const auto short_line = temp_file("short_line.json");
  {
    std::ofstream out(short_line);
    out << R"({"lines_unmatched": [[0, 0, 1, 1]]})";
  }
  try {
    load_correspondences(short_line.string(), 10.0);
    FAIL("expected a length failure");
  } catch (const StitchError& e) {
    const std::string what = e.what();
    CHECK(what.find("lines_unmatched[0]") != std::string::npos);
    CHECK(what.find("below minimum") != std::string::npos);
  }

  const auto garbage = temp_file("garbage.json");
  {
    std::ofstream out(garbage);
    out << "{not json";
  }
  CHECK_THROWS_AS(load_correspondences(garbage.string(), 10.0), StitchError);
  CHECK_THROWS_AS(load_correspondences("/no/such/file.json", 10.0), StitchError);
}
