#include "meshstitch/image_io.hpp"
#include "meshstitch/imaging.hpp"

#include "support/synthetic.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

using namespace meshstitch;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code = -1;
  std::string out;
  std::string err;
};

fs::path work_dir() {
  const auto dir = fs::temp_directory_path() / "meshstitch_cli_tests";
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

CliRun run_cli(const std::string& args) {
  const char* cli = std::getenv("MESHSTITCH_CLI");
  REQUIRE_MESSAGE(cli != nullptr, "MESHSTITCH_CLI must point at the binary");
  const fs::path out = work_dir() / "stdout.txt";
  const fs::path err = work_dir() / "stderr.txt";
  const std::string cmd = std::string("\"") + cli + "\" " + args + " > " +
                          out.string() + " 2> " + err.string();
  const int status = std::system(cmd.c_str());
  CliRun r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

// translated texture pair: plenty of corners, exactly related content
void write_pair(const fs::path& src_path, const fs::path& dst_path) {
  const int w = 200, h = 150;
  const Vec2 t(6.0, 4.0);
  const RasterImage src = testsupport::render_texture(w, h, 40);
  const RasterImage dst = testsupport::render_texture_mapped(
      w, h, 40, [&](const Vec2& q) { return Vec2(q + t); });
  save_image(src_path.string(), src);
  save_image(dst_path.string(), dst);
}

const std::string kFastFlags = " --mesh 8,6 --levels 2 ";

}  // namespace

TEST_CASE("cli usage and error exit codes") {
  CHECK(run_cli("--help").code == 0);
  CHECK(run_cli("stitch --help").code == 0);
  CHECK(run_cli("").code == 2);                    // subcommand required
  CHECK(run_cli("--no-such-flag").code == 2);
  CHECK(run_cli("stitch").code == 2);              // missing positionals
  CHECK(run_cli("frobnicate a b").code == 2);

  const CliRun missing = run_cli("stitch /no/such/a.png /no/such/b.png -o " +
                                 (work_dir() / "x.png").string());
  CHECK(missing.code == 3);
  CHECK(missing.err.find("error [IO]") != std::string::npos);
}

TEST_CASE("cli stitch writes panorama and deterministic report") {
  const fs::path dir = work_dir();
  const fs::path a = dir / "src.png", b = dir / "dst.png";
  write_pair(a, b);

  const fs::path pano = dir / "pano.png";
  const fs::path rep1 = dir / "report1.json";
  const fs::path rep2 = dir / "report2.json";

  const std::string base = "stitch " + a.string() + " " + b.string() +
                           kFastFlags + "--seed 11 -o " + pano.string();
  const CliRun r1 = run_cli(base + " --report " + rep1.string());
  CHECK(r1.code == 0);
  REQUIRE(fs::exists(pano));
  REQUIRE(fs::exists(rep1));

  const CliRun r2 = run_cli(base + " --report " + rep2.string());
  CHECK(r2.code == 0);
  CHECK(slurp(rep1) == slurp(rep2));  // byte-identical reruns

  const auto doc = nlohmann::json::parse(slurp(rep1));
  CHECK(doc.at("inputs").at("source").at(0).get<int>() == 200);
  CHECK(doc.at("config").at("seed").get<int>() == 11);
  CHECK(doc.at("config").at("mesh").at(0).get<int>() == 8);
  CHECK(doc.at("canvas").at("width").get<int>() >= 200);
  CHECK(doc.at("metrics").at("rmse_ncc_refined").get<double>() <= 30.0);

  const RasterImage out = load_image(pano.string());
  CHECK(out.width == doc.at("canvas").at("width").get<int>());
  CHECK(out.height == doc.at("canvas").at("height").get<int>());
}

TEST_CASE("cli eval scores aligned images as zero error") {
  const fs::path dir = work_dir();
  const fs::path a = dir / "eval_a.png";
  save_image(a.string(), testsupport::render_texture(80, 60, 41));

  const CliRun r = run_cli("eval " + a.string() + " " + a.string());
  CHECK(r.code == 0);
  const auto doc = nlohmann::json::parse(r.out);
  CHECK(doc.at("rmse_ncc").get<double>() < 1e-4);
  CHECK(doc.at("overlap_pixels").get<long long>() == (80 - 2) * (60 - 2));
  CHECK(doc.at("window").get<int>() == 3);

  const CliRun r5 = run_cli("eval " + a.string() + " " + a.string() +
                            " --window 5");
  CHECK(r5.code == 0);
  const auto doc5 = nlohmann::json::parse(r5.out);
  CHECK(doc5.at("window").get<int>() == 5);
  CHECK(doc5.at("overlap_pixels").get<long long>() == (80 - 4) * (60 - 4));

  CHECK(run_cli("eval " + a.string() + " " + a.string() + " --window 4").code ==
        2);
}

TEST_CASE("cli features output feeds back into stitch") {
  const fs::path dir = work_dir();
  const fs::path a = dir / "feat_src.png", b = dir / "feat_dst.png";
  write_pair(a, b);

  const fs::path corr = dir / "corr.json";
  const CliRun fr = run_cli("features " + a.string() + " " + b.string() +
                            " -o " + corr.string());
  CHECK(fr.code == 0);
  const auto cdoc = nlohmann::json::parse(slurp(corr));
  CHECK(cdoc.at("points").size() >= 8);

  const fs::path rep_detect = dir / "rep_detect.json";
  const fs::path rep_file = dir / "rep_file.json";
  const std::string common = a.string() + " " + b.string() + kFastFlags +
                             "-o " + (dir / "fb.png").string();
  CHECK(run_cli("stitch " + common + " --report " + rep_detect.string()).code ==
        0);
  CHECK(run_cli("stitch " + common + " --correspondences " + corr.string() +
                " --report " + rep_file.string())
            .code == 0);

  const auto d1 = nlohmann::json::parse(slurp(rep_detect));
  const auto d2 = nlohmann::json::parse(slurp(rep_file));
  CHECK(d1.at("global").dump() == d2.at("global").dump());

  // featureless inputs produce an empty (but valid) correspondence file
  const fs::path flat = dir / "flat.png";
  save_image(flat.string(), RasterImage::constant(64, 48, 0.5f));
  const fs::path empty_corr = dir / "empty_corr.json";
  const CliRun er = run_cli("features " + flat.string() + " " + flat.string() +
                            " -o " + empty_corr.string());
  CHECK(er.code == 0);
  const auto edoc = nlohmann::json::parse(slurp(empty_corr));
  CHECK(edoc.at("points").empty());
  CHECK(edoc.at("lines_matched").empty());
}

TEST_CASE("cli config file and flag precedence") {
  const fs::path dir = work_dir();
  const fs::path a = dir / "cfg_src.png", b = dir / "cfg_dst.png";
  write_pair(a, b);

  const fs::path config = dir / "config.json";
  {
    std::ofstream out(config);
    out << R"({"seed": 7, "mesh": [8, 6], "levels": 2})";
  }
  const std::string common =
      "stitch " + a.string() + " " + b.string() + " -o " +
      (dir / "cfg.png").string();

  const fs::path rep_default = dir / "rep_default.json";
  CHECK(run_cli(common + kFastFlags + "--report " + rep_default.string()).code ==
        0);
  CHECK(nlohmann::json::parse(slurp(rep_default))
            .at("config")
            .at("seed")
            .get<int>() == 42);

  const fs::path rep_cfg = dir / "rep_cfg.json";
  CHECK(run_cli(common + " --config " + config.string() + " --report " +
                rep_cfg.string())
            .code == 0);
  const auto cfg_doc = nlohmann::json::parse(slurp(rep_cfg));
  CHECK(cfg_doc.at("config").at("seed").get<int>() == 7);
  CHECK(cfg_doc.at("config").at("mesh").at(0).get<int>() == 8);

  const fs::path rep_flag = dir / "rep_flag.json";
  CHECK(run_cli(common + " --config " + config.string() + " --seed 9" +
                " --report " + rep_flag.string())
            .code == 0);
  CHECK(nlohmann::json::parse(slurp(rep_flag))
            .at("config")
            .at("seed")
            .get<int>() == 9);

  // unknown config keys and malformed flag values are usage errors
  const fs::path bad_config = dir / "bad_config.json";
  {
    std::ofstream out(bad_config);
    out << R"({"seeed": 7})";
  }
  CHECK(run_cli(common + " --config " + bad_config.string()).code == 2);
  CHECK(run_cli(common + kFastFlags + "--weights 1,2,3").code == 2);
  CHECK(run_cli(common + " --mesh 0,5").code == 2);
}
