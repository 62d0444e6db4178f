#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"

#include "blade/formats.hpp"
#include "blade/image_io.hpp"
#include "blade/pipeline.hpp"

using namespace blade;
namespace fs = std::filesystem;

namespace {

const fs::path& work() {
  static const fs::path w = [] {
    const fs::path p = fs::temp_directory_path() / "blade_cli_test";
    fs::remove_all(p);
    fs::create_directories(p / "in");
    const auto imgs = list_images(fs::path(BLADE_DATA_DIR) / "heldout");
    fs::copy_file(imgs.at(0), p / "in" / imgs.at(0).filename());
    return p;
  }();
  return w;
}

int run(const std::string& args) {
  const std::string cmd = std::string(BLADE_EXE) + " " + args + " > " +
                          (work() / "last.log").string() + " 2>&1";
  const int st = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(st));
  return WEXITSTATUS(st);
}

std::string last_log() {
  std::ifstream in(work() / "last.log");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string w(const std::string& rel) { return (work() / rel).string(); }

fs::path input_image() { return list_images(work() / "in").at(0); }

SelectionConfig small_selection() {
  SelectionConfig s = SelectionConfig::with_counts(4, 2, 1);
  s.strength_thresholds = {10.0};
  return s;
}

const std::string& gen_data() {
  static const std::string out = [] {
    const int code = run("gen-data --pde tv --input-dir " + w("in") + " --out " + w("data") +
                         " --scale 4 --steps 100 --subsample-m 10");
    REQUIRE(code == 0);
    return w("data");
  }();
  return out;
}

}  // namespace

TEST_CASE("help and usage errors") {
  CHECK(run("--help") == 0);
  CHECK(run("") == 2);
  CHECK(run("frobnicate") == 2);
  CHECK(run("train --out x.bfb") == 2);
}

TEST_CASE("gen-data") {
  const std::string data = gen_data();
  const fs::path seq = fs::path(data) / input_image().stem();
  const FrameSequence s = read_sequence(seq);
  CHECK(s.size() == 11);
  CHECK(s[0].width() == 64);
  CHECK(s[0].height() == 64);
  CHECK(s.dt == doctest::Approx(1.0));
  CHECK(fs::exists(fs::path(data) / "manifest.json"));
  const Json man = read_json(fs::path(data) / "manifest.json");
  CHECK(man["command"] == "gen-data");
  CHECK(man["inputs"][0]["sha256"] == sha256_file(input_image()));

  // same inputs, same bytes
  CHECK(run("gen-data --pde tv --input-dir " + w("in") + " --out " + w("data2") +
            " --scale 4 --steps 100 --subsample-m 10") == 0);
  for (int k : {0, 5, 10}) {
    const std::string f = "frame_" + std::string(k < 10 ? "000" : "00") + std::to_string(k) + ".png";
    CHECK(slurp(seq / f) == slurp(fs::path(w("data2")) / input_image().stem() / f));
  }

  CHECK(run("gen-data --pde tv --input-dir " + w("nowhere") + " --out " + w("x")) == 2);
  CHECK(run("gen-data --pde heat --input-dir " + w("in") + " --out " + w("x")) == 2);
  CHECK(run("gen-data --pde tv --input-dir " + w("in") + " --out " + w("x") +
            " --steps 15 --subsample-m 10") == 2);
}

TEST_CASE("train") {
  const std::string data = gen_data();
  const std::string common = "train --data " + data +
                             " --iters 10 --seed 3 --orientations 4 --strengths 2 --coherences 1 --fp 3";
  REQUIRE(run(common + " --out " + w("a.bfb") + " --loss-csv " + w("a.csv")) == 0);
  const FilterBank a = read_bank(w("a.bfb"));
  CHECK(a.num_filters() == 8);
  CHECK(fs::exists(w("a.bfb.manifest.json")));
  const Json man = read_json(w("a.bfb.manifest.json"));
  CHECK(man["seed"] == 3);
  CHECK(fs::exists(w("a.csv")));

  REQUIRE(run(common + " --out " + w("b.bfb")) == 0);
  CHECK(slurp(w("a.bfb")) == slurp(w("b.bfb")));

  CHECK(run("train --data " + w("nowhere") + " --out " + w("c.bfb")) == 2);
  CHECK(run(common + " --pde pm --out " + w("c.bfb")) == 2);

  fs::create_directories(w("broken"));
  fs::copy(data, w("broken"), fs::copy_options::recursive | fs::copy_options::overwrite_existing);
  std::ofstream(w("broken/manifest.json")) << "{ not json";
  CHECK(run("train --data " + w("broken") + " --out " + w("c.bfb") + " --iters 1") == 2);
}

TEST_CASE("evolve") {
  write_bank(w("zero.bfb"), FilterBank(Footprint{3, 3}, small_selection()));
  const Image u0 = read_image(input_image());
  REQUIRE(run("evolve --bank " + w("zero.bfb") + " --input " + input_image().string() + " --out " +
              w("zero_out.png") + " --steps 5") == 0);
  CHECK(testutil::max_abs_diff(read_image(w("zero_out.png")), u0) == 0.0);

  FilterBank r(Footprint{3, 3}, small_selection());
  testutil::randomize_taps(r, 1, 0.01);
  write_bank(w("r.bfb"), r);
  REQUIRE(run("evolve --bank " + w("r.bfb") + " --input " + input_image().string() + " --out " +
              w("copy.png") + " --steps 0") == 0);
  CHECK(testutil::max_abs_diff(read_image(w("copy.png")), u0) == 0.0);

  REQUIRE(run("evolve --bank " + w("r.bfb") + " --input " + input_image().string() + " --out " +
              w("r_out.png") + " --steps 3 --dt 0.5 --frames-dir " + w("r_frames")) == 0);
  CHECK(read_sequence(w("r_frames")).size() == 4);
  CHECK(read_json(w("r_out.png.manifest.json"))["parameters"]["dt"] == 0.5);

  FilterBank bx(Footprint{3, 3}, small_selection());
  FilterBank by(Footprint{3, 3}, small_selection());
  testutil::randomize_diffusive_flux(bx, by, 2);
  write_bank(w("fx.bfb"), bx);
  write_bank(w("fy.bfb"), by);
  REQUIRE(run("evolve --bank " + w("fx.bfb") + " --bank-y " + w("fy.bfb") + " --integrator flux --input " +
              input_image().string() + " --out " + w("flux.png") + " --steps 200 --dt 0.5") == 0);
  const Json fm = read_json(w("flux.png.manifest.json"));
  CHECK(fm["metrics"]["mean_drift"].get<double>() < 1e-12);
  CHECK(fm["metrics"]["conserved"] == true);

  CHECK(run("evolve --bank " + w("missing.bfb") + " --input " + input_image().string() + " --out " +
            w("m.png")) == 2);
  CHECK(run("evolve --bank " + w("r.bfb") + " --input " + input_image().string() + " --out " +
            w("m.png") + " --integrator rk4") == 2);
}

TEST_CASE("eval") {
  const std::string data = gen_data();
  REQUIRE(run("eval --reference-seq " + data + " --test-seq " + data + " --out " + w("same.csv")) == 0);
  CHECK(last_log().find("PSNR 999") != std::string::npos);
  CHECK(last_log().find("SSIM 1") != std::string::npos);
  CHECK(fs::exists(w("same.csv")));

  FrameSequence s = read_sequence(fs::path(data) / input_image().stem());
  s.frames.pop_back();
  write_sequence(w("short") + "/" + input_image().stem().string(), s, SequenceMeta{});
  CHECK(run("eval --reference-seq " + data + " --test-seq " + w("short") + " --out " + w("x.csv")) == 2);

  write_bank(w("zero.bfb"), FilterBank(Footprint{3, 3}, small_selection()));
  REQUIRE(run("eval --reference-seq " + data + " --bank " + w("zero.bfb") + " --out " + w("b.csv")) == 0);
  CHECK(read_json(w("b.csv.manifest.json"))["metrics"]["mean_final_psnr"].get<double>() < 999.0);
  CHECK(run("eval --reference-seq " + data + " --out " + w("x.csv")) == 2);
  CHECK(run("eval --reference-seq " + data + " --test-seq " + data + " --metrics psnr,lpips --out " +
            w("x.csv")) == 2);
}

TEST_CASE("reference and instability") {
  REQUIRE(run("reference --pde tv --input " + input_image().string() + " --out " + w("ref.png") +
              " --steps 5 --frames-dir " + w("ref_frames")) == 0);
  CHECK(read_sequence(w("ref_frames")).size() == 6);

  const int code = run("reference --pde tv --input " + input_image().string() + " --out " +
                       w("bad.png") + " --dt 10 --steps 50 --noise-sigma 20 --seed 1");
  CHECK(code == 1);
  CHECK(last_log().find("instability detected at step") != std::string::npos);
  const Json man = read_json(w("bad.png.manifest.json"));
  CHECK(man["metrics"]["unstable_step"].get<int>() >= 1);
  CHECK_FALSE(fs::exists(w("bad.png")));
}
