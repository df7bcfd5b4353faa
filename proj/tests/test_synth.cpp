// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <langtrack/mot_io.hpp>
#include <langtrack/synth.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace langtrack;

#ifndef LANGTRACK_SOURCE_DIR
#error "LANGTRACK_SOURCE_DIR must be defined for tests"
#endif

namespace {

const std::string kBookPath =
    std::string(LANGTRACK_SOURCE_DIR) + "/data/trackbook.txt";

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

double mean_boxes_per_frame(const SynthSequence& seq) {
  double total = 0.0;
  for (const auto& [frame, rows] : seq.gt.frames) total += rows.size();
  return total / static_cast<double>(seq.frames.size());
}

}  // namespace

TEST_CASE("same spec and seed render bit-identical sequences") {
  DomainSpec spec = domain_a();
  SynthSequence a = synth_generate(spec, 12, 42);
  SynthSequence b = synth_generate(spec, 12, 42);
  REQUIRE(a.frames.size() == b.frames.size());
  for (size_t i = 0; i < a.frames.size(); ++i)
    CHECK(a.frames[i].pixels == b.frames[i].pixels);
  CHECK(format_mot(a.gt) == format_mot(b.gt));

  SynthSequence c = synth_generate(spec, 12, 43);
  bool all_equal = true;
  for (size_t i = 0; i < a.frames.size(); ++i)
    all_equal = all_equal && a.frames[i].pixels == c.frames[i].pixels;
  CHECK_FALSE(all_equal);
}

TEST_CASE("density one with no occlusion keeps one box in every frame") {
  DomainSpec spec = domain_a();
  spec.density = 1;
  spec.occlusion = 0.0;
  SynthSequence seq = synth_generate(spec, 25, 9);
  REQUIRE(seq.frames.size() == 25);
  for (int f = 1; f <= 25; ++f) {
    REQUIRE(seq.gt.at(f).size() == 1);
    CHECK(seq.gt.at(f)[0].id == 1);
  }
  CHECK(seq.attribute_of.at(1) == "red");
}

TEST_CASE("domain presets differ in mean target counts") {
  SynthSequence a = synth_generate(domain_a(), 60, 3);
  SynthSequence b = synth_generate(domain_b(), 60, 3);
  double ma = mean_boxes_per_frame(a);
  double mb = mean_boxes_per_frame(b);
  // A: 3 targets at 4% occlusion, B: 5 targets at 10%
  CHECK(ma == doctest::Approx(3.0 * (1.0 - domain_a().occlusion)).epsilon(0.15));
  CHECK(mb == doctest::Approx(5.0 * (1.0 - domain_b().occlusion)).epsilon(0.15));
  CHECK(mb - ma > 0.8);
}

TEST_CASE("ground truth rows are the exact rendered extents") {
  DomainSpec spec = domain_a();
  spec.density = 1;
  spec.occlusion = 0.0;
  spec.sensor_noise = 0.0;
  SynthSequence seq = synth_generate(spec, 10, 5);
  const auto& color = attribute_colors().at("red");
  for (int f = 1; f <= 10; ++f) {
    const TrackedBox& row = seq.gt.at(f)[0];
    const ImageFrame& img = seq.frames[static_cast<size_t>(f - 1)];
    int cx = static_cast<int>(row.box.left + row.box.w / 2);
    int cy = static_cast<int>(row.box.top + row.box.h / 2);
    for (int c = 0; c < 3; ++c)
      CHECK(img.pixels(c, cy * img.width + cx) == color[c]);
    // background stays gray right outside the left edge
    int ox = static_cast<int>(row.box.left) - 1;
    if (ox >= 0) {
      double r = img.pixels(0, cy * img.width + ox);
      double g = img.pixels(1, cy * img.width + ox);
      double bl = img.pixels(2, cy * img.width + ox);
      CHECK(r == g);
      CHECK(g == bl);
    }
    CHECK(row.box.left >= 0);
    CHECK(row.box.top >= 0);
    CHECK(row.box.right() <= spec.width);
    CHECK(row.box.bottom() <= spec.height);
  }
}

TEST_CASE("occlusion removes the target from pixels and labels together") {
  DomainSpec spec = domain_a();
  spec.density = 1;
  spec.occlusion = 0.5;
  spec.texture = 0.0;
  spec.sensor_noise = 0.0;
  SynthSequence seq = synth_generate(spec, 40, 11);
  int visible = 0, hidden = 0;
  for (int f = 1; f <= 40; ++f) {
    const ImageFrame& img = seq.frames[static_cast<size_t>(f - 1)];
    bool any_paint = false;
    for (int p = 0; p < img.width * img.height && !any_paint; ++p)
      any_paint = img.pixels(0, p) != spec.background ||
                  img.pixels(1, p) != spec.background ||
                  img.pixels(2, p) != spec.background;
    bool labeled = !seq.gt.at(f).empty();
    CHECK(any_paint == labeled);
    (labeled ? visible : hidden)++;
  }
  CHECK(visible > 5);
  CHECK(hidden > 5);
}

TEST_CASE("ppm files round-trip the quantized image") {
  Rng rng(77);
  ImageFrame frame;
  frame.width = 32;
  frame.height = 32;
  frame.pixels.resize(3, 32 * 32);
  for (int p = 0; p < 32 * 32; ++p)
    for (int c = 0; c < 3; ++c) frame.pixels(c, p) = rng.uniform();
  std::string path = "/tmp/langtrack_test_roundtrip.ppm";
  write_ppm(frame, path);
  ImageFrame back = read_ppm(path);
  REQUIRE(back.width == 32);
  REQUIRE(back.height == 32);
  for (int p = 0; p < 32 * 32; ++p)
    for (int c = 0; c < 3; ++c) {
      double q = std::lround(frame.pixels(c, p) * 255.0) / 255.0;
      CHECK(back.pixels(c, p) == doctest::Approx(q).epsilon(1e-12));
    }
  std::string path2 = "/tmp/langtrack_test_roundtrip2.ppm";
  write_ppm(back, path2);
  CHECK(slurp(path) == slurp(path2));
  std::remove(path.c_str());
  std::remove(path2.c_str());
}

TEST_CASE("sequences save and load completely") {
  DomainSpec spec = domain_a();
  spec.density = 2;
  SynthSequence seq = synth_generate(spec, 6, 21);
  std::string dir = "/tmp/langtrack_test_seq";
  std::filesystem::remove_all(dir);
  save_sequence(seq, dir);
  SynthSequence back = load_sequence(dir);
  CHECK(back.name == seq.name);
  CHECK(back.domain == "domain_a");
  CHECK(back.width == seq.width);
  CHECK(back.height == seq.height);
  CHECK(back.attribute_of == seq.attribute_of);
  CHECK(format_mot(back.gt) == format_mot(seq.gt));
  REQUIRE(back.frames.size() == seq.frames.size());
  for (size_t i = 0; i < seq.frames.size(); ++i) {
    CHECK(back.frames[i].frame_index == static_cast<int>(i) + 1);
    for (int p = 0; p < seq.width * seq.height; ++p)
      for (int c = 0; c < 3; ++c) {
        double q = std::lround(seq.frames[i].pixels(c, p) * 255.0) / 255.0;
        REQUIRE(back.frames[i].pixels(c, p) == doctest::Approx(q).epsilon(1e-12));
      }
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("domain specs serialize to json and back") {
  DomainSpec b = domain_b();
  DomainSpec back = domain_from_json(domain_to_json(b));
  CHECK(back.name == b.name);
  CHECK(back.density == b.density);
  CHECK(back.background == b.background);
  CHECK(back.scale_min == b.scale_min);
  CHECK(back.attributes == b.attributes);
  CHECK_THROWS_AS(domain_from_json("{not json"), std::invalid_argument);
}

TEST_CASE("invalid domains are rejected") {
  Trackbook book = load_trackbook(kBookPath);
  DomainSpec ok = domain_a();
  CHECK_NOTHROW(validate_domain(ok, book));
  CHECK_NOTHROW(validate_domain(domain_b(), book));

  DomainSpec bad = ok;
  bad.density = 0;
  CHECK_THROWS_AS(synth_generate(bad, 5, 1), std::invalid_argument);
  bad = ok;
  bad.scale_min = 0.0;
  CHECK_THROWS_AS(synth_generate(bad, 5, 1), std::invalid_argument);
  bad = ok;
  bad.width = 50;
  CHECK_THROWS_AS(synth_generate(bad, 5, 1), std::invalid_argument);
  bad = ok;
  bad.attributes = {"pink"};
  CHECK_THROWS_AS(synth_generate(bad, 5, 1), std::invalid_argument);
  bad = ok;
  bad.attributes = {"red"};
  Trackbook thin;
  thin.phrases = {"person walking alone"};
  CHECK_THROWS_AS(validate_domain(bad, thin), std::invalid_argument);
}
