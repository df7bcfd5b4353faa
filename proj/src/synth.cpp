// SPDX-License-Identifier: Apache-2.0
#include "langtrack/synth.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace langtrack {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Deterministic static texture: one hash per pixel, independent of the
// frame index so the background does not flicker.
double texture_noise(std::uint64_t seed, int x, int y) {
  std::uint64_t h =
      seed + 0x9e3779b97f4a7c15ULL *
                 (static_cast<std::uint64_t>(y) * 73856093ULL +
                  static_cast<std::uint64_t>(x) * 19349663ULL + 1ULL);
  h ^= h >> 30;
  h *= 0xbf58476d1ce4e5b9ULL;
  h ^= h >> 27;
  h *= 0x94d049bb133111ebULL;
  h ^= h >> 31;
  return static_cast<double>(h >> 11) * 0x1.0p-53 * 2.0 - 1.0;
}

struct Mover {
  int id = 0;
  std::string attribute;
  std::array<double, 3> color{};
  int w = 0, h = 0;
  double x = 0.0, y = 0.0;  // top-left, continuous
  double angle = 0.0;
  double speed = 0.0;
};

void bounce(double& pos, double lo, double hi, double& angle, bool horizontal) {
  bool hit = false;
  if (pos < lo) {
    pos = lo + (lo - pos);
    hit = true;
  }
  if (pos > hi) {
    pos = hi - (pos - hi);
    hit = true;
  }
  pos = std::clamp(pos, lo, hi);
  if (hit) angle = horizontal ? kPi - angle : -angle;
}

}  // namespace

DomainSpec domain_a() { return DomainSpec{}; }

DomainSpec domain_b() {
  DomainSpec d;
  d.name = "domain_b";
  d.background = 0.30;
  d.texture = 0.08;
  d.texture_seed = 2;
  d.density = 5;
  d.scale_min = 0.10;
  d.scale_max = 0.15;
  d.speed = 2.5;
  d.direction_noise = 0.45;
  d.occlusion = 0.10;
  d.sensor_noise = 0.05;
  d.attributes = {"red", "blue", "purple", "orange"};
  return d;
}

const std::map<std::string, std::array<double, 3>>& attribute_colors() {
  static const std::map<std::string, std::array<double, 3>> kColors = {
      {"red", {0.85, 0.10, 0.10}},    {"blue", {0.10, 0.20, 0.85}},
      {"green", {0.10, 0.70, 0.15}},  {"yellow", {0.90, 0.85, 0.10}},
      {"purple", {0.60, 0.15, 0.80}}, {"orange", {0.95, 0.55, 0.10}},
      {"white", {0.97, 0.97, 0.97}},  {"black", {0.05, 0.05, 0.05}},
  };
  return kColors;
}

static void validate_structure(const DomainSpec& spec) {
  if (spec.width <= 0 || spec.height <= 0 || spec.width % 32 != 0 ||
      spec.height % 32 != 0)
    throw std::invalid_argument("domain dims must be positive multiples of 32");
  if (spec.density < 1) throw std::invalid_argument("density must be >= 1");
  if (!(spec.scale_min > 0.0) || spec.scale_max < spec.scale_min ||
      spec.scale_max >= 1.0)
    throw std::invalid_argument("scale range must satisfy 0 < min <= max < 1");
  if (spec.occlusion < 0.0 || spec.occlusion >= 1.0)
    throw std::invalid_argument("occlusion rate must be in [0,1)");
  if (spec.attributes.empty())
    throw std::invalid_argument("attribute list is empty");
  for (const auto& a : spec.attributes)
    if (attribute_colors().count(a) == 0)
      throw std::invalid_argument("no rendering color for attribute '" + a +
                                  "'");
}

void validate_domain(const DomainSpec& spec, const Trackbook& book) {
  validate_structure(spec);
  for (const auto& a : spec.attributes) {
    std::string phrase = "person in " + a + " clothes";
    if (std::find(book.phrases.begin(), book.phrases.end(), phrase) ==
        book.phrases.end())
      throw std::invalid_argument("attribute '" + a +
                                  "' has no trackbook phrase");
  }
}

std::string domain_to_json(const DomainSpec& spec) {
  nlohmann::ordered_json j;
  j["name"] = spec.name;
  j["width"] = spec.width;
  j["height"] = spec.height;
  j["background"] = spec.background;
  j["texture"] = spec.texture;
  j["texture_seed"] = spec.texture_seed;
  j["density"] = spec.density;
  j["scale_min"] = spec.scale_min;
  j["scale_max"] = spec.scale_max;
  j["speed"] = spec.speed;
  j["direction_noise"] = spec.direction_noise;
  j["occlusion"] = spec.occlusion;
  j["sensor_noise"] = spec.sensor_noise;
  j["attributes"] = spec.attributes;
  return j.dump(2) + "\n";
}

DomainSpec domain_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("bad domain json: ") + e.what());
  }
  DomainSpec d;
  d.name = j.value("name", d.name);
  d.width = j.value("width", d.width);
  d.height = j.value("height", d.height);
  d.background = j.value("background", d.background);
  d.texture = j.value("texture", d.texture);
  d.texture_seed = j.value("texture_seed", d.texture_seed);
  d.density = j.value("density", d.density);
  d.scale_min = j.value("scale_min", d.scale_min);
  d.scale_max = j.value("scale_max", d.scale_max);
  d.speed = j.value("speed", d.speed);
  d.direction_noise = j.value("direction_noise", d.direction_noise);
  d.occlusion = j.value("occlusion", d.occlusion);
  d.sensor_noise = j.value("sensor_noise", d.sensor_noise);
  if (j.contains("attributes"))
    d.attributes = j["attributes"].get<std::vector<std::string>>();
  return d;
}

SynthSequence synth_generate(const DomainSpec& spec, int frames,
                             std::uint64_t seed) {
  validate_structure(spec);
  if (frames < 1) throw std::invalid_argument("frame count must be >= 1");
  const int W = spec.width, H = spec.height;
  Rng rng(Rng::derive(seed, "synth." + spec.name));

  std::vector<Mover> movers;
  const int min_side = std::min(W, H);
  for (int i = 0; i < spec.density; ++i) {
    Mover m;
    m.id = i + 1;
    m.attribute = spec.attributes[i % spec.attributes.size()];
    m.color = attribute_colors().at(m.attribute);
    m.w = std::clamp(
        static_cast<int>(std::lround(rng.uniform(spec.scale_min, spec.scale_max) * min_side)),
        4, W - 2);
    m.h = std::clamp(
        static_cast<int>(std::lround(rng.uniform(spec.scale_min, spec.scale_max) * min_side)),
        4, H - 2);
    m.x = rng.uniform(1.0, static_cast<double>(W - m.w - 1));
    m.y = rng.uniform(1.0, static_cast<double>(H - m.h - 1));
    m.angle = rng.uniform(0.0, 2.0 * kPi);
    m.speed = spec.speed * rng.uniform(0.7, 1.3);
    movers.push_back(m);
  }

  SynthSequence seq;
  seq.name = spec.name;
  seq.domain = spec.name;
  seq.width = W;
  seq.height = H;
  for (const auto& m : movers) seq.attribute_of[m.id] = m.attribute;

  Eigen::MatrixXd base(3, W * H);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double v = std::clamp(
          spec.background + spec.texture * texture_noise(spec.texture_seed, x, y),
          0.0, 1.0);
      base.col(y * W + x).setConstant(v);
    }

  for (int f = 1; f <= frames; ++f) {
    if (f > 1) {
      for (auto& m : movers) {
        m.angle += rng.gaussian(0.0, spec.direction_noise);
        m.x += std::cos(m.angle) * m.speed;
        m.y += std::sin(m.angle) * m.speed;
        bounce(m.x, 1.0, static_cast<double>(W - m.w - 1), m.angle, true);
        bounce(m.y, 1.0, static_cast<double>(H - m.h - 1), m.angle, false);
      }
    }
    std::vector<bool> hidden(movers.size());
    for (size_t i = 0; i < movers.size(); ++i)
      hidden[i] = rng.bernoulli(spec.occlusion);

    ImageFrame img;
    img.height = H;
    img.width = W;
    img.frame_index = f;
    img.pixels = base;
    std::vector<TrackedBox> rows;
    for (size_t i = 0; i < movers.size(); ++i) {
      if (hidden[i]) continue;
      const Mover& m = movers[i];
      int left = std::clamp(static_cast<int>(std::lround(m.x)), 0, W - m.w);
      int top = std::clamp(static_cast<int>(std::lround(m.y)), 0, H - m.h);
      for (int y = top; y < top + m.h; ++y)
        for (int x = left; x < left + m.w; ++x) {
          bool border = y == top || y == top + m.h - 1 || x == left ||
                        x == left + m.w - 1;
          double shade = border ? 0.55 : 1.0;
          for (int c = 0; c < 3; ++c)
            img.pixels(c, y * W + x) = m.color[c] * shade;
        }
      rows.push_back(TrackedBox{m.id,
                                Rect{static_cast<double>(left),
                                     static_cast<double>(top),
                                     static_cast<double>(m.w),
                                     static_cast<double>(m.h)},
                                1.0});
    }
    if (spec.sensor_noise > 0.0)
      for (int p = 0; p < W * H; ++p)
        for (int c = 0; c < 3; ++c)
          img.pixels(c, p) = std::clamp(
              img.pixels(c, p) + rng.gaussian(0.0, spec.sensor_noise), 0.0, 1.0);
    seq.frames.push_back(std::move(img));
    if (!rows.empty()) seq.gt.frames[f] = std::move(rows);
  }
  return seq;
}

void write_ppm(const ImageFrame& frame, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "P6\n" << frame.width << " " << frame.height << "\n255\n";
  std::vector<unsigned char> buf(static_cast<size_t>(frame.width) *
                                 frame.height * 3);
  for (int p = 0; p < frame.width * frame.height; ++p)
    for (int c = 0; c < 3; ++c) {
      double v = std::clamp(frame.pixels(c, p), 0.0, 1.0);
      buf[3 * static_cast<size_t>(p) + c] =
          static_cast<unsigned char>(std::lround(v * 255.0));
    }
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size()));
}

ImageFrame read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::string magic;
  in >> magic;
  if (magic != "P6") throw std::runtime_error(path + ": not a P6 ppm");
  auto next_int = [&in, &path]() {
    // skip whitespace and '#' comment lines between header fields
    for (;;) {
      int ch = in.peek();
      if (ch == '#') {
        std::string line;
        std::getline(in, line);
      } else if (ch != EOF && std::isspace(static_cast<unsigned char>(ch))) {
        in.get();
      } else {
        break;
      }
    }
    int v = 0;
    if (!(in >> v)) throw std::runtime_error(path + ": truncated ppm header");
    return v;
  };
  int w = next_int(), h = next_int(), maxval = next_int();
  if (w <= 0 || h <= 0 || maxval != 255)
    throw std::runtime_error(path + ": unsupported ppm header");
  in.get();  // single whitespace after maxval
  std::vector<unsigned char> buf(static_cast<size_t>(w) * h * 3);
  in.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(buf.size()));
  if (in.gcount() != static_cast<std::streamsize>(buf.size()))
    throw std::runtime_error(path + ": truncated ppm payload");
  ImageFrame frame;
  frame.width = w;
  frame.height = h;
  frame.pixels.resize(3, w * h);
  for (int p = 0; p < w * h; ++p)
    for (int c = 0; c < 3; ++c)
      frame.pixels(c, p) = buf[3 * static_cast<size_t>(p) + c] / 255.0;
  return frame;
}

void save_sequence(const SynthSequence& seq, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "frames");
  for (const auto& frame : seq.frames) {
    char name[32];
    std::snprintf(name, sizeof(name), "%06d.ppm", frame.frame_index);
    write_ppm(frame, (fs::path(dir) / "frames" / name).string());
  }
  write_mot(seq.gt, (fs::path(dir) / "gt.txt").string());
  nlohmann::ordered_json j;
  j["name"] = seq.name;
  j["domain"] = seq.domain;
  j["width"] = seq.width;
  j["height"] = seq.height;
  j["frames"] = seq.frames.size();
  nlohmann::ordered_json attrs;
  for (const auto& [id, attr] : seq.attribute_of)
    attrs[std::to_string(id)] = attr;
  j["attributes"] = attrs;
  std::ofstream info((fs::path(dir) / "seq_info.json").string());
  info << j.dump(2) << "\n";
}

SynthSequence load_sequence(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream info((fs::path(dir) / "seq_info.json").string());
  if (!info) throw std::runtime_error(dir + ": missing seq_info.json");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(info);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(dir + ": bad seq_info.json: " + e.what());
  }
  SynthSequence seq;
  seq.name = j.at("name").get<std::string>();
  seq.domain = j.at("domain").get<std::string>();
  seq.width = j.at("width").get<int>();
  seq.height = j.at("height").get<int>();
  int n = j.at("frames").get<int>();
  for (const auto& [key, value] : j.at("attributes").items())
    seq.attribute_of[std::stoi(key)] = value.get<std::string>();
  for (int f = 1; f <= n; ++f) {
    char name[32];
    std::snprintf(name, sizeof(name), "%06d.ppm", f);
    ImageFrame frame = read_ppm((fs::path(dir) / "frames" / name).string());
    frame.frame_index = f;
    seq.frames.push_back(std::move(frame));
  }
  seq.gt = read_mot((fs::path(dir) / "gt.txt").string());
  return seq;
}

}  // namespace langtrack
