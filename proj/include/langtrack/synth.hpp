// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "langtrack/mot_io.hpp"
#include "langtrack/perception.hpp"
#include "langtrack/rng.hpp"
#include "langtrack/trackbook.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace langtrack {

// Parameters of one synthetic world: colored rectangular targets drifting
// over a textured background. Attribute names must be subjects of trackbook
// phrases ("person in <attribute> clothes") so the rendered appearance and
// the textual prompts talk about the same things.
struct DomainSpec {
  std::string name = "domain_a";
  int width = 64;   // multiples of 32
  int height = 64;
  double background = 0.75;       // base gray level in [0,1]
  double texture = 0.05;          // static texture amplitude
  std::uint64_t texture_seed = 1;
  int density = 3;                // concurrent targets
  double scale_min = 0.16;        // target side / min(width, height)
  double scale_max = 0.24;
  double speed = 2.0;             // pixels per frame
  double direction_noise = 0.25;  // heading jitter per frame, radians
  double occlusion = 0.05;        // per-target per-frame hide probability
  double sensor_noise = 0.02;     // additive Gaussian per channel
  std::vector<std::string> attributes = {"red", "blue", "green", "yellow"};
};

// Train-side world: sparse, bright, large targets.
DomainSpec domain_a();
// Eval-side world: dense, dark, small targets.
DomainSpec domain_b();

// Colors a renderable attribute maps to; throws for unknown names.
const std::map<std::string, std::array<double, 3>>& attribute_colors();

// Structural checks plus the trackbook alignment: every attribute must have
// a color and a "person in <attribute> clothes" phrase.
void validate_domain(const DomainSpec& spec, const Trackbook& book);

std::string domain_to_json(const DomainSpec& spec);
DomainSpec domain_from_json(const std::string& text);

struct SynthSequence {
  std::string name;
  std::string domain;
  int width = 0;
  int height = 0;
  std::vector<ImageFrame> frames;  // frame_index 1..n
  Sequence gt;                     // pixel-space rects, exact rendered extents
  std::map<int, std::string> attribute_of;
};

// Deterministic under (spec, seed): same inputs give bit-identical pixels
// and ground truth.
SynthSequence synth_generate(const DomainSpec& spec, int frames,
                             std::uint64_t seed);

// Binary PPM (P6, maxval 255). Writing quantizes to 8 bits; reading back a
// written file reproduces the quantized image exactly.
void write_ppm(const ImageFrame& frame, const std::string& path);
ImageFrame read_ppm(const std::string& path);

// Directory layout: frames/000001.ppm ..., gt.txt, seq_info.json. The info
// file carries the domain provenance tag checked by the training protocol.
void save_sequence(const SynthSequence& seq, const std::string& dir);
SynthSequence load_sequence(const std::string& dir);

}  // namespace langtrack
