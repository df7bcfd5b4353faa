// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "langtrack/losses.hpp"
#include "langtrack/synth.hpp"

#include <string>
#include <vector>

namespace langtrack {

// One training-clip frame: image plus its ground truth in normalized cxcywh.
struct ClipFrame {
  ImageFrame image;
  std::vector<int> ids;
  std::vector<Box> boxes;
  std::vector<std::string> attributes;
  std::vector<bool> newborn;  // true exactly on an id's first clip frame
};

struct ClipSample {
  std::vector<ClipFrame> frames;  // >= 2
  std::string source;
};

// clip_len frames at one random stride drawn uniformly from
// [min_interval, min(max_interval, largest stride that fits)], with a random
// start. Throws when the sequence cannot host clip_len frames at min_interval.
ClipSample sample_clip(const SynthSequence& seq, int clip_len, int min_interval,
                       int max_interval, Rng& rng);

// Horizontal mirror of pixels and boxes (cx' = 1 - cx). Self-inverse.
ClipSample flip_clip(const ClipSample& clip);

// Crop window in pixels, applied identically to every frame. Boxes are
// clipped to the window and dropped when area retention < 25%; the crop size
// must keep both dims positive multiples of 32.
ClipSample crop_clip(const ClipSample& clip, int left, int top, int width,
                     int height);

// Random flip (p = 0.5) then random crop (p = 0.5, size fixed per clip,
// offset uniform). Crops shave 32 pixels per dim and are skipped when a dim
// is already at 32.
ClipSample augment(const ClipSample& clip, Rng& rng);

// Losses-ready view of the clip's ground truth.
std::vector<FrameGt> clip_ground_truth(const ClipSample& clip);

}  // namespace langtrack
