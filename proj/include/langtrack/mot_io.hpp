// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "langtrack/geometry.hpp"

#include <map>
#include <string>
#include <vector>

namespace langtrack {

// One annotated or predicted box. Ground truth carries conf = 1.
struct TrackedBox {
  int id = 0;
  Rect box;
  double conf = 1.0;
};

// Frame index -> boxes, frames 1-indexed. Used for both GT and results.
struct Sequence {
  std::map<int, std::vector<TrackedBox>> frames;

  int num_frames() const {
    return frames.empty() ? 0 : frames.rbegin()->first;
  }
  std::size_t total_boxes() const {
    std::size_t n = 0;
    for (const auto& [f, v] : frames) n += v.size();
    return n;
  }
  // Missing frames read as empty.
  const std::vector<TrackedBox>& at(int frame) const {
    static const std::vector<TrackedBox> empty;
    auto it = frames.find(frame);
    return it == frames.end() ? empty : it->second;
  }
};

// MOTChallenge text interchange: "frame,id,bb_left,bb_top,w,h,conf,-1,-1,-1",
// frames and ids 1-indexed, conf with 6 decimals, lines sorted by (frame, id).
// Reading accepts unsorted lines and 7..10 columns; writing always emits the
// canonical sorted 10-column form.
std::string format_mot(const Sequence& seq);
void write_mot(const Sequence& seq, const std::string& path);
Sequence parse_mot(const std::string& text);
Sequence read_mot(const std::string& path);

}  // namespace langtrack
