// SPDX-License-Identifier: Apache-2.0
#include "langtrack/clips.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace langtrack {

namespace {

void recompute_newborn(ClipSample& clip) {
  std::set<int> seen;
  for (auto& frame : clip.frames) {
    frame.newborn.assign(frame.ids.size(), false);
    for (size_t i = 0; i < frame.ids.size(); ++i)
      if (seen.insert(frame.ids[i]).second) frame.newborn[i] = true;
  }
}

}  // namespace

ClipSample sample_clip(const SynthSequence& seq, int clip_len, int min_interval,
                       int max_interval, Rng& rng) {
  if (clip_len < 2) throw std::invalid_argument("clip length must be >= 2");
  if (min_interval < 1 || max_interval < min_interval)
    throw std::invalid_argument("bad sampling interval range");
  const int total = static_cast<int>(seq.frames.size());
  const int span = clip_len - 1;
  if (total < 1 + span * min_interval)
    throw std::runtime_error("sequence too short for clip length " +
                             std::to_string(clip_len));
  const int feasible = (total - 1) / span;
  const int stride = static_cast<int>(
      rng.uniform_int(min_interval, std::min(max_interval, feasible)));
  const int start =
      static_cast<int>(rng.uniform_int(1, total - span * stride));

  ClipSample clip;
  clip.source = seq.name;
  for (int k = 0; k < clip_len; ++k) {
    const int f = start + k * stride;
    ClipFrame frame;
    frame.image = seq.frames[static_cast<size_t>(f - 1)];
    for (const auto& row : seq.gt.at(f)) {
      frame.ids.push_back(row.id);
      frame.boxes.push_back(to_box(row.box, seq.width, seq.height));
      frame.attributes.push_back(seq.attribute_of.at(row.id));
    }
    clip.frames.push_back(std::move(frame));
  }
  recompute_newborn(clip);
  return clip;
}

ClipSample flip_clip(const ClipSample& clip) {
  ClipSample out = clip;
  for (auto& frame : out.frames) {
    const int w = frame.image.width, h = frame.image.height;
    Eigen::MatrixXd mirrored(3, w * h);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        mirrored.col(y * w + x) = frame.image.pixels.col(y * w + (w - 1 - x));
    frame.image.pixels = std::move(mirrored);
    for (auto& b : frame.boxes) b.cx = 1.0 - b.cx;
  }
  return out;
}

ClipSample crop_clip(const ClipSample& clip, int left, int top, int width,
                     int height) {
  if (width <= 0 || height <= 0 || width % 32 != 0 || height % 32 != 0)
    throw std::invalid_argument("crop dims must be positive multiples of 32");
  ClipSample out;
  out.source = clip.source;
  for (const auto& frame : clip.frames) {
    const int w = frame.image.width, h = frame.image.height;
    if (left < 0 || top < 0 || left + width > w || top + height > h)
      throw std::invalid_argument("crop window outside the image");
    ClipFrame cropped;
    cropped.image.width = width;
    cropped.image.height = height;
    cropped.image.frame_index = frame.image.frame_index;
    cropped.image.pixels.resize(3, width * height);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x)
        cropped.image.pixels.col(y * width + x) =
            frame.image.pixels.col((y + top) * w + (x + left));
    for (size_t i = 0; i < frame.ids.size(); ++i) {
      const Box& b = frame.boxes[i];
      double x1 = b.x1() * w, x2 = b.x2() * w;
      double y1 = b.y1() * h, y2 = b.y2() * h;
      double ix1 = std::max(x1, static_cast<double>(left));
      double iy1 = std::max(y1, static_cast<double>(top));
      double ix2 = std::min(x2, static_cast<double>(left + width));
      double iy2 = std::min(y2, static_cast<double>(top + height));
      double inter = std::max(0.0, ix2 - ix1) * std::max(0.0, iy2 - iy1);
      double area = (x2 - x1) * (y2 - y1);
      if (area <= 0.0 || inter / area < 0.25) continue;
      Box nb;
      nb.cx = (0.5 * (ix1 + ix2) - left) / width;
      nb.cy = (0.5 * (iy1 + iy2) - top) / height;
      nb.w = (ix2 - ix1) / width;
      nb.h = (iy2 - iy1) / height;
      cropped.ids.push_back(frame.ids[i]);
      cropped.boxes.push_back(nb);
      cropped.attributes.push_back(frame.attributes[i]);
    }
    out.frames.push_back(std::move(cropped));
  }
  recompute_newborn(out);
  return out;
}

ClipSample augment(const ClipSample& clip, Rng& rng) {
  bool do_flip = rng.bernoulli(0.5);
  bool do_crop = rng.bernoulli(0.5);
  ClipSample out = do_flip ? flip_clip(clip) : clip;
  const int w = out.frames.front().image.width;
  const int h = out.frames.front().image.height;
  const int cw = w - 32, ch = h - 32;
  if (do_crop && cw >= 32 && ch >= 32) {
    int left = static_cast<int>(rng.uniform_int(0, w - cw));
    int top = static_cast<int>(rng.uniform_int(0, h - ch));
    out = crop_clip(out, left, top, cw, ch);
  }
  return out;
}

std::vector<FrameGt> clip_ground_truth(const ClipSample& clip) {
  std::vector<FrameGt> gts;
  for (const auto& frame : clip.frames) {
    FrameGt g;
    g.ids = frame.ids;
    g.boxes = frame.boxes;
    g.newborn = frame.newborn;
    gts.push_back(std::move(g));
  }
  return gts;
}

}  // namespace langtrack
