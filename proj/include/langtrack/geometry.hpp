// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>

namespace langtrack {

// Model-side box: normalized center coordinates, full width/height.
struct Box {
  double cx = 0.0, cy = 0.0, w = 0.0, h = 0.0;

  double x1() const { return cx - 0.5 * w; }
  double y1() const { return cy - 0.5 * h; }
  double x2() const { return cx + 0.5 * w; }
  double y2() const { return cy + 0.5 * h; }
  double area() const { return w * h; }
};

// Pixel-space box in MOTChallenge convention: top-left corner plus size.
struct Rect {
  double left = 0.0, top = 0.0, w = 0.0, h = 0.0;

  double right() const { return left + w; }
  double bottom() const { return top + h; }
  double area() const { return w * h; }
};

inline double iou(const Rect& a, const Rect& b) {
  const double ix =
      std::max(0.0, std::min(a.right(), b.right()) - std::max(a.left, b.left));
  const double iy =
      std::max(0.0, std::min(a.bottom(), b.bottom()) - std::max(a.top, b.top));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

inline double iou(const Box& a, const Box& b) {
  const double ix =
      std::max(0.0, std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1()));
  const double iy =
      std::max(0.0, std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1()));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

// Generalized IoU: IoU minus the enclosing-box penalty, in [-1, 1].
inline double giou(const Box& a, const Box& b) {
  const double ix =
      std::max(0.0, std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1()));
  const double iy =
      std::max(0.0, std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1()));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  const double cw = std::max(a.x2(), b.x2()) - std::min(a.x1(), b.x1());
  const double ch = std::max(a.y2(), b.y2()) - std::min(a.y1(), b.y1());
  const double c = cw * ch;
  const double iou_val = uni > 0.0 ? inter / uni : 0.0;
  return c > 0.0 ? iou_val - (c - uni) / c : iou_val;
}

inline Rect to_rect(const Box& b, double img_w, double img_h) {
  return Rect{b.x1() * img_w, b.y1() * img_h, b.w * img_w, b.h * img_h};
}

inline Box to_box(const Rect& r, double img_w, double img_h) {
  return Box{(r.left + 0.5 * r.w) / img_w, (r.top + 0.5 * r.h) / img_h,
             r.w / img_w, r.h / img_h};
}

}  // namespace langtrack
