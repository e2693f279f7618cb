#pragma once

#include <algorithm>
#include <string>

#include "curatekit/core.hpp"

namespace curatekit {

/// Axis-aligned box in pixel coordinates.
struct Box {
  double xmin = 0, ymin = 0, xmax = 0, ymax = 0;

  double width() const noexcept { return xmax - xmin; }
  double height() const noexcept { return ymax - ymin; }
  double area() const noexcept { return std::max(0.0, width()) * std::max(0.0, height()); }
  bool valid() const noexcept { return xmin < xmax && ymin < ymax; }
  double cx() const noexcept { return 0.5 * (xmin + xmax); }
  double cy() const noexcept { return 0.5 * (ymin + ymax); }

  friend bool operator==(const Box&, const Box&) = default;
  friend auto operator<=>(const Box&, const Box&) = default;
};

inline double intersection(const Box& a, const Box& b) noexcept {
  const double w = std::min(a.xmax, b.xmax) - std::max(a.xmin, b.xmin);
  const double h = std::min(a.ymax, b.ymax) - std::max(a.ymin, b.ymin);
  return w > 0 && h > 0 ? w * h : 0.0;
}

inline double iou(const Box& a, const Box& b) noexcept {
  const double inter = intersection(a, b);
  if (inter <= 0.0) return 0.0;
  return inter / (a.area() + b.area() - inter);
}

/// IoU minus squared center distance over the squared diagonal of the
/// smallest enclosing box.
inline double diou(const Box& a, const Box& b) noexcept {
  const double dx = a.cx() - b.cx(), dy = a.cy() - b.cy();
  const double ex = std::max(a.xmax, b.xmax) - std::min(a.xmin, b.xmin);
  const double ey = std::max(a.ymax, b.ymax) - std::min(a.ymin, b.ymin);
  const double c2 = ex * ex + ey * ey;
  return iou(a, b) - (c2 > 0.0 ? (dx * dx + dy * dy) / c2 : 0.0);
}

/// One detection: box, class label, confidence and the model that produced it.
struct Proposal {
  Box box;
  std::string label;
  double score = 1.0;
  std::string model_id;

  friend bool operator==(const Proposal&, const Proposal&) = default;
};

}  // namespace curatekit
