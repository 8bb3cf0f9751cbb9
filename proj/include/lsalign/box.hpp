#pragma once

namespace lsalign {

// Axis-aligned box in canvas units; well-formed when x1 < x2 and y1 < y2.
struct Box {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double area() const { return (x2 - x1) * (y2 - y1); }
  bool operator==(const Box&) const = default;
  auto operator<=>(const Box&) const = default;
};

}  // namespace lsalign
