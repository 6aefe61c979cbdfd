#pragma once

#include <cstdint>
#include <vector>

namespace hardmine {

// Axis-aligned box in continuous scene coordinates, corner form.
// Area is (x2-x1)*(y2-y1); no +1 pixel convention.
struct BBox {
  double x1 = 0.0, y1 = 0.0, x2 = 0.0, y2 = 0.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  double cx() const { return 0.5 * (x1 + x2); }
  double cy() const { return 0.5 * (y1 + y2); }
  bool valid() const;

  bool operator==(const BBox&) const = default;
};

// Box regression offsets: center shifts normalized by proposal size plus
// log-scale factors.
struct BoxDelta {
  double dx = 0.0, dy = 0.0, dw = 0.0, dh = 0.0;

  bool operator==(const BoxDelta&) const = default;
};

// Clamp on |dw|, |dh| before exponentiation; log(1000/16).
inline constexpr double kDeltaClamp = 4.135166556742356;

double iou(const BBox& a, const BBox& b);

// Greedy non-maximum suppression. Boxes are visited in descending score
// order (ties broken by lower index); a box is suppressed iff its IoU with
// an already-kept box exceeds iou_thresh. Kept indices are returned in
// selection order. Throws std::invalid_argument on length mismatch.
std::vector<int> nms(const std::vector<BBox>& boxes,
                     const std::vector<double>& scores, double iou_thresh);

BoxDelta encode_delta(const BBox& proposal, const BBox& target);
BBox decode_delta(const BBox& proposal, const BoxDelta& delta,
                  double clamp = kDeltaClamp);

// Clamp the box into [0,width] x [0,height]. The result can be degenerate;
// callers discard those.
BBox clip_to_extent(const BBox& b, double width, double height);
bool is_degenerate(const BBox& b, double eps = 1e-6);

// Optional per-coordinate standardization of regression targets. Off by
// default everywhere; statistics come from the training set when enabled.
struct DeltaStats {
  double mean[4] = {0, 0, 0, 0};
  double stddev[4] = {1, 1, 1, 1};

  bool identity() const;
  BoxDelta apply(const BoxDelta& d) const;    // (d - mean) / stddev
  BoxDelta unapply(const BoxDelta& d) const;  // d * stddev + mean

  bool operator==(const DeltaStats&) const = default;
};

}  // namespace hardmine
