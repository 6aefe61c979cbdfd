#include "hardmine/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace hardmine {

bool BBox::valid() const {
  return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) &&
         std::isfinite(y2) && x2 > x1 && y2 > y1;
}

double iou(const BBox& a, const BBox& b) {
  const double ix1 = std::max(a.x1, b.x1);
  const double iy1 = std::max(a.y1, b.y1);
  const double ix2 = std::min(a.x2, b.x2);
  const double iy2 = std::min(a.y2, b.y2);
  const double iw = std::max(0.0, ix2 - ix1);
  const double ih = std::max(0.0, iy2 - iy1);
  const double inter = iw * ih;
  if (inter <= 0.0) return 0.0;
  const double uni = a.area() + b.area() - inter;
  return inter / uni;
}

std::vector<int> nms(const std::vector<BBox>& boxes,
                     const std::vector<double>& scores, double iou_thresh) {
  if (boxes.size() != scores.size())
    throw std::invalid_argument("nms: boxes and scores length mismatch");

  const int n = static_cast<int>(boxes.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  // Descending score; equal scores fall back to lower original index.
  std::stable_sort(order.begin(), order.end(), [&scores](int a, int b) {
    return scores[a] > scores[b];
  });

  std::vector<int> kept;
  kept.reserve(boxes.size());
  for (int idx : order) {
    bool suppressed = false;
    for (int k : kept) {
      if (iou(boxes[idx], boxes[k]) > iou_thresh) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(idx);
  }
  return kept;
}

BoxDelta encode_delta(const BBox& proposal, const BBox& target) {
  const double pw = proposal.width(), ph = proposal.height();
  return BoxDelta{(target.cx() - proposal.cx()) / pw,
                  (target.cy() - proposal.cy()) / ph,
                  std::log(target.width() / pw),
                  std::log(target.height() / ph)};
}

BBox decode_delta(const BBox& proposal, const BoxDelta& delta, double clamp) {
  const double pw = proposal.width(), ph = proposal.height();
  const double dw = std::clamp(delta.dw, -clamp, clamp);
  const double dh = std::clamp(delta.dh, -clamp, clamp);
  const double cx = proposal.cx() + delta.dx * pw;
  const double cy = proposal.cy() + delta.dy * ph;
  const double w = pw * std::exp(dw);
  const double h = ph * std::exp(dh);
  return BBox{cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
}

BBox clip_to_extent(const BBox& b, double width, double height) {
  return BBox{std::clamp(b.x1, 0.0, width), std::clamp(b.y1, 0.0, height),
              std::clamp(b.x2, 0.0, width), std::clamp(b.y2, 0.0, height)};
}

bool is_degenerate(const BBox& b, double eps) {
  return !(b.x2 - b.x1 > eps) || !(b.y2 - b.y1 > eps) || !(b.area() > eps);
}

bool DeltaStats::identity() const {
  for (int i = 0; i < 4; ++i)
    if (mean[i] != 0.0 || stddev[i] != 1.0) return false;
  return true;
}

BoxDelta DeltaStats::apply(const BoxDelta& d) const {
  return BoxDelta{(d.dx - mean[0]) / stddev[0], (d.dy - mean[1]) / stddev[1],
                  (d.dw - mean[2]) / stddev[2], (d.dh - mean[3]) / stddev[3]};
}

BoxDelta DeltaStats::unapply(const BoxDelta& d) const {
  return BoxDelta{d.dx * stddev[0] + mean[0], d.dy * stddev[1] + mean[1],
                  d.dw * stddev[2] + mean[2], d.dh * stddev[3] + mean[3]};
}

}  // namespace hardmine
