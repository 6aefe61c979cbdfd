#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hardmine/geometry.hpp"

namespace hardmine {

struct HeadDims {
  uint32_t feature_dim = 32;  // D
  uint32_t hidden_dim = 64;   // H
  uint32_t num_classes = 5;   // K; classes are 1..K, 0 is background
  bool class_agnostic_loc = false;

  uint32_t cls_dim() const { return num_classes + 1; }
  uint32_t loc_dim() const { return class_agnostic_loc ? 4 : 4 * num_classes; }
  // Offset of the 4-component delta slot for a foreground label.
  uint32_t loc_slot(int label) const {
    return class_agnostic_loc ? 0 : 4 * (static_cast<uint32_t>(label) - 1);
  }

  bool operator==(const HeadDims&) const = default;
};

// One hidden ReLU layer feeding a (K+1)-way softmax classifier and a
// per-class box regressor.
struct HeadParams {
  HeadDims dims;
  double lambda = 1.0;  // loss balance between cls and loc terms
  DeltaStats delta_stats;
  std::vector<double> w1, b1;  // D x H, H
  std::vector<double> wc, bc;  // H x (K+1), K+1
  std::vector<double> wl, bl;  // H x loc_dim, loc_dim

  bool operator==(const HeadParams&) const = default;
};

// Hidden weights zero-mean with scale 1/sqrt(D); output layers zero so the
// initial class distribution is exactly uniform.
HeadParams init_params(const HeadDims& dims, double lambda, uint64_t seed);

struct HeadOutput {
  std::vector<double> pre;     // hidden pre-activation
  std::vector<double> hidden;  // relu(pre)
  std::vector<double> probs;   // softmax over K+1 classes
  std::vector<double> deltas;  // loc_dim regression outputs
};

void forward(const HeadParams& params, std::span<const float> feature,
             HeadOutput& out);
HeadOutput forward(const HeadParams& params, std::span<const float> feature);

struct RoILoss {
  double total = 0.0;
  double cls = 0.0;
  double loc = 0.0;
  int label = 0;
  bool prob_clamped = false;  // p_u hit the 1e-12 log clamp
};

inline constexpr double kProbClamp = 1e-12;

// cls = -log p_u; loc = smooth-L1 over the label's 4-delta slot
// (0.5 x^2 for |x|<1, |x|-0.5 otherwise); total = cls + lambda*[u>=1]*loc.
// target must be present iff label >= 1.
RoILoss roi_loss(const HeadOutput& out, const HeadDims& dims, int label,
                 const BoxDelta* target, double lambda);

struct HeadGradients {
  HeadDims dims;
  std::vector<double> w1, b1, wc, bc, wl, bl;

  void reset(const HeadDims& d);
  void add(const HeadGradients& other);
  void scale(double s);
  bool finite() const;
};

// Forward + analytic backprop for a single RoI; gradients are accumulated
// into acc. scratch avoids reallocation in the hot loop.
RoILoss backward(const HeadParams& params, std::span<const float> feature,
                 int label, const BoxDelta* target, HeadGradients& acc,
                 HeadOutput& scratch);

struct SgdState {
  std::vector<double> w1, b1, wc, bc, wl, bl;

  void reset(const HeadDims& d);
  bool operator==(const SgdState&) const = default;
};

// v := momentum * v + g;  p := p - lr * v. Throws TrainAbort on a
// non-finite gradient without touching the parameters.
void sgd_step(HeadParams& params, const HeadGradients& grads, double lr,
              double momentum, SgdState& state);

// Snapshot file: header (dims, lambda, iteration, delta stats) followed by
// a little-endian float32 parameter payload; an optional second section
// carries the SGD momentum so training can resume exactly.
struct Snapshot {
  HeadParams params;
  uint64_t iteration = 0;
  bool has_momentum = false;
  SgdState momentum;
};

void write_snapshot(const Snapshot& snap, const std::string& path);
Snapshot read_snapshot(const std::string& path);

// Round values through the float32 snapshot precision in place, keeping
// the live training state identical to what a resume would load.
void quantize_to_snapshot(HeadParams& params);
void quantize_to_snapshot(SgdState& state);

}  // namespace hardmine
