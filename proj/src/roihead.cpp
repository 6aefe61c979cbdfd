#include "hardmine/roihead.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "hardmine/binio.hpp"
#include "hardmine/errors.hpp"
#include "hardmine/rng.hpp"

namespace hardmine {

namespace {

double smooth_l1(double x) {
  const double a = std::fabs(x);
  return a < 1.0 ? 0.5 * x * x : a - 0.5;
}

double smooth_l1_grad(double x) {
  if (x > 1.0) return 1.0;
  if (x < -1.0) return -1.0;
  return x;
}

void check_dims(const HeadParams& p, size_t feature_size) {
  if (feature_size != p.dims.feature_dim)
    throw std::invalid_argument("forward: feature dimension mismatch");
}

}  // namespace

constexpr double kHiddenBiasInit = 0.5;

HeadParams init_params(const HeadDims& dims, double lambda, uint64_t seed) {
  HeadParams p;
  p.dims = dims;
  p.lambda = lambda;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dims.feature_dim));
  SplitMix64 rng(seed);
  p.w1.resize(static_cast<size_t>(dims.feature_dim) * dims.hidden_dim);
  for (auto& w : p.w1) w = scale * rng.normal();
  p.b1.assign(dims.hidden_dim, kHiddenBiasInit);
  p.wc.assign(static_cast<size_t>(dims.hidden_dim) * dims.cls_dim(), 0.0);
  p.bc.assign(dims.cls_dim(), 0.0);
  p.wl.assign(static_cast<size_t>(dims.hidden_dim) * dims.loc_dim(), 0.0);
  p.bl.assign(dims.loc_dim(), 0.0);
  return p;
}

void forward(const HeadParams& p, std::span<const float> feature,
             HeadOutput& out) {
  check_dims(p, feature.size());
  const uint32_t D = p.dims.feature_dim;
  const uint32_t H = p.dims.hidden_dim;
  const uint32_t C = p.dims.cls_dim();
  const uint32_t L = p.dims.loc_dim();

  out.pre.assign(p.b1.begin(), p.b1.end());
  for (uint32_t d = 0; d < D; ++d) {
    const double x = feature[d];
    if (x == 0.0) continue;
    const double* w = &p.w1[static_cast<size_t>(d) * H];
    for (uint32_t h = 0; h < H; ++h) out.pre[h] += x * w[h];
  }

  out.hidden.resize(H);
  for (uint32_t h = 0; h < H; ++h) out.hidden[h] = std::max(0.0, out.pre[h]);

  std::vector<double>& logits = out.probs;  // reuse, softmax in place
  logits.assign(p.bc.begin(), p.bc.end());
  out.deltas.assign(p.bl.begin(), p.bl.end());
  for (uint32_t h = 0; h < H; ++h) {
    const double a = out.hidden[h];
    if (a == 0.0) continue;
    const double* wc = &p.wc[static_cast<size_t>(h) * C];
    for (uint32_t c = 0; c < C; ++c) logits[c] += a * wc[c];
    const double* wl = &p.wl[static_cast<size_t>(h) * L];
    for (uint32_t l = 0; l < L; ++l) out.deltas[l] += a * wl[l];
  }

  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (uint32_t c = 0; c < C; ++c) {
    logits[c] = std::exp(logits[c] - m);
    sum += logits[c];
  }
  for (uint32_t c = 0; c < C; ++c) logits[c] /= sum;
}

HeadOutput forward(const HeadParams& p, std::span<const float> feature) {
  HeadOutput out;
  forward(p, feature, out);
  return out;
}

RoILoss roi_loss(const HeadOutput& out, const HeadDims& dims, int label,
                 const BoxDelta* target, double lambda) {
  if (label < 0 || label > static_cast<int>(dims.num_classes))
    throw std::invalid_argument("roi_loss: label out of range");
  if ((label >= 1) != (target != nullptr))
    throw std::invalid_argument("roi_loss: target must be present iff fg");

  RoILoss l;
  l.label = label;
  const double p_u = out.probs[static_cast<size_t>(label)];
  l.prob_clamped = p_u < kProbClamp;
  l.cls = -std::log(std::max(p_u, kProbClamp));
  if (label >= 1) {
    const uint32_t slot = dims.loc_slot(label);
    const double t[4] = {target->dx, target->dy, target->dw, target->dh};
    for (int j = 0; j < 4; ++j) l.loc += smooth_l1(out.deltas[slot + j] - t[j]);
    l.total = l.cls + lambda * l.loc;
  } else {
    l.total = l.cls;
  }
  return l;
}

void HeadGradients::reset(const HeadDims& d) {
  dims = d;
  w1.assign(static_cast<size_t>(d.feature_dim) * d.hidden_dim, 0.0);
  b1.assign(d.hidden_dim, 0.0);
  wc.assign(static_cast<size_t>(d.hidden_dim) * d.cls_dim(), 0.0);
  bc.assign(d.cls_dim(), 0.0);
  wl.assign(static_cast<size_t>(d.hidden_dim) * d.loc_dim(), 0.0);
  bl.assign(d.loc_dim(), 0.0);
}

void HeadGradients::add(const HeadGradients& other) {
  if (!(dims == other.dims))
    throw std::invalid_argument("HeadGradients::add: shape mismatch");
  auto axpy = [](std::vector<double>& a, const std::vector<double>& b) {
    for (size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  };
  axpy(w1, other.w1);
  axpy(b1, other.b1);
  axpy(wc, other.wc);
  axpy(bc, other.bc);
  axpy(wl, other.wl);
  axpy(bl, other.bl);
}

void HeadGradients::scale(double s) {
  for (auto* v : {&w1, &b1, &wc, &bc, &wl, &bl})
    for (double& x : *v) x *= s;
}

bool HeadGradients::finite() const {
  for (const auto* v : {&w1, &b1, &wc, &bc, &wl, &bl})
    for (double x : *v)
      if (!std::isfinite(x)) return false;
  return true;
}

RoILoss backward(const HeadParams& p, std::span<const float> feature,
                 int label, const BoxDelta* target, HeadGradients& acc,
                 HeadOutput& scratch) {
  if (!(acc.dims == p.dims))
    throw std::invalid_argument("backward: gradient accumulator shape mismatch");
  forward(p, feature, scratch);
  const RoILoss l = roi_loss(scratch, p.dims, label, target, p.lambda);

  const uint32_t D = p.dims.feature_dim;
  const uint32_t H = p.dims.hidden_dim;
  const uint32_t C = p.dims.cls_dim();
  const uint32_t L = p.dims.loc_dim();

  // d total / d logits; zero when the log clamp is active (the clamped
  // loss is locally flat in the logits).
  thread_local std::vector<double> dlogits, ddeltas, dhidden;
  dlogits.assign(C, 0.0);
  if (!l.prob_clamped) {
    for (uint32_t c = 0; c < C; ++c) dlogits[c] = scratch.probs[c];
    dlogits[static_cast<size_t>(label)] -= 1.0;
  }

  ddeltas.assign(L, 0.0);
  if (label >= 1) {
    const uint32_t slot = p.dims.loc_slot(label);
    const double t[4] = {target->dx, target->dy, target->dw, target->dh};
    for (int j = 0; j < 4; ++j)
      ddeltas[slot + j] = p.lambda * smooth_l1_grad(scratch.deltas[slot + j] - t[j]);
  }

  dhidden.assign(H, 0.0);
  for (uint32_t h = 0; h < H; ++h) {
    const double a = scratch.hidden[h];
    double* gwc = &acc.wc[static_cast<size_t>(h) * C];
    const double* pwc = &p.wc[static_cast<size_t>(h) * C];
    double dh = 0.0;
    for (uint32_t c = 0; c < C; ++c) {
      gwc[c] += a * dlogits[c];
      dh += pwc[c] * dlogits[c];
    }
    double* gwl = &acc.wl[static_cast<size_t>(h) * L];
    const double* pwl = &p.wl[static_cast<size_t>(h) * L];
    for (uint32_t l2 = 0; l2 < L; ++l2) {
      gwl[l2] += a * ddeltas[l2];
      dh += pwl[l2] * ddeltas[l2];
    }
    dhidden[h] = scratch.pre[h] > 0.0 ? dh : 0.0;
  }
  for (uint32_t c = 0; c < C; ++c) acc.bc[c] += dlogits[c];
  for (uint32_t l2 = 0; l2 < L; ++l2) acc.bl[l2] += ddeltas[l2];

  for (uint32_t d = 0; d < D; ++d) {
    const double x = feature[d];
    if (x == 0.0) continue;
    double* gw1 = &acc.w1[static_cast<size_t>(d) * H];
    for (uint32_t h = 0; h < H; ++h) gw1[h] += x * dhidden[h];
  }
  for (uint32_t h = 0; h < H; ++h) acc.b1[h] += dhidden[h];

  return l;
}

void SgdState::reset(const HeadDims& d) {
  w1.assign(static_cast<size_t>(d.feature_dim) * d.hidden_dim, 0.0);
  b1.assign(d.hidden_dim, 0.0);
  wc.assign(static_cast<size_t>(d.hidden_dim) * d.cls_dim(), 0.0);
  bc.assign(d.cls_dim(), 0.0);
  wl.assign(static_cast<size_t>(d.hidden_dim) * d.loc_dim(), 0.0);
  bl.assign(d.loc_dim(), 0.0);
}

void sgd_step(HeadParams& params, const HeadGradients& grads, double lr,
              double momentum, SgdState& state) {
  if (!(grads.dims == params.dims))
    throw std::invalid_argument("sgd_step: gradient shape mismatch");
  if (!(lr > 0.0)) throw std::invalid_argument("sgd_step: lr must be positive");
  if (!grads.finite())
    throw TrainAbort("sgd_step: non-finite gradient, update aborted");

  auto step = [lr, momentum](std::vector<double>& p, const std::vector<double>& g,
                             std::vector<double>& v) {
    for (size_t i = 0; i < p.size(); ++i) {
      v[i] = momentum * v[i] + g[i];
      p[i] -= lr * v[i];
    }
  };
  step(params.w1, grads.w1, state.w1);
  step(params.b1, grads.b1, state.b1);
  step(params.wc, grads.wc, state.wc);
  step(params.bc, grads.bc, state.bc);
  step(params.wl, grads.wl, state.wl);
  step(params.bl, grads.bl, state.bl);
}

namespace {

constexpr char kSnapMagic[4] = {'H', 'S', 'N', '1'};
constexpr uint32_t kSnapVersion = 1;

void put_block_f32(std::string& out, const std::vector<double>& v) {
  for (double x : v) binio::put_f32(out, static_cast<float>(x));
}

void read_block_f32(binio::Reader& r, std::vector<double>& v, size_t n) {
  v.resize(n);
  for (size_t i = 0; i < n; ++i) v[i] = r.f32();
}

void quantize_block(std::vector<double>& v) {
  for (double& x : v) x = static_cast<double>(static_cast<float>(x));
}

}  // namespace

void write_snapshot(const Snapshot& snap, const std::string& path) {
  const HeadDims& d = snap.params.dims;
  std::string out;
  out.append(kSnapMagic, 4);
  binio::put_u32(out, kSnapVersion);
  binio::put_u32(out, d.feature_dim);
  binio::put_u32(out, d.hidden_dim);
  binio::put_u32(out, d.num_classes);
  binio::put_u8(out, d.class_agnostic_loc ? 1 : 0);
  binio::put_u8(out, snap.has_momentum ? 2 : 1);  // section count
  binio::put_u16(out, 0);                         // reserved
  binio::put_f64(out, snap.params.lambda);
  binio::put_u64(out, snap.iteration);
  for (int i = 0; i < 4; ++i) binio::put_f64(out, snap.params.delta_stats.mean[i]);
  for (int i = 0; i < 4; ++i)
    binio::put_f64(out, snap.params.delta_stats.stddev[i]);

  put_block_f32(out, snap.params.w1);
  put_block_f32(out, snap.params.b1);
  put_block_f32(out, snap.params.wc);
  put_block_f32(out, snap.params.bc);
  put_block_f32(out, snap.params.wl);
  put_block_f32(out, snap.params.bl);
  if (snap.has_momentum) {
    put_block_f32(out, snap.momentum.w1);
    put_block_f32(out, snap.momentum.b1);
    put_block_f32(out, snap.momentum.wc);
    put_block_f32(out, snap.momentum.bc);
    put_block_f32(out, snap.momentum.wl);
    put_block_f32(out, snap.momentum.bl);
  }
  binio::write_file(path, out);
}

Snapshot read_snapshot(const std::string& path) {
  binio::Reader r(binio::read_file(path), path);
  if (r.bytes(4) != std::string(kSnapMagic, 4))
    r.fail("bad magic, not a snapshot file");
  const uint32_t version = r.u32();
  if (version != kSnapVersion)
    throw VersionError(path + ": unsupported snapshot version " +
                       std::to_string(version));

  Snapshot snap;
  HeadDims d;
  d.feature_dim = r.u32();
  d.hidden_dim = r.u32();
  d.num_classes = r.u32();
  d.class_agnostic_loc = r.u8() != 0;
  const uint8_t sections = r.u8();
  if (sections != 1 && sections != 2) r.fail("bad section count");
  r.u16();  // reserved
  snap.params.dims = d;
  snap.params.lambda = r.f64();
  snap.iteration = r.u64();
  for (int i = 0; i < 4; ++i) snap.params.delta_stats.mean[i] = r.f64();
  for (int i = 0; i < 4; ++i) snap.params.delta_stats.stddev[i] = r.f64();

  r.set_context("parameter payload");
  const size_t n_w1 = static_cast<size_t>(d.feature_dim) * d.hidden_dim;
  const size_t n_wc = static_cast<size_t>(d.hidden_dim) * d.cls_dim();
  const size_t n_wl = static_cast<size_t>(d.hidden_dim) * d.loc_dim();
  read_block_f32(r, snap.params.w1, n_w1);
  read_block_f32(r, snap.params.b1, d.hidden_dim);
  read_block_f32(r, snap.params.wc, n_wc);
  read_block_f32(r, snap.params.bc, d.cls_dim());
  read_block_f32(r, snap.params.wl, n_wl);
  read_block_f32(r, snap.params.bl, d.loc_dim());
  if (sections == 2) {
    r.set_context("momentum payload");
    snap.has_momentum = true;
    read_block_f32(r, snap.momentum.w1, n_w1);
    read_block_f32(r, snap.momentum.b1, d.hidden_dim);
    read_block_f32(r, snap.momentum.wc, n_wc);
    read_block_f32(r, snap.momentum.bc, d.cls_dim());
    read_block_f32(r, snap.momentum.wl, n_wl);
    read_block_f32(r, snap.momentum.bl, d.loc_dim());
  }
  r.expect_done();
  return snap;
}

void quantize_to_snapshot(HeadParams& params) {
  quantize_block(params.w1);
  quantize_block(params.b1);
  quantize_block(params.wc);
  quantize_block(params.bc);
  quantize_block(params.wl);
  quantize_block(params.bl);
}

void quantize_to_snapshot(SgdState& state) {
  quantize_block(state.w1);
  quantize_block(state.b1);
  quantize_block(state.wc);
  quantize_block(state.bc);
  quantize_block(state.wl);
  quantize_block(state.bl);
}

}  // namespace hardmine
