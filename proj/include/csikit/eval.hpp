#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "csikit/baselines.hpp"
#include "csikit/csi_data.hpp"
#include "csikit/masking.hpp"
#include "csikit/model.hpp"
#include "csikit/ops.hpp"

// Error metrics, recovery modes, the tail-prediction protocol, classification
// scoring, and the interpretability analyses (mean attention, input-gradient
// saliency, analytic FLOPs estimate).

namespace csikit::eval {

using model::Recoverer;
using nn::Tensor;

constexpr double kMetricEps = 1e-8;

struct Metrics {
  double mse = 0;
  double smape = 0;
  double mape = 0;
};

// MSE / SMAPE / MAPE restricted to the given positions (row indices),
// averaged over positions x subcarriers, with an epsilon guard on the
// percentage denominators.
inline Metrics masked_error(const std::vector<double>& truth,
                            const std::vector<double>& estimate,
                            std::size_t length, std::size_t dim,
                            const std::vector<std::size_t>& positions,
                            double eps = kMetricEps) {
  require(truth.size() == length * dim && estimate.size() == truth.size(),
          "masked_error: shape mismatch");
  require(!positions.empty(), "masked_error: empty position set");
  Metrics m;
  for (std::size_t p : positions) {
    require(p < length, "masked_error: position out of range");
    for (std::size_t j = 0; j < dim; ++j) {
      const double c = truth[p * dim + j];
      const double e = estimate[p * dim + j];
      const double d = c - e;
      m.mse += d * d;
      m.smape += std::abs(d) / ((std::abs(c) + std::abs(e)) / 2.0 + eps);
      m.mape += std::abs(d) / (c + eps);
    }
  }
  const double cells = static_cast<double>(positions.size() * dim);
  m.mse /= cells;
  m.smape /= cells;
  m.mape /= cells;
  return m;
}

struct RecoveredPair {
  std::vector<double> replace;  // model output everywhere
  std::vector<double> recover;  // original where observed, model at placeholders
};

// The two documented output modes: full replacement, and placeholder-only
// substitution keyed on the Pad indicator.
inline RecoveredPair recover_modes(const data::CsiSequence& original,
                                   const std::vector<double>& model_out) {
  require(model_out.size() == original.values.size(),
          "recover_modes: shape mismatch");
  RecoveredPair out;
  out.replace = model_out;
  out.recover = original.values;
  for (std::size_t i = 0; i < original.length; ++i) {
    if (original.flags[i] != data::TokenFlag::Pad) continue;
    for (std::size_t j = 0; j < original.dim; ++j)
      out.recover[i * original.dim + j] = model_out[i * original.dim + j];
  }
  return out;
}

struct TailPrediction {
  std::vector<std::size_t> tail_positions;
  std::vector<double> predicted;  // full L x M model output
  Metrics model;
  Metrics hold_last;  // last pre-tail observation carried forward
};

// One-shot forecast of the trailing fraction: placeholders and the tail are
// masked, a single forward pass fills them, and the tail rows are scored
// against the ground truth alongside a hold-last-value baseline.
inline TailPrediction predict_tail(const Recoverer& rec,
                                   const data::CsiSequence& seq,
                                   double fraction, Rng& rng) {
  require(fraction > 0.0 && fraction < 1.0, "predict_tail: bad fraction");
  const std::size_t L = seq.length, M = seq.dim;
  const auto tail = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(L) - 1e-12));
  TailPrediction out;
  for (std::size_t i = L - tail; i < L; ++i) out.tail_positions.push_back(i);
  for (std::size_t p : out.tail_positions)
    require(seq.flags[p] == data::TokenFlag::Observed,
            "predict_tail: tail ground truth unavailable");

  auto plan = train::explicit_plan(seq.flags, M, out.tail_positions, rng,
                                   train::MaskMode::MPM);
  nn::NoGradGuard guard;
  auto fwd = rec.forward_recover(seq, plan);
  out.predicted = fwd.recovered.value();
  out.model = masked_error(seq.values, out.predicted, L, M, out.tail_positions);

  // hold-last baseline: carry the last observed pre-tail row forward
  std::size_t last = L - tail;
  while (last > 0 && seq.flags[last - 1] != data::TokenFlag::Observed) --last;
  require(last > 0, "predict_tail: no observed packet before the tail");
  std::vector<double> held = seq.values;
  for (std::size_t p : out.tail_positions)
    for (std::size_t j = 0; j < M; ++j)
      held[p * M + j] = seq.values[(last - 1) * M + j];
  out.hold_last = masked_error(seq.values, held, L, M, out.tail_positions);
  return out;
}

// Top-1 accuracy; placeholders are converted to mask tokens before the
// forward pass. Mixed sampling rates need no special handling because the
// true timestamps feed the time embedding.
inline double classify_accuracy(const Recoverer& rec,
                                const std::vector<data::CsiSequence>& sequences,
                                Rng& rng) {
  require(!sequences.empty(), "classify_accuracy: no sequences");
  nn::NoGradGuard guard;
  std::size_t correct = 0;
  for (const auto& seq : sequences) {
    require(seq.label.has_value(), "classify_accuracy: unlabeled sequence");
    auto plan = train::pads_only_plan(seq.flags, seq.dim, rng);
    auto fwd = rec.forward_classify(seq, plan);
    const auto& logits = fwd.logits.value();
    std::size_t arg = 0;
    for (std::size_t k = 1; k < logits.size(); ++k)
      if (logits[k] > logits[arg]) arg = k;
    if (static_cast<int>(arg) == *seq.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(sequences.size());
}

// Mean over layers and heads of the (row-stochastic) attention maps.
inline std::vector<double> mean_attention(const std::vector<Tensor>& attentions) {
  require(!attentions.empty(), "mean_attention: no maps");
  const std::size_t L = attentions[0].rows();
  std::vector<double> mean(L * L, 0.0);
  for (const auto& a : attentions) {
    require(a.rows() == L && a.cols() == L, "mean_attention: shape mismatch");
    const auto& v = a.value();
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += v[i];
  }
  const double inv = 1.0 / static_cast<double>(attentions.size());
  for (auto& x : mean) x *= inv;
  return mean;
}

// |d/dx of the squared recovery error at the target positions|, computed by
// reverse mode through the whole pipeline (standardization included). The
// targets are masked for the forward pass, mimicking deleted packets.
inline std::vector<double> saliency(const Recoverer& rec,
                                    const data::CsiSequence& seq,
                                    const std::vector<std::size_t>& targets,
                                    Rng& rng) {
  require(!targets.empty(), "saliency: no target positions");
  for (std::size_t p : targets)
    require(p < seq.length && seq.flags[p] == data::TokenFlag::Observed,
            "saliency: targets must carry ground truth");
  auto plan = train::explicit_plan(seq.flags, seq.dim, targets, rng);

  Recoverer::ForwardOptions opt;
  opt.input_requires_grad = true;
  auto fwd = rec.forward(seq, plan, opt);

  std::vector<double> w(seq.length, 0.0);
  for (std::size_t p : targets) w[p] = 1.0;
  Tensor truth = Tensor::from(seq.values, {seq.length, seq.dim});
  Tensor diff = nn::sub(fwd.recovered, truth);
  Tensor loss = nn::sum_all(nn::scale_rows(nn::mul(diff, diff), std::move(w)));
  loss.backward();

  std::vector<double> out = fwd.input.grad();
  for (auto& g : out) g = std::abs(g);
  return out;
}

struct FlopsBreakdown {
  double attention = 0;
  double linear = 0;
  double total = 0;
};

// Analytic forward-pass cost at one sequence: the alpha*L^2*d attention term
// plus every linear layer at its true dimensions, two FLOPs per
// multiply-add. Order-of-magnitude by construction.
inline FlopsBreakdown flops_estimate(const model::ModelConfig& cfg) {
  const double L = static_cast<double>(cfg.input_len);
  const double M = static_cast<double>(cfg.input_dim);
  const double d = static_cast<double>(cfg.hidden);
  const double inner = static_cast<double>(cfg.inner);
  const double layers = static_cast<double>(cfg.layers);
  const double d2 = static_cast<double>(cfg.pooling_dim);

  FlopsBreakdown fb;
  // QK^T and attention-times-V, per layer
  fb.attention = 2.0 * (layers * 2.0 * L * L * d);
  double macs = 0.0;
  macs += layers * 4.0 * L * d * d;        // q/k/v/o projections
  macs += layers * 2.0 * L * d * inner;    // feed-forward pair
  macs += L * M * M;                       // re-weighting gate
  macs += L * M * d;                       // spatial embedding
  macs += L * d * d;                       // time embedding
  macs += L * d * M;                       // token head
  macs += L * d * d2;                      // sequence-head pooling
  macs += d * d2 * static_cast<double>(cfg.cls_hidden);  // output MLP hidden
  macs += static_cast<double>(cfg.cls_hidden) *
          static_cast<double>(cfg.num_classes);
  fb.linear = 2.0 * macs;
  fb.total = fb.attention + fb.linear;
  return fb;
}

// ---------------------------------------------------------------------------
// report plumbing
// ---------------------------------------------------------------------------

struct EvalReport {
  std::string task;
  Metrics metrics;
  std::optional<double> accuracy;
  std::size_t n_samples = 0;
  double wall_time_s = 0;  // reported on the console, not serialized
  std::string config_digest;
};

inline void write_csv_grid(const std::string& path,
                           const std::vector<double>& grid, std::size_t rows,
                           std::size_t cols) {
  require(grid.size() == rows * cols, "write_csv_grid: shape mismatch");
  std::ofstream os(path);
  require(os.good(), "cannot write " + path);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      if (j) os << ",";
      os << data::format_double(grid[i * cols + j]);
    }
    os << "\n";
  }
  require(os.good(), "write failed for " + path);
}

}  // namespace csikit::eval
