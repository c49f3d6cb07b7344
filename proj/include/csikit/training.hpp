#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "csikit/csi_data.hpp"
#include "csikit/masking.hpp"
#include "csikit/model.hpp"
#include "csikit/optim.hpp"
#include "csikit/ops.hpp"

// Loss functions and the three training procedures: GAN-coupled masked
// pretraining, masked-prediction fine-tuning, and classification
// fine-tuning with a frozen trunk.

namespace csikit::train {

using model::Discriminator;
using model::Recoverer;
using nn::Parameter;
using nn::Tensor;

// The four loss terms of the recoverer, each evaluated twice: over every
// non-placeholder position, and again restricted to masked non-placeholder
// positions. The total is the unweighted sum of all eight.
struct LossBreakdown {
  double l1 = 0, l2 = 0, l3 = 0, l4 = 0;
  double l1m = 0, l2m = 0, l3m = 0, l4m = 0;
  double total = 0;
};

struct RecovererLoss {
  Tensor total;
  LossBreakdown values;
  bool empty_masked_set = false;  // masked-pass terms were zero with warning
};

namespace detail {

struct PassTerms {
  Tensor l1, l2, l3;
};

// Loss terms over the rows selected by `weights` (0/1 per position).
inline PassTerms loss_pass(const Tensor& output, const Tensor& target,
                           const std::vector<double>& weights, double count,
                           std::size_t dim) {
  const double cells = count * static_cast<double>(dim);
  Tensor diff = nn::sub(output, target);
  Tensor l1 = nn::scale(nn::sum_all(nn::scale_rows(nn::mul(diff, diff), weights)),
                        1.0 / cells);

  auto col_mean = [&](const Tensor& t) {
    return nn::scale(nn::sum_axis0(nn::scale_rows(t, weights)), 1.0 / count);
  };
  auto col_std = [&](const Tensor& t, const Tensor& mean) {
    Tensor centered = nn::sub_rowvec(t, mean);
    Tensor m2 = nn::scale(nn::sum_axis0(nn::scale_rows(
                              nn::mul(centered, centered), weights)),
                          1.0 / count);
    return nn::sqrt_elem(m2);
  };

  Tensor mu_hat = col_mean(output);
  Tensor mu_ref = col_mean(target);
  Tensor sd_hat = col_std(output, mu_hat);
  Tensor sd_ref = col_std(target, mu_ref);
  Tensor dmu = nn::sub(mu_hat, mu_ref);
  Tensor dsd = nn::sub(sd_hat, sd_ref);
  Tensor l2 = nn::mean_all(nn::mul(dmu, dmu));
  Tensor l3 = nn::mean_all(nn::mul(dsd, dsd));
  return {l1, l2, l3};
}

inline Tensor neg_log_prob(const Tensor& prob) {
  return nn::neg(nn::log_elem(nn::clamp_min(prob, 1e-12)));
}

}  // namespace detail

// Reconstruction + distribution-shape + adversarial losses, in original
// coordinates. Placeholder positions carry no ground truth and are excluded
// from every term.
inline RecovererLoss recoverer_loss(const Tensor& output,
                                    const data::CsiSequence& target,
                                    const MaskPlan& plan,
                                    const Tensor& disc_prob) {
  require(output.rank() == 2 && output.rows() == target.length &&
              output.cols() == target.dim,
          "recoverer_loss: output shape mismatch");
  require(disc_prob.size() == 1, "recoverer_loss: disc_prob must be scalar");

  std::vector<double> w_full(target.length, 0.0), w_mask(target.length, 0.0);
  double c_full = 0, c_mask = 0;
  for (std::size_t i = 0; i < target.length; ++i) {
    if (target.flags[i] == data::TokenFlag::Pad) continue;
    w_full[i] = 1.0;
    c_full += 1.0;
    if (plan.covers(i)) {
      w_mask[i] = 1.0;
      c_mask += 1.0;
    }
  }
  require(c_full > 0, "recoverer_loss: no non-placeholder positions");

  Tensor target_t = Tensor::from(target.values, {target.length, target.dim});
  auto full = detail::loss_pass(output, target_t, w_full, c_full, target.dim);
  Tensor l4 = detail::neg_log_prob(disc_prob);

  RecovererLoss out;
  Tensor total = nn::add(nn::add(full.l1, full.l2), nn::add(full.l3, l4));
  out.values.l1 = full.l1.item();
  out.values.l2 = full.l2.item();
  out.values.l3 = full.l3.item();
  out.values.l4 = l4.item();

  if (c_mask > 0) {
    auto masked = detail::loss_pass(output, target_t, w_mask, c_mask, target.dim);
    // the adversarial term has no per-position restriction; it enters twice
    total = nn::add(total, nn::add(nn::add(masked.l1, masked.l2),
                                   nn::add(masked.l3, l4)));
    out.values.l1m = masked.l1.item();
    out.values.l2m = masked.l2.item();
    out.values.l3m = masked.l3.item();
    out.values.l4m = l4.item();
  } else {
    out.empty_masked_set = true;
  }
  out.total = total;
  out.values.total = total.item();
  return out;
}

// Binary adversary loss: push real toward 1 and recovered toward 0.
inline Tensor discriminator_loss(const Tensor& disc_real,
                                 const Tensor& disc_fake) {
  Tensor fake_term = detail::neg_log_prob(
      nn::add_scalar(nn::neg(disc_fake), 1.0));  // -log(1 - D(fake))
  Tensor real_term = detail::neg_log_prob(disc_real);
  return nn::add(fake_term, real_term);
}

// ---------------------------------------------------------------------------
// training loops
// ---------------------------------------------------------------------------

struct TrainConfig {
  std::size_t steps = 1000;
  std::size_t batch_size = 64;
  nn::AdamWConfig optim;  // AdamW, lr 5e-4
  std::uint64_t seed = 1;
  double diverge_factor = 10.0;   // abort when total exceeds this multiple of
  std::size_t diverge_span = 100;  // the initial loss for this many steps
  std::size_t checkpoint_every = 0;
  std::function<void(std::size_t step)> checkpoint_hook;
};

struct HistoryRow {
  std::size_t step = 0;
  LossBreakdown loss;
  double disc_loss = 0;
  double lr = 0;
  double mask_ratio = 0;
};

// Uniform sampling of window start offsets over all training streams.
class WindowSampler {
 public:
  WindowSampler(const std::vector<data::CsiStream>& streams, std::size_t length)
      : streams_(streams), length_(length) {
    for (std::size_t s = 0; s < streams.size(); ++s) {
      const std::size_t n = streams[s].frames.size();
      const std::size_t cap = n >= length ? n - length + 1 : 0;
      total_ += cap;
      cumulative_.push_back(total_);
    }
    require(total_ > 0, "sampler: no stream is long enough for one window");
  }

  data::CsiSequence draw(Rng& rng) const {
    for (int attempt = 0; attempt < 128; ++attempt) {
      std::uint64_t u = rng.below(total_);
      std::size_t s = 0;
      while (cumulative_[s] <= u) ++s;
      const std::uint64_t base = s == 0 ? 0 : cumulative_[s - 1];
      auto seq = data::slice_sequence(streams_[s], static_cast<std::size_t>(u - base),
                                      length_);
      if (seq.pad_count() < seq.length) return seq;  // needs one real token
    }
    fail("sampler: could not draw a window with any observed packet");
  }

 private:
  const std::vector<data::CsiStream>& streams_;
  std::size_t length_;
  std::uint64_t total_ = 0;
  std::vector<std::uint64_t> cumulative_;
};

namespace detail {

class DivergenceGuard {
 public:
  DivergenceGuard(double factor, std::size_t span) : factor_(factor), span_(span) {}
  void observe(double total, std::size_t step) {
    if (!std::isfinite(total))
      throw TrainingDiverged("training loss became non-finite at step " +
                             std::to_string(step));
    if (initial_ < 0) initial_ = total;
    if (total > factor_ * initial_)
      ++streak_;
    else
      streak_ = 0;
    if (streak_ >= span_)
      throw TrainingDiverged(
          "training diverged: loss exceeded " + std::to_string(factor_) +
          "x its initial value for " + std::to_string(span_) +
          " consecutive steps (step " + std::to_string(step) + ")");
  }

 private:
  double factor_;
  std::size_t span_;
  double initial_ = -1;
  std::size_t streak_ = 0;
};

}  // namespace detail

// One recoverer update then one discriminator update per batch, alternating
// single steps. Batches are drawn by random window offsets; the mask ratio is
// drawn once per batch.
inline std::vector<HistoryRow> pretrain(Recoverer& recoverer,
                                        Discriminator& disc,
                                        const std::vector<data::CsiStream>& streams,
                                        const TrainConfig& cfg,
                                        MaskMode mode = MaskMode::MLM) {
  std::vector<HistoryRow> history;
  if (cfg.steps == 0) return history;
  WindowSampler sampler(streams, recoverer.config().input_len);
  Rng root(cfg.seed);
  Rng rng_data = root.fork("data");
  Rng rng_mask = root.fork("mask");
  Rng rng_dropout = root.fork("dropout");
  Rng rng_disc = root.fork("disc-dropout");

  nn::AdamW opt_r(cfg.optim), opt_d(cfg.optim);
  detail::DivergenceGuard guard(cfg.diverge_factor, cfg.diverge_span);
  const std::size_t m = recoverer.config().input_dim;

  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    const double ratio = rng_mask.uniform(ratio_lo(mode), ratio_hi(mode));
    std::vector<data::CsiSequence> batch;
    std::vector<MaskPlan> plans;
    batch.reserve(cfg.batch_size);
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      batch.push_back(sampler.draw(rng_data));
      plans.push_back(
          sample_mask_plan(batch.back().flags, m, mode, rng_mask, ratio));
    }

    // recoverer step
    opt_r.zero_grads(recoverer.params());
    opt_d.zero_grads(disc.params());
    Tensor r_total;
    LossBreakdown mean_loss;
    std::vector<Tensor> fake_std;
    fake_std.reserve(cfg.batch_size);
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      auto fwd = recoverer.forward_recover(batch[b], plans[b], /*train=*/true,
                                           &rng_dropout);
      auto d_out = disc.discriminate(fwd.recovered_std, /*train=*/true, &rng_disc);
      auto loss = recoverer_loss(fwd.recovered, batch[b], plans[b], d_out.prob);
      fake_std.push_back(fwd.recovered_std.detach());
      r_total = b == 0 ? loss.total : nn::add(r_total, loss.total);
      mean_loss.l1 += loss.values.l1;
      mean_loss.l2 += loss.values.l2;
      mean_loss.l3 += loss.values.l3;
      mean_loss.l4 += loss.values.l4;
      mean_loss.l1m += loss.values.l1m;
      mean_loss.l2m += loss.values.l2m;
      mean_loss.l3m += loss.values.l3m;
      mean_loss.l4m += loss.values.l4m;
      mean_loss.total += loss.values.total;
    }
    const double inv_b = 1.0 / static_cast<double>(cfg.batch_size);
    r_total = nn::scale(r_total, inv_b);
    mean_loss.l1 *= inv_b;
    mean_loss.l2 *= inv_b;
    mean_loss.l3 *= inv_b;
    mean_loss.l4 *= inv_b;
    mean_loss.l1m *= inv_b;
    mean_loss.l2m *= inv_b;
    mean_loss.l3m *= inv_b;
    mean_loss.l4m *= inv_b;
    mean_loss.total *= inv_b;
    r_total.backward();
    opt_r.step(recoverer.params());

    // discriminator step on detached recoveries
    opt_r.zero_grads(recoverer.params());
    opt_d.zero_grads(disc.params());
    Tensor d_total;
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      auto [std_values, stats] = data::standardize(batch[b]);
      (void)stats;
      Tensor real = Tensor::from(std::move(std_values),
                                 {batch[b].length, batch[b].dim});
      auto d_real = disc.discriminate(real, /*train=*/true, &rng_disc);
      auto d_fake = disc.discriminate(fake_std[b], /*train=*/true, &rng_disc);
      Tensor l = discriminator_loss(d_real.prob, d_fake.prob);
      d_total = b == 0 ? l : nn::add(d_total, l);
    }
    d_total = nn::scale(d_total, inv_b);
    d_total.backward();
    opt_d.step(disc.params());

    HistoryRow row;
    row.step = step;
    row.loss = mean_loss;
    row.disc_loss = d_total.item();
    row.lr = cfg.optim.lr;
    row.mask_ratio = ratio;
    history.push_back(row);
    guard.observe(mean_loss.total, step);

    if (cfg.checkpoint_every > 0 && cfg.checkpoint_hook &&
        step % cfg.checkpoint_every == 0)
      cfg.checkpoint_hook(step);
  }
  return history;
}

// Masked prediction fine-tuning: identical to pretraining with suffix masks.
inline std::vector<HistoryRow> finetune_mpm(Recoverer& recoverer,
                                            Discriminator& disc,
                                            const std::vector<data::CsiStream>& streams,
                                            const TrainConfig& cfg) {
  return pretrain(recoverer, disc, streams, cfg, MaskMode::MPM);
}

struct ClassifyConfig : TrainConfig {
  bool from_scratch = false;  // unfrozen random-init ablation mode
};

// Classification fine-tuning. By default the trunk (ARL, embeddings,
// encoder) is frozen and only the sequence head trains; random masking is
// still applied to imitate varying packet loss.
inline std::vector<HistoryRow> finetune_classify(
    Recoverer& recoverer, const std::vector<data::CsiStream>& streams,
    const ClassifyConfig& cfg) {
  std::vector<HistoryRow> history;
  if (cfg.steps == 0) return history;
  const std::size_t classes = recoverer.config().num_classes;
  for (const auto& s : streams) {
    require(s.label.has_value(), "finetune_classify: stream without label");
    require(*s.label >= 0 && static_cast<std::size_t>(*s.label) < classes,
            "finetune_classify: label out of range");
  }
  WindowSampler sampler(streams, recoverer.config().input_len);
  Rng root(cfg.seed);
  Rng rng_data = root.fork("data");
  Rng rng_mask = root.fork("mask");
  Rng rng_dropout = root.fork("dropout");

  std::vector<Parameter> trainable;
  for (auto& p : recoverer.params()) {
    if (cfg.from_scratch || Recoverer::is_sequence_head_param(p.name))
      trainable.push_back(p);
  }
  nn::AdamW opt(cfg.optim);
  detail::DivergenceGuard guard(cfg.diverge_factor, cfg.diverge_span);
  const std::size_t m = recoverer.config().input_dim;

  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    const double ratio = rng_mask.uniform(ratio_lo(MaskMode::MLM),
                                          ratio_hi(MaskMode::MLM));
    opt.zero_grads(trainable);
    Tensor total;
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      auto seq = sampler.draw(rng_data);
      auto plan = sample_mask_plan(seq.flags, m, MaskMode::MLM, rng_mask, ratio);
      auto fwd = recoverer.forward_classify(
          seq, plan, /*train=*/cfg.from_scratch,
          cfg.from_scratch ? &rng_dropout : nullptr,
          /*detach_trunk=*/!cfg.from_scratch);
      Tensor l = nn::cross_entropy(fwd.logits,
                                   static_cast<std::size_t>(*seq.label));
      total = b == 0 ? l : nn::add(total, l);
    }
    total = nn::scale(total, 1.0 / static_cast<double>(cfg.batch_size));
    total.backward();
    opt.step(trainable);

    HistoryRow row;
    row.step = step;
    row.loss.total = total.item();
    row.disc_loss = 0;
    row.lr = cfg.optim.lr;
    row.mask_ratio = ratio;
    history.push_back(row);
    guard.observe(row.loss.total, step);

    if (cfg.checkpoint_every > 0 && cfg.checkpoint_hook &&
        step % cfg.checkpoint_every == 0)
      cfg.checkpoint_hook(step);
  }
  return history;
}

}  // namespace csikit::train
