#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "csikit/csi_data.hpp"
#include "csikit/masking.hpp"
#include "csikit/ops.hpp"
#include "csikit/tensor.hpp"

// The recovery/prediction/classification model: an adaptive subcarrier
// re-weighting gate, MLP spatial embedding, MLP time embedding over
// sinusoidally encoded normalized timestamps, a learned positional table, a
// bidirectional pre-norm encoder stack, and dual heads (token-level
// reconstruction, sequence-level classification). The GAN discriminator
// shares the encoder building blocks.

namespace csikit::model {

using nn::Act;
using nn::AttentionParams;
using nn::DenseLayer;
using nn::Parameter;
using nn::Tensor;

struct ModelConfig {
  std::size_t input_len = 100;  // positions per sequence
  std::size_t input_dim = 52;   // subcarriers
  std::size_t layers = 6;
  std::size_t hidden = 128;
  std::size_t inner = 512;  // feed-forward width
  std::size_t heads = 8;
  double dropout = 0.1;
  std::size_t pooling_dim = 128;  // columns of the sequence-head attention
  std::size_t cls_hidden = 256;   // hidden width of the sequence-head output MLP
  std::size_t num_classes = 3;
  std::size_t disc_layers = 2;

  void validate() const {
    require(input_len >= 2 && input_dim > 0 && layers > 0 && hidden > 0 &&
                inner > 0 && heads > 0 && pooling_dim > 0 && cls_hidden > 0 &&
                num_classes > 0,
            "model config: all sizes must be positive");
    require(hidden % heads == 0,
            "model config: hidden size must be divisible by head count");
    require(dropout >= 0.0 && dropout < 1.0, "model config: bad dropout rate");
  }
};

// Sinusoidal encoding of min-max normalized timestamps. The normalization
// cancels any affine re-mapping of the stamps, so outputs are invariant to
// t -> a*t + b with a > 0.
inline std::vector<double> positional_encoding(
    const std::vector<double>& timestamps, double max_len, std::size_t d) {
  const std::size_t n = timestamps.size();
  require(n >= 2, "positional_encoding: need at least two timestamps");
  double tmin = timestamps[0], tmax = timestamps[0];
  for (double t : timestamps) {
    tmin = std::min(tmin, t);
    tmax = std::max(tmax, t);
  }
  require(tmax > tmin, "positional_encoding: degenerate window (all timestamps equal)");
  std::vector<double> divisor(d);
  for (std::size_t j = 0; j < d; ++j) {
    const double e = (j % 2 == 0) ? static_cast<double>(j)
                                  : static_cast<double>(j - 1);
    divisor[j] = std::pow(10.0, 4.0 * e / static_cast<double>(d));
  }
  std::vector<double> pe(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    const double norm = (timestamps[i] - tmin) / (tmax - tmin) * max_len;
    for (std::size_t j = 0; j < d; ++j) {
      const double arg = norm / divisor[j];
      pe[i * d + j] = (j % 2 == 0) ? std::sin(arg) : std::cos(arg);
    }
  }
  return pe;
}

namespace detail {

struct EncoderLayer {
  Tensor ln1_g, ln1_b, ln2_g, ln2_b;
  AttentionParams attn;
  DenseLayer ff1, ff2;
};

struct EncoderOut {
  Tensor hidden;
  std::vector<Tensor> attentions;  // layers * heads maps
};

// Pre-norm transformer block stack with a closing layer norm. No attention
// mask is applied anywhere.
inline EncoderOut run_encoder(Tensor x, const std::vector<EncoderLayer>& layers,
                              std::size_t heads, const Tensor& final_g,
                              const Tensor& final_b, double dropout_rate,
                              bool train, Rng* dropout_rng) {
  EncoderOut out;
  for (const auto& layer : layers) {
    Tensor normed = nn::layer_norm(x, layer.ln1_g, layer.ln1_b);
    auto attn = nn::multi_head_attention(normed, heads, layer.attn);
    for (auto& a : attn.attention) out.attentions.push_back(a);
    Tensor a = attn.out;
    if (train && dropout_rng) a = nn::dropout(a, dropout_rate, train, *dropout_rng);
    x = nn::add(x, a);
    Tensor normed2 = nn::layer_norm(x, layer.ln2_g, layer.ln2_b);
    Tensor f = nn::mlp(normed2, {layer.ff1, layer.ff2});
    if (train && dropout_rng) f = nn::dropout(f, dropout_rate, train, *dropout_rng);
    x = nn::add(x, f);
  }
  out.hidden = nn::layer_norm(x, final_g, final_b);
  return out;
}

}  // namespace detail

struct ForwardResult {
  Tensor input;          // L x M raw-amplitude leaf
  Tensor mu, sigma;      // per-subcarrier stats (sigma clamped for division)
  Tensor model_input;    // standardized values with mask rows overwritten
  Tensor hidden;         // L x d encoder output
  std::vector<Tensor> attentions;
  Tensor recovered_std;  // token head output, standardized coordinates
  Tensor recovered;      // token head output, original coordinates
  Tensor logits;         // num_classes, classification forward only
};

// The recoverer: embeddings + encoder + dual heads.
class Recoverer {
 public:
  Recoverer(const ModelConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng = Rng(init_seed).fork("recoverer-init");
    auto winit = [&rng](double fan_scale = 1.0) {
      (void)fan_scale;
      return [&rng]() { return rng.truncated_normal(0.0, 0.02); };
    };
    auto zeros = []() { return []() { return 0.0; }; };
    auto ones = []() { return []() { return 1.0; }; };

    const std::size_t m = cfg_.input_dim, d = cfg_.hidden;
    arl_gate_ = {reg_.add("arl.gate.w", {m, m}, winit()),
                 reg_.add("arl.gate.b", {m}, zeros()), Act::Sigmoid};
    spatial_ = {reg_.add("embed.spatial.w", {m, d}, winit()),
                reg_.add("embed.spatial.b", {d}, zeros()), Act::Identity};
    time_mlp_ = {reg_.add("embed.time.w", {d, d}, winit()),
                 reg_.add("embed.time.b", {d}, zeros()), Act::Identity};
    pos_table_ = reg_.add("embed.pos.table", {cfg_.input_len, d}, winit());

    layers_.resize(cfg_.layers);
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
      const std::string p = "encoder.layer" + std::to_string(l) + ".";
      auto& lay = layers_[l];
      lay.ln1_g = reg_.add(p + "ln1.g", {d}, ones());
      lay.ln1_b = reg_.add(p + "ln1.b", {d}, zeros());
      lay.ln2_g = reg_.add(p + "ln2.g", {d}, ones());
      lay.ln2_b = reg_.add(p + "ln2.b", {d}, zeros());
      lay.attn.wq = reg_.add(p + "attn.wq", {d, d}, winit());
      lay.attn.bq = reg_.add(p + "attn.bq", {d}, zeros());
      lay.attn.wk = reg_.add(p + "attn.wk", {d, d}, winit());
      lay.attn.bk = reg_.add(p + "attn.bk", {d}, zeros());
      lay.attn.wv = reg_.add(p + "attn.wv", {d, d}, winit());
      lay.attn.bv = reg_.add(p + "attn.bv", {d}, zeros());
      lay.attn.wo = reg_.add(p + "attn.wo", {d, d}, winit());
      lay.attn.bo = reg_.add(p + "attn.bo", {d}, zeros());
      lay.ff1 = {reg_.add(p + "ff.w1", {d, cfg_.inner}, winit()),
                 reg_.add(p + "ff.b1", {cfg_.inner}, zeros()), Act::Gelu};
      lay.ff2 = {reg_.add(p + "ff.w2", {cfg_.inner, d}, winit()),
                 reg_.add(p + "ff.b2", {d}, zeros()), Act::Identity};
    }
    final_g_ = reg_.add("encoder.final.g", {d}, ones());
    final_b_ = reg_.add("encoder.final.b", {d}, zeros());

    token_head_ = {reg_.add("head.token.w", {d, m}, winit()),
                   reg_.add("head.token.b", {m}, zeros()), Act::Identity};
    seq_pool_ = {reg_.add("head.seq.pool.w", {d, cfg_.pooling_dim}, winit()),
                 reg_.add("head.seq.pool.b", {cfg_.pooling_dim}, zeros()),
                 Act::Identity};
    seq_out1_ = {reg_.add("head.seq.out1.w",
                          {d * cfg_.pooling_dim, cfg_.cls_hidden}, winit()),
                 reg_.add("head.seq.out1.b", {cfg_.cls_hidden}, zeros()),
                 Act::Gelu};
    seq_out2_ = {reg_.add("head.seq.out2.w", {cfg_.cls_hidden, cfg_.num_classes},
                          winit()),
                 reg_.add("head.seq.out2.b", {cfg_.num_classes}, zeros()),
                 Act::Identity};
  }

  const ModelConfig& config() const { return cfg_; }
  std::vector<Parameter>& params() { return reg_.all(); }
  const std::vector<Parameter>& params() const { return reg_.all(); }
  std::size_t param_count() const { return reg_.count_values(); }

  // Names of the parameters trained during frozen classification fine-tuning.
  static bool is_sequence_head_param(const std::string& name) {
    return name.rfind("head.seq.", 0) == 0;
  }

  // Adaptive re-weighting: elementwise gate over the subcarrier dimension.
  Tensor arl(const Tensor& x) const {
    return nn::mul(nn::mlp(x, {arl_gate_}), x);
  }

  Tensor spatial_embed(const Tensor& x) const { return nn::mlp(x, {spatial_}); }

  Tensor time_embed(const Tensor& pe) const { return nn::mlp(pe, {time_mlp_}); }

  detail::EncoderOut encode(const Tensor& tokens, bool train, Rng* rng) const {
    return detail::run_encoder(tokens, layers_, cfg_.heads, final_g_, final_b_,
                               cfg_.dropout, train, rng);
  }

  Tensor token_head_std(const Tensor& hidden) const {
    return nn::mlp(hidden, {token_head_});
  }

  // Pooling attention over the time axis, flattened weighted features, then
  // the output MLP.
  Tensor sequence_head(const Tensor& hidden) const {
    Tensor pooled = nn::mlp(hidden, {seq_pool_});
    Tensor attn_time = nn::softmax(pooled, /*axis=*/0);
    Tensor z = nn::matmul(nn::transpose(attn_time), hidden);
    Tensor flat = nn::reshape(z, {std::size_t(1), z.size()});
    Tensor logits = nn::mlp(flat, {seq_out1_, seq_out2_});
    return nn::reshape(logits, {cfg_.num_classes});
  }

  struct ForwardOptions {
    bool train = false;
    Rng* dropout_rng = nullptr;
    bool input_requires_grad = false;  // saliency
    bool classify = false;
    bool detach_trunk = false;  // frozen fine-tuning: cut gradients below the head
  };

  // Full pipeline: standardize (in graph) -> overwrite masked rows with the
  // plan's Gaussian values -> ARL -> spatial embedding -> + time embedding
  // + positional embedding -> encoder -> head. The plan must cover every Pad
  // position; the encoder never sees a placeholder.
  ForwardResult forward(const data::CsiSequence& seq,
                        const train::MaskPlan& plan,
                        const ForwardOptions& opt = {}) const {
    require(seq.length == cfg_.input_len && seq.dim == cfg_.input_dim,
            "forward: sequence shape does not match the model configuration");
    require(plan.length == seq.length && plan.dim == seq.dim,
            "forward: mask plan shape mismatch");
    for (std::size_t i = 0; i < seq.length; ++i) {
      if (seq.flags[i] == data::TokenFlag::Pad)
        require(plan.covers(i),
                "forward: placeholder position " + std::to_string(i) +
                    " not converted to a mask token");
    }

    ForwardResult r;
    r.input = Tensor::from(seq.values, {seq.length, seq.dim});
    if (opt.input_requires_grad) r.input.set_requires_grad(true);

    // standardization over the time dimension, inside the graph
    r.mu = nn::mean_axis0(r.input);
    Tensor centered = nn::sub_rowvec(r.input, r.mu);
    Tensor var = nn::mean_axis0(nn::mul(centered, centered));
    r.sigma = nn::clamp_min(nn::sqrt_elem(var), data::NormStats::kSigmaEps);
    Tensor x_std = nn::div_rowvec(centered, r.sigma);

    // masked rows are replaced, not blended
    std::vector<double> keep(seq.length);
    for (std::size_t i = 0; i < seq.length; ++i)
      keep[i] = plan.covers(i) ? 0.0 : 1.0;
    Tensor noise = Tensor::from(plan.mask_values, {seq.length, seq.dim});
    r.model_input = nn::add(nn::scale_rows(x_std, std::move(keep)), noise);

    Tensor tokens = spatial_embed(arl(r.model_input));
    Tensor pe = Tensor::from(
        positional_encoding(seq.timestamps, static_cast<double>(cfg_.input_len),
                            cfg_.hidden),
        {seq.length, cfg_.hidden});
    tokens = nn::add(tokens, time_embed(pe));
    tokens = nn::add(tokens, pos_table_);
    if (opt.train && opt.dropout_rng)
      tokens = nn::dropout(tokens, cfg_.dropout, opt.train, *opt.dropout_rng);

    auto enc = encode(tokens, opt.train, opt.dropout_rng);
    r.hidden = enc.hidden;
    r.attentions = std::move(enc.attentions);

    if (opt.classify) {
      Tensor head_in = opt.detach_trunk ? r.hidden.detach() : r.hidden;
      r.logits = sequence_head(head_in);
    } else {
      r.recovered_std = token_head_std(r.hidden);
      r.recovered =
          nn::add_rowvec(nn::mul_rowvec(r.recovered_std, r.sigma), r.mu);
    }
    return r;
  }

  ForwardResult forward_recover(const data::CsiSequence& seq,
                                const train::MaskPlan& plan,
                                bool train = false,
                                Rng* dropout_rng = nullptr) const {
    ForwardOptions opt;
    opt.train = train;
    opt.dropout_rng = dropout_rng;
    return forward(seq, plan, opt);
  }

  ForwardResult forward_classify(const data::CsiSequence& seq,
                                 const train::MaskPlan& plan,
                                 bool train = false, Rng* dropout_rng = nullptr,
                                 bool detach_trunk = false) const {
    ForwardOptions opt;
    opt.train = train;
    opt.dropout_rng = dropout_rng;
    opt.classify = true;
    opt.detach_trunk = detach_trunk;
    return forward(seq, plan, opt);
  }

 private:
  ModelConfig cfg_;
  nn::ParamRegistry reg_;
  DenseLayer arl_gate_, spatial_, time_mlp_;
  Tensor pos_table_;
  std::vector<detail::EncoderLayer> layers_;
  Tensor final_g_, final_b_;
  DenseLayer token_head_, seq_pool_, seq_out1_, seq_out2_;
};

struct DiscriminatorOut {
  Tensor logits;  // 2 raw scores (fake, real)
  Tensor prob;    // scalar in (0,1): probability the input is real
};

// Small adversary: embedding, a short encoder stack, mean pooling, and a
// binary output. Strictly fewer parameters than the recoverer.
class Discriminator {
 public:
  Discriminator(const ModelConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng = Rng(init_seed).fork("discriminator-init");
    auto winit = [&rng]() { return [&rng]() { return rng.truncated_normal(0.0, 0.02); }; };
    auto zeros = []() { return []() { return 0.0; }; };
    auto ones = []() { return []() { return 1.0; }; };

    const std::size_t m = cfg_.input_dim, d = cfg_.hidden;
    embed_ = {reg_.add("disc.embed.w", {m, d}, winit()),
              reg_.add("disc.embed.b", {d}, zeros()), Act::Identity};
    layers_.resize(cfg_.disc_layers);
    for (std::size_t l = 0; l < cfg_.disc_layers; ++l) {
      const std::string p = "disc.layer" + std::to_string(l) + ".";
      auto& lay = layers_[l];
      lay.ln1_g = reg_.add(p + "ln1.g", {d}, ones());
      lay.ln1_b = reg_.add(p + "ln1.b", {d}, zeros());
      lay.ln2_g = reg_.add(p + "ln2.g", {d}, ones());
      lay.ln2_b = reg_.add(p + "ln2.b", {d}, zeros());
      lay.attn.wq = reg_.add(p + "attn.wq", {d, d}, winit());
      lay.attn.bq = reg_.add(p + "attn.bq", {d}, zeros());
      lay.attn.wk = reg_.add(p + "attn.wk", {d, d}, winit());
      lay.attn.bk = reg_.add(p + "attn.bk", {d}, zeros());
      lay.attn.wv = reg_.add(p + "attn.wv", {d, d}, winit());
      lay.attn.bv = reg_.add(p + "attn.bv", {d}, zeros());
      lay.attn.wo = reg_.add(p + "attn.wo", {d, d}, winit());
      lay.attn.bo = reg_.add(p + "attn.bo", {d}, zeros());
      lay.ff1 = {reg_.add(p + "ff.w1", {d, cfg_.inner}, winit()),
                 reg_.add(p + "ff.b1", {cfg_.inner}, zeros()), Act::Gelu};
      lay.ff2 = {reg_.add(p + "ff.w2", {cfg_.inner, d}, winit()),
                 reg_.add(p + "ff.b2", {d}, zeros()), Act::Identity};
    }
    final_g_ = reg_.add("disc.final.g", {d}, ones());
    final_b_ = reg_.add("disc.final.b", {d}, zeros());
    out_ = {reg_.add("disc.out.w", {d, 2}, winit()),
            reg_.add("disc.out.b", {2}, zeros()), Act::Identity};
  }

  const ModelConfig& config() const { return cfg_; }
  std::vector<Parameter>& params() { return reg_.all(); }
  const std::vector<Parameter>& params() const { return reg_.all(); }
  std::size_t param_count() const { return reg_.count_values(); }

  // Judges a sequence in standardized coordinates; class 1 means "real".
  DiscriminatorOut discriminate(const Tensor& std_values, bool train = false,
                                Rng* dropout_rng = nullptr) const {
    require(std_values.rank() == 2 && std_values.cols() == cfg_.input_dim,
            "discriminate: bad input shape");
    Tensor tokens = nn::mlp(std_values, {embed_});
    auto enc = detail::run_encoder(tokens, layers_, cfg_.heads, final_g_,
                                   final_b_, cfg_.dropout, train, dropout_rng);
    Tensor pooled = nn::mean_axis0(enc.hidden);
    Tensor logits = nn::reshape(
        nn::mlp(nn::reshape(pooled, {std::size_t(1), cfg_.hidden}), {out_}),
        {std::size_t(2)});
    // P(real) = sigmoid(z_real - z_fake)
    Tensor diff = nn::sub(nn::reshape(nn::slice_cols(nn::reshape(logits, {1, 2}), 1, 1), {std::size_t(1)}),
                          nn::reshape(nn::slice_cols(nn::reshape(logits, {1, 2}), 0, 1), {std::size_t(1)}));
    DiscriminatorOut out;
    out.logits = logits;
    out.prob = nn::sigmoid(diff);
    return out;
  }

 private:
  ModelConfig cfg_;
  nn::ParamRegistry reg_;
  DenseLayer embed_;
  std::vector<detail::EncoderLayer> layers_;
  Tensor final_g_, final_b_;
  DenseLayer out_;
};

}  // namespace csikit::model
