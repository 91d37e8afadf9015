#pragma once

// Transformer denoiser predicting the clean sample: self-attention, FiLM
// timestep conditioning, cross-attention over encoded music tokens, and the
// style modulation layer. All forward math runs on the autodiff tape.

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "dancegen/core/error.hpp"
#include "dancegen/core/rng.hpp"
#include "dancegen/core/tape.hpp"

namespace dancegen {

struct DenoiserConfig {
  int d_model = 64;
  int n_heads = 4;
  int encoder_depth = 2;  // music encoder
  int decoder_depth = 2;
  int d_c = 16;
  int d_s = 32;
  int d_ff = 128;
  double r = 1.0;      // style-modulation scaling factor
  int max_frames = 150;
  int joints = 8;

  int feature_width() const { return 3 + 6 * joints + 4; }

  void validate() const {
    require(d_model % n_heads == 0, "config: d_model must divide by n_heads");
    require(r > 0, "config: r must be positive");
    require(d_model > 0 && encoder_depth >= 0 && decoder_depth >= 1 &&
                d_c >= 1 && d_s >= 1 && max_frames >= 1 && joints >= 1,
            "config: non-positive dimension");
  }

  // Laptop-scale default used by the tests and the CLI.
  static DenoiserConfig desk() { return DenoiserConfig{}; }

  // Tiny model for finite-difference gradient checks.
  static DenoiserConfig micro() {
    DenoiserConfig c;
    c.d_model = 8;
    c.n_heads = 2;
    c.encoder_depth = 1;
    c.decoder_depth = 1;
    c.d_c = 4;
    c.d_s = 4;
    c.d_ff = 16;
    c.max_frames = 16;
    c.joints = 3;
    return c;
  }

  // Published full-scale hyperparameters, kept as a named preset.
  static DenoiserConfig full() {
    DenoiserConfig c;
    c.d_model = 512;
    c.n_heads = 8;
    c.encoder_depth = 2;
    c.decoder_depth = 8;
    c.d_ff = 2048;
    c.max_frames = 150;
    c.joints = 24;
    return c;
  }

  static DenoiserConfig preset(const std::string& name) {
    if (name == "desk") return desk();
    if (name == "micro") return micro();
    if (name == "full") return full();
    throw ValidationError("unknown model preset: " + name);
  }
};

// All learnable arrays, addressable by stable names.
using ParamStore = std::map<std::string, ad::Mat>;

namespace nn {

inline ad::Mat glorot(int rows, int cols, Rng& rng) {
  const double scale = std::sqrt(2.0 / static_cast<double>(rows + cols));
  ad::Mat m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
  return m;
}

inline void add_linear(ParamStore& p, const std::string& name, int d_in,
                       int d_out, Rng& rng) {
  p[name + ".W"] = glorot(d_in, d_out, rng);
  p[name + ".b"] = ad::Mat::Zero(1, d_out);
}

inline void add_layernorm(ParamStore& p, const std::string& name, int d) {
  p[name + ".g"] = ad::Mat::Ones(1, d);
  p[name + ".b"] = ad::Mat::Zero(1, d);
}

inline void add_attention(ParamStore& p, const std::string& name, int d,
                          Rng& rng) {
  add_linear(p, name + ".q", d, d, rng);
  add_linear(p, name + ".k", d, d, rng);
  add_linear(p, name + ".v", d, d, rng);
  add_linear(p, name + ".o", d, d, rng);
}

inline void add_block_common(ParamStore& p, const std::string& b, int d,
                             int d_ff, Rng& rng) {
  add_layernorm(p, b + ".ln_ffn", d);
  add_linear(p, b + ".ffn1", d, d_ff, rng);
  add_linear(p, b + ".ffn2", d_ff, d, rng);
}

// Sinusoidal table, rows are positions.
inline ad::Mat sinusoidal(int positions, int d, double base = 10000.0) {
  ad::Mat out(positions, d);
  for (int pos = 0; pos < positions; ++pos) {
    for (int i = 0; i < d; ++i) {
      const double freq = std::pow(base, -2.0 * (i / 2) / static_cast<double>(d));
      const double a = pos * freq;
      out(pos, i) = (i % 2 == 0) ? std::sin(a) : std::cos(a);
    }
  }
  return out;
}

}  // namespace nn

inline ParamStore init_params(const DenoiserConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ParamStore p;
  Rng rng(seed);
  const int d = cfg.d_model;
  nn::add_linear(p, "in_proj", cfg.feature_width(), d, rng);
  nn::add_linear(p, "tmlp1", d, d, rng);
  nn::add_linear(p, "tmlp2", d, d, rng);
  nn::add_linear(p, "music_proj", cfg.d_c, d, rng);
  p["null_music"] = 0.02 * nn::glorot(1, d, rng);
  p["null_style"] = nn::glorot(1, cfg.d_s, rng);
  for (int i = 0; i < cfg.encoder_depth; ++i) {
    const std::string b = "enc" + std::to_string(i);
    nn::add_layernorm(p, b + ".ln_attn", d);
    nn::add_attention(p, b + ".attn", d, rng);
    nn::add_block_common(p, b, d, cfg.d_ff, rng);
  }
  for (int i = 0; i < cfg.decoder_depth; ++i) {
    const std::string b = "dec" + std::to_string(i);
    nn::add_layernorm(p, b + ".ln_self", d);
    nn::add_attention(p, b + ".self", d, rng);
    nn::add_linear(p, b + ".film_scale", d, d, rng);
    nn::add_linear(p, b + ".film_shift", d, d, rng);
    nn::add_layernorm(p, b + ".ln_cross", d);
    nn::add_attention(p, b + ".cross", d, rng);
    nn::add_linear(p, b + ".sm", cfg.d_s, d, rng);
    // Style gain starts near one so early training is not crushed to zero.
    p[b + ".sm.b"] = ad::Mat::Ones(1, d);
    nn::add_block_common(p, b, d, cfg.d_ff, rng);
  }
  nn::add_layernorm(p, "out_ln", d);
  nn::add_linear(p, "out", d, cfg.feature_width(), rng);
  return p;
}

// Bridges a ParamStore onto a tape; leafs are created once per forward pass
// and remembered so gradients can be read back by name.
class ParamVars {
 public:
  ParamVars(ad::Tape& tape, const ParamStore& store, bool needs_grad = true)
      : tape_(&tape), store_(&store), needs_grad_(needs_grad) {}

  ad::Var operator()(const std::string& name) {
    auto it = vars_.find(name);
    if (it != vars_.end()) return it->second;
    auto sit = store_->find(name);
    require(sit != store_->end(), "unknown parameter: " + name);
    ad::Var v = tape_->leaf(sit->second, needs_grad_);
    vars_.emplace(name, v);
    return v;
  }

  // Gradients accumulated on the tape, keyed by parameter name. Parameters
  // untouched by the loss get zero matrices.
  std::map<std::string, ad::Mat> grads() const {
    std::map<std::string, ad::Mat> g;
    for (const auto& [name, value] : *store_) {
      auto it = vars_.find(name);
      if (it != vars_.end() && tape_->grad(it->second).size() != 0)
        g[name] = tape_->grad(it->second);
      else
        g[name] = ad::Mat::Zero(value.rows(), value.cols());
    }
    return g;
  }

  ad::Tape& tape() { return *tape_; }

 private:
  ad::Tape* tape_;
  const ParamStore* store_;
  bool needs_grad_;
  std::map<std::string, ad::Var> vars_;
};

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

// out row i = (z_i / (||z_i||_2 * r)) .* FC(s); the norm carries an epsilon
// of 1e-8 inside the square root.
inline ad::Var style_modulation(ad::Var z, ad::Var s_embed, ad::Var fc_w,
                                ad::Var fc_b, double r) {
  using namespace ad;
  Var fc = affine(s_embed, fc_w, fc_b);                    // 1 x d_z
  Var norms = rownorm(z, 1e-16);                           // F x 1
  Var normalized = mulcol(z, inv(muls(norms, r)));
  return mulrow(normalized, fc);
}

// z .* (1 + scale(t_embed)) + shift(t_embed).
inline ad::Var film(ad::Var z, ad::Var t_embed, ad::Var scale_w, ad::Var scale_b,
                    ad::Var shift_w, ad::Var shift_b) {
  using namespace ad;
  Var scale = affine(t_embed, scale_w, scale_b);  // 1 x d
  Var shift = affine(t_embed, shift_w, shift_b);
  return addrow(mulrow(z, adds(scale, 1.0)), shift);
}

namespace nn {

inline ad::Var multihead_attention(ParamVars& P, const std::string& name,
                                   ad::Var queries, ad::Var memory, int n_heads) {
  using namespace ad;
  Var q = affine(queries, P(name + ".q.W"), P(name + ".q.b"));
  Var k = affine(memory, P(name + ".k.W"), P(name + ".k.b"));
  Var v = affine(memory, P(name + ".v.W"), P(name + ".v.b"));
  const int d = static_cast<int>(queries.tape->value(q).cols());
  const int dh = d / n_heads;
  Var out;
  for (int h = 0; h < n_heads; ++h) {
    Var qh = cols(q, h * dh, dh);
    Var kh = cols(k, h * dh, dh);
    Var vh = cols(v, h * dh, dh);
    Var scores = muls(matmul(qh, transpose(kh)), 1.0 / std::sqrt(double(dh)));
    Var oh = matmul(softmax_rows(scores), vh);
    out = (h == 0) ? oh : hcat(out, oh);
  }
  return affine(out, P(name + ".o.W"), P(name + ".o.b"));
}

inline ad::Var ffn(ParamVars& P, const std::string& b, ad::Var x) {
  using namespace ad;
  Var h = gelu(affine(x, P(b + ".ffn1.W"), P(b + ".ffn1.b")));
  return affine(h, P(b + ".ffn2.W"), P(b + ".ffn2.b"));
}

inline ad::Var ln(ParamVars& P, const std::string& name, ad::Var x) {
  return ad::layernorm_rows(x, P(name + ".g"), P(name + ".b"));
}

}  // namespace nn

// ---------------------------------------------------------------------------
// Full forward pass
// ---------------------------------------------------------------------------

// Music conditioning encoder; null music is a learned single memory token.
inline ad::Var encode_music(ParamVars& P, const ad::Mat* music,
                            const DenoiserConfig& cfg) {
  using namespace ad;
  Tape& tape = P.tape();
  if (music == nullptr) return P("null_music");
  require_shape(music->cols() == cfg.d_c, "denoise: music feature width mismatch");
  Var m = affine(tape.constant(*music), P("music_proj.W"), P("music_proj.b"));
  m = add(m, tape.constant(nn::sinusoidal(static_cast<int>(music->rows()),
                                          cfg.d_model)));
  for (int i = 0; i < cfg.encoder_depth; ++i) {
    const std::string b = "enc" + std::to_string(i);
    m = add(m, nn::multihead_attention(P, b + ".attn", nn::ln(P, b + ".ln_attn", m),
                                       nn::ln(P, b + ".ln_attn", m), cfg.n_heads));
    m = add(m, nn::ffn(P, b, nn::ln(P, b + ".ln_ffn", m)));
  }
  return m;
}

// Predicts the clean sample from the noised one. `music` is F x d_c or null,
// `style` is a unit d_s embedding or null (learned null embedding).
inline ad::Var denoise_fwd(ParamVars& P, const ad::Mat& x_t, int t,
                           const ad::Mat* music, const Eigen::VectorXd* style,
                           const DenoiserConfig& cfg) {
  using namespace ad;
  Tape& tape = P.tape();
  const int F = static_cast<int>(x_t.rows());
  require_shape(x_t.cols() == cfg.feature_width(),
                "denoise: feature width mismatch");
  if (F > cfg.max_frames)
    throw ValidationError("denoise: sequence of " + std::to_string(F) +
                          " frames exceeds max_frames=" +
                          std::to_string(cfg.max_frames));
  require(t >= 1, "denoise: timestep must be >= 1");

  // Timestep embedding: sinusoidal row passed through a two-layer MLP.
  Var temb = tape.constant(nn::sinusoidal(t + 1, cfg.d_model).row(t));
  temb = gelu(affine(temb, P("tmlp1.W"), P("tmlp1.b")));
  temb = affine(temb, P("tmlp2.W"), P("tmlp2.b"));

  Var s_embed = style != nullptr
                    ? tape.constant(style->transpose())
                    : P("null_style");
  require_shape(tape.value(s_embed).cols() == cfg.d_s,
                "denoise: style embedding width mismatch");

  Var memory = encode_music(P, music, cfg);

  Var z = affine(tape.constant(x_t), P("in_proj.W"), P("in_proj.b"));
  z = add(z, tape.constant(nn::sinusoidal(F, cfg.d_model)));

  for (int i = 0; i < cfg.decoder_depth; ++i) {
    const std::string b = "dec" + std::to_string(i);
    z = add(z, nn::multihead_attention(P, b + ".self", nn::ln(P, b + ".ln_self", z),
                                       nn::ln(P, b + ".ln_self", z), cfg.n_heads));
    z = film(z, temb, P(b + ".film_scale.W"), P(b + ".film_scale.b"),
             P(b + ".film_shift.W"), P(b + ".film_shift.b"));
    z = add(z, nn::multihead_attention(P, b + ".cross",
                                       nn::ln(P, b + ".ln_cross", z), memory,
                                       cfg.n_heads));
    z = style_modulation(z, s_embed, P(b + ".sm.W"), P(b + ".sm.b"), cfg.r);
    z = add(z, nn::ffn(P, b, nn::ln(P, b + ".ln_ffn", z)));
  }
  return affine(nn::ln(P, "out_ln", z), P("out.W"), P("out.b"));
}

// Convenience inference entry point (no gradients, local tape).
inline ad::Mat denoise(const ParamStore& params, const ad::Mat& x_t, int t,
                       const ad::Mat* music, const Eigen::VectorXd* style,
                       const DenoiserConfig& cfg) {
  ad::Tape tape;
  ParamVars P(tape, params, /*needs_grad=*/false);
  ad::Var out = denoise_fwd(P, x_t, t, music, style, cfg);
  return tape.value(out);
}

}  // namespace dancegen
