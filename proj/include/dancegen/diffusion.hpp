#pragma once

// Noise schedule, forward noising, training loop and classifier-free guided
// sampling. The reverse step re-noises the clean-sample prediction so vanilla
// and mask-constrained sampling share one code path.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "dancegen/core/error.hpp"
#include "dancegen/core/rng.hpp"
#include "dancegen/core/tape.hpp"
#include "dancegen/datagen.hpp"
#include "dancegen/denoiser.hpp"
#include "dancegen/skeleton.hpp"

namespace dancegen {

enum class ScheduleKind { cosine, linear };

// Noise magnitude convention for q_sample and the reverse step.
// `sqrt_one_minus` is the standard sqrt(1 - alpha_bar); `one_minus` is the
// literal (1 - alpha_bar) coefficient, kept behind this flag for fidelity
// experiments (it is not variance preserving).
enum class NoiseCoeff { sqrt_one_minus, one_minus };

struct NoiseSchedule {
  int T = 50;
  std::vector<double> betas;       // size T, index t-1 holds beta_t
  std::vector<double> alphas;      // 1 - beta
  std::vector<double> alpha_bars;  // running products
  NoiseCoeff coeff_kind = NoiseCoeff::sqrt_one_minus;

  double alpha_bar(int t) const {
    require(t >= 0 && t <= T, "schedule: t out of range");
    return t == 0 ? 1.0 : alpha_bars[static_cast<std::size_t>(t - 1)];
  }

  // Multiplier of the injected noise at step t.
  double noise_coeff(int t) const {
    const double ab = alpha_bar(t);
    return coeff_kind == NoiseCoeff::sqrt_one_minus ? std::sqrt(1.0 - ab)
                                                    : (1.0 - ab);
  }

  void validate() const {
    require(T >= 2 && betas.size() == static_cast<std::size_t>(T),
            "schedule: inconsistent T");
    double prev = 1.0;
    double prod = 1.0;
    for (int t = 1; t <= T; ++t) {
      const double b = betas[static_cast<std::size_t>(t - 1)];
      require(b > 0.0 && b < 1.0, "schedule: beta outside (0,1)");
      prod *= 1.0 - b;
      require(std::abs(prod - alpha_bar(t)) < 1e-12,
              "schedule: alpha_bar is not the running product");
      require(alpha_bar(t) < prev, "schedule: alpha_bar must strictly decrease");
      prev = alpha_bar(t);
    }
  }
};

inline NoiseSchedule make_schedule(int T, ScheduleKind kind = ScheduleKind::cosine) {
  require(T >= 2, "make_schedule: T must be at least 2");
  NoiseSchedule s;
  s.T = T;
  s.betas.resize(static_cast<std::size_t>(T));
  if (kind == ScheduleKind::cosine) {
    const double offset = 0.008;
    auto f = [&](double t) {
      const double a = (t / T + offset) / (1.0 + offset) * std::numbers::pi / 2.0;
      return std::cos(a) * std::cos(a);
    };
    double prev = 1.0;
    for (int t = 1; t <= T; ++t) {
      double ab = f(static_cast<double>(t)) / f(0.0);
      double beta = 1.0 - ab / prev;
      beta = std::min(std::max(beta, 1e-8), 0.999);
      s.betas[static_cast<std::size_t>(t - 1)] = beta;
      prev *= 1.0 - beta;
    }
  } else {
    const double b0 = 1e-4, b1 = 0.02;
    for (int t = 0; t < T; ++t)
      s.betas[static_cast<std::size_t>(t)] =
          b0 + (b1 - b0) * static_cast<double>(t) / (T - 1);
  }
  s.alphas.resize(static_cast<std::size_t>(T));
  s.alpha_bars.resize(static_cast<std::size_t>(T));
  double prod = 1.0;
  for (int t = 0; t < T; ++t) {
    s.alphas[static_cast<std::size_t>(t)] = 1.0 - s.betas[static_cast<std::size_t>(t)];
    prod *= s.alphas[static_cast<std::size_t>(t)];
    s.alpha_bars[static_cast<std::size_t>(t)] = prod;
  }
  s.validate();
  return s;
}

// x_t = sqrt(alpha_bar_t) x0 + coeff(t) eps.
inline ad::Mat q_sample(const ad::Mat& x0, int t, const ad::Mat& eps,
                        const NoiseSchedule& sched) {
  require(t >= 1 && t <= sched.T, "q_sample: t out of range");
  require_shape(x0.rows() == eps.rows() && x0.cols() == eps.cols(),
                "q_sample: x0/eps shape mismatch");
  return std::sqrt(sched.alpha_bar(t)) * x0 + sched.noise_coeff(t) * eps;
}

struct TrainingConfig {
  double lambda_joint = 1.0;
  double lambda_velocity = 1.0;
  double lambda_foot = 0.5;
  double cond_dropout_music = 0.1;
  double cond_dropout_style = 0.1;
  double learning_rate = 2e-4;
  double weight_decay = 0.02;
  int batch_size = 8;
  int max_iterations = 2000;
  std::uint64_t master_seed = 0;
  double window_seconds = 2.0;
  double window_stride_seconds = 0.5;
  int checkpoint_every = 500;

  void validate() const {
    require(cond_dropout_music >= 0 && cond_dropout_music <= 1 &&
                cond_dropout_style >= 0 && cond_dropout_style <= 1,
            "training: dropout probabilities must lie in [0,1]");
    require(lambda_joint >= 0 && lambda_velocity >= 0 && lambda_foot >= 0,
            "training: loss weights must be non-negative");
    require(batch_size >= 1 && max_iterations >= 1 && learning_rate > 0,
            "training: bad optimizer settings");
  }
};

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

struct GeometricLosses {
  double joint = 0.0;
  double velocity = 0.0;
  double foot = 0.0;
};

struct LossBreakdown {
  double diffusion = 0.0;
  double joint = 0.0;
  double velocity = 0.0;
  double foot = 0.0;
  double total = 0.0;
};

namespace lossdetail {

// Differentiable losses for one sequence. `x0_feat` is the ground truth in
// feature space, `xhat` the prediction on the tape; contacts come from the
// ground truth and act as a constant mask on the foot joints.
struct SequenceLossVars {
  ad::Var diffusion, joint, velocity, foot;
};

inline SequenceLossVars sequence_losses(ad::Tape& tape, const ad::Mat& x0_feat,
                                        ad::Var xhat, const Skeleton& skel,
                                        const ad::Mat& contacts) {
  using namespace ad;
  const int F = static_cast<int>(x0_feat.rows());
  require(F >= 2, "losses: need at least 2 frames");
  const int J = skel.joint_count();
  Var x0 = tape.constant(x0_feat);

  SequenceLossVars out;

  // Mean over frames of squared row norms of the residual.
  Var resid = sub(x0, xhat);
  out.diffusion = muls(sum(mul(resid, resid)), 1.0 / F);

  // Velocity: squared difference of frame deltas in feature space.
  Var dx0 = sub(rows(x0, 1, F - 1), rows(x0, 0, F - 1));
  Var dxh = sub(rows(xhat, 1, F - 1), rows(xhat, 0, F - 1));
  Var dv = sub(dx0, dxh);
  out.velocity = muls(sum(mul(dv, dv)), 1.0 / (F - 1));

  // FK-based terms.
  Var root_gt = cols(x0, 0, 3);
  Var rot_gt = cols(x0, 3, 6 * J);
  Var root_pr = cols(xhat, 0, 3);
  Var rot_pr = cols(xhat, 3, 6 * J);
  std::vector<Var> pos_gt = adfk::positions(tape, root_gt, rot_gt, skel);
  std::vector<Var> pos_pr = adfk::positions(tape, root_pr, rot_pr, skel);

  Var joint_sum;
  for (int j = 0; j < J; ++j) {
    Var d = sub(pos_gt[static_cast<std::size_t>(j)],
                pos_pr[static_cast<std::size_t>(j)]);
    Var sq = sum(mul(d, d));
    joint_sum = (j == 0) ? sq : add(joint_sum, sq);
  }
  out.joint = muls(joint_sum, 1.0 / F);

  // Foot sliding of the prediction where the ground truth says "planted".
  Var foot_sum;
  for (int k = 0; k < 4; ++k) {
    const int j = skel.foot_joints[static_cast<std::size_t>(k)];
    Var p = pos_pr[static_cast<std::size_t>(j)];
    Var dp = sub(rows(p, 1, F - 1), rows(p, 0, F - 1));
    Var mask = tape.constant(contacts.col(k).head(F - 1).replicate(1, 3));
    Var masked = mul(dp, mask);
    Var sq = sum(mul(masked, masked));
    foot_sum = (k == 0) ? sq : add(foot_sum, sq);
  }
  out.foot = muls(foot_sum, 1.0 / (F - 1));
  return out;
}

}  // namespace lossdetail

// Plain (non-differentiated) geometric losses between two motions.
inline GeometricLosses geometric_losses(const MotionSequence& x,
                                        const MotionSequence& xhat,
                                        const Skeleton& skel) {
  require(x.frames() >= 2, "geometric_losses: need at least 2 frames");
  require_shape(x.frames() == xhat.frames() &&
                    x.joint_count() == xhat.joint_count(),
                "geometric_losses: motion shape mismatch");
  ad::Tape tape;
  ad::Var pred = tape.leaf(xhat.features(), false);
  auto vars = lossdetail::sequence_losses(tape, x.features(), pred, skel,
                                          x.contacts);
  GeometricLosses g;
  g.joint = ad::scalar(vars.joint);
  g.velocity = ad::scalar(vars.velocity);
  g.foot = ad::scalar(vars.foot);
  return g;
}

// ---------------------------------------------------------------------------
// Optimizer: decoupled weight decay with adaptive moments.
// ---------------------------------------------------------------------------

struct AdamState {
  std::map<std::string, ad::Mat> m;
  std::map<std::string, ad::Mat> v;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

inline void adamw_update(ParamStore& params, const std::map<std::string, ad::Mat>& grads,
                         AdamState& state, double lr, double weight_decay) {
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (auto& [name, w] : params) {
    const ad::Mat& g = grads.at(name);
    ad::Mat& m = state.m.try_emplace(name, ad::Mat::Zero(w.rows(), w.cols())).first->second;
    ad::Mat& v = state.v.try_emplace(name, ad::Mat::Zero(w.rows(), w.cols())).first->second;
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseProduct(g);
    const ad::Mat mhat = m / bc1;
    const ad::Mat vhat = v / bc2;
    w.array() -= lr * (mhat.array() / (vhat.array().sqrt() + state.eps) +
                       weight_decay * w.array());
  }
}

// ---------------------------------------------------------------------------
// Training step
// ---------------------------------------------------------------------------

struct TrainItem {
  const ClipRecord* clip = nullptr;
  Eigen::VectorXd style_embedding;  // d_s
};

// One optimizer update over a batch. Per item the RNG stream yields, in
// order: t, the noise matrix (row-major), the music-dropout draw and the
// style-dropout draw, so runs are reproducible from the seed alone.
inline LossBreakdown training_step(const std::vector<TrainItem>& batch,
                                   ParamStore& params, AdamState& opt,
                                   const NoiseSchedule& sched,
                                   const TrainingConfig& tcfg,
                                   const DenoiserConfig& cfg,
                                   const Skeleton& skel, Rng& rng) {
  require(!batch.empty(), "training_step: empty batch");
  ad::Tape tape;
  ParamVars P(tape, params, /*needs_grad=*/true);

  ad::Var total;
  LossBreakdown out;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const ClipRecord& clip = *batch[i].clip;
    const ad::Mat x0 = clip.motion.features();
    const int F = static_cast<int>(x0.rows());
    const int t = static_cast<int>(rng.uniform_int(1, sched.T));
    ad::Mat eps(F, x0.cols());
    for (int r = 0; r < F; ++r)
      for (int c = 0; c < x0.cols(); ++c) eps(r, c) = rng.normal();
    const ad::Mat x_t = q_sample(x0, t, eps, sched);

    const bool drop_music = rng.uniform() < tcfg.cond_dropout_music;
    const bool drop_style = rng.uniform() < tcfg.cond_dropout_style;
    const ad::Mat* music = drop_music ? nullptr : &clip.audio.features;
    const Eigen::VectorXd* style =
        drop_style ? nullptr : &batch[i].style_embedding;

    ad::Var xhat = denoise_fwd(P, x_t, t, music, style, cfg);
    auto losses = lossdetail::sequence_losses(tape, x0, xhat, skel,
                                              clip.motion.contacts);
    ad::Var item = losses.diffusion;
    if (tcfg.lambda_joint > 0)
      item = ad::add(item, ad::muls(losses.joint, tcfg.lambda_joint));
    if (tcfg.lambda_velocity > 0)
      item = ad::add(item, ad::muls(losses.velocity, tcfg.lambda_velocity));
    if (tcfg.lambda_foot > 0)
      item = ad::add(item, ad::muls(losses.foot, tcfg.lambda_foot));

    out.diffusion += ad::scalar(losses.diffusion);
    out.joint += ad::scalar(losses.joint);
    out.velocity += ad::scalar(losses.velocity);
    out.foot += ad::scalar(losses.foot);
    total = (i == 0) ? item : ad::add(total, item);
  }
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  total = ad::muls(total, inv_n);
  out.diffusion *= inv_n;
  out.joint *= inv_n;
  out.velocity *= inv_n;
  out.foot *= inv_n;
  out.total = ad::scalar(total);
  if (!std::isfinite(out.total))
    throw NonFiniteError("training_step: non-finite loss (total=" +
                         std::to_string(out.total) + ")");

  tape.backward(total);
  adamw_update(params, P.grads(), opt, tcfg.learning_rate, tcfg.weight_decay);
  return out;
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

// Channel-expanded spatial-temporal constraint used by masked sampling;
// control.hpp builds these from edit tasks.
struct SampleConstraint {
  ad::Mat known;         // F x D ground-truth features
  ad::Mat channel_mask;  // F x D in {0,1}; 1 = keep known content
};

struct SampleResult {
  ad::Mat features;  // F x D
  int denoiser_evals = 0;
};

// Classifier-free guided reverse process. Starts from pure noise; each step
// mixes the conditional and music-null predictions with weight w and
// re-noises the mix to t-1. With a constraint, known entries are replaced by
// the noised ground truth every step (same noise draw for both branches, so
// an all-zero mask is bit-identical to unconstrained sampling) and overwritten
// exactly at the end.
inline SampleResult sample_features(const ParamStore& params,
                                    const DenoiserConfig& cfg,
                                    const NoiseSchedule& sched,
                                    const ad::Mat* music,
                                    const Eigen::VectorXd* style, double w,
                                    int frames, Rng& rng,
                                    const SampleConstraint* constraint = nullptr) {
  const int D = cfg.feature_width();
  require(frames >= 1 && frames <= cfg.max_frames,
          "sample: frame count outside [1, max_frames]");
  if (constraint) {
    require_shape(constraint->known.rows() == frames &&
                      constraint->known.cols() == D &&
                      constraint->channel_mask.rows() == frames &&
                      constraint->channel_mask.cols() == D,
                  "sample: constraint shape mismatch");
  }
  SampleResult res;
  ad::Mat x = ad::Mat::Zero(frames, D);
  for (int r = 0; r < frames; ++r)
    for (int c = 0; c < D; ++c) x(r, c) = rng.normal();

  ad::Mat mix;
  for (int t = sched.T; t >= 1; --t) {
    const ad::Mat cond = denoise(params, x, t, music, style, cfg);
    res.denoiser_evals += 1;
    if (w == 1.0) {
      mix = cond;
    } else {
      const ad::Mat uncond = denoise(params, x, t, nullptr, style, cfg);
      res.denoiser_evals += 1;
      mix = w * cond + (1.0 - w) * uncond;
    }
    if (t > 1) {
      const double sab = std::sqrt(sched.alpha_bar(t - 1));
      const double nc = sched.noise_coeff(t - 1);
      ad::Mat eps(frames, D);
      for (int r = 0; r < frames; ++r)
        for (int c = 0; c < D; ++c) eps(r, c) = rng.normal();
      ad::Mat unknown = sab * mix + nc * eps;
      if (constraint) {
        ad::Mat known = sab * constraint->known + nc * eps;
        x = constraint->channel_mask.cwiseProduct(known) +
            (ad::Mat::Ones(frames, D) - constraint->channel_mask)
                .cwiseProduct(unknown);
      } else {
        x = unknown;
      }
    }
  }
  if (constraint) {
    mix = constraint->channel_mask.cwiseProduct(constraint->known) +
          (ad::Mat::Ones(frames, D) - constraint->channel_mask).cwiseProduct(mix);
  }
  res.features = mix;
  return res;
}

// Samples a motion sequence; contacts are thresholded at 0.5.
inline MotionSequence guided_sample(const AudioCondition& audio,
                                    const StylePrompt& style, double w,
                                    const ParamStore& params,
                                    const NoiseSchedule& sched,
                                    const DenoiserConfig& cfg, int frames,
                                    std::uint64_t seed) {
  Rng rng(seed);
  Eigen::VectorXd s = style.embedding;
  SampleResult r = sample_features(params, cfg, sched, &audio.features, &s, w,
                                   frames, rng);
  return MotionSequence::from_features(r.features, audio.fps);
}

}  // namespace dancegen
