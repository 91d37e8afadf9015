#pragma once

// Spatial-temporal masking, the six controllable-generation tasks, and
// long-form generation by overlapped linear blending.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "dancegen/core/error.hpp"
#include "dancegen/core/rng.hpp"
#include "dancegen/diffusion.hpp"
#include "dancegen/skeleton.hpp"

namespace dancegen {

// Slot layout: slot 0 covers the root translation channels; slot 1+j covers
// joint j's six rotation channels; the four contact channels inherit the
// slot of their foot joint.
struct SpatialTemporalMask {
  Eigen::MatrixXd entries;  // F x (J+1), values in {0,1}
  int joints = 0;

  int frames() const { return static_cast<int>(entries.rows()); }
  int slots() const { return static_cast<int>(entries.cols()); }

  void validate() const {
    require_shape(slots() == joints + 1, "mask: slot count must be J+1");
    for (int i = 0; i < frames(); ++i)
      for (int s = 0; s < slots(); ++s)
        require(entries(i, s) == 0.0 || entries(i, s) == 1.0,
                "mask: entries must be binary");
  }

  // Expands slot bits to per-channel bits over the F x D feature layout.
  Eigen::MatrixXd channel_mask(const Skeleton& skel) const {
    const int J = joints;
    require_shape(skel.joint_count() == J, "mask: skeleton joint count mismatch");
    const int D = 3 + 6 * J + 4;
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(frames(), D);
    for (int i = 0; i < frames(); ++i) {
      for (int c = 0; c < 3; ++c) out(i, c) = entries(i, 0);
      for (int j = 0; j < J; ++j)
        for (int c = 0; c < 6; ++c) out(i, 3 + 6 * j + c) = entries(i, 1 + j);
      for (int k = 0; k < 4; ++k)
        out(i, 3 + 6 * J + k) =
            entries(i, 1 + skel.foot_joints[static_cast<std::size_t>(k)]);
    }
    return out;
  }
};

enum class EditKind {
  trajectory,
  seed_motion,
  in_betweening,
  inpainting,
  upper_body,
  lower_body
};

inline std::string to_string(EditKind k) {
  switch (k) {
    case EditKind::trajectory: return "trajectory";
    case EditKind::seed_motion: return "seed_motion";
    case EditKind::in_betweening: return "in_betweening";
    case EditKind::inpainting: return "inpainting";
    case EditKind::upper_body: return "upper_body";
    case EditKind::lower_body: return "lower_body";
  }
  return "?";
}

inline EditKind edit_kind_from_string(const std::string& s) {
  if (s == "trajectory") return EditKind::trajectory;
  if (s == "seed_motion") return EditKind::seed_motion;
  if (s == "in_betweening") return EditKind::in_betweening;
  if (s == "inpainting") return EditKind::inpainting;
  if (s == "upper_body") return EditKind::upper_body;
  if (s == "lower_body") return EditKind::lower_body;
  throw ValidationError("unknown edit task kind: " + s);
}

struct EditTask {
  EditKind kind = EditKind::in_betweening;
  MotionSequence known_motion;   // frame count = target F
  double inpaint_fraction = 0.7;
  std::uint64_t seed = 0;
};

inline SpatialTemporalMask build_mask(const EditTask& task, int frames,
                                      const Skeleton& skel) {
  require(frames >= 2, "build_mask: need at least 2 frames");
  const int J = skel.joint_count();
  SpatialTemporalMask m;
  m.joints = J;
  m.entries = Eigen::MatrixXd::Zero(frames, J + 1);
  switch (task.kind) {
    case EditKind::trajectory:
      m.entries.col(0).setOnes();
      break;
    case EditKind::seed_motion:
      m.entries.row(0).setOnes();
      m.entries.row(1).setOnes();
      break;
    case EditKind::in_betweening:
      m.entries.row(0).setOnes();
      m.entries.row(frames - 1).setOnes();
      break;
    case EditKind::inpainting: {
      const int known = static_cast<int>(
          std::ceil(task.inpaint_fraction * static_cast<double>(frames)));
      std::vector<int> idx(static_cast<std::size_t>(frames));
      for (int i = 0; i < frames; ++i) idx[static_cast<std::size_t>(i)] = i;
      Rng rng(task.seed);
      for (int i = frames - 1; i > 0; --i) {
        const int j = static_cast<int>(rng.uniform_int(0, i));
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
      }
      for (int i = 0; i < known; ++i)
        m.entries.row(idx[static_cast<std::size_t>(i)]).setOnes();
      break;
    }
    case EditKind::upper_body:
      // Generate the upper body: lower-body slots are known.
      m.entries.col(0).setOnes();  // root translation rides the lower body
      for (int j : skel.lower_body) m.entries.col(1 + j).setOnes();
      break;
    case EditKind::lower_body:
      for (int j : skel.upper_body) m.entries.col(1 + j).setOnes();
      break;
  }
  m.validate();
  return m;
}

// One constrained reverse step: known branch re-noises the ground truth,
// unknown branch re-noises the prediction, and the channel-expanded mask
// recomposes them elementwise.
inline Eigen::MatrixXd masked_reverse_step(
    const Eigen::MatrixXd& x0_known, const Eigen::MatrixXd& channel_mask,
    int t, const Eigen::MatrixXd& prediction, const NoiseSchedule& sched,
    const Eigen::MatrixXd& eps_known, const Eigen::MatrixXd& eps_unknown) {
  require(t >= 1 && t <= sched.T, "masked_reverse_step: t out of range");
  require_shape(x0_known.rows() == prediction.rows() &&
                    x0_known.cols() == prediction.cols() &&
                    channel_mask.rows() == prediction.rows() &&
                    channel_mask.cols() == prediction.cols() &&
                    eps_known.rows() == prediction.rows() &&
                    eps_unknown.rows() == prediction.rows(),
                "masked_reverse_step: shape mismatch");
  const double sab = std::sqrt(sched.alpha_bar(t - 1));
  const double nc = sched.noise_coeff(t - 1);
  const Eigen::MatrixXd known = sab * x0_known + nc * eps_known;
  const Eigen::MatrixXd unknown = sab * prediction + nc * eps_unknown;
  return channel_mask.cwiseProduct(known) +
         (Eigen::MatrixXd::Ones(prediction.rows(), prediction.cols()) -
          channel_mask)
             .cwiseProduct(unknown);
}

// Runs guided sampling with the task's mask applied at every step; after the
// final step, known channels are overwritten with the constraint exactly.
inline MotionSequence edit(const EditTask& task, const AudioCondition& audio,
                           const StylePrompt& style, double w,
                           const ParamStore& params, const NoiseSchedule& sched,
                           const DenoiserConfig& cfg, const Skeleton& skel,
                           std::uint64_t seed,
                           SpatialTemporalMask* mask_out = nullptr) {
  const int F = task.known_motion.frames();
  require_shape(audio.frames() == F, "edit: audio/known motion frame mismatch");
  SpatialTemporalMask mask = build_mask(task, F, skel);
  if (mask_out) *mask_out = mask;

  SampleConstraint constraint;
  constraint.known = task.known_motion.features();
  constraint.channel_mask = mask.channel_mask(skel);

  Rng rng(seed);
  Eigen::VectorXd s = style.embedding;
  SampleResult r = sample_features(params, cfg, sched, &audio.features, &s, w,
                                   F, rng, &constraint);
  return MotionSequence::from_features(r.features, audio.fps);
}

// Long-form stitching: consecutive slices overlap by exactly `overlap_s`
// seconds; inside an overlap the previous slice fades out linearly while the
// next fades in (weights sum to one at every frame).
inline MotionSequence stitch_long(const std::vector<MotionSequence>& slices,
                                  double overlap_s) {
  require(!slices.empty(), "stitch_long: no slices");
  const double fps = slices.front().fps;
  const int J = slices.front().joint_count();
  const int overlap = static_cast<int>(std::llround(overlap_s * fps));
  require(overlap >= 2, "stitch_long: overlap must span at least 2 frames");
  int total = 0;
  for (const MotionSequence& s : slices) {
    require(s.fps == fps, "stitch_long: fps mismatch between slices");
    require_shape(s.joint_count() == J, "stitch_long: joint count mismatch");
    require(s.frames() > overlap, "stitch_long: slice shorter than the overlap");
    total += s.frames();
  }
  total -= overlap * (static_cast<int>(slices.size()) - 1);

  Eigen::MatrixXd out = slices.front().features();
  for (std::size_t k = 1; k < slices.size(); ++k) {
    const Eigen::MatrixXd next = slices[k].features();
    const int prev_rows = static_cast<int>(out.rows());
    const int next_rows = static_cast<int>(next.rows());
    Eigen::MatrixXd merged(prev_rows + next_rows - overlap, out.cols());
    merged.topRows(prev_rows - overlap) = out.topRows(prev_rows - overlap);
    for (int p = 0; p < overlap; ++p) {
      const double lam = 1.0 - static_cast<double>(p) / (overlap - 1);
      const auto a = out.row(prev_rows - overlap + p);
      const auto b = next.row(p);
      // Convex blend, clamped so rounding can never leave [min, max].
      merged.row(prev_rows - overlap + p) =
          (lam * a + (1.0 - lam) * b).cwiseMax(a.cwiseMin(b)).cwiseMin(
              a.cwiseMax(b));
    }
    merged.bottomRows(next_rows - overlap) = next.bottomRows(next_rows - overlap);
    out = std::move(merged);
  }
  require(static_cast<int>(out.rows()) == total, "stitch_long: frame accounting");
  return MotionSequence::from_features(out, fps);
}

}  // namespace dancegen
