#pragma once

// Deterministic synthetic dance/music corpus and the dataset slicing
// protocol (train windows at 0.5 s stride, test windows at 2.5 s stride).

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "dancegen/conditioning.hpp"
#include "dancegen/core/error.hpp"
#include "dancegen/core/rng.hpp"
#include "dancegen/skeleton.hpp"

namespace dancegen {

struct ClipRecord {
  MotionSequence motion;
  AudioCondition audio;
  int style_id = 1;  // 1-based categorical label
  std::uint64_t seed = 0;

  void validate() const {
    motion.validate();
    audio.validate();
    require(motion.frames() == audio.frames(),
            "clip: motion and audio frame counts differ");
  }
};

struct SynthParams {
  int d_c = 16;
  double speed_threshold = 0.15;   // m/s, for contact labeling
  double height_threshold = 0.08;  // m
  int n_styles = 10;
};

namespace detail {

// Style knobs: oscillation ratio to the beat, amplitude profile and floor
// path shape. Chosen so kinetic/geometric feature centroids separate.
struct StyleParams {
  double ratio;       // joint oscillation frequency in beats
  double amplitude;   // radians
  int path_shape;     // 0 circle, 1 figure-eight, 2 line, 3 ellipse
  double path_radius; // meters, small enough that heels keep contact
};

inline StyleParams style_params(int style_id) {
  const int k = style_id - 1;
  StyleParams p;
  p.ratio = (k % 2 == 0) ? 1.0 : 2.0;
  p.amplitude = 0.25 + 0.15 * (k % 4);
  p.path_shape = k % 4;
  p.path_radius = 0.10 + 0.02 * (k % 3);
  return p;
}

inline Eigen::Vector2d floor_path(const StyleParams& p, double phase01) {
  const double th = 2.0 * std::numbers::pi * phase01;
  switch (p.path_shape) {
    case 0: return {p.path_radius * std::cos(th), p.path_radius * std::sin(th)};
    case 1:
      return {p.path_radius * std::sin(th),
              p.path_radius * std::sin(th) * std::cos(th)};
    case 2: return {p.path_radius * std::sin(th), 0.0};
    default:
      return {p.path_radius * std::cos(th), 0.5 * p.path_radius * std::sin(th)};
  }
}

inline Eigen::Matrix<double, 6, 1> axis_angle_rot6d(const Vec3& axis,
                                                    double angle) {
  return matrix_to_rot6d(Mat3(Eigen::AngleAxisd(angle, axis.normalized())));
}

}  // namespace detail

// Deterministic synthetic clip: style-specific sinusoidal joint trajectories
// phase-locked to the beat grid, a slow closed floor path for the root, beat
// times at 60/bpm spacing and contacts labeled from FK.
inline ClipRecord synth_clip(int style_id, double bpm, double seconds,
                             double fps, std::uint64_t seed,
                             const Skeleton& skel = Skeleton::desk8(),
                             const SynthParams& sp = SynthParams{}) {
  if (style_id < 1 || style_id > sp.n_styles)
    throw UnknownStyleError("synth_clip: style_id " + std::to_string(style_id) +
                            " outside [1, " + std::to_string(sp.n_styles) + "]");
  const int F = static_cast<int>(std::llround(seconds * fps));
  require(F >= 2, "synth_clip: seconds*fps must be at least 2");

  const detail::StyleParams style = detail::style_params(style_id);
  const double beat_period = 60.0 / bpm;
  const int J = skel.joint_count();
  Rng rng(Rng(seed).split(static_cast<std::uint64_t>(style_id)).next_u64());

  // Per-joint deterministic axes and phases.
  std::vector<Vec3> axes(static_cast<std::size_t>(J));
  std::vector<double> phases(static_cast<std::size_t>(J));
  for (int j = 0; j < J; ++j) {
    axes[j] = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    if (axes[j].norm() < 1e-3) axes[j] = Vec3::UnitZ();
    phases[j] = rng.uniform(0.0, 2.0 * std::numbers::pi);
  }

  MotionSequence m;
  m.fps = fps;
  m.root_translation.resize(F, 3);
  m.rotations.resize(F, 6 * J);

  const bool has_toes =
      skel.foot_joints[0] != skel.foot_joints[2];  // heel/toe distinct
  for (int i = 0; i < F; ++i) {
    const double t = i / fps;
    const double beats = t / beat_period;
    const Eigen::Vector2d xz = detail::floor_path(style, t / seconds);
    m.root_translation(i, 0) = xz.x();
    m.root_translation(i, 1) = 0.95 + 0.01 * std::sin(2.0 * std::numbers::pi *
                                                      style.ratio * beats / 4.0);
    m.root_translation(i, 2) = xz.y();
    for (int j = 0; j < J; ++j) {
      double angle = style.amplitude * 0.6 *
                     std::sin(2.0 * std::numbers::pi * style.ratio * beats +
                              phases[j]);
      Vec3 axis = axes[j];
      // Heels articulate toe lifts on alternating beats.
      if (has_toes && (j == skel.foot_joints[0] || j == skel.foot_joints[1])) {
        const double side = (j == skel.foot_joints[0]) ? 0.0 : 0.5;
        const double pulse =
            std::max(0.0, std::sin(std::numbers::pi * (beats * style.ratio + side)));
        angle = 0.8 * pulse * pulse;
        axis = Vec3::UnitX();
      }
      if (has_toes && (j == skel.foot_joints[2] || j == skel.foot_joints[3]))
        angle *= 0.1;  // toes mostly ride their heel
      if (j == skel.root()) angle *= 0.15;  // keep the body near-upright
      m.rotations.row(i).segment<6>(6 * j) =
          detail::axis_angle_rot6d(axis, angle).transpose();
    }
  }

  const Mat positions = forward_kinematics(skel, m);
  m.contacts = extract_foot_contacts(positions, skel, sp.speed_threshold,
                                     sp.height_threshold, fps);

  ClipRecord clip;
  clip.style_id = style_id;
  clip.seed = seed;
  clip.motion = std::move(m);
  clip.audio.fps = fps;
  clip.audio.bpm = bpm;
  for (double b = 0.0; b < seconds - 1e-9; b += beat_period)
    clip.audio.beat_times.push_back(b);
  clip.audio.features =
      beat_features(clip.audio.beat_times, bpm, fps, F, sp.d_c,
                    Rng(seed).split(0x5eedau).next_u64());
  clip.validate();
  return clip;
}

struct SliceResult {
  std::vector<ClipRecord> windows;
  bool too_short = false;  // clip shorter than the window
};

// Cuts a clip into fixed-length windows; count = floor((dur - win)/stride)+1.
// Beat times are re-based to the window start.
inline SliceResult slice_windows(const ClipRecord& clip, double window_s,
                                 double stride_s) {
  require(window_s > 0 && stride_s > 0, "slice_windows: bad window/stride");
  SliceResult result;
  const double fps = clip.motion.fps;
  const int F = clip.motion.frames();
  const int win = static_cast<int>(std::llround(window_s * fps));
  const int stride = static_cast<int>(std::llround(stride_s * fps));
  if (F < win) {
    result.too_short = true;
    return result;
  }
  const int count = (F - win) / stride + 1;
  for (int w = 0; w < count; ++w) {
    const int i0 = w * stride;
    ClipRecord out;
    out.style_id = clip.style_id;
    out.seed = clip.seed;
    out.motion.fps = fps;
    out.motion.root_translation = clip.motion.root_translation.middleRows(i0, win);
    out.motion.rotations = clip.motion.rotations.middleRows(i0, win);
    out.motion.contacts = clip.motion.contacts.middleRows(i0, win);
    out.audio.fps = fps;
    out.audio.bpm = clip.audio.bpm;
    out.audio.features = clip.audio.features.middleRows(i0, win);
    const double t0 = i0 / fps;
    const double t1 = (i0 + win) / fps;
    for (double b : clip.audio.beat_times)
      if (b >= t0 && b < t1) out.audio.beat_times.push_back(b - t0);
    result.windows.push_back(std::move(out));
  }
  return result;
}

// Corpus manifest entry; `split` is "train" or "test".
struct ManifestEntry {
  std::string path;
  int style_id = 1;
  std::string split;
  double bpm = 120.0;
  std::uint64_t seed = 0;
};

struct CorpusManifest {
  double fps = 30.0;
  std::vector<ManifestEntry> clips;
};

// Deterministic corpus layout: per (style, clip) an independent seeded
// stream; every fourth clip of a style goes to the test split.
inline std::vector<ClipRecord> synth_corpus(int styles, int clips_per_style,
                                            double seconds, double fps,
                                            std::uint64_t master_seed,
                                            CorpusManifest* manifest = nullptr,
                                            const Skeleton& skel = Skeleton::desk8(),
                                            SynthParams sp = SynthParams{}) {
  require(styles >= 1 && clips_per_style >= 1, "synth_corpus: bad counts");
  sp.n_styles = std::max(sp.n_styles, styles);
  std::vector<ClipRecord> out;
  Rng master(master_seed);
  if (manifest) {
    manifest->fps = fps;
    manifest->clips.clear();
  }
  for (int s = 1; s <= styles; ++s) {
    for (int c = 0; c < clips_per_style; ++c) {
      const std::uint64_t clip_seed =
          master.split(static_cast<std::uint64_t>(s * 1000 + c)).next_u64();
      const double bpm = 90.0 + 10.0 * ((s * 3 + c) % 5);
      out.push_back(synth_clip(s, bpm, seconds, fps, clip_seed, skel, sp));
      if (manifest) {
        ManifestEntry e;
        e.path = "clip_s" + std::to_string(s) + "_c" + std::to_string(c) + ".json";
        e.style_id = s;
        e.split = (clips_per_style > 1 && c % 4 == 3) ? "test" : "train";
        e.bpm = bpm;
        e.seed = clip_seed;
        manifest->clips.push_back(e);
      }
    }
  }
  return out;
}

}  // namespace dancegen
