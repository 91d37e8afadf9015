#pragma once

// Evaluation suite: beat alignment, physical foot contact, Frechet distance
// in kinetic and geometric feature spaces, and diversity.
//
// Geometric features are 32 boolean pose predicates averaged over frames.
// The predicate list is fixed and deterministic: enumerate ordered joint
// pairs (a, b) with a < b in lexicographic order and, for each pair, the
// axes x, y, z; predicate = [position(a).axis > position(b).axis]; take the
// first 32. Mirrored motions therefore flip the x-axis comparisons between
// left/right joints.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "dancegen/conditioning.hpp"
#include "dancegen/core/error.hpp"
#include "dancegen/core/rng.hpp"
#include "dancegen/skeleton.hpp"

namespace dancegen {

enum class FeatureSpace { kinetic, geometric };

struct FeatureVector {
  FeatureSpace space = FeatureSpace::kinetic;
  Eigen::VectorXd values;
};

struct MetricReport {
  double beat_align = 0.0;
  double pfc = 0.0;
  double fid_k = 0.0;
  double fid_g = 0.0;
  double div_k = 0.0;
  double div_g = 0.0;
  int n_generated = 0;
  int n_reference = 0;
};

// ---------------------------------------------------------------------------
// Beats
// ---------------------------------------------------------------------------

// Kinematic dance beats: local minima of the 5-frame moving average of the
// mean joint speed, in seconds.
inline std::vector<double> dance_beats(const MotionSequence& motion,
                                       const Skeleton& skel) {
  const int F = motion.frames();
  require(F >= 5, "dance_beats: need at least 5 frames");
  const Mat pos = forward_kinematics(skel, motion);
  const int J = skel.joint_count();
  std::vector<double> speed(static_cast<std::size_t>(F - 1));
  for (int i = 0; i + 1 < F; ++i) {
    double s = 0.0;
    for (int j = 0; j < J; ++j)
      s += (pos.row(i + 1).segment<3>(3 * j) - pos.row(i).segment<3>(3 * j))
               .norm();
    speed[static_cast<std::size_t>(i)] = s / J * motion.fps;
  }
  // centered 5-frame moving average, window clamped at the edges
  const int n = static_cast<int>(speed.size());
  std::vector<double> smooth(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int lo = std::max(0, i - 2);
    const int hi = std::min(n - 1, i + 2);
    double s = 0.0;
    for (int k = lo; k <= hi; ++k) s += speed[static_cast<std::size_t>(k)];
    smooth[static_cast<std::size_t>(i)] = s / (hi - lo + 1);
  }
  std::vector<double> beats;
  for (int i = 1; i + 1 < n; ++i)
    if (smooth[static_cast<std::size_t>(i)] < smooth[static_cast<std::size_t>(i - 1)] &&
        smooth[static_cast<std::size_t>(i)] < smooth[static_cast<std::size_t>(i + 1)])
      beats.push_back(i / motion.fps);
  return beats;
}

// Kernelized agreement between music beats and the closest dance beats.
inline double beat_align(const std::vector<double>& music_beats,
                         const std::vector<double>& dance_beat_times,
                         double sigma = 0.1) {
  require(!music_beats.empty(), "beat_align: music beats must be nonempty");
  if (dance_beat_times.empty()) return 0.0;
  double acc = 0.0;
  for (double tm : music_beats) {
    double best = std::numeric_limits<double>::infinity();
    for (double td : dance_beat_times) best = std::min(best, std::abs(tm - td));
    acc += std::exp(-best * best / (2.0 * sigma * sigma));
  }
  return acc / static_cast<double>(music_beats.size());
}

// ---------------------------------------------------------------------------
// Physical foot contact
// ---------------------------------------------------------------------------

// Penalizes root acceleration occurring while both feet are moving:
//   score = mean_i( |a_root(i)| * vL(i) * vR(i) ) / max_i |a_root(i)|
// where the root acceleration keeps only its upward vertical part and foot
// speeds are normalized by their per-sequence maxima. Lower is better.
inline double pfc(const MotionSequence& motion, const Skeleton& skel) {
  const int F = motion.frames();
  require(F >= 3, "pfc: need at least 3 frames");
  const Mat pos = forward_kinematics(skel, motion);
  const double fps = motion.fps;
  const int n = F - 2;

  auto foot_speed = [&](int heel, int toe, int i) {
    double s = 0.0;
    for (int j : {heel, toe})
      s += (pos.row(i + 1).segment<3>(3 * j) - pos.row(i).segment<3>(3 * j))
               .norm() * fps;
    return s / 2.0;
  };

  std::vector<double> accel(static_cast<std::size_t>(n));
  std::vector<double> vl(static_cast<std::size_t>(n)), vr(static_cast<std::size_t>(n));
  const int lheel = skel.foot_joints[0], rheel = skel.foot_joints[1];
  const int ltoe = skel.foot_joints[2], rtoe = skel.foot_joints[3];
  double max_a = 0.0, max_l = 0.0, max_r = 0.0;
  for (int i = 0; i < n; ++i) {
    Vec3 a = (motion.root_translation.row(i + 2) -
              2.0 * motion.root_translation.row(i + 1) +
              motion.root_translation.row(i))
                 .transpose() * fps * fps;
    a.y() = std::max(a.y(), 0.0);  // downward acceleration is free (gravity)
    accel[static_cast<std::size_t>(i)] = a.norm();
    vl[static_cast<std::size_t>(i)] = foot_speed(lheel, ltoe, i);
    vr[static_cast<std::size_t>(i)] = foot_speed(rheel, rtoe, i);
    max_a = std::max(max_a, accel[static_cast<std::size_t>(i)]);
    max_l = std::max(max_l, vl[static_cast<std::size_t>(i)]);
    max_r = std::max(max_r, vr[static_cast<std::size_t>(i)]);
  }
  if (max_a == 0.0) return 0.0;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const double nl = max_l > 0 ? vl[static_cast<std::size_t>(i)] / max_l : 0.0;
    const double nr = max_r > 0 ? vr[static_cast<std::size_t>(i)] / max_r : 0.0;
    acc += accel[static_cast<std::size_t>(i)] * nl * nr;
  }
  return acc / (static_cast<double>(n) * max_a);
}

// ---------------------------------------------------------------------------
// Feature extractors
// ---------------------------------------------------------------------------

// Per-joint mean squared position velocity (m^2/s^2), length J.
inline FeatureVector kinetic_features(const MotionSequence& motion,
                                      const Skeleton& skel) {
  const int F = motion.frames();
  require(F >= 2, "kinetic_features: need at least 2 frames");
  const Mat pos = forward_kinematics(skel, motion);
  const int J = skel.joint_count();
  FeatureVector out;
  out.space = FeatureSpace::kinetic;
  out.values = Eigen::VectorXd::Zero(J);
  for (int j = 0; j < J; ++j) {
    double s = 0.0;
    for (int i = 0; i + 1 < F; ++i)
      s += ((pos.row(i + 1).segment<3>(3 * j) - pos.row(i).segment<3>(3 * j)) *
            motion.fps)
               .squaredNorm();
    out.values(j) = s / (F - 1);
  }
  return out;
}

inline constexpr int kGeometricFeatureCount = 32;

// Deterministic predicate list; see the header comment.
inline std::vector<std::array<int, 3>> geometric_predicates(int joints) {
  std::vector<std::array<int, 3>> preds;
  for (int a = 0; a < joints && static_cast<int>(preds.size()) < kGeometricFeatureCount; ++a)
    for (int b = a + 1; b < joints && static_cast<int>(preds.size()) < kGeometricFeatureCount; ++b)
      for (int axis = 0; axis < 3 && static_cast<int>(preds.size()) < kGeometricFeatureCount; ++axis)
        preds.push_back({a, b, axis});
  // small skeletons wrap around with distance predicates so the length stays 32
  int a = 0, b = 1;
  while (static_cast<int>(preds.size()) < kGeometricFeatureCount) {
    preds.push_back({a % joints, (b + 1) % joints, 3});
    ++a;
    ++b;
  }
  return preds;
}

// 32 boolean pose predicates averaged over frames, values in [0, 1].
// axis 0..2 compare coordinates; axis code 3 compares the inter-joint
// distance against the rest-pose bone length scale (0.5 m).
inline FeatureVector geometric_features(const MotionSequence& motion,
                                        const Skeleton& skel) {
  require(motion.frames() >= 1, "geometric_features: need at least 1 frame");
  const Mat pos = forward_kinematics(skel, motion);
  const auto preds = geometric_predicates(skel.joint_count());
  const int F = motion.frames();
  FeatureVector out;
  out.space = FeatureSpace::geometric;
  out.values = Eigen::VectorXd::Zero(kGeometricFeatureCount);
  for (int p = 0; p < kGeometricFeatureCount; ++p) {
    const auto [a, b, axis] = preds[static_cast<std::size_t>(p)];
    int hits = 0;
    for (int i = 0; i < F; ++i) {
      const Vec3 pa = pos.row(i).segment<3>(3 * a).transpose();
      const Vec3 pb = pos.row(i).segment<3>(3 * b).transpose();
      const bool hit = (axis < 3) ? (pa(axis) > pb(axis))
                                  : ((pa - pb).norm() > 0.5);
      hits += hit ? 1 : 0;
    }
    out.values(p) = static_cast<double>(hits) / F;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Distribution metrics
// ---------------------------------------------------------------------------

namespace metricdetail {

// Symmetric positive-semidefinite square root via eigendecomposition; tiny
// negative eigenvalues from roundoff are clamped to zero.
inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

inline void moments(const std::vector<Eigen::VectorXd>& feats,
                    Eigen::VectorXd& mu, Eigen::MatrixXd& cov) {
  const int n = static_cast<int>(feats.size());
  const int d = static_cast<int>(feats.front().size());
  mu = Eigen::VectorXd::Zero(d);
  for (const auto& f : feats) mu += f;
  mu /= n;
  cov = Eigen::MatrixXd::Zero(d, d);
  for (const auto& f : feats) {
    const Eigen::VectorXd c = f - mu;
    cov += c * c.transpose();
  }
  cov /= (n > 1 ? n - 1 : 1);
}

}  // namespace metricdetail

// Frechet distance between two Gaussians given exact moments.
inline double fid_from_moments(const Eigen::VectorXd& mu_a,
                               const Eigen::MatrixXd& cov_a,
                               const Eigen::VectorXd& mu_b,
                               const Eigen::MatrixXd& cov_b,
                               double regularizer = 1e-6) {
  require_shape(mu_a.size() == mu_b.size() && cov_a.rows() == cov_b.rows(),
                "fid: moment dimension mismatch");
  const int d = static_cast<int>(mu_a.size());
  const Eigen::MatrixXd eye = regularizer * Eigen::MatrixXd::Identity(d, d);
  const Eigen::MatrixXd ca = cov_a + eye;
  const Eigen::MatrixXd cb = cov_b + eye;
  const Eigen::MatrixXd sa = metricdetail::psd_sqrt(ca);
  const Eigen::MatrixXd cross = metricdetail::psd_sqrt(sa * cb * sa);
  const double tr = (ca + cb - 2.0 * cross).trace();
  return (mu_a - mu_b).squaredNorm() + std::max(tr, 0.0);
}

inline double fid(const std::vector<Eigen::VectorXd>& feats_a,
                  const std::vector<Eigen::VectorXd>& feats_b,
                  double regularizer = 1e-6) {
  require(feats_a.size() >= 2 && feats_b.size() >= 2,
          "fid: need at least 2 samples per side");
  Eigen::VectorXd mu_a, mu_b;
  Eigen::MatrixXd cov_a, cov_b;
  metricdetail::moments(feats_a, mu_a, cov_a);
  metricdetail::moments(feats_b, mu_b, cov_b);
  return fid_from_moments(mu_a, cov_a, mu_b, cov_b, regularizer);
}

// Mean pairwise Euclidean distance.
inline double diversity(const std::vector<Eigen::VectorXd>& feats) {
  const int n = static_cast<int>(feats.size());
  require(n >= 2, "diversity: need at least 2 feature vectors");
  double acc = 0.0;
  int pairs = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      acc += (feats[static_cast<std::size_t>(i)] -
              feats[static_cast<std::size_t>(j)])
                 .norm();
      ++pairs;
    }
  return acc / pairs;
}

// ---------------------------------------------------------------------------
// Aggregate evaluation
// ---------------------------------------------------------------------------

struct EvaluateOptions {
  int trials = 1;           // bootstrap trials for the diversity estimate
  int trial_subset = 10;    // subset size per trial (when trials > 1)
  std::uint64_t seed = 0;
  double beat_sigma = 0.1;
};

// Aggregates every metric. Beat alignment pairs generated motion i with
// audio i modulo the audio count. With trials > 1 the diversity numbers are
// averaged over seeded bootstrap subsets.
inline MetricReport evaluate(const std::vector<MotionSequence>& generated,
                             const std::vector<MotionSequence>& reference,
                             const std::vector<AudioCondition>& audios,
                             const Skeleton& skel,
                             const EvaluateOptions& opt = EvaluateOptions{}) {
  require(!generated.empty() && !reference.empty(),
          "evaluate: input sets must be nonempty");
  MetricReport rep;
  rep.n_generated = static_cast<int>(generated.size());
  rep.n_reference = static_cast<int>(reference.size());

  std::vector<Eigen::VectorXd> gk, gg, rk, rg;
  for (const auto& m : generated) {
    gk.push_back(kinetic_features(m, skel).values);
    gg.push_back(geometric_features(m, skel).values);
  }
  for (const auto& m : reference) {
    rk.push_back(kinetic_features(m, skel).values);
    rg.push_back(geometric_features(m, skel).values);
  }
  rep.fid_k = fid(gk, rk);
  rep.fid_g = fid(gg, rg);

  auto div_of = [&](const std::vector<Eigen::VectorXd>& f) {
    if (opt.trials <= 1 ||
        static_cast<int>(f.size()) <= opt.trial_subset)
      return diversity(f);
    Rng rng(opt.seed);
    double acc = 0.0;
    for (int trial = 0; trial < opt.trials; ++trial) {
      std::vector<Eigen::VectorXd> sub;
      for (int k = 0; k < opt.trial_subset; ++k)
        sub.push_back(f[static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(f.size()) - 1))]);
      acc += diversity(sub);
    }
    return acc / opt.trials;
  };
  rep.div_k = div_of(gk);
  rep.div_g = div_of(gg);

  if (!audios.empty()) {
    double acc = 0.0;
    for (std::size_t i = 0; i < generated.size(); ++i) {
      const AudioCondition& a = audios[i % audios.size()];
      acc += beat_align(a.beat_times, dance_beats(generated[i], skel),
                        opt.beat_sigma);
    }
    rep.beat_align = acc / static_cast<double>(generated.size());
  }
  double pacc = 0.0;
  for (const auto& m : generated) pacc += pfc(m, skel);
  rep.pfc = pacc / static_cast<double>(generated.size());
  return rep;
}

}  // namespace dancegen
