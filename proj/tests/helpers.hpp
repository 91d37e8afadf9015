#pragma once

// Shared fixtures for the test suites: random valid rotations, random
// motions, an independent transform-chain FK oracle, and a finite-difference
// gradient checker for the tape.

#include <Eigen/Dense>
#include <functional>
#include <random>
#include <vector>

#include "dancegen/core/tape.hpp"
#include "dancegen/skeleton.hpp"

namespace testutil {

using dancegen::Mat3;
using dancegen::MotionSequence;
using dancegen::Skeleton;
using dancegen::Vec3;
using Mat = Eigen::MatrixXd;

// Non-degenerate random 6D rotation entry.
inline Eigen::Matrix<double, 6, 1> random_rot6d(std::mt19937_64& gen) {
  std::normal_distribution<double> nd(0.0, 1.0);
  while (true) {
    Eigen::Matrix<double, 6, 1> r;
    for (int i = 0; i < 6; ++i) r(i) = nd(gen);
    const Vec3 a = r.head<3>();
    const Vec3 b = r.tail<3>();
    if (a.norm() < 0.2) continue;
    if ((b - a.normalized() * a.normalized().dot(b)).norm() < 0.2) continue;
    return r;
  }
}

inline MotionSequence random_motion(const Skeleton& skel, int frames,
                                    std::uint64_t seed, double fps = 30.0) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd(0.0, 0.3);
  MotionSequence m;
  m.fps = fps;
  m.root_translation.resize(frames, 3);
  m.rotations.resize(frames, 6 * skel.joint_count());
  m.contacts = Mat::Zero(frames, 4);
  for (int i = 0; i < frames; ++i) {
    for (int c = 0; c < 3; ++c) m.root_translation(i, c) = nd(gen);
    for (int j = 0; j < skel.joint_count(); ++j)
      m.rotations.row(i).segment<6>(6 * j) = random_rot6d(gen).transpose();
  }
  return m;
}

// Independent FK oracle: explicit per-frame chain of homogeneous 4x4
// transforms, deliberately structured differently from the implementation.
inline Mat fk_oracle(const Skeleton& skel, const MotionSequence& motion) {
  const int J = skel.joint_count();
  const int F = motion.frames();
  Mat pos(F, 3 * J);
  for (int i = 0; i < F; ++i) {
    std::vector<Eigen::Matrix4d> world(static_cast<std::size_t>(J));
    for (int j = 0; j < J; ++j) {
      Eigen::Matrix4d local = Eigen::Matrix4d::Identity();
      local.topLeftCorner<3, 3>() = dancegen::rot6d_to_matrix(
          motion.rotations.row(i).segment<6>(6 * j).transpose());
      const int p = skel.parents[static_cast<std::size_t>(j)];
      if (p < 0) {
        local.topRightCorner<3, 1>() = motion.root_translation.row(i).transpose();
        world[static_cast<std::size_t>(j)] = local;
      } else {
        Eigen::Matrix4d off = Eigen::Matrix4d::Identity();
        off.topRightCorner<3, 1>() = skel.offsets[static_cast<std::size_t>(j)];
        world[static_cast<std::size_t>(j)] =
            world[static_cast<std::size_t>(p)] * off * local;
      }
      pos.row(i).segment<3>(3 * j) =
          world[static_cast<std::size_t>(j)].topRightCorner<3, 1>().transpose();
    }
  }
  return pos;
}

// Central finite differences of a scalar function of several matrices against
// the tape's reverse-mode gradients. Returns the worst relative error.
struct FdReport {
  double max_rel_err = 0.0;
};

inline FdReport check_gradients(
    const std::function<dancegen::ad::Var(dancegen::ad::Tape&,
                                          std::vector<dancegen::ad::Var>&)>& build,
    std::vector<Mat> inputs, double h = 1e-6) {
  namespace ad = dancegen::ad;
  auto eval = [&](const std::vector<Mat>& xs) {
    ad::Tape tape;
    std::vector<ad::Var> leaves;
    for (const Mat& x : xs) leaves.push_back(tape.leaf(x, true));
    return ad::scalar(build(tape, leaves));
  };

  ad::Tape tape;
  std::vector<ad::Var> leaves;
  for (const Mat& x : inputs) leaves.push_back(tape.leaf(x, true));
  ad::Var out = build(tape, leaves);
  tape.backward(out);

  FdReport rep;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Mat grad = tape.grad(leaves[k]);
    if (grad.size() == 0) grad = Mat::Zero(inputs[k].rows(), inputs[k].cols());
    for (int r = 0; r < inputs[k].rows(); ++r) {
      for (int c = 0; c < inputs[k].cols(); ++c) {
        std::vector<Mat> plus = inputs, minus = inputs;
        plus[k](r, c) += h;
        minus[k](r, c) -= h;
        const double fd = (eval(plus) - eval(minus)) / (2.0 * h);
        const double g = grad(r, c);
        const double denom = std::max({std::abs(fd), std::abs(g), 1.0});
        rep.max_rel_err = std::max(rep.max_rel_err, std::abs(fd - g) / denom);
      }
    }
  }
  return rep;
}

}  // namespace testutil
