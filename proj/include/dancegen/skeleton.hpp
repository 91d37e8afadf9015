#pragma once

// Kinematic representation of the dancer: joint hierarchy, continuous 6D
// rotations, forward kinematics and foot-contact labeling.

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "dancegen/core/error.hpp"
#include "dancegen/core/tape.hpp"

namespace dancegen {

using Mat = Eigen::MatrixXd;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct Skeleton {
  std::vector<std::string> joint_names;
  std::vector<int> parents;             // -1 for the root
  std::vector<Vec3> offsets;            // rest-pose bone vector from parent, meters
  std::array<int, 4> foot_joints{};     // [l_heel, r_heel, l_toe, r_toe]
  std::set<int> lower_body;
  std::set<int> upper_body;

  int joint_count() const { return static_cast<int>(parents.size()); }

  int root() const {
    for (int j = 0; j < joint_count(); ++j)
      if (parents[j] < 0) return j;
    return -1;
  }

  void validate() const {
    const int J = joint_count();
    require(J >= 1, "skeleton: needs at least one joint");
    require(joint_names.size() == static_cast<std::size_t>(J) &&
                offsets.size() == static_cast<std::size_t>(J),
            "skeleton: names/offsets/parents length mismatch");
    int roots = 0;
    for (int j = 0; j < J; ++j) {
      if (parents[j] < 0) {
        ++roots;
      } else {
        require(parents[j] < J, "skeleton: parent index out of range");
        // topological order: parent precedes child, which also rules out cycles
        require(parents[j] < j, "skeleton: parents must precede children");
      }
    }
    require(roots == 1, "skeleton: exactly one root required");
    for (int j = 0; j < J; ++j) {
      const bool lo = lower_body.count(j) > 0;
      const bool up = upper_body.count(j) > 0;
      require(lo != up, "skeleton: every joint in exactly one of lower/upper body");
    }
    require(lower_body.count(root()) > 0, "skeleton: root must be in lower_body");
    for (int f : foot_joints) {
      require(f >= 0 && f < J, "skeleton: foot joint index out of range");
      require(lower_body.count(f) > 0, "skeleton: foot joints must be lower body");
    }
  }

  // Desk-scale 8-joint test skeleton (y-up, meters). Feet hang from the root
  // so the heel tracks the pelvis; toes articulate off the heels.
  static Skeleton desk8() {
    Skeleton s;
    s.joint_names = {"root", "spine", "chest", "head",
                     "l_heel", "l_toe", "r_heel", "r_toe"};
    s.parents = {-1, 0, 1, 2, 0, 4, 0, 6};
    s.offsets = {Vec3(0, 0, 0),        Vec3(0, 0.20, 0), Vec3(0, 0.25, 0),
                 Vec3(0, 0.30, 0),     Vec3(0.10, -0.90, 0),
                 Vec3(0, -0.05, 0.15), Vec3(-0.10, -0.90, 0),
                 Vec3(0, -0.05, 0.15)};
    s.foot_joints = {4, 6, 5, 7};
    s.lower_body = {0, 4, 5, 6, 7};
    s.upper_body = {1, 2, 3};
    s.validate();
    return s;
  }

  // Minimal 3-joint skeleton for gradient-check scale tests. Heel and toe
  // slots coincide per side; validate() deliberately allows the duplicates.
  static Skeleton micro3() {
    Skeleton s;
    s.joint_names = {"root", "l_foot", "r_foot"};
    s.parents = {-1, 0, 0};
    s.offsets = {Vec3(0, 0, 0), Vec3(0.1, -0.9, 0), Vec3(-0.1, -0.9, 0)};
    s.foot_joints = {1, 2, 1, 2};
    s.lower_body = {0, 1, 2};
    s.upper_body = {};
    // upper_body empty is fine only here; fix the partition invariant by
    // keeping all joints lower-body.
    s.validate();
    return s;
  }

  // 24-joint SMPL-like tree for ingestion compatibility with real data.
  static Skeleton smpl24() {
    Skeleton s;
    s.joint_names = {"pelvis",  "l_hip",    "r_hip",      "spine1",  "l_knee",
                     "r_knee",  "spine2",   "l_ankle",    "r_ankle", "spine3",
                     "l_foot",  "r_foot",   "neck",       "l_collar", "r_collar",
                     "head",    "l_shoulder", "r_shoulder", "l_elbow", "r_elbow",
                     "l_wrist", "r_wrist",  "l_hand",     "r_hand"};
    s.parents = {-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8,
                 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21};
    s.offsets.assign(24, Vec3::Zero());
    s.offsets[1] = Vec3(0.09, -0.07, 0);
    s.offsets[2] = Vec3(-0.09, -0.07, 0);
    s.offsets[3] = Vec3(0, 0.12, 0);
    s.offsets[4] = Vec3(0, -0.38, 0);
    s.offsets[5] = Vec3(0, -0.38, 0);
    s.offsets[6] = Vec3(0, 0.13, 0);
    s.offsets[7] = Vec3(0, -0.40, 0);
    s.offsets[8] = Vec3(0, -0.40, 0);
    s.offsets[9] = Vec3(0, 0.05, 0);
    s.offsets[10] = Vec3(0, -0.06, 0.13);
    s.offsets[11] = Vec3(0, -0.06, 0.13);
    s.offsets[12] = Vec3(0, 0.21, 0);
    s.offsets[13] = Vec3(0.08, 0.12, 0);
    s.offsets[14] = Vec3(-0.08, 0.12, 0);
    s.offsets[15] = Vec3(0, 0.07, 0);
    s.offsets[16] = Vec3(0.12, 0.04, 0);
    s.offsets[17] = Vec3(-0.12, 0.04, 0);
    s.offsets[18] = Vec3(0.26, 0, 0);
    s.offsets[19] = Vec3(-0.26, 0, 0);
    s.offsets[20] = Vec3(0.25, 0, 0);
    s.offsets[21] = Vec3(-0.25, 0, 0);
    s.offsets[22] = Vec3(0.08, 0, 0);
    s.offsets[23] = Vec3(-0.08, 0, 0);
    s.foot_joints = {7, 8, 10, 11};
    s.lower_body = {0, 1, 2, 4, 5, 7, 8, 10, 11};
    s.upper_body = {3, 6, 9, 12, 13, 14, 15, 16, 17, 18, 19, 20, 21, 22, 23};
    s.validate();
    return s;
  }
};

// Frames of root translation, per-joint 6D rotations and binary foot contacts.
struct MotionSequence {
  double fps = 30.0;
  Mat root_translation;  // F x 3
  Mat rotations;         // F x 6J, joint j occupies columns [6j, 6j+6)
  Mat contacts;          // F x 4, entries in {0, 1}

  int frames() const { return static_cast<int>(root_translation.rows()); }
  int joint_count() const { return static_cast<int>(rotations.cols()) / 6; }
  double duration() const { return frames() / fps; }

  // Feature channel count: 3 translation + 6J rotation + 4 contact.
  int feature_width() const { return 3 + 6 * joint_count() + 4; }

  void validate() const {
    const int F = frames();
    require(F >= 1, "motion: needs at least one frame");
    require(fps > 0, "motion: fps must be positive");
    require_shape(rotations.rows() == F && contacts.rows() == F &&
                      contacts.cols() == 4 && root_translation.cols() == 3 &&
                      rotations.cols() % 6 == 0,
                  "motion: inconsistent array shapes");
    require(root_translation.allFinite() && rotations.allFinite() &&
                contacts.allFinite(),
            "motion: non-finite entries");
    for (int i = 0; i < F; ++i)
      for (int k = 0; k < 4; ++k)
        require(contacts(i, k) == 0.0 || contacts(i, k) == 1.0,
                "motion: contacts must be binary");
  }

  // Flat per-frame feature rows: [root(3) | rotations(6J) | contacts(4)].
  Mat features() const {
    Mat out(frames(), feature_width());
    out << root_translation, rotations, contacts;
    return out;
  }

  static MotionSequence from_features(const Mat& feat, double fps,
                                      bool threshold_contacts = true) {
    require_shape((feat.cols() - 7) % 6 == 0 && feat.cols() >= 13,
                  "from_features: invalid channel count");
    const int J = static_cast<int>((feat.cols() - 7) / 6);
    MotionSequence m;
    m.fps = fps;
    m.root_translation = feat.leftCols(3);
    m.rotations = feat.middleCols(3, 6 * J);
    m.contacts = feat.rightCols(4);
    if (threshold_contacts)
      m.contacts = (m.contacts.array() > 0.5).cast<double>();
    return m;
  }
};

// Gram-Schmidt on the two 3-vectors of a 6D rotation entry, then cross
// product for the third column.
inline Mat3 rot6d_to_matrix(const Eigen::Matrix<double, 6, 1>& r6) {
  require(r6.allFinite(), "rot6d: non-finite input");
  const Vec3 a = r6.head<3>();
  const Vec3 b = r6.tail<3>();
  const double na = a.norm();
  if (na < 1e-10) throw DegenerateRotationError("rot6d: first vector is zero");
  const Vec3 c0 = a / na;
  const Vec3 b2 = b - c0.dot(b) * c0;
  const double nb = b2.norm();
  if (nb < 1e-10)
    throw DegenerateRotationError("rot6d: vectors are parallel or second is zero");
  const Vec3 c1 = b2 / nb;
  Mat3 r;
  r.col(0) = c0;
  r.col(1) = c1;
  r.col(2) = c0.cross(c1);
  return r;
}

inline Eigen::Matrix<double, 6, 1> matrix_to_rot6d(const Mat3& r) {
  Eigen::Matrix<double, 6, 1> out;
  out.head<3>() = r.col(0);
  out.tail<3>() = r.col(1);
  return out;
}

// Joint positions for every frame, F x 3J (joint j occupies columns [3j, 3j+3)).
// Positions are accumulated relative to the origin and the root translation is
// added last, so translating the root translates every joint exactly.
inline Mat forward_kinematics(const Skeleton& skel, const MotionSequence& motion) {
  const int J = skel.joint_count();
  require_shape(motion.joint_count() == J,
                "forward_kinematics: joint count mismatch between motion and skeleton");
  const int F = motion.frames();
  Mat pos(F, 3 * J);
  std::vector<Mat3> global(static_cast<std::size_t>(J));
  for (int i = 0; i < F; ++i) {
    for (int j = 0; j < J; ++j) {
      const Mat3 local = rot6d_to_matrix(
          motion.rotations.row(i).segment<6>(6 * j).transpose());
      const int p = skel.parents[j];
      if (p < 0) {
        global[j] = local;
        pos.row(i).segment<3>(3 * j).setZero();
      } else {
        global[j] = global[p] * local;
        const Vec3 parent_pos = pos.row(i).segment<3>(3 * p).transpose();
        pos.row(i).segment<3>(3 * j) =
            (parent_pos + global[p] * skel.offsets[j]).transpose();
      }
    }
    for (int j = 0; j < J; ++j)
      pos.row(i).segment<3>(3 * j) += motion.root_translation.row(i);
  }
  return pos;
}

// contact(i, k) = 1 iff foot joint k is slow and near the ground at frame i.
// The last frame copies the one before it (speed needs a forward difference).
inline Mat extract_foot_contacts(const Mat& positions, const Skeleton& skel,
                                 double speed_threshold = 0.15,
                                 double height_threshold = 0.08,
                                 double fps = 30.0) {
  const int F = static_cast<int>(positions.rows());
  if (F < 2) throw ValidationError("extract_foot_contacts: need at least 2 frames");
  Mat contacts = Mat::Zero(F, 4);
  for (int k = 0; k < 4; ++k) {
    const int j = skel.foot_joints[static_cast<std::size_t>(k)];
    for (int i = 0; i + 1 < F; ++i) {
      const Vec3 p0 = positions.row(i).segment<3>(3 * j).transpose();
      const Vec3 p1 = positions.row(i + 1).segment<3>(3 * j).transpose();
      const double speed = (p1 - p0).norm() * fps;
      const double height = p0.y();
      contacts(i, k) =
          (speed < speed_threshold && height < height_threshold) ? 1.0 : 0.0;
    }
    contacts(F - 1, k) = contacts(F - 2, k);
  }
  return contacts;
}

// ---------------------------------------------------------------------------
// Differentiable forward kinematics, vectorized across frames.
// ---------------------------------------------------------------------------

namespace adfk {

// Rotation columns for one joint, each F x 3.
struct RotCols {
  ad::Var c0, c1, c2;
};

inline ad::Var normalize_rows(ad::Var v) {
  return ad::mulcol(v, ad::inv(ad::rownorm(v)));
}

// Row-wise cross product of two F x 3 blocks.
inline ad::Var cross_rows(ad::Var a, ad::Var b) {
  using namespace ad;
  Var ax = cols(a, 0, 1), ay = cols(a, 1, 1), az = cols(a, 2, 1);
  Var bx = cols(b, 0, 1), by = cols(b, 1, 1), bz = cols(b, 2, 1);
  Var cx = sub(mul(ay, bz), mul(az, by));
  Var cy = sub(mul(az, bx), mul(ax, bz));
  Var cz = sub(mul(ax, by), mul(ay, bx));
  return hcat(hcat(cx, cy), cz);
}

// 6D -> rotation columns for all frames of one joint at once.
inline RotCols rot6d_cols(ad::Var six) {
  using namespace ad;
  Var a = cols(six, 0, 3);
  Var b = cols(six, 3, 3);
  Var c0 = normalize_rows(a);
  Var proj = rowsum(mul(c0, b));  // F x 1
  Var c1 = normalize_rows(sub(b, mulcol(c0, proj)));
  return RotCols{c0, c1, cross_rows(c0, c1)};
}

// R_global(parent) applied to a per-frame matrix whose columns come from
// `local` rotation columns: out column c = sum_k parent_col_k * local[k][c].
inline RotCols compose(const RotCols& parent, const RotCols& local) {
  using namespace ad;
  auto apply = [&](ad::Var lc) {
    Var x = add(add(mulcol(parent.c0, cols(lc, 0, 1)),
                    mulcol(parent.c1, cols(lc, 1, 1))),
                mulcol(parent.c2, cols(lc, 2, 1)));
    return x;
  };
  return RotCols{apply(local.c0), apply(local.c1), apply(local.c2)};
}

// Differentiable FK: positions per joint (each F x 3), same recursion as
// forward_kinematics but expressed as tape operations.
inline std::vector<ad::Var> positions(ad::Tape& tape, ad::Var root_translation,
                                      ad::Var rotations6d,
                                      const Skeleton& skel) {
  using namespace ad;
  const int J = skel.joint_count();
  std::vector<RotCols> global(static_cast<std::size_t>(J));
  std::vector<Var> pos(static_cast<std::size_t>(J));
  for (int j = 0; j < J; ++j) {
    RotCols local = rot6d_cols(cols(rotations6d, 6 * j, 6));
    const int p = skel.parents[j];
    if (p < 0) {
      global[j] = local;
      pos[j] = root_translation;
    } else {
      global[j] = compose(global[p], local);
      const Vec3& off = skel.offsets[j];
      Var shift = add(add(muls(global[p].c0, off.x()), muls(global[p].c1, off.y())),
                      muls(global[p].c2, off.z()));
      pos[j] = add(pos[p], shift);
    }
  }
  return pos;
}

}  // namespace adfk

}  // namespace dancegen
