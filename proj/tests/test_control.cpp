#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "dancegen/control.hpp"
#include "helpers.hpp"

using namespace dancegen;
namespace tu = testutil;
using Mat = Eigen::MatrixXd;

namespace {

EditTask task_of(EditKind kind, const MotionSequence& known,
                 std::uint64_t seed = 0) {
  EditTask t;
  t.kind = kind;
  t.known_motion = known;
  t.seed = seed;
  return t;
}

}  // namespace

TEST_CASE("mask construction per task") {
  const Skeleton skel = Skeleton::desk8();
  const int J = skel.joint_count();
  const MotionSequence known = tu::random_motion(skel, 150, 1);

  SUBCASE("in-betweening pins the first and last frames") {
    const auto m = build_mask(task_of(EditKind::in_betweening, known), 150, skel);
    CHECK(m.entries.sum() == 2.0 * (J + 1));
    CHECK(m.entries.row(0).sum() == J + 1);
    CHECK(m.entries.row(149).sum() == J + 1);
  }

  SUBCASE("seed motion pins the first two frames") {
    const auto m = build_mask(task_of(EditKind::seed_motion, known), 150, skel);
    CHECK(m.entries.sum() == 2.0 * (J + 1));
    CHECK(m.entries.row(0).sum() == J + 1);
    CHECK(m.entries.row(1).sum() == J + 1);
  }

  SUBCASE("inpainting pins exactly ceil(0.7 F) random rows") {
    const auto m = build_mask(task_of(EditKind::inpainting, known, 4), 150, skel);
    int full_rows = 0;
    for (int i = 0; i < 150; ++i)
      if (m.entries.row(i).sum() == J + 1) ++full_rows;
    CHECK(full_rows == 105);
    CHECK(m.entries.sum() == 105.0 * (J + 1));
    // seeded: same seed same rows, different seed different rows
    const auto m2 = build_mask(task_of(EditKind::inpainting, known, 4), 150, skel);
    CHECK((m.entries - m2.entries).cwiseAbs().maxCoeff() == 0.0);
    const auto m3 = build_mask(task_of(EditKind::inpainting, known, 5), 150, skel);
    CHECK((m.entries - m3.entries).cwiseAbs().maxCoeff() > 0.0);
  }

  SUBCASE("trajectory pins only the root slot") {
    const auto m = build_mask(task_of(EditKind::trajectory, known), 150, skel);
    CHECK(m.entries.col(0).minCoeff() == 1.0);
    CHECK(m.entries.rightCols(J).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("upper-body generation keeps the lower body and root") {
    const auto m = build_mask(task_of(EditKind::upper_body, known), 10, skel);
    CHECK(m.entries.col(0).minCoeff() == 1.0);
    for (int j = 0; j < J; ++j) {
      const double expect = skel.lower_body.count(j) ? 1.0 : 0.0;
      CHECK(m.entries.col(1 + j).minCoeff() == expect);
      CHECK(m.entries.col(1 + j).maxCoeff() == expect);
    }
  }

  SUBCASE("lower-body generation keeps the upper body") {
    const auto m = build_mask(task_of(EditKind::lower_body, known), 10, skel);
    CHECK(m.entries.col(0).maxCoeff() == 0.0);
    for (int j : skel.upper_body) CHECK(m.entries.col(1 + j).minCoeff() == 1.0);
    for (int j : skel.lower_body) CHECK(m.entries.col(1 + j).maxCoeff() == 0.0);
  }

  SUBCASE("masks need at least two frames") {
    CHECK_THROWS_AS(build_mask(task_of(EditKind::trajectory, known), 1, skel),
                    ValidationError);
  }
}

TEST_CASE("channel expansion covers every feature channel exactly once") {
  const Skeleton skel = Skeleton::desk8();
  const int J = skel.joint_count();
  SpatialTemporalMask m;
  m.joints = J;
  m.entries = Mat::Zero(2, J + 1);
  // light up one slot at a time and count raised channels
  int covered = 0;
  for (int s = 0; s < J + 1; ++s) {
    m.entries.setZero();
    m.entries.col(s).setOnes();
    const Mat cm = m.channel_mask(skel);
    CHECK(cm.rows() == 2);
    CHECK(cm.cols() == 3 + 6 * J + 4);
    covered += static_cast<int>(cm.row(0).sum());
  }
  // slots partition translation+rotation channels; contacts are raised once
  // per foot-joint slot, so the total equals D with 4 contact channels counted
  // through their owning slots
  CHECK(covered == 3 + 6 * J + 4);
}

TEST_CASE("contacts inherit their foot joint's slot bit") {
  const Skeleton skel = Skeleton::desk8();
  SpatialTemporalMask m;
  m.joints = skel.joint_count();
  m.entries = Mat::Zero(1, m.joints + 1);
  m.entries(0, 1 + skel.foot_joints[0]) = 1.0;  // left heel slot
  const Mat cm = m.channel_mask(skel);
  const int base = 3 + 6 * m.joints;
  CHECK(cm(0, base + 0) == 1.0);  // left-heel contact channel
  CHECK(cm(0, base + 1) == 0.0);
}

TEST_CASE("masked reverse step recomposition") {
  const Skeleton skel = Skeleton::desk8();
  const NoiseSchedule sched = make_schedule(10);
  std::mt19937_64 gen(3);
  std::normal_distribution<double> nd;
  const int F = 6, D = 3 + 6 * skel.joint_count() + 4;
  auto rnd = [&] {
    Mat m(F, D);
    for (int i = 0; i < F; ++i)
      for (int j = 0; j < D; ++j) m(i, j) = nd(gen);
    return m;
  };
  std::uniform_int_distribution<int> bit(0, 1);

  SUBCASE("all-ones mask returns the known branch exactly") {
    const Mat x0 = rnd(), pred = rnd(), ek = rnd(), eu = rnd();
    const Mat out = masked_reverse_step(x0, Mat::Ones(F, D), 5, pred, sched, ek, eu);
    const Mat known =
        std::sqrt(sched.alpha_bar(4)) * x0 + sched.noise_coeff(4) * ek;
    CHECK((out - known).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("all-zeros mask returns the unknown branch exactly") {
    const Mat x0 = rnd(), pred = rnd(), ek = rnd(), eu = rnd();
    const Mat out = masked_reverse_step(x0, Mat::Zero(F, D), 5, pred, sched, ek, eu);
    const Mat unknown =
        std::sqrt(sched.alpha_bar(4)) * pred + sched.noise_coeff(4) * eu;
    CHECK((out - unknown).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("random masks match the elementwise brute-force oracle") {
    for (int trial = 0; trial < 100; ++trial) {
      const Mat x0 = rnd(), pred = rnd(), ek = rnd(), eu = rnd();
      Mat mask(F, D);
      for (int i = 0; i < F; ++i)
        for (int j = 0; j < D; ++j) mask(i, j) = bit(gen);
      const int t = 1 + trial % sched.T;
      const Mat out = masked_reverse_step(x0, mask, t, pred, sched, ek, eu);
      const double sab = std::sqrt(sched.alpha_bar(t - 1));
      const double nc = sched.noise_coeff(t - 1);
      for (int i = 0; i < F; ++i)
        for (int j = 0; j < D; ++j) {
          const double want = mask(i, j) == 1.0
                                  ? sab * x0(i, j) + nc * ek(i, j)
                                  : sab * pred(i, j) + nc * eu(i, j);
          CHECK(out(i, j) == want);
        }
    }
  }
}

namespace {

struct EditFixture {
  Skeleton skel = Skeleton::desk8();
  DenoiserConfig cfg;
  NoiseSchedule sched = make_schedule(6);
  ParamStore params;
  ClipRecord clip;
  StylePrompt style;

  EditFixture() {
    cfg = DenoiserConfig::micro();
    cfg.joints = skel.joint_count();
    cfg.d_c = 16;
    cfg.max_frames = 40;
    params = init_params(cfg, 8);
    clip = synth_clip(1, 120.0, 1.0, 30.0, 21, skel);
    style.embedding = Eigen::VectorXd::Unit(cfg.d_s, 0);
  }
};

}  // namespace

TEST_CASE("edit satisfies the known-channel exactness contract per task") {
  EditFixture fx;
  const Mat known_feat = fx.clip.motion.features();
  for (EditKind kind : {EditKind::trajectory, EditKind::seed_motion,
                        EditKind::in_betweening, EditKind::inpainting,
                        EditKind::upper_body, EditKind::lower_body}) {
    CAPTURE(to_string(kind));
    EditTask task = task_of(kind, fx.clip.motion, 5);
    SpatialTemporalMask mask;
    const MotionSequence out = edit(task, fx.clip.audio, fx.style, 1.0,
                                    fx.params, fx.sched, fx.cfg, fx.skel, 77,
                                    &mask);
    const Mat cm = mask.channel_mask(fx.skel);
    const Mat diff = (out.features() - known_feat).cwiseProduct(cm);
    CHECK(diff.cwiseAbs().maxCoeff() == 0.0);
    // and the unknown channels were actually generated, not copied
    const Mat inv = Mat::Ones(cm.rows(), cm.cols()) - cm;
    CHECK(((out.features() - known_feat).cwiseProduct(inv)).cwiseAbs().maxCoeff() >
          0.0);
  }
}

TEST_CASE("an all-ones mask reproduces the known motion") {
  EditFixture fx;
  SampleConstraint constraint;
  constraint.known = fx.clip.motion.features();
  constraint.channel_mask =
      Mat::Ones(constraint.known.rows(), constraint.known.cols());
  Rng rng(3);
  const SampleResult r =
      sample_features(fx.params, fx.cfg, fx.sched, &fx.clip.audio.features,
                      &fx.style.embedding, 1.0, fx.clip.motion.frames(), rng,
                      &constraint);
  CHECK((r.features - constraint.known).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("an all-zeros mask is bitwise identical to vanilla sampling") {
  EditFixture fx;
  SampleConstraint constraint;
  constraint.known = fx.clip.motion.features();
  constraint.channel_mask =
      Mat::Zero(constraint.known.rows(), constraint.known.cols());
  Rng ra(41), rb(41);
  const SampleResult with_mask =
      sample_features(fx.params, fx.cfg, fx.sched, &fx.clip.audio.features,
                      &fx.style.embedding, 1.0, fx.clip.motion.frames(), ra,
                      &constraint);
  const SampleResult vanilla =
      sample_features(fx.params, fx.cfg, fx.sched, &fx.clip.audio.features,
                      &fx.style.embedding, 1.0, fx.clip.motion.frames(), rb);
  CHECK((with_mask.features - vanilla.features).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("trajectory edits reproduce the given root path exactly") {
  EditFixture fx;
  EditTask task = task_of(EditKind::trajectory, fx.clip.motion);
  const MotionSequence out = edit(task, fx.clip.audio, fx.style, 1.0, fx.params,
                                  fx.sched, fx.cfg, fx.skel, 13);
  CHECK((out.root_translation - fx.clip.motion.root_translation)
            .cwiseAbs()
            .maxCoeff() == 0.0);
}

TEST_CASE("stitching: identity, midpoint average and frame arithmetic") {
  const Skeleton skel = Skeleton::desk8();

  SUBCASE("two 5 s slices overlapping 2.5 s make 225 frames") {
    const MotionSequence a = tu::random_motion(skel, 150, 1);
    const MotionSequence b = tu::random_motion(skel, 150, 2);
    const MotionSequence out = stitch_long({a, b}, 2.5);
    CHECK(out.frames() == 225);
  }

  SUBCASE("slices cut from one motion reassemble it exactly") {
    const MotionSequence whole = tu::random_motion(skel, 225, 3);
    auto cut = [&](int start) {
      MotionSequence s;
      s.fps = whole.fps;
      s.root_translation = whole.root_translation.middleRows(start, 150);
      s.rotations = whole.rotations.middleRows(start, 150);
      s.contacts = whole.contacts.middleRows(start, 150);
      return s;
    };
    const MotionSequence out = stitch_long({cut(0), cut(75)}, 75.0 / 30.0);
    CHECK((out.features() - whole.features()).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("the overlap midpoint is the exact average") {
    const MotionSequence a = tu::random_motion(skel, 150, 4);
    const MotionSequence b = tu::random_motion(skel, 150, 5);
    const MotionSequence out = stitch_long({a, b}, 2.5);
    // overlap rows are output rows 75..149; frame 75+37 has lambda = 0.5
    const Mat fa = a.features(), fb = b.features(), fo = out.features();
    const Eigen::RowVectorXd want = 0.5 * (fa.row(75 + 37) + fb.row(37));
    CHECK((fo.row(75 + 37) - want).cwiseAbs().maxCoeff() < 1e-15);
  }

  SUBCASE("overlap output stays within the per-channel envelope") {
    const MotionSequence a = tu::random_motion(skel, 150, 6);
    const MotionSequence b = tu::random_motion(skel, 150, 7);
    const Mat fa = a.features(), fb = b.features();
    const Mat fo = stitch_long({a, b}, 2.5).features();
    for (int p = 0; p < 75; ++p) {
      const auto lo = fa.row(75 + p).cwiseMin(fb.row(p));
      const auto hi = fa.row(75 + p).cwiseMax(fb.row(p));
      CHECK(((fo.row(75 + p) - lo).minCoeff()) >= 0.0);
      CHECK(((hi - fo.row(75 + p)).minCoeff()) >= 0.0);
    }
  }

  SUBCASE("blend weights ramp linearly and sum to one") {
    // constant slices expose the weights directly
    MotionSequence a = tu::random_motion(skel, 150, 8);
    MotionSequence b = a;
    a.root_translation.col(0).setConstant(1.0);
    b.root_translation.col(0).setConstant(3.0);
    const Mat fo = stitch_long({a, b}, 2.5).features();
    for (int p = 0; p < 75; ++p) {
      const double lam = 1.0 - p / 74.0;
      CHECK(fo(75 + p, 0) ==
            doctest::Approx(lam * 1.0 + (1.0 - lam) * 3.0).epsilon(1e-12));
    }
  }

  SUBCASE("inconsistent inputs are rejected") {
    MotionSequence a = tu::random_motion(skel, 150, 9);
    MotionSequence b = tu::random_motion(skel, 150, 10);
    b.fps = 60.0;
    CHECK_THROWS_AS(stitch_long({a, b}, 2.5), ValidationError);
    const MotionSequence c = tu::random_motion(skel, 30, 11);
    CHECK_THROWS_AS(stitch_long({a, c}, 2.5),
                    ValidationError);  // slice shorter than overlap
  }
}
