#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "dancegen/datagen.hpp"
#include "dancegen/metrics.hpp"

using namespace dancegen;

TEST_CASE("synth_clip is deterministic in its arguments") {
  const ClipRecord a = synth_clip(2, 120.0, 4.0, 30.0, 99);
  const ClipRecord b = synth_clip(2, 120.0, 4.0, 30.0, 99);
  CHECK((a.motion.features() - b.motion.features()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.audio.features - b.audio.features).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.audio.beat_times == b.audio.beat_times);
}

TEST_CASE("clips pass their invariants and carry at least two beats") {
  for (int s = 1; s <= 4; ++s) {
    const ClipRecord c = synth_clip(s, 100.0, 3.0, 30.0, 7);
    CHECK_NOTHROW(c.validate());
    CHECK(c.audio.beat_times.size() >= 2);
  }
}

TEST_CASE("beat times at 120 bpm are spaced half a second") {
  const ClipRecord c = synth_clip(1, 120.0, 4.0, 30.0, 5);
  REQUIRE(c.audio.beat_times.size() == 8);
  for (std::size_t i = 1; i < c.audio.beat_times.size(); ++i)
    CHECK(c.audio.beat_times[i] - c.audio.beat_times[i - 1] ==
          doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("styles produce separated geometric centroids") {
  const Skeleton skel = Skeleton::desk8();
  auto centroid = [&](int style) {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(kGeometricFeatureCount);
    for (int k = 0; k < 4; ++k)
      acc += geometric_features(synth_clip(style, 110.0, 4.0, 30.0, 50 + k).motion,
                                skel)
                 .values;
    return (acc / 4.0).eval();
  };
  CHECK((centroid(1) - centroid(2)).norm() > 0.0);
}

TEST_CASE("invalid style ids are rejected") {
  CHECK_THROWS_AS(synth_clip(0, 120.0, 2.0, 30.0, 1), UnknownStyleError);
  CHECK_THROWS_AS(synth_clip(11, 120.0, 2.0, 30.0, 1), UnknownStyleError);
}

TEST_CASE("window slicing reproduces the documented counts") {
  auto count = [](double dur, double win, double stride) {
    const ClipRecord c = synth_clip(1, 120.0, dur, 30.0, 3);
    return slice_windows(c, win, stride).windows.size();
  };
  CHECK(count(13.0, 5.0, 0.5) == 17);
  CHECK(count(5.0, 5.0, 1.0) == 1);
  CHECK(count(5.0, 5.0, 2.5) == 1);
  CHECK(count(7.0, 5.0, 2.5) == 1);
}

TEST_CASE("clips shorter than the window flag too_short with no windows") {
  const ClipRecord c = synth_clip(1, 120.0, 3.0, 30.0, 3);
  const SliceResult r = slice_windows(c, 5.0, 0.5);
  CHECK(r.too_short);
  CHECK(r.windows.empty());
}

TEST_CASE("window count matches a brute-force enumeration on random triples") {
  std::mt19937_64 gen(123);
  std::uniform_int_distribution<int> dur_d(40, 400), win_d(10, 40), str_d(2, 40);
  const double fps = 10.0;  // keep clips cheap to synthesize
  for (int trial = 0; trial < 25; ++trial) {
    const int F = dur_d(gen);
    int win = win_d(gen);
    if (win > F) win = F;
    const int stride = str_d(gen);
    const ClipRecord c = synth_clip(1, 120.0, F / fps, fps, 17);
    const SliceResult r = slice_windows(c, win / fps, stride / fps);
    int expect = 0;
    for (int i0 = 0; i0 + win <= F; i0 += stride) ++expect;
    CHECK(static_cast<int>(r.windows.size()) == expect);
  }
}

TEST_CASE("windows are congruent slices with re-based beats") {
  const ClipRecord c = synth_clip(2, 120.0, 6.0, 30.0, 9);
  const SliceResult r = slice_windows(c, 2.0, 1.0);
  REQUIRE(r.windows.size() == 5);
  const ClipRecord& w = r.windows[2];  // starts at 2.0 s
  CHECK(w.motion.frames() == 60);
  CHECK((w.motion.rotations - c.motion.rotations.middleRows(60, 60))
            .cwiseAbs()
            .maxCoeff() == 0.0);
  CHECK((w.audio.features - c.audio.features.middleRows(60, 60))
            .cwiseAbs()
            .maxCoeff() == 0.0);
  for (double b : w.audio.beat_times) {
    CHECK(b >= 0.0);
    CHECK(b < 2.0);
  }
  CHECK_NOTHROW(w.validate());
}

TEST_CASE("corpus generation is reproducible and splits deterministically") {
  CorpusManifest ma, mb;
  const auto a = synth_corpus(2, 5, 2.0, 30.0, 77, &ma);
  const auto b = synth_corpus(2, 5, 2.0, 30.0, 77, &mb);
  REQUIRE(a.size() == 10);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK((a[i].motion.features() - b[i].motion.features()).cwiseAbs().maxCoeff() ==
          0.0);
    CHECK(ma.clips[i].path == mb.clips[i].path);
    CHECK(ma.clips[i].split == mb.clips[i].split);
  }
  // every fourth clip of a style is held out
  int test_count = 0;
  for (const auto& e : ma.clips) test_count += e.split == "test" ? 1 : 0;
  CHECK(test_count == 2);
}
