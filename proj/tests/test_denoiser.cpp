#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "dancegen/denoiser.hpp"
#include "dancegen/io.hpp"

using namespace dancegen;
using ad::Mat;
using ad::Tape;
using ad::Var;

namespace {

Mat randn(int r, int c, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd;
  Mat m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = nd(gen);
  return m;
}

Mat run_sm(const Mat& z, const Mat& s, const Mat& w, const Mat& b, double r) {
  Tape tape;
  Var out = style_modulation(tape.leaf(z), tape.leaf(s), tape.leaf(w),
                             tape.leaf(b), r);
  return tape.value(out);
}

}  // namespace

TEST_CASE("style modulation arithmetic oracle: [3,4] with gain [5,5]") {
  Mat z(1, 2);
  z << 3, 4;
  Mat s = Mat::Zero(1, 3);
  Mat w = Mat::Zero(3, 2);
  Mat b(1, 2);
  b << 5, 5;  // FC(s) = [5,5]
  const Mat out = run_sm(z, s, w, b, 1.0);
  CHECK(std::abs(out(0, 0) - 3.0) < 1e-12);
  CHECK(std::abs(out(0, 1) - 4.0) < 1e-12);
}

TEST_CASE("style modulation cancels on unit rows with gain r") {
  const double r = 2.5;
  Mat z(2, 2);
  z << 1, 0, 0.6, 0.8;  // unit-norm rows
  Mat s = Mat::Zero(1, 2);
  Mat w = Mat::Zero(2, 2);
  Mat b = Mat::Constant(1, 2, r);  // FC(s) = r * ones
  const Mat out = run_sm(z, s, w, b, r);
  CHECK((out - z).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("style modulation is invariant to positive scaling of rows") {
  const Mat z = randn(5, 8, 1);
  const Mat s = randn(1, 4, 2);
  const Mat w = randn(4, 8, 3);
  const Mat b = randn(1, 8, 4);
  const Mat base = run_sm(z, s, w, b, 1.3);
  for (double c : {0.5, 3.7, 1000.0}) {
    const Mat scaled = run_sm(c * z, s, w, b, 1.3);
    CHECK((scaled - base).cwiseAbs().maxCoeff() < 1e-11);
  }
}

TEST_CASE("style modulation survives a zero row via the norm guard") {
  Mat z = Mat::Zero(2, 3);
  z(1, 0) = 1.0;
  const Mat out = run_sm(z, Mat::Zero(1, 2), Mat::Zero(2, 3),
                         Mat::Ones(1, 3), 1.0);
  CHECK(out.allFinite());
  CHECK(out.row(0).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("film reduces to identity and pure shift") {
  const Mat z = randn(4, 6, 5);
  const Mat t = randn(1, 3, 6);
  Tape tape;
  auto V = [&](const Mat& m) { return tape.leaf(m); };

  SUBCASE("zero scale and shift parameters pass z through") {
    Var out = film(V(z), V(t), V(Mat::Zero(3, 6)), V(Mat::Zero(1, 6)),
                   V(Mat::Zero(3, 6)), V(Mat::Zero(1, 6)));
    CHECK((tape.value(out) - z).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("zero scale with constant shift adds the shift") {
    const Mat b = randn(1, 6, 7);
    Var out = film(V(z), V(t), V(Mat::Zero(3, 6)), V(Mat::Zero(1, 6)),
                   V(Mat::Zero(3, 6)), V(b));
    CHECK((tape.value(out) - (z.rowwise() + b.row(0))).cwiseAbs().maxCoeff() <
          1e-15);
  }

  SUBCASE("random parameters match an elementwise oracle") {
    const Mat sw = randn(3, 6, 8), sb = randn(1, 6, 9);
    const Mat hw = randn(3, 6, 10), hb = randn(1, 6, 11);
    Var out = film(V(z), V(t), V(sw), V(sb), V(hw), V(hb));
    const Eigen::RowVectorXd scale = t * sw + sb;
    const Eigen::RowVectorXd shift = t * hw + hb;
    Mat expect(4, 6);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 6; ++j)
        expect(i, j) = z(i, j) * (1.0 + scale(j)) + shift(j);
    CHECK((tape.value(out) - expect).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("denoise honors the shape contract and is a pure function") {
  const DenoiserConfig cfg = DenoiserConfig::micro();
  const ParamStore params = init_params(cfg, 1);
  const Mat x = randn(6, cfg.feature_width(), 20);
  const Mat music = randn(6, cfg.d_c, 21);
  Eigen::VectorXd s = Eigen::VectorXd::Unit(cfg.d_s, 1);

  const Mat a = denoise(params, x, 3, &music, &s, cfg);
  CHECK(a.rows() == x.rows());
  CHECK(a.cols() == x.cols());
  const Mat b = denoise(params, x, 3, &music, &s, cfg);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);

  SUBCASE("null music routes through the learned token and changes the output") {
    const Mat uncond = denoise(params, x, 3, nullptr, &s, cfg);
    CHECK((uncond - a).cwiseAbs().maxCoeff() > 0.0);
  }
  SUBCASE("null style uses the learned embedding") {
    const Mat nostyle = denoise(params, x, 3, &music, nullptr, cfg);
    CHECK(nostyle.allFinite());
    CHECK((nostyle - a).cwiseAbs().maxCoeff() > 0.0);
  }
}

TEST_CASE("denoise rejects overlong sequences and bad timesteps") {
  const DenoiserConfig cfg = DenoiserConfig::micro();
  const ParamStore params = init_params(cfg, 1);
  const Mat x = randn(cfg.max_frames + 1, cfg.feature_width(), 22);
  CHECK_THROWS_AS(denoise(params, x, 3, nullptr, nullptr, cfg),
                  ValidationError);
  const Mat ok = randn(4, cfg.feature_width(), 23);
  CHECK_THROWS_AS(denoise(params, ok, 0, nullptr, nullptr, cfg),
                  ValidationError);
}

TEST_CASE("parameter initialization is deterministic and config-shaped") {
  const DenoiserConfig cfg = DenoiserConfig::micro();
  const ParamStore a = init_params(cfg, 5);
  const ParamStore b = init_params(cfg, 5);
  REQUIRE(a.size() == b.size());
  for (const auto& [name, value] : a) {
    REQUIRE(b.count(name) == 1);
    CHECK((value - b.at(name)).cwiseAbs().maxCoeff() == 0.0);
    CHECK(value.allFinite());
  }
  CHECK(a.count("in_proj.W") == 1);
  CHECK(a.at("in_proj.W").rows() == cfg.feature_width());
  CHECK(a.at("null_style").cols() == cfg.d_s);
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  const DenoiserConfig cfg = DenoiserConfig::micro();
  const ParamStore params = init_params(cfg, 9);
  const auto path = std::filesystem::temp_directory_path() / "dg_ckpt_test.json";
  io::save_checkpoint(params, cfg, path);
  DenoiserConfig loaded_cfg;
  const ParamStore loaded = io::load_checkpoint(path, loaded_cfg);
  REQUIRE(loaded.size() == params.size());
  for (const auto& [name, value] : params) {
    const Mat& got = loaded.at(name);
    REQUIRE(got.rows() == value.rows());
    REQUIRE(got.cols() == value.cols());
    for (int i = 0; i < value.rows(); ++i)
      for (int j = 0; j < value.cols(); ++j)
        CHECK(got(i, j) == value(i, j));
  }
  CHECK(loaded_cfg.d_model == cfg.d_model);
  CHECK(loaded_cfg.max_frames == cfg.max_frames);
  std::filesystem::remove(path);
}

TEST_CASE("config presets resolve and validate") {
  CHECK(DenoiserConfig::preset("desk").d_model == 64);
  CHECK(DenoiserConfig::preset("full").d_model == 512);
  CHECK(DenoiserConfig::preset("full").decoder_depth == 8);
  CHECK(DenoiserConfig::preset("full").n_heads == 8);
  CHECK_THROWS_AS(DenoiserConfig::preset("nope"), ValidationError);
  DenoiserConfig bad = DenoiserConfig::micro();
  bad.n_heads = 3;  // does not divide d_model
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}
