#pragma once

// File formats: motion / audio / clip JSON, embedding files, corpus
// manifests, parameter checkpoints, metric reports, edit task specs and a
// stick-figure SVG renderer. All numbers are decimal floats; nlohmann::json
// emits shortest round-trip representations, so double precision survives a
// save/load cycle bit-exactly.

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dancegen/control.hpp"
#include "dancegen/core/error.hpp"
#include "dancegen/datagen.hpp"
#include "dancegen/denoiser.hpp"
#include "dancegen/diffusion.hpp"
#include "dancegen/metrics.hpp"

namespace dancegen::io {

using nlohmann::json;
namespace fs = std::filesystem;

inline constexpr int kCheckpointVersion = 1;

// ---------------------------------------------------------------------------
// Helpers
// ---------------------------------------------------------------------------

inline const json& field(const json& j, const std::string& name) {
  const auto it = j.find(name);
  if (it == j.end())
    throw ParseError("missing field '" + name + "'");
  return *it;
}

inline json load_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return j;
}

inline void save_json(const json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(1) << "\n";
}

inline json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Eigen::MatrixXd matrix_from_json(const json& j, const std::string& name,
                                        int expect_cols = -1) {
  if (!j.is_array()) throw ParseError("field '" + name + "' must be an array");
  const int rows = static_cast<int>(j.size());
  if (rows == 0) return Eigen::MatrixXd(0, std::max(expect_cols, 0));
  if (!j[0].is_array())
    throw ParseError("field '" + name + "' must be a 2-D array");
  const int cols = static_cast<int>(j[0].size());
  if (expect_cols >= 0 && cols != expect_cols)
    throw ParseError("field '" + name + "' has " + std::to_string(cols) +
                     " columns, expected " + std::to_string(expect_cols));
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    if (static_cast<int>(j[i].size()) != cols)
      throw ParseError("field '" + name + "' row " + std::to_string(i) +
                       ": ragged array");
    for (int c = 0; c < cols; ++c) {
      if (!j[i][c].is_number())
        throw ParseError("field '" + name + "' row " + std::to_string(i) +
                         ": non-numeric entry");
      m(i, c) = j[i][c].get<double>();
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Skeleton and motion
// ---------------------------------------------------------------------------

inline json skeleton_to_json(const Skeleton& s) {
  json j;
  j["names"] = s.joint_names;
  j["parents"] = s.parents;
  json offs = json::array();
  for (const Vec3& o : s.offsets) offs.push_back({o.x(), o.y(), o.z()});
  j["offsets"] = std::move(offs);
  j["foot_joints"] = s.foot_joints;
  j["lower_body"] = std::vector<int>(s.lower_body.begin(), s.lower_body.end());
  return j;
}

inline Skeleton skeleton_from_json(const json& j) {
  Skeleton s;
  s.joint_names = field(j, "names").get<std::vector<std::string>>();
  s.parents = field(j, "parents").get<std::vector<int>>();
  for (const auto& o : field(j, "offsets")) {
    if (!o.is_array() || o.size() != 3)
      throw ParseError("field 'offsets': entries must be 3-vectors");
    s.offsets.emplace_back(o[0].get<double>(), o[1].get<double>(),
                           o[2].get<double>());
  }
  const auto fj = field(j, "foot_joints").get<std::vector<int>>();
  if (fj.size() != 4) throw ParseError("field 'foot_joints' must have 4 entries");
  std::copy(fj.begin(), fj.end(), s.foot_joints.begin());
  for (int idx : field(j, "lower_body").get<std::vector<int>>())
    s.lower_body.insert(idx);
  for (int jj = 0; jj < s.joint_count(); ++jj)
    if (s.lower_body.count(jj) == 0) s.upper_body.insert(jj);
  try {
    s.validate();
  } catch (const Error& e) {
    throw ParseError(std::string("invalid skeleton: ") + e.what());
  }
  return s;
}

inline json motion_to_json(const MotionSequence& m, const Skeleton& skel) {
  json j;
  j["fps"] = m.fps;
  j["skeleton"] = skeleton_to_json(skel);
  j["root_translation"] = matrix_to_json(m.root_translation);
  const int J = m.joint_count();
  json rots = json::array();
  for (int i = 0; i < m.frames(); ++i) {
    json frame = json::array();
    for (int jj = 0; jj < J; ++jj) {
      json entry = json::array();
      for (int c = 0; c < 6; ++c) entry.push_back(m.rotations(i, 6 * jj + c));
      frame.push_back(std::move(entry));
    }
    rots.push_back(std::move(frame));
  }
  j["rotations_6d"] = std::move(rots);
  j["contacts"] = matrix_to_json(m.contacts);
  return j;
}

inline MotionSequence motion_from_json(const json& j, Skeleton* skel_out = nullptr) {
  MotionSequence m;
  m.fps = field(j, "fps").get<double>();
  Skeleton skel = skeleton_from_json(field(j, "skeleton"));
  if (skel_out) *skel_out = skel;
  m.root_translation = matrix_from_json(field(j, "root_translation"),
                                        "root_translation", 3);
  const json& rots = field(j, "rotations_6d");
  const int F = static_cast<int>(rots.size());
  const int J = skel.joint_count();
  m.rotations.resize(F, 6 * J);
  for (int i = 0; i < F; ++i) {
    if (static_cast<int>(rots[i].size()) != J)
      throw ParseError("field 'rotations_6d' frame " + std::to_string(i) +
                       ": expected " + std::to_string(J) + " joints");
    for (int jj = 0; jj < J; ++jj) {
      const json& e = rots[i][jj];
      if (!e.is_array() || e.size() != 6)
        throw ParseError("field 'rotations_6d': entries must be 6-vectors");
      for (int c = 0; c < 6; ++c) m.rotations(i, 6 * jj + c) = e[c].get<double>();
    }
  }
  m.contacts = matrix_from_json(field(j, "contacts"), "contacts", 4);
  try {
    m.validate();
  } catch (const Error& e) {
    throw ParseError(std::string("invalid motion: ") + e.what());
  }
  return m;
}

// ---------------------------------------------------------------------------
// Audio, embeddings, clips
// ---------------------------------------------------------------------------

inline json audio_to_json(const AudioCondition& a) {
  json j;
  j["fps"] = a.fps;
  j["bpm"] = a.bpm;
  j["beat_times"] = a.beat_times;
  j["features"] = matrix_to_json(a.features);
  return j;
}

inline AudioCondition audio_from_json(const json& j) {
  AudioCondition a;
  a.fps = field(j, "fps").get<double>();
  a.bpm = field(j, "bpm").get<double>();
  a.beat_times = field(j, "beat_times").get<std::vector<double>>();
  a.features = matrix_from_json(field(j, "features"), "features");
  try {
    a.validate();
  } catch (const Error& e) {
    throw ParseError(std::string("invalid audio: ") + e.what());
  }
  return a;
}

// Embedding JSON: {genre, kind, text, embedding[d_s]}.
inline void save_embedding(const StylePrompt& p, const fs::path& path) {
  json j;
  j["genre"] = p.genre;
  j["kind"] = to_string(p.kind);
  j["text"] = p.text;
  j["embedding"] = std::vector<double>(p.embedding.data(),
                                       p.embedding.data() + p.embedding.size());
  save_json(j, path);
}

inline Eigen::VectorXd load_embedding(const fs::path& path) {
  const json j = load_json(path);
  const auto v = field(j, "embedding").get<std::vector<double>>();
  if (v.empty()) throw ParseError("field 'embedding' is empty");
  return Eigen::Map<const Eigen::VectorXd>(v.data(),
                                           static_cast<int>(v.size()));
}

inline void save_clip(const ClipRecord& clip, const Skeleton& skel,
                      const fs::path& path) {
  json j;
  j["style_id"] = clip.style_id;
  j["seed"] = clip.seed;
  j["motion"] = motion_to_json(clip.motion, skel);
  j["audio"] = audio_to_json(clip.audio);
  save_json(j, path);
}

inline ClipRecord load_clip(const fs::path& path, Skeleton* skel_out = nullptr) {
  const json j = load_json(path);
  ClipRecord clip;
  clip.style_id = field(j, "style_id").get<int>();
  clip.seed = field(j, "seed").get<std::uint64_t>();
  clip.motion = motion_from_json(field(j, "motion"), skel_out);
  clip.audio = audio_from_json(field(j, "audio"));
  try {
    clip.validate();
  } catch (const Error& e) {
    throw ParseError(std::string("invalid clip: ") + e.what());
  }
  return clip;
}

// Loads either a bare Motion JSON or a clip wrapper containing one.
inline MotionSequence load_motion_any(const fs::path& path,
                                      Skeleton* skel_out = nullptr) {
  const json j = load_json(path);
  if (j.contains("motion"))
    return motion_from_json(field(j, "motion"), skel_out);
  return motion_from_json(j, skel_out);
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

inline void save_manifest(const CorpusManifest& m, const fs::path& path) {
  json j;
  j["fps"] = m.fps;
  json clips = json::array();
  for (const auto& e : m.clips) {
    json c;
    c["path"] = e.path;
    c["style_id"] = e.style_id;
    c["split"] = e.split;
    c["bpm"] = e.bpm;
    c["seed"] = e.seed;
    clips.push_back(std::move(c));
  }
  j["clips"] = std::move(clips);
  save_json(j, path);
}

inline CorpusManifest load_manifest(const fs::path& path) {
  const json j = load_json(path);
  CorpusManifest m;
  m.fps = field(j, "fps").get<double>();
  for (const auto& c : field(j, "clips")) {
    ManifestEntry e;
    e.path = field(c, "path").get<std::string>();
    e.style_id = field(c, "style_id").get<int>();
    e.split = field(c, "split").get<std::string>();
    e.bpm = field(c, "bpm").get<double>();
    e.seed = field(c, "seed").get<std::uint64_t>();
    m.clips.push_back(std::move(e));
  }
  return m;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

inline json config_to_json(const DenoiserConfig& c) {
  json j;
  j["d_model"] = c.d_model;
  j["n_heads"] = c.n_heads;
  j["encoder_depth"] = c.encoder_depth;
  j["decoder_depth"] = c.decoder_depth;
  j["d_c"] = c.d_c;
  j["d_s"] = c.d_s;
  j["d_ff"] = c.d_ff;
  j["r"] = c.r;
  j["max_frames"] = c.max_frames;
  j["joints"] = c.joints;
  return j;
}

inline DenoiserConfig config_from_json(const json& j) {
  DenoiserConfig c;
  c.d_model = field(j, "d_model").get<int>();
  c.n_heads = field(j, "n_heads").get<int>();
  c.encoder_depth = field(j, "encoder_depth").get<int>();
  c.decoder_depth = field(j, "decoder_depth").get<int>();
  c.d_c = field(j, "d_c").get<int>();
  c.d_s = field(j, "d_s").get<int>();
  c.d_ff = field(j, "d_ff").get<int>();
  c.r = field(j, "r").get<double>();
  c.max_frames = field(j, "max_frames").get<int>();
  c.joints = field(j, "joints").get<int>();
  c.validate();
  return c;
}

struct TrainerState {
  std::int64_t iteration = 0;
  std::array<std::uint64_t, 4> rng_state{};
  AdamState adam;
};

// Versioned named-array container with a config header; optionally carries
// trainer state so runs can resume deterministically.
inline void save_checkpoint(const ParamStore& params, const DenoiserConfig& cfg,
                            const fs::path& path,
                            const TrainerState* trainer = nullptr) {
  json j;
  j["version"] = kCheckpointVersion;
  j["config"] = config_to_json(cfg);
  json arrays;
  for (const auto& [name, m] : params) {
    json a;
    a["rows"] = m.rows();
    a["cols"] = m.cols();
    json data = json::array();
    for (int i = 0; i < m.rows(); ++i)
      for (int c = 0; c < m.cols(); ++c) data.push_back(m(i, c));
    a["data"] = std::move(data);
    arrays[name] = std::move(a);
  }
  j["params"] = std::move(arrays);
  if (trainer) {
    json t;
    t["iteration"] = trainer->iteration;
    t["rng_state"] = trainer->rng_state;
    t["adam_step"] = trainer->adam.step;
    json moments;
    for (const auto& [name, m] : trainer->adam.m) {
      moments[name]["m"] = matrix_to_json(m);
      moments[name]["v"] = matrix_to_json(trainer->adam.v.at(name));
    }
    t["adam_moments"] = std::move(moments);
    j["trainer"] = std::move(t);
  }
  save_json(j, path);
}

inline ParamStore load_checkpoint(const fs::path& path, DenoiserConfig& cfg,
                                  TrainerState* trainer = nullptr) {
  const json j = load_json(path);
  const int version = field(j, "version").get<int>();
  if (version != kCheckpointVersion)
    throw ParseError("unsupported checkpoint version " + std::to_string(version));
  cfg = config_from_json(field(j, "config"));
  ParamStore params;
  for (const auto& [name, a] : field(j, "params").items()) {
    const int rows = field(a, "rows").get<int>();
    const int cols = field(a, "cols").get<int>();
    const auto data = field(a, "data").get<std::vector<double>>();
    if (static_cast<int>(data.size()) != rows * cols)
      throw ParseError("parameter '" + name + "': data length mismatch");
    Eigen::MatrixXd m(rows, cols);
    int k = 0;
    for (int i = 0; i < rows; ++i)
      for (int c = 0; c < cols; ++c) m(i, c) = data[static_cast<std::size_t>(k++)];
    params[name] = std::move(m);
  }
  if (trainer && j.contains("trainer")) {
    const json& t = j["trainer"];
    trainer->iteration = field(t, "iteration").get<std::int64_t>();
    const auto rs = field(t, "rng_state").get<std::vector<std::uint64_t>>();
    if (rs.size() != 4) throw ParseError("field 'rng_state' must have 4 words");
    std::copy(rs.begin(), rs.end(), trainer->rng_state.begin());
    trainer->adam.step = field(t, "adam_step").get<std::int64_t>();
    for (const auto& [name, mv] : field(t, "adam_moments").items()) {
      trainer->adam.m[name] = matrix_from_json(field(mv, "m"), name + ".m");
      trainer->adam.v[name] = matrix_from_json(field(mv, "v"), name + ".v");
    }
  }
  return params;
}

// ---------------------------------------------------------------------------
// Metric reports, edit task specs, masks
// ---------------------------------------------------------------------------

// Field names mirror the usual reporting columns.
inline json report_to_json(const MetricReport& r) {
  json j;
  j["BeatAlign"] = r.beat_align;
  j["PFC"] = r.pfc;
  j["FID_k"] = r.fid_k;
  j["FID_g"] = r.fid_g;
  j["Div_k"] = r.div_k;
  j["Div_g"] = r.div_g;
  j["n_generated"] = r.n_generated;
  j["n_reference"] = r.n_reference;
  return j;
}

struct EditTaskSpec {
  std::string kind;
  std::string known_motion_path;
  std::optional<double> inpaint_fraction;
  std::uint64_t seed = 0;
  std::string audio_path;   // conditioning for the sampler
  std::string genre;
  std::string prompt_kind = "one_hot";
  std::optional<double> guidance_weight;
};

inline EditTaskSpec load_task_spec(const fs::path& path) {
  const json j = load_json(path);
  EditTaskSpec s;
  s.kind = field(j, "kind").get<std::string>();
  s.known_motion_path = field(j, "known_motion_path").get<std::string>();
  if (j.contains("inpaint_fraction"))
    s.inpaint_fraction = j["inpaint_fraction"].get<double>();
  s.seed = field(j, "seed").get<std::uint64_t>();
  if (j.contains("audio_path")) s.audio_path = j["audio_path"].get<std::string>();
  if (j.contains("genre")) s.genre = j["genre"].get<std::string>();
  if (j.contains("prompt_kind"))
    s.prompt_kind = j["prompt_kind"].get<std::string>();
  if (j.contains("guidance_weight"))
    s.guidance_weight = j["guidance_weight"].get<double>();
  return s;
}

// F x (J+1) 0/1 grid for inspection.
inline void save_mask(const SpatialTemporalMask& m, const fs::path& path) {
  json j;
  j["joints"] = m.joints;
  j["entries"] = matrix_to_json(m.entries);
  save_json(j, path);
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

// One orthographic stick-figure SVG per frame; fixed world-to-page mapping
// (100 px per meter) so root shifts translate the figure on the page.
inline std::string render_frame_svg(const Mat& positions, int frame,
                                    const Skeleton& skel) {
  const int J = skel.joint_count();
  auto px = [](double x) { return 300.0 + 100.0 * x; };
  auto py = [](double y) { return 400.0 - 100.0 * y; };
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"600\" height=\"450\">\n";
  svg << "  <line x1=\"0\" y1=\"" << py(0.0) << "\" x2=\"600\" y2=\"" << py(0.0)
      << "\" stroke=\"#ccc\"/>\n";
  for (int j = 0; j < J; ++j) {
    const int p = skel.parents[static_cast<std::size_t>(j)];
    if (p < 0) continue;
    svg << "  <line x1=\"" << px(positions(frame, 3 * p)) << "\" y1=\""
        << py(positions(frame, 3 * p + 1)) << "\" x2=\""
        << px(positions(frame, 3 * j)) << "\" y2=\""
        << py(positions(frame, 3 * j + 1)) << "\" stroke=\"black\" stroke-width=\"3\"/>\n";
  }
  for (int j = 0; j < J; ++j)
    svg << "  <circle cx=\"" << px(positions(frame, 3 * j)) << "\" cy=\""
        << py(positions(frame, 3 * j + 1)) << "\" r=\"5\" fill=\"#3366cc\"/>\n";
  svg << "</svg>\n";
  return svg.str();
}

inline int render_motion(const MotionSequence& motion, const Skeleton& skel,
                         const fs::path& out_dir) {
  fs::create_directories(out_dir);
  const Mat pos = forward_kinematics(skel, motion);
  for (int i = 0; i < motion.frames(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%06d.svg", i);
    std::ofstream out(out_dir / name);
    if (!out) throw IoError("cannot write frame in " + out_dir.string());
    out << render_frame_svg(pos, i, skel);
  }
  return motion.frames();
}

}  // namespace dancegen::io
