#pragma once

// Conditioning signals: per-frame music features c and style prompt
// embeddings s (one-hot, genre-name, or free-text description).

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "dancegen/core/error.hpp"
#include "dancegen/core/rng.hpp"

namespace dancegen {

struct AudioCondition {
  double fps = 30.0;
  Eigen::MatrixXd features;        // F x d_c
  std::vector<double> beat_times;  // seconds, strictly increasing
  double bpm = 120.0;

  int frames() const { return static_cast<int>(features.rows()); }
  int feature_dim() const { return static_cast<int>(features.cols()); }

  void validate() const {
    require(frames() >= 1, "audio: needs at least one frame");
    require(fps > 0 && bpm > 0, "audio: fps and bpm must be positive");
    require(features.allFinite(), "audio: non-finite features");
    const double horizon = frames() / fps;
    for (std::size_t i = 0; i < beat_times.size(); ++i) {
      require(beat_times[i] >= 0.0 && beat_times[i] <= horizon,
              "audio: beat time outside [0, F/fps]");
      if (i > 0)
        require(beat_times[i] > beat_times[i - 1],
                "audio: beat times must be strictly increasing");
    }
  }
};

enum class PromptKind { one_hot, genre_name, description };

inline std::string to_string(PromptKind k) {
  switch (k) {
    case PromptKind::one_hot: return "one_hot";
    case PromptKind::genre_name: return "genre_name";
    case PromptKind::description: return "description";
  }
  return "?";
}

inline PromptKind prompt_kind_from_string(const std::string& s) {
  if (s == "one_hot") return PromptKind::one_hot;
  if (s == "genre_name") return PromptKind::genre_name;
  if (s == "description") return PromptKind::description;
  throw ValidationError("unknown prompt kind: " + s);
}

struct StylePrompt {
  PromptKind kind = PromptKind::one_hot;
  std::string genre;
  std::string text;
  Eigen::VectorXd embedding;  // d_s, unit norm
};

// Template used to expand a genre into a full description prompt; [g] is
// replaced by the genre label.
inline constexpr const char* kDescriptionPromptTemplate =
    "Please generate a detailed description of the dance [g], including the "
    "characteristics of the dance in terms of body movement.";

inline std::string description_prompt(const std::string& genre) {
  std::string t = kDescriptionPromptTemplate;
  const auto pos = t.find("[g]");
  t.replace(pos, 3, genre);
  return t;
}

// Default genre registry; synthetic styles map onto the first entries.
inline const std::vector<std::string>& default_genres() {
  static const std::vector<std::string> g = {
      "break", "pop",   "lock",  "waack",       "house",
      "krump", "jazz",  "ballet", "middle hip-hop", "street hip-hop"};
  return g;
}

inline int genre_index(const std::string& genre,
                       const std::vector<std::string>& genres) {
  const auto it = std::find(genres.begin(), genres.end(), genre);
  if (it == genres.end()) return -1;
  return static_cast<int>(it - genres.begin());
}

// Synthetic per-frame music features. Channel layout:
//   0: Gaussian beat-pulse train (sigma = 2 frames)
//   1: sin(2*pi*bar phase), 2: cos(2*pi*bar phase)   (bar = 4 beats)
//   3: bpm / 200
//   4..d_c-1: seeded low-amplitude noise in [-0.1, 0.1]
inline Eigen::MatrixXd beat_features(const std::vector<double>& beat_times,
                                     double bpm, double fps, int frames,
                                     int d_c, std::uint64_t seed) {
  require_shape(frames > 0, "beat_features: frame count must be positive");
  require(d_c >= 4, "beat_features: need at least 4 channels");
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(frames, d_c);
  const double sigma_frames = 2.0;
  const double bar_seconds = 4.0 * 60.0 / bpm;
  for (int i = 0; i < frames; ++i) {
    const double t = i / fps;
    double pulse = 0.0;
    for (double b : beat_times) {
      const double df = (t - b) * fps;
      pulse += std::exp(-df * df / (2.0 * sigma_frames * sigma_frames));
    }
    const double phase = 2.0 * std::numbers::pi * (t / bar_seconds);
    out(i, 0) = std::min(pulse, 1.5);
    out(i, 1) = std::sin(phase);
    out(i, 2) = std::cos(phase);
    out(i, 3) = bpm / 200.0;
  }
  Rng rng(seed);
  for (int i = 0; i < frames; ++i)
    for (int c = 4; c < d_c; ++c) out(i, c) = rng.uniform(-0.1, 0.1);
  return out;
}

// Deterministic pseudo-embedding: seeded hash of the text expanded to d_s
// Gaussian coordinates, unit-normalized.
inline Eigen::VectorXd pseudo_embedding(const std::string& text, int d_s) {
  Rng rng(hash_text(text));
  Eigen::VectorXd v(d_s);
  for (int i = 0; i < d_s; ++i) v(i) = rng.normal();
  const double n = v.norm();
  require(n > 0, "pseudo_embedding: degenerate embedding");
  return v / n;
}

// Builds the style prompt for a genre. Real text-encoder outputs are ingested
// via `precomputed` (loaded from an embedding file); without it, genre_name
// and description kinds fall back to the deterministic pseudo-embedding.
inline StylePrompt encode_style(
    PromptKind kind, const std::string& genre, int n_styles, int d_s,
    const std::optional<Eigen::VectorXd>& precomputed = std::nullopt,
    const std::vector<std::string>& genres = default_genres()) {
  require(d_s >= 1 && n_styles >= 1, "encode_style: bad dimensions");
  StylePrompt p;
  p.kind = kind;
  p.genre = genre;
  if (kind == PromptKind::description) p.text = description_prompt(genre);
  else if (kind == PromptKind::genre_name) p.text = genre;

  if (precomputed) {
    require_shape(precomputed->size() == d_s,
                  "encode_style: embedding file dimension mismatch");
    const double n = precomputed->norm();
    require(n > 0, "encode_style: zero embedding in file");
    p.embedding = *precomputed / n;
    return p;
  }

  const int idx = genre_index(genre, genres);
  if (idx < 0 || idx >= n_styles)
    throw UnknownStyleError("encode_style: unknown genre '" + genre +
                            "' and no embedding file given");
  if (kind == PromptKind::one_hot) {
    require_shape(idx < d_s, "encode_style: one-hot index exceeds d_s");
    p.embedding = Eigen::VectorXd::Zero(d_s);
    p.embedding(idx) = 1.0;
  } else {
    p.embedding = pseudo_embedding(to_string(kind) + "|" + p.text, d_s);
  }
  return p;
}

}  // namespace dancegen
