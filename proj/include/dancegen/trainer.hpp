#pragma once

// Dataset windowing and the iteration loop shared by the CLI and the
// integration tests.

#include <functional>
#include <vector>

#include "dancegen/conditioning.hpp"
#include "dancegen/datagen.hpp"
#include "dancegen/diffusion.hpp"

namespace dancegen {

struct TrainDataset {
  Skeleton skel;
  std::vector<ClipRecord> windows;
  std::vector<Eigen::VectorXd> style_embeddings;  // parallel to windows
};

inline Eigen::VectorXd style_embedding_for(int style_id, PromptKind kind,
                                           int d_s, int n_styles) {
  const auto& genres = default_genres();
  require(style_id >= 1 &&
              style_id <= static_cast<int>(genres.size()),
          "style_embedding_for: style_id outside genre registry");
  return encode_style(kind, genres[static_cast<std::size_t>(style_id - 1)],
                      n_styles, d_s)
      .embedding;
}

// Cuts training clips into fixed windows and attaches style embeddings.
inline TrainDataset build_dataset(const std::vector<ClipRecord>& clips,
                                  const Skeleton& skel, double window_s,
                                  double stride_s, PromptKind kind, int d_s,
                                  int n_styles) {
  TrainDataset ds;
  ds.skel = skel;
  for (const ClipRecord& clip : clips) {
    const SliceResult sliced = slice_windows(clip, window_s, stride_s);
    for (const ClipRecord& w : sliced.windows) {
      ds.windows.push_back(w);
      ds.style_embeddings.push_back(
          style_embedding_for(w.style_id, kind, d_s, n_styles));
    }
  }
  require(!ds.windows.empty(), "build_dataset: no training windows");
  return ds;
}

// Runs iterations [start, end). Each iteration draws batch indices from the
// stream first, then the per-item noise, so a resumed run replays exactly.
inline void train_loop(
    const TrainDataset& ds, ParamStore& params, AdamState& opt,
    const NoiseSchedule& sched, const TrainingConfig& tcfg,
    const DenoiserConfig& cfg, Rng& rng, int start_iter, int end_iter,
    const std::function<void(int, const LossBreakdown&)>& on_iter = nullptr) {
  const int n = static_cast<int>(ds.windows.size());
  for (int iter = start_iter; iter < end_iter; ++iter) {
    std::vector<TrainItem> batch;
    for (int b = 0; b < tcfg.batch_size; ++b) {
      const int k = static_cast<int>(rng.uniform_int(0, n - 1));
      TrainItem item;
      item.clip = &ds.windows[static_cast<std::size_t>(k)];
      item.style_embedding = ds.style_embeddings[static_cast<std::size_t>(k)];
      batch.push_back(std::move(item));
    }
    const LossBreakdown loss =
        training_step(batch, params, opt, sched, tcfg, cfg, ds.skel, rng);
    if (on_iter) on_iter(iter, loss);
  }
}

}  // namespace dancegen
