#pragma once

// Layered run configuration for the CLI: preset defaults, then config-file
// values, then explicit command-line flags, in increasing precedence.

#include <cstdlib>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "dancegen/core/error.hpp"
#include "dancegen/denoiser.hpp"
#include "dancegen/diffusion.hpp"

namespace dancegen {

struct RunConfig {
  std::string preset = "desk";
  DenoiserConfig model = DenoiserConfig::desk();
  TrainingConfig training;
  std::string schedule_kind = "cosine";
  int t_steps = 50;
  double guidance_weight = 1.0;
  std::uint64_t seed = 0;

  NoiseSchedule make_noise_schedule() const {
    if (schedule_kind == "cosine") return make_schedule(t_steps, ScheduleKind::cosine);
    if (schedule_kind == "linear") return make_schedule(t_steps, ScheduleKind::linear);
    throw ValidationError("unknown schedule kind: " + schedule_kind);
  }
};

namespace runcfg_detail {

template <class T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j[key].get<T>();
}

}  // namespace runcfg_detail

// Applies one JSON layer onto the config. Recognized keys mirror the struct
// fields; `model` and `training` are nested objects.
inline void apply_config_layer(RunConfig& rc, const nlohmann::json& j) {
  using runcfg_detail::maybe;
  if (j.contains("preset")) {
    rc.preset = j["preset"].get<std::string>();
    rc.model = DenoiserConfig::preset(rc.preset);
    if (rc.preset == "full") rc.t_steps = 1000;
  }
  if (j.contains("model")) {
    const auto& m = j["model"];
    maybe(m, "d_model", rc.model.d_model);
    maybe(m, "n_heads", rc.model.n_heads);
    maybe(m, "encoder_depth", rc.model.encoder_depth);
    maybe(m, "decoder_depth", rc.model.decoder_depth);
    maybe(m, "d_c", rc.model.d_c);
    maybe(m, "d_s", rc.model.d_s);
    maybe(m, "d_ff", rc.model.d_ff);
    maybe(m, "r", rc.model.r);
    maybe(m, "max_frames", rc.model.max_frames);
    maybe(m, "joints", rc.model.joints);
  }
  if (j.contains("training")) {
    const auto& t = j["training"];
    maybe(t, "lambda_joint", rc.training.lambda_joint);
    maybe(t, "lambda_velocity", rc.training.lambda_velocity);
    maybe(t, "lambda_foot", rc.training.lambda_foot);
    maybe(t, "cond_dropout_music", rc.training.cond_dropout_music);
    maybe(t, "cond_dropout_style", rc.training.cond_dropout_style);
    maybe(t, "learning_rate", rc.training.learning_rate);
    maybe(t, "weight_decay", rc.training.weight_decay);
    maybe(t, "batch_size", rc.training.batch_size);
    maybe(t, "max_iterations", rc.training.max_iterations);
    maybe(t, "master_seed", rc.training.master_seed);
    maybe(t, "window_seconds", rc.training.window_seconds);
    maybe(t, "window_stride_seconds", rc.training.window_stride_seconds);
    maybe(t, "checkpoint_every", rc.training.checkpoint_every);
  }
  maybe(j, "schedule_kind", rc.schedule_kind);
  maybe(j, "t_steps", rc.t_steps);
  maybe(j, "guidance_weight", rc.guidance_weight);
  maybe(j, "seed", rc.seed);
}

// preset defaults < config file < CLI flags.
inline RunConfig resolve_run_config(const nlohmann::json* file_layer,
                                    const nlohmann::json* flag_layer) {
  RunConfig rc;
  // a preset named in a later layer must rebase the model before the same
  // layer's overrides apply, which apply_config_layer already guarantees
  if (file_layer) apply_config_layer(rc, *file_layer);
  if (flag_layer) apply_config_layer(rc, *flag_layer);
  rc.model.validate();
  rc.training.validate();
  return rc;
}

// Only supported environment override: relocates relative output paths.
inline std::filesystem::path resolve_out_path(const std::filesystem::path& p) {
  if (p.is_absolute()) return p;
  if (const char* root = std::getenv("DANCEGEN_OUT_ROOT"))
    return std::filesystem::path(root) / p;
  return p;
}

}  // namespace dancegen
