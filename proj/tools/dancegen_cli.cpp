// Command-line surface: corpus synthesis, training, generation, editing,
// evaluation and rendering. Exit codes: 0 success, 1 runtime failure,
// 2 usage or validation error.

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "dancegen/control.hpp"
#include "dancegen/io.hpp"
#include "dancegen/metrics.hpp"
#include "dancegen/runconfig.hpp"
#include "dancegen/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dancegen;

namespace {

struct TrainFlags {
  std::string config_path;
  std::string data_dir;
  std::string out_dir;
  std::string resume_path;
  // optional overrides, highest-precedence layer
  std::optional<std::string> preset;
  std::optional<int> iterations;
  std::optional<int> batch_size;
  std::optional<double> learning_rate;
  std::optional<int> t_steps;
  std::optional<std::uint64_t> seed;
};

json flags_to_layer(const TrainFlags& f) {
  json j = json::object();
  if (f.preset) j["preset"] = *f.preset;
  json training = json::object();
  if (f.iterations) training["max_iterations"] = *f.iterations;
  if (f.batch_size) training["batch_size"] = *f.batch_size;
  if (f.learning_rate) training["learning_rate"] = *f.learning_rate;
  if (f.seed) training["master_seed"] = *f.seed;
  if (!training.empty()) j["training"] = std::move(training);
  if (f.t_steps) j["t_steps"] = *f.t_steps;
  return j;
}

int run_synth_data(int styles, int clips, double seconds, double fps,
                   std::uint64_t seed, const std::string& out) {
  require(styles >= 1, "synth-data: styles must be at least 1");
  require(clips >= 1, "synth-data: clips must be at least 1");
  const fs::path out_dir = resolve_out_path(out);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir))
    throw IoError("cannot create output directory " + out_dir.string());
  const Skeleton skel = Skeleton::desk8();
  CorpusManifest manifest;
  const auto corpus = synth_corpus(styles, clips, seconds, fps, seed, &manifest, skel);
  for (std::size_t i = 0; i < corpus.size(); ++i)
    io::save_clip(corpus[i], skel, out_dir / manifest.clips[i].path);
  io::save_manifest(manifest, out_dir / "manifest.json");
  std::cout << "wrote " << corpus.size() << " clips + manifest to "
            << out_dir.string() << "\n";
  return 0;
}

int run_train(const TrainFlags& f) {
  json file_layer;
  if (!f.config_path.empty()) file_layer = io::load_json(f.config_path);
  const json flag_layer = flags_to_layer(f);
  RunConfig rc = resolve_run_config(
      f.config_path.empty() ? nullptr : &file_layer, &flag_layer);

  const fs::path data_dir = f.data_dir;
  if (!fs::is_directory(data_dir))
    throw ValidationError("train: data directory not found: " + data_dir.string());
  const CorpusManifest manifest = io::load_manifest(data_dir / "manifest.json");

  Skeleton skel = Skeleton::desk8();
  std::vector<ClipRecord> clips;
  for (const auto& e : manifest.clips)
    if (e.split == "train") clips.push_back(io::load_clip(data_dir / e.path, &skel));
  require(!clips.empty(), "train: no training clips in manifest");
  // joint count and music feature width come from the data, not the preset
  rc.model.joints = skel.joint_count();
  rc.model.d_c = clips.front().audio.feature_dim();

  const fs::path out_dir = resolve_out_path(f.out_dir);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir))
    throw IoError("cannot create output directory " + out_dir.string());

  const NoiseSchedule sched = rc.make_noise_schedule();
  const TrainDataset ds =
      build_dataset(clips, skel, rc.training.window_seconds,
                    rc.training.window_stride_seconds, PromptKind::one_hot,
                    rc.model.d_s, static_cast<int>(default_genres().size()));

  ParamStore params;
  io::TrainerState state;
  Rng rng(rc.training.master_seed);
  int start_iter = 0;
  if (!f.resume_path.empty()) {
    DenoiserConfig loaded;
    params = io::load_checkpoint(f.resume_path, loaded, &state);
    rc.model = loaded;
    rng.set_state(state.rng_state);
    start_iter = static_cast<int>(state.iteration);
  } else {
    params = init_params(rc.model, rc.training.master_seed ^ 0xda0ce9);
  }

  // config snapshot + loss log
  json snapshot;
  snapshot["model"] = io::config_to_json(rc.model);
  snapshot["t_steps"] = rc.t_steps;
  snapshot["schedule_kind"] = rc.schedule_kind;
  io::save_json(snapshot, out_dir / "config.json");
  std::ofstream loss_csv(out_dir / "loss.csv",
                         start_iter > 0 ? std::ios::app : std::ios::out);
  if (start_iter == 0) loss_csv << "iteration,L_d,L_j,L_v,L_f,L\n";

  try {
    train_loop(ds, params, state.adam, sched, rc.training, rc.model, rng,
               start_iter, rc.training.max_iterations,
               [&](int iter, const LossBreakdown& l) {
                 loss_csv << iter << "," << l.diffusion << "," << l.joint << ","
                          << l.velocity << "," << l.foot << "," << l.total << "\n";
                 if ((iter + 1) % rc.training.checkpoint_every == 0 ||
                     iter + 1 == rc.training.max_iterations) {
                   state.iteration = iter + 1;
                   state.rng_state = rng.state();
                   io::save_checkpoint(params, rc.model,
                                       out_dir / ("checkpoint_" +
                                                  std::to_string(iter + 1) +
                                                  ".json"),
                                       &state);
                 }
                 if ((iter + 1) % 100 == 0)
                   std::cout << "iter " << iter + 1 << " loss " << l.total << "\n";
               });
  } catch (const NonFiniteError& e) {
    std::cerr << "training aborted: " << e.what() << "\n";
    return 1;
  }
  state.iteration = rc.training.max_iterations;
  state.rng_state = rng.state();
  io::save_checkpoint(params, rc.model, out_dir / "checkpoint_final.json", &state);
  std::cout << "training complete; final checkpoint in " << out_dir.string() << "\n";
  return 0;
}

StylePrompt resolve_style(const std::string& genre, const std::string& kind_str,
                          const std::string& embedding_file, int d_s) {
  const PromptKind kind = prompt_kind_from_string(kind_str);
  std::optional<Eigen::VectorXd> pre;
  if (!embedding_file.empty()) pre = io::load_embedding(embedding_file);
  return encode_style(kind, genre, static_cast<int>(default_genres().size()),
                      d_s, pre);
}

int run_generate(const std::string& checkpoint, const std::string& audio_path,
                 const std::string& genre, const std::string& prompt_kind,
                 const std::string& embedding_file, double w,
                 std::uint64_t seed, const std::string& out_path, int t_steps,
                 const std::string& schedule_kind) {
  DenoiserConfig cfg;
  const ParamStore params = io::load_checkpoint(checkpoint, cfg);
  const json aj = io::load_json(audio_path);
  const AudioCondition audio =
      aj.contains("audio") ? io::audio_from_json(aj["audio"])
                           : io::audio_from_json(aj);
  const StylePrompt style = resolve_style(genre, prompt_kind, embedding_file, cfg.d_s);
  std::cout << "prompt kind: " << to_string(style.kind) << "\n";
  std::cout << "prompt text: " << (style.text.empty() ? genre : style.text) << "\n";
  const NoiseSchedule sched = make_schedule(
      t_steps, schedule_kind == "linear" ? ScheduleKind::linear
                                         : ScheduleKind::cosine);
  const Skeleton skel = Skeleton::desk8();
  const int F = audio.frames();
  MotionSequence motion;
  if (F <= cfg.max_frames) {
    motion = guided_sample(audio, style, w, params, sched, cfg, F, seed);
  } else {
    // Long-form: generate max_frames slices at half-length stride and blend
    // the overlaps.
    const int win = cfg.max_frames;
    const int overlap = win / 2;
    const int stride = win - overlap;
    std::vector<MotionSequence> slices;
    Rng master(seed);
    int start = 0;
    int idx = 0;
    while (true) {
      if (start + win > F) start = F - win;
      AudioCondition part;
      part.fps = audio.fps;
      part.bpm = audio.bpm;
      part.features = audio.features.middleRows(start, win);
      const double t0 = start / audio.fps, t1 = (start + win) / audio.fps;
      for (double b : audio.beat_times)
        if (b >= t0 && b < t1) part.beat_times.push_back(b - t0);
      slices.push_back(guided_sample(part, style, w, params, sched, cfg, win,
                                     master.split(static_cast<std::uint64_t>(idx))
                                         .next_u64()));
      if (start + win >= F) break;
      start += stride;
      ++idx;
    }
    motion = stitch_long(slices, overlap / audio.fps);
  }
  io::save_json(io::motion_to_json(motion, skel), resolve_out_path(out_path));
  std::cout << "wrote " << motion.frames() << " frames to " << out_path << "\n";
  return 0;
}

int run_edit(const std::string& checkpoint, const std::string& task_path,
             const std::string& out_path, int t_steps,
             const std::string& schedule_kind) {
  DenoiserConfig cfg;
  const ParamStore params = io::load_checkpoint(checkpoint, cfg);
  const io::EditTaskSpec spec = io::load_task_spec(task_path);

  Skeleton skel = Skeleton::desk8();
  EditTask task;
  task.kind = edit_kind_from_string(spec.kind);
  task.known_motion = io::load_motion_any(spec.known_motion_path, &skel);
  if (spec.inpaint_fraction) task.inpaint_fraction = *spec.inpaint_fraction;
  task.seed = spec.seed;

  AudioCondition audio;
  if (!spec.audio_path.empty()) {
    const json aj = io::load_json(spec.audio_path);
    audio = aj.contains("audio") ? io::audio_from_json(aj["audio"])
                                 : io::audio_from_json(aj);
  } else {
    // neutral conditioning matched to the known motion length
    audio.fps = task.known_motion.fps;
    audio.bpm = 120.0;
    audio.features = beat_features({}, audio.bpm, audio.fps,
                                   task.known_motion.frames(), cfg.d_c, 0);
  }
  const std::string genre = spec.genre.empty() ? default_genres()[0] : spec.genre;
  const StylePrompt style =
      resolve_style(genre, spec.prompt_kind, "", cfg.d_s);
  const double w = spec.guidance_weight.value_or(1.0);
  const NoiseSchedule sched = make_schedule(
      t_steps, schedule_kind == "linear" ? ScheduleKind::linear
                                         : ScheduleKind::cosine);
  SpatialTemporalMask mask;
  const MotionSequence motion = edit(task, audio, style, w, params, sched, cfg,
                                     skel, spec.seed, &mask);
  const fs::path out = resolve_out_path(out_path);
  io::save_json(io::motion_to_json(motion, skel), out);
  io::save_mask(mask, fs::path(out).concat(".mask.json"));
  std::cout << "wrote edited motion (" << spec.kind << ") to " << out.string()
            << "\n";
  return 0;
}

int run_evaluate(const std::string& gen_dir, const std::string& ref_dir,
                 const std::string& out_report, int trials,
                 std::uint64_t seed) {
  auto list_json = [](const fs::path& dir) {
    if (!fs::is_directory(dir))
      throw ValidationError("evaluate: directory not found: " + dir.string());
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.path().extension() == ".json" &&
          e.path().filename() != "manifest.json")
        out.push_back(e.path());
    std::sort(out.begin(), out.end());
    require(!out.empty(), "evaluate: no .json files in " + dir.string());
    return out;
  };
  Skeleton skel = Skeleton::desk8();
  std::vector<MotionSequence> generated, reference;
  std::vector<AudioCondition> audios;
  for (const auto& p : list_json(gen_dir))
    generated.push_back(io::load_motion_any(p, &skel));
  for (const auto& p : list_json(ref_dir)) {
    const json j = io::load_json(p);
    reference.push_back(io::motion_from_json(
        j.contains("motion") ? io::field(j, "motion") : j));
    if (j.contains("audio")) audios.push_back(io::audio_from_json(j["audio"]));
  }
  EvaluateOptions opt;
  opt.trials = trials;
  opt.seed = seed;
  const MetricReport rep = evaluate(generated, reference, audios, skel, opt);
  const json rj = io::report_to_json(rep);
  io::save_json(rj, resolve_out_path(out_report));
  std::cout << rj.dump(1) << "\n";
  return 0;
}

int run_render(const std::string& motion_path, const std::string& out_dir) {
  Skeleton skel = Skeleton::desk8();
  const MotionSequence motion = io::load_motion_any(motion_path, &skel);
  const int n = io::render_motion(motion, skel, resolve_out_path(out_dir));
  std::cout << "rendered " << n << " frames to " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"style-guided dance motion diffusion toolkit"};
  app.require_subcommand(1);

  // synth-data
  auto* synth = app.add_subcommand("synth-data", "generate a synthetic corpus");
  int styles = 4, clips = 8;
  double seconds = 8.0, fps = 30.0;
  std::uint64_t synth_seed = 0;
  std::string synth_out = "corpus";
  synth->add_option("--styles", styles);
  synth->add_option("--clips", clips, "clips per style");
  synth->add_option("--seconds", seconds);
  synth->add_option("--fps", fps);
  synth->add_option("--seed", synth_seed);
  synth->add_option("--out", synth_out)->required();

  // train
  auto* train = app.add_subcommand("train", "train the denoiser");
  TrainFlags tf;
  train->add_option("--config", tf.config_path, "JSON run config");
  train->add_option("--data", tf.data_dir)->required();
  train->add_option("--out", tf.out_dir)->required();
  train->add_option("--resume", tf.resume_path, "checkpoint to resume from");
  std::string preset_flag;
  int iters_flag = 0, batch_flag = 0, tsteps_flag = 0;
  double lr_flag = 0.0;
  std::uint64_t seed_flag = 0;
  auto* po = train->add_option("--preset", preset_flag, "micro|desk|full");
  auto* io_ = train->add_option("--iters", iters_flag);
  auto* bo = train->add_option("--batch", batch_flag);
  auto* lo = train->add_option("--lr", lr_flag);
  auto* to = train->add_option("--t-steps", tsteps_flag);
  auto* so = train->add_option("--seed", seed_flag);

  // generate
  auto* gen = app.add_subcommand("generate", "sample a dance for an audio file");
  std::string g_ckpt, g_audio, g_genre, g_kind = "one_hot", g_embed, g_out,
              g_sched = "cosine";
  double g_w = 1.0;
  std::uint64_t g_seed = 0;
  int g_tsteps = 50;
  gen->add_option("--checkpoint", g_ckpt)->required();
  gen->add_option("--audio", g_audio)->required();
  gen->add_option("--style", g_genre)->required();
  gen->add_option("--prompt-kind", g_kind, "one_hot|genre_name|description");
  gen->add_option("--embedding", g_embed, "precomputed embedding JSON");
  gen->add_option("--w", g_w, "guidance weight");
  gen->add_option("--seed", g_seed);
  gen->add_option("--t-steps", g_tsteps);
  gen->add_option("--schedule", g_sched);
  gen->add_option("--out", g_out)->required();

  // edit
  auto* edit_cmd = app.add_subcommand("edit", "mask-constrained generation");
  std::string e_ckpt, e_task, e_out, e_sched = "cosine";
  int e_tsteps = 50;
  edit_cmd->add_option("--checkpoint", e_ckpt)->required();
  edit_cmd->add_option("--task", e_task, "task spec JSON")->required();
  edit_cmd->add_option("--t-steps", e_tsteps);
  edit_cmd->add_option("--schedule", e_sched);
  edit_cmd->add_option("--out", e_out)->required();

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "metric suite over two sets");
  std::string v_gen, v_ref, v_out = "report.json";
  int v_trials = 1;
  std::uint64_t v_seed = 0;
  eval_cmd->add_option("--gen", v_gen)->required();
  eval_cmd->add_option("--ref", v_ref)->required();
  eval_cmd->add_option("--trials", v_trials);
  eval_cmd->add_option("--seed", v_seed);
  eval_cmd->add_option("--out", v_out);

  // render
  auto* render_cmd = app.add_subcommand("render", "stick-figure SVG frames");
  std::string r_motion, r_out;
  render_cmd->add_option("--motion", r_motion)->required();
  render_cmd->add_option("--out", r_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (synth->parsed())
      return run_synth_data(styles, clips, seconds, fps, synth_seed, synth_out);
    if (train->parsed()) {
      if (po->count()) tf.preset = preset_flag;
      if (io_->count()) tf.iterations = iters_flag;
      if (bo->count()) tf.batch_size = batch_flag;
      if (lo->count()) tf.learning_rate = lr_flag;
      if (to->count()) tf.t_steps = tsteps_flag;
      if (so->count()) tf.seed = seed_flag;
      return run_train(tf);
    }
    if (gen->parsed())
      return run_generate(g_ckpt, g_audio, g_genre, g_kind, g_embed, g_w,
                          g_seed, g_out, g_tsteps, g_sched);
    if (edit_cmd->parsed()) return run_edit(e_ckpt, e_task, e_out, e_tsteps, e_sched);
    if (eval_cmd->parsed())
      return run_evaluate(v_gen, v_ref, v_out, v_trials, v_seed);
    if (render_cmd->parsed()) return run_render(r_motion, r_out);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
