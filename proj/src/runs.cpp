#include "atg/runs.hpp"

#include <fstream>
#include <regex>

#include "atg/augment.hpp"
#include "atg/errors.hpp"
#include "atg/image_io.hpp"
#include "atg/pidbaseline.hpp"

namespace atg {

namespace fs = std::filesystem;

std::string trace_file_name(const std::string& env, std::uint64_t seed) {
  return env + "_seed" + std::to_string(seed) + ".jsonl";
}

std::optional<std::pair<std::string, std::uint64_t>> parse_trace_file_name(const fs::path& path) {
  static const std::regex re(R"((.+)_seed([0-9]+)\.jsonl)");
  std::smatch m;
  const std::string name = path.filename().string();
  if (!std::regex_match(name, m, re)) return std::nullopt;
  return std::make_pair(m[1].str(), std::stoull(m[2].str()));
}

TrainResult run_training(const RunConfig& cfg, const fs::path& out_dir, const TrainHooks& hooks) {
  cfg.validate();
  EnvSpec base = resolve_env(cfg.env);
  base.flip = false;
  TrainSetup setup;
  setup.cfg = run_train_config(cfg);
  setup.arch = run_architecture(cfg);
  setup.env = run_eval_settings(cfg);
  setup.protocol = cfg.protocol;
  if (cfg.protocol == Protocol::Ue) {
    setup.pool = single_env_pool(base);
  } else {
    setup.pool = run_pool(cfg, base);
  }
  setup.ue_hide_probability = cfg.augment.ue_hide_probability;
  setup.val_specs = {base};
  setup.out_dir = out_dir;
  setup.on_update = hooks.on_update;
  setup.on_validation = hooks.on_validation;
  fs::create_directories(out_dir);
  save_pool(setup.pool, out_dir / "pool.yaml");
  return train(setup);
}

namespace {

EvalReport evaluate_source(ActionSource& source, const RunConfig& cfg, const fs::path& out_dir) {
  cfg.validate();
  const EnvSpec spec = resolve_env(cfg.env);
  const EvalSettings settings = run_eval_settings(cfg);
  EvalReport report = run_episodes(source, spec, static_cast<std::size_t>(cfg.eval.episodes),
                                   settings, cfg.seed);
  report.env = spec.name;
  fs::create_directories(out_dir / "traces");
  for (const EpisodeStats& e : report.episodes)
    write_trace(out_dir / "traces" / trace_file_name(spec.name, e.seed), e.trace);
  std::ofstream csv(out_dir / "report.csv");
  if (!csv) throw IoError("cannot write " + (out_dir / "report.csv").string());
  write_report_csv(csv, {report});
  return report;
}

}  // namespace

EvalReport run_evaluation(const RunConfig& cfg, const NetParams<float>& params,
                          const fs::path& out_dir) {
  if (!(params.arch() == run_architecture(cfg)))
    throw ConfigError("network: checkpoint architecture does not match '" + cfg.network + "'");
  NetworkPolicy policy(params, cfg.eval.sample);
  return evaluate_source(policy, cfg, out_dir);
}

EvalReport run_pid_baseline(const RunConfig& cfg, const fs::path& out_dir) {
  PidController pid(cfg.pid, run_provider(cfg), cfg.render);
  return evaluate_source(pid, cfg, out_dir);
}

SaliencyRun run_saliency(const RunConfig& cfg, const NetParams<float>& params,
                         const fs::path& out_dir) {
  cfg.validate();
  if (!(params.arch() == run_architecture(cfg)))
    throw ConfigError("network: checkpoint architecture does not match '" + cfg.network + "'");
  const EnvSpec spec = resolve_env(cfg.env);
  const EvalSettings settings = run_eval_settings(cfg);
  constexpr int kStride = 10;
  constexpr int kMaxEpisodes = 50;
  fs::create_directories(out_dir);
  std::ofstream csv(out_dir / "saliency.csv");
  if (!csv) throw IoError("cannot write " + (out_dir / "saliency.csv").string());
  csv << "index,seed,step,action,inside_fraction,box_fraction\n";

  SaliencyRun run;
  NetworkPolicy policy(params);
  for (int ep = 0; ep < kMaxEpisodes && run.frames < cfg.eval.saliency_frames; ++ep) {
    const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(ep);
    WorldState s = spawn_episode(spec, seed);
    policy.begin_episode(s, seed);
    while (!is_terminal(s, settings.termination) && run.frames < cfg.eval.saliency_frames) {
      const Frame frame = render_frame(s, settings.render);
      const std::optional<BBox> box = ground_truth_bbox(s, settings.render);
      if (box && s.step_count % kStride == 0) {
        const SaliencyMap map = saliency_map(params, frame, policy.recurrent(),
                                             seed * 1'000'003ULL + static_cast<std::uint64_t>(s.step_count));
        const SaliencyConcentration c = saliency_concentration(map, *box);
        const std::string idx = std::to_string(run.frames);
        write_ppm(frame, out_dir / ("frame_" + idx + ".ppm"));
        write_pgm(map.values, map.width, map.height, out_dir / ("saliency_" + idx + ".pgm"));
        csv << run.frames << ',' << seed << ',' << s.step_count << ',' << action_name(map.action)
            << ',' << c.inside_fraction << ',' << c.box_fraction << '\n';
        run.mean_inside_fraction += c.inside_fraction;
        run.mean_box_fraction += c.box_fraction;
        ++run.frames;
      }
      const Action a = policy.act(s, &frame);
      step(s, a, settings.reward, settings.kinematics, settings.termination);
    }
  }
  if (run.frames > 0) {
    run.mean_inside_fraction /= run.frames;
    run.mean_box_fraction /= run.frames;
  }
  return run;
}

ReplayResult run_replay(const RunConfig& cfg, const fs::path& trace, const std::string& env,
                        std::uint64_t seed) {
  cfg.validate();
  return replay_trace(read_trace(trace), resolve_env(env), run_eval_settings(cfg), seed);
}

}  // namespace atg
