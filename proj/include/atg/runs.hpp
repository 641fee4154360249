#pragma once

// Whole runs driven by a RunConfig: what the CLI subcommands execute. Each
// writes its artifacts into `out_dir`, which must already exist.

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>

#include "atg/evalkit.hpp"
#include "atg/run_config.hpp"
#include "atg/trainer.hpp"

namespace atg {

struct TrainHooks {
  std::function<void(const TrainLogRow&)> on_update;
  std::function<void(const ValidationRecord&)> on_validation;
};

// train_log.csv, best.ckpt, step_<n>.ckpt, final.ckpt and pool.yaml.
TrainResult run_training(const RunConfig& cfg, const std::filesystem::path& out_dir,
                         const TrainHooks& hooks = {});

// report.csv plus traces/<env>_seed<k>.jsonl for every episode.
EvalReport run_evaluation(const RunConfig& cfg, const NetParams<float>& params,
                          const std::filesystem::path& out_dir);
EvalReport run_pid_baseline(const RunConfig& cfg, const std::filesystem::path& out_dir);

struct SaliencyRun {
  int frames = 0;
  double mean_inside_fraction = 0.0;
  double mean_box_fraction = 0.0;
};

// Plays greedy episodes and, on frames where the target is visible, writes
// frame_<i>.ppm / saliency_<i>.pgm pairs and saliency.csv.
SaliencyRun run_saliency(const RunConfig& cfg, const NetParams<float>& params,
                         const std::filesystem::path& out_dir);

ReplayResult run_replay(const RunConfig& cfg, const std::filesystem::path& trace,
                        const std::string& env, std::uint64_t seed);

std::string trace_file_name(const std::string& env, std::uint64_t seed);
// Inverse of trace_file_name on a path's filename.
std::optional<std::pair<std::string, std::uint64_t>> parse_trace_file_name(
    const std::filesystem::path& path);

}  // namespace atg
