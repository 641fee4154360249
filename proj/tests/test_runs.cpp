#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "atg/checkpoint.hpp"
#include "atg/envspec_io.hpp"
#include "atg/errors.hpp"
#include "atg/image_io.hpp"
#include "atg/run_config.hpp"
#include "atg/runs.hpp"

namespace atg {
namespace {

namespace fs = std::filesystem;

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("atg_test_runs_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig small_config() {
  RunConfig c;
  c.network = "reduced";
  c.render.columns = c.render.rows = 12;
  c.termination.max_length = 40;
  c.eval.episodes = 3;
  c.eval.saliency_frames = 2;
  return c;
}

// ---------------------------------------------------------------- checkpoint

TEST(Checkpoint, RoundTripIsExact) {
  for (const Architecture& a : {Architecture{}, Architecture::reduced()}) {
    const auto p = init_params<float>(a, 17);
    const std::string bytes = checkpoint_bytes(p);
    EXPECT_EQ(bytes.substr(0, 8), std::string("ATGCKPT\0", 8));
    EXPECT_EQ(bytes.size(), 8 + 4 + 12 * 4 + 8 + 8 + 4 * p.flat().size());
    EXPECT_EQ(checkpoint_from_bytes(bytes), p);
  }
  const fs::path dir = fresh_dir("ckpt");
  const auto p = init_params<float>(Architecture::reduced(), 3);
  save_checkpoint(p, dir / "a.ckpt");
  EXPECT_EQ(load_checkpoint(dir / "a.ckpt", Architecture::reduced()), p);
  EXPECT_THROW(load_checkpoint(dir / "a.ckpt", Architecture{}), IoError);
  EXPECT_THROW(load_checkpoint(dir / "missing.ckpt"), IoError);
}

TEST(Checkpoint, CorruptionIsDetected) {
  const std::string bytes = checkpoint_bytes(init_params<float>(Architecture::reduced(), 1));
  EXPECT_THROW(checkpoint_from_bytes(bytes.substr(0, bytes.size() - 1)), IoError);
  EXPECT_THROW(checkpoint_from_bytes(bytes + "x"), IoError);
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(checkpoint_from_bytes(bad_magic), IoError);
  std::string bad_version = bytes;
  bad_version[8] = 9;
  EXPECT_THROW(checkpoint_from_bytes(bad_version), IoError);
  std::string bad_fingerprint = bytes;
  bad_fingerprint[8 + 4 + 48] ^= 1;
  EXPECT_THROW(checkpoint_from_bytes(bad_fingerprint), IoError);
}

TEST(Checkpoint, FingerprintDependsOnLayout) {
  EXPECT_EQ(architecture_fingerprint(Architecture{}), architecture_fingerprint(Architecture{}));
  EXPECT_NE(architecture_fingerprint(Architecture{}),
            architecture_fingerprint(Architecture::reduced()));
}

// ---------------------------------------------------------------- run config

TEST(RunConfigTest, DefaultsValidateAndRoundTrip) {
  const RunConfig d;
  EXPECT_NO_THROW(d.validate());
  const std::string text = run_config_to_yaml(d);
  EXPECT_EQ(run_config_to_yaml(parse_run_config(text)), text);
  EXPECT_EQ(parse_run_config("").seed, 0u);
  // Every key shows up in the resolved document.
  for (const std::string& k : run_config_keys()) {
    const std::string leaf = k.substr(k.find('.') == std::string::npos ? 0 : k.find('.') + 1);
    EXPECT_NE(text.find(leaf + ":"), std::string::npos) << k;
  }
}

TEST(RunConfigTest, NestedDocumentSetsFields) {
  const RunConfig c = parse_run_config(
      "seed: 12\n"
      "env: SharpTurn\n"
      "train: {alpha: 0.0003, gamma: 0.9, workers: 2, protocol: single}\n"
      "reward:\n  d: 2.5\n"
      "pid: {lost_target: no-op}\n");
  EXPECT_EQ(c.seed, 12u);
  EXPECT_EQ(c.env, "SharpTurn");
  EXPECT_DOUBLE_EQ(c.train.alpha, 3e-4);
  EXPECT_DOUBLE_EQ(c.train.gamma, 0.9);
  EXPECT_EQ(c.train.workers, 2);
  EXPECT_EQ(c.protocol, Protocol::Single);
  EXPECT_DOUBLE_EQ(c.reward.d, 2.5);
  EXPECT_EQ(c.pid.lost_target_policy, LostTargetPolicy::NoOp);
  EXPECT_EQ(run_train_config(c).seed, 12u);
  EXPECT_DOUBLE_EQ(run_eval_settings(c).reward.d, 2.5);
}

TEST(RunConfigTest, UnknownKeysNameTheKey) {
  try {
    parse_run_config("train: {alpah: 1}\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("train.alpah"), std::string::npos) << e.what();
  }
  try {
    parse_run_config("colour: red\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("colour"), std::string::npos);
  }
  RunConfig c;
  EXPECT_THROW(set_run_config_key(c, "train.nope", "1"), ConfigError);
  EXPECT_THROW(get_run_config_key(c, "nope"), ConfigError);
}

TEST(RunConfigTest, BadValuesNameTheKey) {
  const auto message = [](const std::string& key, const std::string& value) {
    RunConfig c;
    try {
      set_run_config_key(c, key, value);
      c.validate();
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  EXPECT_NE(message("train.workers", "zero").find("train.workers"), std::string::npos);
  EXPECT_NE(message("train.protocol", "sometimes").find("protocol"), std::string::npos);
  EXPECT_NE(message("network", "huge").find("network"), std::string::npos);
  EXPECT_NE(message("render.columns", "40").find("render.columns"), std::string::npos);
  EXPECT_NE(message("provider.kind", "psychic").find("provider.kind"), std::string::npos);
  EXPECT_NE(message("train.workers", "0"), "");
  EXPECT_NE(message("reward.c", "0"), "");
  EXPECT_EQ(message("train.alpha", "0.001"), "");
}

TEST(RunConfigTest, SetAndGetKeys) {
  RunConfig c;
  set_run_config_key(c, "train.alpha", "0.25");
  EXPECT_EQ(get_run_config_key(c, "train.alpha"), "0.25");
  set_run_config_key(c, "env", "Noise1");
  EXPECT_EQ(get_run_config_key(c, "env"), "Noise1");
  set_run_config_key(c, "out_dir", "/tmp/x y");
  EXPECT_EQ(get_run_config_key(c, "out_dir"), "/tmp/x y");
  EXPECT_EQ(parse_run_config(run_config_to_yaml(c)).out_dir, "/tmp/x y");
  set_run_config_key(c, "eval.sample", "true");
  EXPECT_TRUE(c.eval.sample);
}

TEST(RunConfigTest, FileRoundTripAndEnvResolution) {
  const fs::path dir = fresh_dir("cfg");
  RunConfig c = small_config();
  c.seed = 5;
  save_run_config(c, dir / "config.yaml");
  EXPECT_EQ(run_config_to_yaml(load_run_config(dir / "config.yaml")), run_config_to_yaml(c));
  EXPECT_THROW(load_run_config(dir / "missing.yaml"), ConfigError);

  EXPECT_EQ(resolve_env("Corridor").name, "Corridor");
  save_spec(suite_env("Noise1"), dir / "noise.spec");
  EXPECT_EQ(resolve_env((dir / "noise.spec").string()), suite_env("Noise1"));
  EXPECT_THROW(resolve_env("NotAnEnv"), UsageError);

  RunConfig single;
  single.protocol = Protocol::Single;
  EXPECT_EQ(run_pool(single, standard_spec()).specs.size(), 1u);
  EXPECT_EQ(run_pool(RunConfig{}, standard_spec()).specs.size(), 42u);
}

// ---------------------------------------------------------------------- runs

TEST(Runs, TraceFileNames) {
  EXPECT_EQ(trace_file_name("Noise2", 17), "Noise2_seed17.jsonl");
  const auto parsed = parse_trace_file_name("/a/b/Noise2_seed17.jsonl");
  ASSERT_TRUE(parsed);
  EXPECT_EQ(parsed->first, "Noise2");
  EXPECT_EQ(parsed->second, 17u);
  EXPECT_FALSE(parse_trace_file_name("trace.jsonl"));
  EXPECT_FALSE(parse_trace_file_name("x_seed1.json"));
}

TEST(Runs, EvaluationWritesReportAndReplayableTraces) {
  const fs::path dir = fresh_dir("eval");
  RunConfig c = small_config();
  c.seed = 30;
  const auto params = init_params<float>(Architecture::reduced(), 2);
  const EvalReport r = run_evaluation(c, params, dir);
  ASSERT_EQ(r.n(), 3u);
  EXPECT_EQ(r.env, "Standard");
  std::istringstream csv(slurp(dir / "report.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "env,n,ar_mean,ar_std,el_mean,el_std");
  std::getline(csv, line);
  EXPECT_EQ(line.rfind("Standard,3,", 0), 0u);
  for (std::uint64_t seed = 30; seed < 33; ++seed) {
    const fs::path trace = dir / "traces" / trace_file_name("Standard", seed);
    ASSERT_TRUE(fs::exists(trace));
    const ReplayResult rr = run_replay(c, trace, "Standard", seed);
    EXPECT_TRUE(rr.ok);
    EXPECT_LE(std::abs(rr.trace_ar - rr.replay_ar), 1e-9);
  }
  RunConfig full = c;
  full.network = "full";
  full.render = RenderConfig{};
  EXPECT_THROW(run_evaluation(full, params, dir), ConfigError);
}

TEST(Runs, BaselineAndSaliency) {
  const fs::path dir = fresh_dir("baseline");
  RunConfig c;
  c.termination.max_length = 50;
  c.eval.episodes = 2;
  const EvalReport b = run_pid_baseline(c, dir);
  EXPECT_EQ(b.n(), 2u);
  EXPECT_TRUE(fs::exists(dir / "report.csv"));

  const fs::path sdir = fresh_dir("saliency");
  RunConfig s = small_config();
  s.termination.max_length = 100;
  const SaliencyRun run = run_saliency(s, init_params<float>(Architecture::reduced(), 4), sdir);
  EXPECT_EQ(run.frames, 2);
  EXPECT_TRUE(fs::exists(sdir / "frame_0.ppm"));
  EXPECT_TRUE(fs::exists(sdir / "saliency_1.pgm"));
  const Frame f = read_ppm(sdir / "frame_0.ppm");
  EXPECT_EQ(f.width(), 12);
  EXPECT_GT(run.mean_box_fraction, 0.0);
  EXPECT_LE(run.mean_inside_fraction, 1.0);
}

TEST(Runs, TrainingWritesArtifacts) {
  const fs::path dir = fresh_dir("train");
  RunConfig c = small_config();
  c.train.workers = 1;
  c.train.T = 10;
  c.train.max_env_steps = 60;
  c.train.validation_interval = 30;
  c.train.validation_episodes = 1;
  c.augment.perturbations = 2;
  int updates = 0, validations = 0;
  TrainHooks hooks;
  hooks.on_update = [&](const TrainLogRow&) { ++updates; };
  hooks.on_validation = [&](const ValidationRecord&) { ++validations; };
  const TrainResult r = run_training(c, dir, hooks);
  // Episodes end inside windows, so the last window may run past the budget.
  EXPECT_GE(r.global_steps, 60);
  EXPECT_LT(r.global_steps, 60 + c.train.T);
  EXPECT_EQ(static_cast<std::uint64_t>(updates), r.updates);
  EXPECT_GE(validations, 2);
  for (const char* f : {"train_log.csv", "best.ckpt", "final.ckpt", "pool.yaml"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  EXPECT_EQ(load_pool(dir / "pool.yaml").specs.size(), 4u);
  EXPECT_EQ(load_checkpoint(dir / "final.ckpt").arch(), Architecture::reduced());
}

}  // namespace
}  // namespace atg
