#pragma once

// One plain-text (YAML) document holding every setting a run needs.
// Sections map onto the library structs; keys are addressed as
// `section.key` by overrides. Unknown keys are rejected.
//
//   seed: 0
//   env: Standard            # suite name or path to a spec document
//   network: full            # full | reduced
//   train: {alpha: 0.0001, workers: 4, protocol: randomized, ...}
//   reward: {A: 1, c: 1, d: 1.5, lambda: 0.5}
//   ...
//
// run_config_to_yaml() writes every key, so its output is the resolved
// config of a run.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "atg/augment.hpp"
#include "atg/evalkit.hpp"
#include "atg/pidbaseline.hpp"
#include "atg/trainer.hpp"

namespace atg {

struct AugmentSettings {
  std::size_t perturbations = 21;
  std::uint64_t pool_seed = 7;
  PerturbBounds bounds;
  double ue_hide_probability = 0.5;
};

struct EvalOptions {
  int episodes = 50;  // episode seeds are seed, seed + 1, ...
  bool sample = false;  // sample from the policy instead of argmax
  int saliency_frames = 8;
};

struct ProviderSettings {
  std::string kind = "oracle";  // oracle | noisy
  double sigma = 2.0;
  double dropout = 0.05;
};

struct RunConfig {
  std::uint64_t seed = 0;  // training seed and first episode seed
  std::string env = "Standard";
  std::string network = "full";
  std::string out_dir;  // empty: $ATG_OUT_DIR, then ./runs
  TrainConfig train;
  Protocol protocol = Protocol::Randomized;
  AugmentSettings augment;
  RewardParams reward;
  Kinematics kinematics;
  TerminationConfig termination;
  RenderConfig render;
  PidConfig pid;
  ProviderSettings provider;
  EvalOptions eval;

  // Throws ConfigError naming the first offending key.
  void validate() const;
};

RunConfig parse_run_config(std::string_view yaml_text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string run_config_to_yaml(const RunConfig& cfg);
void save_run_config(const RunConfig& cfg, const std::filesystem::path& path);

// `key` is dotted ("train.alpha"); `value` is parsed as a YAML scalar.
void set_run_config_key(RunConfig& cfg, std::string_view key, std::string_view value);
// Value of a key as written in the resolved document, strings unquoted.
std::string get_run_config_key(const RunConfig& cfg, std::string_view key);
std::vector<std::string> run_config_keys();

std::string_view protocol_name(Protocol p) noexcept;
Protocol parse_protocol(std::string_view name);

Architecture run_architecture(const RunConfig& cfg);
// cfg.train with the run seed applied.
TrainConfig run_train_config(const RunConfig& cfg);
EvalSettings run_eval_settings(const RunConfig& cfg);
// A suite name, else a spec document on disk.
EnvSpec resolve_env(const std::string& name_or_path);
EnvPool run_pool(const RunConfig& cfg, const EnvSpec& base);
std::shared_ptr<BBoxProvider> run_provider(const RunConfig& cfg);

}  // namespace atg
