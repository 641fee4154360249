#pragma once

// Asynchronous advantage actor-critic: workers roll out up to T steps on
// their own environment, compute n-step returns and gradients against a
// parameter snapshot, and apply Adam updates to one shared parameter store.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include "atg/augment.hpp"
#include "atg/evalkit.hpp"
#include "atg/policynet.hpp"

namespace atg {

struct TrainConfig {
  double alpha = 1e-4;
  double beta = 0.01;
  double gamma = 0.99;
  int T = 20;
  int workers = 4;
  std::int64_t max_env_steps = 3'000'000;
  std::int64_t validation_interval = 50'000;
  int validation_episodes = 5;
  double grad_clip = 40.0;
  // Multiplies environment rewards before returns are computed. Reported
  // AR/EL and validation always use the unscaled rewards.
  double reward_scale = 1.0;
  std::uint64_t seed = 0;
  // Hogwild-style updates without the writer lock. Not deterministic.
  bool lock_free = false;

  void validate() const;
};

// R_t = r_t + gamma R_{t+1}, seeded with `bootstrap` past the last reward.
std::vector<double> compute_returns(std::span<const double> rewards, double bootstrap,
                                    double gamma);

struct AdamState {
  std::vector<float> m;
  std::vector<float> v;
  std::int64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamStep {
  double grad_norm = 0.0;     // before clipping
  double clipped_norm = 0.0;  // after clipping
  std::uint64_t version = 0;  // version after the update
};

class SharedParams {
 public:
  explicit SharedParams(NetParams<float> initial, bool lock_free = false);

  // Copies a consistent view of the parameters into `out` and returns the
  // version it belongs to.
  std::uint64_t snapshot(NetParams<float>& out) const;
  NetParams<float> params() const;
  std::uint64_t version() const noexcept { return version_.load(); }
  AdamState adam() const;

  // Global-norm clip then one bias-corrected Adam step. Throws NumericFault
  // (leaving everything untouched) when `grads` holds a non-finite value.
  AdamStep adam_apply(const NetParams<float>& grads, double alpha, double grad_clip);

 private:
  mutable std::shared_mutex mutex_;
  NetParams<float> params_;
  AdamState adam_;
  std::atomic<std::uint64_t> version_{0};
  bool lock_free_;
};

AdamStep adam_apply(SharedParams& shared, const NetParams<float>& grads, const TrainConfig& cfg);

enum class Protocol { Randomized, Single, Ue };

struct TrainLogRow {
  std::int64_t global_step = 0;
  int worker = 0;
  std::uint64_t update_index = 0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double grad_norm = 0.0;
  std::optional<double> episode_ar;
  std::optional<int> episode_el;
  std::uint64_t snapshot_version = 0;
  int rollout_length = 0;
};

struct ValidationRecord {
  std::int64_t global_step = 0;
  double ar_mean = 0.0;
  double el_mean = 0.0;
  bool best = false;
};

struct TrainSetup {
  TrainConfig cfg;
  Architecture arch;
  EvalSettings env;  // reward, kinematics, termination, render
  Protocol protocol = Protocol::Randomized;
  EnvPool pool;                    // sampled per episode (Randomized, Single)
  double ue_hide_probability = 0.5;  // Ue protocol, applied to pool.source
  std::vector<EnvSpec> val_specs;
  std::filesystem::path out_dir;
  // Called with each log row, outside any lock held by the trainer.
  std::function<void(const TrainLogRow&)> on_update;
  std::function<void(const ValidationRecord&)> on_validation;
};

struct TrainResult {
  std::filesystem::path best_checkpoint;
  std::filesystem::path final_checkpoint;
  std::filesystem::path log_path;
  std::int64_t global_steps = 0;
  std::uint64_t updates = 0;
  std::vector<ValidationRecord> validations;
  std::vector<TrainLogRow> rows;
  double best_ar = 0.0;
};

// Greedy evaluation of `params` on each spec with seeds 0..episodes-1;
// returns the pooled mean AR and EL.
ValidationRecord validate_params(const NetParams<float>& params,
                                 const std::vector<EnvSpec>& val_specs, int episodes,
                                 const EvalSettings& settings);

TrainResult train(const TrainSetup& setup);

// Writes the CSV header and rows.
void write_train_log(const std::filesystem::path& path, const std::vector<TrainLogRow>& rows);

}  // namespace atg
