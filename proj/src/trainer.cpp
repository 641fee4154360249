#include "atg/trainer.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <thread>

#if defined(__SSE__)
#include <xmmintrin.h>
#include <pmmintrin.h>
#endif

#include "atg/checkpoint.hpp"
#include "atg/errors.hpp"

namespace atg {

void TrainConfig::validate() const {
  if (!(alpha > 0.0)) throw ValidationError("train.alpha", "must be positive");
  if (!(beta >= 0.0)) throw ValidationError("train.beta", "must be >= 0");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ValidationError("train.gamma", "must lie in (0, 1]");
  if (T < 1) throw ValidationError("train.T", "must be >= 1");
  if (workers < 1) throw UsageError("train.workers: need at least one worker");
  if (max_env_steps < 0) throw ValidationError("train.max_env_steps", "must be >= 0");
  if (validation_interval < 1) throw ValidationError("train.validation_interval", "must be >= 1");
  if (validation_episodes < 1) throw ValidationError("train.validation_episodes", "must be >= 1");
  if (!(grad_clip > 0.0)) throw ValidationError("train.grad_clip", "must be positive");
  if (!(reward_scale > 0.0)) throw ValidationError("train.reward_scale", "must be positive");
}

std::vector<double> compute_returns(std::span<const double> rewards, double bootstrap,
                                    double gamma) {
  std::vector<double> out(rewards.size());
  double r = bootstrap;
  for (std::size_t k = rewards.size(); k-- > 0;) {
    r = rewards[k] + gamma * r;
    out[k] = r;
  }
  return out;
}

// ------------------------------------------------------------ shared store

SharedParams::SharedParams(NetParams<float> initial, bool lock_free)
    : params_(std::move(initial)), lock_free_(lock_free) {
  adam_.m.assign(params_.flat().size(), 0.0f);
  adam_.v.assign(params_.flat().size(), 0.0f);
}

std::uint64_t SharedParams::snapshot(NetParams<float>& out) const {
  if (!(out.arch() == params_.arch()) || out.flat().size() != params_.flat().size())
    out = NetParams<float>(params_.arch());
  if (lock_free_) {
    const std::uint64_t v = version_.load(std::memory_order_acquire);
    auto src = const_cast<NetParams<float>&>(params_).flat();
    auto dst = out.flat();
    for (std::size_t i = 0; i < src.size(); ++i)
      dst[i] = std::atomic_ref<float>(src[i]).load(std::memory_order_relaxed);
    return v;
  }
  std::shared_lock lock(mutex_);
  std::copy(params_.flat().begin(), params_.flat().end(), out.flat().begin());
  return version_.load();
}

NetParams<float> SharedParams::params() const {
  NetParams<float> out(params_.arch());
  snapshot(out);
  return out;
}

AdamState SharedParams::adam() const {
  std::shared_lock lock(mutex_);
  return adam_;
}

AdamStep SharedParams::adam_apply(const NetParams<float>& grads, double alpha, double grad_clip) {
  const auto g = grads.flat();
  if (g.size() != params_.flat().size()) throw UsageError("adam_apply: gradient shape mismatch");
  double sq = 0.0;
  for (int id = 0; id < kTensorCount; ++id) {
    double s = 0.0;
    for (float v : grads.tensor(static_cast<TensorId>(id))) s += static_cast<double>(v * v);
    if (!std::isfinite(s))
      throw NumericFault(std::string(grads.info(static_cast<TensorId>(id)).name),
                         "non-finite gradient, update rejected");
    sq += s;
  }
  AdamStep step;
  step.grad_norm = std::sqrt(sq);
  const double scale = step.grad_norm > grad_clip ? grad_clip / step.grad_norm : 1.0;
  step.clipped_norm = step.grad_norm * scale;

  std::unique_lock lock(mutex_, std::defer_lock);
  if (!lock_free_) lock.lock();
  std::int64_t t;
  if (lock_free_) {
    t = std::atomic_ref<std::int64_t>(adam_.t).fetch_add(1) + 1;
  } else {
    t = ++adam_.t;
  }
  const double b1 = adam_.beta1, b2 = adam_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
  // alpha * (m / c1) / (sqrt(v / c2) + eps), with the bias corrections
  // folded into the step size and epsilon.
  const auto lr = static_cast<float>(alpha * std::sqrt(c2) / c1);
  const auto eps = static_cast<float>(adam_.eps * std::sqrt(c2));
  const auto fb1 = static_cast<float>(b1), fb2 = static_cast<float>(b2);
  const auto gscale = static_cast<float>(scale);
  auto p = params_.flat();
  if (lock_free_) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      std::atomic_ref<float> mi(adam_.m[i]), vi(adam_.v[i]), pi(p[i]);
      const float gi = g[i] * gscale;
      const float m = fb1 * mi.load(std::memory_order_relaxed) + (1.0f - fb1) * gi;
      const float v = fb2 * vi.load(std::memory_order_relaxed) + (1.0f - fb2) * gi * gi;
      mi.store(m, std::memory_order_relaxed);
      vi.store(v, std::memory_order_relaxed);
      pi.store(pi.load(std::memory_order_relaxed) - lr * m / (std::sqrt(v) + eps),
               std::memory_order_relaxed);
    }
  } else {
    float* m = adam_.m.data();
    float* v = adam_.v.data();
    float* w = p.data();
    const float* gp = g.data();
    const std::size_t n = g.size();
    for (std::size_t i = 0; i < n; ++i) {
      const float gi = gp[i] * gscale;
      m[i] = fb1 * m[i] + (1.0f - fb1) * gi;
      v[i] = fb2 * v[i] + (1.0f - fb2) * gi * gi;
      w[i] -= lr * m[i] / (std::sqrt(v[i]) + eps);
    }
  }
  step.version = version_.fetch_add(1, std::memory_order_acq_rel) + 1;
  return step;
}

AdamStep adam_apply(SharedParams& shared, const NetParams<float>& grads, const TrainConfig& cfg) {
  return shared.adam_apply(grads, cfg.alpha, cfg.grad_clip);
}

// -------------------------------------------------------------- validation

ValidationRecord validate_params(const NetParams<float>& params,
                                 const std::vector<EnvSpec>& val_specs, int episodes,
                                 const EvalSettings& settings) {
  if (val_specs.empty()) throw UsageError("validate: no validation environments");
  EvalSettings quiet = settings;
  quiet.record_trace = false;
  NetworkPolicy policy(params);
  double ar = 0.0, el = 0.0;
  std::size_t n = 0;
  for (const EnvSpec& spec : val_specs) {
    const EvalReport r = run_episodes(policy, spec, static_cast<std::size_t>(episodes), quiet, 0);
    for (const EpisodeStats& e : r.episodes) {
      ar += e.ar;
      el += e.el;
      ++n;
    }
  }
  ValidationRecord rec;
  rec.ar_mean = ar / static_cast<double>(n);
  rec.el_mean = el / static_cast<double>(n);
  return rec;
}

// ------------------------------------------------------------------- train

namespace {

std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

constexpr const char* kLogHeader =
    "global_step,worker,update_index,policy_loss,value_loss,entropy,grad_norm,episode_AR,"
    "episode_EL\n";

void write_row(std::ostream& out, const TrainLogRow& r) {
  out << r.global_step << ',' << r.worker << ',' << r.update_index << ','
      << fmt17(r.policy_loss) << ',' << fmt17(r.value_loss) << ',' << fmt17(r.entropy) << ','
      << fmt17(r.grad_norm) << ',' << (r.episode_ar ? fmt17(*r.episode_ar) : "") << ','
      << (r.episode_el ? std::to_string(*r.episode_el) : "") << '\n';
}

// Adam's second-moment estimates decay toward subnormal floats, which are
// very slow on x86.
void flush_subnormals() {
#if defined(__SSE__)
  _MM_SET_FLUSH_ZERO_MODE(_MM_FLUSH_ZERO_ON);
  _MM_SET_DENORMALS_ZERO_MODE(_MM_DENORMALS_ZERO_ON);
#endif
}

std::uint64_t worker_seed(std::uint64_t seed, int worker) {
  return seed ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(worker + 1));
}

class Trainer {
 public:
  explicit Trainer(const TrainSetup& setup)
      : setup_(setup), cfg_(setup.cfg),
        shared_(init_params<float>(setup.arch, setup.cfg.seed), setup.cfg.lock_free) {}

  TrainResult run() {
    namespace fs = std::filesystem;
    fs::create_directories(setup_.out_dir);
    result_.best_checkpoint = setup_.out_dir / "best.ckpt";
    result_.final_checkpoint = setup_.out_dir / "final.ckpt";
    result_.log_path = setup_.out_dir / "train_log.csv";
    log_.open(result_.log_path, std::ios::trunc);
    if (!log_) throw IoError("cannot write " + result_.log_path.string());
    log_ << kLogHeader;
    save_checkpoint(shared_.params(), result_.best_checkpoint);
    best_ar_ = -std::numeric_limits<double>::infinity();

    std::vector<std::thread> threads;
    std::vector<std::string> errors(static_cast<std::size_t>(cfg_.workers));
    for (int w = 0; w < cfg_.workers; ++w) {
      threads.emplace_back([this, w, &errors] {
        flush_subnormals();
        try {
          worker_loop(w);
        } catch (const std::exception& e) {
          errors[static_cast<std::size_t>(w)] = e.what();
        }
      });
    }
    for (auto& t : threads) t.join();
    log_.flush();

    std::string failures;
    std::size_t failed = 0;
    for (int w = 0; w < cfg_.workers; ++w) {
      const auto& e = errors[static_cast<std::size_t>(w)];
      if (e.empty()) continue;
      ++failed;
      failures += "worker " + std::to_string(w) + ": " + e + "\n";
      std::fprintf(stderr, "worker %d aborted: %s\n", w, e.c_str());
    }
    if (failed == static_cast<std::size_t>(cfg_.workers))
      throw NumericFault("trainer", "all workers aborted\n" + failures);

    const std::int64_t steps = global_steps_.load();
    if (steps > 0 && steps != last_validated_step_) run_validation(steps);
    save_checkpoint(shared_.params(), result_.final_checkpoint);
    result_.global_steps = steps;
    result_.updates = shared_.version();
    result_.best_ar = best_ar_;
    return std::move(result_);
  }

 private:
  void worker_loop(int id) {
    std::mt19937_64 rng(worker_seed(cfg_.seed, id));
    const Architecture& arch = setup_.arch;
    NetParams<float> local(arch), grads(arch);
    ForwardTape<float> tape(arch, cfg_.T);
    RecurrentState<float> rstate = RecurrentState<float>::zeros(arch);
    WorldState world;
    bool need_reset = true;
    std::optional<Pose> last_failure;
    std::vector<Action> actions;
    std::vector<double> rewards;
    Frame frame;

    while (global_steps_.load() < cfg_.max_env_steps) {
      const std::uint64_t snap_version = shared_.snapshot(local);
      if (need_reset) {
        world = spawn_episode(next_spec(rng, last_failure), rng());
        last_failure.reset();
        rstate = RecurrentState<float>::zeros(arch);
        need_reset = false;
      }
      tape.reset(rstate);
      actions.clear();
      rewards.clear();
      bool terminal = false;
      std::int64_t steps_after = 0;
      for (int t = 0; t < cfg_.T; ++t) {
        frame = render_frame(world, setup_.env.render);
        const PolicyOut out = tape.step(local, frame.data());
        const Action a = sample_action(out.probs, rng);
        const StepOutcome o = step(world, a, setup_.env.reward, setup_.env.kinematics,
                                   setup_.env.termination);
        actions.push_back(a);
        rewards.push_back(o.reward * cfg_.reward_scale);
        steps_after = global_steps_.fetch_add(1) + 1;
        if (o.terminal) {
          terminal = true;
          break;
        }
      }
      rstate = tape.current_state();
      double bootstrap = 0.0;
      if (!terminal) {
        frame = render_frame(world, setup_.env.render);
        bootstrap = forward(local, frame.data(), rstate).first.value;
      }
      const std::vector<double> returns = compute_returns(rewards, bootstrap, cfg_.gamma);
      const LossDiagnostics diag =
          loss_and_grads(local, tape, actions, returns, cfg_.beta, grads);
      const AdamStep applied = adam_apply(shared_, grads, cfg_);

      TrainLogRow row;
      row.worker = id;
      row.update_index = applied.version;
      row.policy_loss = diag.policy_loss;
      row.value_loss = diag.value_loss;
      row.entropy = diag.entropy;
      row.grad_norm = diag.grad_norm;
      row.snapshot_version = snap_version;
      row.rollout_length = static_cast<int>(actions.size());
      if (terminal) {
        row.episode_ar = world.accumulated_reward;
        row.episode_el = world.step_count;
        if (world.accumulated_reward < setup_.env.termination.threshold) last_failure = world.agent;
        need_reset = true;
      }
      {
        std::lock_guard lock(log_mutex_);
        row.global_step = global_steps_.load();
        write_row(log_, row);
        result_.rows.push_back(row);
      }
      if (setup_.on_update) setup_.on_update(row);
      maybe_validate(steps_after);
    }
  }

  std::shared_ptr<const EnvSpec> next_spec(std::mt19937_64& rng,
                                           const std::optional<Pose>& last_failure) {
    if (setup_.protocol == Protocol::Ue) {
      return std::make_shared<const EnvSpec>(
          ue_randomize(setup_.pool.source, rng(), last_failure, setup_.ue_hide_probability));
    }
    return std::make_shared<const EnvSpec>(sample_env(setup_.pool, rng));
  }

  void maybe_validate(std::int64_t steps_after) {
    const std::int64_t bucket = std::min(steps_after, cfg_.max_env_steps) / cfg_.validation_interval;
    std::int64_t seen = validated_bucket_.load();
    while (bucket > seen) {
      if (validated_bucket_.compare_exchange_weak(seen, bucket)) {
        run_validation(bucket * cfg_.validation_interval);
        return;
      }
    }
  }

  void run_validation(std::int64_t at_step) {
    const NetParams<float> params = shared_.params();
    ValidationRecord rec = validate_params(params, setup_.val_specs, cfg_.validation_episodes,
                                           setup_.env);
    rec.global_step = at_step;
    {
      std::lock_guard lock(validation_mutex_);
      save_checkpoint(params, setup_.out_dir / ("step_" + std::to_string(at_step) + ".ckpt"));
      if (rec.ar_mean > best_ar_) {
        best_ar_ = rec.ar_mean;
        rec.best = true;
        save_checkpoint(params, result_.best_checkpoint);
      }
      last_validated_step_ = at_step;
      result_.validations.push_back(rec);
    }
    if (setup_.on_validation) setup_.on_validation(rec);
  }

  const TrainSetup& setup_;
  const TrainConfig& cfg_;
  SharedParams shared_;
  std::atomic<std::int64_t> global_steps_{0};
  std::atomic<std::int64_t> validated_bucket_{0};
  std::mutex log_mutex_;
  std::mutex validation_mutex_;
  std::ofstream log_;
  TrainResult result_;
  double best_ar_ = 0.0;
  std::int64_t last_validated_step_ = 0;
};

}  // namespace

TrainResult train(const TrainSetup& setup) {
  setup.cfg.validate();
  setup.arch.validate();
  setup.env.reward.validate();
  setup.env.kinematics.validate();
  setup.env.termination.validate();
  setup.env.render.validate();
  if (setup.val_specs.empty()) throw UsageError("train: no validation environments");
  if (setup.protocol != Protocol::Ue && setup.pool.specs.empty())
    throw UsageError("train: empty environment pool");
  if (setup.env.render.columns != setup.arch.input_w || setup.env.render.rows != setup.arch.input_h)
    throw UsageError("train: render size does not match the network input");
  if (setup.out_dir.empty()) throw UsageError("train: no output directory");
  Trainer trainer(setup);
  return trainer.run();
}

void write_train_log(const std::filesystem::path& path, const std::vector<TrainLogRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << kLogHeader;
  for (const TrainLogRow& r : rows) write_row(out, r);
}

}  // namespace atg
