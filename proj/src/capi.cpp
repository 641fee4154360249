#include "atg/atg.h"

#include <cstring>
#include <memory>
#include <string>

#include "atg/checkpoint.hpp"
#include "atg/envserver.hpp"
#include "atg/errors.hpp"
#include "atg/run_config.hpp"
#include "atg/runs.hpp"

struct atg_config {
  atg::RunConfig cfg;
  std::string text;
};

struct atg_env {
  atg::RunConfig cfg;
  atg::EnvSpec spec;
  std::optional<atg::WorldState> world;
};

struct atg_server {
  std::unique_ptr<atg::Server> server;
};

namespace {

thread_local std::string g_last_error;

template <typename F>
atg_status guarded(F&& f) {
  try {
    f();
    g_last_error.clear();
    return ATG_OK;
  } catch (const atg::ValidationError& e) {
    g_last_error = e.what();
    return ATG_ERR_VALIDATION;
  } catch (const atg::UsageError& e) {
    g_last_error = e.what();
    return ATG_ERR_USAGE;
  } catch (const atg::NumericFault& e) {
    g_last_error = e.what();
    return ATG_ERR_NUMERIC;
  } catch (const atg::ConfigError& e) {
    g_last_error = e.what();
    return ATG_ERR_CONFIG;
  } catch (const atg::IoError& e) {
    g_last_error = e.what();
    return ATG_ERR_IO;
  } catch (const std::filesystem::filesystem_error& e) {
    g_last_error = e.what();
    return ATG_ERR_IO;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return ATG_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown failure";
    return ATG_ERR_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (!p) throw atg::UsageError(std::string(what) + " is NULL");
}

void fill(const atg::EvalReport& r, atg_eval_result* out) {
  if (!out) return;
  out->episodes = r.n();
  out->ar_mean = r.ar_mean;
  out->ar_std = r.ar_std;
  out->el_mean = r.el_mean;
  out->el_std = r.el_std;
}

}  // namespace

extern "C" {

const char* atg_last_error(void) { return g_last_error.c_str(); }

const char* atg_status_name(atg_status status) {
  switch (status) {
    case ATG_OK: return "ok";
    case ATG_ERR_VALIDATION: return "validation";
    case ATG_ERR_USAGE: return "usage";
    case ATG_ERR_NUMERIC: return "numeric";
    case ATG_ERR_CONFIG: return "config";
    case ATG_ERR_IO: return "io";
    case ATG_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* atg_version(void) { return "0.1.0"; }

// --------------------------------------------------------------- config

atg_status atg_config_new(atg_config** out) {
  return guarded([&] {
    require(out, "out");
    *out = new atg_config{};
  });
}

atg_status atg_config_load(const char* path, atg_config** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    auto c = std::make_unique<atg_config>();
    c->cfg = atg::load_run_config(path);
    *out = c.release();
  });
}

atg_status atg_config_set(atg_config* cfg, const char* key, const char* value) {
  return guarded([&] {
    require(cfg, "cfg");
    require(key, "key");
    require(value, "value");
    atg::set_run_config_key(cfg->cfg, key, value);
  });
}

const char* atg_config_get(atg_config* cfg, const char* key) {
  const atg_status s = guarded([&] {
    require(cfg, "cfg");
    require(key, "key");
    cfg->text = atg::get_run_config_key(cfg->cfg, key);
  });
  return s == ATG_OK ? cfg->text.c_str() : nullptr;
}

atg_status atg_config_validate(const atg_config* cfg) {
  return guarded([&] {
    require(cfg, "cfg");
    cfg->cfg.validate();
  });
}

atg_status atg_config_save(const atg_config* cfg, const char* path) {
  return guarded([&] {
    require(cfg, "cfg");
    require(path, "path");
    atg::save_run_config(cfg->cfg, path);
  });
}

const char* atg_config_text(atg_config* cfg) {
  if (!cfg) return nullptr;
  cfg->text = atg::run_config_to_yaml(cfg->cfg);
  return cfg->text.c_str();
}

void atg_config_free(atg_config* cfg) { delete cfg; }

// ---------------------------------------------------------- environments

size_t atg_env_suite_size(void) { return atg::env_suite_names().size(); }

const char* atg_env_suite_name(size_t index) {
  static const std::vector<std::string> names = atg::env_suite_names();
  return index < names.size() ? names[index].c_str() : nullptr;
}

int atg_action_from_name(const char* name) {
  if (!name) return -1;
  const auto a = atg::parse_action(name);
  return a ? static_cast<int>(atg::action_index(*a)) : -1;
}

const char* atg_action_name(int action) {
  if (action < 0 || action >= static_cast<int>(atg::kNumActions)) return nullptr;
  // action_name returns views of string literals, so data() is terminated.
  return atg::action_name(atg::kAllActions[static_cast<std::size_t>(action)]).data();
}

atg_status atg_env_new(const atg_config* cfg, const char* env, atg_env** out) {
  return guarded([&] {
    require(cfg, "cfg");
    require(out, "out");
    cfg->cfg.validate();
    auto e = std::make_unique<atg_env>();
    e->cfg = cfg->cfg;
    e->spec = atg::resolve_env(env ? std::string(env) : cfg->cfg.env);
    *out = e.release();
  });
}

atg_status atg_env_reset(atg_env* env, uint64_t seed) {
  return guarded([&] {
    require(env, "env");
    env->world = atg::spawn_episode(env->spec, seed);
  });
}

atg_status atg_env_step(atg_env* env, int action, double* reward, int* terminal) {
  return guarded([&] {
    require(env, "env");
    if (!env->world) throw atg::UsageError("step before reset");
    if (action < 0 || action >= static_cast<int>(atg::kNumActions))
      throw atg::UsageError("action index " + std::to_string(action) + " out of range");
    const atg::StepOutcome o =
        atg::step(*env->world, atg::kAllActions[static_cast<std::size_t>(action)],
                  env->cfg.reward, env->cfg.kinematics, env->cfg.termination);
    if (reward) *reward = o.reward;
    if (terminal) *terminal = o.terminal ? 1 : 0;
  });
}

atg_status atg_env_observation(const atg_env* env, uint8_t* buf, size_t cap, size_t* size,
                               int* width, int* height, int* channels) {
  return guarded([&] {
    require(env, "env");
    if (!env->world) throw atg::UsageError("observation before reset");
    const atg::Frame f = atg::render_frame(*env->world, env->cfg.render);
    const std::vector<std::uint8_t> bytes = f.to_bytes();
    if (size) *size = bytes.size();
    if (width) *width = f.width();
    if (height) *height = f.height();
    if (channels) *channels = atg::Frame::channels();
    if (!buf) return;
    if (cap < bytes.size())
      throw atg::UsageError("observation buffer holds " + std::to_string(cap) + " bytes, need " +
                            std::to_string(bytes.size()));
    std::memcpy(buf, bytes.data(), bytes.size());
  });
}

atg_status atg_env_local(const atg_env* env, double* x, double* y, double* a) {
  return guarded([&] {
    require(env, "env");
    if (!env->world) throw atg::UsageError("local coordinates before reset");
    const atg::LocalCoords l = atg::local_coords(env->world->agent, env->world->target);
    if (x) *x = l.x;
    if (y) *y = l.y;
    if (a) *a = l.a;
  });
}

atg_status atg_env_progress(const atg_env* env, int* step, double* accumulated_reward) {
  return guarded([&] {
    require(env, "env");
    if (!env->world) throw atg::UsageError("progress before reset");
    if (step) *step = env->world->step_count;
    if (accumulated_reward) *accumulated_reward = env->world->accumulated_reward;
  });
}

void atg_env_free(atg_env* env) { delete env; }

// ------------------------------------------------------------------ runs

atg_status atg_train(const atg_config* cfg, const char* out_dir, atg_validation_fn on_validation,
                     void* user, atg_train_result* out) {
  return guarded([&] {
    require(cfg, "cfg");
    require(out_dir, "out_dir");
    atg::TrainHooks hooks;
    if (on_validation)
      hooks.on_validation = [on_validation, user](const atg::ValidationRecord& v) {
        on_validation(v.global_step, v.ar_mean, v.el_mean, user);
      };
    const atg::TrainResult r = atg::run_training(cfg->cfg, out_dir, hooks);
    if (out) {
      out->global_steps = r.global_steps;
      out->updates = r.updates;
      out->best_validation_ar = r.best_ar;
      out->validations = r.validations.size();
    }
  });
}

atg_status atg_eval(const atg_config* cfg, const char* checkpoint, const char* out_dir,
                    atg_eval_result* out) {
  return guarded([&] {
    require(cfg, "cfg");
    require(checkpoint, "checkpoint");
    require(out_dir, "out_dir");
    const auto params = atg::load_checkpoint(checkpoint, atg::run_architecture(cfg->cfg));
    fill(atg::run_evaluation(cfg->cfg, params, out_dir), out);
  });
}

atg_status atg_baseline(const atg_config* cfg, const char* out_dir, atg_eval_result* out) {
  return guarded([&] {
    require(cfg, "cfg");
    require(out_dir, "out_dir");
    fill(atg::run_pid_baseline(cfg->cfg, out_dir), out);
  });
}

atg_status atg_saliency(const atg_config* cfg, const char* checkpoint, const char* out_dir,
                        atg_saliency_result* out) {
  return guarded([&] {
    require(cfg, "cfg");
    require(checkpoint, "checkpoint");
    require(out_dir, "out_dir");
    const auto params = atg::load_checkpoint(checkpoint, atg::run_architecture(cfg->cfg));
    const atg::SaliencyRun r = atg::run_saliency(cfg->cfg, params, out_dir);
    if (out) {
      out->frames = r.frames;
      out->mean_inside_fraction = r.mean_inside_fraction;
      out->mean_box_fraction = r.mean_box_fraction;
    }
  });
}

atg_status atg_replay(const atg_config* cfg, const char* trace, const char* env, int64_t seed,
                      atg_replay_result* out) {
  return guarded([&] {
    require(cfg, "cfg");
    require(trace, "trace");
    const auto parsed = atg::parse_trace_file_name(trace);
    std::string env_name = env ? std::string(env) : (parsed ? parsed->first : cfg->cfg.env);
    std::uint64_t s = seed >= 0 ? static_cast<std::uint64_t>(seed)
                                : (parsed ? parsed->second : cfg->cfg.seed);
    const atg::ReplayResult r = atg::run_replay(cfg->cfg, trace, env_name, s);
    if (out) {
      out->trace_ar = r.trace_ar;
      out->replay_ar = r.replay_ar;
      out->trace_el = r.trace_el;
      out->replay_el = r.replay_el;
      out->max_reward_diff = r.max_reward_diff;
      out->ok = r.ok ? 1 : 0;
    }
  });
}

// ---------------------------------------------------------------- server

atg_status atg_server_new(const atg_config* cfg, const char* host, uint16_t port,
                          atg_server** out) {
  return guarded([&] {
    require(cfg, "cfg");
    require(host, "host");
    require(out, "out");
    cfg->cfg.validate();
    atg::ServerDefaults d;
    d.spec = atg::resolve_env(cfg->cfg.env);
    d.render = cfg->cfg.render;
    d.reward = cfg->cfg.reward;
    d.kinematics = cfg->cfg.kinematics;
    d.termination = cfg->cfg.termination;
    auto s = std::make_unique<atg_server>();
    s->server = std::make_unique<atg::Server>(host, port, std::move(d));
    *out = s.release();
  });
}

uint16_t atg_server_port(const atg_server* server) {
  return server ? server->server->port() : 0;
}

atg_status atg_server_run(atg_server* server) {
  return guarded([&] {
    require(server, "server");
    server->server->run();
  });
}

void atg_server_stop(atg_server* server) {
  if (server) server->server->stop();
}

void atg_server_free(atg_server* server) { delete server; }

}  // extern "C"
