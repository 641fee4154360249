// Command-line front end. Talks to the library only through atg.h.

#include <atg/atg.h>

#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <pthread.h>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct Failure {
  int code;
  std::string message;
};

int exit_code(atg_status s) {
  switch (s) {
    case ATG_OK: return kExitOk;
    case ATG_ERR_CONFIG:
    case ATG_ERR_USAGE:
    case ATG_ERR_VALIDATION: return kExitUsage;
    default: return kExitRuntime;
  }
}

void check(atg_status s) {
  if (s != ATG_OK) throw Failure{exit_code(s), atg_last_error()};
}

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::string env;
  std::optional<int> episodes;
  std::string checkpoint;
  std::string out;
  std::string protocol;
  std::string provider;
  std::vector<std::string> sets;
  // serve
  std::string host = "127.0.0.1";
  std::optional<int> port;
  // replay
  std::string trace;
  std::optional<std::int64_t> replay_seed;
};

struct Config {
  atg_config* cfg = nullptr;
  ~Config() { atg_config_free(cfg); }
};

void set_key(atg_config* cfg, const std::string& key, const std::string& value) {
  check(atg_config_set(cfg, key.c_str(), value.c_str()));
}

// Config file first, then flags, then --set overrides.
void resolve(Config& c, const Options& o) {
  if (!o.config.empty()) {
    check(atg_config_load(o.config.c_str(), &c.cfg));
  } else {
    check(atg_config_new(&c.cfg));
  }
  if (o.seed) set_key(c.cfg, "seed", std::to_string(*o.seed));
  if (o.workers) set_key(c.cfg, "train.workers", std::to_string(*o.workers));
  if (!o.env.empty()) set_key(c.cfg, "env", o.env);
  if (o.episodes) set_key(c.cfg, "eval.episodes", std::to_string(*o.episodes));
  if (!o.protocol.empty()) set_key(c.cfg, "train.protocol", o.protocol);
  if (!o.provider.empty()) set_key(c.cfg, "provider.kind", o.provider);
  if (!o.out.empty()) set_key(c.cfg, "out_dir", o.out);
  for (const std::string& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0)
      throw Failure{kExitUsage, "--set expects key=value, got '" + kv + "'"};
    set_key(c.cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  check(atg_config_validate(c.cfg));
}

std::string config_value(atg_config* cfg, const std::string& key) {
  const char* v = atg_config_get(cfg, key.c_str());
  if (!v) throw Failure{kExitUsage, atg_last_error()};
  return v;
}

fs::path make_run_dir(atg_config* cfg, const std::string& command) {
  std::string base = config_value(cfg, "out_dir");
  if (base.empty()) {
    const char* env = std::getenv("ATG_OUT_DIR");
    base = env && *env ? env : "runs";
  }
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  localtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y%m%d-%H%M%S", &tm);
  fs::path dir = fs::path(base) / (command + "-" + stamp);
  for (int k = 1; fs::exists(dir); ++k)
    dir = fs::path(base) / (command + "-" + stamp + "-" + std::to_string(k));
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Failure{kExitRuntime, "cannot create " + dir.string() + ": " + ec.message()};
  check(atg_config_save(cfg, (dir / "config.yaml").c_str()));
  std::cout << "run directory: " << dir.string() << "\n";
  return dir;
}

void print_eval(const char* label, const atg_eval_result& r) {
  std::printf("%s: %zu episodes  AR %.2f +- %.2f  EL %.1f +- %.1f\n", label, r.episodes,
              r.ar_mean, r.ar_std, r.el_mean, r.el_std);
}

void on_validation(std::int64_t step, double ar, double el, void*) {
  std::printf("validation @%lld  AR %.2f  EL %.1f\n", static_cast<long long>(step), ar, el);
  std::fflush(stdout);
}

int cmd_train(const Options& o) {
  Config c;
  resolve(c, o);
  const fs::path dir = make_run_dir(c.cfg, "train");
  atg_train_result r{};
  check(atg_train(c.cfg, dir.c_str(), on_validation, nullptr, &r));
  std::printf("trained %lld steps, %llu updates, best validation AR %.2f\n",
              static_cast<long long>(r.global_steps), static_cast<unsigned long long>(r.updates),
              r.best_validation_ar);
  return kExitOk;
}

int cmd_eval(const Options& o) {
  Config c;
  resolve(c, o);
  const fs::path dir = make_run_dir(c.cfg, "eval");
  atg_eval_result r{};
  check(atg_eval(c.cfg, o.checkpoint.c_str(), dir.c_str(), &r));
  print_eval(config_value(c.cfg, "env").c_str(), r);
  return kExitOk;
}

int cmd_baseline(const Options& o) {
  Config c;
  resolve(c, o);
  const fs::path dir = make_run_dir(c.cfg, "baseline");
  atg_eval_result r{};
  check(atg_baseline(c.cfg, dir.c_str(), &r));
  print_eval(config_value(c.cfg, "env").c_str(), r);
  return kExitOk;
}

int cmd_saliency(const Options& o) {
  Config c;
  resolve(c, o);
  const fs::path dir = make_run_dir(c.cfg, "saliency");
  atg_saliency_result r{};
  check(atg_saliency(c.cfg, o.checkpoint.c_str(), dir.c_str(), &r));
  std::printf("%d frames  top-5%% inside box %.3f  box area %.3f\n", r.frames,
              r.mean_inside_fraction, r.mean_box_fraction);
  return kExitOk;
}

int cmd_replay(const Options& o) {
  Config c;
  resolve(c, o);
  atg_replay_result r{};
  check(atg_replay(c.cfg, o.trace.c_str(), o.env.empty() ? nullptr : o.env.c_str(),
                   o.replay_seed.value_or(-1), &r));
  std::printf("trace AR %.12g EL %d  replay AR %.12g EL %d  max |dr| %.3g\n", r.trace_ar,
              r.trace_el, r.replay_ar, r.replay_el, r.max_reward_diff);
  if (!r.ok) {
    std::fprintf(stderr, "replay mismatch for %s\n", o.trace.c_str());
    return kExitRuntime;
  }
  std::printf("replay matches\n");
  return kExitOk;
}

int cmd_envlist() {
  for (std::size_t i = 0; i < atg_env_suite_size(); ++i) std::printf("%s\n", atg_env_suite_name(i));
  return kExitOk;
}

int cmd_serve(const Options& o) {
  Config c;
  resolve(c, o);
  int port = 5555;
  if (const char* env = std::getenv("ATG_PORT"); env && *env) {
    try {
      port = std::stoi(env);
    } catch (const std::exception&) {
      throw Failure{kExitUsage, std::string("ATG_PORT: not a port number: ") + env};
    }
  }
  if (o.port) port = *o.port;
  if (port < 0 || port > 65535) throw Failure{kExitUsage, "--port out of range"};

  // Route SIGINT/SIGTERM to a watcher thread that stops the server.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  atg_server* server = nullptr;
  check(atg_server_new(c.cfg, o.host.c_str(), static_cast<std::uint16_t>(port), &server));
  std::printf("listening on %s:%u\n", o.host.c_str(), atg_server_port(server));
  std::fflush(stdout);
  std::thread watcher([server, set] {
    int sig = 0;
    sigwait(&set, &sig);
    atg_server_stop(server);
  });
  const atg_status s = atg_server_run(server);
  // Unblock the watcher if the server stopped on its own.
  pthread_kill(watcher.native_handle(), SIGTERM);
  watcher.join();
  atg_server_free(server);
  check(s);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Active object tracking: train, evaluate and serve tracking agents"};
  app.require_subcommand(1);
  Options o;

  const auto add_common = [&o](CLI::App* sub) {
    sub->add_option("--config", o.config, "YAML run config")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "run seed");
    sub->add_option("--out", o.out, "base output directory (default $ATG_OUT_DIR, then ./runs)");
    sub->add_option("--set", o.sets, "override a config key, key=value (repeatable)");
  };

  CLI::App* train = app.add_subcommand("train", "train an agent");
  add_common(train);
  train->add_option("--workers", o.workers, "worker threads");
  train->add_option("--env", o.env, "base environment (suite name or spec file)");
  train->add_option("--protocol", o.protocol, "randomized | single | ue");

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval);
  eval->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("--env", o.env, "environment (suite name or spec file)");
  eval->add_option("--episodes", o.episodes, "episode count");

  CLI::App* baseline = app.add_subcommand("baseline", "run the PID-like camera controller");
  add_common(baseline);
  baseline->add_option("--env", o.env, "environment (suite name or spec file)");
  baseline->add_option("--episodes", o.episodes, "episode count");
  baseline->add_option("--provider", o.provider, "oracle | noisy");

  CLI::App* saliency = app.add_subcommand("saliency", "write saliency maps of a checkpoint");
  add_common(saliency);
  saliency->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
  saliency->add_option("--env", o.env, "environment (suite name or spec file)");

  CLI::App* serve = app.add_subcommand("serve", "run the environment server");
  add_common(serve);
  serve->add_option("--env", o.env, "default environment for reset");
  serve->add_option("--host", o.host, "bind address");
  serve->add_option("--port", o.port, "TCP port (default $ATG_PORT, then 5555)");

  CLI::App* replay = app.add_subcommand("replay", "re-simulate a trace and check its rewards");
  add_common(replay);
  replay->add_option("trace", o.trace, "trace file (.jsonl)")->required()->check(CLI::ExistingFile);
  replay->add_option("--env", o.env, "environment (default: from the trace file name)");
  replay->add_option("--trace-seed", o.replay_seed, "episode seed (default: from the file name)");

  app.add_subcommand("envlist", "list the test environments");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (train->parsed()) return cmd_train(o);
    if (eval->parsed()) return cmd_eval(o);
    if (baseline->parsed()) return cmd_baseline(o);
    if (saliency->parsed()) return cmd_saliency(o);
    if (serve->parsed()) return cmd_serve(o);
    if (replay->parsed()) return cmd_replay(o);
    return cmd_envlist();
  } catch (const Failure& f) {
    std::cerr << "error: " << f.message << "\n";
    return f.code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}
