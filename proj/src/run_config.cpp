#include "atg/run_config.hpp"

#include <yaml-cpp/yaml.h>

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "atg/envspec_io.hpp"
#include "atg/errors.hpp"

namespace atg {

std::string_view protocol_name(Protocol p) noexcept {
  switch (p) {
    case Protocol::Randomized: return "randomized";
    case Protocol::Single: return "single";
    case Protocol::Ue: return "ue";
  }
  return "randomized";
}

Protocol parse_protocol(std::string_view name) {
  if (name == "randomized") return Protocol::Randomized;
  if (name == "single") return Protocol::Single;
  if (name == "ue") return Protocol::Ue;
  throw ConfigError("train.protocol: expected randomized, single or ue, got '" +
                    std::string(name) + "'");
}

namespace {

using Getter = std::function<std::string(const RunConfig&)>;
using Setter = std::function<void(RunConfig&, const YAML::Node&)>;

struct Field {
  std::string key;
  Getter get;
  Setter set;
};

template <typename T>
T as(const YAML::Node& node, const std::string& key) {
  if (!node.IsScalar()) throw ConfigError(key + ": expected a scalar value");
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError(key + ": malformed value '" + node.Scalar() + "'");
  }
}

std::string quote(const std::string& s) {
  YAML::Emitter e;
  e << YAML::DoubleQuoted << s;
  return e.c_str();
}

#define ATG_DOUBLE(key, expr)                                                         \
  Field {                                                                             \
    key, [](const RunConfig& c) { return format_double(c.expr); },                    \
        [](RunConfig& c, const YAML::Node& n) { c.expr = as<double>(n, key); }        \
  }
#define ATG_INT(key, expr, type)                                                      \
  Field {                                                                             \
    key, [](const RunConfig& c) { return std::to_string(c.expr); },                   \
        [](RunConfig& c, const YAML::Node& n) { c.expr = as<type>(n, key); }          \
  }
#define ATG_BOOL(key, expr)                                                           \
  Field {                                                                             \
    key, [](const RunConfig& c) { return std::string(c.expr ? "true" : "false"); },   \
        [](RunConfig& c, const YAML::Node& n) { c.expr = as<bool>(n, key); }          \
  }
#define ATG_STRING(key, expr)                                                         \
  Field {                                                                             \
    key, [](const RunConfig& c) { return quote(c.expr); },                            \
        [](RunConfig& c, const YAML::Node& n) { c.expr = as<std::string>(n, key); }   \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      ATG_INT("seed", seed, std::uint64_t),
      ATG_STRING("env", env),
      ATG_STRING("network", network),
      ATG_STRING("out_dir", out_dir),

      ATG_DOUBLE("train.alpha", train.alpha),
      ATG_DOUBLE("train.beta", train.beta),
      ATG_DOUBLE("train.gamma", train.gamma),
      ATG_INT("train.T", train.T, int),
      ATG_INT("train.workers", train.workers, int),
      ATG_INT("train.max_env_steps", train.max_env_steps, std::int64_t),
      ATG_INT("train.validation_interval", train.validation_interval, std::int64_t),
      ATG_INT("train.validation_episodes", train.validation_episodes, int),
      ATG_DOUBLE("train.grad_clip", train.grad_clip),
      ATG_DOUBLE("train.reward_scale", train.reward_scale),
      ATG_BOOL("train.lock_free", train.lock_free),
      Field{"train.protocol",
            [](const RunConfig& c) { return std::string(protocol_name(c.protocol)); },
            [](RunConfig& c, const YAML::Node& n) {
              c.protocol = parse_protocol(as<std::string>(n, "train.protocol"));
            }},

      ATG_INT("augment.perturbations", augment.perturbations, std::size_t),
      ATG_INT("augment.pool_seed", augment.pool_seed, std::uint64_t),
      ATG_DOUBLE("augment.radius", augment.bounds.radius),
      ATG_DOUBLE("augment.min_radius", augment.bounds.min_radius),
      ATG_DOUBLE("augment.heading_range", augment.bounds.heading_range),
      ATG_DOUBLE("augment.ue_hide_probability", augment.ue_hide_probability),

      ATG_DOUBLE("reward.A", reward.A),
      ATG_DOUBLE("reward.c", reward.c),
      ATG_DOUBLE("reward.d", reward.d),
      ATG_DOUBLE("reward.lambda", reward.lambda),

      ATG_DOUBLE("kinematics.turn_step", kinematics.turn_step),
      ATG_DOUBLE("kinematics.move_step", kinematics.move_step),

      ATG_INT("termination.max_length", termination.max_length, int),
      ATG_DOUBLE("termination.threshold", termination.threshold),

      ATG_DOUBLE("render.fov", render.fov),
      ATG_INT("render.columns", render.columns, int),
      ATG_INT("render.rows", render.rows, int),
      ATG_DOUBLE("render.max_view_distance", render.max_view_distance),
      ATG_DOUBLE("render.sprite_width", render.sprite_width),
      ATG_DOUBLE("render.sprite_height", render.sprite_height),
      ATG_DOUBLE("render.eye_height", render.eye_height),
      ATG_DOUBLE("render.wall_height", render.wall_height),

      ATG_DOUBLE("pid.ideal_area_fraction", pid.ideal_area_fraction),
      ATG_DOUBLE("pid.deadband_x", pid.deadband_x),
      ATG_DOUBLE("pid.deadband_y", pid.deadband_y),
      ATG_DOUBLE("pid.deadband_z", pid.deadband_z),
      Field{"pid.lost_target",
            [](const RunConfig& c) {
              return std::string(c.pid.lost_target_policy == LostTargetPolicy::NoOp
                                     ? "no-op"
                                     : "repeat-last-turn");
            },
            [](RunConfig& c, const YAML::Node& n) {
              const auto s = as<std::string>(n, "pid.lost_target");
              if (s == "no-op") c.pid.lost_target_policy = LostTargetPolicy::NoOp;
              else if (s == "repeat-last-turn")
                c.pid.lost_target_policy = LostTargetPolicy::RepeatLastTurn;
              else
                throw ConfigError("pid.lost_target: expected repeat-last-turn or no-op, got '" +
                                  s + "'");
            }},

      ATG_STRING("provider.kind", provider.kind),
      ATG_DOUBLE("provider.sigma", provider.sigma),
      ATG_DOUBLE("provider.dropout", provider.dropout),

      ATG_INT("eval.episodes", eval.episodes, int),
      ATG_BOOL("eval.sample", eval.sample),
      ATG_INT("eval.saliency_frames", eval.saliency_frames, int),
  };
  return table;
}

#undef ATG_DOUBLE
#undef ATG_INT
#undef ATG_BOOL
#undef ATG_STRING

const Field& field(std::string_view key) {
  for (const Field& f : fields())
    if (f.key == key) return f;
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

void apply_node(RunConfig& cfg, const YAML::Node& node, const std::string& prefix) {
  if (!node.IsMap()) throw ConfigError((prefix.empty() ? "config" : prefix) + ": expected a map");
  for (const auto& kv : node) {
    const std::string key = prefix + kv.first.as<std::string>();
    if (kv.second.IsMap()) {
      apply_node(cfg, kv.second, key + ".");
    } else {
      field(key).set(cfg, kv.second);
    }
  }
}

void rethrow_as_config(const std::function<void()>& check) {
  try {
    check();
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  } catch (const UsageError& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace

void RunConfig::validate() const {
  rethrow_as_config([&] { train.validate(); });
  rethrow_as_config([&] { reward.validate(); });
  rethrow_as_config([&] { kinematics.validate(); });
  rethrow_as_config([&] { termination.validate(); });
  rethrow_as_config([&] { render.validate(); });
  rethrow_as_config([&] { pid.validate(); });
  if (env.empty()) throw ConfigError("env: must name a suite environment or a spec file");
  if (network != "full" && network != "reduced")
    throw ConfigError("network: expected full or reduced, got '" + network + "'");
  const Architecture arch = run_architecture(*this);
  if (render.columns != arch.input_w || render.rows != arch.input_h)
    throw ConfigError("render.columns: render size " + std::to_string(render.columns) + "x" +
                      std::to_string(render.rows) + " does not match the " + network +
                      " network input " + std::to_string(arch.input_w) + "x" +
                      std::to_string(arch.input_h));
  if (!(augment.bounds.radius > 0.0) || augment.bounds.min_radius < 0.0 ||
      augment.bounds.min_radius >= augment.bounds.radius)
    throw ConfigError("augment.radius: need 0 <= min_radius < radius");
  if (!(augment.bounds.heading_range >= 0.0))
    throw ConfigError("augment.heading_range: must be >= 0");
  if (!(augment.ue_hide_probability >= 0.0 && augment.ue_hide_probability <= 1.0))
    throw ConfigError("augment.ue_hide_probability: must lie in [0, 1]");
  if (provider.kind != "oracle" && provider.kind != "noisy")
    throw ConfigError("provider.kind: expected oracle or noisy, got '" + provider.kind + "'");
  if (!(provider.sigma >= 0.0)) throw ConfigError("provider.sigma: must be >= 0");
  if (!(provider.dropout >= 0.0 && provider.dropout <= 1.0))
    throw ConfigError("provider.dropout: must lie in [0, 1]");
  if (eval.episodes < 1) throw ConfigError("eval.episodes: must be >= 1");
  if (eval.saliency_frames < 1) throw ConfigError("eval.saliency_frames: must be >= 1");
}

RunConfig parse_run_config(std::string_view yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(yaml_text));
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  RunConfig cfg;
  if (root.IsNull()) return cfg;
  apply_node(cfg, root, "");
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_run_config(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string run_config_to_yaml(const RunConfig& cfg) {
  std::string out;
  std::string section;
  for (const Field& f : fields()) {
    const auto dot = f.key.find('.');
    if (dot == std::string::npos) {
      out += f.key + ": " + f.get(cfg) + "\n";
      continue;
    }
    const std::string sec = f.key.substr(0, dot);
    if (sec != section) {
      section = sec;
      out += sec + ":\n";
    }
    out += "  " + f.key.substr(dot + 1) + ": " + f.get(cfg) + "\n";
  }
  return out;
}

void save_run_config(const RunConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << run_config_to_yaml(cfg);
}

void set_run_config_key(RunConfig& cfg, std::string_view key, std::string_view value) {
  const Field& f = field(key);
  YAML::Node node;
  try {
    node = YAML::Load(std::string(value));
  } catch (const YAML::Exception&) {
    throw ConfigError(std::string(key) + ": malformed value '" + std::string(value) + "'");
  }
  if (node.IsNull()) node = YAML::Node(std::string(value));
  f.set(cfg, node);
}

std::string get_run_config_key(const RunConfig& cfg, std::string_view key) {
  const std::string text = field(key).get(cfg);
  const YAML::Node node = YAML::Load(text);
  return node.IsScalar() ? node.Scalar() : text;
}

std::vector<std::string> run_config_keys() {
  std::vector<std::string> keys;
  for (const Field& f : fields()) keys.push_back(f.key);
  return keys;
}

Architecture run_architecture(const RunConfig& cfg) {
  return cfg.network == "reduced" ? Architecture::reduced() : Architecture{};
}

TrainConfig run_train_config(const RunConfig& cfg) {
  TrainConfig t = cfg.train;
  t.seed = cfg.seed;
  return t;
}

EvalSettings run_eval_settings(const RunConfig& cfg) {
  EvalSettings s;
  s.reward = cfg.reward;
  s.kinematics = cfg.kinematics;
  s.termination = cfg.termination;
  s.render = cfg.render;
  return s;
}

EnvSpec resolve_env(const std::string& name_or_path) {
  for (const std::string& n : env_suite_names())
    if (n == name_or_path) return suite_env(n);
  if (std::filesystem::exists(name_or_path)) return load_spec(name_or_path);
  return suite_env(name_or_path);  // throws, listing the suite names
}

EnvPool run_pool(const RunConfig& cfg, const EnvSpec& base) {
  if (cfg.protocol == Protocol::Single) return single_env_pool(base);
  return perturb_initials(base, cfg.augment.perturbations, cfg.augment.pool_seed,
                          cfg.augment.bounds);
}

std::shared_ptr<BBoxProvider> run_provider(const RunConfig& cfg) {
  if (cfg.provider.kind == "noisy")
    return std::make_shared<NoisyProvider>(cfg.provider.sigma, cfg.provider.dropout);
  return std::make_shared<OracleProvider>();
}

}  // namespace atg
