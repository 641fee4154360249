#pragma once

// Episode runner, AR/EL reports, the named test-environment suite, saliency
// maps and the target-loss recovery probe.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "atg/policynet.hpp"
#include "atg/render.hpp"
#include "atg/world.hpp"

namespace atg {

struct EvalSettings {
  RewardParams reward;
  Kinematics kinematics;
  TerminationConfig termination;
  RenderConfig render;
  bool record_trace = true;
};

struct TraceRecord {
  int t = 0;
  Action action = Action::NoOp;
  double reward = 0.0;
  double x = 0.0;
  double y = 0.0;
  double a = 0.0;
  bool terminal = false;
};

struct EpisodeStats {
  double ar = 0.0;
  int el = 0;
  std::uint64_t seed = 0;
  std::vector<TraceRecord> trace;
};

struct EvalReport {
  std::string env;
  std::vector<EpisodeStats> episodes;  // ordered by seed
  double ar_mean = 0.0;
  double ar_std = 0.0;  // population standard deviation
  double el_mean = 0.0;
  double el_std = 0.0;

  std::size_t n() const noexcept { return episodes.size(); }
};

// Anything that picks an action each step. `frame` is the observation the
// agent sees; it is null when needs_frame() returns false.
class ActionSource {
 public:
  virtual ~ActionSource() = default;
  virtual void begin_episode(const WorldState& state, std::uint64_t seed) = 0;
  virtual Action act(const WorldState& state, const Frame* frame) = 0;
  virtual bool needs_frame() const { return true; }
};

// Runs the network on rendered frames. Greedy (argmax) by default.
class NetworkPolicy : public ActionSource {
 public:
  explicit NetworkPolicy(NetParams<float> params, bool sample = false);

  void begin_episode(const WorldState& state, std::uint64_t seed) override;
  Action act(const WorldState& state, const Frame* frame) override;

  const NetParams<float>& params() const noexcept { return params_; }
  const RecurrentState<float>& recurrent() const noexcept { return rstate_; }
  const PolicyOut& last_output() const noexcept { return last_; }

 private:
  NetParams<float> params_;
  bool sample_;
  RecurrentState<float> rstate_;
  std::mt19937_64 rng_;
  PolicyOut last_;
};

// Plays a fixed action list, then repeats its last entry (NoOp if empty).
class ScriptedPolicy : public ActionSource {
 public:
  explicit ScriptedPolicy(std::vector<Action> actions) : actions_(std::move(actions)) {}
  void begin_episode(const WorldState&, std::uint64_t) override { t_ = 0; }
  Action act(const WorldState& state, const Frame* frame) override;
  bool needs_frame() const override { return false; }

 private:
  std::vector<Action> actions_;
  std::size_t t_ = 0;
};

// Plays one episode from `seed` (world seed and action-source seed).
EpisodeStats run_episode(ActionSource& policy, const EnvSpec& spec, const EvalSettings& settings,
                         std::uint64_t seed);

// Episodes with seeds first_seed, first_seed + 1, ..., first_seed + n - 1.
EvalReport run_episodes(ActionSource& policy, const EnvSpec& spec, std::size_t n,
                        const EvalSettings& settings, std::uint64_t first_seed = 0);

// Fills the mean/std fields from `episodes`.
void summarize(EvalReport& report);

// ------------------------------------------------------------ environments

EnvSpec standard_spec();

// Standard, AppearanceSwap, PaletteSwap, Corridor, SharpTurn,
// Counterclockwise, Noise1, Noise2.
std::vector<EnvSpec> env_suite();
std::vector<std::string> env_suite_names();
// Throws UsageError listing the valid names.
EnvSpec suite_env(const std::string& name);

// Euclidean distance from `p` to the closed waypoint polyline.
double distance_to_path(const EnvSpec& spec, Vec2 p);
// Smallest angle between consecutive path segments at any waypoint, in
// radians (pi for a straight continuation).
double min_waypoint_angle(const EnvSpec& spec);

// ---------------------------------------------------------------- saliency

struct SaliencyMap {
  int width = 0;
  int height = 0;
  std::vector<double> values;  // row-major, in [0, 1]
  Action action = Action::NoOp;

  double at(int row, int col) const {
    return values[static_cast<std::size_t>(row) * static_cast<std::size_t>(width) +
                  static_cast<std::size_t>(col)];
  }
};

// |d logit(a) / d frame| maximized over channels and scaled to max 1, for an
// action a sampled from the network's own policy with `seed`.
SaliencyMap saliency_map(const NetParams<float>& params, const Frame& frame,
                         const RecurrentState<float>& rstate, std::uint64_t seed);

// Share of the top `top_fraction` most salient pixels that fall inside `box`,
// and the box's own share of the image.
struct SaliencyConcentration {
  double inside_fraction = 0.0;
  double box_fraction = 0.0;
};
SaliencyConcentration saliency_concentration(const SaliencyMap& map, const BBox& box,
                                             double top_fraction = 0.05);

// ------------------------------------------------------------------- probe

struct ProbeSettings {
  int horizon = 100;
  int min_warmup = 20;  // steps played before the teleport, drawn uniformly
  int max_warmup = 80;
  double margin = 0.2;  // radians beyond the edge of the field of view
  double distance = 2.0;
};

struct ProbeResult {
  int probes = 0;
  int recovered = 0;
  std::vector<int> recovery_steps;  // -1 when not recovered
  double rate() const noexcept {
    return probes == 0 ? 0.0 : static_cast<double>(recovered) / probes;
  }
};

// Places the target `distance` away at a bearing `margin` past the right
// (side > 0) or left edge of the field of view, snapped to a free cell.
Pose teleport_out_of_view(const WorldState& state, const RenderConfig& render, int side,
                          double margin, double distance);

ProbeResult recovery_probe(ActionSource& policy, const EnvSpec& spec, int probes,
                           const EvalSettings& settings, const ProbeSettings& probe,
                           std::uint64_t seed);

// ---------------------------------------------------------------- outputs

// One JSON object per step: t, action, reward, x, y, a, terminal.
void write_trace(std::ostream& out, const std::vector<TraceRecord>& trace);
void write_trace(const std::filesystem::path& path, const std::vector<TraceRecord>& trace);
std::vector<TraceRecord> read_trace(const std::filesystem::path& path);

// CSV header env,n,ar_mean,ar_std,el_mean,el_std plus one row per report.
void write_report_csv(std::ostream& out, const std::vector<EvalReport>& reports);

struct ReplayResult {
  double trace_ar = 0.0;
  double replay_ar = 0.0;
  int trace_el = 0;
  int replay_el = 0;
  double max_reward_diff = 0.0;
  bool ok = false;
};

// Re-simulates the trace's actions on `spec` from `seed` and compares
// rewards and terminal flags.
ReplayResult replay_trace(const std::vector<TraceRecord>& trace, const EnvSpec& spec,
                          const EvalSettings& settings, std::uint64_t seed,
                          double tolerance = 1e-9);

}  // namespace atg
