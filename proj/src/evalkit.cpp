#include "atg/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>

#include <nlohmann/json.hpp>

#include "atg/augment.hpp"
#include "atg/errors.hpp"

namespace atg {

namespace {

constexpr double kPi = std::numbers::pi;

std::uint64_t policy_seed(std::uint64_t seed) {
  return seed * 0x9E3779B97F4A7C15ULL + 0x632BE59BD9B4E019ULL;
}

}  // namespace

// ----------------------------------------------------------------- policies

NetworkPolicy::NetworkPolicy(NetParams<float> params, bool sample)
    : params_(std::move(params)), sample_(sample),
      rstate_(RecurrentState<float>::zeros(params_.arch())) {}

void NetworkPolicy::begin_episode(const WorldState&, std::uint64_t seed) {
  rstate_ = RecurrentState<float>::zeros(params_.arch());
  rng_.seed(policy_seed(seed));
}

Action NetworkPolicy::act(const WorldState&, const Frame* frame) {
  if (!frame) throw UsageError("NetworkPolicy: needs a frame");
  auto [out, next] = forward(params_, frame->data(), rstate_);
  rstate_ = std::move(next);
  last_ = out;
  return sample_ ? sample_action(out.probs, rng_) : greedy_action(out.probs);
}

Action ScriptedPolicy::act(const WorldState&, const Frame*) {
  if (actions_.empty()) return Action::NoOp;
  const Action a = actions_[std::min(t_, actions_.size() - 1)];
  ++t_;
  return a;
}

// ------------------------------------------------------------------ running

EpisodeStats run_episode(ActionSource& policy, const EnvSpec& spec, const EvalSettings& settings,
                         std::uint64_t seed) {
  WorldState s = spawn_episode(spec, seed);
  policy.begin_episode(s, seed);
  EpisodeStats stats;
  stats.seed = seed;
  Frame frame;
  while (!is_terminal(s, settings.termination)) {
    const Frame* fp = nullptr;
    if (policy.needs_frame()) {
      frame = render_frame(s, settings.render);
      fp = &frame;
    }
    const Action a = policy.act(s, fp);
    const StepOutcome o = step(s, a, settings.reward, settings.kinematics, settings.termination);
    if (settings.record_trace)
      stats.trace.push_back({s.step_count - 1, a, o.reward, o.local.x, o.local.y, o.local.a,
                             o.terminal});
  }
  stats.ar = s.accumulated_reward;
  stats.el = s.step_count;
  return stats;
}

void summarize(EvalReport& report) {
  const std::size_t n = report.episodes.size();
  if (n == 0) {
    report.ar_mean = report.ar_std = report.el_mean = report.el_std = 0.0;
    return;
  }
  double ar = 0.0, el = 0.0;
  for (const EpisodeStats& e : report.episodes) {
    ar += e.ar;
    el += e.el;
  }
  report.ar_mean = ar / static_cast<double>(n);
  report.el_mean = el / static_cast<double>(n);
  double var_ar = 0.0, var_el = 0.0;
  for (const EpisodeStats& e : report.episodes) {
    var_ar += (e.ar - report.ar_mean) * (e.ar - report.ar_mean);
    var_el += (e.el - report.el_mean) * (e.el - report.el_mean);
  }
  report.ar_std = std::sqrt(var_ar / static_cast<double>(n));
  report.el_std = std::sqrt(var_el / static_cast<double>(n));
}

EvalReport run_episodes(ActionSource& policy, const EnvSpec& spec, std::size_t n,
                        const EvalSettings& settings, std::uint64_t first_seed) {
  if (n == 0) throw UsageError("run_episodes: need at least one episode");
  EvalReport report;
  report.env = spec.name;
  for (std::size_t i = 0; i < n; ++i)
    report.episodes.push_back(run_episode(policy, spec, settings, first_seed + i));
  summarize(report);
  return report;
}

// -------------------------------------------------------------------- suite

namespace {

struct Loop {
  double x0, x1, y0, y1, chamfer;
};

constexpr Loop kLoop{3.5, 24.5, 2.5, 14.5, 2.0};
constexpr int kGridW = 28;
constexpr int kGridH = 18;

std::vector<std::string> bordered_rows(int w, int h) {
  std::vector<std::string> rows(static_cast<std::size_t>(h), std::string(static_cast<std::size_t>(w), '.'));
  for (int r = 0; r < h; ++r) {
    auto& row = rows[static_cast<std::size_t>(r)];
    row.front() = '#';
    row.back() = '#';
    if (r == 0 || r == h - 1) row.assign(static_cast<std::size_t>(w), '#');
  }
  return rows;
}

std::vector<Vec2> loop_waypoints(const Loop& l) {
  const double c = l.chamfer;
  return {{l.x0, l.y1 - c}, {l.x0 + c, l.y1}, {l.x1 - c, l.y1}, {l.x1, l.y1 - c},
          {l.x1, l.y0 + c}, {l.x1 - c, l.y0}, {l.x0 + c, l.y0}, {l.x0, l.y0 + c}};
}

}  // namespace

EnvSpec standard_spec() {
  EnvSpec s;
  s.name = "Standard";
  s.walls = WallGrid::from_rows(bordered_rows(kGridW, kGridH), 1.0);
  s.waypoints = loop_waypoints(kLoop);
  s.direction = Direction::Clockwise;
  s.first_waypoint = 0;
  s.target_speed = 0.25;
  s.zigzag_prob = 0.1;
  s.zigzag_amplitude = 0.1;
  s.initial_target = {kLoop.x0, 5.0, 0.0};
  s.agent_start = {kLoop.x0, 3.5, 0.0};
  return s;
}

std::vector<EnvSpec> env_suite() {
  std::vector<EnvSpec> suite;
  const EnvSpec base = standard_spec();
  suite.push_back(base);

  EnvSpec appearance = base;
  appearance.name = "AppearanceSwap";
  appearance.target_palette = 5;
  appearance.target_shape = SpriteShape::Ellipse;
  suite.push_back(appearance);

  EnvSpec palette = base;
  palette.name = "PaletteSwap";
  palette.floor_palette = 6;
  palette.ceiling_palette = 7;
  suite.push_back(palette);

  EnvSpec corridor = base;
  corridor.name = "Corridor";
  for (int i = 6; i <= 21; ++i)
    for (int j = 5; j <= 11; ++j) corridor.walls.set_wall(i, j, true);
  corridor.wall_palette = 8;
  suite.push_back(corridor);

  EnvSpec sharp = base;
  sharp.name = "SharpTurn";
  sharp.waypoints = {{3.5, 3.5},   {3.5, 14.5},  {10.5, 6.5}, {17.5, 14.5},
                     {24.5, 14.5}, {24.5, 2.5}, {6.5, 2.5}};
  sharp.first_waypoint = 1;
  suite.push_back(sharp);

  EnvSpec ccw = base;
  ccw.name = "Counterclockwise";
  ccw.direction = Direction::Counterclockwise;
  ccw.first_waypoint = 7;
  ccw.initial_target = {kLoop.x0, 11.5, kPi};
  ccw.agent_start = {kLoop.x0, 13.0, kPi};
  suite.push_back(ccw);

  EnvSpec noise1 = base;
  noise1.name = "Noise1";
  noise1.distractors.push_back({{14.0, 6.0, 0.0}, base.target_palette, base.target_shape, true});
  suite.push_back(noise1);

  EnvSpec noise2 = base;
  noise2.name = "Noise2";
  noise2.distractors.push_back({{14.0, 13.6, 0.0}, base.target_palette, base.target_shape, true});
  suite.push_back(noise2);

  return suite;
}

std::vector<std::string> env_suite_names() {
  std::vector<std::string> names;
  for (const EnvSpec& s : env_suite()) names.push_back(s.name);
  return names;
}

EnvSpec suite_env(const std::string& name) {
  for (EnvSpec& s : env_suite())
    if (s.name == name) return s;
  std::string known;
  for (const std::string& n : env_suite_names()) known += (known.empty() ? "" : ", ") + n;
  throw UsageError("unknown environment '" + name + "' (known: " + known + ")");
}

double distance_to_path(const EnvSpec& spec, Vec2 p) {
  const auto& w = spec.waypoints;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < w.size(); ++k) {
    const Vec2 a = w[k];
    const Vec2 b = w[(k + 1) % w.size()];
    const double vx = b.x - a.x, vy = b.y - a.y;
    const double len2 = vx * vx + vy * vy;
    double t = len2 > 0.0 ? ((p.x - a.x) * vx + (p.y - a.y) * vy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    best = std::min(best, std::hypot(p.x - (a.x + t * vx), p.y - (a.y + t * vy)));
  }
  return best;
}

double min_waypoint_angle(const EnvSpec& spec) {
  const auto& w = spec.waypoints;
  const std::size_t n = w.size();
  double best = kPi;
  if (n < 3) return best;
  for (std::size_t k = 0; k < n; ++k) {
    const Vec2 prev = w[(k + n - 1) % n];
    const Vec2 cur = w[k];
    const Vec2 next = w[(k + 1) % n];
    const double ax = prev.x - cur.x, ay = prev.y - cur.y;
    const double bx = next.x - cur.x, by = next.y - cur.y;
    const double na = std::hypot(ax, ay), nb = std::hypot(bx, by);
    if (na == 0.0 || nb == 0.0) continue;
    const double cosang = std::clamp((ax * bx + ay * by) / (na * nb), -1.0, 1.0);
    best = std::min(best, std::acos(cosang));
  }
  return best;
}

// ----------------------------------------------------------------- saliency

SaliencyMap saliency_map(const NetParams<float>& params, const Frame& frame,
                         const RecurrentState<float>& rstate, std::uint64_t seed) {
  const Architecture& arch = params.arch();
  if (frame.width() != arch.input_w || frame.height() != arch.input_h)
    throw UsageError("saliency_map: frame size does not match the network input");
  const PolicyOut out = forward(params, frame.data(), rstate).first;
  SaliencyMap map;
  map.width = frame.width();
  map.height = frame.height();
  map.action = sample_action(out.probs, seed);
  const std::vector<float> g = logit_input_gradient(params, frame.data(), rstate, map.action);
  const std::size_t pixels = static_cast<std::size_t>(map.width) * static_cast<std::size_t>(map.height);
  map.values.assign(pixels, 0.0);
  const std::size_t C = static_cast<std::size_t>(arch.input_c);
  double peak = 0.0;
  for (std::size_t i = 0; i < pixels; ++i) {
    double m = 0.0;
    for (std::size_t ch = 0; ch < C; ++ch) m = std::max(m, std::abs(static_cast<double>(g[i * C + ch])));
    map.values[i] = m;
    peak = std::max(peak, m);
  }
  if (peak > 0.0)
    for (double& v : map.values) v /= peak;
  return map;
}

SaliencyConcentration saliency_concentration(const SaliencyMap& map, const BBox& box,
                                             double top_fraction) {
  const std::size_t n = map.values.size();
  SaliencyConcentration out;
  if (n == 0) return out;
  const long c0 = std::lround(box.x - box.w / 2.0);
  const long r0 = std::lround(box.y - box.h / 2.0);
  const long c1 = c0 + std::lround(box.w);
  const long r1 = r0 + std::lround(box.h);
  const auto inside = [&](std::size_t i) {
    const long r = static_cast<long>(i) / map.width;
    const long c = static_cast<long>(i) % map.width;
    return r >= r0 && r < r1 && c >= c0 && c < c1;
  };
  std::size_t box_pixels = 0;
  for (std::size_t i = 0; i < n; ++i) box_pixels += inside(i) ? 1 : 0;
  out.box_fraction = static_cast<double>(box_pixels) / static_cast<double>(n);

  const double peak = *std::max_element(map.values.begin(), map.values.end());
  if (peak <= 0.0) return out;
  const auto k = static_cast<std::size_t>(std::ceil(top_fraction * static_cast<double>(n)));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (map.values[a] != map.values[b]) return map.values[a] > map.values[b];
                      return a < b;
                    });
  std::size_t hits = 0;
  for (std::size_t j = 0; j < k; ++j) hits += inside(idx[j]) ? 1 : 0;
  out.inside_fraction = static_cast<double>(hits) / static_cast<double>(k);
  return out;
}

// -------------------------------------------------------------------- probe

Pose teleport_out_of_view(const WorldState& state, const RenderConfig& render, int side,
                          double margin, double distance) {
  const double half_width = std::atan2(render.sprite_width / 2.0, distance);
  const double bearing = (side > 0 ? 1.0 : -1.0) * (render.fov / 2.0 + half_width + margin);
  const Vec2 f = forward_of(state.agent.heading);
  const Vec2 r = right_of(state.agent.heading);
  const Vec2 p{state.agent.x + distance * (f.x * std::cos(bearing) + r.x * std::sin(bearing)),
               state.agent.y + distance * (f.y * std::cos(bearing) + r.y * std::sin(bearing))};
  const Vec2 snapped = snap_to_free(state.spec->walls, p);
  return {snapped.x, snapped.y, state.target.heading};
}

ProbeResult recovery_probe(ActionSource& policy, const EnvSpec& spec, int probes,
                           const EvalSettings& settings, const ProbeSettings& probe,
                           std::uint64_t seed) {
  if (probes < 0) throw UsageError("recovery_probe: negative probe count");
  if (probe.min_warmup < 0 || probe.max_warmup < probe.min_warmup)
    throw UsageError("recovery_probe: bad warm-up range");
  const auto shared = std::make_shared<const EnvSpec>(spec);
  ProbeResult result;
  std::uint64_t episode_seed = seed;
  Frame frame;
  const auto act_and_step = [&](WorldState& s) {
    const Frame* fp = nullptr;
    if (policy.needs_frame()) {
      frame = render_frame(s, settings.render);
      fp = &frame;
    }
    step(s, policy.act(s, fp), settings.reward, settings.kinematics, settings.termination);
  };

  while (result.probes < probes) {
    const std::uint64_t es = episode_seed++;
    std::mt19937_64 rng(policy_seed(es) ^ 0x5bd1e995ULL);
    WorldState s = spawn_episode(shared, es);
    policy.begin_episode(s, es);
    std::uniform_int_distribution<int> warm(probe.min_warmup, probe.max_warmup);
    const int warmup = warm(rng);
    for (int k = 0; k < warmup && !is_terminal(s, settings.termination); ++k) act_and_step(s);

    const int first_side = std::uniform_int_distribution<int>(0, 1)(rng) == 0 ? -1 : 1;
    bool placed = false;
    if (!is_terminal(s, settings.termination)) {
      for (int side : {first_side, -first_side}) {
        WorldState trial = s;
        trial.target = teleport_out_of_view(s, settings.render, side, probe.margin, probe.distance);
        if (!ground_truth_bbox(trial, settings.render)) {
          s = trial;
          placed = true;
          break;
        }
      }
    }
    // Episodes that ended during warm-up, or where no hidden spot exists,
    // do not count as probes.
    if (!placed) {
      if (episode_seed - seed > static_cast<std::uint64_t>(probes) * 20 + 100)
        throw UsageError("recovery_probe: could not place probes on this environment");
      continue;
    }
    ++result.probes;
    int recovered_at = -1;
    for (int k = 1; k <= probe.horizon; ++k) {
      if (is_terminal(s, settings.termination)) break;
      act_and_step(s);
      if (ground_truth_bbox(s, settings.render)) {
        recovered_at = k;
        break;
      }
    }
    result.recovery_steps.push_back(recovered_at);
    if (recovered_at > 0) ++result.recovered;
  }
  return result;
}

// ------------------------------------------------------------------ outputs

namespace {

std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void write_trace(std::ostream& out, const std::vector<TraceRecord>& trace) {
  for (const TraceRecord& r : trace) {
    out << "{\"t\":" << r.t << ",\"action\":\"" << action_name(r.action)
        << "\",\"reward\":" << fmt17(r.reward) << ",\"x\":" << fmt17(r.x)
        << ",\"y\":" << fmt17(r.y) << ",\"a\":" << fmt17(r.a)
        << ",\"terminal\":" << (r.terminal ? "true" : "false") << "}\n";
  }
}

void write_trace(const std::filesystem::path& path, const std::vector<TraceRecord>& trace) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write trace " + path.string());
  write_trace(out, trace);
}

std::vector<TraceRecord> read_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open trace " + path.string());
  std::vector<TraceRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      TraceRecord r;
      r.t = j.at("t").get<int>();
      const auto name = j.at("action").get<std::string>();
      const auto a = parse_action(name);
      if (!a) throw IoError("unknown action '" + name + "'");
      r.action = *a;
      r.reward = j.at("reward").get<double>();
      r.x = j.at("x").get<double>();
      r.y = j.at("y").get<double>();
      r.a = j.at("a").get<double>();
      r.terminal = j.at("terminal").get<bool>();
      out.push_back(r);
    } catch (const nlohmann::json::exception& e) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const IoError& e) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_report_csv(std::ostream& out, const std::vector<EvalReport>& reports) {
  out << "env,n,ar_mean,ar_std,el_mean,el_std\n";
  for (const EvalReport& r : reports)
    out << r.env << ',' << r.n() << ',' << fmt17(r.ar_mean) << ',' << fmt17(r.ar_std) << ','
        << fmt17(r.el_mean) << ',' << fmt17(r.el_std) << '\n';
}

ReplayResult replay_trace(const std::vector<TraceRecord>& trace, const EnvSpec& spec,
                          const EvalSettings& settings, std::uint64_t seed, double tolerance) {
  ReplayResult res;
  res.trace_el = static_cast<int>(trace.size());
  for (const TraceRecord& r : trace) res.trace_ar += r.reward;
  WorldState s = spawn_episode(spec, seed);
  bool flags_match = true;
  for (const TraceRecord& r : trace) {
    if (is_terminal(s, settings.termination)) {
      flags_match = false;
      break;
    }
    const StepOutcome o = step(s, r.action, settings.reward, settings.kinematics, settings.termination);
    res.max_reward_diff = std::max(res.max_reward_diff, std::abs(o.reward - r.reward));
    if (o.terminal != r.terminal) flags_match = false;
  }
  res.replay_ar = s.accumulated_reward;
  res.replay_el = s.step_count;
  res.ok = flags_match && res.replay_el == res.trace_el &&
           std::abs(res.replay_ar - res.trace_ar) <= tolerance && res.max_reward_diff <= tolerance;
  return res;
}

}  // namespace atg
