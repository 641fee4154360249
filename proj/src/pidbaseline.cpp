#include "atg/pidbaseline.hpp"

#include <cmath>

#include "atg/errors.hpp"

namespace atg {

void PidConfig::validate() const {
  if (!(ideal_area_fraction > 0.0 && ideal_area_fraction <= 1.0))
    throw ValidationError("pid.ideal_area_fraction", "must lie in (0, 1]");
  if (!(deadband_x >= 0.0)) throw ValidationError("pid.deadband_x", "must be >= 0");
  if (!(deadband_y >= 0.0)) throw ValidationError("pid.deadband_y", "must be >= 0");
  if (!(deadband_z >= 0.0)) throw ValidationError("pid.deadband_z", "must be >= 0");
}

IdealTargets ideal_targets(int width, int height, const PidConfig& cfg) {
  if (width <= 0 || height <= 0) throw UsageError("ideal_targets: image size must be positive");
  return {width / 2.0, height / 2.0,
          static_cast<double>(width) * static_cast<double>(height) * cfg.ideal_area_fraction};
}

BBoxError pid_errors(const BBox& box, int width, int height, const PidConfig& cfg) {
  const IdealTargets ideal = ideal_targets(width, height, cfg);
  return {box.x - ideal.x, box.y - ideal.y, ideal.area - box.w * box.h};
}

Action select_action(const BBoxError& err, const PidConfig& cfg) {
  const bool forward = err.z_err > cfg.deadband_z || err.y_err < -cfg.deadband_y;
  if (std::abs(err.x_err) > cfg.deadband_x) {
    if (err.x_err < 0.0) return forward ? Action::TurnLeftMove : Action::TurnLeft;
    return forward ? Action::TurnRightMove : Action::TurnRight;
  }
  return forward ? Action::MoveForward : Action::NoOp;
}

std::optional<BBox> OracleProvider::box(const WorldState& state, const RenderConfig& render) {
  return ground_truth_bbox(state, render);
}

NoisyProvider::NoisyProvider(double sigma_px, double dropout) : sigma_(sigma_px), dropout_(dropout) {
  if (!(sigma_px >= 0.0)) throw ValidationError("pid.noise_sigma", "must be >= 0");
  if (!(dropout >= 0.0 && dropout <= 1.0))
    throw ValidationError("pid.dropout", "must lie in [0, 1]");
}

void NoisyProvider::reset(std::uint64_t seed) { rng_.seed(seed ^ 0xA5A5A5A55A5A5A5AULL); }

std::optional<BBox> NoisyProvider::box(const WorldState& state, const RenderConfig& render) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  const bool drop = unit(rng_) < dropout_;
  std::optional<BBox> b = ground_truth_bbox(state, render);
  if (drop || !b) return std::nullopt;
  b->x += sigma_ * noise(rng_);
  b->y += sigma_ * noise(rng_);
  b->w = std::max(0.0, b->w + sigma_ * noise(rng_));
  b->h = std::max(0.0, b->h + sigma_ * noise(rng_));
  return b;
}

PidController::PidController(PidConfig cfg, std::shared_ptr<BBoxProvider> provider,
                             RenderConfig render)
    : cfg_(cfg), provider_(std::move(provider)), render_(std::move(render)) {
  cfg_.validate();
  if (!provider_) throw UsageError("PidController: null box provider");
}

void PidController::begin_episode(const WorldState&, std::uint64_t seed) {
  provider_->reset(seed);
  last_turn_.reset();
}

Action PidController::act(const WorldState& state, const Frame*) {
  const std::optional<BBox> b = provider_->box(state, render_);
  if (!b) {
    if (cfg_.lost_target_policy == LostTargetPolicy::NoOp) return Action::NoOp;
    return last_turn_.value_or(Action::TurnRight);
  }
  const Action a = select_action(pid_errors(*b, render_.columns, render_.rows, cfg_), cfg_);
  if (action_turns_left(a)) last_turn_ = Action::TurnLeft;
  if (action_turns_right(a)) last_turn_ = Action::TurnRight;
  return a;
}

EpisodeStats run_baseline(const EnvSpec& spec, std::shared_ptr<BBoxProvider> provider,
                          const PidConfig& cfg, const EvalSettings& settings, std::uint64_t seed) {
  PidController pid(cfg, std::move(provider), settings.render);
  return run_episode(pid, spec, settings, seed);
}

}  // namespace atg
