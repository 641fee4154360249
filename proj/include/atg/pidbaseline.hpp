#pragma once

// Proportional camera controller with deadbands: keeps the target's box
// centred and at a fixed share of the image, issuing discrete actions.

#include <cstdint>
#include <memory>
#include <optional>
#include <random>

#include "atg/evalkit.hpp"
#include "atg/render.hpp"

namespace atg {

enum class LostTargetPolicy { RepeatLastTurn, NoOp };

struct PidConfig {
  double ideal_area_fraction = 0.20;
  double deadband_x = 6.0;    // pixels
  double deadband_y = 6.0;    // pixels
  double deadband_z = 280.0;  // square pixels
  LostTargetPolicy lost_target_policy = LostTargetPolicy::RepeatLastTurn;

  void validate() const;
};

struct IdealTargets {
  double x = 0.0;
  double y = 0.0;
  double area = 0.0;
};

struct BBoxError {
  double x_err = 0.0;
  double y_err = 0.0;
  double z_err = 0.0;
};

IdealTargets ideal_targets(int width, int height, const PidConfig& cfg);
// Box centre minus ideal centre; ideal area minus box area.
BBoxError pid_errors(const BBox& box, int width, int height, const PidConfig& cfg);
Action select_action(const BBoxError& err, const PidConfig& cfg);

class BBoxProvider {
 public:
  virtual ~BBoxProvider() = default;
  virtual void reset(std::uint64_t seed) = 0;
  virtual std::optional<BBox> box(const WorldState& state, const RenderConfig& render) = 0;
};

class OracleProvider : public BBoxProvider {
 public:
  void reset(std::uint64_t) override {}
  std::optional<BBox> box(const WorldState& state, const RenderConfig& render) override;
};

// Ground truth with Gaussian noise on centre (sigma_px) and size
// (sigma_px on width and height), dropped entirely with `dropout`.
class NoisyProvider : public BBoxProvider {
 public:
  NoisyProvider(double sigma_px, double dropout);
  void reset(std::uint64_t seed) override;
  std::optional<BBox> box(const WorldState& state, const RenderConfig& render) override;

 private:
  double sigma_;
  double dropout_;
  std::mt19937_64 rng_;
};

// ActionSource closing the loop box -> errors -> action.
class PidController : public ActionSource {
 public:
  PidController(PidConfig cfg, std::shared_ptr<BBoxProvider> provider, RenderConfig render);

  void begin_episode(const WorldState& state, std::uint64_t seed) override;
  Action act(const WorldState& state, const Frame* frame) override;
  bool needs_frame() const override { return false; }

 private:
  PidConfig cfg_;
  std::shared_ptr<BBoxProvider> provider_;
  RenderConfig render_;
  std::optional<Action> last_turn_;
};

EpisodeStats run_baseline(const EnvSpec& spec, std::shared_ptr<BBoxProvider> provider,
                          const PidConfig& cfg, const EvalSettings& settings, std::uint64_t seed);

}  // namespace atg
