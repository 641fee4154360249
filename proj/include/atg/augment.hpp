#pragma once

// Environment augmentation: perturbed initial target poses with left-right
// flipping, and the background-hiding / start-from-failure randomizer.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <vector>

#include "atg/world.hpp"

namespace atg {

struct PerturbBounds {
  double radius = 2.0;      // max distance from the base initial target
  double min_radius = 0.0;  // draws closer than this are rejected
  double heading_range = std::numbers::pi;
};

struct EnvPool {
  EnvSpec source;
  std::vector<EnvSpec> specs;
  std::uint64_t seed = 0;
  std::size_t perturbations = 0;
  PerturbBounds bounds;
};

// Draws `n` initial target poses uniformly in the annulus around the base
// initial target (free cells only) and emits each unflipped then flipped.
// n == 0 yields {base, flipped base}.
EnvPool perturb_initials(const EnvSpec& base, std::size_t n, std::uint64_t seed,
                         const PerturbBounds& bounds = {});

// The degenerate pool used by the single-environment protocol.
EnvPool single_env_pool(const EnvSpec& base);

const EnvSpec& sample_env(const EnvPool& pool, std::mt19937_64& rng);
const EnvSpec& sample_env(const EnvPool& pool, std::uint64_t seed);

// Centre of the free cell nearest to `p` (Euclidean, ties to lower row then
// lower column). Returns `p` unchanged when it already lies in a free cell.
Vec2 snap_to_free(const WallGrid& walls, Vec2 p);

EnvSpec ue_randomize(const EnvSpec& spec, std::uint64_t seed,
                     const std::optional<Pose>& last_failure, double hide_probability);

// Header document (seed, perturbations, bounds), the source spec, then one
// document per pool entry, separated by `---`.
std::string pool_to_document(const EnvPool& pool);
EnvPool pool_from_document(std::string_view text);
void save_pool(const EnvPool& pool, const std::filesystem::path& path);
EnvPool load_pool(const std::filesystem::path& path);

}  // namespace atg
