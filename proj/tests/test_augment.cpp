#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <map>

#include "atg/augment.hpp"
#include "atg/envspec_io.hpp"
#include "atg/errors.hpp"
#include "atg/evalkit.hpp"
#include "test_util.hpp"

namespace atg {
namespace {

// Brute force over every free cell centre; ties keep the first cell found
// scanning rows from the bottom (lower j) and then columns.
Vec2 nearest_free_oracle(const WallGrid& g, Vec2 p) {
  if (!g.is_wall_at(p.x, p.y)) return p;
  Vec2 best{};
  double best_d = std::numeric_limits<double>::infinity();
  for (int j = 0; j < g.height(); ++j)
    for (int i = 0; i < g.width(); ++i) {
      if (g.is_wall_cell(i, j)) continue;
      const Vec2 c = g.cell_center(i, j);
      const double d = std::hypot(c.x - p.x, c.y - p.y);
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
  return best;
}

EnvSpec unflipped(EnvSpec s) {
  s.flip = false;
  return s;
}

TEST(Perturb, PoolSizes) {
  const EnvSpec base = standard_spec();
  EXPECT_EQ(perturb_initials(base, 21, 7).specs.size(), 42u);
  const EnvPool zero = perturb_initials(base, 0, 7);
  ASSERT_EQ(zero.specs.size(), 2u);
  EXPECT_EQ(zero.specs[0], base);
  EnvSpec flipped = base;
  flipped.flip = true;
  EXPECT_EQ(zero.specs[1], flipped);
}

TEST(Perturb, PosesInsideDiscAndFree) {
  const EnvSpec base = standard_spec();
  PerturbBounds b;
  b.radius = 1.5;
  b.min_radius = 0.3;
  b.heading_range = 1.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const EnvPool pool = perturb_initials(base, 30, seed, b);
    ASSERT_EQ(pool.specs.size(), 60u);
    for (const EnvSpec& s : pool.specs) {
      const double r = std::hypot(s.initial_target.x - base.initial_target.x,
                                  s.initial_target.y - base.initial_target.y);
      EXPECT_LE(r, b.radius + 1e-12);
      EXPECT_GE(r, b.min_radius - 1e-12);
      EXPECT_FALSE(s.walls.is_wall_at(s.initial_target.x, s.initial_target.y));
      EXPECT_LE(std::abs(normalize_angle(s.initial_target.heading - base.initial_target.heading)),
                b.heading_range + 1e-12);
      EXPECT_NO_THROW(s.validate());
    }
  }
}

TEST(Perturb, FlipPairing) {
  const EnvPool pool = perturb_initials(standard_spec(), 21, 3);
  std::map<std::pair<double, double>, std::pair<int, int>> counts;
  for (const EnvSpec& s : pool.specs) {
    auto& c = counts[{s.initial_target.x, s.initial_target.y}];
    (s.flip ? c.second : c.first) += 1;
  }
  EXPECT_EQ(counts.size(), 21u);
  for (const auto& [k, c] : counts) {
    EXPECT_EQ(c.first, 1);
    EXPECT_EQ(c.second, 1);
  }
  for (std::size_t i = 0; i < pool.specs.size(); i += 2) {
    EXPECT_FALSE(pool.specs[i].flip);
    EXPECT_TRUE(pool.specs[i + 1].flip);
    EXPECT_EQ(pool.specs[i], unflipped(pool.specs[i + 1]));
  }
}

TEST(Perturb, Reproducible) {
  EXPECT_EQ(perturb_initials(standard_spec(), 10, 99).specs,
            perturb_initials(standard_spec(), 10, 99).specs);
  EXPECT_NE(perturb_initials(standard_spec(), 10, 99).specs,
            perturb_initials(standard_spec(), 10, 100).specs);
}

TEST(Perturb, ImpossibleBoundsRejected) {
  EnvSpec base = testing::open_room();
  PerturbBounds b;
  b.radius = 0.1;
  b.min_radius = 0.5;
  EXPECT_THROW(perturb_initials(base, 3, 0, b), ValidationError);
}

TEST(Sample, SingletonAndReproducible) {
  const EnvPool one = single_env_pool(standard_spec());
  ASSERT_EQ(one.specs.size(), 1u);
  EXPECT_FALSE(one.specs[0].flip);
  for (std::uint64_t s = 0; s < 20; ++s) EXPECT_EQ(&sample_env(one, s), &one.specs[0]);

  const EnvPool pool = perturb_initials(standard_spec(), 21, 1);
  std::mt19937_64 a(5), b(5);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(&sample_env(pool, a), &sample_env(pool, b));
}

TEST(Sample, UniformWithinFiveSigma) {
  const EnvPool pool = perturb_initials(standard_spec(), 21, 1);
  const std::size_t k = pool.specs.size();
  ASSERT_EQ(k, 42u);
  constexpr int n = 10000;
  std::vector<int> hits(k, 0);
  std::mt19937_64 rng(2024);
  for (int i = 0; i < n; ++i) hits[static_cast<std::size_t>(&sample_env(pool, rng) - pool.specs.data())]++;
  const double p = 1.0 / static_cast<double>(k);
  const double mean = n * p;
  const double sigma = std::sqrt(n * p * (1 - p));
  for (int h : hits) EXPECT_LT(std::abs(h - mean), 5 * sigma);
}

TEST(Sample, EmptyPoolIsUsageError) {
  EnvPool empty;
  EXPECT_THROW(sample_env(empty, 0), UsageError);
}

TEST(Ue, NoChangeWithoutHidingOrFailure) {
  EnvSpec spec = testing::open_room();
  spec.distractors = {{{8.5, 8.5, 0}, 9, SpriteShape::Ellipse, true},
                      {{12.5, 8.5, 0}, 5, SpriteShape::Rect, true}};
  EXPECT_EQ(ue_randomize(spec, 3, std::nullopt, 0.0), spec);
}

TEST(Ue, HideAll) {
  EnvSpec spec = testing::open_room();
  for (int i = 0; i < 5; ++i)
    spec.distractors.push_back({{8.5 + i, 10.5, 0}, 9, SpriteShape::Diamond, true});
  const EnvSpec out = ue_randomize(spec, 1, std::nullopt, 1.0);
  for (const Distractor& d : out.distractors) EXPECT_FALSE(d.visible);
}

TEST(Ue, FailurePoseSnapsToFreeCell) {
  const EnvSpec spec = standard_spec();
  for (Vec2 p : {Vec2{0.2, 0.2}, Vec2{5.5, 9.0}, Vec2{14.0, 9.0}, Vec2{27.9, 17.9}}) {
    const Vec2 want = nearest_free_oracle(spec.walls, p);
    const Vec2 got = snap_to_free(spec.walls, p);
    EXPECT_NEAR(std::hypot(got.x - p.x, got.y - p.y), std::hypot(want.x - p.x, want.y - p.y),
                1e-12);
    EXPECT_FALSE(spec.walls.is_wall_at(got.x, got.y));
    const EnvSpec out = ue_randomize(spec, 0, Pose{p.x, p.y, 0.4}, 0.0);
    EXPECT_EQ(out.agent_start.x, got.x);
    EXPECT_EQ(out.agent_start.y, got.y);
    EXPECT_NO_THROW(out.validate());
  }
}

TEST(Ue, OnlyTouchesVisibilityAndStart) {
  EnvSpec spec = standard_spec();
  spec.distractors.push_back({{3.5, 3.5, 0}, 9, SpriteShape::Rect, true});
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    EnvSpec out = ue_randomize(spec, seed, Pose{4.0, 4.0, 1.0}, 0.5);
    for (std::size_t i = 0; i < out.distractors.size(); ++i) out.distractors[i].visible = true;
    out.agent_start = spec.agent_start;
    EXPECT_EQ(out, spec);
  }
}

TEST(PoolIo, RoundTrip) {
  const EnvPool pool = perturb_initials(standard_spec(), 4, 11);
  const EnvPool back = pool_from_document(pool_to_document(pool));
  EXPECT_EQ(back.specs, pool.specs);
  EXPECT_EQ(back.source, pool.source);
  EXPECT_EQ(back.seed, pool.seed);
  EXPECT_EQ(back.perturbations, pool.perturbations);
  // The header alone is enough to regenerate it.
  EXPECT_EQ(perturb_initials(back.source, back.perturbations, back.seed, back.bounds).specs,
            pool.specs);

  const auto path = std::filesystem::temp_directory_path() / "atg_pool_roundtrip.yaml";
  save_pool(pool, path);
  EXPECT_EQ(load_pool(path).specs, pool.specs);
  std::filesystem::remove(path);
}

TEST(SpecIo, RoundTripSuite) {
  for (const std::string& name : env_suite_names()) {
    const EnvSpec s = suite_env(name);
    EXPECT_EQ(spec_from_document(spec_to_document(s)), s) << name;
  }
}

TEST(SpecIo, RejectsUnknownKey) {
  const std::string doc = spec_to_document(testing::open_room()) + "colour: red\n";
  EXPECT_THROW(spec_from_document(doc), ValidationError);
}

TEST(SpecIo, FormatDoubleRoundTrips) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 1000; ++i) {
    const double v = u(rng);
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
  EXPECT_EQ(format_double(0.25), "0.25");
}

}  // namespace
}  // namespace atg
