#include "atg/augment.hpp"

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "atg/envspec_io.hpp"
#include "atg/errors.hpp"

namespace atg {

namespace {

constexpr int kMaxDraws = 100000;

EnvSpec flipped(EnvSpec s) {
  s.flip = true;
  return s;
}

}  // namespace

EnvPool perturb_initials(const EnvSpec& base, std::size_t n, std::uint64_t seed,
                         const PerturbBounds& bounds) {
  base.validate();
  if (!(bounds.radius >= 0.0) || !(bounds.min_radius >= 0.0) || bounds.min_radius > bounds.radius)
    throw ValidationError("augment.radius", "need 0 <= min_radius <= radius");

  EnvPool pool;
  pool.source = base;
  pool.seed = seed;
  pool.perturbations = n;
  pool.bounds = bounds;
  if (n == 0) {
    pool.specs = {base, flipped(base)};
    pool.specs[0].flip = false;
    return pool;
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double r2min = bounds.min_radius * bounds.min_radius;
  const double r2max = bounds.radius * bounds.radius;
  pool.specs.reserve(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxDraws && !placed; ++attempt) {
      const double r = std::sqrt(r2min + (r2max - r2min) * unit(rng));
      const double phi = 2.0 * std::numbers::pi * unit(rng);
      const double x = base.initial_target.x + r * std::cos(phi);
      const double y = base.initial_target.y + r * std::sin(phi);
      const double heading = normalize_angle((2.0 * unit(rng) - 1.0) * bounds.heading_range);
      if (base.walls.is_wall_at(x, y)) continue;
      EnvSpec s = base;
      s.flip = false;
      s.initial_target = {x, y, heading};
      s.name = base.name + "/p" + std::to_string(i);
      pool.specs.push_back(s);
      pool.specs.push_back(flipped(s));
      placed = true;
    }
    if (!placed)
      throw ValidationError("augment.radius", "perturbation bounds admit no free cell");
  }
  return pool;
}

EnvPool single_env_pool(const EnvSpec& base) {
  base.validate();
  EnvPool pool;
  pool.source = base;
  pool.specs = {base};
  return pool;
}

const EnvSpec& sample_env(const EnvPool& pool, std::mt19937_64& rng) {
  if (pool.specs.empty()) throw UsageError("sample_env: empty pool");
  std::uniform_int_distribution<std::size_t> pick(0, pool.specs.size() - 1);
  return pool.specs[pick(rng)];
}

const EnvSpec& sample_env(const EnvPool& pool, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sample_env(pool, rng);
}

Vec2 snap_to_free(const WallGrid& walls, Vec2 p) {
  if (!walls.is_wall_at(p.x, p.y)) return p;
  const double cs = walls.cell_size();
  const int ci = walls.cell_of(p.x);
  const int cj = walls.cell_of(p.y);
  const int reach = std::max(walls.width(), walls.height()) + std::max(std::abs(ci), std::abs(cj));

  double best = std::numeric_limits<double>::infinity();
  int bi = -1, bj = -1;
  // Ring k holds cells at Chebyshev distance k from the containing cell;
  // their centres are at least (k - 0.5) cells away.
  for (int k = 0; k <= reach; ++k) {
    if (bi >= 0 && best < (k - 0.5) * cs) break;
    for (int j = cj - k; j <= cj + k; ++j) {
      for (int i = ci - k; i <= ci + k; ++i) {
        if (std::max(std::abs(i - ci), std::abs(j - cj)) != k) continue;
        if (walls.is_wall_cell(i, j)) continue;
        const Vec2 c = walls.cell_center(i, j);
        const double dist = std::hypot(c.x - p.x, c.y - p.y);
        if (dist < best || (dist == best && (j < bj || (j == bj && i < bi)))) {
          best = dist;
          bi = i;
          bj = j;
        }
      }
    }
  }
  if (bi < 0) throw ValidationError("walls", "grid has no free cell");
  return walls.cell_center(bi, bj);
}

EnvSpec ue_randomize(const EnvSpec& spec, std::uint64_t seed,
                     const std::optional<Pose>& last_failure, double hide_probability) {
  spec.validate();
  if (!(hide_probability >= 0.0 && hide_probability <= 1.0))
    throw ValidationError("augment.hide_probability", "must lie in [0, 1]");
  EnvSpec out = spec;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (Distractor& d : out.distractors) {
    const bool hide = unit(rng) < hide_probability;
    if (hide) d.visible = false;
  }
  if (last_failure) {
    const Vec2 p = snap_to_free(out.walls, {last_failure->x, last_failure->y});
    out.agent_start = {p.x, p.y, normalize_angle(last_failure->heading)};
  }
  return out;
}

std::string pool_to_document(const EnvPool& pool) {
  std::ostringstream os;
  os << "seed: " << pool.seed << "\n";
  os << "perturbations: " << pool.perturbations << "\n";
  os << "radius: " << format_double(pool.bounds.radius) << "\n";
  os << "min_radius: " << format_double(pool.bounds.min_radius) << "\n";
  os << "heading_range: " << format_double(pool.bounds.heading_range) << "\n";
  os << "size: " << pool.specs.size() << "\n";
  os << "---\n" << spec_to_document(pool.source);
  for (const EnvSpec& s : pool.specs) os << "---\n" << spec_to_document(s);
  return os.str();
}

EnvPool pool_from_document(std::string_view text) {
  // Split on document markers ourselves so each spec goes through the
  // regular spec parser.
  std::vector<std::string> docs(1);
  std::istringstream in{std::string(text)};
  for (std::string line; std::getline(in, line);) {
    if (line == "---") {
      docs.emplace_back();
      continue;
    }
    docs.back() += line + "\n";
  }
  if (docs.size() < 2) throw ValidationError("pool", "missing source spec");
  YAML::Node header;
  try {
    header = YAML::Load(docs[0]);
  } catch (const YAML::Exception& e) {
    throw ValidationError("pool", std::string("header parse error: ") + e.what());
  }
  EnvPool pool;
  try {
    pool.seed = header["seed"].as<std::uint64_t>();
    pool.perturbations = header["perturbations"].as<std::size_t>();
    pool.bounds.radius = header["radius"].as<double>();
    pool.bounds.min_radius = header["min_radius"].as<double>();
    pool.bounds.heading_range = header["heading_range"].as<double>();
    const auto size = header["size"].as<std::size_t>();
    if (size != docs.size() - 2) throw ValidationError("pool", "size does not match document count");
  } catch (const YAML::Exception&) {
    throw ValidationError("pool", "malformed header");
  }
  pool.source = spec_from_document(docs[1]);
  for (std::size_t i = 2; i < docs.size(); ++i) pool.specs.push_back(spec_from_document(docs[i]));
  return pool;
}

void save_pool(const EnvPool& pool, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write pool " + path.string());
  out << pool_to_document(pool);
}

EnvPool load_pool(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open pool " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return pool_from_document(ss.str());
}

}  // namespace atg
