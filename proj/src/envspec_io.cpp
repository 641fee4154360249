#include "atg/envspec_io.hpp"

#include <yaml-cpp/yaml.h>

#include <array>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "atg/errors.hpp"

namespace atg {

std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc()) throw Error("format_double failed");
  return std::string(buf.data(), end);
}

namespace {

std::string pose_text(const Pose& p) {
  return "[" + format_double(p.x) + ", " + format_double(p.y) + ", " +
         format_double(p.heading) + "]";
}

SpriteShape parse_shape(const std::string& s, const char* field) {
  if (s == "rect") return SpriteShape::Rect;
  if (s == "ellipse") return SpriteShape::Ellipse;
  if (s == "diamond") return SpriteShape::Diamond;
  throw ValidationError(field, "unknown shape '" + s + "'");
}

template <typename T>
T scalar(const YAML::Node& node, const char* field) {
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    throw ValidationError(field, "malformed value");
  }
}

Pose parse_pose(const YAML::Node& node, const char* field) {
  if (!node.IsSequence() || node.size() != 3)
    throw ValidationError(field, "expected [x, y, heading]");
  return {scalar<double>(node[0], field), scalar<double>(node[1], field),
          scalar<double>(node[2], field)};
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "name",           "cell_size",       "walls",          "waypoints",
      "direction",      "first_waypoint",  "target_speed",   "zigzag_prob",
      "zigzag_amplitude", "capture_radius", "target_palette", "target_shape",
      "floor_palette",  "ceiling_palette", "wall_palette",   "distractors",
      "initial_target", "agent_start",     "flip"};
  return keys;
}

}  // namespace

std::string spec_to_document(const EnvSpec& spec) {
  std::ostringstream os;
  os << "name: " << spec.name << "\n";
  os << "cell_size: " << format_double(spec.walls.cell_size()) << "\n";
  os << "walls: [";
  const auto rows = spec.walls.to_rows();
  for (std::size_t i = 0; i < rows.size(); ++i) os << (i ? ", " : "") << '"' << rows[i] << '"';
  os << "]\n";
  os << "waypoints: [";
  for (std::size_t i = 0; i < spec.waypoints.size(); ++i)
    os << (i ? ", " : "") << "[" << format_double(spec.waypoints[i].x) << ", "
       << format_double(spec.waypoints[i].y) << "]";
  os << "]\n";
  os << "direction: " << direction_name(spec.direction) << "\n";
  os << "first_waypoint: " << spec.first_waypoint << "\n";
  os << "target_speed: " << format_double(spec.target_speed) << "\n";
  os << "zigzag_prob: " << format_double(spec.zigzag_prob) << "\n";
  os << "zigzag_amplitude: " << format_double(spec.zigzag_amplitude) << "\n";
  os << "capture_radius: " << format_double(spec.capture_radius) << "\n";
  os << "target_palette: " << spec.target_palette << "\n";
  os << "target_shape: " << shape_name(spec.target_shape) << "\n";
  os << "floor_palette: " << spec.floor_palette << "\n";
  os << "ceiling_palette: " << spec.ceiling_palette << "\n";
  os << "wall_palette: " << spec.wall_palette << "\n";
  os << "distractors: [";
  for (std::size_t i = 0; i < spec.distractors.size(); ++i) {
    const Distractor& d = spec.distractors[i];
    os << (i ? ", " : "") << "[" << format_double(d.pose.x) << ", " << format_double(d.pose.y)
       << ", " << format_double(d.pose.heading) << ", " << d.palette << ", "
       << shape_name(d.shape) << ", " << (d.visible ? "true" : "false") << "]";
  }
  os << "]\n";
  os << "initial_target: " << pose_text(spec.initial_target) << "\n";
  os << "agent_start: " << pose_text(spec.agent_start) << "\n";
  os << "flip: " << (spec.flip ? "true" : "false") << "\n";
  return os.str();
}

EnvSpec spec_from_document(std::string_view text) {
  YAML::Node doc;
  try {
    doc = YAML::Load(std::string(text));
  } catch (const YAML::Exception& e) {
    throw ValidationError("document", std::string("parse error: ") + e.what());
  }
  if (!doc.IsMap()) throw ValidationError("document", "expected key/value lines");
  for (const auto& kv : doc) {
    const std::string key = kv.first.as<std::string>();
    if (!known_keys().contains(key)) throw ValidationError(key, "unknown key");
  }
  for (const char* required : {"walls", "waypoints", "initial_target", "agent_start"})
    if (!doc[required]) throw ValidationError(required, "missing");

  EnvSpec spec;
  if (doc["name"]) spec.name = scalar<std::string>(doc["name"], "name");
  const double cell = doc["cell_size"] ? scalar<double>(doc["cell_size"], "cell_size") : 1.0;
  if (!doc["walls"].IsSequence()) throw ValidationError("walls", "expected a list of rows");
  std::vector<std::string> rows;
  for (const auto& r : doc["walls"]) rows.push_back(scalar<std::string>(r, "walls"));
  spec.walls = WallGrid::from_rows(rows, cell);

  if (!doc["waypoints"].IsSequence()) throw ValidationError("waypoints", "expected a list");
  for (const auto& w : doc["waypoints"]) {
    if (!w.IsSequence() || w.size() != 2) throw ValidationError("waypoints", "expected [x, y]");
    spec.waypoints.push_back({scalar<double>(w[0], "waypoints"), scalar<double>(w[1], "waypoints")});
  }
  if (doc["direction"]) {
    const auto d = scalar<std::string>(doc["direction"], "direction");
    if (d == "clockwise") spec.direction = Direction::Clockwise;
    else if (d == "counterclockwise") spec.direction = Direction::Counterclockwise;
    else throw ValidationError("direction", "expected clockwise or counterclockwise");
  }
  auto opt_double = [&](const char* key, double& dst) {
    if (doc[key]) dst = scalar<double>(doc[key], key);
  };
  auto opt_int = [&](const char* key, int& dst) {
    if (doc[key]) dst = scalar<int>(doc[key], key);
  };
  if (doc["first_waypoint"]) {
    const long long k = scalar<long long>(doc["first_waypoint"], "first_waypoint");
    if (k < 0) throw ValidationError("first_waypoint", "negative index");
    spec.first_waypoint = static_cast<std::size_t>(k);
  }
  opt_double("target_speed", spec.target_speed);
  opt_double("zigzag_prob", spec.zigzag_prob);
  opt_double("zigzag_amplitude", spec.zigzag_amplitude);
  opt_double("capture_radius", spec.capture_radius);
  opt_int("target_palette", spec.target_palette);
  if (doc["target_shape"])
    spec.target_shape = parse_shape(scalar<std::string>(doc["target_shape"], "target_shape"),
                                    "target_shape");
  opt_int("floor_palette", spec.floor_palette);
  opt_int("ceiling_palette", spec.ceiling_palette);
  opt_int("wall_palette", spec.wall_palette);
  if (doc["distractors"]) {
    if (!doc["distractors"].IsSequence()) throw ValidationError("distractors", "expected a list");
    for (const auto& d : doc["distractors"]) {
      if (!d.IsSequence() || d.size() < 4 || d.size() > 6)
        throw ValidationError("distractors", "expected [x, y, heading, palette, shape, visible]");
      Distractor dist;
      dist.pose = {scalar<double>(d[0], "distractors"), scalar<double>(d[1], "distractors"),
                   scalar<double>(d[2], "distractors")};
      dist.palette = scalar<int>(d[3], "distractors");
      if (d.size() > 4) dist.shape = parse_shape(scalar<std::string>(d[4], "distractors"), "distractors");
      if (d.size() > 5) dist.visible = scalar<bool>(d[5], "distractors");
      spec.distractors.push_back(dist);
    }
  }
  spec.initial_target = parse_pose(doc["initial_target"], "initial_target");
  spec.agent_start = parse_pose(doc["agent_start"], "agent_start");
  if (doc["flip"]) spec.flip = scalar<bool>(doc["flip"], "flip");
  spec.validate();
  return spec;
}

EnvSpec load_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open spec " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return spec_from_document(ss.str());
}

void save_spec(const EnvSpec& spec, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write spec " + path.string());
  out << spec_to_document(spec);
}

}  // namespace atg
