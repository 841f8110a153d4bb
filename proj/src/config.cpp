#include "bevrec/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "bevrec/errors.hpp"

namespace bevrec {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double d = 0.0;
  try {
    d = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size() || !std::isfinite(d)) throw ConfigError(key + ": not a number: \"" + v + "\"");
  return d;
}

std::size_t to_count(const std::string& key, const std::string& v) {
  const double d = to_double(key, v);
  if (d < 0 || d != std::floor(d)) throw ConfigError(key + ": expected a non-negative integer, got \"" + v + "\"");
  return static_cast<std::size_t>(d);
}

std::vector<double> to_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_double(key, trim(item)));
  return out;
}

using Setter = std::function<void(PipelineConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"cell_size", [](PipelineConfig& c, const std::string& v) { c.cell_size = to_double("cell_size", v); }},
      {"x_min", [](PipelineConfig& c, const std::string& v) { c.window.x_min = to_double("x_min", v); }},
      {"x_max", [](PipelineConfig& c, const std::string& v) { c.window.x_max = to_double("x_max", v); }},
      {"y_min", [](PipelineConfig& c, const std::string& v) { c.window.y_min = to_double("y_min", v); }},
      {"y_max", [](PipelineConfig& c, const std::string& v) { c.window.y_max = to_double("y_max", v); }},
      {"z_min", [](PipelineConfig& c, const std::string& v) { c.window.z_min = to_double("z_min", v); }},
      {"z_max", [](PipelineConfig& c, const std::string& v) { c.window.z_max = to_double("z_max", v); }},
      {"patch", [](PipelineConfig& c, const std::string& v) { c.patch = to_count("patch", v); }},
      {"stride", [](PipelineConfig& c, const std::string& v) { c.stride = to_count("stride", v); }},
      {"clusters", [](PipelineConfig& c, const std::string& v) { c.clusters = to_count("clusters", v); }},
      {"alpha", [](PipelineConfig& c, const std::string& v) { c.alpha = to_double("alpha", v); }},
      {"kmeans_max_iterations",
       [](PipelineConfig& c, const std::string& v) { c.kmeans_max_iterations = to_count("kmeans_max_iterations", v); }},
      {"codebook", [](PipelineConfig& c, const std::string& v) { c.codebook_path = v; }},
      {"embedding", [](PipelineConfig& c, const std::string& v) { c.embedding_path = v; }},
      {"depth_max", [](PipelineConfig& c, const std::string& v) { c.depth_max = to_double("depth_max", v); }},
      {"depth_scale", [](PipelineConfig& c, const std::string& v) { c.depth_scale = to_double("depth_scale", v); }},
      {"disparity_scale",
       [](PipelineConfig& c, const std::string& v) { c.disparity_scale = to_double("disparity_scale", v); }},
      {"camera", [](PipelineConfig& c, const std::string& v) { c.camera = v; }},
      {"right_camera", [](PipelineConfig& c, const std::string& v) { c.right_camera = v; }},
      {"lidar_frame",
       [](PipelineConfig& c, const std::string& v) {
         if (v == "kitti") c.lidar_frame = LidarFrame::kitti;
         else if (v == "vehicle") c.lidar_frame = LidarFrame::vehicle;
         else throw ConfigError("lidar_frame: expected kitti or vehicle, got \"" + v + "\"");
       }},
      {"map_cone_half_angle",
       [](PipelineConfig& c, const std::string& v) { c.map_cone_half_angle_deg = to_double("map_cone_half_angle", v); }},
      {"margin", [](PipelineConfig& c, const std::string& v) { c.triplet.margin = to_double("margin", v); }},
      {"positives", [](PipelineConfig& c, const std::string& v) { c.triplet.n_pos = to_count("positives", v); }},
      {"negatives", [](PipelineConfig& c, const std::string& v) { c.triplet.n_neg = to_count("negatives", v); }},
      {"positive_radius",
       [](PipelineConfig& c, const std::string& v) { c.triplet.d_pos = to_double("positive_radius", v); }},
      {"negative_radius",
       [](PipelineConfig& c, const std::string& v) { c.triplet.d_neg = to_double("negative_radius", v); }},
      {"hard_mining_start_epoch",
       [](PipelineConfig& c, const std::string& v) {
         c.triplet.hard_mining_start_epoch = to_count("hard_mining_start_epoch", v);
       }},
      {"embedding_dim", [](PipelineConfig& c, const std::string& v) { c.embedding_dim = to_count("embedding_dim", v); }},
      {"learning_rate", [](PipelineConfig& c, const std::string& v) { c.learning_rate = to_double("learning_rate", v); }},
      {"epochs", [](PipelineConfig& c, const std::string& v) { c.epochs = to_count("epochs", v); }},
      {"tp_threshold", [](PipelineConfig& c, const std::string& v) { c.eval.tp_threshold = to_double("tp_threshold", v); }},
      {"top_n", [](PipelineConfig& c, const std::string& v) { c.eval.top_n = to_count("top_n", v); }},
      {"percent", [](PipelineConfig& c, const std::string& v) { c.eval.percent = to_double("percent", v); }},
      {"sweep", [](PipelineConfig& c, const std::string& v) { c.eval.sweep = to_list("sweep", v); }},
      {"exclusion_window",
       [](PipelineConfig& c, const std::string& v) { c.eval.exclusion_window = to_count("exclusion_window", v); }},
  };
  return table;
}

}  // namespace

void PipelineConfig::validate() const {
  const bev::GridShape shape = bev::grid_shape(window, cell_size);
  if (patch < 2 || patch > std::min(shape.rows, shape.cols))
    throw ConfigError("patch must be in [2, " + std::to_string(std::min(shape.rows, shape.cols)) + "]");
  if (stride < 1) throw ConfigError("stride must be >= 1");
  if (clusters < 2) throw ConfigError("clusters must be >= 2");
  if (alpha && !(*alpha > 0.0)) throw ConfigError("alpha must be positive");
  if (kmeans_max_iterations < 1) throw ConfigError("kmeans_max_iterations must be >= 1");
  if (!(depth_max > 0.0)) throw ConfigError("depth_max must be positive");
  if (!(depth_scale > 0.0)) throw ConfigError("depth_scale must be positive");
  if (!(disparity_scale > 0.0)) throw ConfigError("disparity_scale must be positive");
  if (map_cone_half_angle_deg < 0.0 || map_cone_half_angle_deg > 180.0)
    throw ConfigError("map_cone_half_angle must be in [0, 180]");
  triplet.validate();
  if (embedding_dim < 1) throw ConfigError("embedding_dim must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  eval.validate();
}

PipelineConfig parse_config(const std::string& text) {
  PipelineConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError("config line " + std::to_string(line_no) + ": unknown key \"" + key + "\"");
    try {
      it->second(cfg, value);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

}  // namespace bevrec
