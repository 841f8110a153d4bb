#include "bevrec/cli.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <Eigen/SVD>

#include "bevrec/config.hpp"
#include "bevrec/errors.hpp"
#include "bevrec/eval.hpp"
#include "bevrec/index.hpp"
#include "bevrec/ingest.hpp"
#include "bevrec/parallel.hpp"
#include "bevrec/pipeline.hpp"

namespace bevrec::cli {
namespace {

namespace fs = std::filesystem;

struct Options {
  std::string config;
  std::uint64_t seed = 0;
  int jobs = 0;
  std::string db;
  std::string codebook;
  std::string embedding;
  std::string out;
  std::string sequence;
  std::string split;
  std::string thresholds;
  std::string scans;
  std::string poses;
  std::string calib;
  std::string depth;
  std::string disparity;
  std::string results;
  std::size_t top_n = 0;
};

PipelineConfig resolve_config(const Options& o) {
  PipelineConfig cfg = o.config.empty() ? PipelineConfig{} : load_config(o.config);
  if (!o.codebook.empty()) cfg.codebook_path = o.codebook;
  if (!o.embedding.empty()) cfg.embedding_path = o.embedding;
  return cfg;
}

// Frames of `count` that belong to the requested split role, or all of them.
std::vector<std::size_t> selected_frames(const Options& o, std::size_t count) {
  std::vector<std::size_t> frames;
  if (o.split.empty()) {
    for (std::size_t i = 0; i < count; ++i) frames.push_back(i);
    return frames;
  }
  if (o.sequence.empty()) throw ConfigError("--split needs --sequence");
  const auto role = eval::parse_role(o.split);
  const auto spec = eval::SplitSpec::kitti_default();
  for (const auto& range : spec.ranges(role)) {
    if (range.sequence != o.sequence) continue;
    const auto refs = eval::apply_split({{o.sequence, count}}, {.train = {range}, .val = {}, .test = {}},
                                        eval::Role::train);
    for (const auto& r : refs) frames.push_back(r.frame);
  }
  std::sort(frames.begin(), frames.end());
  return frames;
}

// Output file, or `fallback` when no path was given.
class Sink {
 public:
  Sink(const std::string& path, std::ostream& fallback) : stream_(&fallback) {
    if (path.empty()) return;
    file_.open(path, std::ios::trunc);
    if (!file_) throw IoError("cannot open " + path + " for writing");
    stream_ = &file_;
  }
  std::ostream& get() { return *stream_; }

 private:
  std::ofstream file_;
  std::ostream* stream_;
};

std::vector<PointCloud> load_scans(const std::vector<fs::path>& files, const std::vector<std::size_t>& frames,
                                   LidarFrame frame) {
  std::vector<PointCloud> clouds(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i)
    clouds[i] = pipeline::lidar_to_vehicle(ingest::read_lidar_scan(files[frames[i]]), frame);
  return clouds;
}

int cmd_build_db(const Options& o, std::ostream& out) {
  const PipelineConfig cfg = resolve_config(o);
  const auto pipe = pipeline::Pipeline::from_files(cfg);
  const auto files = ingest::list_files(o.scans, ".bin");
  const auto poses = ingest::read_poses(o.poses);
  if (poses.size() < files.size())
    throw InputError(std::to_string(files.size()) + " scans but only " + std::to_string(poses.size()) + " poses");
  const auto frames = selected_frames(o, files.size());
  const auto clouds = load_scans(files, frames, cfg.lidar_frame);
  std::vector<Pose> frame_poses;
  std::vector<FrameId> ids;
  for (std::size_t f : frames) {
    frame_poses.push_back(poses[f]);
    ids.push_back(f);
  }
  index::Database db;
  for (auto& rec : pipe.build_map(clouds, frame_poses, ids)) db.insert(std::move(rec));
  db.save(o.out);
  out << "wrote " << db.size() << " frames to " << o.out << '\n';
  return kExitOk;
}

int cmd_train_codebook(const Options& o, std::ostream& out) {
  const PipelineConfig cfg = resolve_config(o);
  const auto files = ingest::list_files(o.scans, ".bin");
  const auto clouds = load_scans(files, selected_frames(o, files.size()), cfg.lidar_frame);
  const auto codebook = pipeline::train_codebook(clouds, cfg, o.seed);
  features::save_codebook(o.out, codebook);
  out << "wrote codebook K=" << codebook.clusters() << " d=" << codebook.dim() << " alpha=" << codebook.alpha << " to "
      << o.out << '\n';
  return kExitOk;
}

int cmd_train_metric(const Options& o, std::ostream& out) {
  const PipelineConfig cfg = resolve_config(o);
  const auto db = index::Database::load(o.db);
  std::vector<training::Descriptor> descriptors;
  std::vector<Pose> poses;
  for (const auto& r : db.records()) {
    descriptors.push_back(r.descriptor);
    poses.push_back(r.pose);
  }
  if (!o.poses.empty()) {
    const auto file_poses = ingest::read_poses(o.poses);
    for (std::size_t i = 0; i < poses.size(); ++i) {
      const FrameId id = db.records()[i].frame_id;
      if (id >= file_poses.size()) throw InputError("--poses has no line for frame " + std::to_string(id));
      poses[i] = file_poses[id];
    }
  }
  training::TrainOptions opts;
  opts.epochs = cfg.epochs;
  opts.output_dim = std::min<std::size_t>(cfg.embedding_dim, db.dim());
  opts.learning_rate = cfg.learning_rate;
  opts.seed = o.seed;
  const auto result = training::train_metric(descriptors, poses, cfg.triplet, opts);
  training::save_embedding(o.out, result.map);
  out << "epoch,mean_loss\n" << std::setprecision(10);
  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) out << e + 1 << ',' << result.epoch_loss[e] << '\n';
  return kExitOk;
}

Extrinsics camera_extrinsics(const ingest::Calibration& calib, LidarFrame frame) {
  if (!calib.has("Tr")) return Extrinsics::forward_camera();
  const auto& tr = calib.at("Tr");
  // vehicle -> lidar axes, then lidar -> camera
  Mat3 vehicle_to_lidar = Mat3::Identity();
  if (frame == LidarFrame::kitti) vehicle_to_lidar << 0, 1, 0, -1, 0, 0, 0, 0, 1;
  Extrinsics e;
  e.rotation = tr.leftCols<3>() * vehicle_to_lidar;
  e.translation = tr.col(3);
  if (!is_orthonormal(e.rotation)) {
    Eigen::JacobiSVD<Mat3> svd(e.rotation, Eigen::ComputeFullU | Eigen::ComputeFullV);
    e.rotation = svd.matrixU() * svd.matrixV().transpose();
  }
  e.validate();
  return e;
}

int cmd_query(const Options& o, std::ostream& out) {
  const PipelineConfig cfg = resolve_config(o);
  const auto pipe = pipeline::Pipeline::from_files(cfg);
  const auto db = index::Database::load(o.db);
  const auto calib = ingest::read_calibration(o.calib);
  const Extrinsics extr = camera_extrinsics(calib, cfg.lidar_frame);
  const bool stereo = !o.disparity.empty();
  const auto files = ingest::list_files(stereo ? o.disparity : o.depth, ".png");
  const auto frames = selected_frames(o, files.size());

  const std::size_t n = o.top_n > 0 ? o.top_n
                                    : std::max(cfg.eval.top_n, eval::percent_candidates(db.size(), cfg.eval.percent));
  std::vector<Eigen::VectorXd> descriptors(frames.size());
  if (stereo) {
    const auto rig = ingest::stereo_rig_from_projections(calib.at(cfg.camera), calib.at(cfg.right_camera));
    for (std::size_t i = 0; i < frames.size(); ++i)
      descriptors[i] = pipe.build_query(ingest::read_disparity(files[frames[i]], cfg.disparity_scale), rig, extr);
  } else {
    const auto intr = ingest::intrinsics_from_projection(calib.at(cfg.camera));
    std::vector<DepthMap> depths;
    for (std::size_t f : frames) depths.push_back(ingest::read_depth_png(files[f], cfg.depth_scale));
    descriptors = pipe.build_queries(depths, intr, extr);
  }

  Sink sink(o.out, out);
  auto& csv = sink.get();
  csv << "query,rank,frame_id,distance\n" << std::setprecision(17);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    std::optional<index::ExclusionWindow> exclude;
    if (cfg.eval.exclusion_window > 0) exclude = index::ExclusionWindow{frames[i], cfg.eval.exclusion_window};
    const auto ranked = db.query_knn(descriptors[i], n, exclude);
    for (std::size_t r = 0; r < ranked.size(); ++r)
      csv << frames[i] << ',' << r + 1 << ',' << ranked[r].frame_id << ',' << ranked[r].distance << '\n';
  }
  return kExitOk;
}

struct LoadedResults {
  std::vector<index::RetrievalResult> results;
  std::vector<Pose> query_poses;
  std::vector<Pose> db_poses;
};

LoadedResults load_results(const Options& o) {
  const auto db = index::Database::load(o.db);
  const auto poses = ingest::read_poses(o.poses);
  std::ifstream in(o.results);
  if (!in) throw IoError("cannot open " + o.results);

  std::map<std::size_t, index::RetrievalResult> by_query;
  std::string line;
  std::getline(in, line);
  if (line.rfind("query,rank,frame_id,distance", 0) != 0) throw FormatError(o.results + ": unexpected header");
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    std::size_t query = 0, rank = 0;
    FrameId id = 0;
    double dist = 0.0;
    if (!(ss >> query >> rank >> id >> dist)) throw FormatError(o.results + ":" + std::to_string(line_no) + ": bad row");
    by_query[query].push_back({id, dist});
  }

  std::set<std::size_t> keep;
  if (!o.split.empty())
    for (std::size_t f : selected_frames(o, poses.size())) keep.insert(f);

  LoadedResults out;
  FrameId max_id = 0;
  for (const auto& r : db.records()) max_id = std::max(max_id, r.frame_id);
  out.db_poses.resize(db.empty() ? 0 : max_id + 1);
  for (const auto& r : db.records()) out.db_poses[r.frame_id] = r.pose;
  for (auto& [query, ranked] : by_query) {
    if (!o.split.empty() && !keep.count(query)) continue;
    if (query >= poses.size()) throw InputError("query " + std::to_string(query) + " has no pose");
    out.results.push_back(std::move(ranked));
    out.query_poses.push_back(poses[query]);
  }
  return out;
}

int cmd_eval(const Options& o, std::ostream& out) {
  const PipelineConfig cfg = resolve_config(o);
  const auto data = load_results(o);
  const std::string seq = o.sequence.empty() ? "all" : o.sequence;
  std::vector<eval::MetricRow> rows;
  rows.push_back({"recall@1", seq,
                  eval::recall_at_n(data.results, data.query_poses, data.db_poses, cfg.eval.tp_threshold, 1)});
  if (cfg.eval.top_n > 1)
    rows.push_back({"recall@" + std::to_string(cfg.eval.top_n), seq,
                    eval::recall_at_n(data.results, data.query_poses, data.db_poses, cfg.eval.tp_threshold,
                                      cfg.eval.top_n)});
  rows.push_back({"recall@1%", seq,
                  eval::recall_at_percent(data.results, data.query_poses, data.db_poses, cfg.eval.tp_threshold,
                                          cfg.eval.percent)});
  Sink sink(o.out, out);
  eval::write_metrics_csv(sink.get(), rows);
  return kExitOk;
}

std::vector<double> parse_thresholds(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw CLI::ValidationError("--thresholds", "not a number: " + item);
    }
  }
  return out;
}

int cmd_sweep(const Options& o, std::ostream& out) {
  const PipelineConfig cfg = resolve_config(o);
  const auto thresholds = o.thresholds.empty() ? cfg.eval.sweep : parse_thresholds(o.thresholds);
  const auto data = load_results(o);
  const auto sweep = eval::threshold_sweep(data.results, data.query_poses, data.db_poses, thresholds);
  Sink sink(o.out, out);
  eval::write_sweep_csv(sink.get(), sweep);
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Camera-to-LiDAR-map place recognition on bird's-eye-view images", "bevrec"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  auto common = [&o](CLI::App* sub) {
    sub->add_option("--config", o.config, "key = value configuration file")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "seed for every stochastic stage");
    sub->add_option("--jobs", o.jobs, "maximum worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--sequence", o.sequence, "sequence name used for splits and report labels");
    sub->add_option("--split", o.split, "restrict frames to a split role")->check(CLI::IsMember({"train", "val", "test"}));
  };

  auto* build = app.add_subcommand("build-db", "LiDAR scans + poses -> descriptor database");
  common(build);
  build->add_option("--scans", o.scans, "directory of .bin scans")->required();
  build->add_option("--poses", o.poses, "poses file")->required();
  build->add_option("--codebook", o.codebook, "codebook file");
  build->add_option("--embedding", o.embedding, "embedding file");
  build->add_option("--out", o.out, "database file to write")->required();

  auto* tcb = app.add_subcommand("train-codebook", "BEV local features of scans -> codebook");
  common(tcb);
  tcb->add_option("--scans", o.scans, "directory of .bin scans")->required();
  tcb->add_option("--out", o.out, "codebook file to write")->required();

  auto* tm = app.add_subcommand("train-metric", "database descriptors + poses -> embedding");
  common(tm);
  tm->add_option("--db", o.db, "database built without an embedding")->required();
  tm->add_option("--poses", o.poses, "override the poses stored in the database");
  tm->add_option("--out", o.out, "embedding file to write")->required();

  auto* query = app.add_subcommand("query", "depth or disparity maps -> ranked matches CSV");
  common(query);
  query->add_option("--db", o.db, "database file")->required();
  query->add_option("--codebook", o.codebook, "codebook file");
  query->add_option("--embedding", o.embedding, "embedding file");
  query->add_option("--calib", o.calib, "calibration file")->required();
  auto* depth = query->add_option("--depth", o.depth, "directory of 16-bit depth PNGs");
  auto* disp = query->add_option("--disparity", o.disparity, "directory of 16-bit disparity PNGs");
  depth->excludes(disp);
  query->add_option("--top-n", o.top_n, "matches per query (default: max(top_n, ceil(percent * db)))");
  query->add_option("--out", o.out, "CSV to write (default stdout)");

  auto* ev = app.add_subcommand("eval", "ranked matches -> recall CSV");
  common(ev);
  ev->add_option("--db", o.db, "database file")->required();
  ev->add_option("--results", o.results, "CSV written by query")->required();
  ev->add_option("--poses", o.poses, "query poses file")->required();
  ev->add_option("--out", o.out, "CSV to write (default stdout)");

  auto* sw = app.add_subcommand("sweep", "recall@1 across true-positive thresholds");
  common(sw);
  sw->add_option("--db", o.db, "database file")->required();
  sw->add_option("--results", o.results, "CSV written by query")->required();
  sw->add_option("--poses", o.poses, "query poses file")->required();
  sw->add_option("--thresholds", o.thresholds, "comma-separated thresholds in meters");
  sw->add_option("--out", o.out, "CSV to write (default stdout)");

  try {
    app.parse(argc, argv);
    if (query->parsed() && o.depth.empty() && o.disparity.empty())
      throw CLI::RequiredError("--depth or --disparity");
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const CLI::App* failed = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << failed->help();
    return kExitUsage;
  }

  try {
    set_worker_count(o.jobs);
    if (build->parsed()) return cmd_build_db(o, out);
    if (tcb->parsed()) return cmd_train_codebook(o, out);
    if (tm->parsed()) return cmd_train_metric(o, out);
    if (query->parsed()) return cmd_query(o, out);
    if (ev->parsed()) return cmd_eval(o, out);
    if (sw->parsed()) return cmd_sweep(o, out);
  } catch (const CLI::ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}

int run(int argc, char** argv) { return run(argc, argv, std::cout, std::cerr); }

}  // namespace bevrec::cli
