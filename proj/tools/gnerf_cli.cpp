#include "gnerf/config.hpp"
#include "gnerf/dataset.hpp"
#include "gnerf/evaluation.hpp"
#include "gnerf/experiment.hpp"
#include "gnerf/tensor_io.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace gnerf;

namespace {

struct Options {
  std::string verb;
  std::string config_path;
  std::string out_dir = "out";
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string device = "cpu";
  std::string checkpoint;
  std::string input;
};

// Key that --seed feeds for each verb.
const char* seed_key(const std::string& verb) {
  if (verb == "synth-data") return "data.seed";
  if (verb == "sweep-truncation") return "eval.test_seed";
  return "train.seed";
}

ExperimentConfig resolve(const Options& opt, std::vector<std::string>& overrides) {
  ExperimentConfig cfg = opt.config_path.empty() ? ExperimentConfig{} : load_config(opt.config_path);
  overrides = opt.overrides;
  if (opt.seed) overrides.push_back(std::string(seed_key(opt.verb)) + "=" + std::to_string(*opt.seed));
  apply_overrides(cfg, overrides);
  cfg.validate();
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) { io::write_file_atomic(path, text); }

void write_run_json(const fs::path& out, const Options& opt, const std::vector<std::string>& overrides,
                    const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["verb"] = opt.verb;
  j["config_file"] = opt.config_path;
  j["overrides"] = overrides;
  j["device"] = opt.device;
  j["config_hash"] = hash_hex(config_hash(cfg));
  nlohmann::json resolved = nlohmann::json::object();
  for (const auto& key : config_keys()) resolved[key] = get_value(cfg, key);
  j["resolved"] = resolved;
  write_text(out / "run.json", j.dump(2) + "\n");
}

GNeRFModel load_model(const ExperimentConfig& cfg, const std::string& checkpoint) {
  if (checkpoint.empty()) throw ConfigError("--checkpoint is required for this verb");
  GNeRFModel model(cfg.model);
  const RestoreResult r = restore_parameters(load_checkpoint(checkpoint), model.all_parameters(), config_hash(cfg));
  if (r.hash_mismatch) std::cerr << "warning: " << r.warning << "\n";
  return model;
}

// Horizontal concatenation of equally sized images.
Image hstack(const std::vector<Image>& views) {
  const int w = views.front().width;
  const int h = views.front().height;
  Image out;
  out.width = w * static_cast<int>(views.size());
  out.height = h;
  out.pixels.resize(3, out.pixel_count());
  for (std::size_t k = 0; k < views.size(); ++k) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        out.pixels.col(static_cast<Eigen::Index>(y) * out.width + static_cast<int>(k) * w + x) = views[k].at(x, y);
      }
    }
  }
  return out;
}

// Near maps to white, far to black, invalid pixels to black.
Image depth_image(const DepthMap& d, double near, double far) {
  Image img;
  img.width = d.width;
  img.height = d.height;
  img.pixels.setZero(3, d.pixel_count());
  for (Eigen::Index i = 0; i < d.pixel_count(); ++i) {
    if (d.mask[i] > 0.5) img.pixels.col(i).setConstant(std::clamp(1.0 - (d.values[i] - near) / (far - near), 0.0, 1.0));
  }
  return img;
}

int run_synth(const ExperimentConfig& cfg, const fs::path& out) {
  const OracleGan gan = make_oracle(cfg);
  const DatasetManifest m = synthesize_dataset(out, gan, synthesis_request(cfg));
  std::cout << "wrote " << m.count << " triplets to " << out << "\n";
  return 0;
}

int run_train(const ExperimentConfig& cfg, const fs::path& out) {
  const OracleGan gan = make_oracle(cfg);
  const TrainingData data = build_training_data(cfg, gan, cfg.train.gamma_threshold > 0.0);
  FitOptions fo;
  fo.out_dir = out;
  fo.config_hash = config_hash(cfg);
  const std::int64_t every = std::max<std::int64_t>(1, cfg.train.total_steps / 20);
  fo.on_step = [every](const LossRecord& r) {
    if (r.step % every == 0) std::cout << "step " << r.step << " total " << r.total << "\n";
  };
  const TrainedModel t = train_model(cfg, data, fo);
  std::cout << "wrote " << t.fit.checkpoints.size() << " checkpoint(s) to " << out << "\n";
  return 0;
}

int run_eval(const ExperimentConfig& cfg, const fs::path& out, const Options& opt) {
  const GNeRFModel model = load_model(cfg, opt.checkpoint);
  const OracleGan gan = make_oracle(cfg);
  const auto pool = make_test_pool(gan, cfg);
  const ModelEvaluation ev = evaluate_model(model, pool, cfg, ProbeEncoder(cfg.eval.probe_seed));
  const std::string stem = "report_" + hash_hex(config_hash(cfg)) + "_seed" + std::to_string(cfg.train.seed);
  for (const MetricReport* r : {&ev.all, &ev.frontal, &ev.side}) {
    write_text(out / (stem + "_" + r->split + ".json"), r->to_json() + "\n");
  }
  std::cout << ev.all.to_json() << "\n";
  return 0;
}

int run_render(const ExperimentConfig& cfg, const fs::path& out, const Options& opt) {
  const GNeRFModel model = load_model(cfg, opt.checkpoint);
  const Intrinsics intr = cfg.intrinsics();
  Image input;
  if (opt.input.empty()) {
    const OracleGan gan = make_oracle(cfg);
    input = make_test_pool(gan, cfg).front().input;
  } else {
    input = io::read_png(opt.input);
  }
  if (input.width != intr.width || input.height != intr.height) {
    throw ConfigError("input image must be " + std::to_string(intr.width) + "x" + std::to_string(intr.height));
  }
  RenderConfig rc = cfg.render;
  rc.jitter = false;
  const SceneEmbedding emb = [&] {
    ad::NoGradGuard guard;
    return SceneEmbedding{model.encoder().encode(input).values.detach()};
  }();
  const FrozenField field(model.field(), emb);
  constexpr int kViews = 9;
  std::vector<Image> views, depths;
  for (int k = 0; k < kViews; ++k) {
    const double yaw = -0.6 + 1.2 * k / (kViews - 1);
    const RenderedView v = render(field, pose_from_angles(yaw, 0.0, cfg.poses), intr, rc);
    views.push_back(v.image);
    depths.push_back(depth_image(v.depth_map(rc.mask_threshold), rc.near, rc.far));
  }
  io::write_png(out / "input.png", input);
  io::write_png(out / "orbit.png", hstack(views));
  io::write_png(out / "orbit_depth.png", hstack(depths));
  std::cout << "wrote orbit strips to " << out << "\n";
  return 0;
}

int run_sweep(const ExperimentConfig& cfg, const fs::path& out) {
  const OracleGan gan = make_oracle(cfg);
  SweepSettings s;
  s.psis = cfg.eval.sweep_psi;
  s.scenes = cfg.eval.sweep_scenes;
  s.seed = cfg.eval.test_seed;
  s.pose = frontal_pose(cfg);
  s.intrinsics = Intrinsics::centered(cfg.eval.sweep_resolution, cfg.eval.sweep_resolution,
                                      cfg.data.focal_ratio * cfg.eval.sweep_resolution);
  s.render = cfg.render;
  s.render.jitter = false;
  s.render.samples = cfg.eval.sweep_samples;
  const auto rows = truncation_sweep(gan, s, PerceptualFeatures(cfg.loss.perceptual_scales, cfg.loss.perceptual_seed));
  std::ostringstream csv;
  write_sweep_csv(csv, rows);
  write_text(out / ("sweep_" + hash_hex(config_hash(cfg)) + ".csv"), csv.str());
  std::cout << csv.str();
  return 0;
}

int run_ablate(const ExperimentConfig& cfg, const fs::path& out) {
  const auto results = ablation_suite(cfg, default_ablation(), cfg.eval.ablation_seeds,
                                      [](const std::string& msg) { std::cout << msg << std::endl; });
  std::ostringstream csv;
  write_ablation_csv(csv, results);
  const std::string hash = hash_hex(config_hash(cfg));
  write_text(out / ("ablation_" + hash + ".csv"), csv.str());
  for (const auto& r : results) {
    for (std::size_t i = 0; i < r.per_seed.size(); ++i) {
      const std::string stem = "report_" + r.spec.name + "_" + hash + "_seed" + std::to_string(r.seeds[i]);
      write_text(out / (stem + "_all.json"), r.per_seed[i].all.to_json() + "\n");
      write_text(out / (stem + "_side.json"), r.per_seed[i].side.to_json() + "\n");
    }
  }
  std::cout << csv.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gnerf: synthetic multi-view data, depth-aware training and evaluation"};
  app.require_subcommand(1, 1);
  Options opt;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "Config file (key = value lines)")->check(CLI::ExistingFile);
    sub->add_option("--out", opt.out_dir, "Output directory");
    sub->add_option("--set", opt.overrides, "Override key=value (repeatable)")->take_all();
    sub->add_option("--seed", opt.seed, "Seed for the verb's main random stream");
    sub->add_option("--device", opt.device, "Backend device string (only cpu is supported)");
  };
  const std::vector<std::pair<std::string, std::string>> verbs = {
      {"synth-data", "Synthesize a triplet dataset"},
      {"train", "Train encoder, field and discriminator"},
      {"eval", "Evaluate a checkpoint on the held-out test pool"},
      {"render", "Render an orbit strip from one input image"},
      {"sweep-truncation", "Diversity and geometry error across psi"},
      {"ablate", "Run the four-row ablation over the configured seeds"},
  };
  for (const auto& [name, help] : verbs) {
    CLI::App* sub = app.add_subcommand(name, help);
    add_common(sub);
    if (name == "eval" || name == "render") {
      sub->add_option("--checkpoint", opt.checkpoint, "Checkpoint file")->check(CLI::ExistingFile);
    }
    if (name == "render") sub->add_option("--input", opt.input, "Input PNG (default: a held-out oracle render)");
    sub->callback([&opt, name] { opt.verb = name; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  ExperimentConfig cfg;
  std::vector<std::string> overrides;
  fs::path out(opt.out_dir);
  try {
    if (opt.device != "cpu") throw ConfigError("unsupported device '" + opt.device + "'");
    cfg = resolve(opt, overrides);
    fs::create_directories(out);
    write_run_json(out, opt, overrides, cfg);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (opt.verb == "synth-data") return run_synth(cfg, out);
    if (opt.verb == "train") return run_train(cfg, out);
    if (opt.verb == "eval") return run_eval(cfg, out, opt);
    if (opt.verb == "render") return run_render(cfg, out, opt);
    if (opt.verb == "sweep-truncation") return run_sweep(cfg, out);
    if (opt.verb == "ablate") return run_ablate(cfg, out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
