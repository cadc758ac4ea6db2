// Acceptance run: one PASS/FAIL line per criterion. Arguments select a subset
// of criteria by number; no arguments runs all eight.

#include "gnerf/config.hpp"
#include "gnerf/dataset.hpp"
#include "gnerf/evaluation.hpp"
#include "gnerf/experiment.hpp"
#include "gnerf/latent.hpp"
#include "gnerf/losses.hpp"
#include "gnerf/oracle.hpp"
#include "gnerf/render.hpp"
#include "gnerf/tensor_io.hpp"
#include "gnerf/train.hpp"
#include "render_oracle.hpp"
#include "test_support.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <sys/wait.h>

using namespace gnerf;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

fs::path source_dir() { return GNERF_SOURCE_DIR; }

ExperimentConfig ablation_base() { return load_config(source_dir() / "configs" / "ablation_cpu.conf"); }

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

// 1. Rendering against a fine reference integral.
Outcome compositing_oracle() {
  const OracleField field(gnerf::testing::three_blob_scene());
  PoseDistribution poses;
  RenderConfig cfg;
  cfg.samples = 256;
  const Intrinsics intr = Intrinsics::centered(10, 10, 17.0);
  Rng rng(2024);
  double color_err = 0.0, depth_err = 0.0;
  int rays = 0;
  for (int v = 0; v < 10; ++v) {
    const CameraPose pose = sample_pose(poses, rng);
    const RenderedView view = render(field, pose, intr, cfg);
    const RayGrid grid = generate_rays(pose, intr);
    for (Eigen::Index i = 0; i < grid.count(); ++i, ++rays) {
      const Ray ray{grid.origins.row(i).transpose(), grid.directions.row(i).transpose()};
      const auto ref = gnerf::testing::integrate_ray(field, ray, cfg.near, cfg.far, 16384);
      const Eigen::Vector3d ref_color = ref.color + (1.0 - ref.weight) * cfg.background;
      color_err = std::max(color_err, (view.image.pixels.col(i) - ref_color).cwiseAbs().maxCoeff());
      depth_err = std::max(depth_err, std::abs(view.depth[i] - ref.depth));
    }
  }
  return {rays == 1000 && color_err < 1e-3 && depth_err < 1e-2,
          std::to_string(rays) + " rays, max color err " + fmt(color_err) + ", max depth err " + fmt(depth_err)};
}

// 2. Truncation identities.
Outcome truncation_identities() {
  Rng rng(7);
  std::normal_distribution<double> n;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  bool exact = true;
  double ratio_err = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int dim = 1 + trial % 64;
    const IntermediateLatent w{Eigen::VectorXd::NullaryExpr(dim, [&] { return n(rng); })};
    const LatentCenter c{Eigen::VectorXd::NullaryExpr(dim, [&] { return n(rng); }), 1};
    exact = exact && truncate(w, c, {0.0}).values == c.values && truncate(w, c, {1.0}).values == w.values;
    const double psi = u(rng);
    const double ratio = (truncate(w, c, {psi}).values - c.values).norm() / (w.values - c.values).norm();
    ratio_err = std::max(ratio_err, std::abs(ratio - psi));
  }
  return {exact && ratio_err < 1e-12,
          std::string(exact ? "endpoints exact" : "endpoints NOT exact") + ", max ratio err " + fmt(ratio_err)};
}

// 3. Loss values at known points.
Outcome loss_unit_values() {
  LossConfig cfg;
  const ad::Tensor zero = ad::Tensor::scalar(0.0);
  const double d_inverted = d_adversarial_loss(zero, zero, zero, cfg).item();
  LossConfig standard = cfg;
  standard.sign_convention = SignConvention::Standard;
  const double d_standard = d_adversarial_loss(zero, zero, zero, standard).item();
  Rng rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const ad::Tensor x = ad::Tensor::constant(Eigen::MatrixXd::NullaryExpr(3, 24 * 24, [&] { return u(rng); }));
  const double s = ssim(x, x, 24, 24, cfg.ssim_window).item();
  const double r = recon_loss(x, x, 24, 24, cfg).item();
  const double two_ln2 = 2.0 * std::log(2.0);
  const bool ok = std::abs(d_inverted - two_ln2) < 1e-6 && std::abs(d_standard - two_ln2) < 1e-6 &&
                  std::abs(s - 1.0) < 1e-6 && std::abs(r) < 1e-6;
  return {ok, "d_loss(0,0) " + fmt(d_inverted) + ", ssim(x,x) " + fmt(s) + ", recon(x,x) " + fmt(r)};
}

// Central differences of f with respect to a parameter tensor.
Eigen::MatrixXd numeric_grad(ad::Tensor param, const std::function<double()>& f, double h) {
  const Eigen::MatrixXd p0 = param.value();
  return gnerf::testing::numeric_gradient(
      [&](const Eigen::MatrixXd& v) {
        param.mutable_value() = v;
        const double out = f();
        param.mutable_value() = p0;
        return out;
      },
      p0, h);
}

// 4. Gradient checks.
Outcome gradient_checks() {
  using gnerf::testing::relative_error;
  ModelConfig mc;
  mc.resolution = 8;
  mc.embedding_dim = 6;
  mc.encoder_channels = 3;
  mc.field_width = 8;
  mc.field_layers = 2;
  mc.pe_frequencies = 2;
  mc.disc_channels = 3;
  mc.disc_hidden = 5;
  const GNeRFModel model(mc);
  PoseDistribution pd;
  const CameraPose pose = pose_from_angles(0.2, 0.1, pd);
  const Intrinsics intr = Intrinsics::centered(8, 8, 13.6);

  // R1 penalty with respect to the first discriminator weight.
  const Eigen::MatrixXd depth = (Eigen::MatrixXd::Random(1, 64).array() * 0.3 + 2.5).matrix();
  const Eigen::RowVectorXd mask = Eigen::RowVectorXd::Ones(64);
  const auto penalty = [&] {
    const ad::Tensor in = ad::Tensor::parameter(depth);
    return r1_penalty(model.discriminator().discriminate(in, mask, pose), in);
  };
  const ad::Tensor dw = model.discriminator_parameters().front().second;
  const double r1_err = relative_error(ad::grad(penalty(), {dw})[0].value(),
                                       numeric_grad(dw, [&] { return penalty().item(); }, 1e-5));

  // Reconstruction loss with respect to the rendered image.
  LossConfig lc;
  lc.ssim_window = 5;
  lc.perceptual_scales = {4, 4};
  Rng rng(9);
  std::uniform_real_distribution<double> u(0.1, 0.9);
  const Eigen::MatrixXd fake = Eigen::MatrixXd::NullaryExpr(3, 64, [&] { return u(rng); });
  const ad::Tensor ref = ad::Tensor::constant(Eigen::MatrixXd::NullaryExpr(3, 64, [&] { return u(rng); }));
  const double recon_err = gnerf::testing::gradient_error(
      [&](const ad::Tensor& x) { return recon_loss(x, ref, 8, 8, lc); }, fake, 1e-6);

  // Render through the conditioned field, with respect to field and encoder weights.
  RenderConfig rc;
  rc.samples = 16;
  const Image input = Image::filled(8, 8, {0.6, 0.4, 0.3});
  const Eigen::MatrixXd probe_w = Eigen::MatrixXd::NullaryExpr(3, 64, [&] { return u(rng); });
  const auto rendered = [&] {
    const GeneratorOutput out = model.generate(pose, model.encoder().encode(input), intr, rc);
    return ad::sum(out.image * ad::Tensor::constant(probe_w)) + ad::sum(out.depth);
  };
  double render_err = 0.0;
  for (const auto& [name, param] : model.generator_parameters()) {
    if (name != "field.density.weight" && name != "field.color.weight" && name != "field.layer0.weight") continue;
    const Eigen::MatrixXd analytic = ad::grad(rendered(), {param})[0].value();
    render_err = std::max(render_err, relative_error(analytic, numeric_grad(param, [&] { return rendered().item(); }, 1e-6)));
  }
  const bool ok = r1_err < 1e-3 && recon_err < 1e-3 && render_err < 1e-3;
  return {ok, "rel err R1 " + fmt(r1_err) + ", recon " + fmt(recon_err) + ", render " + fmt(render_err)};
}

// 5. Truncation sweep trends.
Outcome truncation_trend() {
  const ExperimentConfig cfg = ablation_base();
  const OracleGan gan = make_oracle(cfg);
  SweepSettings s;
  s.psis = {0.0, 0.3, 0.7, 1.0};
  s.scenes = 200;
  s.seed = cfg.eval.test_seed;
  s.pose = frontal_pose(cfg);
  s.intrinsics = Intrinsics::centered(cfg.eval.sweep_resolution, cfg.eval.sweep_resolution,
                                      cfg.data.focal_ratio * cfg.eval.sweep_resolution);
  s.render = cfg.render;
  s.render.samples = cfg.eval.sweep_samples;
  const auto rows = truncation_sweep(gan, s, PerceptualFeatures(cfg.loss.perceptual_scales, cfg.loss.perceptual_seed));
  bool ok = true;
  std::string detail;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i > 0) {
      ok = ok && rows[i].diversity > rows[i - 1].diversity && rows[i].geometry_error >= rows[i - 1].geometry_error;
    }
    detail += (i ? "; " : "") + std::string("psi ") + fmt(rows[i].psi) + ": div " + fmt(rows[i].diversity) +
              " geo " + fmt(rows[i].geometry_error);
  }
  return {ok, detail};
}

// 6. Ablation ordering.
Outcome ablation_ordering() {
  const ExperimentConfig cfg = ablation_base();
  const auto results = ablation_suite(cfg, default_ablation(), cfg.eval.ablation_seeds,
                                      [](const std::string& msg) { std::cerr << "  " << msg << std::endl; });
  std::ostringstream csv;
  write_ablation_csv(csv, results);
  std::cerr << csv.str();
  const double none = results[0].median_all.at("depth_mse");
  const double psi1 = results[1].median_all.at("depth_mse");
  const double psi05 = results[2].median_all.at("depth_mse");
  const double side_plain = results[2].median_side.at("depth_mse");
  const double side_dg = results[3].median_side.at("depth_mse");
  const bool a = none > psi1 && psi1 >= psi05;
  const bool b = side_plain > side_dg;
  return {a && b, std::string("(a) ") + (a ? "holds" : "fails") + ": " + fmt(none) + " > " + fmt(psi1) +
                      " >= " + fmt(psi05) + "; (b) " + (b ? "holds" : "fails") + ": side " + fmt(side_plain) +
                      " > " + fmt(side_dg)};
}

// 7. Branch statistics of the training loop over 10k steps.
Outcome branch_statistics() {
  ExperimentConfig cfg = gnerf::testing::tiny_config();
  cfg.model.resolution = 8;
  cfg.model.embedding_dim = 2;
  cfg.model.encoder_channels = 1;
  cfg.model.field_width = 4;
  cfg.model.field_layers = 1;
  cfg.model.pe_frequencies = 1;
  cfg.render.samples = 2;
  cfg.loss.ssim_window = 3;
  cfg.loss.perceptual_scales = {1};
  cfg.train.batch_size = 1;
  cfg.train.use_discriminator = false;
  cfg.train.total_steps = 10000;
  cfg.train.checkpoint_interval = 1000000;
  const OracleGan gan = make_oracle(cfg);
  const TrainingData data = build_training_data(cfg, gan, true);
  const TrainedModel t = train_model(cfg, data);
  const double frac = static_cast<double>(t.fit.synthetic_batches) / static_cast<double>(t.fit.log.size());
  return {t.fit.log.size() == 10000 && std::abs(frac - 0.5) <= 0.02,
          std::to_string(t.fit.synthetic_batches) + " of " + std::to_string(t.fit.log.size()) +
              " steps synthetic (" + fmt(frac) + ")"};
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(GNERF_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// 8. Reproducibility of training logs and dataset bytes.
Outcome reproducibility() {
  const fs::path dir = gnerf::testing::temp_dir("acceptance_repro");
  const std::string conf = (source_dir() / "configs" / "cpu_small.conf").string();
  std::string detail;
  bool ok = true;
  for (const char* run : {"a", "b"}) {
    if (run_cli("train --config " + conf + " --seed 3 --out " + (dir / run).string()) != 0) {
      return {false, "train run failed"};
    }
  }
  const std::string log_a = io::read_file(dir / "a" / "losses.csv");
  const bool logs = log_a == io::read_file(dir / "b" / "losses.csv");
  const bool ckpt = io::read_file(dir / "a" / "checkpoint_00000020.gnck") ==
                    io::read_file(dir / "b" / "checkpoint_00000020.gnck");
  ok = ok && logs && ckpt && std::count(log_a.begin(), log_a.end(), '\n') == 21;
  detail += std::string("train logs ") + (logs ? "identical" : "DIFFER") + ", checkpoints " +
            (ckpt ? "identical" : "DIFFER");

  const ExperimentConfig cfg = load_config(conf);
  const OracleGan gan = make_oracle(cfg);
  SynthesisRequest req = synthesis_request(cfg);
  req.count = 24;
  req.threads = 1;
  const DatasetManifest m = synthesize_dataset(dir / "serial", gan, req);
  req.threads = 4;
  synthesize_dataset(dir / "parallel", gan, req);
  std::set<std::string> files = {"manifest.json"};
  for (const auto& r : m.records) files.insert({r.image_first, r.image_second, r.depth, r.mask});
  bool bytes = true;
  for (const auto& f : files) bytes = bytes && io::read_file(dir / "serial" / f) == io::read_file(dir / "parallel" / f);
  ok = ok && bytes;
  detail += ", " + std::to_string(files.size()) + " dataset files " + (bytes ? "byte-identical" : "DIFFER");
  return {ok, detail};
}

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;  // 0 means no runtime bound
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "compositing oracle", 120, compositing_oracle},
      {2, "truncation identities", 0, truncation_identities},
      {3, "loss unit values", 0, loss_unit_values},
      {4, "gradient checks", 300, gradient_checks},
      {5, "truncation sweep trend", 600, truncation_trend},
      {6, "ablation ordering", 0, ablation_ordering},
      {7, "branch statistics", 0, branch_statistics},
      {8, "reproducibility", 0, reproducibility},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& c : all) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.budget_seconds > 0 && secs > c.budget_seconds) {
      o.pass = false;
      o.detail += ", over the " + fmt(c.budget_seconds) + " s budget";
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c.id << " (" << c.name << "): " << o.detail << " ["
              << std::fixed << std::setprecision(1) << secs << " s]" << std::defaultfloat << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
