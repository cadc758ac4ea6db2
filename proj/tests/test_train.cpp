#include "gnerf/train.hpp"

#include "gnerf/dataset.hpp"
#include "gnerf/experiment.hpp"
#include "test_support.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <fstream>

using namespace gnerf;
using gnerf::testing::tiny_config;

namespace {

struct Fixture {
  ExperimentConfig cfg = tiny_config();
  OracleGan gan = make_oracle(cfg);
  TrainingData data = build_training_data(cfg, gan, true);
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

struct Context {
  GNeRFModel model;
  ReconstructionLoss recon;
  TrainContext ctx;

  explicit Context(const ExperimentConfig& cfg) : model(cfg.model), recon(cfg.loss) {
    ctx.model = &model;
    ctx.recon = &recon;
    ctx.loss = cfg.loss;
    ctx.train = cfg.train;
    ctx.render = cfg.render;
    ctx.intrinsics = cfg.intrinsics();
    ctx.poses = cfg.poses;
  }
  Context(const Context&) = delete;
};

std::vector<Eigen::MatrixXd> snapshot(const NamedTensors& params) {
  std::vector<Eigen::MatrixXd> out;
  for (const auto& [n, t] : params) out.push_back(t.value());
  return out;
}

bool unchanged(const NamedTensors& params, const std::vector<Eigen::MatrixXd>& before) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].second.value() != before[i]) return false;
  }
  return true;
}

Adam generator_adam(const Context& c, double lr = 1e-3) {
  return Adam(c.model.generator_parameters(), AdamConfig{lr, 0.9, 0.999, 1e-8});
}

Adam discriminator_adam(const Context& c, double lr = 8e-6) {
  return Adam(c.model.discriminator_parameters(), AdamConfig{lr, 0.0, 0.99, 1e-8});
}

}  // namespace

TEST_CASE("select_branch", "[train]") {
  CHECK(select_branch(0.3, 0.5) == Branch::Synthetic);
  CHECK(select_branch(0.5, 0.5) == Branch::Synthetic);
  CHECK(select_branch(0.5000001, 0.5) == Branch::Real);
  CHECK(select_branch(1.0, 0.5) == Branch::Real);
  CHECK(select_branch(0.0, 0.0) == Branch::Synthetic);
  CHECK_THROWS_AS(select_branch(-0.1, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(select_branch(1.1, 0.5), std::invalid_argument);

  // Binomial: sd of the fraction is 0.5 / sqrt(10000) = 0.005.
  Rng rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int synthetic = 0;
  for (int i = 0; i < 10000; ++i) synthetic += select_branch(u(rng), 0.5) == Branch::Synthetic;
  CHECK(std::abs(synthetic / 10000.0 - 0.5) <= 0.02);
}

TEST_CASE("Adam bias correction", "[train]") {
  const ad::Tensor p = ad::Tensor::parameter(Eigen::MatrixXd::Constant(1, 2, 1.0));
  Adam opt({{"p", p}}, AdamConfig{0.1, 0.9, 0.999, 1e-12});
  Eigen::MatrixXd g(1, 2);
  g << 3.0, -0.5;
  opt.step({ad::Tensor::constant(g)});
  // First bias-corrected step moves each coordinate by lr * sign(g).
  CHECK(p.value()(0, 0) == Catch::Approx(0.9).epsilon(1e-9));
  CHECK(p.value()(0, 1) == Catch::Approx(1.1).epsilon(1e-9));
  CHECK(opt.steps() == 1);
  CHECK_THROWS(opt.step({}));
  CHECK_THROWS(Adam({{"p", p}}, AdamConfig{0.0, 0.9, 0.999, 1e-8}));
}

TEST_CASE("build_batch", "[train]") {
  const auto& f = fixture();
  Rng rng(2);
  const Batch real = build_batch(Branch::Real, f.data, 3, true, rng);
  REQUIRE(real.items.size() == 3);
  CHECK(real.real_depths.size() == 3);
  for (const auto& item : real.items) {
    CHECK(item.reference.pixels == item.target.pixels);
    CHECK(item.reference_pose.to_matrix() == item.target_pose.to_matrix());
  }
  const Batch syn = build_batch(Branch::Synthetic, f.data, 3, true, rng);
  for (const auto& item : syn.items) {
    CHECK(item.reference_pose.to_matrix() != item.target_pose.to_matrix());
  }
  CHECK(syn.real_depths.size() == 3);

  Rng a(5), b(5);
  for (int i = 0; i < 5; ++i) {
    const Batch x = build_batch(Branch::Synthetic, f.data, 2, false, a);
    const Batch y = build_batch(Branch::Synthetic, f.data, 2, false, b);
    CHECK(x.items[0].target.pixels == y.items[0].target.pixels);
    CHECK(x.items[1].target_pose.to_matrix() == y.items[1].target_pose.to_matrix());
  }

  TrainingData empty;
  CHECK_THROWS_AS(build_batch(Branch::Synthetic, empty, 1, false, rng), std::invalid_argument);
  CHECK_THROWS_AS(build_batch(Branch::Real, empty, 1, false, rng), std::invalid_argument);
  TrainingData real_only;
  real_only.real = f.data.real;
  CHECK_THROWS_AS(build_batch(Branch::Real, real_only, 1, true, rng), std::invalid_argument);
}

TEST_CASE("perfect reconstruction gives a zero gradient", "[train]") {
  ExperimentConfig cfg = tiny_config();
  Context c(cfg);
  const auto& f = fixture();
  const Image ref = f.data.real.front().image;
  const CameraPose pose = f.data.real.front().pose;
  const GeneratorOutput out =
      c.model.generate(pose, c.model.encoder().encode(ref), c.ctx.intrinsics, c.ctx.render);
  const ReconTerms terms = c.recon(out.image, ad::Tensor::constant(out.image.value()), 16, 16);
  CHECK(std::abs(terms.total.item()) < 1e-12);
  const NamedTensors params = c.model.generator_parameters();
  std::vector<ad::Tensor> wrt;
  for (const auto& [n, t] : params) wrt.push_back(t);
  const auto grads = ad::grad(terms.total, wrt, {false, true});
  for (std::size_t i = 0; i < grads.size(); ++i) {
    INFO(params[i].first);
    CHECK(grads[i].value().cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("generator loss is finite at initialization", "[train]") {
  const auto& f = fixture();
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    ExperimentConfig cfg = tiny_config();
    cfg.model.seed = seed;
    Context c(cfg);
    Adam opt = generator_adam(c);
    Rng rng(seed);
    const Batch batch = build_batch(seed % 2 ? Branch::Real : Branch::Synthetic, f.data, 2, true, rng);
    const GeneratorStepResult r = generator_step(batch, c.ctx, opt, 1, rng);
    CHECK(std::isfinite(r.record.total));
    CHECK(r.record.total > 0.0);
  }
}

TEST_CASE("one generator step lowers the loss on a frozen sample", "[train]") {
  const auto& f = fixture();
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    ExperimentConfig cfg = tiny_config();
    cfg.model.seed = seed;
    cfg.train.use_discriminator = false;
    Context c(cfg);
    Adam opt = generator_adam(c, 1e-4);
    Rng rng(100 + seed);
    const Batch batch = build_batch(Branch::Synthetic, f.data, 1, false, rng);
    const double before = generator_step(batch, c.ctx, opt, 1, rng).record.total;
    // The second step reports the loss after the first update.
    const double after = generator_step(batch, c.ctx, opt, 2, rng).record.total;
    CHECK(after < before);
  }
}

TEST_CASE("freezing discipline and fake counts", "[train]") {
  const auto& f = fixture();
  ExperimentConfig cfg = tiny_config();
  Context c(cfg);
  Adam g_opt = generator_adam(c);
  Adam d_opt = discriminator_adam(c);
  Rng rng(3);

  const Batch real = build_batch(Branch::Real, f.data, 2, true, rng);
  const auto disc_before = snapshot(c.model.discriminator_parameters());
  const GeneratorStepResult g = generator_step(real, c.ctx, g_opt, 1, rng);
  CHECK(unchanged(c.model.discriminator_parameters(), disc_before));
  // One fake at the target pose plus d_extra_pose_count extra poses per item.
  CHECK(g.fakes.samples.size() == 2 * (1 + 2));

  const auto gen_before = snapshot(c.model.generator_parameters());
  const DiscriminatorStepResult d = discriminator_step(real, g.fakes, c.ctx, d_opt, 1);
  CHECK(unchanged(c.model.generator_parameters(), gen_before));
  CHECK_FALSE(unchanged(c.model.discriminator_parameters(), disc_before));
  CHECK(std::isfinite(d.d_adv));
  CHECK(d.r1 >= 0.0);

  const Batch syn = build_batch(Branch::Synthetic, f.data, 2, true, rng);
  CHECK(generator_step(syn, c.ctx, g_opt, 2, rng).fakes.samples.size() == 2);

  c.ctx.train.d_extra_pose_count = 0;
  const Batch one = build_batch(Branch::Real, f.data, 1, true, rng);
  CHECK(generator_step(one, c.ctx, g_opt, 3, rng).fakes.samples.size() == 1);
}

TEST_CASE("discriminator separates real and fake depths on a frozen generator", "[train]") {
  const auto& f = fixture();
  for (const SignConvention sign : {SignConvention::Inverted, SignConvention::Standard}) {
    ExperimentConfig cfg = tiny_config();
    cfg.loss.sign_convention = sign;
    Context c(cfg);
    Adam d_opt = discriminator_adam(c, 1e-3);
    Rng rng(4);
    const auto gen_before = snapshot(c.model.generator_parameters());
    DiscriminatorStepResult last;
    for (int step = 1; step <= 200; ++step) {
      const Batch batch = build_batch(Branch::Real, f.data, 2, true, rng);
      // Fakes from the frozen generator, rendered without an update.
      FakeDepths fakes;
      {
        ad::NoGradGuard guard;
        for (const auto& item : batch.items) {
          const GeneratorOutput out =
              c.model.generate(item.target_pose, c.model.encoder().encode(item.reference), c.ctx.intrinsics,
                               c.ctx.render);
          fakes.samples.push_back({out.to_depth(16, 16, c.ctx.render.mask_threshold), item.target_pose});
        }
      }
      last = discriminator_step(batch, fakes, c.ctx, d_opt, step);
    }
    CHECK(unchanged(c.model.generator_parameters(), gen_before));
    // The discriminator drives real logits to its "real" side.
    const double gap = sign == SignConvention::Standard ? last.mean_real_logit - last.mean_fake_logit
                                                        : last.mean_fake_logit - last.mean_real_logit;
    CHECK(gap > 0.0);
  }
}

TEST_CASE("non-finite generator loss aborts with the step index", "[train]") {
  const auto& f = fixture();
  ExperimentConfig cfg = tiny_config();
  Context c(cfg);
  Adam opt = generator_adam(c);
  for (auto& [n, t] : c.model.generator_parameters()) {
    if (n == "field.color.bias") {
      ad::Tensor p = t;
      p.mutable_value().setConstant(std::nan(""));
    }
  }
  Rng rng(1);
  const Batch batch = build_batch(Branch::Real, f.data, 1, true, rng);
  CHECK_THROWS_WITH(generator_step(batch, c.ctx, opt, 17, rng), Catch::Matchers::ContainsSubstring("step 17"));
}

TEST_CASE("fit", "[train]") {
  const auto& f = fixture();
  SECTION("zero steps writes the initialization") {
    ExperimentConfig cfg = tiny_config();
    cfg.train.total_steps = 0;
    const auto dir = gnerf::testing::temp_dir("fit_zero");
    FitOptions opt;
    opt.out_dir = dir;
    opt.config_hash = config_hash(cfg);
    const TrainedModel t = train_model(cfg, f.data, opt);
    REQUIRE(t.fit.checkpoints.size() == 1);
    const Checkpoint ck = load_checkpoint(t.fit.checkpoints.front());
    const GNeRFModel fresh(cfg.model);
    const auto params = fresh.all_parameters();
    REQUIRE(ck.tensors.size() == params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      CHECK(ck.tensors[i].first == params[i].first);
      CHECK(ck.tensors[i].second == params[i].second.value());
    }
    CHECK(ck.config_hash == config_hash(cfg));
  }
  SECTION("checkpoints, log and determinism") {
    ExperimentConfig cfg = tiny_config();
    const auto dir = gnerf::testing::temp_dir("fit_run");
    FitOptions opt;
    opt.out_dir = dir;
    int calls = 0;
    opt.on_step = [&](const LossRecord&) { ++calls; };
    const TrainedModel a = train_model(cfg, f.data, opt);
    CHECK(calls == 4);
    CHECK(a.fit.checkpoints.size() == 2);
    CHECK(std::filesystem::exists(dir / "checkpoint_00000002.gnck"));
    CHECK(std::filesystem::exists(dir / "checkpoint_00000004.gnck"));
    std::ifstream log(dir / "losses.csv");
    std::string line;
    int lines = 0;
    while (std::getline(log, line)) ++lines;
    CHECK(lines == 5);

    const TrainedModel b = train_model(cfg, f.data);
    REQUIRE(a.fit.log.size() == b.fit.log.size());
    for (std::size_t i = 0; i < a.fit.log.size(); ++i) {
      CHECK(a.fit.log[i].total == b.fit.log[i].total);
      CHECK(a.fit.log[i].d_adv == b.fit.log[i].d_adv);
    }
  }
  SECTION("no synthetic data trains on the real branch only") {
    ExperimentConfig cfg = tiny_config();
    cfg.train.gamma_threshold = 0.0;
    cfg.train.use_discriminator = false;
    TrainingData real_only;
    real_only.real = f.data.real;
    const TrainedModel t = train_model(cfg, real_only);
    CHECK(t.fit.synthetic_batches == 0);
    CHECK(t.fit.log.size() == 4);
  }
}
