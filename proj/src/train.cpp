#include "gnerf/train.hpp"

#include "gnerf/dataset.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

namespace gnerf {

Adam::Adam(NamedTensors params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  if (!(cfg_.lr > 0.0)) throw std::invalid_argument("adam: learning rate must be positive");
  if (!(cfg_.beta1 >= 0.0 && cfg_.beta1 < 1.0 && cfg_.beta2 >= 0.0 && cfg_.beta2 < 1.0)) {
    throw std::invalid_argument("adam: betas must lie in [0, 1)");
  }
  for (const auto& [name, p] : params_) {
    m_.push_back(Eigen::MatrixXd::Zero(p.rows(), p.cols()));
    v_.push_back(Eigen::MatrixXd::Zero(p.rows(), p.cols()));
  }
}

void Adam::step(const std::vector<ad::Tensor>& grads) {
  if (grads.size() != params_.size()) {
    throw std::invalid_argument("adam: gradient count does not match parameters");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Eigen::MatrixXd& g = grads[i].value();
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g.cwiseAbs2();
    ad::Tensor p = params_[i].second;
    p.mutable_value().array() -=
        cfg_.lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + cfg_.eps);
  }
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (total_steps < 0) throw std::invalid_argument("train: total_steps must be >= 0");
  if (!(lr_generator > 0.0) || !(lr_discriminator > 0.0)) {
    throw std::invalid_argument("train: learning rates must be positive");
  }
  if (!(gamma_threshold >= 0.0 && gamma_threshold <= 1.0)) {
    throw std::invalid_argument("train: gamma_threshold must lie in [0, 1]");
  }
  if (d_extra_pose_count < 0) throw std::invalid_argument("train: d_extra_pose_count must be >= 0");
  if (checkpoint_interval < 1 || log_interval < 1) {
    throw std::invalid_argument("train: checkpoint_interval and log_interval must be >= 1");
  }
}

Branch select_branch(double gamma, double threshold) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw std::invalid_argument("select_branch: gamma must lie in [0, 1]");
  }
  return gamma <= threshold ? Branch::Synthetic : Branch::Real;
}

Batch build_batch(Branch branch, const TrainingData& data, int batch_size, bool need_depths, Rng& rng) {
  if (branch == Branch::Synthetic && data.synthetic.empty()) {
    throw std::invalid_argument("build_batch: synthetic dataset is empty");
  }
  if (branch == Branch::Real && data.real.empty()) {
    throw std::invalid_argument("build_batch: real dataset is empty");
  }
  if (need_depths && data.synthetic.empty()) {
    throw std::invalid_argument("build_batch: discriminator needs synthetic depths but the dataset is empty");
  }
  auto pick = [&rng](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
  Batch b;
  b.branch = branch;
  for (int i = 0; i < batch_size; ++i) {
    BatchItem item;
    if (branch == Branch::Synthetic) {
      const Triplet& t = data.synthetic[pick(data.synthetic.size())];
      item.reference = t.first;
      item.reference_pose = t.pose_first;
      item.target = t.second;
      item.target_pose = t.pose_second;
      if (need_depths) b.real_depths.push_back({t.depth, t.pose_depth});
    } else {
      const RealImage& r = data.real[pick(data.real.size())];
      item.reference = r.image;
      item.reference_pose = r.pose;
      item.target = r.image;
      item.target_pose = r.pose;
      if (need_depths) {
        const Triplet& t = data.synthetic[pick(data.synthetic.size())];
        b.real_depths.push_back({t.depth, t.pose_depth});
      }
    }
    b.items.push_back(std::move(item));
  }
  return b;
}

namespace {

std::vector<ad::Tensor> tensors_of(const NamedTensors& named) {
  std::vector<ad::Tensor> out;
  out.reserve(named.size());
  for (const auto& [name, t] : named) out.push_back(t);
  return out;
}

Eigen::RowVectorXd mask_of(const ad::Tensor& weight, double threshold) {
  return (weight.value().row(0).array() >= threshold).cast<double>().matrix();
}

void require_finite(double v, std::int64_t step, const char* what) {
  if (!std::isfinite(v)) {
    throw std::runtime_error(std::string(what) + " loss is not finite at step " + std::to_string(step));
  }
}

}  // namespace

GeneratorStepResult generator_step(const Batch& batch, TrainContext& ctx, Adam& optimizer, std::int64_t step,
                                   Rng& rng) {
  const GNeRFModel& model = *ctx.model;
  const int w = ctx.intrinsics.width;
  const int h = ctx.intrinsics.height;
  const bool use_d = ctx.train.use_discriminator;
  const double thr = ctx.render.mask_threshold;
  Rng* jitter_rng = ctx.render.jitter ? &rng : nullptr;

  GeneratorStepResult result;
  ad::Tensor total;
  double l1 = 0.0, ssim_l = 0.0, perc = 0.0, g_adv = 0.0;
  for (const BatchItem& item : batch.items) {
    const SceneEmbedding emb = model.encoder().encode(item.reference);
    const GeneratorOutput out = model.generate(item.target_pose, emb, ctx.intrinsics, ctx.render, jitter_rng);
    const ReconTerms terms = (*ctx.recon)(out.image, image_tensor(item.target), w, h);
    ad::Tensor item_loss = terms.total;
    l1 += terms.l1.item();
    ssim_l += terms.ssim_loss.item();
    perc += terms.perceptual.item();

    if (use_d) {
      std::vector<ad::Tensor> logits;
      const Eigen::RowVectorXd mask = mask_of(out.weight, thr);
      result.fakes.samples.push_back({DepthMap{w, h, out.depth.value().row(0).transpose(), mask.transpose()},
                                      item.target_pose});
      logits.push_back(model.discriminator().discriminate(out.depth, mask, item.target_pose));
      if (batch.branch == Branch::Real) {
        for (int k = 0; k < ctx.train.d_extra_pose_count; ++k) {
          const CameraPose pose = sample_pose(ctx.poses, rng);
          if (ctx.train.g_adv_extra_poses) {
            const GeneratorOutput extra = model.generate(pose, emb, ctx.intrinsics, ctx.render, jitter_rng);
            const Eigen::RowVectorXd m = mask_of(extra.weight, thr);
            result.fakes.samples.push_back(
                {DepthMap{w, h, extra.depth.value().row(0).transpose(), m.transpose()}, pose});
            logits.push_back(model.discriminator().discriminate(extra.depth, m, pose));
          } else {
            ad::NoGradGuard guard;
            const GeneratorOutput extra = model.generate(pose, emb, ctx.intrinsics, ctx.render, jitter_rng);
            const Eigen::RowVectorXd m = mask_of(extra.weight, thr);
            result.fakes.samples.push_back(
                {DepthMap{w, h, extra.depth.value().row(0).transpose(), m.transpose()}, pose});
          }
        }
      }
      ad::Tensor adv = g_adversarial_loss(logits[0], ctx.loss);
      for (std::size_t i = 1; i < logits.size(); ++i) adv = adv + g_adversarial_loss(logits[i], ctx.loss);
      adv = adv * (1.0 / static_cast<double>(logits.size()));
      g_adv += adv.item();
      item_loss = total_loss(item_loss, adv, ctx.loss);
    }
    total = total.defined() ? total + item_loss : item_loss;
  }
  const double inv_b = 1.0 / static_cast<double>(batch.items.size());
  total = total * inv_b;
  require_finite(total.item(), step, "generator");

  const auto grads = ad::grad(total, tensors_of(optimizer.parameters()));
  optimizer.step(grads);

  LossRecord& r = result.record;
  r.step = step;
  r.l1 = l1 * inv_b;
  r.ssim_loss = ssim_l * inv_b;
  r.perceptual = perc * inv_b;
  r.g_adv = g_adv * inv_b;
  r.total = total.item();
  return result;
}

DiscriminatorStepResult discriminator_step(const Batch& batch, const FakeDepths& fakes, TrainContext& ctx,
                                           Adam& optimizer, std::int64_t step) {
  const Discriminator& disc = ctx.model->discriminator();
  const bool r1_on_fake = ctx.loss.r1_on == R1Target::Fake;
  const bool want_r1 = ctx.loss.lambda_r1 > 0.0;

  auto score = [&](const PosedDepth& s, bool penalize, std::vector<ad::Tensor>& logits,
                   std::vector<ad::Tensor>& penalties) {
    const Eigen::RowVectorXd mask = s.depth.mask.transpose();
    const ad::Tensor input = penalize ? ad::Tensor::parameter(s.depth.values.transpose())
                                      : ad::Tensor::constant(s.depth.values.transpose());
    const ad::Tensor logit = disc.discriminate(input, mask, s.pose);
    logits.push_back(logit);
    if (penalize) penalties.push_back(r1_penalty(logit, input));
  };

  std::vector<ad::Tensor> real_logits, fake_logits, penalties;
  for (const auto& s : batch.real_depths) score(s, want_r1 && !r1_on_fake, real_logits, penalties);
  for (const auto& s : fakes.samples) score(s, want_r1 && r1_on_fake, fake_logits, penalties);

  ad::Tensor r1 = ad::Tensor::scalar(0.0);
  if (!penalties.empty()) {
    r1 = penalties[0];
    for (std::size_t i = 1; i < penalties.size(); ++i) r1 = r1 + penalties[i];
    r1 = r1 * (1.0 / static_cast<double>(penalties.size()));
  }
  const ad::Tensor loss = d_adversarial_batch(real_logits, fake_logits, r1, ctx.loss);
  require_finite(loss.item(), step, "discriminator");
  optimizer.step(ad::grad(loss, tensors_of(optimizer.parameters())));

  DiscriminatorStepResult out;
  out.d_adv = loss.item();
  out.r1 = r1.item();
  for (const auto& l : real_logits) out.mean_real_logit += l.item() / static_cast<double>(real_logits.size());
  for (const auto& l : fake_logits) out.mean_fake_logit += l.item() / static_cast<double>(fake_logits.size());
  return out;
}

FitResult fit(TrainContext& ctx, const TrainingData& data, const FitOptions& options) {
  ctx.train.validate();
  ctx.loss.validate();
  ctx.render.validate();
  if (!ctx.model || !ctx.recon) throw std::invalid_argument("fit: context lacks a model or loss");
  const TrainConfig& tc = ctx.train;

  Adam g_opt(ctx.model->generator_parameters(),
             AdamConfig{tc.lr_generator, tc.beta1_generator, tc.beta2_generator, 1e-8});
  Adam d_opt(ctx.model->discriminator_parameters(),
             AdamConfig{tc.lr_discriminator, tc.beta1_discriminator, tc.beta2_discriminator, 1e-8});
  Rng rng(derive_seed(tc.seed, 0x7452));
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  FitResult result;
  std::ofstream log;
  if (options.out_dir) {
    std::filesystem::create_directories(*options.out_dir);
    log.open(*options.out_dir / "losses.csv");
    if (!log) throw std::runtime_error("fit: cannot open the loss log");
    write_loss_header(log);
  }
  auto checkpoint = [&](std::int64_t step) {
    if (!options.out_dir) return;
    char name[64];
    std::snprintf(name, sizeof(name), "checkpoint_%08lld.gnck", static_cast<long long>(step));
    const auto path = *options.out_dir / name;
    save_checkpoint(path, ctx.model->all_parameters(), options.config_hash);
    result.checkpoints.push_back(path);
  };

  if (tc.total_steps == 0) checkpoint(0);
  for (std::int64_t step = 1; step <= tc.total_steps; ++step) {
    Branch branch = select_branch(unit(rng), tc.gamma_threshold);
    // gamma == 0 exactly is possible with threshold 0.
    if (data.synthetic.empty()) branch = Branch::Real;
    if (branch == Branch::Synthetic) ++result.synthetic_batches;
    const Batch batch = build_batch(branch, data, tc.batch_size, tc.use_discriminator, rng);
    GeneratorStepResult g = generator_step(batch, ctx, g_opt, step, rng);
    if (tc.use_discriminator) {
      const DiscriminatorStepResult d = discriminator_step(batch, g.fakes, ctx, d_opt, step);
      g.record.d_adv = d.d_adv;
      g.record.r1 = d.r1;
    }
    result.log.push_back(g.record);
    if (log && step % tc.log_interval == 0) write_loss_row(log, g.record);
    if (options.on_step) options.on_step(g.record);
    if (step % tc.checkpoint_interval == 0 || step == tc.total_steps) checkpoint(step);
  }
  return result;
}

}  // namespace gnerf
