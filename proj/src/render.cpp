#include "gnerf/render.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>

namespace gnerf {

namespace {

// Composites one ray. `rgb` points at the first sample's red channel and
// advances by `rgb_stride` per sample, the three channels sitting `channel_stride` apart.
// out = [r, g, b, depth, weight_sum].
void composite_ray(const double* sigma, std::ptrdiff_t sigma_stride, const double* rgb,
                   std::ptrdiff_t rgb_stride, std::ptrdiff_t channel_stride, const double* t,
                   const double* delta, std::ptrdiff_t td_stride, int n, double* out,
                   double* weights) {
  double transmittance = 1.0;
  double r = 0.0, g = 0.0, b = 0.0, depth = 0.0, acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const double s = sigma[i * sigma_stride];
    const double tau = std::exp(-s * delta[i * td_stride]);
    const double w = transmittance * (1.0 - tau);
    const double* c = rgb + i * rgb_stride;
    r += w * c[0];
    g += w * c[channel_stride];
    b += w * c[2 * channel_stride];
    depth += w * t[i * td_stride];
    acc += w;
    if (weights != nullptr) weights[i] = w;
    transmittance *= tau;
  }
  out[0] = r;
  out[1] = g;
  out[2] = b;
  out[3] = depth;
  out[4] = acc;
}

void check_densities(const Eigen::VectorXd& densities) {
  for (Eigen::Index i = 0; i < densities.size(); ++i) {
    if (!(densities[i] >= 0.0)) {
      throw std::invalid_argument("composite: density at sample " + std::to_string(i) +
                                  " is negative or NaN");
    }
  }
}

// Batched forward for all rays: densities (P), colors (P x 3), rays x 5 out.
Eigen::MatrixXd composite_all(const Eigen::VectorXd& density, const Eigen::MatrixXd& color,
                              const SampledRays& rays) {
  Eigen::MatrixXd out(rays.rays, 5);
  double buf[5];
  const std::ptrdiff_t points = color.rows();
  for (int r = 0; r < rays.rays; ++r) {
    const std::ptrdiff_t first = static_cast<std::ptrdiff_t>(r) * rays.samples;
    composite_ray(density.data() + first, 1, color.data() + first, 1, points,
                  rays.t.data() + r, rays.delta.data() + r, rays.rays, rays.samples, buf, nullptr);
    for (int k = 0; k < 5; ++k) out(r, k) = buf[k];
  }
  return out;
}

}  // namespace

void RenderConfig::validate() const {
  if (!(far > near) || !(near >= 0.0)) {
    throw std::invalid_argument("render config: need far > near >= 0");
  }
  if (samples < 1) {
    throw std::invalid_argument("render config: samples must be >= 1");
  }
  if (!(mask_threshold >= 0.0 && mask_threshold <= 1.0)) {
    throw std::invalid_argument("render config: mask_threshold must lie in [0, 1]");
  }
}

RaySamples stratified_samples(double near, double far, int n, Rng* rng, bool jitter) {
  if (!(far > near) || !(near >= 0.0)) {
    throw std::invalid_argument("stratified_samples: need far > near >= 0");
  }
  if (n < 1) {
    throw std::invalid_argument("stratified_samples: need at least one sample");
  }
  if (jitter && rng == nullptr) {
    throw std::invalid_argument("stratified_samples: jitter requires a random source");
  }
  const double width = (far - near) / n;
  RaySamples s;
  s.jittered = jitter;
  s.t.resize(n);
  s.delta.resize(n);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    const double offset = jitter ? unit(*rng) : 0.5;
    s.t[i] = near + (i + offset) * width;
  }
  for (int i = 0; i + 1 < n; ++i) {
    s.delta[i] = s.t[i + 1] - s.t[i];
  }
  s.delta[n - 1] = std::min(far - s.t[n - 1], width);
  // A jittered draw can land on a bin edge; keep every interval open.
  for (int i = 0; i < n; ++i) {
    s.delta[i] = std::max(s.delta[i], 1e-12 * width);
  }
  return s;
}

RenderOutput composite(const Eigen::MatrixX3d& colors, const Eigen::VectorXd& densities,
                       const RaySamples& samples) {
  const Eigen::Index n = samples.t.size();
  if (colors.rows() != n || densities.size() != n || samples.delta.size() != n) {
    throw std::invalid_argument("composite: colors, densities and samples differ in length");
  }
  check_densities(densities);
  RenderOutput out;
  out.weights.resize(n);
  double buf[5];
  composite_ray(densities.data(), 1, colors.data(), 1, colors.rows(), samples.t.data(),
                samples.delta.data(), 1, static_cast<int>(n), buf, out.weights.data());
  out.color = Eigen::Vector3d(buf[0], buf[1], buf[2]);
  out.depth = buf[3];
  out.weight_sum = buf[4];
  return out;
}

std::pair<Eigen::Vector3d, double> RadianceField::query(const Eigen::Vector3d& position,
                                                        const Eigen::Vector3d& direction) const {
  Eigen::MatrixX3d p(1, 3);
  Eigen::MatrixX3d d(1, 3);
  p.row(0) = position.transpose();
  d.row(0) = direction.transpose();
  const FieldSamples s = evaluate(p, d);
  return {s.color.row(0).transpose(), s.density[0]};
}

SampledRays sample_rays(const RayGrid& grid, const RenderConfig& cfg, Rng* rng) {
  cfg.validate();
  SampledRays out;
  out.rays = static_cast<int>(grid.count());
  out.samples = cfg.samples;
  out.t.resize(out.rays, out.samples);
  out.delta.resize(out.rays, out.samples);
  const Eigen::Index points = static_cast<Eigen::Index>(out.rays) * out.samples;
  out.positions.resize(points, 3);
  out.directions.resize(points, 3);
  RaySamples shared;
  if (!cfg.jitter) {
    shared = stratified_samples(cfg.near, cfg.far, cfg.samples, nullptr, false);
  }
  for (int r = 0; r < out.rays; ++r) {
    const RaySamples s = cfg.jitter ? stratified_samples(cfg.near, cfg.far, cfg.samples, rng, true) : shared;
    out.t.row(r) = s.t.transpose();
    out.delta.row(r) = s.delta.transpose();
    const Eigen::RowVector3d o = grid.origins.row(r);
    const Eigen::RowVector3d d = grid.directions.row(r);
    for (int i = 0; i < out.samples; ++i) {
      const Eigen::Index p = static_cast<Eigen::Index>(r) * out.samples + i;
      out.positions.row(p) = o + s.t[i] * d;
      out.directions.row(p) = d;
    }
  }
  return out;
}

DepthMap RenderedView::depth_map(double mask_threshold) const {
  DepthMap d;
  d.width = image.width;
  d.height = image.height;
  d.values = depth;
  d.mask = (weight.array() >= mask_threshold).cast<double>().matrix();
  return d;
}

RenderedView render(const RadianceField& field, const CameraPose& pose, const Intrinsics& intr,
                    const RenderConfig& cfg, Rng* rng) {
  const RayGrid grid = generate_rays(pose, intr);
  const SampledRays rays = sample_rays(grid, cfg, rng);
  const FieldSamples f = field.evaluate(rays.positions, rays.directions);
  check_densities(f.density);
  const Eigen::MatrixXd out = composite_all(f.density, f.color, rays);

  RenderedView view;
  view.image.width = intr.width;
  view.image.height = intr.height;
  view.image.pixels.resize(3, rays.rays);
  for (int r = 0; r < rays.rays; ++r) {
    const double residual = 1.0 - out(r, 4);
    for (int c = 0; c < 3; ++c) {
      view.image.pixels(c, r) = out(r, c) + residual * cfg.background[c];
    }
  }
  view.depth = out.col(3);
  view.weight = out.col(4);
  return view;
}

ad::Tensor composite_op(const ad::Tensor& density, const ad::Tensor& color, const SampledRays& rays) {
  const Eigen::Index points = static_cast<Eigen::Index>(rays.rays) * rays.samples;
  if (density.rows() != points || density.cols() != 1 || color.rows() != points || color.cols() != 3) {
    throw std::invalid_argument("composite_op: field output does not match the sampled rays");
  }
  const Eigen::VectorXd sigma = density.value().col(0);
  check_densities(sigma);
  Eigen::MatrixXd out = composite_all(sigma, color.value(), rays);

  struct RayLayout {
    int rays;
    int samples;
    Eigen::MatrixXd t;
    Eigen::MatrixXd delta;
  };
  auto layout = std::make_shared<const RayLayout>(RayLayout{rays.rays, rays.samples, rays.t, rays.delta});

  return ad::make_op(
      std::move(out), {density, color},
      [color, layout, sigma](const ad::Tensor& g) -> std::vector<ad::Tensor> {
        const RayLayout& rays = *layout;
        const Eigen::MatrixXd& go = g.value();
        const Eigen::MatrixXd& rgb = color.value();
        const int n = rays.samples;
        Eigen::MatrixXd g_sigma = Eigen::MatrixXd::Zero(sigma.size(), 1);
        Eigen::MatrixXd g_color = Eigen::MatrixXd::Zero(sigma.size(), 3);
        std::vector<double> weights(static_cast<std::size_t>(n));
        std::vector<double> trans_after(static_cast<std::size_t>(n));
        std::vector<double> value(static_cast<std::size_t>(n));
        for (int r = 0; r < rays.rays; ++r) {
          const Eigen::Index first = static_cast<Eigen::Index>(r) * n;
          double transmittance = 1.0;
          for (int i = 0; i < n; ++i) {
            const Eigen::Index p = first + i;
            const double tau = std::exp(-sigma[p] * rays.delta(r, i));
            const double w = transmittance * (1.0 - tau);
            transmittance *= tau;
            weights[static_cast<std::size_t>(i)] = w;
            trans_after[static_cast<std::size_t>(i)] = transmittance;
            // Channel-weighted value this sample contributes per unit weight.
            value[static_cast<std::size_t>(i)] = go(r, 0) * rgb(p, 0) + go(r, 1) * rgb(p, 1) +
                                                 go(r, 2) * rgb(p, 2) + go(r, 3) * rays.t(r, i) + go(r, 4);
            g_color(p, 0) = w * go(r, 0);
            g_color(p, 1) = w * go(r, 1);
            g_color(p, 2) = w * go(r, 2);
          }
          // d/dsigma_i = delta_i * (T_{i+1} v_i - sum_{k>i} w_k v_k)
          double suffix = 0.0;
          for (int i = n - 1; i >= 0; --i) {
            const auto k = static_cast<std::size_t>(i);
            g_sigma(first + i, 0) = rays.delta(r, i) * (trans_after[k] * value[k] - suffix);
            suffix += weights[k] * value[k];
          }
        }
        return {ad::Tensor::constant(std::move(g_sigma)), ad::Tensor::constant(std::move(g_color))};
      },
      "composite", /*once_differentiable=*/true);
}

DifferentiableView render_differentiable(const DifferentiableField& field, const CameraPose& pose,
                                         const Intrinsics& intr, const RenderConfig& cfg, Rng* rng) {
  const RayGrid grid = generate_rays(pose, intr);
  const SampledRays rays = sample_rays(grid, cfg, rng);
  auto [density, color] = field(rays.positions, rays.directions);
  const ad::Tensor out = composite_op(density, color, rays);

  DifferentiableView view;
  view.width = intr.width;
  view.height = intr.height;
  const ad::Tensor rgb = ad::slice_cols(out, 0, 3);
  const ad::Tensor depth = ad::slice_cols(out, 3, 1);
  const ad::Tensor weight = ad::slice_cols(out, 4, 1);
  Eigen::MatrixXd bg(1, 3);
  bg << cfg.background.x(), cfg.background.y(), cfg.background.z();
  const ad::Tensor residual = ad::add_scalar(-weight, 1.0);
  const ad::Tensor blended = rgb + ad::matmul(residual, ad::Tensor::constant(bg));
  view.image = ad::transpose(blended);
  view.depth = ad::transpose(depth);
  view.weight = ad::transpose(weight);
  return view;
}

}  // namespace gnerf
