#include "gnerf/losses.hpp"

#include <cmath>
#include <iomanip>
#include <random>
#include <stdexcept>

namespace gnerf {

namespace {

void require_same(const ad::Tensor& a, const ad::Tensor& b, const char* who) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(who) + ": shape mismatch");
  }
}

std::vector<double> gaussian_kernel(int window, double sigma) {
  std::vector<double> k(static_cast<std::size_t>(window));
  const int half = window / 2;
  double total = 0.0;
  for (int i = 0; i < window; ++i) {
    const double x = i - half;
    k[static_cast<std::size_t>(i)] = std::exp(-0.5 * x * x / (sigma * sigma));
    total += k[static_cast<std::size_t>(i)];
  }
  for (double& v : k) v /= total;
  return k;
}

}  // namespace

void LossConfig::validate() const {
  if (!(lambda_g >= 0.0) || !(lambda_r1 >= 0.0)) {
    throw std::invalid_argument("loss config: lambda_g and lambda_r1 must be non-negative");
  }
  if (ssim_window < 3 || ssim_window % 2 == 0) {
    throw std::invalid_argument("loss config: ssim_window must be odd and >= 3");
  }
  if (!(ssim_sigma > 0.0)) {
    throw std::invalid_argument("loss config: ssim_sigma must be positive");
  }
  if (perceptual_scales.empty()) {
    throw std::invalid_argument("loss config: perceptual_scales must not be empty");
  }
  for (int s : perceptual_scales) {
    if (s < 1) throw std::invalid_argument("loss config: perceptual channel counts must be positive");
  }
  if (!(weight_l1 >= 0.0 && weight_ssim >= 0.0 && weight_perceptual >= 0.0)) {
    throw std::invalid_argument("loss config: term weights must be non-negative");
  }
}

ad::Tensor l1_loss(const ad::Tensor& a, const ad::Tensor& b) {
  require_same(a, b, "l1_loss");
  return ad::mean(ad::abs(a - b));
}

ad::Tensor ssim(const ad::Tensor& a, const ad::Tensor& b, int width, int height, int window, double sigma) {
  require_same(a, b, "ssim");
  if (a.cols() != static_cast<Eigen::Index>(width) * height) {
    throw std::invalid_argument("ssim: tensor does not match the image size");
  }
  if (window < 3 || window % 2 == 0) {
    throw std::invalid_argument("ssim: window must be odd and >= 3");
  }
  if (width < window || height < window) {
    throw std::invalid_argument("ssim: image smaller than the window");
  }
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  const std::vector<double> k = gaussian_kernel(window, sigma);
  auto filt = [&](const ad::Tensor& x) { return ad::symmetric_filter(x, height, width, k); };
  const ad::Tensor mu_a = filt(a);
  const ad::Tensor mu_b = filt(b);
  const ad::Tensor mu_aa = ad::square(mu_a);
  const ad::Tensor mu_bb = ad::square(mu_b);
  const ad::Tensor mu_ab = mu_a * mu_b;
  const ad::Tensor var_a = filt(ad::square(a)) - mu_aa;
  const ad::Tensor var_b = filt(ad::square(b)) - mu_bb;
  const ad::Tensor cov = filt(a * b) - mu_ab;
  const ad::Tensor num = ad::add_scalar(2.0 * mu_ab, c1) * ad::add_scalar(2.0 * cov, c2);
  const ad::Tensor den = ad::add_scalar(mu_aa + mu_bb, c1) * ad::add_scalar(var_a + var_b, c2);
  const ad::Tensor map = num * ad::reciprocal(den);

  // Average over positions where the window lies fully inside the image.
  const int half = window / 2;
  Eigen::MatrixXd valid = Eigen::MatrixXd::Zero(a.rows(), a.cols());
  for (int y = half; y < height - half; ++y) {
    for (int x = half; x < width - half; ++x) valid.col(static_cast<Eigen::Index>(y) * width + x).setOnes();
  }
  const double count = valid.sum();
  return ad::sum(map * ad::Tensor::constant(valid)) * (1.0 / count);
}

PerceptualFeatures::PerceptualFeatures(const std::vector<int>& scales, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  int in = 3;
  for (std::size_t s = 0; s < scales.size(); ++s) {
    Stage st;
    st.in = in;
    st.out = scales[s];
    st.stride = s == 0 ? 1 : 2;
    const int fan_in = in * 9;
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / fan_in));
    st.weight.resize(st.out, fan_in);
    for (Eigen::Index i = 0; i < st.weight.size(); ++i) st.weight.data()[i] = normal(rng);
    st.bias.resize(st.out, 1);
    for (Eigen::Index i = 0; i < st.bias.size(); ++i) st.bias.data()[i] = 0.1 * normal(rng);
    stages_.push_back(std::move(st));
    in = scales[s];
  }
}

std::vector<ad::Tensor> PerceptualFeatures::features(const ad::Tensor& image, int width, int height) const {
  if (image.rows() != 3 || image.cols() != static_cast<Eigen::Index>(width) * height) {
    throw std::invalid_argument("perceptual: expected a 3 x HW image");
  }
  std::vector<ad::Tensor> out;
  ad::Tensor x = image;
  int w = width;
  int h = height;
  for (const Stage& st : stages_) {
    const ad::ConvGeometry geo{st.in, h, w, 3, st.stride, 1};
    x = ad::leaky_softplus(
        ad::add_col(ad::matmul(ad::Tensor::constant(st.weight), ad::im2col(x, geo)), ad::Tensor::constant(st.bias)),
        0.2);
    w = geo.out_width();
    h = geo.out_height();
    out.push_back(x);
  }
  return out;
}

ad::Tensor PerceptualFeatures::distance(const ad::Tensor& a, const ad::Tensor& b, int width, int height) const {
  require_same(a, b, "perceptual_loss");
  const auto fa = features(a, width, height);
  const auto fb = features(b, width, height);
  ad::Tensor total = ad::mean(ad::square(fa[0] - fb[0]));
  for (std::size_t s = 1; s < fa.size(); ++s) total = total + ad::mean(ad::square(fa[s] - fb[s]));
  return total;
}

ReconstructionLoss::ReconstructionLoss(const LossConfig& cfg)
    : cfg_(cfg), perceptual_(cfg.perceptual_scales, cfg.perceptual_seed) {
  cfg_.validate();
}

ReconTerms ReconstructionLoss::operator()(const ad::Tensor& fake, const ad::Tensor& ref, int width,
                                          int height) const {
  ReconTerms t;
  t.l1 = l1_loss(fake, ref);
  t.ssim_loss = ad::add_scalar(-ssim(fake, ref, width, height, cfg_.ssim_window, cfg_.ssim_sigma), 1.0);
  t.perceptual = perceptual_.distance(fake, ref, width, height);
  t.total = cfg_.weight_l1 * t.l1 + cfg_.weight_ssim * t.ssim_loss + cfg_.weight_perceptual * t.perceptual;
  return t;
}

ad::Tensor recon_loss(const ad::Tensor& fake, const ad::Tensor& ref, int width, int height, const LossConfig& cfg) {
  return ReconstructionLoss(cfg)(fake, ref, width, height).total;
}

ad::Tensor d_adversarial_loss(const ad::Tensor& real_logit, const ad::Tensor& fake_logit,
                              const ad::Tensor& r1_grad_sq_norm, const LossConfig& cfg) {
  const bool inverted = cfg.sign_convention == SignConvention::Inverted;
  const ad::Tensor real_term = ad::softplus(inverted ? real_logit : -real_logit);
  const ad::Tensor fake_term = ad::softplus(inverted ? -fake_logit : fake_logit);
  return real_term + fake_term + cfg.lambda_r1 * r1_grad_sq_norm;
}

ad::Tensor d_adversarial_batch(const std::vector<ad::Tensor>& real, const std::vector<ad::Tensor>& fake,
                               const ad::Tensor& r1_mean, const LossConfig& cfg) {
  if (real.empty() || fake.empty()) {
    throw std::invalid_argument("d_adversarial_batch: need at least one real and one fake logit");
  }
  const double sign = cfg.sign_convention == SignConvention::Inverted ? 1.0 : -1.0;
  ad::Tensor real_term = ad::softplus(sign * real[0]);
  for (std::size_t i = 1; i < real.size(); ++i) real_term = real_term + ad::softplus(sign * real[i]);
  ad::Tensor fake_term = ad::softplus(-sign * fake[0]);
  for (std::size_t i = 1; i < fake.size(); ++i) fake_term = fake_term + ad::softplus(-sign * fake[i]);
  return real_term * (1.0 / static_cast<double>(real.size())) +
         fake_term * (1.0 / static_cast<double>(fake.size())) + cfg.lambda_r1 * r1_mean;
}

ad::Tensor g_adversarial_loss(const ad::Tensor& fake_logit, const LossConfig& cfg) {
  return ad::softplus(cfg.sign_convention == SignConvention::Inverted ? fake_logit : -fake_logit);
}

ad::Tensor r1_penalty(const ad::Tensor& logit, const ad::Tensor& input) {
  const auto g = ad::grad(logit, {input}, ad::GradOptions{true, true});
  return ad::sum(ad::square(g[0]));
}

double total_loss(double recon, double gan, const LossConfig& cfg) { return recon + cfg.lambda_g * gan; }

ad::Tensor total_loss(const ad::Tensor& recon, const ad::Tensor& gan, const LossConfig& cfg) {
  return recon + cfg.lambda_g * gan;
}

void write_loss_header(std::ostream& os) { os << "step,l1,ssim_loss,perceptual,g_adv,d_adv,r1,total\n"; }

void write_loss_row(std::ostream& os, const LossRecord& r) {
  const auto flags = os.flags();
  const auto prec = os.precision();
  os << std::setprecision(17) << r.step << ',' << r.l1 << ',' << r.ssim_loss << ',' << r.perceptual << ','
     << r.g_adv << ',' << r.d_adv << ',' << r.r1 << ',' << r.total << '\n';
  os.flags(flags);
  os.precision(prec);
}

std::string to_string(SignConvention c) { return c == SignConvention::Inverted ? "inverted" : "standard"; }
std::string to_string(R1Target t) { return t == R1Target::Fake ? "fake" : "real"; }

SignConvention parse_sign_convention(const std::string& s) {
  if (s == "inverted") return SignConvention::Inverted;
  if (s == "standard") return SignConvention::Standard;
  throw std::invalid_argument("sign_convention must be 'inverted' or 'standard', got '" + s + "'");
}

R1Target parse_r1_target(const std::string& s) {
  if (s == "fake") return R1Target::Fake;
  if (s == "real") return R1Target::Real;
  throw std::invalid_argument("r1_on must be 'fake' or 'real', got '" + s + "'");
}

}  // namespace gnerf
