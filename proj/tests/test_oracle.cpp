#include "gnerf/oracle.hpp"

#include "test_support.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>

using namespace gnerf;
using gnerf::testing::make_blob;

namespace {

OracleConfig small_oracle() {
  OracleConfig c;
  c.z_dim = 16;
  c.w_dim = 16;
  c.mapping_hidden = 16;
  c.decoder_hidden = 16;
  return c;
}

bool same_scene(const SceneParams& a, const SceneParams& b) {
  if (a.blobs.size() != b.blobs.size() || a.noise.size() != b.noise.size()) return false;
  for (std::size_t i = 0; i < a.blobs.size(); ++i) {
    const Blob& x = a.blobs[i];
    const Blob& y = b.blobs[i];
    if (x.center != y.center || x.radii != y.radii || x.orientation != y.orientation || x.albedo != y.albedo ||
        x.amplitude != y.amplitude) {
      return false;
    }
  }
  for (std::size_t i = 0; i < a.noise.size(); ++i) {
    if (a.noise[i].frequency != b.noise[i].frequency || a.noise[i].phase != b.noise[i].phase) return false;
  }
  return a.geometry_noise_amplitude == b.geometry_noise_amplitude && a.background == b.background;
}

}  // namespace

TEST_CASE("decode_scene", "[oracle]") {
  OracleGan gan(small_oracle());
  gan.estimate_center(2000, 3);
  const SceneParams canonical = gan.decode_scene(IntermediateLatent{gan.center().values});
  CHECK(canonical.geometry_noise_amplitude == 0.0);
  CHECK(canonical.blobs.size() == 3);
  CHECK_NOTHROW(canonical.validate());

  Rng rng(4);
  const IntermediateLatent w = gan.sample_latent(rng, 1.0);
  CHECK(same_scene(gan.decode_scene(w), gan.decode_scene(w)));
  CHECK(gan.decode_scene(w).geometry_noise_amplitude ==
        Catch::Approx(gan.config().kappa * (w.values - gan.center().values).norm()).epsilon(1e-12));

  double prev = -1.0;
  for (double psi : {0.0, 0.3, 0.7, 1.0}) {
    const double a = gan.decode_scene(truncate(w, gan.center(), {psi})).geometry_noise_amplitude;
    CHECK(a > prev);
    prev = a;
  }
  CHECK_THROWS_AS(gan.decode_scene(IntermediateLatent{Eigen::VectorXd::Zero(3)}), std::invalid_argument);
}

TEST_CASE("oracle field values", "[oracle]") {
  SceneParams s;
  s.blobs.push_back(make_blob({0.0, 0.0, 0.0}, 0.2, {0.9, 0.1, 0.4}, 10.0));
  s.blobs.push_back(make_blob({2.0, 0.0, 0.0}, 0.2, {0.1, 0.9, 0.2}, 10.0));
  const OracleField f(s);
  const Eigen::Vector3d dir(0, 0, -1);

  // Far away: 10 * exp(-0.5 * 6.5^2) < 1e-6.
  CHECK(f.query({0.0, 1.3, 0.0}, dir).second < 1e-6);
  CHECK(f.query({0.0, 0.0, 0.0}, dir).second == Catch::Approx(10.0 + 10.0 * std::exp(-50.0)).epsilon(1e-12));

  // At a blob center the other blob contributes exp(-50) relative weight.
  CHECK((f.query({0.0, 0.0, 0.0}, dir).first - Eigen::Vector3d(0.9, 0.1, 0.4)).cwiseAbs().maxCoeff() < 1e-3);
  CHECK((f.query({2.0, 0.0, 0.0}, dir).first - Eigen::Vector3d(0.1, 0.9, 0.2)).cwiseAbs().maxCoeff() < 1e-3);
  // Midway the blend is even.
  CHECK((f.query({1.0, 0.0, 0.0}, dir).first - Eigen::Vector3d(0.5, 0.5, 0.3)).cwiseAbs().maxCoeff() < 1e-12);

  SceneParams bad = s;
  bad.blobs[0].radii.x() = 0.0;
  CHECK_THROWS(OracleField(bad));
}

TEST_CASE("oracle density is non-negative with surface noise", "[oracle]") {
  OracleGan gan(small_oracle());
  gan.estimate_center(500, 1);
  Rng rng(6);
  for (int s = 0; s < 5; ++s) {
    const OracleField f(gan.decode_scene(gan.sample_latent(rng, 1.0)));
    REQUIRE(f.scene().geometry_noise_amplitude > 0.0);
    const Eigen::MatrixX3d p = Eigen::MatrixX3d::Random(2000, 3) * 1.5;
    const FieldSamples out = f.evaluate(p, Eigen::MatrixX3d::Zero(2000, 3));
    CHECK((out.density.array() >= 0.0).all());
    CHECK((out.color.array() >= 0.0).all());
    CHECK((out.color.array() <= 1.0).all());
  }
}

TEST_CASE("synthesize_triplet", "[oracle]") {
  OracleGan gan(small_oracle());
  gan.estimate_center(500, 1);
  Rng rng(2);
  const IntermediateLatent w = gan.sample_latent(rng, 0.5);
  PoseDistribution d;
  const Intrinsics intr = Intrinsics::centered(8, 8, 13.6);
  RenderConfig rc;
  rc.samples = 32;
  const CameraPose pf = pose_from_angles(0.0, 0.0, d);
  const CameraPose ps = pose_from_angles(0.4, 0.1, d);

  const Triplet same = gan.synthesize_triplet(w, pf, pf, pf, intr, rc);
  CHECK(same.first.pixels == same.second.pixels);
  const RenderedView rf = render(OracleField(gan.decode_scene(w)), pf, intr, rc);
  // Triplet depth is rounded to f32, the on-disk precision.
  CHECK(same.depth.values == rf.depth.cast<float>().cast<double>());
  CHECK(same.depth.mask == rf.depth_map(rc.mask_threshold).mask);

  // The oracle is its own ground truth: re-rendering from P_s reproduces I_s.
  const Triplet t = gan.synthesize_triplet(w, pf, ps, pf, intr, rc);
  CHECK(render(OracleField(gan.decode_scene(t.latent)), ps, intr, rc).image.pixels == t.second.pixels);
  CHECK(t.first.same_shape(t.second));

  rc.jitter = true;
  CHECK_THROWS(gan.synthesize_triplet(w, pf, ps, pf, intr, rc));
}

TEST_CASE("depth of a thin slab-like blob matches the plane intersection", "[oracle]") {
  SceneParams s;
  Blob slab = make_blob({0.0, 0.0, 0.1}, 1.0, {0.5, 0.5, 0.5}, 1e5);
  slab.radii = {5.0, 5.0, 1e-3};
  s.blobs.push_back(slab);
  const OracleField f(s);
  PoseDistribution d;
  const Intrinsics intr = Intrinsics::centered(8, 8, 13.6);
  RenderConfig rc;
  rc.samples = 4096;
  const CameraPose pose = pose_from_angles(0.2, 0.1, d);
  const DepthMap dm = render(f, pose, intr, rc).depth_map(0.5);
  REQUIRE(dm.valid_count() == 64);
  const RayGrid g = generate_rays(pose, intr);
  for (Eigen::Index i = 0; i < g.count(); ++i) {
    const double t = (0.1 - g.origins(i, 2)) / g.directions(i, 2);
    CHECK(std::abs(dm.values[i] - t) < 1e-2);
  }
}

TEST_CASE("generate_triplets is independent of thread count", "[oracle]") {
  OracleGan gan(small_oracle());
  gan.estimate_center(500, 1);
  SynthesisRequest req;
  req.count = 5;
  req.seed = 17;
  req.intrinsics = Intrinsics::centered(8, 8, 13.6);
  req.render.samples = 16;
  req.threads = 1;
  const auto serial = generate_triplets(gan, req);
  req.threads = 3;
  const auto parallel = generate_triplets(gan, req);
  REQUIRE(serial.size() == parallel.size());
  for (std::size_t i = 0; i < serial.size(); ++i) {
    CHECK(serial[i].first.pixels == parallel[i].first.pixels);
    CHECK(serial[i].depth.values == parallel[i].depth.values);
    CHECK(serial[i].pose_second.to_matrix() == parallel[i].pose_second.to_matrix());
  }
  // A chunk starting at index 2 reproduces triplets 2..4.
  req.first_index = 2;
  req.count = 3;
  const auto chunk = generate_triplets(gan, req);
  CHECK(chunk[0].second.pixels == serial[2].second.pixels);

  req.psi = 0.0;
  req.first_index = 0;
  const auto collapsed = generate_triplets(gan, req);
  CHECK(collapsed[0].latent.values == collapsed[1].latent.values);
  req.count = 0;
  CHECK_THROWS(generate_triplets(gan, req));
}

TEST_CASE("single-view pool uses clean untruncated scenes", "[oracle]") {
  OracleGan gan(small_oracle());
  gan.estimate_center(500, 1);
  PoseDistribution d;
  const auto pool = generate_single_view_pool(gan, 3, 9, pose_from_angles(0, 0, d),
                                              Intrinsics::centered(8, 8, 13.6), RenderConfig{});
  REQUIRE(pool.size() == 3);
  for (const auto& s : pool) CHECK(s.scene.geometry_noise_amplitude == 0.0);
  CHECK(pool[0].image.pixels != pool[1].image.pixels);
}
