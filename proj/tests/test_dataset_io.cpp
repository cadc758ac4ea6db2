#include "gnerf/dataset.hpp"

#include "gnerf/experiment.hpp"
#include "test_support.hpp"

#include <catch_amalgamated.hpp>

#include <cstring>
#include <fstream>

using namespace gnerf;
using namespace gnerf::io;
using gnerf::testing::temp_dir;
using gnerf::testing::tiny_config;

namespace {

std::string little_endian_u32(std::uint32_t v) {
  std::string s(4, '\0');
  for (int i = 0; i < 4; ++i) s[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  return s;
}

const OracleGan& oracle() {
  static const OracleGan gan = make_oracle(tiny_config());
  return gan;
}

SynthesisRequest request(std::size_t count, int threads) {
  SynthesisRequest r = synthesis_request(tiny_config());
  r.count = count;
  r.threads = threads;
  return r;
}

std::string bytes_of(const std::filesystem::path& p) { return read_file(p); }

}  // namespace

TEST_CASE("tensor encoding layout", "[io]") {
  TensorData t;
  t.dims = {2, 3};
  t.values = {1, 2, 3, 4, 5, 6};
  t.dtype = DType::F32;
  const std::string bytes = encode_tensor(t);
  // Header: magic, dtype, rank, dims; then the payload.
  REQUIRE(bytes.size() == 4 + 4 + 4 + 2 * 4 + 6 * 4);
  CHECK(bytes.substr(0, 4) == "GNRF");
  CHECK(bytes.substr(4, 4) == little_endian_u32(1));
  CHECK(bytes.substr(8, 4) == little_endian_u32(2));
  CHECK(bytes.substr(12, 4) == little_endian_u32(2));
  CHECK(bytes.substr(16, 4) == little_endian_u32(3));
  float first = 0.0f;
  std::memcpy(&first, bytes.data() + 20, 4);
  CHECK(first == 1.0f);

  const TensorData back = decode_tensor(bytes, "probe");
  CHECK(back.dims == t.dims);
  CHECK(back.values == t.values);
  CHECK(back.dtype == DType::F32);
}

TEST_CASE("tensor round-trips", "[io]") {
  Rng rng(3);
  std::normal_distribution<double> n;
  const Eigen::MatrixXd m = Eigen::MatrixXd::NullaryExpr(5, 7, [&] { return n(rng); });
  CHECK(to_matrix(decode_tensor(encode_tensor(from_matrix(m, DType::F64)), "m")) == m);
  const Eigen::MatrixXd as_float = m.cast<float>().cast<double>();
  CHECK(to_matrix(decode_tensor(encode_tensor(from_matrix(m, DType::F32)), "m")) == as_float);

  TensorData scalar;
  scalar.dims = {};
  scalar.values = {2.5};
  CHECK(decode_tensor(encode_tensor(scalar), "s").values == scalar.values);

  const auto dir = temp_dir("tensor_rt");
  write_tensor(dir / "m.gnrf", from_matrix(m, DType::F64));
  CHECK(to_matrix(read_tensor(dir / "m.gnrf")) == m);
}

TEST_CASE("malformed tensors are rejected", "[io]") {
  TensorData t;
  t.dims = {4};
  t.values = {1, 2, 3, 4};
  const std::string good = encode_tensor(t);

  CHECK_THROWS_AS(decode_tensor(good.substr(0, good.size() - 1), "cut"), FormatError);
  CHECK_THROWS_AS(decode_tensor(good + "x", "long"), FormatError);
  CHECK_THROWS_AS(decode_tensor(good.substr(0, 6), "header"), FormatError);
  std::string bad_magic = good;
  bad_magic[0] = 'X';
  CHECK_THROWS_WITH(decode_tensor(bad_magic, "depth_000001.gnrf"),
                    Catch::Matchers::ContainsSubstring("depth_000001.gnrf"));
  std::string bad_dtype = good;
  bad_dtype[4] = 9;
  CHECK_THROWS_AS(decode_tensor(bad_dtype, "dtype"), FormatError);

  const auto dir = temp_dir("tensor_bad");
  {
    std::ofstream out(dir / "cut.gnrf", std::ios::binary);
    out << good.substr(0, good.size() - 3);
  }
  CHECK_THROWS_WITH(read_tensor(dir / "cut.gnrf"), Catch::Matchers::ContainsSubstring("cut.gnrf"));
  CHECK_THROWS_AS(read_tensor(dir / "missing.gnrf"), FormatError);
  TensorData wrong;
  wrong.dims = {3};
  wrong.values = {1, 2};
  CHECK_THROWS(encode_tensor(wrong));
}

TEST_CASE("png quantization bound", "[io]") {
  Rng rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image img;
  img.width = 9;
  img.height = 5;
  img.pixels = Eigen::MatrixXd::NullaryExpr(3, 45, [&] { return u(rng); });
  const auto dir = temp_dir("png");
  write_png(dir / "a.png", img);
  const Image back = read_png(dir / "a.png");
  REQUIRE(back.same_shape(img));
  CHECK(back.max_abs_diff(img) <= 0.5 / 255.0 + 1e-12);
  // A second round trip is exact.
  write_png(dir / "b.png", back);
  CHECK(read_png(dir / "b.png").pixels == back.pixels);
  CHECK_THROWS(read_png(dir / "none.png"));
}

TEST_CASE("triplet round trip", "[io]") {
  const auto triplets = generate_triplets(oracle(), request(2, 1));
  const auto dir = temp_dir("triplet");
  const TripletRecord rec = save_triplet(dir, 1, triplets[1]);
  CHECK(rec.image_first == "img_f_000001.png");
  CHECK(rec.image_second == "img_s_000001.png");
  CHECK(rec.depth == "depth_000001.gnrf");
  CHECK(rec.mask == "mask_000001.gnrf");
  const Triplet back = load_triplet(dir, rec);
  const Triplet& t = triplets[1];
  CHECK(back.first.max_abs_diff(t.first) <= 1.0 / 255.0);
  CHECK(back.second.max_abs_diff(t.second) <= 1.0 / 255.0);
  // Depth is stored as f32; synthesized depth is already f32-representable.
  CHECK(t.depth.values == t.depth.values.cast<float>().cast<double>());
  CHECK(back.depth.values == t.depth.values);
  CHECK(back.depth.mask == t.depth.mask);
  CHECK(back.pose_second.to_matrix() == t.pose_second.to_matrix());
  CHECK(back.latent.values == t.latent.values);

  std::filesystem::resize_file(dir / rec.depth, std::filesystem::file_size(dir / rec.depth) - 2);
  CHECK_THROWS_WITH(load_triplet(dir, rec), Catch::Matchers::ContainsSubstring("depth_000001.gnrf"));
}

TEST_CASE("manifest", "[io]") {
  const auto dir = temp_dir("manifest");
  const DatasetManifest m = synthesize_dataset(dir, oracle(), request(3, 1));
  CHECK(m.count == 3);
  CHECK(m.records.size() == 3);
  const DatasetManifest back = read_manifest(dir);
  CHECK(manifest_to_json(back) == manifest_to_json(m));
  const Eigen::VectorXd& center = oracle().center().values;
  CHECK(back.center == std::vector<double>(center.data(), center.data() + center.size()));
  CHECK_FALSE(std::filesystem::exists(dir / "manifest.json.tmp"));

  // Relocatable: a copied directory loads the same data.
  const auto moved = temp_dir("manifest_moved");
  std::filesystem::remove_all(moved);
  std::filesystem::copy(dir, moved, std::filesystem::copy_options::recursive);
  const auto a = load_dataset(dir);
  const auto b = load_dataset(moved);
  REQUIRE(a.size() == 3);
  CHECK(a[2].second.pixels == b[2].second.pixels);

  const std::string text = manifest_to_json(m);
  CHECK_THROWS(manifest_from_json("{", "broken"));
  std::string wrong_version = text;
  wrong_version.replace(wrong_version.find(kManifestVersion), std::strlen(kManifestVersion), "gnerf-dataset-9");
  CHECK_THROWS(manifest_from_json(wrong_version, "v"));

  DatasetManifest short_count = m;
  short_count.count = 4;
  CHECK_THROWS(manifest_from_json(manifest_to_json(short_count), "count"));

  std::filesystem::remove(dir / m.records[0].image_second);
  CHECK_THROWS(read_manifest(dir));
}

TEST_CASE("serial and parallel synthesis are byte-identical", "[io]") {
  const auto serial = temp_dir("synth_serial");
  const auto parallel = temp_dir("synth_parallel");
  const DatasetManifest a = synthesize_dataset(serial, oracle(), request(5, 1));
  synthesize_dataset(parallel, oracle(), request(5, 3));
  CHECK(bytes_of(serial / "manifest.json") == bytes_of(parallel / "manifest.json"));
  for (const auto& r : a.records) {
    for (const auto& f : {r.image_first, r.image_second, r.depth, r.mask}) {
      INFO(f);
      CHECK(bytes_of(serial / f) == bytes_of(parallel / f));
    }
  }

  const auto single = temp_dir("synth_one");
  const DatasetManifest one = synthesize_dataset(single, oracle(), request(1, 2));
  CHECK(one.count == 1);
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(single)) ++files;
  CHECK(files == 5);
}

TEST_CASE("checkpoints", "[io]") {
  const ExperimentConfig cfg = tiny_config();
  const GNeRFModel model(cfg.model);
  const auto dir = temp_dir("checkpoint");
  const auto path = dir / "a.gnck";
  save_checkpoint(path, model.all_parameters(), 42);
  const Checkpoint ck = load_checkpoint(path);
  CHECK(ck.config_hash == 42);
  REQUIRE(ck.tensors.size() == model.all_parameters().size());

  // Restoring into a differently seeded model gives identical forward outputs.
  ModelConfig other_cfg = cfg.model;
  other_cfg.seed = 99;
  GNeRFModel other(other_cfg);
  const RestoreResult ok = restore_parameters(ck, other.all_parameters(), 42);
  CHECK_FALSE(ok.hash_mismatch);
  const OracleGan& gan = oracle();
  const auto pool = generate_triplets(gan, request(1, 1));
  const Intrinsics intr = cfg.intrinsics();
  const auto a = model.generate(pool[0].pose_second, model.encoder().encode(pool[0].first), intr, cfg.render);
  const auto b = other.generate(pool[0].pose_second, other.encoder().encode(pool[0].first), intr, cfg.render);
  CHECK(a.image.value() == b.image.value());
  CHECK(a.depth.value() == b.depth.value());

  const RestoreResult warn = restore_parameters(ck, other.all_parameters(), 43);
  CHECK(warn.hash_mismatch);
  CHECK_FALSE(warn.warning.empty());

  Checkpoint renamed = ck;
  renamed.tensors[0].first = "encoder.renamed";
  CHECK_THROWS_WITH(restore_parameters(renamed, other.all_parameters(), 42),
                    Catch::Matchers::ContainsSubstring(ck.tensors[0].first));

  save_checkpoint(dir / "empty.gnck", {}, 7);
  const Checkpoint empty = load_checkpoint(dir / "empty.gnck");
  CHECK(empty.tensors.empty());
  CHECK(empty.config_hash == 7);

  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 5);
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);
}
