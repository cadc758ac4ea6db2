#include "gnerf/dataset.hpp"

#include <json.hpp>

#include <cstdio>
#include <cstring>
#include <set>
#include <sstream>
#include <stdexcept>

namespace gnerf {

using nlohmann::json;

namespace {

std::string indexed(const char* pattern, std::size_t index) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), pattern, index);
  return buf;
}

json pose_json(const std::array<double, 16>& p) { return json(std::vector<double>(p.begin(), p.end())); }

std::array<double, 16> pose_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 16) throw std::runtime_error("pose must have 16 entries");
  std::array<double, 16> out{};
  std::copy(v.begin(), v.end(), out.begin());
  return out;
}

std::vector<double> to_vector(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd from_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

io::TensorData map_tensor(const Eigen::VectorXd& values, int width, int height) {
  io::TensorData t;
  t.dtype = io::DType::F32;
  t.dims = {static_cast<std::uint32_t>(height), static_cast<std::uint32_t>(width)};
  t.values = to_vector(values);
  return t;
}

Eigen::VectorXd map_values(const io::TensorData& t, const std::filesystem::path& path, int width, int height) {
  if (t.dims.size() != 2 || t.dims[0] != static_cast<std::uint32_t>(height) ||
      t.dims[1] != static_cast<std::uint32_t>(width)) {
    throw io::FormatError(path.string() + ": map dimensions do not match the images");
  }
  return from_vector(t.values);
}

}  // namespace

TripletRecord save_triplet(const std::filesystem::path& dir, std::size_t index, const Triplet& t) {
  TripletRecord r;
  r.image_first = indexed("img_f_%06zu.png", index);
  r.image_second = indexed("img_s_%06zu.png", index);
  r.depth = indexed("depth_%06zu.gnrf", index);
  r.mask = indexed("mask_%06zu.gnrf", index);
  try {
    io::write_png(dir / r.image_first, t.first);
    io::write_png(dir / r.image_second, t.second);
    io::write_tensor(dir / r.depth, map_tensor(t.depth.values, t.depth.width, t.depth.height));
    io::write_tensor(dir / r.mask, map_tensor(t.depth.mask, t.depth.width, t.depth.height));
  } catch (const std::exception& e) {
    throw std::runtime_error("triplet " + std::to_string(index) + ": " + e.what());
  }
  r.pose_first = t.pose_first.to_row_major();
  r.pose_second = t.pose_second.to_row_major();
  r.pose_depth = t.pose_depth.to_row_major();
  r.latent = to_vector(t.latent.values);
  return r;
}

Triplet load_triplet(const std::filesystem::path& dir, const TripletRecord& r) {
  Triplet t;
  t.first = io::read_png(dir / r.image_first);
  t.second = io::read_png(dir / r.image_second);
  if (!t.first.same_shape(t.second)) {
    throw io::FormatError((dir / r.image_second).string() + ": size differs from " + r.image_first);
  }
  t.depth.width = t.first.width;
  t.depth.height = t.first.height;
  t.depth.values = map_values(io::read_tensor(dir / r.depth), dir / r.depth, t.first.width, t.first.height);
  t.depth.mask = map_values(io::read_tensor(dir / r.mask), dir / r.mask, t.first.width, t.first.height);
  t.pose_first = CameraPose::from_row_major(r.pose_first);
  t.pose_second = CameraPose::from_row_major(r.pose_second);
  t.pose_depth = CameraPose::from_row_major(r.pose_depth);
  t.latent.values = from_vector(r.latent);
  return t;
}

std::string manifest_to_json(const DatasetManifest& m) {
  json j;
  j["version"] = m.version;
  j["count"] = m.count;
  j["psi"] = m.psi;
  j["seed"] = m.seed;
  j["poses"] = {{"yaw", {m.poses.yaw.lo, m.poses.yaw.hi}},
                {"pitch", {m.poses.pitch.lo, m.poses.pitch.hi}},
                {"radius", m.poses.radius},
                {"look_at", {m.poses.look_at.x(), m.poses.look_at.y(), m.poses.look_at.z()}}};
  j["render"] = {{"near", m.render.near},
                 {"far", m.render.far},
                 {"samples", m.render.samples},
                 {"jitter", m.render.jitter},
                 {"background", {m.render.background.x(), m.render.background.y(), m.render.background.z()}},
                 {"mask_threshold", m.render.mask_threshold}};
  j["intrinsics"] = {{"focal_px", m.intrinsics.focal_px},
                     {"principal_point", {m.intrinsics.principal_point.x(), m.intrinsics.principal_point.y()}},
                     {"width", m.intrinsics.width},
                     {"height", m.intrinsics.height}};
  j["center"] = m.center;
  j["center_samples"] = m.center_samples;
  json records = json::array();
  for (const auto& r : m.records) {
    records.push_back({{"image_first", r.image_first},
                       {"image_second", r.image_second},
                       {"depth", r.depth},
                       {"mask", r.mask},
                       {"pose_first", pose_json(r.pose_first)},
                       {"pose_second", pose_json(r.pose_second)},
                       {"pose_depth", pose_json(r.pose_depth)},
                       {"latent", r.latent}});
  }
  j["records"] = std::move(records);
  return j.dump(1) + "\n";
}

DatasetManifest manifest_from_json(const std::string& text, const std::string& what) {
  DatasetManifest m;
  try {
    const json j = json::parse(text);
    m.version = j.at("version").get<std::string>();
    if (m.version != kManifestVersion) {
      throw io::FormatError(what + ": unrecognized manifest version '" + m.version + "'");
    }
    m.count = j.at("count").get<std::size_t>();
    m.psi = j.at("psi").get<double>();
    m.seed = j.at("seed").get<std::uint64_t>();
    const json& p = j.at("poses");
    m.poses.yaw = {p.at("yaw").at(0).get<double>(), p.at("yaw").at(1).get<double>()};
    m.poses.pitch = {p.at("pitch").at(0).get<double>(), p.at("pitch").at(1).get<double>()};
    m.poses.radius = p.at("radius").get<double>();
    const auto look = p.at("look_at").get<std::vector<double>>();
    m.poses.look_at = Eigen::Vector3d(look.at(0), look.at(1), look.at(2));
    const json& r = j.at("render");
    m.render.near = r.at("near").get<double>();
    m.render.far = r.at("far").get<double>();
    m.render.samples = r.at("samples").get<int>();
    m.render.jitter = r.at("jitter").get<bool>();
    const auto bg = r.at("background").get<std::vector<double>>();
    m.render.background = Eigen::Vector3d(bg.at(0), bg.at(1), bg.at(2));
    m.render.mask_threshold = r.at("mask_threshold").get<double>();
    const json& in = j.at("intrinsics");
    m.intrinsics.focal_px = in.at("focal_px").get<double>();
    m.intrinsics.principal_point =
        Eigen::Vector2d(in.at("principal_point").at(0).get<double>(), in.at("principal_point").at(1).get<double>());
    m.intrinsics.width = in.at("width").get<int>();
    m.intrinsics.height = in.at("height").get<int>();
    m.center = j.at("center").get<std::vector<double>>();
    m.center_samples = j.at("center_samples").get<std::size_t>();
    for (const json& rec : j.at("records")) {
      TripletRecord t;
      t.image_first = rec.at("image_first").get<std::string>();
      t.image_second = rec.at("image_second").get<std::string>();
      t.depth = rec.at("depth").get<std::string>();
      t.mask = rec.at("mask").get<std::string>();
      t.pose_first = pose_from_json(rec.at("pose_first"));
      t.pose_second = pose_from_json(rec.at("pose_second"));
      t.pose_depth = pose_from_json(rec.at("pose_depth"));
      t.latent = rec.at("latent").get<std::vector<double>>();
      m.records.push_back(std::move(t));
    }
  } catch (const io::FormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw io::FormatError(what + ": " + e.what());
  }
  if (m.records.size() != m.count) {
    throw io::FormatError(what + ": count " + std::to_string(m.count) + " does not match " +
                          std::to_string(m.records.size()) + " records");
  }
  return m;
}

void write_manifest(const std::filesystem::path& dir, const DatasetManifest& manifest) {
  io::write_file_atomic(dir / "manifest.json", manifest_to_json(manifest));
}

DatasetManifest read_manifest(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  DatasetManifest m = manifest_from_json(io::read_file(path), path.string());
  for (const auto& r : m.records) {
    for (const auto& f : {r.image_first, r.image_second, r.depth, r.mask}) {
      if (!std::filesystem::exists(dir / f)) {
        throw io::FormatError(path.string() + ": referenced file " + f + " is missing");
      }
    }
  }
  return m;
}

DatasetManifest synthesize_dataset(const std::filesystem::path& dir, const OracleGan& gan,
                                   const SynthesisRequest& request) {
  if (request.count < 1) {
    throw std::invalid_argument("synthesize_dataset: count must be >= 1");
  }
  std::filesystem::create_directories(dir);
  DatasetManifest m;
  m.count = request.count;
  m.psi = request.psi;
  m.seed = request.seed;
  m.poses = request.poses;
  m.render = request.render;
  m.intrinsics = request.intrinsics;
  m.center = to_vector(gan.center().values);
  m.center_samples = gan.center().n_samples;
  // Chunked so memory stays bounded for large datasets.
  constexpr std::size_t kChunk = 64;
  for (std::size_t first = 0; first < request.count; first += kChunk) {
    SynthesisRequest chunk = request;
    chunk.first_index = request.first_index + first;
    chunk.count = std::min(kChunk, request.count - first);
    const std::vector<Triplet> triplets = generate_triplets(gan, chunk);
    for (std::size_t i = 0; i < triplets.size(); ++i) {
      m.records.push_back(save_triplet(dir, first + i, triplets[i]));
    }
  }
  write_manifest(dir, m);
  return m;
}

std::vector<Triplet> load_dataset(const std::filesystem::path& dir, DatasetManifest* manifest) {
  DatasetManifest m = read_manifest(dir);
  std::vector<Triplet> out;
  out.reserve(m.records.size());
  for (const auto& r : m.records) out.push_back(load_triplet(dir, r));
  if (manifest) *manifest = std::move(m);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

constexpr char kCheckpointMagic[4] = {'G', 'N', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T take(const std::string& in, std::size_t& pos, const std::string& what) {
  if (pos + sizeof(T) > in.size()) throw io::FormatError(what + ": truncated checkpoint");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const NamedTensors& params, std::uint64_t config_hash) {
  std::string out(kCheckpointMagic, 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, config_hash);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, tensor] : params) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    const std::string block = io::encode_tensor(io::from_matrix(tensor.value(), io::DType::F64));
    put<std::uint64_t>(out, block.size());
    out += block;
  }
  io::write_file_atomic(path, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string what = path.string();
  const std::string bytes = io::read_file(path);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw io::FormatError(what + ": bad magic, not a checkpoint");
  }
  std::size_t pos = 4;
  const auto version = take<std::uint32_t>(bytes, pos, what);
  if (version != kCheckpointVersion) {
    throw io::FormatError(what + ": unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint c;
  c.config_hash = take<std::uint64_t>(bytes, pos, what);
  const auto count = take<std::uint32_t>(bytes, pos, what);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = take<std::uint32_t>(bytes, pos, what);
    if (pos + len > bytes.size()) throw io::FormatError(what + ": truncated tensor name");
    std::string name = bytes.substr(pos, len);
    pos += len;
    const auto block_len = take<std::uint64_t>(bytes, pos, what);
    if (pos + block_len > bytes.size()) throw io::FormatError(what + ": truncated tensor '" + name + "'");
    const io::TensorData t = io::decode_tensor(bytes.substr(pos, block_len), what + ":" + name);
    pos += block_len;
    c.tensors.emplace_back(std::move(name), io::to_matrix(t));
  }
  if (pos != bytes.size()) {
    throw io::FormatError(what + ": trailing bytes after the last tensor");
  }
  return c;
}

RestoreResult restore_parameters(const Checkpoint& checkpoint, const NamedTensors& params,
                                 std::uint64_t expected_hash) {
  std::vector<std::string> problems;
  std::vector<const Eigen::MatrixXd*> sources;
  for (const auto& [name, tensor] : params) {
    const Eigen::MatrixXd* found = nullptr;
    for (const auto& [stored_name, value] : checkpoint.tensors) {
      if (stored_name == name) {
        found = &value;
        break;
      }
    }
    if (!found) {
      problems.push_back(name + " (missing)");
    } else if (found->rows() != tensor.rows() || found->cols() != tensor.cols()) {
      problems.push_back(name + " (shape mismatch)");
    }
    sources.push_back(found);
  }
  if (!problems.empty()) {
    std::string msg = "checkpoint does not provide:";
    for (const auto& p : problems) msg += " " + p;
    throw std::runtime_error(msg);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    ad::Tensor t = params[i].second;
    t.mutable_value() = *sources[i];
  }
  RestoreResult r;
  if (checkpoint.config_hash != expected_hash) {
    r.hash_mismatch = true;
    r.warning = "checkpoint config hash differs from the current configuration";
  }
  return r;
}

}  // namespace gnerf
