#include "gnerf/config.hpp"

#include "gnerf/tensor_io.hpp"

#include <charconv>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace gnerf {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: '" + key + "' expects a number, got '" + s + "'");
  }
}

template <typename Int>
Int parse_int(const std::string& key, const std::string& s) {
  Int v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError("config: '" + key + "' expects an integer, got '" + s + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError("config: '" + key + "' expects true or false, got '" + s + "'");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct Entry {
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

using Table = std::vector<std::pair<std::string, Entry>>;

template <typename T, typename Access>
void bind_scalar(Table& t, const std::string& key, Access access) {
  Entry e;
  e.get = [access](const ExperimentConfig& c) -> std::string {
    const T& v = access(const_cast<ExperimentConfig&>(c));
    if constexpr (std::is_same_v<T, double>) {
      return fmt_double(v);
    } else if constexpr (std::is_same_v<T, bool>) {
      return v ? "true" : "false";
    } else if constexpr (std::is_same_v<T, std::string>) {
      return v;
    } else {
      return std::to_string(v);
    }
  };
  e.set = [access, key](ExperimentConfig& c, const std::string& s) {
    T& v = access(c);
    if constexpr (std::is_same_v<T, double>) {
      v = parse_double(key, s);
    } else if constexpr (std::is_same_v<T, bool>) {
      v = parse_bool(key, s);
    } else if constexpr (std::is_same_v<T, std::string>) {
      v = s;
    } else {
      v = parse_int<T>(key, s);
    }
  };
  t.emplace_back(key, std::move(e));
}

template <typename T, typename Access>
void bind_list(Table& t, const std::string& key, Access access) {
  Entry e;
  e.get = [access](const ExperimentConfig& c) {
    const std::vector<T>& v = access(const_cast<ExperimentConfig&>(c));
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) out += ",";
      if constexpr (std::is_same_v<T, double>) {
        out += fmt_double(v[i]);
      } else {
        out += std::to_string(v[i]);
      }
    }
    return out;
  };
  e.set = [access, key](ExperimentConfig& c, const std::string& s) {
    std::vector<T>& v = access(c);
    v.clear();
    for (const auto& item : split_list(s)) {
      if constexpr (std::is_same_v<T, double>) {
        v.push_back(parse_double(key, item));
      } else {
        v.push_back(parse_int<T>(key, item));
      }
    }
  };
  t.emplace_back(key, std::move(e));
}

void bind_vec3(Table& t, const std::string& key, Eigen::Vector3d& (*access)(ExperimentConfig&)) {
  Entry e;
  e.get = [access](const ExperimentConfig& c) {
    const Eigen::Vector3d& v = access(const_cast<ExperimentConfig&>(c));
    return fmt_double(v.x()) + "," + fmt_double(v.y()) + "," + fmt_double(v.z());
  };
  e.set = [access, key](ExperimentConfig& c, const std::string& s) {
    const auto items = split_list(s);
    if (items.size() != 3) throw ConfigError("config: '" + key + "' expects three comma-separated numbers");
    access(c) = Eigen::Vector3d(parse_double(key, items[0]), parse_double(key, items[1]), parse_double(key, items[2]));
  };
  t.emplace_back(key, std::move(e));
}

#define GN_BIND(T, key, member) bind_scalar<T>(t, key, [](ExperimentConfig& c) -> T& { return c.member; })
#define GN_LIST(T, key, member) bind_list<T>(t, key, [](ExperimentConfig& c) -> std::vector<T>& { return c.member; })

const Table& table() {
  static const Table t = [] {
    Table t;
    GN_BIND(int, "oracle.z_dim", oracle.z_dim);
    GN_BIND(int, "oracle.w_dim", oracle.w_dim);
    GN_BIND(int, "oracle.mapping_hidden", oracle.mapping_hidden);
    GN_BIND(int, "oracle.decoder_hidden", oracle.decoder_hidden);
    GN_BIND(int, "oracle.blob_count", oracle.blob_count);
    GN_BIND(int, "oracle.noise_waves", oracle.noise_waves);
    GN_BIND(double, "oracle.noise_frequency", oracle.noise_frequency);
    GN_BIND(double, "oracle.kappa", oracle.kappa);
    GN_BIND(std::uint64_t, "oracle.seed", oracle.seed);

    GN_BIND(double, "camera.yaw_min", poses.yaw.lo);
    GN_BIND(double, "camera.yaw_max", poses.yaw.hi);
    GN_BIND(double, "camera.pitch_min", poses.pitch.lo);
    GN_BIND(double, "camera.pitch_max", poses.pitch.hi);
    GN_BIND(double, "camera.radius", poses.radius);
    bind_vec3(t, "camera.look_at", [](ExperimentConfig& c) -> Eigen::Vector3d& { return c.poses.look_at; });
    GN_BIND(double, "camera.focal_ratio", data.focal_ratio);

    GN_BIND(double, "render.near", render.near);
    GN_BIND(double, "render.far", render.far);
    GN_BIND(int, "render.samples", render.samples);
    GN_BIND(bool, "render.jitter", render.jitter);
    bind_vec3(t, "render.background", [](ExperimentConfig& c) -> Eigen::Vector3d& { return c.render.background; });
    GN_BIND(double, "render.mask_threshold", render.mask_threshold);

    GN_BIND(double, "data.psi", data.psi);
    GN_BIND(std::size_t, "data.dataset_size", data.dataset_size);
    GN_BIND(std::uint64_t, "data.seed", data.data_seed);
    GN_BIND(std::size_t, "data.real_pool_size", data.real_pool_size);
    GN_BIND(std::uint64_t, "data.real_seed", data.real_seed);
    GN_BIND(std::size_t, "data.center_samples", data.center_samples);
    GN_BIND(std::uint64_t, "data.center_seed", data.center_seed);
    GN_BIND(std::string, "data.synthetic_dir", data.synthetic_dir);
    GN_BIND(int, "data.threads", data.threads);

    GN_BIND(int, "model.resolution", model.resolution);
    GN_BIND(int, "model.embedding_dim", model.embedding_dim);
    GN_BIND(int, "model.encoder_channels", model.encoder_channels);
    GN_BIND(int, "model.field_width", model.field_width);
    GN_BIND(int, "model.field_layers", model.field_layers);
    GN_BIND(int, "model.pe_frequencies", model.pe_frequencies);
    GN_BIND(std::string, "model.conditioning", model.conditioning);
    GN_BIND(double, "model.density_scale", model.density_scale);
    GN_BIND(int, "model.disc_channels", model.disc_channels);
    GN_BIND(int, "model.disc_hidden", model.disc_hidden);
    GN_BIND(std::uint64_t, "model.seed", model.seed);

    GN_BIND(double, "loss.lambda_g", loss.lambda_g);
    GN_BIND(double, "loss.lambda_r1", loss.lambda_r1);
    GN_BIND(int, "loss.ssim_window", loss.ssim_window);
    GN_BIND(double, "loss.ssim_sigma", loss.ssim_sigma);
    GN_LIST(int, "loss.perceptual_scales", loss.perceptual_scales);
    GN_BIND(std::uint64_t, "loss.perceptual_seed", loss.perceptual_seed);
    GN_BIND(double, "loss.weight_l1", loss.weight_l1);
    GN_BIND(double, "loss.weight_ssim", loss.weight_ssim);
    GN_BIND(double, "loss.weight_perceptual", loss.weight_perceptual);
    {
      Entry e;
      e.get = [](const ExperimentConfig& c) { return to_string(c.loss.sign_convention); };
      e.set = [](ExperimentConfig& c, const std::string& s) {
        try {
          c.loss.sign_convention = parse_sign_convention(s);
        } catch (const std::invalid_argument& ex) {
          throw ConfigError(std::string("config: ") + ex.what());
        }
      };
      t.emplace_back("loss.sign_convention", std::move(e));
    }
    {
      Entry e;
      e.get = [](const ExperimentConfig& c) { return to_string(c.loss.r1_on); };
      e.set = [](ExperimentConfig& c, const std::string& s) {
        try {
          c.loss.r1_on = parse_r1_target(s);
        } catch (const std::invalid_argument& ex) {
          throw ConfigError(std::string("config: ") + ex.what());
        }
      };
      t.emplace_back("loss.r1_on", std::move(e));
    }

    GN_BIND(int, "train.batch_size", train.batch_size);
    GN_BIND(std::int64_t, "train.total_steps", train.total_steps);
    GN_BIND(double, "train.lr_generator", train.lr_generator);
    GN_BIND(double, "train.lr_discriminator", train.lr_discriminator);
    GN_BIND(double, "train.beta1_generator", train.beta1_generator);
    GN_BIND(double, "train.beta2_generator", train.beta2_generator);
    GN_BIND(double, "train.beta1_discriminator", train.beta1_discriminator);
    GN_BIND(double, "train.beta2_discriminator", train.beta2_discriminator);
    GN_BIND(std::uint64_t, "train.seed", train.seed);
    GN_BIND(double, "train.gamma_threshold", train.gamma_threshold);
    GN_BIND(int, "train.d_extra_pose_count", train.d_extra_pose_count);
    GN_BIND(bool, "train.g_adv_extra_poses", train.g_adv_extra_poses);
    GN_BIND(bool, "train.use_discriminator", train.use_discriminator);
    GN_BIND(std::int64_t, "train.checkpoint_interval", train.checkpoint_interval);
    GN_BIND(std::int64_t, "train.log_interval", train.log_interval);

    GN_BIND(double, "eval.side_yaw", eval.side_yaw);
    GN_BIND(std::size_t, "eval.test_pool_size", eval.test_pool_size);
    GN_BIND(std::uint64_t, "eval.test_seed", eval.test_seed);
    GN_BIND(int, "eval.test_random_poses", eval.test_random_poses);
    GN_BIND(bool, "eval.align_median", eval.align_median);
    GN_LIST(double, "eval.sweep_psi", eval.sweep_psi);
    GN_BIND(std::size_t, "eval.sweep_scenes", eval.sweep_scenes);
    GN_BIND(int, "eval.sweep_resolution", eval.sweep_resolution);
    GN_BIND(int, "eval.sweep_samples", eval.sweep_samples);
    GN_LIST(std::uint64_t, "eval.ablation_seeds", eval.ablation_seeds);
    GN_BIND(std::uint64_t, "eval.probe_seed", eval.probe_seed);
    return t;
  }();
  return t;
}

#undef GN_BIND
#undef GN_LIST

const Entry& lookup(const std::string& key) {
  for (const auto& [k, e] : table()) {
    if (k == key) return e;
  }
  throw ConfigError("config: unknown key '" + key + "'");
}

std::pair<std::string, std::string> split_assignment(const std::string& line, const std::string& where) {
  const auto eq = line.find('=');
  if (eq == std::string::npos) {
    throw ConfigError(where + ": expected 'key = value', got '" + line + "'");
  }
  std::string key = trim(line.substr(0, eq));
  std::string value = trim(line.substr(eq + 1));
  if (key.empty()) throw ConfigError(where + ": empty key");
  return {key, value};
}

}  // namespace

Intrinsics ExperimentConfig::intrinsics() const {
  return Intrinsics::centered(model.resolution, model.resolution, data.focal_ratio * model.resolution);
}

void ExperimentConfig::validate() const {
  try {
    poses.validate();
    render.validate();
    model.validate();
    loss.validate();
    train.validate();
    TruncationConfig{data.psi}.validate();
    intrinsics().validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (oracle.z_dim < 1 || oracle.w_dim < 1 || oracle.blob_count < 1 || oracle.noise_waves < 0 || oracle.kappa < 0.0) {
    throw ConfigError("config: invalid oracle settings");
  }
  if (data.dataset_size < 1 || data.center_samples < 1 || data.threads < 1 || !(data.focal_ratio > 0.0)) {
    throw ConfigError("config: dataset_size, center_samples and threads must be >= 1, focal_ratio > 0");
  }
  if (!(eval.side_yaw > 0.0) || eval.test_pool_size < 1 || eval.test_random_poses < 0 || eval.sweep_scenes < 2 ||
      eval.sweep_resolution < 1 || eval.sweep_samples < 1) {
    throw ConfigError("config: invalid evaluation settings");
  }
  for (double p : eval.sweep_psi) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("config: sweep psi values must lie in [0, 1]");
  }
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, e] : table()) keys.push_back(k);
  return keys;
}

void set_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  lookup(key).set(cfg, value);
}

std::string get_value(const ExperimentConfig& cfg, const std::string& key) { return lookup(key).get(cfg); }

ExperimentConfig parse_config(const std::string& text, ExperimentConfig base, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::set<std::string> seen;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(lineno);
    auto [key, value] = split_assignment(line, where);
    if (!seen.insert(key).second) throw ConfigError(where + ": key '" + key + "' given twice");
    try {
      set_value(base, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
  return base;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return parse_config(text, ExperimentConfig{}, path.string());
}

void apply_overrides(ExperimentConfig& cfg, const std::vector<std::string>& overrides) {
  std::map<std::string, std::string> given;
  for (const auto& o : overrides) {
    auto [key, value] = split_assignment(o, "override");
    auto [it, inserted] = given.emplace(key, value);
    if (!inserted && it->second != value) {
      throw ConfigError("override: conflicting values for '" + key + "': '" + it->second + "' and '" + value + "'");
    }
  }
  for (const auto& o : overrides) {
    auto [key, value] = split_assignment(o, "override");
    set_value(cfg, key, value);
  }
}

std::string to_text(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& [k, e] : table()) out += k + " = " + e.get(cfg) + "\n";
  return out;
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : to_text(cfg)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hash_hex(std::uint64_t hash) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

}  // namespace gnerf
