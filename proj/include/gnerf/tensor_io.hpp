#pragma once

// Binary tensor files and 8-bit PNG images.
//
// TensorFile layout (all little-endian): "GNRF", u32 dtype (1 = f32, 2 = f64),
// u32 rank, rank x u32 dims, row-major payload.

#include "gnerf/image.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace gnerf::io {

enum class DType : std::uint32_t { F32 = 1, F64 = 2 };

/// Malformed or unreadable file; the message names the file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TensorData {
  std::vector<std::uint32_t> dims;
  /// Row-major values, widened to double.
  std::vector<double> values;
  DType dtype = DType::F64;

  std::size_t element_count() const;
};

/// Serializes to an in-memory byte string.
std::string encode_tensor(const TensorData& tensor);
/// `what` names the source in error messages.
TensorData decode_tensor(const std::string& bytes, const std::string& what);

void write_tensor(const std::filesystem::path& path, const TensorData& tensor);
TensorData read_tensor(const std::filesystem::path& path);

/// Matrix <-> rank-2 row-major tensor.
TensorData from_matrix(const Eigen::MatrixXd& m, DType dtype);
Eigen::MatrixXd to_matrix(const TensorData& tensor);

/// Values are clamped to [0, 1] and rounded to 8 bits.
void write_png(const std::filesystem::path& path, const Image& image);
Image read_png(const std::filesystem::path& path);

/// Writes `contents` to a sibling temp file, then renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace gnerf::io
