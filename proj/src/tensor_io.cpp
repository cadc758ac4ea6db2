#include "gnerf/tensor_io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

namespace gnerf::io {

static_assert(std::endian::native == std::endian::little, "tensor files assume a little-endian host");

namespace {

constexpr char kMagic[4] = {'G', 'N', 'R', 'F'};

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T take(const std::string& in, std::size_t& pos, const std::string& what) {
  if (pos + sizeof(T) > in.size()) {
    throw FormatError(what + ": truncated header");
  }
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

std::size_t dtype_size(DType d) { return d == DType::F32 ? 4 : 8; }

}  // namespace

std::size_t TensorData::element_count() const {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

std::string encode_tensor(const TensorData& tensor) {
  if (tensor.values.size() != tensor.element_count()) {
    throw std::invalid_argument("encode_tensor: value count does not match dims");
  }
  std::string out(kMagic, 4);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.dtype));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.dims.size()));
  for (auto d : tensor.dims) put<std::uint32_t>(out, d);
  out.reserve(out.size() + tensor.values.size() * dtype_size(tensor.dtype));
  for (double v : tensor.values) {
    if (tensor.dtype == DType::F32) {
      put<float>(out, static_cast<float>(v));
    } else {
      put<double>(out, v);
    }
  }
  return out;
}

TensorData decode_tensor(const std::string& bytes, const std::string& what) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError(what + ": bad magic, not a tensor file");
  }
  std::size_t pos = 4;
  TensorData t;
  const auto code = take<std::uint32_t>(bytes, pos, what);
  if (code != 1 && code != 2) {
    throw FormatError(what + ": unknown dtype code " + std::to_string(code));
  }
  t.dtype = static_cast<DType>(code);
  const auto rank = take<std::uint32_t>(bytes, pos, what);
  if (rank > 16) {
    throw FormatError(what + ": implausible rank " + std::to_string(rank));
  }
  for (std::uint32_t i = 0; i < rank; ++i) t.dims.push_back(take<std::uint32_t>(bytes, pos, what));
  const std::size_t count = t.element_count();
  const std::size_t need = count * dtype_size(t.dtype);
  if (bytes.size() - pos != need) {
    throw FormatError(what + ": payload is " + std::to_string(bytes.size() - pos) + " bytes, expected " +
                      std::to_string(need));
  }
  t.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    t.values[i] = t.dtype == DType::F32 ? static_cast<double>(take<float>(bytes, pos, what))
                                        : take<double>(bytes, pos, what);
  }
  return t;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw FormatError(path.string() + ": cannot open for reading");
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw std::runtime_error(tmp.string() + ": cannot open for writing");
    }
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) {
      throw std::runtime_error(tmp.string() + ": write failed");
    }
  }
  std::filesystem::rename(tmp, path);
}

void write_tensor(const std::filesystem::path& path, const TensorData& tensor) {
  const std::string bytes = encode_tensor(tensor);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw std::runtime_error(path.string() + ": cannot open for writing");
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw std::runtime_error(path.string() + ": write failed");
  }
}

TensorData read_tensor(const std::filesystem::path& path) { return decode_tensor(read_file(path), path.string()); }

TensorData from_matrix(const Eigen::MatrixXd& m, DType dtype) {
  TensorData t;
  t.dtype = dtype;
  t.dims = {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())};
  t.values.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) t.values.push_back(m(r, c));
  }
  return t;
}

Eigen::MatrixXd to_matrix(const TensorData& t) {
  if (t.dims.size() != 2) {
    throw FormatError("tensor of rank " + std::to_string(t.dims.size()) + " where a matrix was expected");
  }
  Eigen::MatrixXd m(t.dims[0], t.dims[1]);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = t.values[k++];
  }
  return m;
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};

}  // namespace

void write_png(const std::filesystem::path& path, const Image& image) {
  if (image.width < 1 || image.height < 1 || image.pixels.rows() != 3 ||
      image.pixels.cols() != image.pixel_count()) {
    throw std::invalid_argument("write_png: malformed image");
  }
  std::unique_ptr<std::FILE, FileCloser> file(std::fopen(path.string().c_str(), "wb"));
  if (!file) {
    throw std::runtime_error(path.string() + ": cannot open for writing");
  }
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("write_png: libpng initialization failed");
  }
  std::vector<png_byte> row(static_cast<std::size_t>(image.width) * 3);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error(path.string() + ": PNG encoding failed");
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const Eigen::Index col = static_cast<Eigen::Index>(y) * image.width + x;
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(image.pixels(c, col), 0.0, 1.0);
        row[static_cast<std::size_t>(x) * 3 + c] = static_cast<png_byte>(std::lround(v * 255.0));
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image read_png(const std::filesystem::path& path) {
  std::unique_ptr<std::FILE, FileCloser> file(std::fopen(path.string().c_str(), "rb"));
  if (!file) {
    throw FormatError(path.string() + ": cannot open for reading");
  }
  png_byte header[8];
  if (std::fread(header, 1, 8, file.get()) != 8 || png_sig_cmp(header, 0, 8) != 0) {
    throw FormatError(path.string() + ": not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("read_png: libpng initialization failed");
  }
  Image img;
  std::vector<png_byte> row;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError(path.string() + ": corrupt PNG data");
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const auto color_type = png_get_color_type(png, info);
  if (png_get_bit_depth(png, info) != 8 || color_type != PNG_COLOR_TYPE_RGB) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError(path.string() + ": expected 8-bit RGB");
  }
  img.width = static_cast<int>(png_get_image_width(png, info));
  img.height = static_cast<int>(png_get_image_height(png, info));
  img.pixels.resize(3, img.pixel_count());
  row.resize(png_get_rowbytes(png, info));
  for (int y = 0; y < img.height; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (int x = 0; x < img.width; ++x) {
      const Eigen::Index col = static_cast<Eigen::Index>(y) * img.width + x;
      for (int c = 0; c < 3; ++c) img.pixels(c, col) = row[static_cast<std::size_t>(x) * 3 + c] / 255.0;
    }
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

}  // namespace gnerf::io
