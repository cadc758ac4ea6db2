#pragma once

// Tensor-level reverse-mode automatic differentiation.
//
// Values are dense double matrices. Every op records a backward closure that
// is itself written in terms of recorded ops, so gradients can be
// differentiated again (needed for gradient penalties). Ops whose backward is
// computed directly on raw matrices are marked once-differentiable and refuse
// to take part in a create_graph pass.

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace gnerf::ad {

using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

class Tensor;
using BackwardFn = std::function<std::vector<Tensor>(const Tensor& grad_output)>;

struct Node {
  Matrix value;
  bool requires_grad = false;
  bool once_differentiable = false;
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward;
  const char* op = "leaf";
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor constant(Matrix value);
  static Tensor scalar(double value);
  /// Leaf that accumulates gradients; optimizers mutate its value in place.
  static Tensor parameter(Matrix value);

  bool defined() const { return static_cast<bool>(node_); }
  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  Index size() const { return node_->value.size(); }
  double item() const;
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const char* op() const { return node_->op; }

  /// Same value, cut from the graph.
  Tensor detach() const { return constant(node_->value); }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Records a new op. The node only keeps its inputs and backward closure when
/// grad mode is on and some input requires a gradient.
Tensor make_op(Matrix value, std::vector<Tensor> inputs, BackwardFn backward,
               const char* name, bool once_differentiable = false);

struct GradOptions {
  bool create_graph = false;
  /// Unreached inputs get a zero gradient instead of an error.
  bool allow_unused = true;
};

/// Gradients of a 1x1 `output` with respect to each tensor in `wrt`.
std::vector<Tensor> grad(const Tensor& output, const std::vector<Tensor>& wrt,
                         GradOptions options = {});

// Linear algebra and arithmetic.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a);
/// Elementwise product.
Tensor operator*(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, double s);
Tensor operator*(double s, const Tensor& a);
Tensor add_scalar(const Tensor& a, double s);
/// a + s where s is a 1x1 tensor.
Tensor add_scalar(const Tensor& a, const Tensor& s);
/// a * s where s is a 1x1 tensor.
Tensor mul_scalar(const Tensor& a, const Tensor& s);

// Broadcasting. Rows are 1 x cols, columns are rows x 1.
Tensor add_row(const Tensor& a, const Tensor& row);
Tensor add_col(const Tensor& a, const Tensor& col);
Tensor mul_row(const Tensor& a, const Tensor& row);
Tensor broadcast_rows(const Tensor& row, Index rows);
Tensor broadcast_cols(const Tensor& col, Index cols);
Tensor broadcast_scalar(const Tensor& s, Index rows, Index cols);

// Reductions.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Sums over rows, giving 1 x cols.
Tensor sum_rows(const Tensor& a);
/// Sums over columns, giving rows x 1.
Tensor sum_cols(const Tensor& a);

// Elementwise functions.
Tensor softplus(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor sin(const Tensor& a);
Tensor cos(const Tensor& a);
Tensor square(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor reciprocal(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope);
/// slope * x + (1 - slope) * softplus(x): a smooth leaky activation.
Tensor leaky_softplus(const Tensor& a, double slope = 0.2);

// Shape manipulation.
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& a, Index start, Index count);
Tensor slice_rows(const Tensor& a, Index start, Index count);
/// Reinterprets the column-major storage with a new shape.
Tensor reshape(const Tensor& a, Index rows, Index cols);

/// Image tensors are (channels, height * width) with pixel index y * width + x.
struct ConvGeometry {
  int channels = 1;
  int height = 1;
  int width = 1;
  int kernel = 3;
  int stride = 1;
  int padding = 1;

  int out_height() const { return (height + 2 * padding - kernel) / stride + 1; }
  int out_width() const { return (width + 2 * padding - kernel) / stride + 1; }
};

/// (C, H*W) -> (C*k*k, Ho*Wo) patch matrix with zero padding.
Tensor im2col(const Tensor& image, const ConvGeometry& geometry);
/// Adjoint of im2col.
Tensor col2im(const Tensor& columns, const ConvGeometry& geometry);

/// Zero-padded separable filtering of every channel plane with a symmetric
/// odd-length kernel. Self-adjoint, so its backward is itself.
Tensor symmetric_filter(const Tensor& image, int height, int width,
                        const std::vector<double>& kernel);

}  // namespace gnerf::ad
