#include "gnerf/autodiff.hpp"

#include <cmath>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace gnerf::ad {

namespace {

thread_local bool g_grad_enabled = true;

std::string shape_string(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_string(a.value()) +
                                " vs " + shape_string(b.value()));
  }
}

void require_scalar(const Tensor& s, const char* op) {
  if (s.rows() != 1 || s.cols() != 1) {
    throw std::invalid_argument(std::string(op) + ": expected 1x1 tensor, got " +
                                shape_string(s.value()));
  }
}

double stable_softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double stable_sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Writes `g` into a zero matrix of the given shape at a column/row offset.
Tensor pad_cols(const Tensor& g, Index start, Index total_cols);
Tensor pad_rows(const Tensor& g, Index start, Index total_rows);

}  // namespace

double Tensor::item() const {
  if (size() != 1) {
    throw std::invalid_argument("item() on non-scalar tensor " + shape_string(value()));
  }
  return node_->value(0, 0);
}

Tensor Tensor::constant(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = "constant";
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value) { return constant(Matrix::Constant(1, 1, value)); }

Tensor Tensor::parameter(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  node->op = "parameter";
  return Tensor(std::move(node));
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tensor make_op(Matrix value, std::vector<Tensor> inputs, BackwardFn backward, const char* name,
               bool once_differentiable) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = name;
  if (g_grad_enabled) {
    bool any = false;
    for (const auto& in : inputs) {
      any = any || in.requires_grad();
    }
    if (any) {
      node->requires_grad = true;
      node->once_differentiable = once_differentiable;
      node->inputs.reserve(inputs.size());
      for (const auto& in : inputs) {
        node->inputs.push_back(in.node());
      }
      node->backward = std::move(backward);
    }
  }
  return Tensor(std::move(node));
}

std::vector<Tensor> grad(const Tensor& output, const std::vector<Tensor>& wrt, GradOptions options) {
  if (output.size() != 1) {
    throw std::invalid_argument("grad: output must be 1x1, got " + shape_string(output.value()));
  }
  std::unordered_set<const Node*> keep;
  for (const auto& w : wrt) {
    keep.insert(w.node().get());
  }

  // Iterative post-order DFS gives a topological order (inputs before users).
  std::vector<Node*> order;
  std::unordered_set<const Node*> visited;
  if (output.requires_grad()) {
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(output.node().get(), 0);
    visited.insert(output.node().get());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->inputs.size()) {
        Node* child = node->inputs[next++].get();
        if (child->requires_grad && visited.insert(child).second) {
          stack.emplace_back(child, 0);
        }
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }
  }

  std::unordered_map<const Node*, Tensor> grads;
  if (output.requires_grad()) {
    grads.emplace(output.node().get(), Tensor::scalar(1.0));
  }
  std::optional<NoGradGuard> guard;
  if (!options.create_graph) {
    guard.emplace();
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    auto found = grads.find(node);
    if (found == grads.end() || !node->backward) {
      continue;
    }
    if (options.create_graph && node->once_differentiable) {
      throw std::logic_error(std::string("grad: op '") + node->op +
                             "' is once-differentiable and cannot be used with create_graph");
    }
    const Tensor g = found->second;
    if (!keep.count(node)) {
      grads.erase(found);
    }
    std::vector<Tensor> input_grads = node->backward(g);
    for (std::size_t i = 0; i < node->inputs.size() && i < input_grads.size(); ++i) {
      const auto& in = node->inputs[i];
      if (!in->requires_grad || !input_grads[i].defined()) {
        continue;
      }
      auto existing = grads.find(in.get());
      if (existing == grads.end()) {
        grads.emplace(in.get(), input_grads[i]);
      } else {
        existing->second = existing->second + input_grads[i];
      }
    }
  }

  std::vector<Tensor> result;
  result.reserve(wrt.size());
  for (const auto& w : wrt) {
    auto found = grads.find(w.node().get());
    if (found != grads.end()) {
      result.push_back(found->second);
    } else if (options.allow_unused) {
      result.push_back(Tensor::constant(Matrix::Zero(w.rows(), w.cols())));
    } else {
      throw std::invalid_argument("grad: input does not contribute to output");
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Linear algebra and arithmetic

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: inner dimensions differ " + shape_string(a.value()) +
                                " * " + shape_string(b.value()));
  }
  Matrix v = a.value() * b.value();
  return make_op(std::move(v), {a, b},
                 [a, b](const Tensor& g) -> std::vector<Tensor> {
                   Tensor ga, gb;
                   if (a.requires_grad()) ga = matmul(g, transpose(b));
                   if (b.requires_grad()) gb = matmul(transpose(a), g);
                   return {ga, gb};
                 },
                 "matmul");
}

Tensor transpose(const Tensor& a) {
  return make_op(a.value().transpose(), {a},
                 [](const Tensor& g) -> std::vector<Tensor> { return {transpose(g)}; },
                 "transpose");
}

Tensor operator+(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  return make_op(a.value() + b.value(), {a, b},
                 [](const Tensor& g) -> std::vector<Tensor> { return {g, g}; }, "add");
}

Tensor operator-(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  return make_op(a.value() - b.value(), {a, b},
                 [](const Tensor& g) -> std::vector<Tensor> { return {g, -g}; }, "sub");
}

Tensor operator-(const Tensor& a) {
  return make_op(-a.value(), {a}, [](const Tensor& g) -> std::vector<Tensor> { return {-g}; },
                 "neg");
}

Tensor operator*(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  return make_op(a.value().cwiseProduct(b.value()), {a, b},
                 [a, b](const Tensor& g) -> std::vector<Tensor> {
                   Tensor ga, gb;
                   if (a.requires_grad()) ga = g * b;
                   if (b.requires_grad()) gb = g * a;
                   return {ga, gb};
                 },
                 "mul");
}

Tensor operator*(const Tensor& a, double s) {
  return make_op(a.value() * s, {a},
                 [s](const Tensor& g) -> std::vector<Tensor> { return {g * s}; }, "scale");
}

Tensor operator*(double s, const Tensor& a) { return a * s; }

Tensor add_scalar(const Tensor& a, double s) {
  return make_op(a.value().array() + s, {a},
                 [](const Tensor& g) -> std::vector<Tensor> { return {g}; }, "add_scalar");
}

Tensor add_scalar(const Tensor& a, const Tensor& s) {
  require_scalar(s, "add_scalar");
  return make_op(a.value().array() + s.item(), {a, s},
                 [](const Tensor& g) -> std::vector<Tensor> { return {g, sum(g)}; },
                 "add_scalar_tensor");
}

Tensor mul_scalar(const Tensor& a, const Tensor& s) {
  require_scalar(s, "mul_scalar");
  return make_op(a.value() * s.item(), {a, s},
                 [a, s](const Tensor& g) -> std::vector<Tensor> {
                   Tensor ga, gs;
                   if (a.requires_grad()) ga = mul_scalar(g, s);
                   if (s.requires_grad()) gs = sum(g * a);
                   return {ga, gs};
                 },
                 "mul_scalar");
}

// ---------------------------------------------------------------------------
// Broadcasting

Tensor add_row(const Tensor& a, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw std::invalid_argument("add_row: expected 1x" + std::to_string(a.cols()) + " row, got " +
                                shape_string(row.value()));
  }
  Matrix v = a.value().rowwise() + row.value().row(0);
  return make_op(std::move(v), {a, row},
                 [](const Tensor& g) -> std::vector<Tensor> { return {g, sum_rows(g)}; },
                 "add_row");
}

Tensor add_col(const Tensor& a, const Tensor& col) {
  if (col.cols() != 1 || col.rows() != a.rows()) {
    throw std::invalid_argument("add_col: expected " + std::to_string(a.rows()) + "x1 column, got " +
                                shape_string(col.value()));
  }
  Matrix v = a.value().colwise() + col.value().col(0);
  return make_op(std::move(v), {a, col},
                 [](const Tensor& g) -> std::vector<Tensor> { return {g, sum_cols(g)}; },
                 "add_col");
}

Tensor mul_row(const Tensor& a, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw std::invalid_argument("mul_row: expected 1x" + std::to_string(a.cols()) + " row, got " +
                                shape_string(row.value()));
  }
  Matrix v = a.value().array().rowwise() * row.value().row(0).array();
  return make_op(std::move(v), {a, row},
                 [a, row](const Tensor& g) -> std::vector<Tensor> {
                   Tensor ga, gr;
                   if (a.requires_grad()) ga = mul_row(g, row);
                   if (row.requires_grad()) gr = sum_rows(g * a);
                   return {ga, gr};
                 },
                 "mul_row");
}

Tensor broadcast_rows(const Tensor& row, Index rows) {
  if (row.rows() != 1) {
    throw std::invalid_argument("broadcast_rows: expected a row, got " + shape_string(row.value()));
  }
  return make_op(row.value().replicate(rows, 1), {row},
                 [](const Tensor& g) -> std::vector<Tensor> { return {sum_rows(g)}; },
                 "broadcast_rows");
}

Tensor broadcast_cols(const Tensor& col, Index cols) {
  if (col.cols() != 1) {
    throw std::invalid_argument("broadcast_cols: expected a column, got " +
                                shape_string(col.value()));
  }
  return make_op(col.value().replicate(1, cols), {col},
                 [](const Tensor& g) -> std::vector<Tensor> { return {sum_cols(g)}; },
                 "broadcast_cols");
}

Tensor broadcast_scalar(const Tensor& s, Index rows, Index cols) {
  require_scalar(s, "broadcast_scalar");
  return make_op(Matrix::Constant(rows, cols, s.item()), {s},
                 [](const Tensor& g) -> std::vector<Tensor> { return {sum(g)}; },
                 "broadcast_scalar");
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& a) {
  const Index r = a.rows();
  const Index c = a.cols();
  return make_op(Matrix::Constant(1, 1, a.value().sum()), {a},
                 [r, c](const Tensor& g) -> std::vector<Tensor> { return {broadcast_scalar(g, r, c)}; },
                 "sum");
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) {
    throw std::invalid_argument("mean of empty tensor");
  }
  return sum(a) * (1.0 / static_cast<double>(a.size()));
}

Tensor sum_rows(const Tensor& a) {
  const Index r = a.rows();
  return make_op(a.value().colwise().sum(), {a},
                 [r](const Tensor& g) -> std::vector<Tensor> { return {broadcast_rows(g, r)}; },
                 "sum_rows");
}

Tensor sum_cols(const Tensor& a) {
  const Index c = a.cols();
  return make_op(a.value().rowwise().sum(), {a},
                 [c](const Tensor& g) -> std::vector<Tensor> { return {broadcast_cols(g, c)}; },
                 "sum_cols");
}

// ---------------------------------------------------------------------------
// Elementwise functions

Tensor softplus(const Tensor& a) {
  return make_op(a.value().unaryExpr(&stable_softplus), {a},
                 [a](const Tensor& g) -> std::vector<Tensor> { return {g * sigmoid(a)}; },
                 "softplus");
}

Tensor sigmoid(const Tensor& a) {
  return make_op(a.value().unaryExpr(&stable_sigmoid), {a},
                 [a](const Tensor& g) -> std::vector<Tensor> {
                   Tensor s = sigmoid(a);
                   return {g * (s * add_scalar(-s, 1.0))};
                 },
                 "sigmoid");
}

Tensor tanh(const Tensor& a) {
  return make_op(a.value().array().tanh().matrix(), {a},
                 [a](const Tensor& g) -> std::vector<Tensor> {
                   return {g * add_scalar(-square(tanh(a)), 1.0)};
                 },
                 "tanh");
}

Tensor exp(const Tensor& a) {
  return make_op(a.value().array().exp().matrix(), {a},
                 [a](const Tensor& g) -> std::vector<Tensor> { return {g * exp(a)}; }, "exp");
}

Tensor sin(const Tensor& a) {
  return make_op(a.value().array().sin().matrix(), {a},
                 [a](const Tensor& g) -> std::vector<Tensor> { return {g * cos(a)}; }, "sin");
}

Tensor cos(const Tensor& a) {
  return make_op(a.value().array().cos().matrix(), {a},
                 [a](const Tensor& g) -> std::vector<Tensor> { return {-(g * sin(a))}; }, "cos");
}

Tensor square(const Tensor& a) {
  return make_op(a.value().array().square().matrix(), {a},
                 [a](const Tensor& g) -> std::vector<Tensor> { return {(g * a) * 2.0}; },
                 "square");
}

Tensor sqrt(const Tensor& a) {
  if ((a.value().array() < 0.0).any()) {
    throw std::domain_error("sqrt of negative value");
  }
  return make_op(a.value().array().sqrt().matrix(), {a},
                 [a](const Tensor& g) -> std::vector<Tensor> {
                   return {g * (reciprocal(sqrt(a)) * 0.5)};
                 },
                 "sqrt");
}

Tensor reciprocal(const Tensor& a) {
  return make_op(a.value().array().inverse().matrix(), {a},
                 [a](const Tensor& g) -> std::vector<Tensor> {
                   return {-(g * square(reciprocal(a)))};
                 },
                 "reciprocal");
}

Tensor abs(const Tensor& a) {
  return make_op(a.value().cwiseAbs(), {a},
                 [a](const Tensor& g) -> std::vector<Tensor> {
                   Matrix sign = a.value().unaryExpr(
                       [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
                   return {g * Tensor::constant(std::move(sign))};
                 },
                 "abs");
}

Tensor leaky_relu(const Tensor& a, double slope) {
  Matrix v = a.value().unaryExpr([slope](double x) { return x > 0.0 ? x : slope * x; });
  return make_op(std::move(v), {a},
                 [a, slope](const Tensor& g) -> std::vector<Tensor> {
                   Matrix mask =
                       a.value().unaryExpr([slope](double x) { return x > 0.0 ? 1.0 : slope; });
                   return {g * Tensor::constant(std::move(mask))};
                 },
                 "leaky_relu");
}

namespace {

// slope + (1 - slope) * sigmoid(a), the derivative of leaky_softplus.
Tensor leaky_softplus_slope(const Tensor& a, double slope) {
  Matrix v = a.value().unaryExpr([slope](double x) { return slope + (1.0 - slope) * stable_sigmoid(x); });
  return make_op(std::move(v), {a},
                 [a, slope](const Tensor& g) -> std::vector<Tensor> {
                   Tensor s = sigmoid(a);
                   return {g * (s * add_scalar(-s, 1.0)) * (1.0 - slope)};
                 },
                 "leaky_softplus_slope");
}

}  // namespace

Tensor leaky_softplus(const Tensor& a, double slope) {
  Matrix v = a.value().unaryExpr([slope](double x) { return slope * x + (1.0 - slope) * stable_softplus(x); });
  return make_op(std::move(v), {a},
                 [a, slope](const Tensor& g) -> std::vector<Tensor> { return {g * leaky_softplus_slope(a, slope)}; },
                 "leaky_softplus");
}

// ---------------------------------------------------------------------------
// Shapes

namespace {

Tensor pad_cols(const Tensor& g, Index start, Index total_cols) {
  Matrix v = Matrix::Zero(g.rows(), total_cols);
  v.middleCols(start, g.cols()) = g.value();
  const Index count = g.cols();
  return make_op(std::move(v), {g},
                 [start, count](const Tensor& gg) -> std::vector<Tensor> {
                   return {slice_cols(gg, start, count)};
                 },
                 "pad_cols");
}

Tensor pad_rows(const Tensor& g, Index start, Index total_rows) {
  Matrix v = Matrix::Zero(total_rows, g.cols());
  v.middleRows(start, g.rows()) = g.value();
  const Index count = g.rows();
  return make_op(std::move(v), {g},
                 [start, count](const Tensor& gg) -> std::vector<Tensor> {
                   return {slice_rows(gg, start, count)};
                 },
                 "pad_rows");
}

}  // namespace

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) {
    throw std::invalid_argument("concat_cols: no inputs");
  }
  Index total = 0;
  for (const auto& p : parts) {
    if (p.rows() != parts.front().rows()) {
      throw std::invalid_argument("concat_cols: row count mismatch");
    }
    total += p.cols();
  }
  Matrix v(parts.front().rows(), total);
  std::vector<Index> offsets;
  Index offset = 0;
  for (const auto& p : parts) {
    v.middleCols(offset, p.cols()) = p.value();
    offsets.push_back(offset);
    offset += p.cols();
  }
  std::vector<Index> widths;
  for (const auto& p : parts) widths.push_back(p.cols());
  return make_op(std::move(v), parts,
                 [offsets, widths](const Tensor& g) -> std::vector<Tensor> {
                   std::vector<Tensor> out;
                   for (std::size_t i = 0; i < offsets.size(); ++i) {
                     out.push_back(slice_cols(g, offsets[i], widths[i]));
                   }
                   return out;
                 },
                 "concat_cols");
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) {
    throw std::invalid_argument("concat_rows: no inputs");
  }
  Index total = 0;
  for (const auto& p : parts) {
    if (p.cols() != parts.front().cols()) {
      throw std::invalid_argument("concat_rows: column count mismatch");
    }
    total += p.rows();
  }
  Matrix v(total, parts.front().cols());
  std::vector<Index> offsets;
  std::vector<Index> heights;
  Index offset = 0;
  for (const auto& p : parts) {
    v.middleRows(offset, p.rows()) = p.value();
    offsets.push_back(offset);
    heights.push_back(p.rows());
    offset += p.rows();
  }
  return make_op(std::move(v), parts,
                 [offsets, heights](const Tensor& g) -> std::vector<Tensor> {
                   std::vector<Tensor> out;
                   for (std::size_t i = 0; i < offsets.size(); ++i) {
                     out.push_back(slice_rows(g, offsets[i], heights[i]));
                   }
                   return out;
                 },
                 "concat_rows");
}

Tensor slice_cols(const Tensor& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw std::out_of_range("slice_cols: range outside tensor");
  }
  const Index total = a.cols();
  return make_op(a.value().middleCols(start, count), {a},
                 [start, total](const Tensor& g) -> std::vector<Tensor> {
                   return {pad_cols(g, start, total)};
                 },
                 "slice_cols");
}

Tensor slice_rows(const Tensor& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) {
    throw std::out_of_range("slice_rows: range outside tensor");
  }
  const Index total = a.rows();
  return make_op(a.value().middleRows(start, count), {a},
                 [start, total](const Tensor& g) -> std::vector<Tensor> {
                   return {pad_rows(g, start, total)};
                 },
                 "slice_rows");
}

Tensor reshape(const Tensor& a, Index rows, Index cols) {
  if (rows * cols != a.size()) {
    throw std::invalid_argument("reshape: size mismatch");
  }
  Matrix v = Eigen::Map<const Matrix>(a.value().data(), rows, cols);
  const Index r0 = a.rows();
  const Index c0 = a.cols();
  return make_op(std::move(v), {a},
                 [r0, c0](const Tensor& g) -> std::vector<Tensor> { return {reshape(g, r0, c0)}; },
                 "reshape");
}

// ---------------------------------------------------------------------------
// Convolution support

namespace {

void check_geometry(const Tensor& image, const ConvGeometry& geo) {
  if (image.rows() != geo.channels ||
      image.cols() != static_cast<Index>(geo.height) * geo.width) {
    throw std::invalid_argument("im2col: tensor " + shape_string(image.value()) +
                                " does not match geometry");
  }
  if (geo.out_height() <= 0 || geo.out_width() <= 0) {
    throw std::invalid_argument("im2col: empty output");
  }
}

}  // namespace

Tensor im2col(const Tensor& image, const ConvGeometry& geo) {
  check_geometry(image, geo);
  const int k = geo.kernel;
  const int ho = geo.out_height();
  const int wo = geo.out_width();
  Matrix cols = Matrix::Zero(static_cast<Index>(geo.channels) * k * k, static_cast<Index>(ho) * wo);
  const Matrix& src = image.value();
  for (int c = 0; c < geo.channels; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const Index row = (static_cast<Index>(c) * k + ky) * k + kx;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * geo.stride - geo.padding + ky;
          if (iy < 0 || iy >= geo.height) continue;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * geo.stride - geo.padding + kx;
            if (ix < 0 || ix >= geo.width) continue;
            cols(row, static_cast<Index>(oy) * wo + ox) = src(c, static_cast<Index>(iy) * geo.width + ix);
          }
        }
      }
    }
  }
  return make_op(std::move(cols), {image},
                 [geo](const Tensor& g) -> std::vector<Tensor> { return {col2im(g, geo)}; },
                 "im2col");
}

Tensor col2im(const Tensor& columns, const ConvGeometry& geo) {
  const int k = geo.kernel;
  const int ho = geo.out_height();
  const int wo = geo.out_width();
  if (columns.rows() != static_cast<Index>(geo.channels) * k * k ||
      columns.cols() != static_cast<Index>(ho) * wo) {
    throw std::invalid_argument("col2im: tensor " + shape_string(columns.value()) +
                                " does not match geometry");
  }
  Matrix img = Matrix::Zero(geo.channels, static_cast<Index>(geo.height) * geo.width);
  const Matrix& src = columns.value();
  for (int c = 0; c < geo.channels; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const Index row = (static_cast<Index>(c) * k + ky) * k + kx;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * geo.stride - geo.padding + ky;
          if (iy < 0 || iy >= geo.height) continue;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * geo.stride - geo.padding + kx;
            if (ix < 0 || ix >= geo.width) continue;
            img(c, static_cast<Index>(iy) * geo.width + ix) += src(row, static_cast<Index>(oy) * wo + ox);
          }
        }
      }
    }
  }
  return make_op(std::move(img), {columns},
                 [geo](const Tensor& g) -> std::vector<Tensor> { return {im2col(g, geo)}; },
                 "col2im");
}

Tensor symmetric_filter(const Tensor& image, int height, int width, const std::vector<double>& kernel) {
  if (kernel.size() % 2 == 0) {
    throw std::invalid_argument("symmetric_filter: kernel length must be odd");
  }
  for (std::size_t i = 0; i < kernel.size() / 2; ++i) {
    if (kernel[i] != kernel[kernel.size() - 1 - i]) {
      throw std::invalid_argument("symmetric_filter: kernel is not symmetric");
    }
  }
  if (image.cols() != static_cast<Index>(height) * width) {
    throw std::invalid_argument("symmetric_filter: tensor does not match image size");
  }
  const int radius = static_cast<int>(kernel.size() / 2);
  const Matrix& src = image.value();
  Matrix tmp = Matrix::Zero(src.rows(), src.cols());
  Matrix out = Matrix::Zero(src.rows(), src.cols());
  for (Index c = 0; c < src.rows(); ++c) {
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        double acc = 0.0;
        for (int d = -radius; d <= radius; ++d) {
          const int xx = x + d;
          if (xx < 0 || xx >= width) continue;
          acc += kernel[static_cast<std::size_t>(d + radius)] * src(c, static_cast<Index>(y) * width + xx);
        }
        tmp(c, static_cast<Index>(y) * width + x) = acc;
      }
    }
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        double acc = 0.0;
        for (int d = -radius; d <= radius; ++d) {
          const int yy = y + d;
          if (yy < 0 || yy >= height) continue;
          acc += kernel[static_cast<std::size_t>(d + radius)] * tmp(c, static_cast<Index>(yy) * width + x);
        }
        out(c, static_cast<Index>(y) * width + x) = acc;
      }
    }
  }
  return make_op(std::move(out), {image},
                 [height, width, kernel](const Tensor& g) -> std::vector<Tensor> {
                   return {symmetric_filter(g, height, width, kernel)};
                 },
                 "symmetric_filter");
}

}  // namespace gnerf::ad
