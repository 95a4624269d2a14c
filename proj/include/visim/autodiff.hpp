#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

// Reverse-mode autodiff over dense 64-bit real matrices. A Tape owns the
// operation record for one backward pass (one training step); Tensors are
// cheap value handles over shared immutable buffers. An op records itself
// only when one of its inputs is tracked, so the same functions double as a
// no-grad forward path. detach() returns a value-identical untracked handle,
// which is the stop-gradient mechanism the losses rely on.

namespace visim::ad {

struct Shape {
  std::int64_t rows = 0;
  std::int64_t cols = 0;

  std::int64_t numel() const { return rows * cols; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

class Tape;

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double v);
  static Tensor scalar(double v);
  static Tensor row(std::vector<double> v);     // 1 x n
  static Tensor column(std::vector<double> v);  // n x 1

  const Shape& shape() const { return shape_; }
  std::int64_t rows() const { return shape_.rows; }
  std::int64_t cols() const { return shape_.cols; }
  std::int64_t numel() const { return shape_.numel(); }

  double at(std::int64_t r, std::int64_t c) const {
    return (*data_)[r * shape_.cols + c];
  }
  /// Scalar value; requires shape 1x1.
  double value() const;

  const std::vector<double>& data() const { return *data_; }
  /// In-place access for parameter updates. Only safe between tapes.
  std::vector<double>& mutable_data() { return *data_; }

  bool tracked() const { return node_ >= 0; }
  int node() const { return node_; }

  /// Value-identical untracked handle (stop-gradient). Shares the buffer,
  /// so forward results with and without detach are bit-identical.
  Tensor detach() const;

 private:
  friend class Tape;
  Shape shape_{0, 0};
  std::shared_ptr<std::vector<double>> data_;
  int node_ = -1;
};

class Tape {
 public:
  /// Register a tracked leaf sharing the tensor's buffer.
  Tensor leaf(const Tensor& t);
  Tensor leaf(Shape shape, std::vector<double> data);

  // Elementwise; shapes must match.
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  /// [n x m] + [1 x m] broadcast (row-vector bias).
  Tensor add_rowvec(const Tensor& a, const Tensor& bias);
  Tensor scale(const Tensor& a, double c);
  Tensor add_scalar(const Tensor& a, double c);

  Tensor matmul(const Tensor& a, const Tensor& b);

  Tensor relu(const Tensor& a);
  Tensor log(const Tensor& a);
  Tensor exp(const Tensor& a);
  Tensor softplus(const Tensor& a);
  Tensor lgamma(const Tensor& a);
  Tensor clamp_min(const Tensor& a, double lo);

  Tensor sum(const Tensor& a);
  Tensor mean(const Tensor& a);
  Tensor row_sum(const Tensor& a);  // [n x m] -> [n x 1]

  Tensor l2_normalize_rows(const Tensor& a);

  /// Column-wise standardization. Training mode normalizes by batch
  /// statistics (biased variance, eps = 1e-5) and folds them into the
  /// running buffers with momentum 0.9; eval mode applies the running
  /// statistics (deterministic, batch-size independent).
  Tensor batch_standardize(const Tensor& a, std::vector<double>& running_mean,
                           std::vector<double>& running_var, bool training);

  Tensor concat_rows(std::span<const Tensor> parts);
  Tensor concat_cols(std::span<const Tensor> parts);
  Tensor slice_rows(const Tensor& a, std::int64_t r0, std::int64_t r1);
  Tensor slice_cols(const Tensor& a, std::int64_t c0, std::int64_t c1);

  /// Reverse pass from a scalar loss. Gradients for every tracked node are
  /// available through grad() afterwards.
  void backward(const Tensor& loss);

  const std::vector<double>& grad(const Tensor& t);
  Tensor grad_tensor(const Tensor& t);

  std::size_t node_count() const { return nodes_.size(); }

  /// Accumulate into a node's gradient buffer (used by op closures).
  void accumulate(int node, const double* values, std::int64_t n, double scale = 1.0);

 private:
  struct Node {
    Shape shape;
    std::function<void(Tape&, const std::vector<double>&)> backprop;
  };

  int record(Shape shape, std::function<void(Tape&, const std::vector<double>&)> fn);
  Tensor make_result(Shape shape, std::vector<double> data, bool tracked,
                     std::function<void(Tape&, const std::vector<double>&)> fn);

  std::vector<Node> nodes_;
  std::vector<std::vector<double>> grads_;
};

inline constexpr double kBatchStandardizeEps = 1e-5;
inline constexpr double kBatchStandardizeMomentum = 0.9;

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::int64_t worst_coordinate = -1;
  std::vector<std::int64_t> failing;
  bool passed = true;
};

/// Central-difference check of d f / d x at `point`. f must build a scalar
/// from its (single) input through tape ops; it is re-evaluated with
/// untracked perturbed inputs for the numeric side.
GradCheckReport grad_check(const std::function<Tensor(Tape&, const Tensor&)>& f,
                           Shape shape, const std::vector<double>& point,
                           double step = 1e-5, double tol = 1e-6);

}  // namespace visim::ad
