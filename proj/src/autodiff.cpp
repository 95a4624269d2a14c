#include "visim/autodiff.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "visim/kernels.hpp"
#include "visim/special.hpp"

namespace visim::ad {

namespace {

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  std::ostringstream msg;
  msg << op << ": incompatible shapes " << a.str() << " and " << b.str();
  throw std::invalid_argument(msg.str());
}

void require(bool cond, const char* what) {
  if (!cond) throw std::invalid_argument(what);
}

}  // namespace

std::string Shape::str() const {
  std::ostringstream s;
  s << "[" << rows << " x " << cols << "]";
  return s.str();
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(shape), data_(std::make_shared<std::vector<double>>(std::move(data))) {
  if (shape_.rows < 0 || shape_.cols < 0 ||
      static_cast<std::int64_t>(data_->size()) != shape_.numel())
    throw std::invalid_argument("Tensor: data length does not match shape " + shape_.str());
}

Tensor Tensor::zeros(Shape shape) {
  return Tensor(shape, std::vector<double>(shape.numel(), 0.0));
}

Tensor Tensor::full(Shape shape, double v) {
  return Tensor(shape, std::vector<double>(shape.numel(), v));
}

Tensor Tensor::scalar(double v) { return Tensor({1, 1}, {v}); }

Tensor Tensor::row(std::vector<double> v) {
  const auto n = static_cast<std::int64_t>(v.size());
  return Tensor({1, n}, std::move(v));
}

Tensor Tensor::column(std::vector<double> v) {
  const auto n = static_cast<std::int64_t>(v.size());
  return Tensor({n, 1}, std::move(v));
}

double Tensor::value() const {
  if (shape_.numel() != 1)
    throw std::invalid_argument("Tensor::value: tensor is not scalar, shape " + shape_.str());
  return (*data_)[0];
}

Tensor Tensor::detach() const {
  Tensor t(*this);
  t.node_ = -1;
  return t;
}

int Tape::record(Shape shape, std::function<void(Tape&, const std::vector<double>&)> fn) {
  nodes_.push_back(Node{shape, std::move(fn)});
  grads_.emplace_back();
  return static_cast<int>(nodes_.size()) - 1;
}

Tensor Tape::make_result(Shape shape, std::vector<double> data, bool tracked,
                         std::function<void(Tape&, const std::vector<double>&)> fn) {
  Tensor out(shape, std::move(data));
  if (tracked) out.node_ = record(shape, std::move(fn));
  return out;
}

void Tape::accumulate(int node, const double* values, std::int64_t n, double s) {
  auto& buf = grads_[node];
  if (buf.empty()) buf.assign(nodes_[node].shape.numel(), 0.0);
  if (s == 1.0) {
    for (std::int64_t i = 0; i < n; ++i) buf[i] += values[i];
  } else {
    for (std::int64_t i = 0; i < n; ++i) buf[i] += s * values[i];
  }
}

Tensor Tape::leaf(const Tensor& t) {
  Tensor tracked(t);
  tracked.node_ = record(t.shape(), nullptr);
  return tracked;
}

Tensor Tape::leaf(Shape shape, std::vector<double> data) {
  return leaf(Tensor(shape, std::move(data)));
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  if (!(a.shape() == b.shape())) shape_error("add", a.shape(), b.shape());
  std::vector<double> out(a.numel());
  kern::map_binary(kern::Binary::kAdd, a.data().data(), b.data().data(), out.data(), a.numel());
  const int na = a.node(), nb = b.node();
  const std::int64_t n = a.numel();
  return make_result(a.shape(), std::move(out), na >= 0 || nb >= 0,
                     [na, nb, n](Tape& tp, const std::vector<double>& g) {
                       if (na >= 0) tp.accumulate(na, g.data(), n);
                       if (nb >= 0) tp.accumulate(nb, g.data(), n);
                     });
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
  if (!(a.shape() == b.shape())) shape_error("sub", a.shape(), b.shape());
  std::vector<double> out(a.numel());
  kern::map_binary(kern::Binary::kSub, a.data().data(), b.data().data(), out.data(), a.numel());
  const int na = a.node(), nb = b.node();
  const std::int64_t n = a.numel();
  return make_result(a.shape(), std::move(out), na >= 0 || nb >= 0,
                     [na, nb, n](Tape& tp, const std::vector<double>& g) {
                       if (na >= 0) tp.accumulate(na, g.data(), n);
                       if (nb >= 0) tp.accumulate(nb, g.data(), n, -1.0);
                     });
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  if (!(a.shape() == b.shape())) shape_error("mul", a.shape(), b.shape());
  std::vector<double> out(a.numel());
  kern::map_binary(kern::Binary::kMul, a.data().data(), b.data().data(), out.data(), a.numel());
  const int na = a.node(), nb = b.node();
  const std::int64_t n = a.numel();
  auto da = a.data_, db = b.data_;
  return make_result(a.shape(), std::move(out), na >= 0 || nb >= 0,
                     [na, nb, n, da, db](Tape& tp, const std::vector<double>& g) {
                       std::vector<double> tmp(n);
                       if (na >= 0) {
                         kern::map_binary(kern::Binary::kMul, g.data(), db->data(), tmp.data(), n);
                         tp.accumulate(na, tmp.data(), n);
                       }
                       if (nb >= 0) {
                         kern::map_binary(kern::Binary::kMul, g.data(), da->data(), tmp.data(), n);
                         tp.accumulate(nb, tmp.data(), n);
                       }
                     });
}

Tensor Tape::add_rowvec(const Tensor& a, const Tensor& bias) {
  if (bias.rows() != 1 || bias.cols() != a.cols())
    shape_error("add_rowvec", a.shape(), bias.shape());
  std::vector<double> out(a.numel());
  const std::int64_t n = a.rows(), m = a.cols();
  const double* ad = a.data().data();
  const double* bd = bias.data().data();
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < m; ++j) out[i * m + j] = ad[i * m + j] + bd[j];
  const int na = a.node(), nb = bias.node();
  return make_result(a.shape(), std::move(out), na >= 0 || nb >= 0,
                     [na, nb, n, m](Tape& tp, const std::vector<double>& g) {
                       if (na >= 0) tp.accumulate(na, g.data(), n * m);
                       if (nb >= 0) {
                         std::vector<double> cols(m);
                         kern::col_sum(g.data(), cols.data(), n, m);
                         tp.accumulate(nb, cols.data(), m);
                       }
                     });
}

Tensor Tape::scale(const Tensor& a, double c) {
  std::vector<double> out(a.numel());
  kern::affine(a.data().data(), out.data(), a.numel(), c, 0.0);
  const int na = a.node();
  const std::int64_t n = a.numel();
  return make_result(a.shape(), std::move(out), na >= 0,
                     [na, n, c](Tape& tp, const std::vector<double>& g) {
                       tp.accumulate(na, g.data(), n, c);
                     });
}

Tensor Tape::add_scalar(const Tensor& a, double c) {
  std::vector<double> out(a.numel());
  kern::affine(a.data().data(), out.data(), a.numel(), 1.0, c);
  const int na = a.node();
  const std::int64_t n = a.numel();
  return make_result(a.shape(), std::move(out), na >= 0,
                     [na, n](Tape& tp, const std::vector<double>& g) {
                       tp.accumulate(na, g.data(), n);
                     });
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) shape_error("matmul", a.shape(), b.shape());
  const std::int64_t n = a.rows(), k = a.cols(), m = b.cols();
  std::vector<double> out(n * m);
  kern::gemm_nn(a.data().data(), b.data().data(), out.data(), n, k, m);
  const int na = a.node(), nb = b.node();
  auto da = a.data_, db = b.data_;
  return make_result({n, m}, std::move(out), na >= 0 || nb >= 0,
                     [na, nb, n, k, m, da, db](Tape& tp, const std::vector<double>& g) {
                       if (na >= 0) {
                         std::vector<double> ga(n * k);
                         kern::gemm_nt(g.data(), db->data(), ga.data(), n, m, k);
                         tp.accumulate(na, ga.data(), n * k);
                       }
                       if (nb >= 0) {
                         std::vector<double> gb(k * m);
                         kern::gemm_tn(da->data(), g.data(), gb.data(), n, k, m);
                         tp.accumulate(nb, gb.data(), k * m);
                       }
                     });
}

Tensor Tape::relu(const Tensor& a) {
  std::vector<double> out(a.numel());
  kern::map_unary(kern::Unary::kRelu, a.data().data(), out.data(), a.numel());
  const int na = a.node();
  const std::int64_t n = a.numel();
  auto da = a.data_;
  return make_result(a.shape(), std::move(out), na >= 0,
                     [na, n, da](Tape& tp, const std::vector<double>& g) {
                       std::vector<double> tmp(n);
                       // subgradient at 0 is 0
                       kern::map_unary(kern::Unary::kReluGrad, da->data(), tmp.data(), n);
                       kern::map_binary(kern::Binary::kMul, tmp.data(), g.data(), tmp.data(), n);
                       tp.accumulate(na, tmp.data(), n);
                     });
}

Tensor Tape::log(const Tensor& a) {
  std::vector<double> out(a.numel());
  kern::map_unary(kern::Unary::kLog, a.data().data(), out.data(), a.numel());
  const int na = a.node();
  const std::int64_t n = a.numel();
  auto da = a.data_;
  return make_result(a.shape(), std::move(out), na >= 0,
                     [na, n, da](Tape& tp, const std::vector<double>& g) {
                       std::vector<double> tmp(n);
                       for (std::int64_t i = 0; i < n; ++i) tmp[i] = g[i] / (*da)[i];
                       tp.accumulate(na, tmp.data(), n);
                     });
}

Tensor Tape::exp(const Tensor& a) {
  std::vector<double> out(a.numel());
  kern::map_unary(kern::Unary::kExp, a.data().data(), out.data(), a.numel());
  const int na = a.node();
  const std::int64_t n = a.numel();
  Tensor result = make_result(a.shape(), std::move(out), na >= 0, nullptr);
  if (na >= 0) {
    auto dy = result.data_;
    nodes_.back().backprop = [na, n, dy](Tape& tp, const std::vector<double>& g) {
      std::vector<double> tmp(n);
      kern::map_binary(kern::Binary::kMul, g.data(), dy->data(), tmp.data(), n);
      tp.accumulate(na, tmp.data(), n);
    };
  }
  return result;
}

Tensor Tape::softplus(const Tensor& a) {
  std::vector<double> out(a.numel());
  kern::map_unary(kern::Unary::kSoftplus, a.data().data(), out.data(), a.numel());
  const int na = a.node();
  const std::int64_t n = a.numel();
  auto da = a.data_;
  return make_result(a.shape(), std::move(out), na >= 0,
                     [na, n, da](Tape& tp, const std::vector<double>& g) {
                       std::vector<double> tmp(n);
                       kern::map_unary(kern::Unary::kSigmoid, da->data(), tmp.data(), n);
                       kern::map_binary(kern::Binary::kMul, tmp.data(), g.data(), tmp.data(), n);
                       tp.accumulate(na, tmp.data(), n);
                     });
}

Tensor Tape::lgamma(const Tensor& a) {
  std::vector<double> out(a.numel());
  for (std::int64_t i = 0; i < a.numel(); ++i) out[i] = log_gamma(a.data()[i]);
  const int na = a.node();
  const std::int64_t n = a.numel();
  auto da = a.data_;
  return make_result(a.shape(), std::move(out), na >= 0,
                     [na, n, da](Tape& tp, const std::vector<double>& g) {
                       std::vector<double> tmp(n);
                       for (std::int64_t i = 0; i < n; ++i)
                         tmp[i] = g[i] * digamma((*da)[i]);
                       tp.accumulate(na, tmp.data(), n);
                     });
}

Tensor Tape::clamp_min(const Tensor& a, double lo) {
  std::vector<double> out(a.numel());
  kern::clamp_min(a.data().data(), out.data(), a.numel(), lo);
  const int na = a.node();
  const std::int64_t n = a.numel();
  auto da = a.data_;
  return make_result(a.shape(), std::move(out), na >= 0,
                     [na, n, lo, da](Tape& tp, const std::vector<double>& g) {
                       std::vector<double> tmp(n);
                       for (std::int64_t i = 0; i < n; ++i)
                         tmp[i] = (*da)[i] > lo ? g[i] : 0.0;
                       tp.accumulate(na, tmp.data(), n);
                     });
}

Tensor Tape::sum(const Tensor& a) {
  const double total = kern::sum_all(a.data().data(), a.numel());
  const int na = a.node();
  const std::int64_t n = a.numel();
  return make_result({1, 1}, {total}, na >= 0,
                     [na, n](Tape& tp, const std::vector<double>& g) {
                       std::vector<double> tmp(n, g[0]);
                       tp.accumulate(na, tmp.data(), n);
                     });
}

Tensor Tape::mean(const Tensor& a) {
  require(a.numel() > 0, "mean: empty tensor");
  const double total = kern::sum_all(a.data().data(), a.numel()) / a.numel();
  const int na = a.node();
  const std::int64_t n = a.numel();
  return make_result({1, 1}, {total}, na >= 0,
                     [na, n](Tape& tp, const std::vector<double>& g) {
                       std::vector<double> tmp(n, g[0] / n);
                       tp.accumulate(na, tmp.data(), n);
                     });
}

Tensor Tape::row_sum(const Tensor& a) {
  const std::int64_t n = a.rows(), m = a.cols();
  std::vector<double> out(n);
  kern::row_sum(a.data().data(), out.data(), n, m);
  const int na = a.node();
  return make_result({n, 1}, std::move(out), na >= 0,
                     [na, n, m](Tape& tp, const std::vector<double>& g) {
                       std::vector<double> tmp(n * m);
                       for (std::int64_t i = 0; i < n; ++i)
                         for (std::int64_t j = 0; j < m; ++j) tmp[i * m + j] = g[i];
                       tp.accumulate(na, tmp.data(), n * m);
                     });
}

Tensor Tape::l2_normalize_rows(const Tensor& a) {
  const std::int64_t n = a.rows(), m = a.cols();
  constexpr double kTiny = 1e-30;
  std::vector<double> out(n * m);
  auto norms = std::make_shared<std::vector<double>>(n);
  kern::l2_normalize_rows(a.data().data(), out.data(), n, m, norms->data(), kTiny);
  const int na = a.node();
  Tensor result = make_result(a.shape(), std::move(out), na >= 0, nullptr);
  if (na >= 0) {
    auto dy = result.data_;
    nodes_.back().backprop = [na, n, m, dy, norms](Tape& tp, const std::vector<double>& g) {
      std::vector<double> tmp(n * m);
      for (std::int64_t i = 0; i < n; ++i) {
        const double norm = (*norms)[i];
        const double* yi = dy->data() + i * m;
        const double* gi = g.data() + i * m;
        double* ti = tmp.data() + i * m;
        if (norm > kTiny) {
          double gy = 0.0;
          for (std::int64_t j = 0; j < m; ++j) gy += gi[j] * yi[j];
          const double inv = 1.0 / norm;
          for (std::int64_t j = 0; j < m; ++j) ti[j] = (gi[j] - gy * yi[j]) * inv;
        } else {
          for (std::int64_t j = 0; j < m; ++j) ti[j] = gi[j];
        }
      }
      tp.accumulate(na, tmp.data(), n * m);
    };
  }
  return result;
}

Tensor Tape::batch_standardize(const Tensor& a, std::vector<double>& running_mean,
                               std::vector<double>& running_var, bool training) {
  const std::int64_t n = a.rows(), m = a.cols();
  require(static_cast<std::int64_t>(running_mean.size()) == m &&
              static_cast<std::int64_t>(running_var.size()) == m,
          "batch_standardize: running statistics length mismatch");
  std::vector<double> out(n * m);
  const double* ad = a.data().data();

  if (!training) {
    auto inv_std = std::make_shared<std::vector<double>>(m);
    for (std::int64_t j = 0; j < m; ++j)
      (*inv_std)[j] = 1.0 / std::sqrt(running_var[j] + kBatchStandardizeEps);
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t j = 0; j < m; ++j)
        out[i * m + j] = (ad[i * m + j] - running_mean[j]) * (*inv_std)[j];
    const int na = a.node();
    return make_result(a.shape(), std::move(out), na >= 0,
                       [na, n, m, inv_std](Tape& tp, const std::vector<double>& g) {
                         std::vector<double> tmp(n * m);
                         for (std::int64_t i = 0; i < n; ++i)
                           for (std::int64_t j = 0; j < m; ++j)
                             tmp[i * m + j] = g[i * m + j] * (*inv_std)[j];
                         tp.accumulate(na, tmp.data(), n * m);
                       });
  }

  require(n >= 1, "batch_standardize: empty batch");
  auto inv_std = std::make_shared<std::vector<double>>(m);
  std::vector<double> batch_mean(m), batch_var(m);
  for (std::int64_t j = 0; j < m; ++j) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < n; ++i) acc += ad[i * m + j];
    batch_mean[j] = acc / n;
    double sq = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
      const double c = ad[i * m + j] - batch_mean[j];
      sq += c * c;
    }
    batch_var[j] = sq / n;
    (*inv_std)[j] = 1.0 / std::sqrt(batch_var[j] + kBatchStandardizeEps);
  }
  for (std::int64_t j = 0; j < m; ++j) {
    running_mean[j] = kBatchStandardizeMomentum * running_mean[j] +
                      (1.0 - kBatchStandardizeMomentum) * batch_mean[j];
    running_var[j] = kBatchStandardizeMomentum * running_var[j] +
                     (1.0 - kBatchStandardizeMomentum) * batch_var[j];
  }
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < m; ++j)
      out[i * m + j] = (ad[i * m + j] - batch_mean[j]) * (*inv_std)[j];

  const int na = a.node();
  Tensor result = make_result(a.shape(), std::move(out), na >= 0, nullptr);
  if (na >= 0) {
    auto xhat = result.data_;
    nodes_.back().backprop = [na, n, m, inv_std, xhat](Tape& tp,
                                                       const std::vector<double>& g) {
      // d/dx of (x - mean)/std with both statistics functions of the batch.
      std::vector<double> tmp(n * m);
      for (std::int64_t j = 0; j < m; ++j) {
        double g_mean = 0.0, gx_mean = 0.0;
        for (std::int64_t i = 0; i < n; ++i) {
          g_mean += g[i * m + j];
          gx_mean += g[i * m + j] * (*xhat)[i * m + j];
        }
        g_mean /= n;
        gx_mean /= n;
        for (std::int64_t i = 0; i < n; ++i) {
          tmp[i * m + j] = (*inv_std)[j] *
                           (g[i * m + j] - g_mean - (*xhat)[i * m + j] * gx_mean);
        }
      }
      tp.accumulate(na, tmp.data(), n * m);
    };
  }
  return result;
}

Tensor Tape::concat_rows(std::span<const Tensor> parts) {
  require(!parts.empty(), "concat_rows: no inputs");
  const std::int64_t m = parts.front().cols();
  std::int64_t total = 0;
  bool tracked = false;
  for (const Tensor& p : parts) {
    if (p.cols() != m) shape_error("concat_rows", parts.front().shape(), p.shape());
    total += p.rows();
    tracked = tracked || p.tracked();
  }
  std::vector<double> out;
  out.reserve(total * m);
  struct Piece { int node; std::int64_t offset; std::int64_t numel; };
  std::vector<Piece> pieces;
  std::int64_t offset = 0;
  for (const Tensor& p : parts) {
    out.insert(out.end(), p.data().begin(), p.data().end());
    if (p.tracked()) pieces.push_back({p.node(), offset, p.numel()});
    offset += p.numel();
  }
  return make_result({total, m}, std::move(out), tracked,
                     [pieces](Tape& tp, const std::vector<double>& g) {
                       for (const Piece& p : pieces)
                         tp.accumulate(p.node, g.data() + p.offset, p.numel);
                     });
}

Tensor Tape::concat_cols(std::span<const Tensor> parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  const std::int64_t n = parts.front().rows();
  std::int64_t total = 0;
  bool tracked = false;
  for (const Tensor& p : parts) {
    if (p.rows() != n) shape_error("concat_cols", parts.front().shape(), p.shape());
    total += p.cols();
    tracked = tracked || p.tracked();
  }
  std::vector<double> out(n * total);
  struct Piece { int node; std::int64_t col0; std::int64_t cols; };
  std::vector<Piece> pieces;
  std::int64_t col = 0;
  for (const Tensor& p : parts) {
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t j = 0; j < p.cols(); ++j)
        out[i * total + col + j] = p.at(i, j);
    if (p.tracked()) pieces.push_back({p.node(), col, p.cols()});
    col += p.cols();
  }
  return make_result({n, total}, std::move(out), tracked,
                     [pieces, n, total](Tape& tp, const std::vector<double>& g) {
                       for (const Piece& p : pieces) {
                         std::vector<double> tmp(n * p.cols);
                         for (std::int64_t i = 0; i < n; ++i)
                           for (std::int64_t j = 0; j < p.cols; ++j)
                             tmp[i * p.cols + j] = g[i * total + p.col0 + j];
                         tp.accumulate(p.node, tmp.data(), n * p.cols);
                       }
                     });
}

Tensor Tape::slice_rows(const Tensor& a, std::int64_t r0, std::int64_t r1) {
  require(0 <= r0 && r0 < r1 && r1 <= a.rows(), "slice_rows: range out of bounds");
  const std::int64_t m = a.cols(), n = r1 - r0, total = a.rows();
  std::vector<double> out(a.data().begin() + r0 * m, a.data().begin() + r1 * m);
  const int na = a.node();
  return make_result({n, m}, std::move(out), na >= 0,
                     [na, r0, n, m, total](Tape& tp, const std::vector<double>& g) {
                       std::vector<double> tmp(total * m, 0.0);
                       for (std::int64_t i = 0; i < n * m; ++i) tmp[r0 * m + i] = g[i];
                       tp.accumulate(na, tmp.data(), total * m);
                     });
}

Tensor Tape::slice_cols(const Tensor& a, std::int64_t c0, std::int64_t c1) {
  require(0 <= c0 && c0 < c1 && c1 <= a.cols(), "slice_cols: range out of bounds");
  const std::int64_t n = a.rows(), m = c1 - c0, total = a.cols();
  std::vector<double> out(n * m);
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < m; ++j) out[i * m + j] = a.at(i, c0 + j);
  const int na = a.node();
  return make_result({n, m}, std::move(out), na >= 0,
                     [na, c0, n, m, total](Tape& tp, const std::vector<double>& g) {
                       std::vector<double> tmp(n * total, 0.0);
                       for (std::int64_t i = 0; i < n; ++i)
                         for (std::int64_t j = 0; j < m; ++j)
                           tmp[i * total + c0 + j] = g[i * m + j];
                       tp.accumulate(na, tmp.data(), n * total);
                     });
}

void Tape::backward(const Tensor& loss) {
  if (!loss.tracked())
    throw std::invalid_argument("backward: loss is not tracked on this tape");
  if (loss.numel() != 1)
    throw std::invalid_argument("backward: loss must be scalar, got " + loss.shape().str());
  for (auto& g : grads_) g.clear();
  grads_[loss.node()] = {1.0};
  for (int id = loss.node(); id >= 0; --id) {
    if (grads_[id].empty() || !nodes_[id].backprop) continue;
    nodes_[id].backprop(*this, grads_[id]);
  }
}

const std::vector<double>& Tape::grad(const Tensor& t) {
  if (!t.tracked())
    throw std::invalid_argument("Tape::grad: tensor is not tracked on this tape");
  auto& buf = grads_[t.node()];
  if (buf.empty()) buf.assign(t.numel(), 0.0);
  return buf;
}

Tensor Tape::grad_tensor(const Tensor& t) {
  const auto& g = grad(t);
  return Tensor(t.shape(), std::vector<double>(g.begin(), g.begin() + t.numel()));
}

GradCheckReport grad_check(const std::function<Tensor(Tape&, const Tensor&)>& f,
                           Shape shape, const std::vector<double>& point,
                           double step, double tol) {
  Tape tape;
  Tensor x = tape.leaf(shape, point);
  Tensor loss = f(tape, x);
  if (loss.numel() != 1)
    throw std::invalid_argument("grad_check: function must return a scalar");
  tape.backward(loss);
  std::vector<double> analytic = tape.grad(x);
  analytic.resize(shape.numel());

  GradCheckReport report;
  for (std::int64_t i = 0; i < shape.numel(); ++i) {
    auto eval = [&](double delta) {
      std::vector<double> perturbed = point;
      perturbed[i] += delta;
      Tape scratch;
      return f(scratch, Tensor(shape, std::move(perturbed))).value();
    };
    const double numeric = (eval(step) - eval(-step)) / (2.0 * step);
    const double denom =
        std::max({std::fabs(analytic[i]), std::fabs(numeric), 1e-3});
    const double rel = std::fabs(analytic[i] - numeric) / denom;
    if (rel > report.max_rel_err) {
      report.max_rel_err = rel;
      report.worst_coordinate = i;
    }
    if (rel > tol) report.failing.push_back(i);
  }
  report.passed = report.failing.empty();
  return report;
}

}  // namespace visim::ad
