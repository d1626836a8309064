#include "catnet/autodiff.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

namespace catnet {
namespace {

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) +
                              " and " + shape_str(b.shape()));
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const std::string& detail) {
  throw std::invalid_argument(std::string(op) + ": shape " + shape_str(a.shape()) + " " + detail);
}

// Broadcast mode of the right operand in elementwise ops.
enum BcastMode : int { kSame = 0, kRow = 1, kScalar = 2 };

int bcast_mode(const char* op, const Tensor& a, const Tensor& b) {
  if (a.numel() == b.numel() && a.cols() == b.cols()) return kSame;
  if (b.numel() == 1) return kScalar;
  if (b.rows() == 1 && b.cols() == a.cols()) return kRow;
  shape_error(op, a, b);
}

double bcast_at(const Tensor& b, int mode, std::size_t i, std::size_t cols) {
  switch (mode) {
    case kSame: return b[i];
    case kRow: return b[i % cols];
    default: return b[0];
  }
}

// out += A * B with optional transposes; plain ikj loops, single-threaded.
void gemm_acc(Tensor& out, const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
  const std::size_t m = trans_a ? a.cols() : a.rows();
  const std::size_t k = trans_a ? a.rows() : a.cols();
  const std::size_t n = trans_b ? b.rows() : b.cols();
  assert(out.rows() == m && out.cols() == n);
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  const std::size_t a_cols = a.cols();
  const std::size_t b_cols = b.cols();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = trans_a ? pa[kk * a_cols + i] : pa[i * a_cols + kk];
      if (av == 0.0) continue;
      const double* brow = trans_b ? nullptr : pb + kk * b_cols;
      if (trans_b) {
        for (std::size_t j = 0; j < n; ++j) po[i * n + j] += av * pb[j * b_cols + kk];
      } else {
        for (std::size_t j = 0; j < n; ++j) po[i * n + j] += av * brow[j];
      }
    }
  }
}

}  // namespace

Tape::Tape(std::uint64_t dropout_seed) : rng_(dropout_seed) {}

Var Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::int32_t>(nodes_.size() - 1), this};
}

Tape::Node& Tape::node(Var v) { return nodes_[static_cast<std::size_t>(v.id)]; }
const Tape::Node& Tape::node(Var v) const { return nodes_[static_cast<std::size_t>(v.id)]; }

void Tape::check_owned(Var v, const char* op) const {
  if (!v.valid() || v.owner != this || static_cast<std::size_t>(v.id) >= nodes_.size()) {
    throw std::invalid_argument(std::string(op) + ": Var does not belong to this tape");
  }
}

Tensor& Tape::grad_buffer(std::int32_t id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.bound != nullptr) return n.bound->grad;
  if (n.grad.numel() == 0) n.grad = Tensor::zeros(n.value.shape());
  return n.grad;
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.kind = OpKind::kLeaf;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.needs_grad = requires_grad;
  return push(std::move(n));
}

Var Tape::param(Parameter& p) {
  Node n;
  n.kind = OpKind::kLeaf;
  n.value = p.value;
  n.requires_grad = p.trainable;
  n.needs_grad = p.trainable;
  n.bound = p.trainable ? &p : nullptr;
  return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
  check_owned(a, "add");
  check_owned(b, "add");
  const Tensor& ta = node(a).value;
  const Tensor& tb = node(b).value;
  const int mode = bcast_mode("add", ta, tb);
  Node n;
  n.kind = OpKind::kAdd;
  n.inputs = {a.id, b.id};
  n.itags = {mode};
  n.needs_grad = node(a).needs_grad || node(b).needs_grad;
  n.value = Tensor(ta.shape());
  const std::size_t cols = ta.cols();
  for (std::size_t i = 0; i < ta.numel(); ++i) n.value[i] = ta[i] + bcast_at(tb, mode, i, cols);
  return push(std::move(n));
}

Var Tape::sub(Var a, Var b) { return add(a, scale(b, -1.0)); }

Var Tape::mul(Var a, Var b) {
  check_owned(a, "mul");
  check_owned(b, "mul");
  const Tensor& ta = node(a).value;
  const Tensor& tb = node(b).value;
  const int mode = bcast_mode("mul", ta, tb);
  Node n;
  n.kind = OpKind::kMul;
  n.inputs = {a.id, b.id};
  n.itags = {mode};
  n.needs_grad = node(a).needs_grad || node(b).needs_grad;
  n.value = Tensor(ta.shape());
  const std::size_t cols = ta.cols();
  for (std::size_t i = 0; i < ta.numel(); ++i) n.value[i] = ta[i] * bcast_at(tb, mode, i, cols);
  return push(std::move(n));
}

Var Tape::div(Var a, Var b) {
  check_owned(a, "div");
  check_owned(b, "div");
  const Tensor& ta = node(a).value;
  const Tensor& tb = node(b).value;
  const int mode = bcast_mode("div", ta, tb);
  Node n;
  n.kind = OpKind::kDiv;
  n.inputs = {a.id, b.id};
  n.itags = {mode};
  n.needs_grad = node(a).needs_grad || node(b).needs_grad;
  n.value = Tensor(ta.shape());
  const std::size_t cols = ta.cols();
  for (std::size_t i = 0; i < ta.numel(); ++i) n.value[i] = ta[i] / bcast_at(tb, mode, i, cols);
  return push(std::move(n));
}

Var Tape::matmul(Var a, Var b) {
  check_owned(a, "matmul");
  check_owned(b, "matmul");
  const Tensor& ta = node(a).value;
  const Tensor& tb = node(b).value;
  if (ta.rank() > 2 || tb.rank() > 2) shape_error("matmul", ta, tb);
  if (ta.cols() != tb.rows()) shape_error("matmul", ta, tb);
  Node n;
  n.kind = OpKind::kMatMul;
  n.inputs = {a.id, b.id};
  n.needs_grad = node(a).needs_grad || node(b).needs_grad;
  n.value = Tensor({ta.rows(), tb.cols()});
  gemm_acc(n.value, ta, tb, false, false);
  return push(std::move(n));
}

Var Tape::transpose(Var a) {
  check_owned(a, "transpose");
  const Tensor& ta = node(a).value;
  if (ta.rank() > 2) shape_error("transpose", ta, "must be rank <= 2");
  Node n;
  n.kind = OpKind::kTranspose;
  n.inputs = {a.id};
  n.needs_grad = node(a).needs_grad;
  n.value = Tensor({ta.cols(), ta.rows()});
  for (std::size_t r = 0; r < ta.rows(); ++r)
    for (std::size_t c = 0; c < ta.cols(); ++c) n.value.at(c, r) = ta.at(r, c);
  return push(std::move(n));
}

Var Tape::concat(std::span<const Var> parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  if (axis != 0 && axis != 1) throw std::invalid_argument("concat: axis must be 0 or 1");
  for (Var p : parts) check_owned(p, "concat");
  const Tensor& first = node(parts[0]).value;
  std::size_t rows = first.rows(), cols = first.cols();
  Node n;
  n.kind = OpKind::kConcat;
  n.itags = {axis};
  for (Var p : parts) {
    const Tensor& t = node(p).value;
    if (t.rank() > 2) shape_error("concat", t, "must be rank <= 2");
    if (axis == 0 && t.cols() != cols) shape_error("concat", first, t);
    if (axis == 1 && t.rows() != rows) shape_error("concat", first, t);
    n.inputs.push_back(p.id);
    n.needs_grad = n.needs_grad || node(p).needs_grad;
  }
  if (axis == 0) {
    std::size_t total = 0;
    for (Var p : parts) total += node(p).value.rows();
    n.value = Tensor({total, cols});
    std::size_t r0 = 0;
    for (Var p : parts) {
      const Tensor& t = node(p).value;
      std::copy(t.data(), t.data() + t.numel(), n.value.data() + r0 * cols);
      r0 += t.rows();
    }
  } else {
    std::size_t total = 0;
    for (Var p : parts) total += node(p).value.cols();
    n.value = Tensor({rows, total});
    std::size_t c0 = 0;
    for (Var p : parts) {
      const Tensor& t = node(p).value;
      for (std::size_t r = 0; r < rows; ++r)
        std::copy(t.data() + r * t.cols(), t.data() + (r + 1) * t.cols(),
                  n.value.data() + r * total + c0);
      c0 += t.cols();
    }
  }
  return push(std::move(n));
}

Var Tape::slice(Var a, int axis, std::size_t start, std::size_t len) {
  check_owned(a, "slice");
  if (axis != 0 && axis != 1) throw std::invalid_argument("slice: axis must be 0 or 1");
  const Tensor& ta = node(a).value;
  if (ta.rank() > 2) shape_error("slice", ta, "must be rank <= 2");
  const std::size_t extent = axis == 0 ? ta.rows() : ta.cols();
  if (len == 0 || start + len > extent) {
    shape_error("slice", ta, "range [" + std::to_string(start) + ", " +
                                 std::to_string(start + len) + ") out of bounds");
  }
  Node n;
  n.kind = OpKind::kSlice;
  n.inputs = {a.id};
  n.itags = {axis, static_cast<int>(start), static_cast<int>(len)};
  n.needs_grad = node(a).needs_grad;
  if (axis == 0) {
    n.value = Tensor({len, ta.cols()});
    std::copy(ta.data() + start * ta.cols(), ta.data() + (start + len) * ta.cols(), n.value.data());
  } else {
    n.value = Tensor({ta.rows(), len});
    for (std::size_t r = 0; r < ta.rows(); ++r)
      std::copy(ta.data() + r * ta.cols() + start, ta.data() + r * ta.cols() + start + len,
                n.value.data() + r * len);
  }
  return push(std::move(n));
}

Var Tape::embedding_rows(Var table, std::vector<int> ids) {
  check_owned(table, "embedding_rows");
  const Tensor& tt = node(table).value;
  if (tt.rank() != 2) shape_error("embedding_rows", tt, "table must be rank 2");
  if (ids.empty()) throw std::invalid_argument("embedding_rows: empty id list");
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= tt.rows()) {
      throw std::invalid_argument("embedding_rows: id " + std::to_string(id) +
                                  " out of range for table " + shape_str(tt.shape()));
    }
  }
  Node n;
  n.kind = OpKind::kEmbed;
  n.inputs = {table.id};
  n.itags.assign(ids.begin(), ids.end());
  n.needs_grad = node(table).needs_grad;
  n.value = Tensor({ids.size(), tt.cols()});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    const std::size_t src = static_cast<std::size_t>(ids[r]);
    std::copy(tt.data() + src * tt.cols(), tt.data() + (src + 1) * tt.cols(),
              n.value.data() + r * tt.cols());
  }
  return push(std::move(n));
}

Var Tape::softmax(Var a) {
  check_owned(a, "softmax");
  const Tensor& ta = node(a).value;
  Node n;
  n.kind = OpKind::kSoftmax;
  n.inputs = {a.id};
  n.needs_grad = node(a).needs_grad;
  n.value = Tensor(ta.shape());
  const std::size_t rows = ta.rows(), cols = ta.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = ta.data() + r * cols;
    double* y = n.value.data() + r * cols;
    double mx = x[0];
    for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, x[c]);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      y[c] = std::exp(x[c] - mx);
      z += y[c];
    }
    for (std::size_t c = 0; c < cols; ++c) y[c] /= z;
  }
  return push(std::move(n));
}

Var Tape::masked_softmax(Var a, std::vector<std::uint8_t> keep) {
  check_owned(a, "masked_softmax");
  const Tensor& ta = node(a).value;
  if (keep.size() != ta.numel()) {
    shape_error("masked_softmax", ta, "mask has " + std::to_string(keep.size()) + " entries");
  }
  Node n;
  n.kind = OpKind::kMaskedSoftmax;
  n.inputs = {a.id};
  n.mask = std::move(keep);
  n.needs_grad = node(a).needs_grad;
  n.value = Tensor(ta.shape());
  const std::size_t rows = ta.rows(), cols = ta.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = ta.data() + r * cols;
    const std::uint8_t* k = n.mask.data() + r * cols;
    double* y = n.value.data() + r * cols;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cols; ++c)
      if (k[c]) mx = std::max(mx, x[c]);
    if (!std::isfinite(mx)) {
      // fully masked row: defined as all-zero weights
      for (std::size_t c = 0; c < cols; ++c) y[c] = 0.0;
      continue;
    }
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      y[c] = k[c] ? std::exp(x[c] - mx) : 0.0;
      z += y[c];
    }
    for (std::size_t c = 0; c < cols; ++c) y[c] /= z;
  }
  return push(std::move(n));
}

Var Tape::log(Var a) {
  check_owned(a, "log");
  const Tensor& ta = node(a).value;
  Node n;
  n.kind = OpKind::kLog;
  n.inputs = {a.id};
  n.needs_grad = node(a).needs_grad;
  n.value = Tensor(ta.shape());
  for (std::size_t i = 0; i < ta.numel(); ++i) n.value[i] = std::log(ta[i]);
  return push(std::move(n));
}

Var Tape::exp(Var a) {
  check_owned(a, "exp");
  const Tensor& ta = node(a).value;
  Node n;
  n.kind = OpKind::kExp;
  n.inputs = {a.id};
  n.needs_grad = node(a).needs_grad;
  n.value = Tensor(ta.shape());
  for (std::size_t i = 0; i < ta.numel(); ++i) n.value[i] = std::exp(ta[i]);
  return push(std::move(n));
}

Var Tape::tanh(Var a) {
  check_owned(a, "tanh");
  const Tensor& ta = node(a).value;
  Node n;
  n.kind = OpKind::kTanh;
  n.inputs = {a.id};
  n.needs_grad = node(a).needs_grad;
  n.value = Tensor(ta.shape());
  for (std::size_t i = 0; i < ta.numel(); ++i) n.value[i] = std::tanh(ta[i]);
  return push(std::move(n));
}

Var Tape::sigmoid(Var a) {
  check_owned(a, "sigmoid");
  const Tensor& ta = node(a).value;
  Node n;
  n.kind = OpKind::kSigmoid;
  n.inputs = {a.id};
  n.needs_grad = node(a).needs_grad;
  n.value = Tensor(ta.shape());
  for (std::size_t i = 0; i < ta.numel(); ++i) {
    // stable in both tails
    const double x = ta[i];
    n.value[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  }
  return push(std::move(n));
}

Var Tape::relu(Var a) {
  check_owned(a, "relu");
  const Tensor& ta = node(a).value;
  Node n;
  n.kind = OpKind::kRelu;
  n.inputs = {a.id};
  n.needs_grad = node(a).needs_grad;
  n.value = Tensor(ta.shape());
  for (std::size_t i = 0; i < ta.numel(); ++i) n.value[i] = ta[i] > 0.0 ? ta[i] : 0.0;
  return push(std::move(n));
}

Var Tape::layer_norm(Var a, double eps) {
  check_owned(a, "layer_norm");
  const Tensor& ta = node(a).value;
  Node n;
  n.kind = OpKind::kLayerNorm;
  n.inputs = {a.id};
  n.needs_grad = node(a).needs_grad;
  n.c0 = eps;
  n.value = Tensor(ta.shape());
  const std::size_t rows = ta.rows(), cols = ta.cols();
  n.saved = Tensor({rows});  // per-row 1/sqrt(var + eps)
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = ta.data() + r * cols;
    double* y = n.value.data() + r * cols;
    double mu = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mu += x[c];
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (x[c] - mu) * (x[c] - mu);
    var /= static_cast<double>(cols);
    const double inv = 1.0 / std::sqrt(var + eps);
    n.saved[r] = inv;
    for (std::size_t c = 0; c < cols; ++c) y[c] = (x[c] - mu) * inv;
  }
  return push(std::move(n));
}

Var Tape::dropout(Var a, double rate, bool train) {
  check_owned(a, "dropout");
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw std::invalid_argument("dropout: rate " + std::to_string(rate) + " outside [0, 1)");
  }
  const Tensor& ta = node(a).value;
  Node n;
  n.kind = OpKind::kDropout;
  n.inputs = {a.id};
  n.needs_grad = node(a).needs_grad;
  n.c0 = rate;
  if (!train || rate == 0.0) {
    n.value = ta;  // identity at inference
    return push(std::move(n));
  }
  const double keep_scale = 1.0 / (1.0 - rate);
  n.saved = Tensor(ta.shape());
  n.value = Tensor(ta.shape());
  for (std::size_t i = 0; i < ta.numel(); ++i) {
    const double m = rng_.uniform01() >= rate ? keep_scale : 0.0;
    n.saved[i] = m;
    n.value[i] = ta[i] * m;
  }
  return push(std::move(n));
}

Var Tape::cross_entropy(Var logits, std::vector<int> targets, int ignore_index) {
  check_owned(logits, "cross_entropy");
  const Tensor& tl = node(logits).value;
  const std::size_t rows = tl.rows(), cols = tl.cols();
  if (targets.size() != rows) {
    shape_error("cross_entropy", tl, "expects " + std::to_string(targets.size()) + " target rows");
  }
  for (int t : targets) {
    if (t != ignore_index && (t < 0 || static_cast<std::size_t>(t) >= cols)) {
      throw std::invalid_argument("cross_entropy: target " + std::to_string(t) + " out of range");
    }
  }
  Node n;
  n.kind = OpKind::kCrossEntropy;
  n.inputs = {logits.id};
  n.itags = std::vector<int>(targets.begin(), targets.end());
  n.itags.push_back(ignore_index);
  n.needs_grad = node(logits).needs_grad;
  n.saved = Tensor(tl.shape());  // softmax rows for counted positions
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] == ignore_index) continue;
    const double* x = tl.data() + r * cols;
    double* p = n.saved.data() + r * cols;
    double mx = x[0];
    for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, x[c]);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      p[c] = std::exp(x[c] - mx);
      z += p[c];
    }
    for (std::size_t c = 0; c < cols; ++c) p[c] /= z;
    total += std::log(z) + mx - x[targets[r]];
    ++counted;
  }
  n.c0 = static_cast<double>(counted);
  n.value = Tensor::scalar(counted > 0 ? total / static_cast<double>(counted) : 0.0);
  return push(std::move(n));
}

Var Tape::scale(Var a, double c) {
  check_owned(a, "scale");
  const Tensor& ta = node(a).value;
  Node n;
  n.kind = OpKind::kScale;
  n.inputs = {a.id};
  n.needs_grad = node(a).needs_grad;
  n.c0 = c;
  n.value = Tensor(ta.shape());
  for (std::size_t i = 0; i < ta.numel(); ++i) n.value[i] = ta[i] * c;
  return push(std::move(n));
}

Var Tape::sum(Var a) {
  check_owned(a, "sum");
  const Tensor& ta = node(a).value;
  Node n;
  n.kind = OpKind::kSum;
  n.inputs = {a.id};
  n.needs_grad = node(a).needs_grad;
  double s = 0.0;
  for (std::size_t i = 0; i < ta.numel(); ++i) s += ta[i];
  n.value = Tensor::scalar(s);
  return push(std::move(n));
}

Var Tape::mean_rows(Var a) {
  check_owned(a, "mean_rows");
  const Tensor& ta = node(a).value;
  if (ta.rank() > 2) shape_error("mean_rows", ta, "must be rank <= 2");
  Node n;
  n.kind = OpKind::kMeanRows;
  n.inputs = {a.id};
  n.needs_grad = node(a).needs_grad;
  const std::size_t rows = ta.rows(), cols = ta.cols();
  n.value = Tensor({1, cols});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) n.value[c] += ta.at(r, c);
  for (std::size_t c = 0; c < cols; ++c) n.value[c] /= static_cast<double>(rows);
  return push(std::move(n));
}

const Tensor& Tape::value(Var v) const {
  check_owned(v, "value");
  return node(v).value;
}

const Tensor& Tape::grad(Var v) const {
  check_owned(v, "grad");
  const Node& n = node(v);
  if (n.bound != nullptr) return n.bound->grad;
  if (n.grad.numel() == 0) {
    // never reached by backward: expose zeros lazily
    const_cast<Node&>(n).grad = Tensor::zeros(n.value.shape());
  }
  return n.grad;
}

void Tape::backward(Var loss) {
  check_owned(loss, "backward");
  if (node(loss).value.numel() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                shape_str(node(loss).value.shape()));
  }
  grad_buffer(loss.id)[0] += 1.0;
  for (std::int32_t id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.needs_grad || n.kind == OpKind::kLeaf) continue;
    Tensor* g = n.bound != nullptr ? &n.bound->grad : &n.grad;
    if (g->numel() == 0) continue;  // not an ancestor of the loss
    backward_node(id);
    // interior grads are scratch; clearing keeps repeated backward() calls
    // linear (leaves keep accumulating, as documented)
    if (!n.requires_grad && n.bound == nullptr) n.grad = Tensor();
  }
}

void Tape::backward_node(std::int32_t id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  const Tensor& g = n.bound != nullptr ? n.bound->grad : n.grad;
  const auto in = [&](std::size_t i) -> Node& { return nodes_[static_cast<std::size_t>(n.inputs[i])]; };
  const auto wants = [&](std::size_t i) { return in(i).needs_grad; };

  switch (n.kind) {
    case OpKind::kLeaf:
      break;

    case OpKind::kAdd: {
      const int mode = n.itags[0];
      const std::size_t cols = n.value.cols();
      if (wants(0)) {
        Tensor& da = grad_buffer(n.inputs[0]);
        for (std::size_t i = 0; i < g.numel(); ++i) da[i] += g[i];
      }
      if (wants(1)) {
        Tensor& db = grad_buffer(n.inputs[1]);
        for (std::size_t i = 0; i < g.numel(); ++i) {
          const std::size_t j = mode == kSame ? i : (mode == kRow ? i % cols : 0);
          db[j] += g[i];
        }
      }
      break;
    }

    case OpKind::kMul: {
      const int mode = n.itags[0];
      const Tensor& a = in(0).value;
      const Tensor& b = in(1).value;
      const std::size_t cols = a.cols();
      if (wants(0)) {
        Tensor& da = grad_buffer(n.inputs[0]);
        for (std::size_t i = 0; i < g.numel(); ++i) da[i] += g[i] * bcast_at(b, mode, i, cols);
      }
      if (wants(1)) {
        Tensor& db = grad_buffer(n.inputs[1]);
        for (std::size_t i = 0; i < g.numel(); ++i) {
          const std::size_t j = mode == kSame ? i : (mode == kRow ? i % cols : 0);
          db[j] += g[i] * a[i];
        }
      }
      break;
    }

    case OpKind::kDiv: {
      const int mode = n.itags[0];
      const Tensor& a = in(0).value;
      const Tensor& b = in(1).value;
      const std::size_t cols = a.cols();
      if (wants(0)) {
        Tensor& da = grad_buffer(n.inputs[0]);
        for (std::size_t i = 0; i < g.numel(); ++i) da[i] += g[i] / bcast_at(b, mode, i, cols);
      }
      if (wants(1)) {
        Tensor& db = grad_buffer(n.inputs[1]);
        for (std::size_t i = 0; i < g.numel(); ++i) {
          const std::size_t j = mode == kSame ? i : (mode == kRow ? i % cols : 0);
          const double bv = b[j];
          db[j] -= g[i] * a[i] / (bv * bv);
        }
      }
      break;
    }

    case OpKind::kMatMul: {
      const Tensor& a = in(0).value;
      const Tensor& b = in(1).value;
      if (wants(0)) gemm_acc(grad_buffer(n.inputs[0]), g, b, false, true);   // dA += G B^T
      if (wants(1)) gemm_acc(grad_buffer(n.inputs[1]), a, g, true, false);   // dB += A^T G
      break;
    }

    case OpKind::kTranspose: {
      if (wants(0)) {
        Tensor& da = grad_buffer(n.inputs[0]);
        const std::size_t rows = n.value.rows(), cols = n.value.cols();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c) da.at(c, r) += g.at(r, c);
      }
      break;
    }

    case OpKind::kConcat: {
      const int axis = n.itags[0];
      const std::size_t cols = n.value.cols();
      if (axis == 0) {
        std::size_t r0 = 0;
        for (std::size_t i = 0; i < n.inputs.size(); ++i) {
          const Tensor& t = in(i).value;
          if (wants(i)) {
            Tensor& di = grad_buffer(n.inputs[i]);
            for (std::size_t k = 0; k < t.numel(); ++k) di[k] += g[r0 * cols + k];
          }
          r0 += t.rows();
        }
      } else {
        std::size_t c0 = 0;
        const std::size_t rows = n.value.rows();
        for (std::size_t i = 0; i < n.inputs.size(); ++i) {
          const Tensor& t = in(i).value;
          if (wants(i)) {
            Tensor& di = grad_buffer(n.inputs[i]);
            for (std::size_t r = 0; r < rows; ++r)
              for (std::size_t c = 0; c < t.cols(); ++c) di.at(r, c) += g[r * cols + c0 + c];
          }
          c0 += t.cols();
        }
      }
      break;
    }

    case OpKind::kSlice: {
      if (wants(0)) {
        const int axis = n.itags[0];
        const std::size_t start = static_cast<std::size_t>(n.itags[1]);
        const std::size_t len = static_cast<std::size_t>(n.itags[2]);
        Tensor& da = grad_buffer(n.inputs[0]);
        const std::size_t in_cols = in(0).value.cols();
        if (axis == 0) {
          for (std::size_t k = 0; k < g.numel(); ++k) da[start * in_cols + k] += g[k];
        } else {
          for (std::size_t r = 0; r < n.value.rows(); ++r)
            for (std::size_t c = 0; c < len; ++c) da[r * in_cols + start + c] += g[r * len + c];
        }
      }
      break;
    }

    case OpKind::kEmbed: {
      if (wants(0)) {
        Tensor& dt = grad_buffer(n.inputs[0]);
        const std::size_t cols = n.value.cols();
        for (std::size_t r = 0; r < n.itags.size(); ++r) {
          const std::size_t dst = static_cast<std::size_t>(n.itags[r]);
          for (std::size_t c = 0; c < cols; ++c) dt[dst * cols + c] += g[r * cols + c];
        }
      }
      break;
    }

    case OpKind::kSoftmax: {
      if (wants(0)) {
        Tensor& da = grad_buffer(n.inputs[0]);
        const std::size_t rows = n.value.rows(), cols = n.value.cols();
        for (std::size_t r = 0; r < rows; ++r) {
          const double* y = n.value.data() + r * cols;
          const double* gr = g.data() + r * cols;
          double dot = 0.0;
          for (std::size_t c = 0; c < cols; ++c) dot += gr[c] * y[c];
          for (std::size_t c = 0; c < cols; ++c) da[r * cols + c] += y[c] * (gr[c] - dot);
        }
      }
      break;
    }

    case OpKind::kMaskedSoftmax: {
      if (wants(0)) {
        Tensor& da = grad_buffer(n.inputs[0]);
        const std::size_t rows = n.value.rows(), cols = n.value.cols();
        for (std::size_t r = 0; r < rows; ++r) {
          const double* y = n.value.data() + r * cols;
          const double* gr = g.data() + r * cols;
          const std::uint8_t* k = n.mask.data() + r * cols;
          double dot = 0.0;
          for (std::size_t c = 0; c < cols; ++c)
            if (k[c]) dot += gr[c] * y[c];
          for (std::size_t c = 0; c < cols; ++c)
            if (k[c]) da[r * cols + c] += y[c] * (gr[c] - dot);
        }
      }
      break;
    }

    case OpKind::kLog: {
      if (wants(0)) {
        Tensor& da = grad_buffer(n.inputs[0]);
        const Tensor& a = in(0).value;
        for (std::size_t i = 0; i < g.numel(); ++i) da[i] += g[i] / a[i];
      }
      break;
    }

    case OpKind::kExp: {
      if (wants(0)) {
        Tensor& da = grad_buffer(n.inputs[0]);
        for (std::size_t i = 0; i < g.numel(); ++i) da[i] += g[i] * n.value[i];
      }
      break;
    }

    case OpKind::kTanh: {
      if (wants(0)) {
        Tensor& da = grad_buffer(n.inputs[0]);
        for (std::size_t i = 0; i < g.numel(); ++i) da[i] += g[i] * (1.0 - n.value[i] * n.value[i]);
      }
      break;
    }

    case OpKind::kSigmoid: {
      if (wants(0)) {
        Tensor& da = grad_buffer(n.inputs[0]);
        for (std::size_t i = 0; i < g.numel(); ++i)
          da[i] += g[i] * n.value[i] * (1.0 - n.value[i]);
      }
      break;
    }

    case OpKind::kRelu: {
      if (wants(0)) {
        Tensor& da = grad_buffer(n.inputs[0]);
        const Tensor& a = in(0).value;
        for (std::size_t i = 0; i < g.numel(); ++i)
          if (a[i] > 0.0) da[i] += g[i];
      }
      break;
    }

    case OpKind::kLayerNorm: {
      if (wants(0)) {
        Tensor& da = grad_buffer(n.inputs[0]);
        const std::size_t rows = n.value.rows(), cols = n.value.cols();
        const double invc = 1.0 / static_cast<double>(cols);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* y = n.value.data() + r * cols;
          const double* gr = g.data() + r * cols;
          const double inv = n.saved[r];
          double mean_g = 0.0, mean_gy = 0.0;
          for (std::size_t c = 0; c < cols; ++c) {
            mean_g += gr[c];
            mean_gy += gr[c] * y[c];
          }
          mean_g *= invc;
          mean_gy *= invc;
          for (std::size_t c = 0; c < cols; ++c)
            da[r * cols + c] += inv * (gr[c] - mean_g - y[c] * mean_gy);
        }
      }
      break;
    }

    case OpKind::kDropout: {
      if (wants(0)) {
        Tensor& da = grad_buffer(n.inputs[0]);
        if (n.saved.numel() == 0) {
          for (std::size_t i = 0; i < g.numel(); ++i) da[i] += g[i];
        } else {
          for (std::size_t i = 0; i < g.numel(); ++i) da[i] += g[i] * n.saved[i];
        }
      }
      break;
    }

    case OpKind::kCrossEntropy: {
      if (wants(0)) {
        Tensor& da = grad_buffer(n.inputs[0]);
        const double gs = g[0];
        const std::size_t counted = static_cast<std::size_t>(n.c0);
        if (counted == 0) break;
        const double w = gs / static_cast<double>(counted);
        const std::size_t cols = in(0).value.cols();
        const int ignore = n.itags.back();
        for (std::size_t r = 0; r + 1 < n.itags.size(); ++r) {
          const int t = n.itags[r];
          if (t == ignore) continue;
          const double* p = n.saved.data() + r * cols;
          for (std::size_t c = 0; c < cols; ++c) da[r * cols + c] += w * p[c];
          da[r * cols + static_cast<std::size_t>(t)] -= w;
        }
      }
      break;
    }

    case OpKind::kScale: {
      if (wants(0)) {
        Tensor& da = grad_buffer(n.inputs[0]);
        for (std::size_t i = 0; i < g.numel(); ++i) da[i] += g[i] * n.c0;
      }
      break;
    }

    case OpKind::kSum: {
      if (wants(0)) {
        Tensor& da = grad_buffer(n.inputs[0]);
        const double gs = g[0];
        for (std::size_t i = 0; i < da.numel(); ++i) da[i] += gs;
      }
      break;
    }

    case OpKind::kMeanRows: {
      if (wants(0)) {
        Tensor& da = grad_buffer(n.inputs[0]);
        const std::size_t rows = in(0).value.rows(), cols = in(0).value.cols();
        const double w = 1.0 / static_cast<double>(rows);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c) da[r * cols + c] += g[c] * w;
      }
      break;
    }
  }
}

}  // namespace catnet
