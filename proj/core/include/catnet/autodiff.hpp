#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "catnet/rng.hpp"
#include "catnet/tensor.hpp"

namespace catnet {

/// A trainable tensor with its gradient accumulator. Models register their
/// parameters in a fixed order; that order is also the checkpoint tensor
/// order, so it must never depend on container iteration order.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros(value.shape())) {}

  void zero_grad() { grad.fill(0.0); }
};

class Tape;

/// Handle to a node on a tape. The owner pointer exists purely to catch
/// cross-tape mixups in asserts.
struct Var {
  std::int32_t id = -1;
  const Tape* owner = nullptr;
  bool valid() const { return id >= 0; }
};

enum class OpKind : std::uint8_t {
  kLeaf,
  kAdd,
  kMul,
  kDiv,
  kMatMul,
  kTranspose,
  kConcat,
  kSlice,
  kEmbed,
  kSoftmax,
  kMaskedSoftmax,
  kLog,
  kExp,
  kTanh,
  kSigmoid,
  kRelu,
  kLayerNorm,
  kDropout,
  kCrossEntropy,
  kScale,
  kSum,
  kMeanRows,
};

/// Reverse-mode tape over dense double tensors.
///
/// Nodes are appended in construction order, which is a topological order by
/// construction; backward() walks the record once in reverse and visits each
/// node at most once. Gradients accumulate: calling backward() twice without
/// resetting doubles every leaf gradient.
///
/// Elementwise ops (add/mul/div) broadcast the right operand when it is a
/// [1, cols] row or a scalar. Softmax, layer_norm and cross_entropy operate
/// on the 2-D view (rows x last axis). Single-threaded per tape.
class Tape {
 public:
  /// The seed drives dropout masks only; rebuilding a tape with the same
  /// seed and the same op sequence redraws identical masks.
  explicit Tape(std::uint64_t dropout_seed = 0);

  Var leaf(Tensor value, bool requires_grad = false);
  Var constant(Tensor value) { return leaf(std::move(value), false); }
  /// Leaf bound to a parameter: backward() accumulates straight into p.grad.
  Var param(Parameter& p);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);
  Var matmul(Var a, Var b);
  Var transpose(Var a);
  Var concat(std::span<const Var> parts, int axis);
  Var slice(Var a, int axis, std::size_t start, std::size_t len);
  /// Gathers rows of `table` by id; backward scatter-adds into the table.
  Var embedding_rows(Var table, std::vector<int> ids);
  Var softmax(Var a);
  /// Row softmax over positions with keep[r*cols+c] != 0. Masked positions
  /// get exactly zero weight; a fully masked row yields an all-zero row.
  Var masked_softmax(Var a, std::vector<std::uint8_t> keep);
  Var log(Var a);
  Var exp(Var a);
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var relu(Var a);
  /// Per-row mean 0 / variance 1 normalization, no affine part.
  Var layer_norm(Var a, double eps = 1e-8);
  /// Inverted dropout: train scales kept entries by 1/(1-rate), inference is
  /// the identity. rate must be in [0, 1).
  Var dropout(Var a, double rate, bool train);
  /// Mean token cross-entropy from raw logits [T, V] against integer targets,
  /// skipping positions whose target equals ignore_index.
  Var cross_entropy(Var logits, std::vector<int> targets, int ignore_index);
  Var scale(Var a, double c);
  Var sum(Var a);       // -> scalar [1]
  Var mean_rows(Var a); // -> [1, cols]

  /// loss must be a scalar (numel == 1). Seeds d(loss)/d(loss) = 1 and
  /// accumulates into every requires-grad leaf reachable from it.
  void backward(Var loss);

  const Tensor& value(Var v) const;
  /// Gradient of a leaf/interior node; zeros if backward never reached it.
  const Tensor& grad(Var v) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    OpKind kind = OpKind::kLeaf;
    std::vector<std::int32_t> inputs;
    Tensor value;
    Tensor grad;                      // lazily sized
    bool needs_grad = false;          // some requires-grad leaf feeds this
    bool requires_grad = false;       // leaf flag
    Parameter* bound = nullptr;       // grads flow into bound->grad instead
    std::vector<int> itags;           // ids / targets / axis+start+len
    std::vector<std::uint8_t> mask;   // masked softmax keep flags
    Tensor saved;                     // op-specific cache (dropout mask, CE probs, LN stats)
    double c0 = 0.0;                  // scale factor / eps / rate
  };

  Var push(Node n);
  Node& node(Var v);
  const Node& node(Var v) const;
  Tensor& grad_buffer(std::int32_t id);
  void check_owned(Var v, const char* op) const;
  void backward_node(std::int32_t id);

  std::vector<Node> nodes_;
  SplitMix64 rng_;
};

}  // namespace catnet
