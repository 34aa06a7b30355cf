#pragma once

#include <functional>
#include <vector>

#include "l2aug/tensor.hpp"

namespace l2aug::ad {

class Tape;

/// Handle to a node on a Tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Records primitive operations during a forward pass and replays them in
/// reverse creation order (a topological order by construction) to compute
/// exact gradients of a scalar output.
///
/// A non-recording tape evaluates the same primitives without storing
/// backward closures; it is used for inference and for the finite-difference
/// side of gradient checks.
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }
  std::size_t size() const { return nodes_.size(); }

  /// Registers an input tensor. Leaves with needs_grad participate in
  /// backward; constants do not.
  Var leaf(Tensor value, bool needs_grad = true);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  // Primitives. Every operation validates shapes and checks its output for
  // non-finite values, reporting the primitive name and node id on failure.
  Var matmul(Var a, Var b);
  Var transpose(Var a);
  Var add(Var a, Var b);       // same shape, or b rank-1 broadcast over rows
  Var sub(Var a, Var b);       // same broadcast rule as add
  Var mul(Var a, Var b);       // elementwise; same broadcast rule as add
  Var scale(Var a, double c);
  Var add_scalar(Var a, double c);
  Var sigmoid(Var a);
  Var tanh(Var a);
  Var relu(Var a);
  Var log(Var a);
  Var log_sigmoid(Var a);
  Var softmax_rows(Var a);     // softmax over the last axis
  Var log_softmax_rows(Var a);
  Var gather_rows(Var table, std::vector<int> idx);
  Var slice_rows(Var a, std::size_t begin, std::size_t count);
  Var stack_rows(const std::vector<Var>& rows);  // N tensors of (1,d) -> (N,d)
  Var sum_all(Var a);          // -> scalar
  Var mean_all(Var a);         // -> scalar
  Var sum_last(Var a);         // (m,n) -> (m); (n) -> scalar
  Var causal_mask(Var scores); // adds -1e9 to entries above the diagonal

  /// Accumulates gradients of a scalar output into every reachable node.
  void backward(Var scalar_out);

  const Tensor& value(Var v) const;
  /// Gradient of the last backward() w.r.t. v; zeros if v was not reached.
  Tensor grad(Var v) const;

 private:
  using BackwardFn = std::function<void(Tape&, int)>;

  struct Node {
    Tensor value;
    Tensor grad;  // empty until touched by backward
    std::vector<int> parents;
    BackwardFn back;
    const char* op;
    bool needs_grad;
  };

  std::vector<Node> nodes_;
  bool recording_ = true;

  int push(Tensor value, std::vector<int> parents, const char* op, BackwardFn back);
  bool any_needs_grad(const std::vector<int>& parents) const;
  Tensor& grad_buf(int id);
  void check_id(Var v, const char* op) const;
  const Tensor& val(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
};

/// Causal scaled dot-product attention over per-position query/key/value
/// matrices (T x D each): softmax_j<=k( q_k . k_j / sqrt(D) ) applied to V.
Var scaled_dot_attention(Tape& tape, Var q, Var k, Var v);

}  // namespace l2aug::ad
