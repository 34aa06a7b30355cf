#include "l2aug/tape.hpp"

#include <cmath>
#include <string>

#include "l2aug/error.hpp"

namespace l2aug::ad {

namespace {

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_log_sigmoid(double x) {
  if (x >= 0.0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

[[noreturn]] void shape_fail(const char* op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + a.shape_str() + " and " +
                   b.shape_str());
}

}  // namespace

void Tape::check_id(Var v, const char* op) const {
  if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size()) {
    throw Error(std::string(op) + ": variable is not on this tape");
  }
}

bool Tape::any_needs_grad(const std::vector<int>& parents) const {
  for (int p : parents) {
    if (nodes_[static_cast<std::size_t>(p)].needs_grad) return true;
  }
  return false;
}

int Tape::push(Tensor value, std::vector<int> parents, const char* op, BackwardFn back) {
  if (!value.all_finite()) {
    throw NonFiniteError(std::string(op) + ": non-finite output at node " +
                         std::to_string(nodes_.size()));
  }
  Node n;
  n.value = std::move(value);
  n.op = op;
  n.needs_grad = !parents.empty() && any_needs_grad(parents);
  if (recording_ && n.needs_grad) {
    n.parents = std::move(parents);
    n.back = std::move(back);
  }
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Tensor& Tape::grad_buf(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.numel() == 0) n.grad = Tensor(n.value.shape);
  return n.grad;
}

Var Tape::leaf(Tensor value, bool needs_grad) {
  if (!value.all_finite()) {
    throw NonFiniteError("leaf: non-finite input at node " + std::to_string(nodes_.size()));
  }
  Node n;
  n.value = std::move(value);
  n.op = "leaf";
  n.needs_grad = needs_grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

const Tensor& Tape::value(Var v) const {
  check_id(v, "value");
  return nodes_[static_cast<std::size_t>(v.id)].value;
}

Tensor Tape::grad(Var v) const {
  check_id(v, "grad");
  const Node& n = nodes_[static_cast<std::size_t>(v.id)];
  if (n.grad.numel() == 0) return Tensor(n.value.shape);
  return n.grad;
}

Var Tape::matmul(Var a, Var b) {
  check_id(a, "matmul");
  check_id(b, "matmul");
  const Tensor& ta = val(a.id);
  const Tensor& tb = val(b.id);
  if (ta.ndim() != 2 || tb.ndim() != 2 || ta.shape[1] != tb.shape[0]) {
    shape_fail("matmul", ta, tb);
  }
  const std::size_t m = ta.shape[0], kk = ta.shape[1], nn = tb.shape[1];
  Tensor out({m, nn});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < kk; ++p) {
      const double av = ta.data[i * kk + p];
      const double* brow = &tb.data[p * nn];
      double* orow = &out.data[i * nn];
      for (std::size_t j = 0; j < nn; ++j) orow[j] += av * brow[j];
    }
  }
  int ia = a.id, ib = b.id;
  return Var{push(std::move(out), {ia, ib}, "matmul", [ia, ib, m, kk, nn](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& av = t.val(ia);
    const Tensor& bv = t.val(ib);
    if (t.nodes_[ia].needs_grad) {
      Tensor& ga = t.grad_buf(ia);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < kk; ++p) {
          const double* grow = &g.data[i * nn];
          const double* brow = &bv.data[p * nn];
          double acc = 0.0;
          for (std::size_t j = 0; j < nn; ++j) acc += grow[j] * brow[j];
          ga.data[i * kk + p] += acc;
        }
      }
    }
    if (t.nodes_[ib].needs_grad) {
      Tensor& gb = t.grad_buf(ib);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < kk; ++p) {
          const double av_ip = av.data[i * kk + p];
          const double* grow = &g.data[i * nn];
          double* gbrow = &gb.data[p * nn];
          for (std::size_t j = 0; j < nn; ++j) gbrow[j] += av_ip * grow[j];
        }
      }
    }
  })};
}

Var Tape::transpose(Var a) {
  check_id(a, "transpose");
  const Tensor& ta = val(a.id);
  if (ta.ndim() != 2) {
    throw ShapeError("transpose: requires rank 2, got " + ta.shape_str());
  }
  const std::size_t m = ta.shape[0], n = ta.shape[1];
  Tensor out({n, m});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out.data[j * m + i] = ta.data[i * n + j];
  }
  int ia = a.id;
  return Var{push(std::move(out), {ia}, "transpose", [ia, m, n](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    Tensor& ga = t.grad_buf(ia);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) ga.data[i * n + j] += g.data[j * m + i];
    }
  })};
}

namespace {
enum class Broadcast { None, Row };
}

// add/sub/mul share one shape rule: identical shapes, or a rank-2 lhs with a
// rank-1 rhs applied to every row.
Var Tape::add(Var a, Var b) {
  check_id(a, "add");
  check_id(b, "add");
  const Tensor& ta = val(a.id);
  const Tensor& tb = val(b.id);
  Broadcast bc;
  if (ta.same_shape(tb)) {
    bc = Broadcast::None;
  } else if (ta.ndim() == 2 && tb.ndim() == 1 && ta.shape[1] == tb.shape[0]) {
    bc = Broadcast::Row;
  } else {
    shape_fail("add", ta, tb);
  }
  Tensor out(ta.shape);
  const std::size_t n = tb.numel();
  for (std::size_t i = 0; i < ta.numel(); ++i) out.data[i] = ta.data[i] + tb.data[i % n];
  int ia = a.id, ib = b.id;
  return Var{push(std::move(out), {ia, ib}, "add", [ia, ib, n](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    if (t.nodes_[ia].needs_grad) {
      Tensor& ga = t.grad_buf(ia);
      for (std::size_t i = 0; i < g.numel(); ++i) ga.data[i] += g.data[i];
    }
    if (t.nodes_[ib].needs_grad) {
      Tensor& gb = t.grad_buf(ib);
      for (std::size_t i = 0; i < g.numel(); ++i) gb.data[i % n] += g.data[i];
    }
  })};
}

Var Tape::sub(Var a, Var b) {
  check_id(a, "sub");
  check_id(b, "sub");
  const Tensor& ta = val(a.id);
  const Tensor& tb = val(b.id);
  if (!ta.same_shape(tb) &&
      !(ta.ndim() == 2 && tb.ndim() == 1 && ta.shape[1] == tb.shape[0])) {
    shape_fail("sub", ta, tb);
  }
  Tensor out(ta.shape);
  const std::size_t n = tb.numel();
  for (std::size_t i = 0; i < ta.numel(); ++i) out.data[i] = ta.data[i] - tb.data[i % n];
  int ia = a.id, ib = b.id;
  return Var{push(std::move(out), {ia, ib}, "sub", [ia, ib, n](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    if (t.nodes_[ia].needs_grad) {
      Tensor& ga = t.grad_buf(ia);
      for (std::size_t i = 0; i < g.numel(); ++i) ga.data[i] += g.data[i];
    }
    if (t.nodes_[ib].needs_grad) {
      Tensor& gb = t.grad_buf(ib);
      for (std::size_t i = 0; i < g.numel(); ++i) gb.data[i % n] -= g.data[i];
    }
  })};
}

Var Tape::mul(Var a, Var b) {
  check_id(a, "mul");
  check_id(b, "mul");
  const Tensor& ta = val(a.id);
  const Tensor& tb = val(b.id);
  if (!ta.same_shape(tb) &&
      !(ta.ndim() == 2 && tb.ndim() == 1 && ta.shape[1] == tb.shape[0])) {
    shape_fail("mul", ta, tb);
  }
  Tensor out(ta.shape);
  const std::size_t n = tb.numel();
  for (std::size_t i = 0; i < ta.numel(); ++i) out.data[i] = ta.data[i] * tb.data[i % n];
  int ia = a.id, ib = b.id;
  return Var{push(std::move(out), {ia, ib}, "mul", [ia, ib, n](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& av = t.val(ia);
    const Tensor& bv = t.val(ib);
    if (t.nodes_[ia].needs_grad) {
      Tensor& ga = t.grad_buf(ia);
      for (std::size_t i = 0; i < g.numel(); ++i) ga.data[i] += g.data[i] * bv.data[i % n];
    }
    if (t.nodes_[ib].needs_grad) {
      Tensor& gb = t.grad_buf(ib);
      for (std::size_t i = 0; i < g.numel(); ++i) gb.data[i % n] += g.data[i] * av.data[i];
    }
  })};
}

Var Tape::scale(Var a, double c) {
  check_id(a, "scale");
  const Tensor& ta = val(a.id);
  Tensor out(ta.shape);
  for (std::size_t i = 0; i < ta.numel(); ++i) out.data[i] = ta.data[i] * c;
  int ia = a.id;
  return Var{push(std::move(out), {ia}, "scale", [ia, c](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    Tensor& ga = t.grad_buf(ia);
    for (std::size_t i = 0; i < g.numel(); ++i) ga.data[i] += g.data[i] * c;
  })};
}

Var Tape::add_scalar(Var a, double c) {
  check_id(a, "add_scalar");
  const Tensor& ta = val(a.id);
  Tensor out(ta.shape);
  for (std::size_t i = 0; i < ta.numel(); ++i) out.data[i] = ta.data[i] + c;
  int ia = a.id;
  return Var{push(std::move(out), {ia}, "add_scalar", [ia](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    Tensor& ga = t.grad_buf(ia);
    for (std::size_t i = 0; i < g.numel(); ++i) ga.data[i] += g.data[i];
  })};
}

Var Tape::sigmoid(Var a) {
  check_id(a, "sigmoid");
  const Tensor& ta = val(a.id);
  Tensor out(ta.shape);
  for (std::size_t i = 0; i < ta.numel(); ++i) out.data[i] = stable_sigmoid(ta.data[i]);
  int ia = a.id;
  return Var{push(std::move(out), {ia}, "sigmoid", [ia](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& y = t.nodes_[self].value;
    Tensor& ga = t.grad_buf(ia);
    for (std::size_t i = 0; i < g.numel(); ++i) {
      ga.data[i] += g.data[i] * y.data[i] * (1.0 - y.data[i]);
    }
  })};
}

Var Tape::tanh(Var a) {
  check_id(a, "tanh");
  const Tensor& ta = val(a.id);
  Tensor out(ta.shape);
  for (std::size_t i = 0; i < ta.numel(); ++i) out.data[i] = std::tanh(ta.data[i]);
  int ia = a.id;
  return Var{push(std::move(out), {ia}, "tanh", [ia](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& y = t.nodes_[self].value;
    Tensor& ga = t.grad_buf(ia);
    for (std::size_t i = 0; i < g.numel(); ++i) {
      ga.data[i] += g.data[i] * (1.0 - y.data[i] * y.data[i]);
    }
  })};
}

Var Tape::relu(Var a) {
  check_id(a, "relu");
  const Tensor& ta = val(a.id);
  Tensor out(ta.shape);
  for (std::size_t i = 0; i < ta.numel(); ++i) out.data[i] = ta.data[i] > 0.0 ? ta.data[i] : 0.0;
  int ia = a.id;
  return Var{push(std::move(out), {ia}, "relu", [ia](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& x = t.val(ia);
    Tensor& ga = t.grad_buf(ia);
    for (std::size_t i = 0; i < g.numel(); ++i) {
      if (x.data[i] > 0.0) ga.data[i] += g.data[i];
    }
  })};
}

Var Tape::log(Var a) {
  check_id(a, "log");
  const Tensor& ta = val(a.id);
  Tensor out(ta.shape);
  for (std::size_t i = 0; i < ta.numel(); ++i) out.data[i] = std::log(ta.data[i]);
  int ia = a.id;
  return Var{push(std::move(out), {ia}, "log", [ia](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& x = t.val(ia);
    Tensor& ga = t.grad_buf(ia);
    for (std::size_t i = 0; i < g.numel(); ++i) ga.data[i] += g.data[i] / x.data[i];
  })};
}

Var Tape::log_sigmoid(Var a) {
  check_id(a, "log_sigmoid");
  const Tensor& ta = val(a.id);
  Tensor out(ta.shape);
  for (std::size_t i = 0; i < ta.numel(); ++i) out.data[i] = stable_log_sigmoid(ta.data[i]);
  int ia = a.id;
  return Var{push(std::move(out), {ia}, "log_sigmoid", [ia](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& x = t.val(ia);
    Tensor& ga = t.grad_buf(ia);
    for (std::size_t i = 0; i < g.numel(); ++i) {
      ga.data[i] += g.data[i] * stable_sigmoid(-x.data[i]);
    }
  })};
}

Var Tape::softmax_rows(Var a) {
  check_id(a, "softmax");
  const Tensor& ta = val(a.id);
  if (ta.ndim() > 2 || ta.numel() == 0) {
    throw ShapeError("softmax: requires non-empty rank 1 or 2, got " + ta.shape_str());
  }
  const std::size_t rows = ta.rows(), cols = ta.cols();
  Tensor out(ta.shape);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = &ta.data[r * cols];
    double* y = &out.data[r * cols];
    double mx = x[0];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      y[j] = std::exp(x[j] - mx);
      sum += y[j];
    }
    for (std::size_t j = 0; j < cols; ++j) y[j] /= sum;
  }
  int ia = a.id;
  return Var{push(std::move(out), {ia}, "softmax", [ia, rows, cols](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& y = t.nodes_[self].value;
    Tensor& ga = t.grad_buf(ia);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* gr = &g.data[r * cols];
      const double* yr = &y.data[r * cols];
      double dot = 0.0;
      for (std::size_t j = 0; j < cols; ++j) dot += gr[j] * yr[j];
      double* gar = &ga.data[r * cols];
      for (std::size_t j = 0; j < cols; ++j) gar[j] += yr[j] * (gr[j] - dot);
    }
  })};
}

Var Tape::log_softmax_rows(Var a) {
  check_id(a, "log_softmax");
  const Tensor& ta = val(a.id);
  if (ta.ndim() > 2 || ta.numel() == 0) {
    throw ShapeError("log_softmax: requires non-empty rank 1 or 2, got " + ta.shape_str());
  }
  const std::size_t rows = ta.rows(), cols = ta.cols();
  Tensor out(ta.shape);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = &ta.data[r * cols];
    double* y = &out.data[r * cols];
    double mx = x[0];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) sum += std::exp(x[j] - mx);
    const double lse = mx + std::log(sum);
    for (std::size_t j = 0; j < cols; ++j) y[j] = x[j] - lse;
  }
  int ia = a.id;
  return Var{push(std::move(out), {ia}, "log_softmax", [ia, rows, cols](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& y = t.nodes_[self].value;
    Tensor& ga = t.grad_buf(ia);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* gr = &g.data[r * cols];
      const double* yr = &y.data[r * cols];
      double gsum = 0.0;
      for (std::size_t j = 0; j < cols; ++j) gsum += gr[j];
      double* gar = &ga.data[r * cols];
      for (std::size_t j = 0; j < cols; ++j) gar[j] += gr[j] - std::exp(yr[j]) * gsum;
    }
  })};
}

Var Tape::gather_rows(Var table, std::vector<int> idx) {
  check_id(table, "gather");
  const Tensor& tt = val(table.id);
  if (tt.ndim() != 2) {
    throw ShapeError("gather: table must be rank 2, got " + tt.shape_str());
  }
  const std::size_t rows = tt.shape[0], cols = tt.shape[1];
  for (int i : idx) {
    if (i < 0 || static_cast<std::size_t>(i) >= rows) {
      throw ShapeError("gather: index " + std::to_string(i) + " out of range for table " +
                       tt.shape_str());
    }
  }
  Tensor out({idx.size(), cols});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const double* src = &tt.data[static_cast<std::size_t>(idx[r]) * cols];
    double* dst = &out.data[r * cols];
    for (std::size_t j = 0; j < cols; ++j) dst[j] = src[j];
  }
  int it = table.id;
  return Var{push(std::move(out), {it}, "gather",
                  [it, cols, idx = std::move(idx)](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    Tensor& gt = t.grad_buf(it);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const double* src = &g.data[r * cols];
      double* dst = &gt.data[static_cast<std::size_t>(idx[r]) * cols];
      for (std::size_t j = 0; j < cols; ++j) dst[j] += src[j];
    }
  })};
}

Var Tape::slice_rows(Var a, std::size_t begin, std::size_t count) {
  check_id(a, "slice_rows");
  const Tensor& ta = val(a.id);
  if (ta.ndim() != 2 || begin + count > ta.shape[0]) {
    throw ShapeError("slice_rows: range [" + std::to_string(begin) + "," +
                     std::to_string(begin + count) + ") invalid for " + ta.shape_str());
  }
  const std::size_t cols = ta.shape[1];
  Tensor out({count, cols});
  for (std::size_t i = 0; i < count * cols; ++i) out.data[i] = ta.data[begin * cols + i];
  int ia = a.id;
  return Var{push(std::move(out), {ia}, "slice_rows", [ia, begin, cols](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    Tensor& ga = t.grad_buf(ia);
    for (std::size_t i = 0; i < g.numel(); ++i) ga.data[begin * cols + i] += g.data[i];
  })};
}

Var Tape::stack_rows(const std::vector<Var>& rows) {
  if (rows.empty()) throw ShapeError("stack_rows: no rows");
  std::vector<int> parents;
  parents.reserve(rows.size());
  for (Var r : rows) {
    check_id(r, "stack_rows");
    parents.push_back(r.id);
  }
  const std::size_t cols = val(rows[0].id).cols();
  Tensor out({rows.size(), cols});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Tensor& row = val(rows[i].id);
    if (row.numel() != cols || row.rows() != 1) {
      throw ShapeError("stack_rows: row " + std::to_string(i) + " has shape " +
                       row.shape_str() + ", expected a single row of " + std::to_string(cols));
    }
    for (std::size_t j = 0; j < cols; ++j) out.data[i * cols + j] = row.data[j];
  }
  std::vector<int> ids = parents;
  return Var{push(std::move(out), std::move(parents), "stack_rows",
                  [ids = std::move(ids), cols](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (!t.nodes_[ids[i]].needs_grad) continue;
      Tensor& gr = t.grad_buf(ids[i]);
      for (std::size_t j = 0; j < cols; ++j) gr.data[j] += g.data[i * cols + j];
    }
  })};
}

Var Tape::sum_all(Var a) {
  check_id(a, "sum");
  const Tensor& ta = val(a.id);
  double s = 0.0;
  for (double v : ta.data) s += v;
  int ia = a.id;
  return Var{push(Tensor::scalar(s), {ia}, "sum", [ia](Tape& t, int self) {
    const double g = t.nodes_[self].grad.data[0];
    Tensor& ga = t.grad_buf(ia);
    for (std::size_t i = 0; i < ga.numel(); ++i) ga.data[i] += g;
  })};
}

Var Tape::mean_all(Var a) {
  check_id(a, "mean");
  const Tensor& ta = val(a.id);
  if (ta.numel() == 0) throw ShapeError("mean: empty tensor");
  double s = 0.0;
  for (double v : ta.data) s += v;
  const double inv = 1.0 / static_cast<double>(ta.numel());
  int ia = a.id;
  return Var{push(Tensor::scalar(s * inv), {ia}, "mean", [ia, inv](Tape& t, int self) {
    const double g = t.nodes_[self].grad.data[0] * inv;
    Tensor& ga = t.grad_buf(ia);
    for (std::size_t i = 0; i < ga.numel(); ++i) ga.data[i] += g;
  })};
}

Var Tape::sum_last(Var a) {
  check_id(a, "sum_last");
  const Tensor& ta = val(a.id);
  if (ta.ndim() == 1) return sum_all(a);
  if (ta.ndim() != 2) {
    throw ShapeError("sum_last: requires rank 1 or 2, got " + ta.shape_str());
  }
  const std::size_t rows = ta.shape[0], cols = ta.shape[1];
  Tensor out({rows});
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) s += ta.data[r * cols + j];
    out.data[r] = s;
  }
  int ia = a.id;
  return Var{push(std::move(out), {ia}, "sum_last", [ia, rows, cols](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    Tensor& ga = t.grad_buf(ia);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < cols; ++j) ga.data[r * cols + j] += g.data[r];
    }
  })};
}

Var Tape::causal_mask(Var scores) {
  check_id(scores, "causal_mask");
  const Tensor& ts = val(scores.id);
  if (ts.ndim() != 2 || ts.shape[0] != ts.shape[1]) {
    throw ShapeError("causal_mask: requires square rank-2 scores, got " + ts.shape_str());
  }
  const std::size_t n = ts.shape[0];
  Tensor out = ts;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) out.data[i * n + j] -= 1e9;
  }
  int ia = scores.id;
  return Var{push(std::move(out), {ia}, "causal_mask", [ia](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    Tensor& ga = t.grad_buf(ia);
    for (std::size_t i = 0; i < g.numel(); ++i) ga.data[i] += g.data[i];
  })};
}

void Tape::backward(Var scalar_out) {
  check_id(scalar_out, "backward");
  if (!recording_) throw Error("backward: tape is not recording");
  const std::size_t root = static_cast<std::size_t>(scalar_out.id);
  if (nodes_[root].value.numel() != 1) {
    throw ShapeError("backward: output must be scalar, got " + nodes_[root].value.shape_str());
  }
  for (Node& n : nodes_) {
    if (n.grad.numel() != 0) std::fill(n.grad.data.begin(), n.grad.data.end(), 0.0);
  }
  grad_buf(scalar_out.id).data[0] = 1.0;
  // Creation order is a topological order, so one reverse sweep visits each
  // node exactly once with its output gradient complete.
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.back || !n.needs_grad) continue;
    if (n.grad.numel() == 0) continue;  // not reachable from the output
    n.back(*this, static_cast<int>(i));
  }
}

Var scaled_dot_attention(Tape& tape, Var q, Var k, Var v) {
  const std::size_t dim = tape.value(q).cols();
  Var scores = tape.scale(tape.matmul(q, tape.transpose(k)), 1.0 / std::sqrt(static_cast<double>(dim)));
  Var probs = tape.softmax_rows(tape.causal_mask(scores));
  return tape.matmul(probs, v);
}

}  // namespace l2aug::ad
