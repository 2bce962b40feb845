#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fairrec/common.hpp"
#include "fairrec/tensor.hpp"

namespace fairrec {

// ============================================================================
// Raw matmul kernels (row-major, accumulate into C)
// ============================================================================

namespace detail {

// C[m x n] += A[m x k] * B[k x n]
inline void mm_nn_acc(const double* a, const double* b, double* c,
                      std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m x n] += A[m x k] * B^T, where B is [n x k]
inline void mm_nt_acc(const double* a, const double* b, double* c,
                      std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      crow[j] += s;
    }
  }
}

// C[k x n] += A^T * B, where A is [m x k], B is [m x n]
inline void mm_tn_acc(const double* a, const double* b, double* c,
                      std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      double av = arow[p];
      if (av == 0.0) continue;
      double* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

inline double stable_sigmoid(double x) {
  if (x >= 0.0) {
    double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace detail

// ============================================================================
// Operator kinds
// ============================================================================

enum class OpKind {
  Matmul,
  Add,
  Scale,
  EmbeddingLookup,
  Softmax,
  Sigmoid,
  Relu,
  Tanh,
  Abs,
  Concat,
  Transpose,
  ReduceMean,
  CosineSimilarity,
  CrossEntropy,
};

inline const char* op_kind_name(OpKind k) {
  switch (k) {
    case OpKind::Matmul: return "matmul";
    case OpKind::Add: return "add";
    case OpKind::Scale: return "scale";
    case OpKind::EmbeddingLookup: return "embedding_lookup";
    case OpKind::Softmax: return "softmax";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Relu: return "relu";
    case OpKind::Tanh: return "tanh";
    case OpKind::Abs: return "abs";
    case OpKind::Concat: return "concat";
    case OpKind::Transpose: return "transpose";
    case OpKind::ReduceMean: return "reduce_mean";
    case OpKind::CosineSimilarity: return "cosine_similarity";
    case OpKind::CrossEntropy: return "cross_entropy";
  }
  return "?";
}

inline std::vector<OpKind> all_op_kinds() {
  return {OpKind::Matmul,          OpKind::Add,       OpKind::Scale,
          OpKind::EmbeddingLookup, OpKind::Softmax,   OpKind::Sigmoid,
          OpKind::Relu,            OpKind::Tanh,      OpKind::Abs,
          OpKind::Concat,          OpKind::Transpose, OpKind::ReduceMean,
          OpKind::CosineSimilarity, OpKind::CrossEntropy};
}

// Metadata for apply(); only the fields an operator reads are consulted.
struct OpArgs {
  double scale_k = 1.0;
  std::vector<int> indices;           // embedding_lookup
  std::optional<int> pad_index;       // embedding_lookup: zero row, no gradient
  std::vector<std::uint8_t> mask;     // softmax: key positions to include
  int axis = 0;                       // concat
  std::vector<int> labels;            // cross_entropy
};

// ============================================================================
// Define-by-run computation graph
// ============================================================================

struct NodeRef {
  int id = -1;
};

using GradientMap = std::map<std::string, Tensor>;

// Tape of operations built per step and discarded. Nodes are appended in
// execution order, which is already a topological order; backward walks the
// tape in reverse. Single-threaded by design.
class Graph {
 public:
  struct Node {
    const char* kind = "";
    std::vector<int> inputs;
    Tensor value;
    Tensor grad;  // empty until backward touches this node
    bool requires_grad = false;
    Tensor* bound = nullptr;  // leaf: external parameter storage
    std::string name;         // leaf: parameter name
    std::function<void(Graph&, int)> forward;
    std::function<void(Graph&, int)> backward;
  };

  // --- graph construction -------------------------------------------------

  NodeRef constant(Tensor t) {
    Node n;
    n.kind = "constant";
    n.value = std::move(t);
    return push(std::move(n));
  }

  // Leaf bound to external storage; re-read on every recompute(). Binding the
  // same storage twice returns the original node so gradients accumulate in
  // one slot.
  NodeRef param(const std::string& name, Tensor& storage, bool trainable) {
    auto it = leaf_by_ptr_.find(&storage);
    if (it != leaf_by_ptr_.end()) {
      if (nodes_[it->second].requires_grad != trainable)
        throw ContractError("Graph::param: '" + name +
                            "' rebound with a different trainable flag");
      return NodeRef{it->second};
    }
    Node n;
    n.kind = "leaf";
    n.value = storage;
    n.value.requires_grad = trainable;
    n.requires_grad = trainable;
    n.bound = &storage;
    n.name = name;
    NodeRef r = push(std::move(n));
    leaf_by_ptr_[&storage] = r.id;
    if (trainable) trainable_leaves_.push_back(r.id);
    return r;
  }

  // --- operators ----------------------------------------------------------

  NodeRef matmul(NodeRef a, NodeRef b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (ta.rank() != 2 || tb.rank() != 2 || ta.shape[1] != tb.shape[0])
      throw ShapeError(std::string("matmul: incompatible shapes ") +
                       shape_str(ta.shape) + " vs " + shape_str(tb.shape));
    std::size_t m = ta.shape[0], k = ta.shape[1], n = tb.shape[1];
    return make_node(
        "matmul", {a, b}, Shape{m, n},
        [m, k, n](Graph& g, int self) {
          Node& nd = g.node(self);
          const Tensor& A = g.node(nd.inputs[0]).value;
          const Tensor& B = g.node(nd.inputs[1]).value;
          nd.value.fill(0.0);
          detail::mm_nn_acc(A.values.data(), B.values.data(),
                            nd.value.values.data(), m, k, n);
        },
        [m, k, n](Graph& g, int self) {
          Node& nd = g.node(self);
          const Tensor& A = g.node(nd.inputs[0]).value;
          const Tensor& B = g.node(nd.inputs[1]).value;
          if (Tensor* ga = g.maybe_grad(nd.inputs[0]))
            detail::mm_nt_acc(nd.grad.values.data(), B.values.data(),
                              ga->values.data(), m, n, k);
          if (Tensor* gb = g.maybe_grad(nd.inputs[1]))
            detail::mm_tn_acc(A.values.data(), nd.grad.values.data(),
                              gb->values.data(), m, k, n);
        });
  }

  // Elementwise same-shape add, or matrix + row vector broadcast over rows.
  NodeRef add(NodeRef a, NodeRef b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    bool broadcast = ta.rank() == 2 && tb.rank() == 1 && tb.shape[0] == ta.shape[1];
    if (!broadcast && !ta.same_shape(tb))
      throw ShapeError(std::string("add: incompatible shapes ") +
                       shape_str(ta.shape) + " vs " + shape_str(tb.shape));
    return make_node(
        "add", {a, b}, ta.shape,
        [broadcast](Graph& g, int self) {
          Node& nd = g.node(self);
          const Tensor& A = g.node(nd.inputs[0]).value;
          const Tensor& B = g.node(nd.inputs[1]).value;
          if (!broadcast) {
            for (std::size_t i = 0; i < A.numel(); ++i)
              nd.value.values[i] = A.values[i] + B.values[i];
          } else {
            std::size_t rows = A.shape[0], cols = A.shape[1];
            for (std::size_t r = 0; r < rows; ++r)
              for (std::size_t c = 0; c < cols; ++c)
                nd.value.values[r * cols + c] = A.values[r * cols + c] + B.values[c];
          }
        },
        [broadcast](Graph& g, int self) {
          Node& nd = g.node(self);
          if (Tensor* ga = g.maybe_grad(nd.inputs[0]))
            for (std::size_t i = 0; i < nd.grad.numel(); ++i)
              ga->values[i] += nd.grad.values[i];
          if (Tensor* gb = g.maybe_grad(nd.inputs[1])) {
            if (!broadcast) {
              for (std::size_t i = 0; i < nd.grad.numel(); ++i)
                gb->values[i] += nd.grad.values[i];
            } else {
              std::size_t rows = nd.grad.shape[0], cols = nd.grad.shape[1];
              for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < cols; ++c)
                  gb->values[c] += nd.grad.values[r * cols + c];
            }
          }
        });
  }

  NodeRef scale(NodeRef a, double k) {
    const Tensor& ta = value(a);
    return make_node(
        "scale", {a}, ta.shape,
        [k](Graph& g, int self) {
          Node& nd = g.node(self);
          const Tensor& A = g.node(nd.inputs[0]).value;
          for (std::size_t i = 0; i < A.numel(); ++i)
            nd.value.values[i] = k * A.values[i];
        },
        [k](Graph& g, int self) {
          Node& nd = g.node(self);
          if (Tensor* ga = g.maybe_grad(nd.inputs[0]))
            for (std::size_t i = 0; i < nd.grad.numel(); ++i)
              ga->values[i] += k * nd.grad.values[i];
        });
  }

  // Gathers rows of a [V x d] table. When pad_index is set, that index yields
  // a zero row and receives no gradient (reserved padding row).
  NodeRef embedding_lookup(NodeRef table, std::vector<int> ids,
                           std::optional<int> pad_index = std::nullopt) {
    const Tensor& tt = value(table);
    if (tt.rank() != 2)
      throw ShapeError("embedding_lookup: table must be rank 2, got " +
                       shape_str(tt.shape));
    if (ids.empty()) throw ContractError("embedding_lookup: empty index list");
    std::size_t v = tt.shape[0], d = tt.shape[1];
    for (int id : ids)
      if (id < 0 || static_cast<std::size_t>(id) >= v)
        throw IndexError("embedding_lookup: index " + std::to_string(id) +
                         " out of range for table with " + std::to_string(v) +
                         " rows");
    std::size_t L = ids.size();
    return make_node(
        "embedding_lookup", {table}, Shape{L, d},
        [ids, pad_index, d](Graph& g, int self) {
          Node& nd = g.node(self);
          const Tensor& T = g.node(nd.inputs[0]).value;
          for (std::size_t i = 0; i < ids.size(); ++i) {
            double* out = nd.value.values.data() + i * d;
            if (pad_index && ids[i] == *pad_index) {
              std::fill(out, out + d, 0.0);
            } else {
              const double* src = T.values.data() + static_cast<std::size_t>(ids[i]) * d;
              std::copy(src, src + d, out);
            }
          }
        },
        [ids, pad_index, d](Graph& g, int self) {
          Node& nd = g.node(self);
          Tensor* gt = g.maybe_grad(nd.inputs[0]);
          if (!gt) return;
          for (std::size_t i = 0; i < ids.size(); ++i) {
            if (pad_index && ids[i] == *pad_index) continue;
            double* dst = gt->values.data() + static_cast<std::size_t>(ids[i]) * d;
            const double* src = nd.grad.values.data() + i * d;
            for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
          }
        });
  }

  NodeRef softmax(NodeRef a) {
    const Tensor& ta = value(a);
    return softmax_masked(a, std::vector<std::uint8_t>(ta.cols(), 1));
  }

  // Row-wise softmax over the last dimension, restricted to positions where
  // mask is nonzero; excluded positions get exactly 0.
  NodeRef softmax_masked(NodeRef a, std::vector<std::uint8_t> mask) {
    const Tensor& ta = value(a);
    if (ta.rank() < 1 || ta.rank() > 2)
      throw ShapeError("softmax: expects rank 1 or 2, got " + shape_str(ta.shape));
    std::size_t cols = ta.cols();
    if (mask.size() != cols)
      throw ShapeError("softmax: mask length " + std::to_string(mask.size()) +
                       " does not match width " + std::to_string(cols));
    if (std::all_of(mask.begin(), mask.end(), [](std::uint8_t m) { return m == 0; }))
      throw ContractError("softmax: mask excludes every position");
    std::size_t rows = ta.rows();
    return make_node(
        "softmax", {a}, ta.shape,
        [mask, rows, cols](Graph& g, int self) {
          Node& nd = g.node(self);
          const Tensor& A = g.node(nd.inputs[0]).value;
          for (std::size_t r = 0; r < rows; ++r) {
            const double* in = A.values.data() + r * cols;
            double* out = nd.value.values.data() + r * cols;
            double mx = -HUGE_VAL;
            for (std::size_t c = 0; c < cols; ++c)
              if (mask[c] && in[c] > mx) mx = in[c];
            double denom = 0.0;
            for (std::size_t c = 0; c < cols; ++c) {
              if (mask[c]) {
                out[c] = std::exp(in[c] - mx);
                denom += out[c];
              } else {
                out[c] = 0.0;
              }
            }
            for (std::size_t c = 0; c < cols; ++c)
              if (mask[c]) out[c] /= denom;
          }
        },
        [mask, rows, cols](Graph& g, int self) {
          Node& nd = g.node(self);
          Tensor* ga = g.maybe_grad(nd.inputs[0]);
          if (!ga) return;
          for (std::size_t r = 0; r < rows; ++r) {
            const double* s = nd.value.values.data() + r * cols;
            const double* up = nd.grad.values.data() + r * cols;
            double* out = ga->values.data() + r * cols;
            double inner = 0.0;
            for (std::size_t c = 0; c < cols; ++c)
              if (mask[c]) inner += up[c] * s[c];
            for (std::size_t c = 0; c < cols; ++c)
              if (mask[c]) out[c] += s[c] * (up[c] - inner);
          }
        });
  }

  NodeRef sigmoid(NodeRef a) { return unary("sigmoid", a); }
  NodeRef relu(NodeRef a) { return unary("relu", a); }
  NodeRef tanh(NodeRef a) { return unary("tanh", a); }
  NodeRef abs(NodeRef a) { return unary("abs", a); }

  NodeRef concat(const std::vector<NodeRef>& parts, int axis) {
    if (parts.empty()) throw ContractError("concat: no inputs");
    if (axis != 0 && axis != 1) throw ContractError("concat: axis must be 0 or 1");
    const Tensor& first = value(parts[0]);
    std::size_t rank = first.rank();
    for (std::size_t i = 1; i < parts.size(); ++i) {
      const Tensor& t = value(parts[i]);
      if (t.rank() != rank)
        throw ShapeError(std::string("concat: mixed ranks ") +
                         shape_str(first.shape) + " vs " + shape_str(t.shape));
    }
    // Rank-1 tensors act as single rows: axis 1 extends the row (staying
    // rank 1), axis 0 stacks rows into a matrix.
    Shape out_shape;
    if (axis == 0) {
      std::size_t cols = first.cols();
      std::size_t rows = 0;
      for (NodeRef p : parts) {
        const Tensor& t = value(p);
        if (t.cols() != cols)
          throw ShapeError(std::string("concat: column mismatch ") +
                           shape_str(first.shape) + " vs " + shape_str(t.shape));
        rows += t.rows();
      }
      out_shape = {rows, cols};
    } else if (rank == 1) {
      std::size_t len = 0;
      for (NodeRef p : parts) len += value(p).numel();
      out_shape = {len};
    } else {
      std::size_t rows = first.shape[0];
      std::size_t cols = 0;
      for (NodeRef p : parts) {
        const Tensor& t = value(p);
        if (t.shape[0] != rows)
          throw ShapeError(std::string("concat: row mismatch ") +
                           shape_str(first.shape) + " vs " + shape_str(t.shape));
        cols += t.shape[1];
      }
      out_shape = {rows, cols};
    }
    std::vector<int> ids(parts.size());
    for (std::size_t i = 0; i < parts.size(); ++i) ids[i] = parts[i].id;
    // Row stacking and rank-1 widening both copy inputs back to back.
    bool row_axis = (rank == 1) || (axis == 0);
    return make_node(
        "concat", parts, out_shape,
        [ids, row_axis](Graph& g, int self) {
          Node& nd = g.node(self);
          if (row_axis) {
            std::size_t off = 0;
            for (int in : ids) {
              const Tensor& t = g.node(in).value;
              std::copy(t.values.begin(), t.values.end(), nd.value.values.begin() + off);
              off += t.numel();
            }
          } else {
            std::size_t rows = nd.value.shape[0], out_cols = nd.value.shape[1];
            std::size_t coff = 0;
            for (int in : ids) {
              const Tensor& t = g.node(in).value;
              std::size_t c = t.shape[1];
              for (std::size_t r = 0; r < rows; ++r)
                std::copy(t.values.begin() + r * c, t.values.begin() + (r + 1) * c,
                          nd.value.values.begin() + r * out_cols + coff);
              coff += c;
            }
          }
        },
        [ids, row_axis](Graph& g, int self) {
          Node& nd = g.node(self);
          if (row_axis) {
            std::size_t off = 0;
            for (int in : ids) {
              const Tensor& t = g.node(in).value;
              if (Tensor* gi = g.maybe_grad(in))
                for (std::size_t i = 0; i < t.numel(); ++i)
                  gi->values[i] += nd.grad.values[off + i];
              off += t.numel();
            }
          } else {
            std::size_t rows = nd.grad.shape[0], out_cols = nd.grad.shape[1];
            std::size_t coff = 0;
            for (int in : ids) {
              const Tensor& t = g.node(in).value;
              std::size_t c = t.shape[1];
              if (Tensor* gi = g.maybe_grad(in))
                for (std::size_t r = 0; r < rows; ++r)
                  for (std::size_t j = 0; j < c; ++j)
                    gi->values[r * c + j] += nd.grad.values[r * out_cols + coff + j];
              coff += c;
            }
          }
        });
  }

  NodeRef transpose(NodeRef a) {
    const Tensor& ta = value(a);
    if (ta.rank() != 2)
      throw ShapeError("transpose: expects rank 2, got " + shape_str(ta.shape));
    std::size_t m = ta.shape[0], n = ta.shape[1];
    return make_node(
        "transpose", {a}, Shape{n, m},
        [m, n](Graph& g, int self) {
          Node& nd = g.node(self);
          const Tensor& A = g.node(nd.inputs[0]).value;
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j)
              nd.value.values[j * m + i] = A.values[i * n + j];
        },
        [m, n](Graph& g, int self) {
          Node& nd = g.node(self);
          if (Tensor* ga = g.maybe_grad(nd.inputs[0]))
            for (std::size_t i = 0; i < m; ++i)
              for (std::size_t j = 0; j < n; ++j)
                ga->values[i * n + j] += nd.grad.values[j * m + i];
        });
  }

  // Mean of all entries -> scalar.
  NodeRef reduce_mean(NodeRef a) {
    const Tensor& ta = value(a);
    std::size_t n = ta.numel();
    return make_node(
        "reduce_mean", {a}, Shape{1},
        [n](Graph& g, int self) {
          Node& nd = g.node(self);
          const Tensor& A = g.node(nd.inputs[0]).value;
          double s = 0.0;
          for (double v : A.values) s += v;
          nd.value.values[0] = s / static_cast<double>(n);
        },
        [n](Graph& g, int self) {
          Node& nd = g.node(self);
          if (Tensor* ga = g.maybe_grad(nd.inputs[0])) {
            double u = nd.grad.values[0] / static_cast<double>(n);
            for (double& v : ga->values) v += u;
          }
        });
  }

  // cos(a, b) = a.b / sqrt(|a|^2 * |b|^2). The single sqrt keeps exactly
  // parallel integer-valued pairs at exactly 1.
  NodeRef cosine_similarity(NodeRef a, NodeRef b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (ta.numel() != tb.numel())
      throw ShapeError(std::string("cosine_similarity: size mismatch ") +
                       shape_str(ta.shape) + " vs " + shape_str(tb.shape));
    return make_node(
        "cosine_similarity", {a, b}, Shape{1},
        [](Graph& g, int self) {
          Node& nd = g.node(self);
          const Tensor& A = g.node(nd.inputs[0]).value;
          const Tensor& B = g.node(nd.inputs[1]).value;
          double qa = l2_norm_sq(A.values), qb = l2_norm_sq(B.values);
          double denom = std::sqrt(qa * qb);
          if (denom < 1e-150)
            throw ContractError("cosine_similarity: zero-norm input");
          nd.value.values[0] = dot(A.values, B.values) / denom;
        },
        [](Graph& g, int self) {
          Node& nd = g.node(self);
          const Tensor& A = g.node(nd.inputs[0]).value;
          const Tensor& B = g.node(nd.inputs[1]).value;
          double qa = l2_norm_sq(A.values), qb = l2_norm_sq(B.values);
          double denom = std::sqrt(qa * qb);
          double c = dot(A.values, B.values) / denom;
          double up = nd.grad.values[0];
          if (Tensor* ga = g.maybe_grad(nd.inputs[0]))
            for (std::size_t i = 0; i < A.numel(); ++i)
              ga->values[i] += up * (B.values[i] / denom - c * A.values[i] / qa);
          if (Tensor* gb = g.maybe_grad(nd.inputs[1]))
            for (std::size_t i = 0; i < B.numel(); ++i)
              gb->values[i] += up * (A.values[i] / denom - c * B.values[i] / qb);
        });
  }

  // Softmax cross-entropy fused over logits [B x C]; returns the batch mean.
  NodeRef cross_entropy(NodeRef logits, std::vector<int> labels) {
    const Tensor& tl = value(logits);
    if (tl.rank() != 2)
      throw ShapeError("cross_entropy: logits must be rank 2, got " +
                       shape_str(tl.shape));
    std::size_t b = tl.shape[0], c = tl.shape[1];
    if (labels.size() != b)
      throw ShapeError("cross_entropy: " + std::to_string(labels.size()) +
                       " labels for " + std::to_string(b) + " rows");
    for (int y : labels)
      if (y < 0 || static_cast<std::size_t>(y) >= c)
        throw IndexError("cross_entropy: label " + std::to_string(y) +
                         " out of range for " + std::to_string(c) + " classes");
    return make_node(
        "cross_entropy", {logits}, Shape{1},
        [labels, b, c](Graph& g, int self) {
          Node& nd = g.node(self);
          const Tensor& L = g.node(nd.inputs[0]).value;
          double total = 0.0;
          for (std::size_t r = 0; r < b; ++r) {
            const double* row = L.values.data() + r * c;
            std::size_t am = 0;
            for (std::size_t j = 1; j < c; ++j)
              if (row[j] > row[am]) am = j;
            double mx = row[am];
            double rest = 0.0;
            for (std::size_t j = 0; j < c; ++j)
              if (j != am) rest += std::exp(row[j] - mx);
            // log-sum-exp = mx + log1p(sum of non-argmax exponentials), so a
            // dominant positive score yields a loss that underflows gracefully.
            total += mx + std::log1p(rest) - row[labels[r]];
          }
          nd.value.values[0] = total / static_cast<double>(b);
        },
        [labels, b, c](Graph& g, int self) {
          Node& nd = g.node(self);
          Tensor* gl = g.maybe_grad(nd.inputs[0]);
          if (!gl) return;
          const Tensor& L = g.node(nd.inputs[0]).value;
          double up = nd.grad.values[0] / static_cast<double>(b);
          for (std::size_t r = 0; r < b; ++r) {
            const double* row = L.values.data() + r * c;
            double* grow = gl->values.data() + r * c;
            double mx = row[0];
            for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
            double denom = 0.0;
            for (std::size_t j = 0; j < c; ++j) denom += std::exp(row[j] - mx);
            for (std::size_t j = 0; j < c; ++j) {
              double p = std::exp(row[j] - mx) / denom;
              grow[j] += up * (p - (static_cast<std::size_t>(labels[r]) == j ? 1.0 : 0.0));
            }
          }
        });
  }

  // Generic dispatcher used by property tests to drive every operator
  // through one entry point.
  NodeRef apply(OpKind kind, const std::vector<NodeRef>& in, const OpArgs& args = {}) {
    switch (kind) {
      case OpKind::Matmul: need(in, 2, kind); return matmul(in[0], in[1]);
      case OpKind::Add: need(in, 2, kind); return add(in[0], in[1]);
      case OpKind::Scale: need(in, 1, kind); return scale(in[0], args.scale_k);
      case OpKind::EmbeddingLookup:
        need(in, 1, kind);
        return embedding_lookup(in[0], args.indices, args.pad_index);
      case OpKind::Softmax:
        need(in, 1, kind);
        return args.mask.empty() ? softmax(in[0]) : softmax_masked(in[0], args.mask);
      case OpKind::Sigmoid: need(in, 1, kind); return sigmoid(in[0]);
      case OpKind::Relu: need(in, 1, kind); return relu(in[0]);
      case OpKind::Tanh: need(in, 1, kind); return tanh(in[0]);
      case OpKind::Abs: need(in, 1, kind); return abs(in[0]);
      case OpKind::Concat: return concat(in, args.axis);
      case OpKind::Transpose: need(in, 1, kind); return transpose(in[0]);
      case OpKind::ReduceMean: need(in, 1, kind); return reduce_mean(in[0]);
      case OpKind::CosineSimilarity: need(in, 2, kind); return cosine_similarity(in[0], in[1]);
      case OpKind::CrossEntropy: need(in, 1, kind); return cross_entropy(in[0], args.labels);
    }
    throw ContractError("apply: unknown operator kind");
  }

  // Escape hatch for composing custom nodes (tests use it to exercise the
  // checker against a deliberately wrong backward rule).
  NodeRef make_node(const char* kind, const std::vector<NodeRef>& inputs,
                    Shape out_shape, std::function<void(Graph&, int)> forward,
                    std::function<void(Graph&, int)> backward) {
    Node n;
    n.kind = kind;
    n.inputs.reserve(inputs.size());
    for (NodeRef r : inputs) {
      check_ref(r);
      n.inputs.push_back(r.id);
      n.requires_grad = n.requires_grad || nodes_[r.id].requires_grad;
    }
    n.value = Tensor(std::move(out_shape));
    n.forward = std::move(forward);
    n.backward = std::move(backward);
    NodeRef ref = push(std::move(n));
    Node& stored = nodes_[ref.id];
    stored.forward(*this, ref.id);
#ifndef NDEBUG
    if (!stored.value.all_finite())
      throw NumericError(std::string(stored.kind) + ": non-finite forward value");
#endif
    return ref;
  }

  // --- execution ----------------------------------------------------------

  // Re-runs every forward in tape order; leaves re-read their bound storage.
  void recompute() {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      Node& n = nodes_[i];
      if (n.bound) {
        n.value.values = n.bound->values;
      } else if (n.forward) {
        n.forward(*this, static_cast<int>(i));
      }
#ifndef NDEBUG
      if (!n.value.all_finite())
        throw NumericError(std::string(n.kind) + ": non-finite forward value");
#endif
    }
  }

  // Reverse-mode sweep from a scalar root. Returns gradients for every
  // trainable leaf; leaves the root does not reach get zeros.
  GradientMap backward(NodeRef root) {
    check_ref(root);
    if (nodes_[root.id].value.numel() != 1)
      throw ContractError(std::string("backward: root must be scalar, has shape ") +
                          shape_str(nodes_[root.id].value.shape));
    for (Node& n : nodes_) n.grad = Tensor();
    std::vector<char> reach(nodes_.size(), 0);
    if (nodes_[root.id].requires_grad) {
      // Mark the grad-requiring cone above the root.
      std::vector<int> stack{root.id};
      reach[root.id] = 1;
      while (!stack.empty()) {
        int id = stack.back();
        stack.pop_back();
        for (int in : nodes_[id].inputs) {
          if (!reach[in] && nodes_[in].requires_grad) {
            reach[in] = 1;
            stack.push_back(in);
          }
        }
      }
      for (std::size_t i = 0; i < nodes_.size(); ++i)
        if (reach[i]) nodes_[i].grad = Tensor::zeros(nodes_[i].value.shape);
      nodes_[root.id].grad.values[0] = 1.0;
      for (int i = root.id; i >= 0; --i)
        if (reach[i] && nodes_[i].backward) nodes_[i].backward(*this, i);
    }
    GradientMap out;
    for (int id : trainable_leaves_) {
      const Node& n = nodes_[id];
      out[n.name] = reach[id] ? n.grad : Tensor::zeros(n.value.shape);
    }
    return out;
  }

  // --- access -------------------------------------------------------------

  const Tensor& value(NodeRef r) const {
    check_ref(r);
    return nodes_[r.id].value;
  }

  const Tensor& grad(NodeRef r) const {
    check_ref(r);
    if (nodes_[r.id].grad.values.empty())
      throw ContractError("grad: node has no gradient (run backward first)");
    return nodes_[r.id].grad;
  }

  Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }

  // Gradient slot of a node, or null when the node carries no gradient.
  Tensor* maybe_grad(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    return n.grad.values.empty() ? nullptr : &n.grad;
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  enum UnaryCode { kSigmoid, kRelu, kTanh, kAbs };

  NodeRef unary(const char* kind, NodeRef a) {
    const Tensor& ta = value(a);
    UnaryCode code = kind[0] == 's' ? kSigmoid
                     : kind[0] == 'r' ? kRelu
                     : kind[0] == 't' ? kTanh
                                      : kAbs;
    auto fwd1 = [code](Graph& g, int self) {
      Node& nd = g.node(self);
      const Tensor& A = g.node(nd.inputs[0]).value;
      for (std::size_t i = 0; i < A.numel(); ++i) {
        double x = A.values[i];
        double y;
        switch (code) {
          case kSigmoid: y = detail::stable_sigmoid(x); break;
          case kRelu: y = x > 0.0 ? x : 0.0; break;
          case kTanh: y = std::tanh(x); break;
          default: y = std::fabs(x); break;
        }
        nd.value.values[i] = y;
      }
    };
    auto bwd1 = [code](Graph& g, int self) {
      Node& nd = g.node(self);
      Tensor* ga = g.maybe_grad(nd.inputs[0]);
      if (!ga) return;
      const Tensor& A = g.node(nd.inputs[0]).value;
      for (std::size_t i = 0; i < A.numel(); ++i) {
        double x = A.values[i];
        double d;
        switch (code) {
          case kSigmoid: {
            double s = detail::stable_sigmoid(x);
            d = s * (1.0 - s);
            break;
          }
          case kRelu: d = x > 0.0 ? 1.0 : 0.0; break;
          case kTanh: {
            double t = std::tanh(x);
            d = 1.0 - t * t;
            break;
          }
          default: d = x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); break;
        }
        ga->values[i] += d * nd.grad.values[i];
      }
    };
    return make_node(kind, {a}, ta.shape, fwd1, bwd1);
  }

  void need(const std::vector<NodeRef>& in, std::size_t n, OpKind kind) const {
    if (in.size() != n)
      throw ContractError(std::string(op_kind_name(kind)) + ": expects " +
                          std::to_string(n) + " inputs, got " +
                          std::to_string(in.size()));
  }

  void check_ref(NodeRef r) const {
    if (r.id < 0 || static_cast<std::size_t>(r.id) >= nodes_.size())
      throw ContractError("invalid node reference");
  }

  NodeRef push(Node n) {
    nodes_.push_back(std::move(n));
    return NodeRef{static_cast<int>(nodes_.size()) - 1};
  }

  // Deque keeps references from value() and node() stable as the graph grows.
  std::deque<Node> nodes_;
  std::map<const Tensor*, int> leaf_by_ptr_;
  std::vector<int> trainable_leaves_;
};

// ============================================================================
// Gradient checking
// ============================================================================

// Central finite differences against the analytic gradient of `leaf`, which
// must be a parameter-bound node. Returns the max relative error over leaf
// entries: |a - f| / max(|a|, |f|, 1e-8).
inline double finite_difference_check(Graph& g, NodeRef root, NodeRef leaf,
                                      double step = 1e-5) {
  Tensor* storage = g.node(leaf.id).bound;
  if (!storage)
    throw ContractError("finite_difference_check: leaf is not parameter-bound");
  g.recompute();
  if (!g.value(root).all_finite())
    throw NumericError("finite_difference_check: non-finite forward value");
  g.backward(root);
  Tensor analytic = g.node(leaf.id).grad.values.empty()
                        ? Tensor::zeros(storage->shape)
                        : g.node(leaf.id).grad;
  double worst = 0.0;
  for (std::size_t i = 0; i < storage->values.size(); ++i) {
    double saved = storage->values[i];
    storage->values[i] = saved + step;
    g.recompute();
    double fp = g.value(root).scalar_value();
    storage->values[i] = saved - step;
    g.recompute();
    double fm = g.value(root).scalar_value();
    storage->values[i] = saved;
    double fd = (fp - fm) / (2.0 * step);
    double a = analytic.values[i];
    double rel = std::fabs(a - fd) / std::max({std::fabs(a), std::fabs(fd), 1e-8});
    worst = std::max(worst, rel);
  }
  g.recompute();
  return worst;
}

}  // namespace fairrec
