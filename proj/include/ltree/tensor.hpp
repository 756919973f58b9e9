#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ltree {

// A named trainable parameter. Values and gradients persist across the
// per-example computation graphs; graphs reference parameters through
// leaf nodes and accumulate into `grad` during backward().
struct Param {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> value;
  std::vector<double> grad;

  Param() = default;
  Param(std::string n, std::vector<std::size_t> s)
      : name(std::move(n)), shape(std::move(s)) {
    std::size_t total = 1;
    for (std::size_t d : shape) total *= d;
    value.assign(total, 0.0);
    grad.assign(total, 0.0);
  }

  std::size_t size() const { return value.size(); }
  std::size_t rows() const { return shape.empty() ? 1 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

inline std::string shape_str(std::size_t rank, std::size_t rows, std::size_t cols) {
  std::ostringstream os;
  os << '[';
  if (rank >= 1) os << rows;
  if (rank >= 2) os << 'x' << cols;
  os << ']';
  return os.str();
}

// argmax with ties resolved to the lowest index
inline std::size_t argmax_lowest(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

class Graph;

// Lightweight handle to a node in a Graph. Valid until Graph::clear().
class Tensor {
 public:
  Tensor() = default;

  bool valid() const { return graph_ != nullptr; }
  Graph* graph() const { return graph_; }
  std::uint32_t id() const { return id_; }

  std::size_t rank() const;
  std::size_t rows() const;
  std::size_t cols() const;
  std::size_t size() const;
  std::span<const double> values() const;
  std::span<const double> grad() const;
  double value() const;  // scalar convenience

 private:
  friend class Graph;
  Tensor(Graph* g, std::uint32_t id) : graph_(g), id_(id) {}
  Graph* graph_ = nullptr;
  std::uint32_t id_ = 0;
};

// Reverse-mode tape. Nodes are appended in evaluation order, so inputs of
// node k always have ids < k and the reverse sweep is a valid topological
// order. All storage lives in arenas that are recycled by clear().
class Graph {
  enum class Op : std::uint8_t {
    kConstant, kLeaf, kMatMul, kDot, kAdd, kAddN, kSub, kMul,
    kSigmoid, kTanh, kRelu, kSquare, kSoftmax, kLogSoftmaxMasked,
    kStraightThrough, kSum, kPick, kSlice, kConcat, kMix, kScale,
  };

  struct Node {
    Op op;
    std::uint8_t rank;
    std::uint32_t rows, cols;
    std::uint32_t val_off;
    std::uint32_t arg_off, arg_cnt;
    std::uint32_t aux_off, aux_cnt;
    Param* param;
    std::uint32_t param_off;
  };

 public:
  // ---- leaf construction ----

  Tensor constant(std::span<const double> v, std::size_t rows, std::size_t cols = 0) {
    std::size_t rank = cols == 0 ? 1 : 2;
    std::size_t want = rows * (cols == 0 ? 1 : cols);
    if (v.size() != want)
      throw std::invalid_argument("constant: " + std::to_string(v.size()) +
                                  " values for shape " + shape_str(rank, rows, cols));
    Node& n = append(Op::kConstant, rank, rows, cols == 0 ? 1 : cols, {});
    std::copy(v.begin(), v.end(), vals_.begin() + n.val_off);
    return handle();
  }

  Tensor scalar(double v) { return constant(std::span<const double>(&v, 1), 1); }

  Tensor zeros(std::size_t rows, std::size_t cols = 0) {
    std::vector<double> z(rows * (cols == 0 ? 1 : cols), 0.0);
    return constant(z, rows, cols);
  }

  // Whole-parameter leaf. A parameter is materialized at most once per graph;
  // later calls return the same node (values are snapshotted at first use).
  Tensor leaf(Param& p) {
    auto [it, fresh] = leaf_cache_.try_emplace({&p, 0}, 0);
    if (!fresh) return Tensor(this, it->second);
    Node& n = append(Op::kLeaf, p.shape.size() < 2 ? 1 : 2, p.rows(), p.cols(), {});
    std::copy(p.value.begin(), p.value.end(), vals_.begin() + n.val_off);
    n.param = &p;
    n.param_off = 0;
    it->second = static_cast<std::uint32_t>(nodes_.size() - 1);
    return handle();
  }

  // single-row view of a rank-2 parameter (embedding lookup); cached like leaf
  Tensor leaf_row(Param& p, std::size_t row) {
    if (p.shape.size() != 2 || row >= p.rows())
      throw std::invalid_argument("leaf_row: row " + std::to_string(row) +
                                  " out of range for " + p.name);
    auto [it, fresh] = leaf_cache_.try_emplace({&p, static_cast<std::uint32_t>(row + 1)}, 0);
    if (!fresh) return Tensor(this, it->second);
    std::size_t cols = p.cols();
    Node& n = append(Op::kLeaf, 1, cols, 1, {});
    std::copy(p.value.begin() + row * cols, p.value.begin() + (row + 1) * cols,
              vals_.begin() + n.val_off);
    n.param = &p;
    n.param_off = static_cast<std::uint32_t>(row * cols);
    it->second = static_cast<std::uint32_t>(nodes_.size() - 1);
    return handle();
  }

  // ---- operations ----

  Tensor matmul(Tensor a, Tensor b) {
    const Node na = node_of(a);
    const Node nb = node_of(b);
    if (na.rank != 2 || na.cols != nb.rows)
      throw std::invalid_argument("matmul: incompatible shapes " +
                                  shape_str(na.rank, na.rows, na.cols) + " and " +
                                  shape_str(nb.rank, nb.rows, nb.cols));
    std::size_t m = na.rows, k = na.cols, ncol = nb.cols;
    Node& n = append(Op::kMatMul, nb.rank, m, nb.rank == 1 ? 1 : ncol, {a.id(), b.id()});
    const double* A = val_ptr(na);
    const double* B = val_ptr(nb);
    double* C = vals_.data() + n.val_off;
    for (std::size_t i = 0; i < m; ++i) {
      double* c = C + i * ncol;
      for (std::size_t j = 0; j < ncol; ++j) c[j] = 0.0;
      const double* arow = A + i * k;
      for (std::size_t l = 0; l < k; ++l) {
        double av = arow[l];
        const double* brow = B + l * ncol;
        for (std::size_t j = 0; j < ncol; ++j) c[j] += av * brow[j];
      }
    }
    return handle();
  }

  Tensor dot(Tensor a, Tensor b) {
    const Node na = node_of(a);
    const Node nb = node_of(b);
    if (na.rank != 1 || nb.rank != 1 || na.rows != nb.rows)
      throw std::invalid_argument("dot: incompatible shapes " +
                                  shape_str(na.rank, na.rows, na.cols) + " and " +
                                  shape_str(nb.rank, nb.rows, nb.cols));
    Node& n = append(Op::kDot, 1, 1, 1, {a.id(), b.id()});
    const double* A = val_ptr(na);
    const double* B = val_ptr(nb);
    double acc = 0.0;
    for (std::size_t i = 0; i < na.rows; ++i) acc += A[i] * B[i];
    vals_[n.val_off] = acc;
    return handle();
  }

  Tensor add(Tensor a, Tensor b) { return binary(Op::kAdd, a, b); }
  Tensor sub(Tensor a, Tensor b) { return binary(Op::kSub, a, b); }
  Tensor mul(Tensor a, Tensor b) { return binary(Op::kMul, a, b); }

  Tensor add_n(std::span<const Tensor> ts) {
    if (ts.empty()) throw std::invalid_argument("add_n: no inputs");
    const Node first = node_of(ts[0]);
    std::vector<std::uint32_t> ids;
    ids.reserve(ts.size());
    for (const Tensor& t : ts) {
      const Node nt = node_of(t);
      if (nt.rank != first.rank || nt.rows != first.rows || nt.cols != first.cols)
        throw std::invalid_argument("add_n: shape mismatch " +
                                    shape_str(first.rank, first.rows, first.cols) + " vs " +
                                    shape_str(nt.rank, nt.rows, nt.cols));
      ids.push_back(t.id());
    }
    Node& n = append(Op::kAddN, first.rank, first.rows, first.cols, ids);
    double* out = vals_.data() + n.val_off;
    std::size_t sz = first.rows * first.cols;
    for (std::size_t j = 0; j < sz; ++j) out[j] = 0.0;
    for (std::uint32_t id : ids) {
      const double* in = vals_.data() + nodes_[id].val_off;
      for (std::size_t j = 0; j < sz; ++j) out[j] += in[j];
    }
    return handle();
  }

  Tensor sigmoid(Tensor x) {
    return unary(Op::kSigmoid, x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); });
  }
  Tensor tanh(Tensor x) {
    return unary(Op::kTanh, x, [](double v) { return std::tanh(v); });
  }
  Tensor relu(Tensor x) {
    return unary(Op::kRelu, x, [](double v) { return v > 0.0 ? v : 0.0; });
  }
  Tensor square(Tensor x) {
    return unary(Op::kSquare, x, [](double v) { return v * v; });
  }

  // numerically stable softmax over a vector
  Tensor softmax(Tensor x) {
    const Node nx = node_of(x);
    if (nx.rank != 1 || nx.rows < 1)
      throw std::invalid_argument("softmax: need a nonempty vector, got " +
                                  shape_str(nx.rank, nx.rows, nx.cols));
    Node& n = append(Op::kSoftmax, 1, nx.rows, 1, {x.id()});
    const double* in = val_ptr(node_of(x));
    double* out = vals_.data() + n.val_off;
    softmax_kernel(in, out, nx.rows);
    return handle();
  }

  // log softmax restricted to entries with valid[i] != 0; invalid entries get -inf
  Tensor log_softmax_masked(Tensor x, std::span<const bool> valid) {
    const Node nx = node_of(x);
    if (nx.rank != 1 || valid.size() != nx.rows)
      throw std::invalid_argument("log_softmax_masked: mask size " +
                                  std::to_string(valid.size()) + " vs input " +
                                  shape_str(nx.rank, nx.rows, nx.cols));
    std::size_t n_valid = 0;
    for (bool b : valid) n_valid += b ? 1 : 0;
    if (n_valid == 0) throw std::invalid_argument("log_softmax_masked: empty mask");
    std::vector<double> aux(valid.size());
    for (std::size_t i = 0; i < valid.size(); ++i) aux[i] = valid[i] ? 1.0 : 0.0;
    Node& n = append(Op::kLogSoftmaxMasked, 1, nx.rows, 1, {x.id()}, aux);
    const double* in = val_ptr(node_of(x));
    double* out = vals_.data() + n.val_off;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < nx.rows; ++i)
      if (valid[i] && in[i] > mx) mx = in[i];
    double lse = 0.0;
    for (std::size_t i = 0; i < nx.rows; ++i)
      if (valid[i]) lse += std::exp(in[i] - mx);
    lse = mx + std::log(lse);
    for (std::size_t i = 0; i < nx.rows; ++i)
      out[i] = valid[i] ? in[i] - lse : -std::numeric_limits<double>::infinity();
    return handle();
  }

  // forward: one-hot at the argmax (ties to the lowest index);
  // backward: identity, so softmax+straight_through backpropagates as softmax
  Tensor straight_through(Tensor weights) {
    const Node nw = node_of(weights);
    if (nw.rank != 1)
      throw std::invalid_argument("straight_through: need a vector, got " +
                                  shape_str(nw.rank, nw.rows, nw.cols));
    const double* in = val_ptr(nw);
    std::size_t best = argmax_lowest(std::span<const double>(in, nw.rows));
    Node& n = append(Op::kStraightThrough, 1, nw.rows, 1, {weights.id()},
                     {static_cast<double>(best)});
    double* out = vals_.data() + n.val_off;
    for (std::size_t i = 0; i < nw.rows; ++i) out[i] = i == best ? 1.0 : 0.0;
    return handle();
  }

  Tensor sum(Tensor x) {
    const Node nx = node_of(x);
    Node& n = append(Op::kSum, 1, 1, 1, {x.id()});
    const double* in = val_ptr(node_of(x));
    double acc = 0.0;
    for (std::size_t i = 0; i < nx.rows * nx.cols; ++i) acc += in[i];
    vals_[n.val_off] = acc;
    return handle();
  }

  Tensor pick(Tensor x, std::size_t i) {
    const Node nx = node_of(x);
    if (nx.rank != 1 || i >= nx.rows)
      throw std::invalid_argument("pick: index " + std::to_string(i) + " out of " +
                                  shape_str(nx.rank, nx.rows, nx.cols));
    Node& n = append(Op::kPick, 1, 1, 1, {x.id()}, {static_cast<double>(i)});
    vals_[n.val_off] = vals_[node_of(x).val_off + i];
    return handle();
  }

  Tensor slice(Tensor x, std::size_t offset, std::size_t len) {
    const Node nx = node_of(x);
    if (nx.rank != 1 || offset + len > nx.rows)
      throw std::invalid_argument("slice: [" + std::to_string(offset) + ", " +
                                  std::to_string(offset + len) + ") out of " +
                                  shape_str(nx.rank, nx.rows, nx.cols));
    Node& n = append(Op::kSlice, 1, len, 1, {x.id()}, {static_cast<double>(offset)});
    const double* in = val_ptr(node_of(x));
    std::copy(in + offset, in + offset + len, vals_.begin() + n.val_off);
    return handle();
  }

  Tensor concat(std::span<const Tensor> ts) {
    if (ts.empty()) throw std::invalid_argument("concat: no inputs");
    std::size_t total = 0;
    std::vector<std::uint32_t> ids;
    ids.reserve(ts.size());
    for (const Tensor& t : ts) {
      const Node nt = node_of(t);
      if (nt.rank != 1)
        throw std::invalid_argument("concat: need vectors, got " +
                                    shape_str(nt.rank, nt.rows, nt.cols));
      total += nt.rows;
      ids.push_back(t.id());
    }
    Node& n = append(Op::kConcat, 1, total, 1, ids);
    double* out = vals_.data() + n.val_off;
    for (std::uint32_t id : ids) {
      const Node& nt = nodes_[id];
      const double* in = vals_.data() + nt.val_off;
      out = std::copy(in, in + nt.rows, out);
    }
    return handle();
  }

  // weighted sum of equally shaped vectors: out = sum_k weights[k] * items[k]
  Tensor mix(Tensor weights, std::span<const Tensor> items) {
    const Node nw = node_of(weights);
    if (nw.rank != 1 || nw.rows != items.size())
      throw std::invalid_argument("mix: " + std::to_string(items.size()) +
                                  " items for weights " +
                                  shape_str(nw.rank, nw.rows, nw.cols));
    if (items.empty()) throw std::invalid_argument("mix: no items");
    const Node first = node_of(items[0]);
    std::vector<std::uint32_t> ids;
    ids.reserve(items.size() + 1);
    ids.push_back(weights.id());
    for (const Tensor& t : items) {
      const Node nt = node_of(t);
      if (nt.rank != 1 || nt.rows != first.rows)
        throw std::invalid_argument("mix: item shape " +
                                    shape_str(nt.rank, nt.rows, nt.cols) + " vs " +
                                    shape_str(first.rank, first.rows, first.cols));
      ids.push_back(t.id());
    }
    Node& n = append(Op::kMix, 1, first.rows, 1, ids);
    double* out = vals_.data() + n.val_off;
    const double* w = vals_.data() + node_of(weights).val_off;
    std::size_t d = first.rows;
    for (std::size_t j = 0; j < d; ++j) out[j] = 0.0;
    for (std::size_t k = 0; k < items.size(); ++k) {
      const double* in = vals_.data() + nodes_[ids[k + 1]].val_off;
      double wk = w[k];
      for (std::size_t j = 0; j < d; ++j) out[j] += wk * in[j];
    }
    return handle();
  }

  Tensor add_n(std::initializer_list<Tensor> ts) {
    return add_n(std::span<const Tensor>(ts.begin(), ts.size()));
  }
  Tensor concat(std::initializer_list<Tensor> ts) {
    return concat(std::span<const Tensor>(ts.begin(), ts.size()));
  }
  Tensor mix(Tensor weights, std::initializer_list<Tensor> items) {
    return mix(weights, std::span<const Tensor>(items.begin(), items.size()));
  }

  Tensor scale(Tensor x, double c) {
    const Node nx = node_of(x);
    Node& n = append(Op::kScale, nx.rank, nx.rows, nx.cols, {x.id()}, {c});
    const double* in = val_ptr(node_of(x));
    double* out = vals_.data() + n.val_off;
    for (std::size_t i = 0; i < nx.rows * nx.cols; ++i) out[i] = c * in[i];
    return handle();
  }

  Tensor neg(Tensor x) { return scale(x, -1.0); }

  // ---- backward ----

  // Accumulates d(loss)/d(node) for every node reachable from `loss` and adds
  // leaf contributions into their Param::grad. Repeated calls accumulate.
  void backward(Tensor loss) {
    const Node nl = node_of(loss);
    if (nl.rows * nl.cols != 1)
      throw std::invalid_argument("backward: loss must be scalar, got " +
                                  shape_str(nl.rank, nl.rows, nl.cols));
    // node grads are scratch for this pass; only Param::grad accumulates
    grads_.assign(vals_.size(), 0.0);
    touched_.assign(nodes_.size(), 0);
    grads_valid_ = true;
    std::uint32_t lid = loss.id();
    grads_[nodes_[lid].val_off] += 1.0;
    touched_[lid] = 1;
    for (std::uint32_t id = lid + 1; id-- > 0;) {
      if (!touched_[id]) continue;
      backprop_node(id);
    }
  }

  bool grads_valid() const { return grads_valid_; }

  // ---- bookkeeping ----

  std::size_t node_count() const { return nodes_.size(); }

  void clear() {
    nodes_.clear();
    vals_.clear();
    args_.clear();
    aux_.clear();
    grads_.clear();
    touched_.clear();
    leaf_cache_.clear();
    grads_valid_ = false;
  }

 private:
  friend class Tensor;

  Tensor handle() { return Tensor(this, static_cast<std::uint32_t>(nodes_.size() - 1)); }

  const Node& node_of(const Tensor& t) const {
    if (t.graph() != this)
      throw std::invalid_argument("tensor does not belong to this graph");
    return nodes_[t.id()];
  }

  const double* val_ptr(const Node& n) const { return vals_.data() + n.val_off; }

  Node& append(Op op, std::size_t rank, std::size_t rows, std::size_t cols,
               std::initializer_list<std::uint32_t> args,
               std::initializer_list<double> aux = {}) {
    return append(op, rank, rows, cols,
                  std::vector<std::uint32_t>(args), std::vector<double>(aux));
  }

  Node& append(Op op, std::size_t rank, std::size_t rows, std::size_t cols,
               const std::vector<std::uint32_t>& args,
               const std::vector<double>& aux = {}) {
    Node n{};
    n.op = op;
    n.rank = static_cast<std::uint8_t>(rank);
    n.rows = static_cast<std::uint32_t>(rows);
    n.cols = static_cast<std::uint32_t>(cols);
    n.val_off = static_cast<std::uint32_t>(vals_.size());
    n.arg_off = static_cast<std::uint32_t>(args_.size());
    n.arg_cnt = static_cast<std::uint32_t>(args.size());
    n.aux_off = static_cast<std::uint32_t>(aux_.size());
    n.aux_cnt = static_cast<std::uint32_t>(aux.size());
    n.param = nullptr;
    n.param_off = 0;
    vals_.resize(vals_.size() + rows * cols);
    args_.insert(args_.end(), args.begin(), args.end());
    aux_.insert(aux_.end(), aux.begin(), aux.end());
    nodes_.push_back(n);
    return nodes_.back();
  }

  Tensor binary(Op op, Tensor a, Tensor b) {
    const Node na = node_of(a);
    const Node nb = node_of(b);
    if (na.rank != nb.rank || na.rows != nb.rows || na.cols != nb.cols)
      throw std::invalid_argument("elementwise op: shape mismatch " +
                                  shape_str(na.rank, na.rows, na.cols) + " vs " +
                                  shape_str(nb.rank, nb.rows, nb.cols));
    Node& n = append(op, na.rank, na.rows, na.cols, {a.id(), b.id()});
    const double* A = val_ptr(node_of(a));
    const double* B = val_ptr(node_of(b));
    double* out = vals_.data() + n.val_off;
    std::size_t sz = na.rows * na.cols;
    switch (op) {
      case Op::kAdd: for (std::size_t i = 0; i < sz; ++i) out[i] = A[i] + B[i]; break;
      case Op::kSub: for (std::size_t i = 0; i < sz; ++i) out[i] = A[i] - B[i]; break;
      case Op::kMul: for (std::size_t i = 0; i < sz; ++i) out[i] = A[i] * B[i]; break;
      default: throw std::logic_error("binary: bad op");
    }
    return handle();
  }

  template <typename F>
  Tensor unary(Op op, Tensor x, F f) {
    const Node nx = node_of(x);
    Node& n = append(op, nx.rank, nx.rows, nx.cols, {x.id()});
    const double* in = val_ptr(node_of(x));
    double* out = vals_.data() + n.val_off;
    for (std::size_t i = 0; i < nx.rows * nx.cols; ++i) out[i] = f(in[i]);
    return handle();
  }

  static void softmax_kernel(const double* in, double* out, std::size_t n) {
    double mx = in[0];
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, in[i]);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      out[i] = std::exp(in[i] - mx);
      total += out[i];
    }
    for (std::size_t i = 0; i < n; ++i) out[i] /= total;
  }

  double* grad_of(std::uint32_t id) {
    touched_[id] = 1;
    return grads_.data() + nodes_[id].val_off;
  }

  void backprop_node(std::uint32_t id) {
    const Node& n = nodes_[id];
    const double* g = grads_.data() + n.val_off;
    const double* y = vals_.data() + n.val_off;
    const std::uint32_t* args = args_.data() + n.arg_off;
    std::size_t sz = n.rows * n.cols;
    switch (n.op) {
      case Op::kConstant:
        break;
      case Op::kLeaf:
        if (n.param)
          for (std::size_t i = 0; i < sz; ++i) n.param->grad[n.param_off + i] += g[i];
        break;
      case Op::kMatMul: {
        const Node& na = nodes_[args[0]];
        const Node& nb = nodes_[args[1]];
        std::size_t m = na.rows, k = na.cols, ncol = nb.cols;
        const double* A = vals_.data() + na.val_off;
        const double* B = vals_.data() + nb.val_off;
        double* ga = grad_of(args[0]);
        double* gb = grad_of(args[1]);
        for (std::size_t i = 0; i < m; ++i) {
          const double* gi = g + i * ncol;
          double* gai = ga + i * k;
          for (std::size_t l = 0; l < k; ++l) {
            const double* bl = B + l * ncol;
            double acc = 0.0;
            for (std::size_t j = 0; j < ncol; ++j) acc += gi[j] * bl[j];
            gai[l] += acc;
          }
        }
        for (std::size_t l = 0; l < k; ++l) {
          double* gbl = gb + l * ncol;
          for (std::size_t i = 0; i < m; ++i) {
            double a = A[i * k + l];
            const double* gi = g + i * ncol;
            for (std::size_t j = 0; j < ncol; ++j) gbl[j] += a * gi[j];
          }
        }
        break;
      }
      case Op::kDot: {
        const Node& na = nodes_[args[0]];
        const double* A = vals_.data() + na.val_off;
        const double* B = vals_.data() + nodes_[args[1]].val_off;
        double* ga = grad_of(args[0]);
        double* gb = grad_of(args[1]);
        double g0 = g[0];
        for (std::size_t i = 0; i < na.rows; ++i) {
          ga[i] += g0 * B[i];
          gb[i] += g0 * A[i];
        }
        break;
      }
      case Op::kAdd: {
        double* ga = grad_of(args[0]);
        double* gb = grad_of(args[1]);
        for (std::size_t i = 0; i < sz; ++i) { ga[i] += g[i]; gb[i] += g[i]; }
        break;
      }
      case Op::kAddN: {
        for (std::uint32_t a = 0; a < n.arg_cnt; ++a) {
          double* gi = grad_of(args[a]);
          for (std::size_t i = 0; i < sz; ++i) gi[i] += g[i];
        }
        break;
      }
      case Op::kSub: {
        double* ga = grad_of(args[0]);
        double* gb = grad_of(args[1]);
        for (std::size_t i = 0; i < sz; ++i) { ga[i] += g[i]; gb[i] -= g[i]; }
        break;
      }
      case Op::kMul: {
        const double* A = vals_.data() + nodes_[args[0]].val_off;
        const double* B = vals_.data() + nodes_[args[1]].val_off;
        double* ga = grad_of(args[0]);
        double* gb = grad_of(args[1]);
        for (std::size_t i = 0; i < sz; ++i) {
          ga[i] += g[i] * B[i];
          gb[i] += g[i] * A[i];
        }
        break;
      }
      case Op::kSigmoid: {
        double* gx = grad_of(args[0]);
        for (std::size_t i = 0; i < sz; ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
        break;
      }
      case Op::kTanh: {
        double* gx = grad_of(args[0]);
        for (std::size_t i = 0; i < sz; ++i) gx[i] += g[i] * (1.0 - y[i] * y[i]);
        break;
      }
      case Op::kRelu: {
        const double* x = vals_.data() + nodes_[args[0]].val_off;
        double* gx = grad_of(args[0]);
        for (std::size_t i = 0; i < sz; ++i)
          if (x[i] > 0.0) gx[i] += g[i];
        break;
      }
      case Op::kSquare: {
        const double* x = vals_.data() + nodes_[args[0]].val_off;
        double* gx = grad_of(args[0]);
        for (std::size_t i = 0; i < sz; ++i) gx[i] += g[i] * 2.0 * x[i];
        break;
      }
      case Op::kSoftmax: {
        double* gx = grad_of(args[0]);
        double dotgy = 0.0;
        for (std::size_t i = 0; i < sz; ++i) dotgy += g[i] * y[i];
        for (std::size_t i = 0; i < sz; ++i) gx[i] += y[i] * (g[i] - dotgy);
        break;
      }
      case Op::kLogSoftmaxMasked: {
        const double* mask = aux_.data() + n.aux_off;
        double* gx = grad_of(args[0]);
        double gsum = 0.0;
        for (std::size_t i = 0; i < sz; ++i)
          if (mask[i] != 0.0) gsum += g[i];
        for (std::size_t i = 0; i < sz; ++i)
          if (mask[i] != 0.0) gx[i] += g[i] - std::exp(y[i]) * gsum;
        break;
      }
      case Op::kStraightThrough: {
        double* gx = grad_of(args[0]);
        for (std::size_t i = 0; i < sz; ++i) gx[i] += g[i];
        break;
      }
      case Op::kSum: {
        const Node& nx = nodes_[args[0]];
        double* gx = grad_of(args[0]);
        double g0 = g[0];
        for (std::size_t i = 0; i < nx.rows * nx.cols; ++i) gx[i] += g0;
        break;
      }
      case Op::kPick: {
        double* gx = grad_of(args[0]);
        gx[static_cast<std::size_t>(aux_[n.aux_off])] += g[0];
        break;
      }
      case Op::kSlice: {
        double* gx = grad_of(args[0]);
        std::size_t off = static_cast<std::size_t>(aux_[n.aux_off]);
        for (std::size_t i = 0; i < sz; ++i) gx[off + i] += g[i];
        break;
      }
      case Op::kConcat: {
        std::size_t off = 0;
        for (std::uint32_t a = 0; a < n.arg_cnt; ++a) {
          const Node& nx = nodes_[args[a]];
          double* gx = grad_of(args[a]);
          for (std::size_t i = 0; i < nx.rows; ++i) gx[i] += g[off + i];
          off += nx.rows;
        }
        break;
      }
      case Op::kMix: {
        const double* w = vals_.data() + nodes_[args[0]].val_off;
        double* gw = grad_of(args[0]);
        for (std::uint32_t k = 0; k + 1 < n.arg_cnt; ++k) {
          const double* item = vals_.data() + nodes_[args[k + 1]].val_off;
          double* gitem = grad_of(args[k + 1]);
          double acc = 0.0;
          double wk = w[k];
          for (std::size_t i = 0; i < sz; ++i) {
            acc += g[i] * item[i];
            gitem[i] += wk * g[i];
          }
          gw[k] += acc;
        }
        break;
      }
      case Op::kScale: {
        double* gx = grad_of(args[0]);
        double c = aux_[n.aux_off];
        for (std::size_t i = 0; i < sz; ++i) gx[i] += c * g[i];
        break;
      }
    }
  }

  std::vector<Node> nodes_;
  std::vector<double> vals_;
  std::vector<double> grads_;
  std::vector<std::uint32_t> args_;
  std::vector<double> aux_;
  std::vector<std::uint8_t> touched_;
  std::map<std::pair<const Param*, std::uint32_t>, std::uint32_t> leaf_cache_;
  bool grads_valid_ = false;
};

inline std::size_t Tensor::rank() const { return graph_->nodes_[id_].rank; }
inline std::size_t Tensor::rows() const { return graph_->nodes_[id_].rows; }
inline std::size_t Tensor::cols() const { return graph_->nodes_[id_].cols; }
inline std::size_t Tensor::size() const {
  const auto& n = graph_->nodes_[id_];
  return static_cast<std::size_t>(n.rows) * n.cols;
}
inline std::span<const double> Tensor::values() const {
  const auto& n = graph_->nodes_[id_];
  return {graph_->vals_.data() + n.val_off, static_cast<std::size_t>(n.rows) * n.cols};
}
inline std::span<const double> Tensor::grad() const {
  if (!graph_->grads_valid_)
    throw std::logic_error("Tensor::grad: no backward pass has run");
  const auto& n = graph_->nodes_[id_];
  return {graph_->grads_.data() + n.val_off, static_cast<std::size_t>(n.rows) * n.cols};
}
inline double Tensor::value() const {
  auto v = values();
  if (v.size() != 1) throw std::logic_error("Tensor::value: not a scalar");
  return v[0];
}

}  // namespace ltree
