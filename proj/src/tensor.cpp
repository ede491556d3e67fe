#include "stvsa/tensor.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <sstream>
#include <utility>

namespace stvsa::ad {

namespace {

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    if (s.empty()) return "scalar";
    std::ostringstream os;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << 'x';
        os << s[i];
    }
    return os.str();
}

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) +
                     " and " + shape_str(b));
}

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;

}  // namespace

Tensor::Tensor(Shape shape, std::vector<double> data) {
    if (shape_numel(shape) != data.size())
        throw ShapeError("tensor: shape " + shape_str(shape) + " needs " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(data.size()));
    shape_ = std::move(shape);
    data_ = std::make_shared<const std::vector<double>>(std::move(data));
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::ones(Shape shape) { return full(std::move(shape), 1.0); }

Tensor Tensor::full(Shape shape, double v) {
    std::vector<double> d(shape_numel(shape), v);
    return Tensor(std::move(shape), std::move(d));
}

std::size_t Tensor::numel() const { return data_ ? data_->size() : 0; }

std::size_t Tensor::rows() const {
    if (rank() == 2) return shape_[0];
    if (rank() == 1) return 1;
    throw ContractError("rows: tensor of rank " + std::to_string(rank()));
}

std::size_t Tensor::cols() const {
    if (rank() == 2) return shape_[1];
    if (rank() == 1) return shape_[0];
    throw ContractError("cols: tensor of rank " + std::to_string(rank()));
}

std::span<const double> Tensor::values() const {
    if (!data_) return {};
    return {data_->data(), data_->size()};
}

double Tensor::at(std::size_t flat_index) const {
    if (!data_ || flat_index >= data_->size())
        throw ContractError("at: index " + std::to_string(flat_index) +
                            " out of range for " + shape_str(shape_));
    return (*data_)[flat_index];
}

double Tensor::value() const {
    if (numel() != 1)
        throw ContractError("value: tensor " + shape_str(shape_) +
                            " is not one element");
    return (*data_)[0];
}

Tensor Tensor::detached() const {
    Tensor t = *this;
    t.tape_ = nullptr;
    t.node_ = -1;
    return t;
}

// ---------------------------------------------------------------------------

enum class Op {
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Exp,
    Log,
    Sqrt,
    LocalLinear,  // leaky_relu / clamp: y = mask * x + offset with mask constant
    Matmul,
    Transpose,
    Reshape,
    SliceRows,
    SliceCols,
    ConcatRows,
    ConcatCols,
    SumAll,
    SumAxis,
};

struct Tape::Node {
    Op op = Op::Leaf;
    std::vector<Tensor> in;
    Tensor out;   // detached output values; reattach via attached_out()
    Tensor mask;  // LocalLinear: constant elementwise slope
    Shape in_shape;
    std::size_t i0 = 0, i1 = 0;  // slice offset / count
    int axis = -1;
};

/// Restores the tape's recording flag on scope exit.
class RecordingGuard {
public:
    RecordingGuard(Tape& tape, bool record)
        : tape_(tape), saved_(tape.recording_) {
        tape_.recording_ = record;
    }
    ~RecordingGuard() { tape_.recording_ = saved_; }
    RecordingGuard(const RecordingGuard&) = delete;
    RecordingGuard& operator=(const RecordingGuard&) = delete;

private:
    Tape& tape_;
    bool saved_;
};

struct OpEmitter {
    using Node = Tape::Node;

    /// The single tape shared by all attached operands, or nullptr.
    static Tape* common_tape(std::span<const Tensor> ts) {
        Tape* tape = nullptr;
        for (const auto& t : ts) {
            if (!t.attached()) continue;
            if (!tape)
                tape = t.tape();
            else if (tape != t.tape())
                throw ContractError("op: operands recorded on different tapes");
        }
        return tape;
    }

    /// Records the node if its tape is recording; returns the (possibly
    /// attached) output tensor.
    static Tensor record(Tape::Node node, Tensor value) {
        Tape* tape = common_tape(node.in);
        if (!tape || !tape->recording()) return value;
        node.out = value;  // detached copy for backward rules
        const int id = tape->emit(std::move(node));
        value.tape_ = tape;
        value.node_ = id;
        return value;
    }

    static Tensor attached_out(Tape& tape, int id) {
        Tensor t = tape.nodes_[static_cast<std::size_t>(id)].out;
        t.tape_ = &tape;
        t.node_ = id;
        return t;
    }
};

Tape::Tape() = default;
Tape::~Tape() = default;

std::size_t Tape::size() const { return nodes_.size(); }

int Tape::emit(Node node) {
    nodes_.push_back(std::move(node));
    return static_cast<int>(nodes_.size()) - 1;
}

Tensor Tape::leaf(const Tensor& value) {
    if (!value.defined()) throw ContractError("leaf: undefined tensor");
    Node n;
    n.op = Op::Leaf;
    n.out = value.detached();
    const int id = emit(std::move(n));
    Tensor t = value.detached();
    t.tape_ = this;
    t.node_ = id;
    return t;
}

// ---------------------------------------------------------------------------
// value kernels

namespace {

enum class Bcast { Same, One, Col, Row };

/// How operand shape `s` maps onto result shape `r`.
Bcast bcast_mode(const Shape& s, const Shape& r) {
    if (s == r) return Bcast::Same;
    if (shape_numel(s) == 1) return Bcast::One;
    if (r.size() == 2) {
        if (s.size() == 2 && s[0] == r[0] && s[1] == 1) return Bcast::Col;
        if (s.size() == 2 && s[0] == 1 && s[1] == r[1]) return Bcast::Row;
        if (s.size() == 1 && s[0] == r[1]) return Bcast::Row;
    }
    throw ShapeError("broadcast: cannot map " + shape_str(s) + " onto " +
                     shape_str(r));
}

/// Result shape of an elementwise binary op, or throws.
Shape binary_shape(const char* op, const Shape& a, const Shape& b) {
    if (a == b) return a;
    // one-element b first, so a scalar second operand keeps a's rank
    if (shape_numel(b) == 1) return a;
    if (shape_numel(a) == 1) return b;
    auto fits = [](const Shape& small, const Shape& big) {
        if (big.size() != 2) return false;
        if (small.size() == 2 && small[0] == big[0] && small[1] == 1) return true;
        if (small.size() == 2 && small[0] == 1 && small[1] == big[1]) return true;
        if (small.size() == 1 && small[0] == big[1]) return true;
        return false;
    };
    if (fits(b, a)) return a;
    if (fits(a, b)) return b;
    shape_fail(op, a, b);
}

std::size_t bcast_index(Bcast m, std::size_t idx, std::size_t cols) {
    switch (m) {
        case Bcast::Same: return idx;
        case Bcast::One: return 0;
        case Bcast::Col: return idx / cols;
        case Bcast::Row: return idx % cols;
    }
    return idx;
}

template <typename F>
Tensor binary_value(const char* name, const Tensor& a, const Tensor& b, F&& f) {
    Shape out_shape = binary_shape(name, a.shape(), b.shape());
    const std::size_t n = shape_numel(out_shape);
    const std::size_t cols = out_shape.size() == 2 ? out_shape[1] : n;
    const Bcast ma = bcast_mode(a.shape(), out_shape);
    const Bcast mb = bcast_mode(b.shape(), out_shape);
    const auto av = a.values();
    const auto bv = b.values();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i)
        out[i] = f(av[bcast_index(ma, i, cols)], bv[bcast_index(mb, i, cols)]);
    return Tensor(std::move(out_shape), std::move(out));
}

template <typename F>
Tensor unary_value(const Tensor& t, F&& f) {
    const auto v = t.values();
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = f(v[i]);
    return Tensor(t.shape(), std::move(out));
}

void require_defined(const char* op, const Tensor& t) {
    if (!t.defined()) throw ContractError(std::string(op) + ": undefined tensor");
}

void require_rank2(const char* op, const Tensor& t) {
    if (t.rank() != 2)
        throw ShapeError(std::string(op) + ": expected rank-2 tensor, got " +
                         shape_str(t.shape()));
}

void require_nonempty(const char* op, const Tensor& t) {
    if (t.numel() == 0)
        throw DomainError(std::string(op) + ": empty tensor " +
                          shape_str(t.shape()));
}

Tensor binary_op(Op op, const Tensor& a, const Tensor& b,
                 Tensor value) {
    OpEmitter::Node n;
    n.op = op;
    n.in = {a, b};
    return OpEmitter::record(std::move(n), std::move(value));
}

Tensor unary_op(Op op, const Tensor& t, Tensor value) {
    OpEmitter::Node n;
    n.op = op;
    n.in = {t};
    return OpEmitter::record(std::move(n), std::move(value));
}

/// Sums `g` down to `target` shape; identity when shapes already agree.
/// Built from public ops so it stays differentiable under create_graph.
Tensor reduce_to(const Tensor& g, const Shape& target) {
    if (g.shape() == target) return g;
    if (shape_numel(target) == 1) return reshape(sum(g), target);
    if (target.size() == 2 && target[1] == 1) return sum(g, 1);
    if (target.size() == 2 && target[0] == 1) return sum(g, 0);
    if (target.size() == 1) return reshape(sum(g, 0), target);
    throw ContractError("reduce_to: cannot reduce " + shape_str(g.shape()) +
                        " to " + shape_str(target));
}

}  // namespace

// ---------------------------------------------------------------------------
// public ops

Tensor add(const Tensor& a, const Tensor& b) {
    require_defined("add", a);
    require_defined("add", b);
    return binary_op(Op::Add, a, b,
                     binary_value("add", a, b, [](double x, double y) { return x + y; }));
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_defined("sub", a);
    require_defined("sub", b);
    return binary_op(Op::Sub, a, b,
                     binary_value("sub", a, b, [](double x, double y) { return x - y; }));
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_defined("mul", a);
    require_defined("mul", b);
    return binary_op(Op::Mul, a, b,
                     binary_value("mul", a, b, [](double x, double y) { return x * y; }));
}

Tensor div(const Tensor& a, const Tensor& b) {
    require_defined("div", a);
    require_defined("div", b);
    return binary_op(Op::Div, a, b,
                     binary_value("div", a, b, [](double x, double y) { return x / y; }));
}

Tensor neg(const Tensor& t) {
    require_defined("neg", t);
    return unary_op(Op::Neg, t, unary_value(t, [](double x) { return -x; }));
}

Tensor exp(const Tensor& t) {
    require_defined("exp", t);
    return unary_op(Op::Exp, t, unary_value(t, [](double x) { return std::exp(x); }));
}

Tensor log(const Tensor& t) {
    require_defined("log", t);
    for (double x : t.values())
        if (!(x > 0.0))
            throw DomainError("log: input " + std::to_string(x) +
                              " outside (0, inf)");
    return unary_op(Op::Log, t, unary_value(t, [](double x) { return std::log(x); }));
}

Tensor sqrt(const Tensor& t) {
    require_defined("sqrt", t);
    for (double x : t.values())
        if (x < 0.0)
            throw DomainError("sqrt: negative input " + std::to_string(x));
    return unary_op(Op::Sqrt, t,
                    unary_value(t, [](double x) { return std::sqrt(x); }));
}

namespace {

Tensor local_linear(const Tensor& t, Tensor value, Tensor mask) {
    OpEmitter::Node n;
    n.op = Op::LocalLinear;
    n.in = {t};
    n.mask = std::move(mask);
    return OpEmitter::record(std::move(n), std::move(value));
}

}  // namespace

Tensor leaky_relu(const Tensor& t, double alpha) {
    require_defined("leaky_relu", t);
    auto value = unary_value(t, [&](double x) { return x > 0.0 ? x : alpha * x; });
    auto mask = unary_value(t, [&](double x) { return x > 0.0 ? 1.0 : alpha; });
    return local_linear(t, std::move(value), std::move(mask));
}

Tensor clamp(const Tensor& t, double lo, double hi) {
    require_defined("clamp", t);
    if (!(lo <= hi)) throw ContractError("clamp: lo > hi");
    auto value = unary_value(t, [&](double x) { return std::clamp(x, lo, hi); });
    auto mask =
        unary_value(t, [&](double x) { return (x > lo && x < hi) ? 1.0 : 0.0; });
    return local_linear(t, std::move(value), std::move(mask));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_defined("matmul", a);
    require_defined("matmul", b);
    require_rank2("matmul", a);
    require_rank2("matmul", b);
    if (a.cols() != b.rows()) shape_fail("matmul", a.shape(), b.shape());
    const auto m = static_cast<Eigen::Index>(a.rows());
    const auto k = static_cast<Eigen::Index>(a.cols());
    const auto n = static_cast<Eigen::Index>(b.cols());
    std::vector<double> out(static_cast<std::size_t>(m * n));
    Eigen::Map<RowMat>(out.data(), m, n) =
        ConstMap(a.values().data(), m, k) * ConstMap(b.values().data(), k, n);
    OpEmitter::Node node;
    node.op = Op::Matmul;
    node.in = {a, b};
    return OpEmitter::record(std::move(node),
                             Tensor({a.rows(), b.cols()}, std::move(out)));
}

Tensor transpose(const Tensor& t) {
    require_defined("transpose", t);
    require_rank2("transpose", t);
    const std::size_t r = t.rows(), c = t.cols();
    std::vector<double> out(r * c);
    const auto v = t.values();
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = v[i * c + j];
    return unary_op(Op::Transpose, t, Tensor({c, r}, std::move(out)));
}

Tensor reshape(const Tensor& t, Shape shape) {
    require_defined("reshape", t);
    if (shape_numel(shape) != t.numel())
        throw ShapeError("reshape: " + shape_str(t.shape()) + " to " +
                         shape_str(shape) + " changes element count");
    OpEmitter::Node n;
    n.op = Op::Reshape;
    n.in = {t};
    n.in_shape = t.shape();
    return OpEmitter::record(
        std::move(n), Tensor(std::move(shape), {t.values().begin(), t.values().end()}));
}

Tensor slice_rows(const Tensor& t, std::size_t row0, std::size_t count) {
    require_defined("slice_rows", t);
    require_rank2("slice_rows", t);
    if (row0 + count > t.rows())
        throw ShapeError("slice_rows: [" + std::to_string(row0) + ", " +
                         std::to_string(row0 + count) + ") outside " +
                         shape_str(t.shape()));
    const std::size_t c = t.cols();
    const auto v = t.values();
    std::vector<double> out(v.begin() + static_cast<std::ptrdiff_t>(row0 * c),
                            v.begin() + static_cast<std::ptrdiff_t>((row0 + count) * c));
    OpEmitter::Node n;
    n.op = Op::SliceRows;
    n.in = {t};
    n.i0 = row0;
    n.i1 = count;
    return OpEmitter::record(std::move(n), Tensor({count, c}, std::move(out)));
}

Tensor slice_cols(const Tensor& t, std::size_t col0, std::size_t count) {
    require_defined("slice_cols", t);
    require_rank2("slice_cols", t);
    if (col0 + count > t.cols())
        throw ShapeError("slice_cols: [" + std::to_string(col0) + ", " +
                         std::to_string(col0 + count) + ") outside " +
                         shape_str(t.shape()));
    const std::size_t r = t.rows(), c = t.cols();
    std::vector<double> out(r * count);
    const auto v = t.values();
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < count; ++j) out[i * count + j] = v[i * c + col0 + j];
    OpEmitter::Node n;
    n.op = Op::SliceCols;
    n.in = {t};
    n.i0 = col0;
    n.i1 = count;
    return OpEmitter::record(std::move(n), Tensor({r, count}, std::move(out)));
}

namespace {

Tensor concat_impl(const char* name, Op op, std::span<const Tensor> parts,
                   bool along_rows) {
    if (parts.empty()) throw ContractError(std::string(name) + ": no parts");
    for (const auto& p : parts) {
        require_defined(name, p);
        require_rank2(name, p);
    }
    const std::size_t fixed = along_rows ? parts[0].cols() : parts[0].rows();
    std::size_t grown = 0;
    for (const auto& p : parts) {
        const std::size_t pf = along_rows ? p.cols() : p.rows();
        if (pf != fixed) shape_fail(name, parts[0].shape(), p.shape());
        grown += along_rows ? p.rows() : p.cols();
    }
    Shape out_shape = along_rows ? Shape{grown, fixed} : Shape{fixed, grown};
    std::vector<double> out;
    out.reserve(shape_numel(out_shape));
    if (along_rows) {
        for (const auto& p : parts)
            out.insert(out.end(), p.values().begin(), p.values().end());
    } else {
        out.resize(shape_numel(out_shape));
        std::size_t col0 = 0;
        for (const auto& p : parts) {
            const auto v = p.values();
            for (std::size_t i = 0; i < p.rows(); ++i)
                for (std::size_t j = 0; j < p.cols(); ++j)
                    out[i * grown + col0 + j] = v[i * p.cols() + j];
            col0 += p.cols();
        }
    }
    OpEmitter::Node n;
    n.op = op;
    n.in.assign(parts.begin(), parts.end());
    return OpEmitter::record(std::move(n), Tensor(std::move(out_shape), std::move(out)));
}

}  // namespace

Tensor concat_rows(std::span<const Tensor> parts) {
    return concat_impl("concat_rows", Op::ConcatRows, parts, true);
}

Tensor concat_cols(std::span<const Tensor> parts) {
    return concat_impl("concat_cols", Op::ConcatCols, parts, false);
}

Tensor sum(const Tensor& t) {
    require_defined("sum", t);
    require_nonempty("sum", t);
    double s = 0.0;
    for (double x : t.values()) s += x;
    OpEmitter::Node n;
    n.op = Op::SumAll;
    n.in = {t};
    n.in_shape = t.shape();
    return OpEmitter::record(std::move(n), Tensor::scalar(s));
}

Tensor sum(const Tensor& t, int axis) {
    require_defined("sum", t);
    require_rank2("sum(axis)", t);
    require_nonempty("sum", t);
    if (axis != 0 && axis != 1)
        throw ContractError("sum: axis " + std::to_string(axis));
    const std::size_t r = t.rows(), c = t.cols();
    const auto v = t.values();
    Shape out_shape = axis == 0 ? Shape{1, c} : Shape{r, 1};
    std::vector<double> out(shape_numel(out_shape), 0.0);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[axis == 0 ? j : i] += v[i * c + j];
    OpEmitter::Node n;
    n.op = Op::SumAxis;
    n.in = {t};
    n.in_shape = t.shape();
    n.axis = axis;
    return OpEmitter::record(std::move(n), Tensor(std::move(out_shape), std::move(out)));
}

Tensor mean(const Tensor& t) {
    require_defined("mean", t);
    require_nonempty("mean", t);
    return mul(sum(t), Tensor::scalar(1.0 / static_cast<double>(t.numel())));
}

Tensor mean(const Tensor& t, int axis) {
    require_defined("mean", t);
    require_rank2("mean(axis)", t);
    require_nonempty("mean", t);
    const double len = static_cast<double>(axis == 0 ? t.rows() : t.cols());
    return mul(sum(t, axis), Tensor::scalar(1.0 / len));
}

Tensor l2_norm(const Tensor& t) {
    require_defined("l2_norm", t);
    require_nonempty("l2_norm", t);
    return sqrt(sum(mul(t, t)));
}

Tensor l2_norm(const Tensor& t, int axis) {
    require_defined("l2_norm", t);
    require_nonempty("l2_norm", t);
    return sqrt(sum(mul(t, t), axis));
}

Tensor softmax(const Tensor& t, int axis) {
    require_defined("softmax", t);
    require_nonempty("softmax", t);
    if (t.rank() == 1) {
        if (axis != 0) throw ContractError("softmax: axis " + std::to_string(axis) +
                                           " on rank-1 tensor");
        const std::size_t n = t.numel();
        return reshape(softmax(reshape(t, {1, n}), 1), {n});
    }
    require_rank2("softmax", t);
    if (axis == 0) return transpose(softmax(transpose(t), 1));
    if (axis != 1) throw ContractError("softmax: axis " + std::to_string(axis));
    // shifting by the (constant) row max keeps exp in range; the shift is
    // gradient-free by translation invariance
    const std::size_t r = t.rows(), c = t.cols();
    const auto v = t.values();
    std::vector<double> mx(r);
    for (std::size_t i = 0; i < r; ++i) {
        double m = v[i * c];
        for (std::size_t j = 1; j < c; ++j) m = std::max(m, v[i * c + j]);
        mx[i] = m;
    }
    auto shifted = sub(t, Tensor({r, 1}, std::move(mx)));
    auto e = exp(shifted);
    return div(e, sum(e, 1));
}

// ---------------------------------------------------------------------------
// backward

void Tape::node_backward(int id, const Tensor& g, std::vector<Tensor>& slots) {
    // copy: emitting nodes during the backward (create_graph) may reallocate
    const Node n = nodes_[static_cast<std::size_t>(id)];
    auto acc = [&](const Tensor& in, const Tensor& grad) {
        if (!in.attached() || in.tape() != this) return;
        auto& slot = slots[static_cast<std::size_t>(in.node())];
        slot = slot.defined() ? add(slot, grad) : grad;
    };
    auto out = [&] { return OpEmitter::attached_out(*this, id); };

    switch (n.op) {
        case Op::Leaf:
            break;
        case Op::Add:
            acc(n.in[0], reduce_to(g, n.in[0].shape()));
            acc(n.in[1], reduce_to(g, n.in[1].shape()));
            break;
        case Op::Sub:
            acc(n.in[0], reduce_to(g, n.in[0].shape()));
            acc(n.in[1], reduce_to(neg(g), n.in[1].shape()));
            break;
        case Op::Mul:
            acc(n.in[0], reduce_to(mul(g, n.in[1]), n.in[0].shape()));
            acc(n.in[1], reduce_to(mul(g, n.in[0]), n.in[1].shape()));
            break;
        case Op::Div:
            acc(n.in[0], reduce_to(div(g, n.in[1]), n.in[0].shape()));
            acc(n.in[1],
                reduce_to(neg(mul(g, div(out(), n.in[1]))), n.in[1].shape()));
            break;
        case Op::Neg:
            acc(n.in[0], neg(g));
            break;
        case Op::Exp:
            acc(n.in[0], mul(g, out()));
            break;
        case Op::Log:
            acc(n.in[0], div(g, n.in[0]));
            break;
        case Op::Sqrt:
            acc(n.in[0], div(g, mul(Tensor::scalar(2.0), out())));
            break;
        case Op::LocalLinear:
            acc(n.in[0], mul(g, n.mask));
            break;
        case Op::Matmul:
            acc(n.in[0], matmul(g, transpose(n.in[1])));
            acc(n.in[1], matmul(transpose(n.in[0]), g));
            break;
        case Op::Transpose:
            acc(n.in[0], transpose(g));
            break;
        case Op::Reshape:
            acc(n.in[0], reshape(g, n.in_shape));
            break;
        case Op::SliceRows: {
            const std::size_t r = n.in[0].rows(), c = n.in[0].cols();
            std::vector<Tensor> parts;
            if (n.i0 > 0) parts.push_back(Tensor::zeros({n.i0, c}));
            parts.push_back(g);
            if (n.i0 + n.i1 < r)
                parts.push_back(Tensor::zeros({r - n.i0 - n.i1, c}));
            acc(n.in[0], parts.size() == 1 ? g : concat_rows(parts));
            break;
        }
        case Op::SliceCols: {
            const std::size_t r = n.in[0].rows(), c = n.in[0].cols();
            std::vector<Tensor> parts;
            if (n.i0 > 0) parts.push_back(Tensor::zeros({r, n.i0}));
            parts.push_back(g);
            if (n.i0 + n.i1 < c)
                parts.push_back(Tensor::zeros({r, c - n.i0 - n.i1}));
            acc(n.in[0], parts.size() == 1 ? g : concat_cols(parts));
            break;
        }
        case Op::ConcatRows: {
            std::size_t row0 = 0;
            for (const auto& p : n.in) {
                acc(p, slice_rows(g, row0, p.rows()));
                row0 += p.rows();
            }
            break;
        }
        case Op::ConcatCols: {
            std::size_t col0 = 0;
            for (const auto& p : n.in) {
                acc(p, slice_cols(g, col0, p.cols()));
                col0 += p.cols();
            }
            break;
        }
        case Op::SumAll:
            acc(n.in[0], mul(Tensor::ones(n.in_shape), g));
            break;
        case Op::SumAxis:
            acc(n.in[0], mul(Tensor::ones(n.in_shape), g));
            break;
    }
}

std::vector<Tensor> Tape::gradients(const Tensor& loss, std::span<const Tensor> wrt,
                                    bool create_graph) {
    if (!loss.attached() || loss.tape() != this)
        throw ContractError("gradients: loss is not attached to this tape");
    if (loss.numel() != 1)
        throw ContractError("gradients: loss " + shape_str(loss.shape()) +
                            " is not one element");
    for (const auto& w : wrt)
        if (!w.attached() || w.tape() != this)
            throw ContractError("gradients: wrt tensor is not attached to this tape");

    const int top = loss.node();
    std::vector<Tensor> slots(static_cast<std::size_t>(top) + 1);
    slots[static_cast<std::size_t>(top)] = Tensor::ones(loss.shape());

    {
        RecordingGuard guard(*this, create_graph);
        for (int id = top; id >= 0; --id)
            if (slots[static_cast<std::size_t>(id)].defined())
                node_backward(id, slots[static_cast<std::size_t>(id)], slots);
    }

    std::vector<Tensor> out;
    out.reserve(wrt.size());
    for (const auto& w : wrt) {
        auto& slot = slots[static_cast<std::size_t>(w.node())];
        out.push_back(slot.defined() ? slot : Tensor::zeros(w.shape()));
    }
    return out;
}

Tensor Tape::gradient(const Tensor& loss, const Tensor& wrt, bool create_graph) {
    std::vector<Tensor> one = {wrt};
    return gradients(loss, one, create_graph)[0];
}

Tensor grad_of_grad(const Tensor& inner, const Tensor& wrt_input) {
    if (!inner.attached())
        throw ContractError("grad_of_grad: inner value is not attached");
    return inner.tape()->gradient(inner, wrt_input, /*create_graph=*/true);
}

}  // namespace stvsa::ad
