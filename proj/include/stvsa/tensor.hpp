#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "stvsa/errors.hpp"

namespace stvsa::ad {

class Tape;

using Shape = std::vector<std::size_t>;

/// Dense 64-bit tensor in row-major order, optionally attached to a Tape node.
/// Value semantics; the underlying buffer is shared and immutable, so copies
/// are cheap. A detached tensor never participates in gradient computation.
class Tensor {
public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<double> data);

    static Tensor scalar(double v);
    static Tensor zeros(Shape shape);
    static Tensor ones(Shape shape);
    static Tensor full(Shape shape, double v);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t numel() const;
    /// Row/column counts of a rank-2 tensor (rank-1 counts as a single row).
    std::size_t rows() const;
    std::size_t cols() const;

    std::span<const double> values() const;
    double at(std::size_t flat_index) const;
    /// Value of a one-element tensor; ContractError otherwise.
    double value() const;

    bool attached() const { return tape_ != nullptr; }
    Tape* tape() const { return tape_; }
    int node() const { return node_; }
    /// Same values, no graph reference.
    Tensor detached() const;

    bool defined() const { return data_ != nullptr; }

private:
    friend class Tape;
    friend struct OpEmitter;
    std::shared_ptr<const std::vector<double>> data_;
    Shape shape_;
    Tape* tape_ = nullptr;
    int node_ = -1;
};

/// Append-only record of operations: node order is topological by
/// construction, and backward visits each node at most once per call.
///
/// Backward rules are themselves expressed through the public ops, so running
/// `gradients` with `create_graph` leaves the returned gradients on the tape
/// where they can feed a second loss (double backprop, as the gradient
/// penalty requires).
class Tape {
public:
    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Register a value as a differentiable leaf of this graph.
    Tensor leaf(const Tensor& value);

    std::size_t size() const;

    /// d(loss)/d(w) for every w in wrt. Loss must be a one-element tensor
    /// attached to this tape. Entries of wrt that the loss does not reach get
    /// zero gradients. Deterministic: fixed graph, bit-identical results.
    std::vector<Tensor> gradients(const Tensor& loss, std::span<const Tensor> wrt,
                                  bool create_graph = false);
    Tensor gradient(const Tensor& loss, const Tensor& wrt, bool create_graph = false);

    // internal: used by op implementations
    bool recording() const { return recording_; }

private:
    friend class RecordingGuard;
    friend struct OpEmitter;
    struct Node;
    std::vector<Node> nodes_;
    bool recording_ = true;

    int emit(Node node);
    void node_backward(int id, const Tensor& grad_out, std::vector<Tensor>& slots);
};

/// Gradient of a one-element tensor w.r.t. one attached input, returned still
/// attached so that a scalar built from it can be backpropagated again.
Tensor grad_of_grad(const Tensor& inner, const Tensor& wrt_input);

// Element-wise ops. Shapes must match exactly, or one operand may be a
// one-element tensor; for rank-2 operands an {n,1} column or {1,d}/{d} row
// also broadcasts.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& t);
Tensor exp(const Tensor& t);
Tensor log(const Tensor& t);
Tensor sqrt(const Tensor& t);
Tensor leaky_relu(const Tensor& t, double alpha);
/// Hard clamp to [lo, hi]; gradient passes through strictly inside the range.
Tensor clamp(const Tensor& t, double lo, double hi);

// Structural ops (rank-2 unless noted).
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& t);
Tensor reshape(const Tensor& t, Shape shape);
Tensor slice_rows(const Tensor& t, std::size_t row0, std::size_t count);
Tensor slice_cols(const Tensor& t, std::size_t col0, std::size_t count);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);

// Reductions. Full reductions produce a {1} scalar; axis reductions on a
// rank-2 tensor keep the reduced axis as size 1 ({n,1} or {1,d}).
Tensor sum(const Tensor& t);
Tensor sum(const Tensor& t, int axis);
Tensor mean(const Tensor& t);
Tensor mean(const Tensor& t, int axis);
Tensor l2_norm(const Tensor& t);
Tensor l2_norm(const Tensor& t, int axis);

/// Numerically stable softmax along `axis` of a rank-1 or rank-2 tensor.
Tensor softmax(const Tensor& t, int axis);

}  // namespace stvsa::ad
