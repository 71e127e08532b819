#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fbc/param_vector.hpp"

namespace fbc {

using NodeId = std::uint32_t;

/// Records a straight-line computation over one ParamVector and runs a single
/// reverse sweep to produce the exact gradient. Nodes are evaluated eagerly as
/// they are emitted; a fresh tape is built for every loss evaluation.
///
/// Supported primitives: affine maps, elementwise tanh/relu/sigmoid, softmax
/// (max-subtraction), log(x + 1e-12), square, sum, mean, plus the structural
/// ops (pick/concat/add/sub/mul/axpb) and the gradient reversal op `grl`.
///
/// A Tape is single-threaded; evaluation is pure over its inputs, so distinct
/// tapes over distinct ParamVectors can run concurrently.
class Tape {
public:
    // Floor added inside log_floor so entropy terms stay bounded on
    // fully confident predictions.
    static constexpr double kLogFloor = 1e-12;

    explicit Tape(const ParamVector& params);

    // Leaves.
    NodeId param(std::string_view segment_name); // view of one named segment
    NodeId param_all();                          // the whole flat vector
    NodeId constant(std::vector<double> values);
    NodeId constant(double value);

    // y = W x + b with W row-major (rows x cols), x of length cols, b of length rows.
    NodeId affine(NodeId w, std::size_t rows, std::size_t cols, NodeId x, NodeId b);

    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b); // elementwise
    NodeId axpb(NodeId x, double a, double b); // a*x + b elementwise

    NodeId tanh(NodeId x);
    NodeId relu(NodeId x);
    NodeId sigmoid(NodeId x);
    NodeId square(NodeId x);
    NodeId log_floor(NodeId x); // log(x + 1e-12)
    NodeId softmax(NodeId x);

    NodeId sum(NodeId x);  // -> scalar
    NodeId mean(NodeId x); // -> scalar
    NodeId pick(NodeId x, std::size_t index); // -> scalar
    NodeId concat(std::span<const NodeId> parts);
    NodeId mean_of(std::span<const NodeId> scalars); // mean of scalar nodes

    // Identity in the forward direction; multiplies the incoming adjoint by -1
    // in the backward direction.
    NodeId grl(NodeId x);

    NodeId dot(NodeId a, NodeId b); // sum(a*b)

    std::span<const double> value(NodeId id) const;
    double scalar(NodeId id) const; // throws ShapeError unless size 1

    // Reverse sweep from a scalar root; visits every node exactly once and
    // returns d(root)/d(params) in the flat layout.
    Gradient backward(NodeId root);

    std::size_t node_count() const { return nodes_.size(); }

private:
    enum class Op : std::uint8_t {
        Leaf, Constant, Affine, Add, Sub, Mul, AxPlusB,
        Tanh, Relu, Sigmoid, Square, LogFloor, Softmax,
        Sum, Mean, Pick, Concat, Grl,
    };

    struct Node {
        Op op;
        std::uint32_t in_first = 0; // into inputs_
        std::uint32_t in_count = 0;
        std::size_t val_offset = 0;
        std::size_t val_size = 0;
        std::size_t rows = 0, cols = 0; // Affine
        std::size_t index = 0;          // Pick; Leaf: offset into params
        double a = 0.0, b = 0.0;        // AxPlusB
    };

    NodeId push(Op op, std::span<const NodeId> inputs, std::size_t out_size);
    std::span<double> out(Node& n);
    std::span<const double> in_val(const Node& n, std::size_t k) const;
    void check_finite(NodeId id);
    static const char* op_name(Op op);

    const ParamVector& params_;
    std::vector<Node> nodes_;
    std::vector<NodeId> inputs_;
    std::vector<double> values_;
    std::vector<double> adjoints_;
};

/// A scalar loss: builds its computation on the given tape and returns the
/// root node. The tape supplies the parameter values.
using LossFn = std::function<NodeId(Tape&)>;

struct ValueGrad {
    double value;
    Gradient grad;
};

/// Evaluate the loss at `params` and return its value with the exact
/// reverse-mode gradient. Throws NonFiniteLoss naming the first node that
/// produced a non-finite value.
ValueGrad value_and_grad(const LossFn& loss, const ParamVector& params);

/// Loss value only (forward pass).
double loss_value(const LossFn& loss, const ParamVector& params);

/// Central-difference gradient oracle: (L(p + h e_i) - L(p - h e_i)) / (2 h).
Gradient finite_diff_grad(const LossFn& loss, const ParamVector& params, double step = 1e-5);

/// Hessian-vector product via central differences of the reverse-mode
/// gradient along direction/|direction|, rescaled by |direction|.
Gradient hessian_vector_product(const LossFn& loss, const ParamVector& params,
                                const Gradient& direction, double step = 1e-4);

} // namespace fbc
