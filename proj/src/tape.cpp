#include "fbc/tape.hpp"

#include <algorithm>
#include <cmath>

#include "fbc/errors.hpp"

namespace fbc {

Tape::Tape(const ParamVector& params) : params_(params) {
    nodes_.reserve(256);
    inputs_.reserve(512);
    values_.reserve(4096);
}

NodeId Tape::push(Op op, std::span<const NodeId> inputs, std::size_t out_size) {
    Node n;
    n.op = op;
    n.in_first = static_cast<std::uint32_t>(inputs_.size());
    n.in_count = static_cast<std::uint32_t>(inputs.size());
    for (NodeId id : inputs) inputs_.push_back(id);
    n.val_offset = values_.size();
    n.val_size = out_size;
    values_.resize(values_.size() + out_size, 0.0);
    nodes_.push_back(n);
    return static_cast<NodeId>(nodes_.size() - 1);
}

std::span<double> Tape::out(Node& n) {
    return {values_.data() + n.val_offset, n.val_size};
}

std::span<const double> Tape::in_val(const Node& n, std::size_t k) const {
    const Node& src = nodes_[inputs_[n.in_first + k]];
    return {values_.data() + src.val_offset, src.val_size};
}

void Tape::check_finite(NodeId id) {
    const Node& n = nodes_[id];
    const double* v = values_.data() + n.val_offset;
    for (std::size_t i = 0; i < n.val_size; ++i) {
        if (!std::isfinite(v[i])) {
            throw NonFiniteLoss("non-finite value in tape node #" + std::to_string(id) +
                                " (" + op_name(n.op) + ")");
        }
    }
}

const char* Tape::op_name(Op op) {
    switch (op) {
        case Op::Leaf: return "param";
        case Op::Constant: return "constant";
        case Op::Affine: return "affine";
        case Op::Add: return "add";
        case Op::Sub: return "sub";
        case Op::Mul: return "mul";
        case Op::AxPlusB: return "axpb";
        case Op::Tanh: return "tanh";
        case Op::Relu: return "relu";
        case Op::Sigmoid: return "sigmoid";
        case Op::Square: return "square";
        case Op::LogFloor: return "log";
        case Op::Softmax: return "softmax";
        case Op::Sum: return "sum";
        case Op::Mean: return "mean";
        case Op::Pick: return "pick";
        case Op::Concat: return "concat";
        case Op::Grl: return "grl";
    }
    return "?";
}

NodeId Tape::param(std::string_view segment_name) {
    const Segment& seg = params_.segment(segment_name);
    NodeId id = push(Op::Leaf, {}, seg.size());
    Node& n = nodes_[id];
    n.index = seg.offset;
    auto src = params_.values();
    std::copy(src.begin() + static_cast<std::ptrdiff_t>(seg.offset),
              src.begin() + static_cast<std::ptrdiff_t>(seg.offset + seg.size()),
              out(n).begin());
    check_finite(id);
    return id;
}

NodeId Tape::param_all() {
    NodeId id = push(Op::Leaf, {}, params_.size());
    Node& n = nodes_[id];
    n.index = 0;
    auto src = params_.values();
    std::copy(src.begin(), src.end(), out(n).begin());
    check_finite(id);
    return id;
}

NodeId Tape::constant(std::vector<double> values) {
    NodeId id = push(Op::Constant, {}, values.size());
    std::copy(values.begin(), values.end(), out(nodes_[id]).begin());
    check_finite(id);
    return id;
}

NodeId Tape::constant(double value) {
    return constant(std::vector<double>{value});
}

NodeId Tape::affine(NodeId w, std::size_t rows, std::size_t cols, NodeId x, NodeId b) {
    if (nodes_[w].val_size != rows * cols)
        throw ShapeError("affine: weight node has size " + std::to_string(nodes_[w].val_size) +
                         ", expected " + std::to_string(rows * cols));
    if (nodes_[x].val_size != cols)
        throw ShapeError("affine: input node has size " + std::to_string(nodes_[x].val_size) +
                         ", expected " + std::to_string(cols));
    if (nodes_[b].val_size != rows)
        throw ShapeError("affine: bias node has size " + std::to_string(nodes_[b].val_size) +
                         ", expected " + std::to_string(rows));
    const NodeId ins[3] = {w, x, b};
    NodeId id = push(Op::Affine, ins, rows);
    Node& n = nodes_[id];
    n.rows = rows;
    n.cols = cols;
    auto wv = in_val(n, 0);
    auto xv = in_val(n, 1);
    auto bv = in_val(n, 2);
    auto y = out(n);
    for (std::size_t i = 0; i < rows; ++i) {
        double acc = bv[i];
        const double* wrow = wv.data() + i * cols;
        for (std::size_t j = 0; j < cols; ++j) acc += wrow[j] * xv[j];
        y[i] = acc;
    }
    check_finite(id);
    return id;
}

NodeId Tape::add(NodeId a, NodeId b) {
    if (nodes_[a].val_size != nodes_[b].val_size) throw ShapeError("add: size mismatch");
    const NodeId ins[2] = {a, b};
    NodeId id = push(Op::Add, ins, nodes_[a].val_size);
    Node& n = nodes_[id];
    auto av = in_val(n, 0);
    auto bv = in_val(n, 1);
    auto y = out(n);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] + bv[i];
    check_finite(id);
    return id;
}

NodeId Tape::sub(NodeId a, NodeId b) {
    if (nodes_[a].val_size != nodes_[b].val_size) throw ShapeError("sub: size mismatch");
    const NodeId ins[2] = {a, b};
    NodeId id = push(Op::Sub, ins, nodes_[a].val_size);
    Node& n = nodes_[id];
    auto av = in_val(n, 0);
    auto bv = in_val(n, 1);
    auto y = out(n);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] - bv[i];
    check_finite(id);
    return id;
}

NodeId Tape::mul(NodeId a, NodeId b) {
    if (nodes_[a].val_size != nodes_[b].val_size) throw ShapeError("mul: size mismatch");
    const NodeId ins[2] = {a, b};
    NodeId id = push(Op::Mul, ins, nodes_[a].val_size);
    Node& n = nodes_[id];
    auto av = in_val(n, 0);
    auto bv = in_val(n, 1);
    auto y = out(n);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] * bv[i];
    check_finite(id);
    return id;
}

NodeId Tape::axpb(NodeId x, double a, double b) {
    const NodeId ins[1] = {x};
    NodeId id = push(Op::AxPlusB, ins, nodes_[x].val_size);
    Node& n = nodes_[id];
    n.a = a;
    n.b = b;
    auto xv = in_val(n, 0);
    auto y = out(n);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = a * xv[i] + b;
    check_finite(id);
    return id;
}

NodeId Tape::tanh(NodeId x) {
    const NodeId ins[1] = {x};
    NodeId id = push(Op::Tanh, ins, nodes_[x].val_size);
    Node& n = nodes_[id];
    auto xv = in_val(n, 0);
    auto y = out(n);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::tanh(xv[i]);
    check_finite(id);
    return id;
}

NodeId Tape::relu(NodeId x) {
    const NodeId ins[1] = {x};
    NodeId id = push(Op::Relu, ins, nodes_[x].val_size);
    Node& n = nodes_[id];
    auto xv = in_val(n, 0);
    auto y = out(n);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] > 0.0 ? xv[i] : 0.0;
    check_finite(id);
    return id;
}

NodeId Tape::sigmoid(NodeId x) {
    const NodeId ins[1] = {x};
    NodeId id = push(Op::Sigmoid, ins, nodes_[x].val_size);
    Node& n = nodes_[id];
    auto xv = in_val(n, 0);
    auto y = out(n);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = 1.0 / (1.0 + std::exp(-xv[i]));
    check_finite(id);
    return id;
}

NodeId Tape::square(NodeId x) {
    const NodeId ins[1] = {x};
    NodeId id = push(Op::Square, ins, nodes_[x].val_size);
    Node& n = nodes_[id];
    auto xv = in_val(n, 0);
    auto y = out(n);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] * xv[i];
    check_finite(id);
    return id;
}

NodeId Tape::log_floor(NodeId x) {
    const NodeId ins[1] = {x};
    NodeId id = push(Op::LogFloor, ins, nodes_[x].val_size);
    Node& n = nodes_[id];
    auto xv = in_val(n, 0);
    auto y = out(n);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::log(xv[i] + kLogFloor);
    check_finite(id);
    return id;
}

NodeId Tape::softmax(NodeId x) {
    const NodeId ins[1] = {x};
    NodeId id = push(Op::Softmax, ins, nodes_[x].val_size);
    Node& n = nodes_[id];
    auto xv = in_val(n, 0);
    auto y = out(n);
    double mx = xv[0];
    for (double v : xv) mx = std::max(mx, v);
    double z = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        y[i] = std::exp(xv[i] - mx);
        z += y[i];
    }
    for (std::size_t i = 0; i < y.size(); ++i) y[i] /= z;
    check_finite(id);
    return id;
}

NodeId Tape::sum(NodeId x) {
    const NodeId ins[1] = {x};
    NodeId id = push(Op::Sum, ins, 1);
    Node& n = nodes_[id];
    auto xv = in_val(n, 0);
    double acc = 0.0;
    for (double v : xv) acc += v;
    out(n)[0] = acc;
    check_finite(id);
    return id;
}

NodeId Tape::mean(NodeId x) {
    if (nodes_[x].val_size == 0) throw ShapeError("mean of empty node");
    const NodeId ins[1] = {x};
    NodeId id = push(Op::Mean, ins, 1);
    Node& n = nodes_[id];
    auto xv = in_val(n, 0);
    double acc = 0.0;
    for (double v : xv) acc += v;
    out(n)[0] = acc / static_cast<double>(xv.size());
    check_finite(id);
    return id;
}

NodeId Tape::pick(NodeId x, std::size_t index) {
    if (index >= nodes_[x].val_size) throw ShapeError("pick: index out of range");
    const NodeId ins[1] = {x};
    NodeId id = push(Op::Pick, ins, 1);
    Node& n = nodes_[id];
    n.index = index;
    out(n)[0] = in_val(n, 0)[index];
    check_finite(id);
    return id;
}

NodeId Tape::concat(std::span<const NodeId> parts) {
    std::size_t total = 0;
    for (NodeId p : parts) total += nodes_[p].val_size;
    NodeId id = push(Op::Concat, parts, total);
    Node& n = nodes_[id];
    auto y = out(n);
    std::size_t at = 0;
    for (std::size_t k = 0; k < n.in_count; ++k) {
        auto v = in_val(n, k);
        std::copy(v.begin(), v.end(), y.begin() + static_cast<std::ptrdiff_t>(at));
        at += v.size();
    }
    check_finite(id);
    return id;
}

NodeId Tape::mean_of(std::span<const NodeId> scalars) {
    return mean(concat(scalars));
}

NodeId Tape::grl(NodeId x) {
    const NodeId ins[1] = {x};
    NodeId id = push(Op::Grl, ins, nodes_[x].val_size);
    Node& n = nodes_[id];
    auto xv = in_val(n, 0);
    std::copy(xv.begin(), xv.end(), out(n).begin());
    return id;
}

NodeId Tape::dot(NodeId a, NodeId b) {
    return sum(mul(a, b));
}

std::span<const double> Tape::value(NodeId id) const {
    const Node& n = nodes_[id];
    return {values_.data() + n.val_offset, n.val_size};
}

double Tape::scalar(NodeId id) const {
    auto v = value(id);
    if (v.size() != 1) throw ShapeError("expected scalar node, got size " + std::to_string(v.size()));
    return v[0];
}

Gradient Tape::backward(NodeId root) {
    if (nodes_[root].val_size != 1) throw ShapeError("backward: root must be scalar");
    adjoints_.assign(values_.size(), 0.0);
    adjoints_[nodes_[root].val_offset] = 1.0;

    Gradient grad;
    grad.values.assign(params_.size(), 0.0);

    for (std::size_t idx = nodes_.size(); idx-- > 0;) {
        Node& n = nodes_[idx];
        const double* gy = adjoints_.data() + n.val_offset;
        const double* y = values_.data() + n.val_offset;
        switch (n.op) {
            case Op::Constant:
                break;
            case Op::Leaf: {
                for (std::size_t i = 0; i < n.val_size; ++i) grad.values[n.index + i] += gy[i];
                break;
            }
            case Op::Affine: {
                const Node& wn = nodes_[inputs_[n.in_first + 0]];
                const Node& xn = nodes_[inputs_[n.in_first + 1]];
                const Node& bn = nodes_[inputs_[n.in_first + 2]];
                const double* wv = values_.data() + wn.val_offset;
                const double* xv = values_.data() + xn.val_offset;
                double* gw = adjoints_.data() + wn.val_offset;
                double* gx = adjoints_.data() + xn.val_offset;
                double* gb = adjoints_.data() + bn.val_offset;
                for (std::size_t i = 0; i < n.rows; ++i) {
                    const double g = gy[i];
                    if (g == 0.0) continue;
                    const double* wrow = wv + i * n.cols;
                    double* gwrow = gw + i * n.cols;
                    for (std::size_t j = 0; j < n.cols; ++j) {
                        gwrow[j] += g * xv[j];
                        gx[j] += g * wrow[j];
                    }
                    gb[i] += g;
                }
                break;
            }
            case Op::Add: {
                double* ga = adjoints_.data() + nodes_[inputs_[n.in_first]].val_offset;
                double* gb = adjoints_.data() + nodes_[inputs_[n.in_first + 1]].val_offset;
                for (std::size_t i = 0; i < n.val_size; ++i) {
                    ga[i] += gy[i];
                    gb[i] += gy[i];
                }
                break;
            }
            case Op::Sub: {
                double* ga = adjoints_.data() + nodes_[inputs_[n.in_first]].val_offset;
                double* gb = adjoints_.data() + nodes_[inputs_[n.in_first + 1]].val_offset;
                for (std::size_t i = 0; i < n.val_size; ++i) {
                    ga[i] += gy[i];
                    gb[i] -= gy[i];
                }
                break;
            }
            case Op::Mul: {
                const Node& an = nodes_[inputs_[n.in_first]];
                const Node& bn = nodes_[inputs_[n.in_first + 1]];
                const double* av = values_.data() + an.val_offset;
                const double* bv = values_.data() + bn.val_offset;
                double* ga = adjoints_.data() + an.val_offset;
                double* gb = adjoints_.data() + bn.val_offset;
                for (std::size_t i = 0; i < n.val_size; ++i) {
                    ga[i] += gy[i] * bv[i];
                    gb[i] += gy[i] * av[i];
                }
                break;
            }
            case Op::AxPlusB: {
                double* gx = adjoints_.data() + nodes_[inputs_[n.in_first]].val_offset;
                for (std::size_t i = 0; i < n.val_size; ++i) gx[i] += n.a * gy[i];
                break;
            }
            case Op::Tanh: {
                double* gx = adjoints_.data() + nodes_[inputs_[n.in_first]].val_offset;
                for (std::size_t i = 0; i < n.val_size; ++i) gx[i] += gy[i] * (1.0 - y[i] * y[i]);
                break;
            }
            case Op::Relu: {
                const Node& xn = nodes_[inputs_[n.in_first]];
                const double* xv = values_.data() + xn.val_offset;
                double* gx = adjoints_.data() + xn.val_offset;
                for (std::size_t i = 0; i < n.val_size; ++i) {
                    if (xv[i] > 0.0) gx[i] += gy[i];
                }
                break;
            }
            case Op::Sigmoid: {
                double* gx = adjoints_.data() + nodes_[inputs_[n.in_first]].val_offset;
                for (std::size_t i = 0; i < n.val_size; ++i) gx[i] += gy[i] * y[i] * (1.0 - y[i]);
                break;
            }
            case Op::Square: {
                const Node& xn = nodes_[inputs_[n.in_first]];
                const double* xv = values_.data() + xn.val_offset;
                double* gx = adjoints_.data() + xn.val_offset;
                for (std::size_t i = 0; i < n.val_size; ++i) gx[i] += gy[i] * 2.0 * xv[i];
                break;
            }
            case Op::LogFloor: {
                const Node& xn = nodes_[inputs_[n.in_first]];
                const double* xv = values_.data() + xn.val_offset;
                double* gx = adjoints_.data() + xn.val_offset;
                for (std::size_t i = 0; i < n.val_size; ++i) gx[i] += gy[i] / (xv[i] + kLogFloor);
                break;
            }
            case Op::Softmax: {
                double* gx = adjoints_.data() + nodes_[inputs_[n.in_first]].val_offset;
                double inner = 0.0;
                for (std::size_t i = 0; i < n.val_size; ++i) inner += gy[i] * y[i];
                for (std::size_t i = 0; i < n.val_size; ++i) gx[i] += y[i] * (gy[i] - inner);
                break;
            }
            case Op::Sum: {
                const Node& xn = nodes_[inputs_[n.in_first]];
                double* gx = adjoints_.data() + xn.val_offset;
                for (std::size_t i = 0; i < xn.val_size; ++i) gx[i] += gy[0];
                break;
            }
            case Op::Mean: {
                const Node& xn = nodes_[inputs_[n.in_first]];
                double* gx = adjoints_.data() + xn.val_offset;
                const double g = gy[0] / static_cast<double>(xn.val_size);
                for (std::size_t i = 0; i < xn.val_size; ++i) gx[i] += g;
                break;
            }
            case Op::Pick: {
                double* gx = adjoints_.data() + nodes_[inputs_[n.in_first]].val_offset;
                gx[n.index] += gy[0];
                break;
            }
            case Op::Concat: {
                std::size_t at = 0;
                for (std::size_t k = 0; k < n.in_count; ++k) {
                    const Node& pn = nodes_[inputs_[n.in_first + k]];
                    double* gp = adjoints_.data() + pn.val_offset;
                    for (std::size_t i = 0; i < pn.val_size; ++i) gp[i] += gy[at + i];
                    at += pn.val_size;
                }
                break;
            }
            case Op::Grl: {
                double* gx = adjoints_.data() + nodes_[inputs_[n.in_first]].val_offset;
                for (std::size_t i = 0; i < n.val_size; ++i) gx[i] += -gy[i];
                break;
            }
        }
    }
    return grad;
}

ValueGrad value_and_grad(const LossFn& loss, const ParamVector& params) {
    Tape tape(params);
    NodeId root = loss(tape);
    double value = tape.scalar(root);
    return {value, tape.backward(root)};
}

double loss_value(const LossFn& loss, const ParamVector& params) {
    Tape tape(params);
    return tape.scalar(loss(tape));
}

Gradient finite_diff_grad(const LossFn& loss, const ParamVector& params, double step) {
    if (!(step > 0.0)) throw ConfigError("finite_diff_grad: step must be positive");
    ParamVector work = params;
    Gradient grad;
    grad.values.assign(params.size(), 0.0);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double original = work[i];
        work[i] = original + step;
        const double up = loss_value(loss, work);
        work[i] = original - step;
        const double down = loss_value(loss, work);
        work[i] = original;
        grad.values[i] = (up - down) / (2.0 * step);
    }
    return grad;
}

Gradient hessian_vector_product(const LossFn& loss, const ParamVector& params,
                                const Gradient& direction, double step) {
    if (direction.size() != params.size())
        throw LayoutMismatch("hessian_vector_product: direction length mismatch");
    if (!(step > 0.0)) throw ConfigError("hessian_vector_product: step must be positive");
    const double scale = norm(direction);
    if (scale == 0.0) throw DegenerateDirection("hessian_vector_product: zero direction");

    ParamVector up = params;
    ParamVector down = params;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double d = direction[i] / scale;
        up[i] += step * d;
        down[i] -= step * d;
    }
    Gradient gu = value_and_grad(loss, up).grad;
    Gradient gd = value_and_grad(loss, down).grad;
    Gradient out;
    out.values.assign(params.size(), 0.0);
    for (std::size_t i = 0; i < params.size(); ++i) {
        out.values[i] = (gu[i] - gd[i]) / (2.0 * step) * scale;
    }
    return out;
}

} // namespace fbc
