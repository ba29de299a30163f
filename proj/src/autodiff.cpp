#include "wsee/autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace wsee::ad {

namespace {

constexpr double kLn2 = 0.6931471805599453;

bool elementwise_compatible(const Tape&, int ar, int ac, int br, int bc) {
    if (ar == br && ac == bc) return true;
    if (ar == 1 && ac == 1) return true;
    if (br == 1 && bc == 1) return true;
    return false;
}

}  // namespace

NodeId Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    const_slot_.push_back(-1);
    return static_cast<NodeId>(nodes_.size() - 1);
}

void Tape::check_built(NodeId id) const {
    if (id < 0 || id >= static_cast<NodeId>(nodes_.size()))
        throw ShapeError("tape: node id out of range");
}

std::string Tape::node_label(NodeId id) const {
    const Node& n = nodes_[id];
    if (!n.name.empty()) return n.name;
    return "node#" + std::to_string(id);
}

NodeId Tape::input(int rows, int cols, std::string name) {
    Node n;
    n.op = Op::kInput;
    n.rows = rows;
    n.cols = cols;
    n.name = std::move(name);
    NodeId id = push(n);
    input_ids_.push_back(id);
    return id;
}

NodeId Tape::constant(Mat value, std::string name) {
    Node n;
    n.op = Op::kConst;
    n.rows = value.rows;
    n.cols = value.cols;
    n.name = std::move(name);
    NodeId id = push(n);
    const_slot_[id] = static_cast<int>(const_vals_.size());
    const_vals_.push_back(std::move(value));
    return id;
}

namespace {
bool scalar_like(int r, int c) { return r == 1 && c == 1; }
}  // namespace

#define WSEE_AD_BINARY(fname, opkind)                                                     \
    NodeId Tape::fname(NodeId a, NodeId b) {                                              \
        check_built(a);                                                                   \
        check_built(b);                                                                   \
        const Node &na = nodes_[a], &nb = nodes_[b];                                      \
        if (!elementwise_compatible(*this, na.rows, na.cols, nb.rows, nb.cols))           \
            throw ShapeError("tape: incompatible shapes for " #fname);                    \
        Node n;                                                                           \
        n.op = opkind;                                                                    \
        n.a = a;                                                                          \
        n.b = b;                                                                          \
        n.rows = scalar_like(na.rows, na.cols) ? nb.rows : na.rows;                       \
        n.cols = scalar_like(na.rows, na.cols) ? nb.cols : na.cols;                       \
        return push(n);                                                                   \
    }

WSEE_AD_BINARY(add, Op::kAdd)
WSEE_AD_BINARY(sub, Op::kSub)
WSEE_AD_BINARY(mul, Op::kMul)
WSEE_AD_BINARY(div, Op::kDiv)
#undef WSEE_AD_BINARY

#define WSEE_AD_UNARY(fname, opkind)            \
    NodeId Tape::fname(NodeId a) {              \
        check_built(a);                         \
        Node n;                                 \
        n.op = opkind;                          \
        n.a = a;                                \
        n.rows = nodes_[a].rows;                \
        n.cols = nodes_[a].cols;                \
        return push(n);                         \
    }

WSEE_AD_UNARY(sqrt, Op::kSqrt)
WSEE_AD_UNARY(log2, Op::kLog2)
WSEE_AD_UNARY(exp, Op::kExp)
WSEE_AD_UNARY(sigmoid, Op::kSigmoid)
WSEE_AD_UNARY(softmax_rows, Op::kSoftmaxRows)
#undef WSEE_AD_UNARY

NodeId Tape::matmul(NodeId a, NodeId b, bool transpose_a, bool transpose_b) {
    check_built(a);
    check_built(b);
    const Node &na = nodes_[a], &nb = nodes_[b];
    const int ar = transpose_a ? na.cols : na.rows;
    const int ac = transpose_a ? na.rows : na.cols;
    const int br = transpose_b ? nb.cols : nb.rows;
    const int bc = transpose_b ? nb.rows : nb.cols;
    if (ac != br) throw ShapeError("tape: matmul inner dimension mismatch");
    Node n;
    n.op = Op::kMatMul;
    n.a = a;
    n.b = b;
    n.tr_a = transpose_a;
    n.tr_b = transpose_b;
    n.rows = ar;
    n.cols = bc;
    return push(n);
}

NodeId Tape::reduce_sum(NodeId a) {
    check_built(a);
    Node n;
    n.op = Op::kReduceSum;
    n.a = a;
    n.rows = 1;
    n.cols = 1;
    return push(n);
}

NodeId Tape::clamp(NodeId a, double lo, double hi) {
    check_built(a);
    Node n;
    n.op = Op::kClamp;
    n.a = a;
    n.lo = lo;
    n.hi = hi;
    n.rows = nodes_[a].rows;
    n.cols = nodes_[a].cols;
    return push(n);
}

NodeId Tape::reshape(NodeId a, int rows, int cols) {
    check_built(a);
    if (rows * cols != nodes_[a].rows * nodes_[a].cols)
        throw ShapeError("tape: reshape element count mismatch");
    Node n;
    n.op = Op::kReshape;
    n.a = a;
    n.rows = rows;
    n.cols = cols;
    return push(n);
}

void Tape::set_output(NodeId id) {
    check_built(id);
    output_ = id;
}

const Mat& Tape::value(NodeId id) const {
    if (!forward_done_) throw StateError("tape: value() before forward()");
    return val_[id];
}

const Mat& Tape::adjoint(NodeId id) const {
    if (!backward_done_) throw StateError("tape: adjoint() before backward()");
    return adj_[id];
}

const Mat& Tape::input_gradient(int input_index) const {
    if (input_index < 0 || input_index >= static_cast<int>(input_ids_.size()))
        throw ShapeError("tape: input index out of range");
    return adjoint(input_ids_[input_index]);
}

const Mat& Tape::forward(const std::vector<Mat>& inputs) {
    if (output_ < 0) throw StateError("tape: no output set");
    if (inputs.size() != input_ids_.size())
        throw ShapeError("tape: wrong number of inputs");
    val_.assign(nodes_.size(), Mat());
    for (size_t i = 0; i < input_ids_.size(); ++i) {
        const Node& n = nodes_[input_ids_[i]];
        if (inputs[i].rows != n.rows || inputs[i].cols != n.cols)
            throw ShapeError("tape: input shape mismatch at " + node_label(input_ids_[i]));
        val_[input_ids_[i]] = inputs[i];
    }

    for (NodeId id = 0; id < static_cast<NodeId>(nodes_.size()); ++id) {
        const Node& n = nodes_[id];
        Mat& out = val_[id];
        switch (n.op) {
            case Op::kInput:
                break;  // already bound
            case Op::kConst:
                out = const_vals_[const_slot_[id]];
                break;
            case Op::kAdd:
            case Op::kSub:
            case Op::kMul:
            case Op::kDiv: {
                const Mat &A = val_[n.a], &B = val_[n.b];
                out = Mat(n.rows, n.cols);
                const bool sa = A.scalar(), sb = B.scalar();
                for (size_t i = 0; i < out.size(); ++i) {
                    const double x = sa ? A.v[0] : A.v[i];
                    const double y = sb ? B.v[0] : B.v[i];
                    switch (n.op) {
                        case Op::kAdd: out.v[i] = x + y; break;
                        case Op::kSub: out.v[i] = x - y; break;
                        case Op::kMul: out.v[i] = x * y; break;
                        default: out.v[i] = x / y; break;
                    }
                }
                break;
            }
            case Op::kSqrt: {
                const Mat& A = val_[n.a];
                out = Mat(n.rows, n.cols);
                for (size_t i = 0; i < out.size(); ++i) {
                    if (A.v[i] < 0.0)
                        throw DomainViolation("sqrt of negative value at " + node_label(id));
                    out.v[i] = std::sqrt(A.v[i]);
                }
                break;
            }
            case Op::kLog2: {
                const Mat& A = val_[n.a];
                out = Mat(n.rows, n.cols);
                for (size_t i = 0; i < out.size(); ++i) {
                    if (!(A.v[i] > 0.0))
                        throw DomainViolation("log2 of nonpositive value at " + node_label(id));
                    out.v[i] = std::log2(A.v[i]);
                }
                break;
            }
            case Op::kExp: {
                const Mat& A = val_[n.a];
                out = Mat(n.rows, n.cols);
                for (size_t i = 0; i < out.size(); ++i) out.v[i] = std::exp(A.v[i]);
                break;
            }
            case Op::kSigmoid: {
                const Mat& A = val_[n.a];
                out = Mat(n.rows, n.cols);
                for (size_t i = 0; i < out.size(); ++i)
                    out.v[i] = 1.0 / (1.0 + std::exp(-A.v[i]));
                break;
            }
            case Op::kMatMul: {
                const Mat &A = val_[n.a], &B = val_[n.b];
                out = Mat(n.rows, n.cols);
                const int inner = n.tr_a ? nodes_[n.a].rows : nodes_[n.a].cols;
                for (int r = 0; r < n.rows; ++r) {
                    for (int c = 0; c < n.cols; ++c) {
                        double acc = 0.0;
                        for (int t = 0; t < inner; ++t) {
                            const double x = n.tr_a ? A.at(t, r) : A.at(r, t);
                            const double y = n.tr_b ? B.at(c, t) : B.at(t, c);
                            acc += x * y;
                        }
                        out.at(r, c) = acc;
                    }
                }
                break;
            }
            case Op::kSoftmaxRows: {
                const Mat& A = val_[n.a];
                out = Mat(n.rows, n.cols);
                for (int r = 0; r < n.rows; ++r) {
                    double mx = A.at(r, 0);
                    for (int c = 1; c < n.cols; ++c) mx = std::max(mx, A.at(r, c));
                    double sum = 0.0;
                    for (int c = 0; c < n.cols; ++c) {
                        const double e = std::exp(A.at(r, c) - mx);
                        out.at(r, c) = e;
                        sum += e;
                    }
                    for (int c = 0; c < n.cols; ++c) out.at(r, c) /= sum;
                }
                break;
            }
            case Op::kReduceSum: {
                const Mat& A = val_[n.a];
                double acc = 0.0;
                for (double x : A.v) acc += x;
                out = Mat::scalar_of(acc);
                break;
            }
            case Op::kClamp: {
                const Mat& A = val_[n.a];
                out = Mat(n.rows, n.cols);
                for (size_t i = 0; i < out.size(); ++i)
                    out.v[i] = std::clamp(A.v[i], n.lo, n.hi);
                break;
            }
            case Op::kReshape: {
                out = val_[n.a];
                out.rows = n.rows;
                out.cols = n.cols;
                break;
            }
        }
    }
    forward_done_ = true;
    backward_done_ = false;
    return val_[output_];
}

void Tape::backward() {
    if (!forward_done_) throw StateError("tape: backward() before forward()");
    const Node& on = nodes_[output_];
    if (on.rows != 1 || on.cols != 1) throw StateError("tape: output must be scalar for backward()");

    adj_.assign(nodes_.size(), Mat());
    for (NodeId id = 0; id < static_cast<NodeId>(nodes_.size()); ++id)
        adj_[id] = Mat(nodes_[id].rows, nodes_[id].cols, 0.0);
    adj_[output_].v[0] = 1.0;

    auto accumulate_binary = [&](const Node& n, NodeId id) {
        const Mat &A = val_[n.a], &B = val_[n.b];
        const Mat& dout = adj_[id];
        Mat &dA = adj_[n.a], &dB = adj_[n.b];
        const bool sa = A.scalar(), sb = B.scalar();
        for (size_t i = 0; i < dout.size(); ++i) {
            const double x = sa ? A.v[0] : A.v[i];
            const double y = sb ? B.v[0] : B.v[i];
            const double g = dout.v[i];
            double gx = 0.0, gy = 0.0;
            switch (n.op) {
                case Op::kAdd: gx = g; gy = g; break;
                case Op::kSub: gx = g; gy = -g; break;
                case Op::kMul: gx = g * y; gy = g * x; break;
                default: gx = g / y; gy = -g * x / (y * y); break;
            }
            dA.v[sa ? 0 : i] += gx;
            dB.v[sb ? 0 : i] += gy;
        }
    };

    for (NodeId id = static_cast<NodeId>(nodes_.size()) - 1; id >= 0; --id) {
        const Node& n = nodes_[id];
        const Mat& dout = adj_[id];
        switch (n.op) {
            case Op::kInput:
            case Op::kConst:
                break;
            case Op::kAdd:
            case Op::kSub:
            case Op::kMul:
            case Op::kDiv:
                accumulate_binary(n, id);
                break;
            case Op::kSqrt: {
                // Subgradient at sqrt(0) defined as 0 to keep clamped-off
                // branches from poisoning the pass with inf * 0.
                const Mat& Y = val_[id];
                Mat& dA = adj_[n.a];
                for (size_t i = 0; i < dout.size(); ++i)
                    dA.v[i] += Y.v[i] == 0.0 ? 0.0 : dout.v[i] / (2.0 * Y.v[i]);
                break;
            }
            case Op::kLog2: {
                const Mat& A = val_[n.a];
                Mat& dA = adj_[n.a];
                for (size_t i = 0; i < dout.size(); ++i)
                    dA.v[i] += dout.v[i] / (A.v[i] * kLn2);
                break;
            }
            case Op::kExp: {
                const Mat& Y = val_[id];
                Mat& dA = adj_[n.a];
                for (size_t i = 0; i < dout.size(); ++i) dA.v[i] += dout.v[i] * Y.v[i];
                break;
            }
            case Op::kSigmoid: {
                const Mat& Y = val_[id];
                Mat& dA = adj_[n.a];
                for (size_t i = 0; i < dout.size(); ++i)
                    dA.v[i] += dout.v[i] * Y.v[i] * (1.0 - Y.v[i]);
                break;
            }
            case Op::kMatMul: {
                // With P = op(A), Q = op(B), C = P*Q:
                // dP = dC * Q^T, dQ = P^T * dC, then untranspose.
                const Mat &A = val_[n.a], &B = val_[n.b];
                Mat &dA = adj_[n.a], &dB = adj_[n.b];
                const int p_rows = n.rows;
                const int inner = n.tr_a ? nodes_[n.a].rows : nodes_[n.a].cols;
                const int q_cols = n.cols;
                for (int r = 0; r < p_rows; ++r) {
                    for (int t = 0; t < inner; ++t) {
                        double acc = 0.0;
                        for (int c = 0; c < q_cols; ++c) {
                            const double q = n.tr_b ? B.at(c, t) : B.at(t, c);
                            acc += dout.at(r, c) * q;
                        }
                        if (n.tr_a)
                            dA.at(t, r) += acc;
                        else
                            dA.at(r, t) += acc;
                    }
                }
                for (int t = 0; t < inner; ++t) {
                    for (int c = 0; c < q_cols; ++c) {
                        double acc = 0.0;
                        for (int r = 0; r < p_rows; ++r) {
                            const double p = n.tr_a ? A.at(t, r) : A.at(r, t);
                            acc += p * dout.at(r, c);
                        }
                        if (n.tr_b)
                            dB.at(c, t) += acc;
                        else
                            dB.at(t, c) += acc;
                    }
                }
                break;
            }
            case Op::kSoftmaxRows: {
                const Mat& Y = val_[id];
                Mat& dA = adj_[n.a];
                for (int r = 0; r < n.rows; ++r) {
                    double dot = 0.0;
                    for (int c = 0; c < n.cols; ++c) dot += dout.at(r, c) * Y.at(r, c);
                    for (int c = 0; c < n.cols; ++c)
                        dA.at(r, c) += Y.at(r, c) * (dout.at(r, c) - dot);
                }
                break;
            }
            case Op::kReduceSum: {
                Mat& dA = adj_[n.a];
                const double g = dout.v[0];
                for (double& x : dA.v) x += g;
                break;
            }
            case Op::kClamp: {
                // Identity inside [lo,hi] (bounds inclusive), zero outside.
                const Mat& A = val_[n.a];
                Mat& dA = adj_[n.a];
                for (size_t i = 0; i < dout.size(); ++i)
                    if (A.v[i] >= n.lo && A.v[i] <= n.hi) dA.v[i] += dout.v[i];
                break;
            }
            case Op::kReshape: {
                Mat& dA = adj_[n.a];
                for (size_t i = 0; i < dout.size(); ++i) dA.v[i] += dout.v[i];
                break;
            }
        }
    }
    backward_done_ = true;
}

double Tape::grad_check(const std::vector<Mat>& inputs, double h) {
    std::vector<int> all(input_ids_.size());
    for (size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
    return grad_check(inputs, h, all);
}

double Tape::grad_check(const std::vector<Mat>& inputs, double h,
                        const std::vector<int>& input_subset) {
    forward(inputs);
    backward();
    std::vector<Mat> analytic;
    analytic.reserve(input_ids_.size());
    for (size_t i = 0; i < input_ids_.size(); ++i) analytic.push_back(input_gradient(static_cast<int>(i)));

    double worst = 0.0;
    std::vector<Mat> probe = inputs;
    for (int i : input_subset) {
        for (size_t j = 0; j < probe[i].size(); ++j) {
            const double orig = probe[i].v[j];
            probe[i].v[j] = orig + h;
            const double fp = forward(probe).v[0];
            probe[i].v[j] = orig - h;
            const double fm = forward(probe).v[0];
            probe[i].v[j] = orig;
            const double numeric = (fp - fm) / (2.0 * h);
            const double a = analytic[i].v[j];
            const double denom = std::max(std::abs(a) + std::abs(numeric), 1e-8);
            worst = std::max(worst, std::abs(a - numeric) / denom);
        }
    }
    // Restore the center point's values/adjoints.
    forward(inputs);
    backward();
    return worst;
}

}  // namespace wsee::ad
