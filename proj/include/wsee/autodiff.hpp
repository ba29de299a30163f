#pragma once

#include <string>
#include <vector>

#include "wsee/types.hpp"

// Minimal reverse-mode automatic differentiation over a static expression
// tape of small dense matrices. The primitive set is exactly what the
// solver objectives and the unfolded models need: add, sub, mul, div,
// sqrt, log2, exp, sigmoid, matmul (with transpose flags), row softmax,
// reduce-sum, clamp, plus shape-only reshape. Elementwise binaries accept
// equal shapes or a scalar on either side; matmul is the only
// cross-shape coupling.
//
// A tape is built once for a given problem shape, then forward(inputs)
// and backward() run repeatedly with new input values. Single writer per
// tape; distinct tapes are independent.

namespace wsee::ad {

struct Mat {
    int rows = 0, cols = 0;
    std::vector<double> v;

    Mat() = default;
    Mat(int r, int c, double fill = 0.0) : rows(r), cols(c), v(static_cast<size_t>(r) * c, fill) {}

    double& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
    size_t size() const { return v.size(); }
    bool scalar() const { return rows == 1 && cols == 1; }

    static Mat scalar_of(double x) {
        Mat m(1, 1);
        m.v[0] = x;
        return m;
    }
    static Mat from_grid(const Grid& g) {
        Mat m(g.num_bs(), g.users_per_bs());
        m.v = g.flat();
        return m;
    }
    Grid to_grid() const {
        Grid g(rows, cols);
        g.flat() = v;
        return g;
    }
};

using NodeId = int;

enum class Op {
    kInput,
    kConst,
    kAdd,
    kSub,
    kMul,
    kDiv,
    kSqrt,
    kLog2,
    kExp,
    kSigmoid,
    kMatMul,
    kSoftmaxRows,
    kReduceSum,
    kClamp,
    kReshape,
};

class Tape {
  public:
    // --- graph construction -------------------------------------------
    NodeId input(int rows, int cols, std::string name = "");
    NodeId constant(Mat value, std::string name = "");
    NodeId constant_scalar(double x) { return constant(Mat::scalar_of(x)); }

    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId div(NodeId a, NodeId b);
    NodeId sqrt(NodeId a);
    NodeId log2(NodeId a);
    NodeId exp(NodeId a);
    NodeId sigmoid(NodeId a);
    NodeId matmul(NodeId a, NodeId b, bool transpose_a = false, bool transpose_b = false);
    NodeId softmax_rows(NodeId a);
    NodeId reduce_sum(NodeId a);
    NodeId clamp(NodeId a, double lo, double hi);
    NodeId reshape(NodeId a, int rows, int cols);

    // Conveniences composed from the primitives above.
    NodeId scale(NodeId a, double c) { return mul(a, constant_scalar(c)); }
    NodeId add_const(NodeId a, double c) { return add(a, constant_scalar(c)); }

    void set_output(NodeId id);
    NodeId output() const { return output_; }

    int num_inputs() const { return static_cast<int>(input_ids_.size()); }
    int num_nodes() const { return static_cast<int>(nodes_.size()); }
    int rows(NodeId id) const { return nodes_[id].rows; }
    int cols(NodeId id) const { return nodes_[id].cols; }

    // --- execution ------------------------------------------------------
    // Evaluates every node; `inputs` bind positionally to the declared
    // inputs. Returns the output node's value. Throws DomainViolation
    // (naming the node) on log2 of <= 0 or sqrt of < 0, ShapeError on
    // input shape mismatch.
    const Mat& forward(const std::vector<Mat>& inputs);

    // Reverse pass seeding d(output)=1; output must be scalar and forward
    // must have completed (StateError otherwise).
    void backward();

    const Mat& value(NodeId id) const;
    const Mat& adjoint(NodeId id) const;
    // Adjoint of the i-th declared input.
    const Mat& input_gradient(int input_index) const;

    // Central-difference check of backward() against the numeric gradient
    // of the scalar output w.r.t. every input coordinate. Returns the
    // worst relative error. The second form restricts the check to the
    // listed input positions (e.g. parameters only, leaving domain-scaled
    // data inputs alone).
    double grad_check(const std::vector<Mat>& inputs, double h = 1e-5);
    double grad_check(const std::vector<Mat>& inputs, double h,
                      const std::vector<int>& input_subset);

  private:
    struct Node {
        Op op = Op::kConst;
        NodeId a = -1, b = -1;
        int rows = 0, cols = 0;
        double lo = 0.0, hi = 0.0;  // clamp bounds
        bool tr_a = false, tr_b = false;
        std::string name;
    };

    NodeId push(Node n);
    void check_built(NodeId id) const;
    std::string node_label(NodeId id) const;

    std::vector<Node> nodes_;
    std::vector<Mat> val_;
    std::vector<Mat> adj_;
    std::vector<NodeId> input_ids_;
    std::vector<Mat> const_vals_;
    std::vector<int> const_slot_;  // per-node index into const_vals_ or -1
    NodeId output_ = -1;
    bool forward_done_ = false;
    bool backward_done_ = false;
};

}  // namespace wsee::ad
