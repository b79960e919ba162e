#pragma once

#include <functional>
#include <vector>

#include "cosfuse/tensor.hpp"

namespace cosfuse {

// Handle to a node in a Graph. Only meaningful for the graph that created it.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Define-by-run reverse-mode tape over Tensors. Nodes are appended in
// evaluation order, so the creation order is already topological; backward
// walks the tape once in reverse. A graph is built, differentiated and
// discarded per training step.
class Graph {
  public:
    // Frozen leaf: never receives a gradient.
    Var constant(Tensor t);
    // Differentiable leaf.
    Var param(Tensor t);

    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var a, double c);
    Var add_scalar(Var a, double c);

    Var matmul(Var a, Var b);
    // m: [r x c], x: [c] -> [r]
    Var matvec(Var m, Var x);
    // x: [r], m: [r x c] -> [c]  (x^T m)
    Var vecmat(Var x, Var m);

    Var tanh(Var x);
    Var sigmoid(Var x);
    Var log(Var x);

    Var concat(Var a, Var b);
    Var slice_row(Var m, int row);
    Var stack_rows(const std::vector<Var>& rows);
    // Element of a vector as a scalar node.
    Var pick(Var x, int index);

    Var sum(Var x);
    Var mean(Var x);

    Var softmax(Var logits) { return softmax_temp(logits, 1.0); }
    // p_i = exp(l_i / tau) / sum_k exp(l_k / tau), max-subtracted.
    Var softmax_temp(Var logits, double tau);

    // a.b / (|a| |b|), norms guarded at 1e-12, clamped to [-1, 1].
    // Differentiable in both arguments; frozen inputs simply receive no
    // gradient.
    Var cosine(Var a, Var b);
    // Cosine of x against every row of `table`, clamped to [-1, 1].
    // `table` must be a frozen node; the gradient only flows into x.
    Var cosine_table(Var x, Var table);

    const Tensor& val(Var v) const;
    // Zero tensor if the node never received a gradient.
    Tensor grad(Var v) const;
    bool has_grad(Var v) const;
    bool requires_grad(Var v) const;

    // Accumulates dLoss/dNode for every differentiable node reachable from
    // `loss`, which must be scalar.
    void backward(Var loss);

    size_t size() const { return nodes_.size(); }

  private:
    enum class Op {
        leaf,
        add,
        sub,
        mul,
        scale,
        add_scalar,
        matmul,
        matvec,
        vecmat,
        tanh_fn,
        sigmoid_fn,
        log_fn,
        concat,
        slice_row,
        stack_rows,
        pick,
        sum,
        mean,
        softmax_temp,
        cosine,
        cosine_table,
    };

    struct Node {
        Op op = Op::leaf;
        std::vector<int> ins;
        Tensor out;
        Tensor grad;
        bool requires_grad = false;
        bool grad_live = false;
        double c = 0.0;  // scale constant or softmax temperature
        int index = 0;   // slice_row / pick
    };

    Var push(Node node);
    const Node& node(Var v) const;
    void check(Var v) const;
    void accumulate(int id, const Tensor& g);
    void backward_node(int id);

    std::vector<Node> nodes_;
};

// Max over coordinates of |g_analytic - g_fd| / max(|g_analytic|, |g_fd|, 1e-8),
// central differences with step eps. `fn` must rebuild the same scalar loss
// from the leaf it is handed.
double grad_check(const std::function<Var(Graph&, Var)>& fn, const Tensor& point,
                  double eps);

// Same check over a list of leaves (e.g. every parameter of a model).
double grad_check(const std::function<Var(Graph&, const std::vector<Var>&)>& fn,
                  const std::vector<Tensor>& points, double eps);

}  // namespace cosfuse
