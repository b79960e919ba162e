#include "cosfuse/graph.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cosfuse/errors.hpp"

namespace cosfuse {

namespace {

constexpr double kNormGuard = 1e-12;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) {
        std::ostringstream msg;
        msg << op << ": shape mismatch " << a.shape_str() << " vs " << b.shape_str();
        throw shape_error(msg.str());
    }
}

void require_rank(const Tensor& t, int rank, const char* op) {
    if (t.rank() != rank) {
        std::ostringstream msg;
        msg << op << ": expected rank " << rank << " tensor, got " << t.shape_str();
        throw shape_error(msg.str());
    }
}

double guarded_norm(const Tensor& t, const char* what) {
    const double n = t.norm2();
    if (n <= kNormGuard) {
        std::ostringstream msg;
        msg << "degenerate vector: " << what << " has near-zero norm (" << n << ")";
        throw degenerate_vector_error(msg.str());
    }
    return n;
}

}  // namespace

Var Graph::push(Node n) {
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

void Graph::check(Var v) const {
    if (!v.valid() || v.id >= static_cast<int>(nodes_.size())) {
        throw contract_error("Var does not belong to this graph");
    }
}

const Graph::Node& Graph::node(Var v) const {
    check(v);
    return nodes_[static_cast<size_t>(v.id)];
}

const Tensor& Graph::val(Var v) const {
    return node(v).out;
}

Tensor Graph::grad(Var v) const {
    const Node& n = node(v);
    if (!n.grad_live) {
        return Tensor::zeros(n.out.shape());
    }
    return n.grad;
}

bool Graph::has_grad(Var v) const {
    return node(v).grad_live;
}

bool Graph::requires_grad(Var v) const {
    return node(v).requires_grad;
}

Var Graph::constant(Tensor t) {
    Node n;
    n.out = std::move(t);
    return push(std::move(n));
}

Var Graph::param(Tensor t) {
    Node n;
    n.out = std::move(t);
    n.requires_grad = true;
    return push(std::move(n));
}

Var Graph::add(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    require_same_shape(ta, tb, "add");
    Node n;
    n.op = Op::add;
    n.ins = {a.id, b.id};
    n.out = ta;
    for (int i = 0; i < n.out.size(); i++) {
        n.out.at(i) += tb.at(i);
    }
    n.requires_grad = requires_grad(a) || requires_grad(b);
    return push(std::move(n));
}

Var Graph::sub(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    require_same_shape(ta, tb, "sub");
    Node n;
    n.op = Op::sub;
    n.ins = {a.id, b.id};
    n.out = ta;
    for (int i = 0; i < n.out.size(); i++) {
        n.out.at(i) -= tb.at(i);
    }
    n.requires_grad = requires_grad(a) || requires_grad(b);
    return push(std::move(n));
}

Var Graph::mul(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    require_same_shape(ta, tb, "mul");
    Node n;
    n.op = Op::mul;
    n.ins = {a.id, b.id};
    n.out = ta;
    for (int i = 0; i < n.out.size(); i++) {
        n.out.at(i) *= tb.at(i);
    }
    n.requires_grad = requires_grad(a) || requires_grad(b);
    return push(std::move(n));
}

Var Graph::scale(Var a, double c) {
    Node n;
    n.op = Op::scale;
    n.ins = {a.id};
    n.out = val(a);
    n.c = c;
    for (int i = 0; i < n.out.size(); i++) {
        n.out.at(i) *= c;
    }
    n.requires_grad = requires_grad(a);
    return push(std::move(n));
}

Var Graph::add_scalar(Var a, double c) {
    Node n;
    n.op = Op::add_scalar;
    n.ins = {a.id};
    n.out = val(a);
    n.c = c;
    for (int i = 0; i < n.out.size(); i++) {
        n.out.at(i) += c;
    }
    n.requires_grad = requires_grad(a);
    return push(std::move(n));
}

Var Graph::matmul(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    require_rank(ta, 2, "matmul");
    require_rank(tb, 2, "matmul");
    if (ta.cols() != tb.rows()) {
        std::ostringstream msg;
        msg << "matmul: inner dimensions differ, " << ta.shape_str() << " x "
            << tb.shape_str();
        throw shape_error(msg.str());
    }
    Node n;
    n.op = Op::matmul;
    n.ins = {a.id, b.id};
    n.out = Tensor::zeros({ta.rows(), tb.cols()});
    for (int i = 0; i < ta.rows(); i++) {
        for (int k = 0; k < ta.cols(); k++) {
            const double aik = ta.at(i, k);
            for (int j = 0; j < tb.cols(); j++) {
                n.out.at(i, j) += aik * tb.at(k, j);
            }
        }
    }
    n.requires_grad = requires_grad(a) || requires_grad(b);
    return push(std::move(n));
}

Var Graph::matvec(Var m, Var x) {
    const Tensor& tm = val(m);
    const Tensor& tx = val(x);
    require_rank(tm, 2, "matvec");
    require_rank(tx, 1, "matvec");
    if (tm.cols() != tx.size()) {
        std::ostringstream msg;
        msg << "matvec: " << tm.shape_str() << " x " << tx.shape_str();
        throw shape_error(msg.str());
    }
    Node n;
    n.op = Op::matvec;
    n.ins = {m.id, x.id};
    n.out = Tensor::zeros({tm.rows()});
    for (int i = 0; i < tm.rows(); i++) {
        double s = 0.0;
        for (int j = 0; j < tm.cols(); j++) {
            s += tm.at(i, j) * tx.at(j);
        }
        n.out.at(i) = s;
    }
    n.requires_grad = requires_grad(m) || requires_grad(x);
    return push(std::move(n));
}

Var Graph::vecmat(Var x, Var m) {
    const Tensor& tx = val(x);
    const Tensor& tm = val(m);
    require_rank(tx, 1, "vecmat");
    require_rank(tm, 2, "vecmat");
    if (tx.size() != tm.rows()) {
        std::ostringstream msg;
        msg << "vecmat: " << tx.shape_str() << " x " << tm.shape_str();
        throw shape_error(msg.str());
    }
    Node n;
    n.op = Op::vecmat;
    n.ins = {x.id, m.id};
    n.out = Tensor::zeros({tm.cols()});
    for (int i = 0; i < tm.rows(); i++) {
        const double xi = tx.at(i);
        for (int j = 0; j < tm.cols(); j++) {
            n.out.at(j) += xi * tm.at(i, j);
        }
    }
    n.requires_grad = requires_grad(x) || requires_grad(m);
    return push(std::move(n));
}

Var Graph::tanh(Var x) {
    Node n;
    n.op = Op::tanh_fn;
    n.ins = {x.id};
    n.out = val(x);
    for (int i = 0; i < n.out.size(); i++) {
        n.out.at(i) = std::tanh(n.out.at(i));
    }
    n.requires_grad = requires_grad(x);
    return push(std::move(n));
}

Var Graph::sigmoid(Var x) {
    Node n;
    n.op = Op::sigmoid_fn;
    n.ins = {x.id};
    n.out = val(x);
    for (int i = 0; i < n.out.size(); i++) {
        n.out.at(i) = 1.0 / (1.0 + std::exp(-n.out.at(i)));
    }
    n.requires_grad = requires_grad(x);
    return push(std::move(n));
}

Var Graph::log(Var x) {
    Node n;
    n.op = Op::log_fn;
    n.ins = {x.id};
    n.out = val(x);
    for (int i = 0; i < n.out.size(); i++) {
        n.out.at(i) = std::log(n.out.at(i));
    }
    n.requires_grad = requires_grad(x);
    return push(std::move(n));
}

Var Graph::concat(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    require_rank(ta, 1, "concat");
    require_rank(tb, 1, "concat");
    Node n;
    n.op = Op::concat;
    n.ins = {a.id, b.id};
    std::vector<double> out = ta.data();
    out.insert(out.end(), tb.data().begin(), tb.data().end());
    n.out = Tensor::vec(std::move(out));
    n.requires_grad = requires_grad(a) || requires_grad(b);
    return push(std::move(n));
}

Var Graph::slice_row(Var m, int row) {
    const Tensor& tm = val(m);
    require_rank(tm, 2, "slice_row");
    if (row < 0 || row >= tm.rows()) {
        throw contract_error("slice_row: row " + std::to_string(row) +
                             " out of range for " + tm.shape_str());
    }
    Node n;
    n.op = Op::slice_row;
    n.ins = {m.id};
    n.index = row;
    std::vector<double> out(tm.data().begin() + static_cast<size_t>(row) * tm.cols(),
                            tm.data().begin() + static_cast<size_t>(row + 1) * tm.cols());
    n.out = Tensor::vec(std::move(out));
    n.requires_grad = requires_grad(m);
    return push(std::move(n));
}

Var Graph::stack_rows(const std::vector<Var>& rows) {
    if (rows.empty()) {
        throw contract_error("stack_rows: no rows");
    }
    const int cols = val(rows[0]).size();
    Node n;
    n.op = Op::stack_rows;
    std::vector<double> out;
    out.reserve(static_cast<size_t>(cols) * rows.size());
    for (Var r : rows) {
        const Tensor& tr = val(r);
        require_rank(tr, 1, "stack_rows");
        if (tr.size() != cols) {
            throw shape_error("stack_rows: row length " + std::to_string(tr.size()) +
                              " != " + std::to_string(cols));
        }
        out.insert(out.end(), tr.data().begin(), tr.data().end());
        n.ins.push_back(r.id);
        n.requires_grad = n.requires_grad || requires_grad(r);
    }
    n.out = Tensor::mat(static_cast<int>(rows.size()), cols, std::move(out));
    return push(std::move(n));
}

Var Graph::pick(Var x, int index) {
    const Tensor& tx = val(x);
    require_rank(tx, 1, "pick");
    if (index < 0 || index >= tx.size()) {
        throw contract_error("pick: index " + std::to_string(index) +
                             " out of range for " + tx.shape_str());
    }
    Node n;
    n.op = Op::pick;
    n.ins = {x.id};
    n.index = index;
    n.out = Tensor::scalar(tx.at(index));
    n.requires_grad = requires_grad(x);
    return push(std::move(n));
}

Var Graph::sum(Var x) {
    const Tensor& tx = val(x);
    double s = 0.0;
    for (int i = 0; i < tx.size(); i++) {
        s += tx.at(i);
    }
    Node n;
    n.op = Op::sum;
    n.ins = {x.id};
    n.out = Tensor::scalar(s);
    n.requires_grad = requires_grad(x);
    return push(std::move(n));
}

Var Graph::mean(Var x) {
    const Tensor& tx = val(x);
    double s = 0.0;
    for (int i = 0; i < tx.size(); i++) {
        s += tx.at(i);
    }
    Node n;
    n.op = Op::mean;
    n.ins = {x.id};
    n.out = Tensor::scalar(s / tx.size());
    n.requires_grad = requires_grad(x);
    return push(std::move(n));
}

Var Graph::softmax_temp(Var logits, double tau) {
    if (!(tau > 0.0)) {
        throw config_error("softmax temperature must be positive, got " +
                           std::to_string(tau));
    }
    const Tensor& tl = val(logits);
    require_rank(tl, 1, "softmax");
    Node n;
    n.op = Op::softmax_temp;
    n.ins = {logits.id};
    n.c = tau;
    n.out = tl;
    double mx = n.out.at(0);
    for (int i = 1; i < n.out.size(); i++) {
        mx = std::max(mx, n.out.at(i));
    }
    double z = 0.0;
    for (int i = 0; i < n.out.size(); i++) {
        n.out.at(i) = std::exp((n.out.at(i) - mx) / tau);
        z += n.out.at(i);
    }
    for (int i = 0; i < n.out.size(); i++) {
        n.out.at(i) /= z;
    }
    n.requires_grad = requires_grad(logits);
    return push(std::move(n));
}

Var Graph::cosine(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    require_rank(ta, 1, "cosine");
    require_same_shape(ta, tb, "cosine");
    const double na = guarded_norm(ta, "cosine lhs");
    const double nb = guarded_norm(tb, "cosine rhs");
    double dot = 0.0;
    for (int i = 0; i < ta.size(); i++) {
        dot += ta.at(i) * tb.at(i);
    }
    Node n;
    n.op = Op::cosine;
    n.ins = {a.id, b.id};
    // Clamp to absorb roundoff so downstream 1 - cos stays in [0, 2].
    n.out = Tensor::scalar(std::clamp(dot / (na * nb), -1.0, 1.0));
    n.requires_grad = requires_grad(a) || requires_grad(b);
    return push(std::move(n));
}

Var Graph::cosine_table(Var x, Var table) {
    const Tensor& tx = val(x);
    const Tensor& tt = val(table);
    require_rank(tx, 1, "cosine_table");
    require_rank(tt, 2, "cosine_table");
    if (tt.cols() != tx.size()) {
        std::ostringstream msg;
        msg << "cosine_table: " << tx.shape_str() << " vs rows of " << tt.shape_str();
        throw shape_error(msg.str());
    }
    if (requires_grad(table)) {
        throw contract_error("cosine_table: table must be a frozen node");
    }
    const double nx = guarded_norm(tx, "cosine_table query");
    Node n;
    n.op = Op::cosine_table;
    n.ins = {x.id, table.id};
    n.out = Tensor::zeros({tt.rows()});
    for (int v = 0; v < tt.rows(); v++) {
        double dot = 0.0;
        double nr = 0.0;
        for (int j = 0; j < tt.cols(); j++) {
            dot += tx.at(j) * tt.at(v, j);
            nr += tt.at(v, j) * tt.at(v, j);
        }
        nr = std::sqrt(nr);
        if (nr <= kNormGuard) {
            throw degenerate_vector_error("cosine_table: embedding row for token id " +
                                          std::to_string(v) + " has near-zero norm");
        }
        // Clamp to absorb roundoff before any division by the temperature.
        n.out.at(v) = std::clamp(dot / (nx * nr), -1.0, 1.0);
    }
    n.requires_grad = requires_grad(x);
    return push(std::move(n));
}

void Graph::accumulate(int id, const Tensor& g) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.requires_grad) {
        return;
    }
    if (!n.grad_live) {
        n.grad = Tensor::zeros(n.out.shape());
        n.grad_live = true;
    }
    for (int i = 0; i < g.size(); i++) {
        n.grad.at(i) += g.at(i);
    }
}

void Graph::backward(Var loss) {
    const Node& ln = node(loss);
    if (ln.out.size() != 1) {
        throw contract_error("backward: loss must be scalar, got " +
                             ln.out.shape_str());
    }
    accumulate(loss.id, Tensor::scalar(1.0));
    for (int id = loss.id; id >= 0; id--) {
        const Node& n = nodes_[static_cast<size_t>(id)];
        if (n.grad_live && n.op != Op::leaf) {
            backward_node(id);
        }
    }
}

void Graph::backward_node(int id) {
    // Copy the incoming gradient: accumulate() may reallocate nodes_' grads
    // but never nodes_ itself, so references into nodes_ stay valid.
    const Node& n = nodes_[static_cast<size_t>(id)];
    const Tensor g = n.grad;
    switch (n.op) {
        case Op::leaf:
            break;
        case Op::add: {
            accumulate(n.ins[0], g);
            accumulate(n.ins[1], g);
            break;
        }
        case Op::sub: {
            accumulate(n.ins[0], g);
            Tensor gb = g;
            for (int i = 0; i < gb.size(); i++) {
                gb.at(i) = -gb.at(i);
            }
            accumulate(n.ins[1], gb);
            break;
        }
        case Op::mul: {
            const Tensor& a = nodes_[static_cast<size_t>(n.ins[0])].out;
            const Tensor& b = nodes_[static_cast<size_t>(n.ins[1])].out;
            Tensor ga = g;
            Tensor gb = g;
            for (int i = 0; i < g.size(); i++) {
                ga.at(i) *= b.at(i);
                gb.at(i) *= a.at(i);
            }
            accumulate(n.ins[0], ga);
            accumulate(n.ins[1], gb);
            break;
        }
        case Op::scale: {
            Tensor ga = g;
            for (int i = 0; i < ga.size(); i++) {
                ga.at(i) *= n.c;
            }
            accumulate(n.ins[0], ga);
            break;
        }
        case Op::add_scalar: {
            accumulate(n.ins[0], g);
            break;
        }
        case Op::matmul: {
            const Tensor& a = nodes_[static_cast<size_t>(n.ins[0])].out;
            const Tensor& b = nodes_[static_cast<size_t>(n.ins[1])].out;
            Tensor ga = Tensor::zeros(a.shape());  // G B^T
            Tensor gb = Tensor::zeros(b.shape());  // A^T G
            for (int i = 0; i < a.rows(); i++) {
                for (int j = 0; j < b.cols(); j++) {
                    const double gij = g.at(i, j);
                    for (int k = 0; k < a.cols(); k++) {
                        ga.at(i, k) += gij * b.at(k, j);
                        gb.at(k, j) += a.at(i, k) * gij;
                    }
                }
            }
            accumulate(n.ins[0], ga);
            accumulate(n.ins[1], gb);
            break;
        }
        case Op::matvec: {
            const Tensor& m = nodes_[static_cast<size_t>(n.ins[0])].out;
            const Tensor& x = nodes_[static_cast<size_t>(n.ins[1])].out;
            Tensor gm = Tensor::zeros(m.shape());
            Tensor gx = Tensor::zeros(x.shape());
            for (int i = 0; i < m.rows(); i++) {
                const double gi = g.at(i);
                for (int j = 0; j < m.cols(); j++) {
                    gm.at(i, j) += gi * x.at(j);
                    gx.at(j) += gi * m.at(i, j);
                }
            }
            accumulate(n.ins[0], gm);
            accumulate(n.ins[1], gx);
            break;
        }
        case Op::vecmat: {
            const Tensor& x = nodes_[static_cast<size_t>(n.ins[0])].out;
            const Tensor& m = nodes_[static_cast<size_t>(n.ins[1])].out;
            Tensor gx = Tensor::zeros(x.shape());
            Tensor gm = Tensor::zeros(m.shape());
            for (int i = 0; i < m.rows(); i++) {
                for (int j = 0; j < m.cols(); j++) {
                    gx.at(i) += g.at(j) * m.at(i, j);
                    gm.at(i, j) += x.at(i) * g.at(j);
                }
            }
            accumulate(n.ins[0], gx);
            accumulate(n.ins[1], gm);
            break;
        }
        case Op::tanh_fn: {
            Tensor gx = g;
            for (int i = 0; i < gx.size(); i++) {
                gx.at(i) *= 1.0 - n.out.at(i) * n.out.at(i);
            }
            accumulate(n.ins[0], gx);
            break;
        }
        case Op::sigmoid_fn: {
            Tensor gx = g;
            for (int i = 0; i < gx.size(); i++) {
                gx.at(i) *= n.out.at(i) * (1.0 - n.out.at(i));
            }
            accumulate(n.ins[0], gx);
            break;
        }
        case Op::log_fn: {
            const Tensor& x = nodes_[static_cast<size_t>(n.ins[0])].out;
            Tensor gx = g;
            for (int i = 0; i < gx.size(); i++) {
                gx.at(i) /= x.at(i);
            }
            accumulate(n.ins[0], gx);
            break;
        }
        case Op::concat: {
            const Tensor& a = nodes_[static_cast<size_t>(n.ins[0])].out;
            const Tensor& b = nodes_[static_cast<size_t>(n.ins[1])].out;
            Tensor ga = Tensor::zeros(a.shape());
            Tensor gb = Tensor::zeros(b.shape());
            for (int i = 0; i < a.size(); i++) {
                ga.at(i) = g.at(i);
            }
            for (int i = 0; i < b.size(); i++) {
                gb.at(i) = g.at(a.size() + i);
            }
            accumulate(n.ins[0], ga);
            accumulate(n.ins[1], gb);
            break;
        }
        case Op::slice_row: {
            const Tensor& m = nodes_[static_cast<size_t>(n.ins[0])].out;
            Tensor gm = Tensor::zeros(m.shape());
            for (int j = 0; j < m.cols(); j++) {
                gm.at(n.index, j) = g.at(j);
            }
            accumulate(n.ins[0], gm);
            break;
        }
        case Op::stack_rows: {
            const int cols = n.out.cols();
            for (size_t r = 0; r < n.ins.size(); r++) {
                Tensor gr = Tensor::zeros({cols});
                for (int j = 0; j < cols; j++) {
                    gr.at(j) = g.at(static_cast<int>(r), j);
                }
                accumulate(n.ins[r], gr);
            }
            break;
        }
        case Op::pick: {
            const Tensor& x = nodes_[static_cast<size_t>(n.ins[0])].out;
            Tensor gx = Tensor::zeros(x.shape());
            gx.at(n.index) = g.item();
            accumulate(n.ins[0], gx);
            break;
        }
        case Op::sum: {
            const Tensor& x = nodes_[static_cast<size_t>(n.ins[0])].out;
            accumulate(n.ins[0], Tensor::full(x.shape(), g.item()));
            break;
        }
        case Op::mean: {
            const Tensor& x = nodes_[static_cast<size_t>(n.ins[0])].out;
            accumulate(n.ins[0], Tensor::full(x.shape(), g.item() / x.size()));
            break;
        }
        case Op::softmax_temp: {
            double dot = 0.0;
            for (int i = 0; i < g.size(); i++) {
                dot += g.at(i) * n.out.at(i);
            }
            Tensor gx = g;
            for (int i = 0; i < gx.size(); i++) {
                gx.at(i) = n.out.at(i) * (g.at(i) - dot) / n.c;
            }
            accumulate(n.ins[0], gx);
            break;
        }
        case Op::cosine: {
            const Tensor& a = nodes_[static_cast<size_t>(n.ins[0])].out;
            const Tensor& b = nodes_[static_cast<size_t>(n.ins[1])].out;
            const double na = a.norm2();
            const double nb = b.norm2();
            const double cos = n.out.item();
            const double gs = g.item();
            Tensor ga = Tensor::zeros(a.shape());
            Tensor gb = Tensor::zeros(b.shape());
            for (int i = 0; i < a.size(); i++) {
                ga.at(i) = gs * (b.at(i) / (na * nb) - cos * a.at(i) / (na * na));
                gb.at(i) = gs * (a.at(i) / (na * nb) - cos * b.at(i) / (nb * nb));
            }
            accumulate(n.ins[0], ga);
            accumulate(n.ins[1], gb);
            break;
        }
        case Op::cosine_table: {
            const Tensor& x = nodes_[static_cast<size_t>(n.ins[0])].out;
            const Tensor& t = nodes_[static_cast<size_t>(n.ins[1])].out;
            const double nx = x.norm2();
            Tensor gx = Tensor::zeros(x.shape());
            for (int v = 0; v < t.rows(); v++) {
                const double gv = g.at(v);
                if (gv == 0.0) {
                    continue;
                }
                double nr = 0.0;
                for (int j = 0; j < t.cols(); j++) {
                    nr += t.at(v, j) * t.at(v, j);
                }
                nr = std::sqrt(nr);
                const double cos = n.out.at(v);
                for (int j = 0; j < x.size(); j++) {
                    gx.at(j) += gv * (t.at(v, j) / (nx * nr) - cos * x.at(j) / (nx * nx));
                }
            }
            accumulate(n.ins[0], gx);
            break;
        }
    }
}

double grad_check(const std::function<Var(Graph&, Var)>& fn, const Tensor& point,
                  double eps) {
    auto wrapped = [&fn](Graph& g, const std::vector<Var>& vars) {
        return fn(g, vars[0]);
    };
    return grad_check(wrapped, std::vector<Tensor>{point}, eps);
}

double grad_check(const std::function<Var(Graph&, const std::vector<Var>&)>& fn,
                  const std::vector<Tensor>& points, double eps) {
    std::vector<Tensor> analytic;
    {
        Graph g;
        std::vector<Var> vars;
        vars.reserve(points.size());
        for (const Tensor& p : points) {
            vars.push_back(g.param(p));
        }
        Var loss = fn(g, vars);
        g.backward(loss);
        for (Var v : vars) {
            analytic.push_back(g.grad(v));
        }
    }

    auto eval_at = [&fn](const std::vector<Tensor>& pts) {
        Graph g;
        std::vector<Var> vars;
        vars.reserve(pts.size());
        for (const Tensor& p : pts) {
            vars.push_back(g.constant(p));
        }
        return g.val(fn(g, vars)).item();
    };

    double max_rel = 0.0;
    std::vector<Tensor> work = points;
    for (size_t k = 0; k < points.size(); k++) {
        for (int i = 0; i < points[k].size(); i++) {
            const double orig = work[k].at(i);
            work[k].at(i) = orig + eps;
            const double fp = eval_at(work);
            work[k].at(i) = orig - eps;
            const double fm = eval_at(work);
            work[k].at(i) = orig;
            const double fd = (fp - fm) / (2.0 * eps);
            const double ga = analytic[k].at(i);
            const double rel =
                std::abs(ga - fd) / std::max({std::abs(ga), std::abs(fd), 1e-8});
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

}  // namespace cosfuse
