#include "topicdpr/autodiff.hpp"

#include <cmath>

#include "topicdpr/common.hpp"

namespace topicdpr::ad {

namespace {

void require(bool ok, const char* what) {
    if (!ok) throw DataError(std::string("tape op precondition failed: ") + what);
}

}  // namespace

Var Tape::push(Matrix value, std::string label, std::function<void(Tape&)> pullback) {
    nodes_.push_back(Node{std::move(value), Matrix(), std::move(label), std::move(pullback)});
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Matrix& Tape::grad_ref(int id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    return n.grad;
}

Var Tape::leaf(Matrix value, std::string label) {
    return push(std::move(value), std::move(label), nullptr);
}

Var Tape::constant(double value, std::string label) {
    Matrix m(1, 1);
    m(0, 0) = value;
    return push(std::move(m), std::move(label), nullptr);
}

const Matrix& Tape::value(Var v) const { return nodes_.at(v.id).value; }

const Matrix& Tape::grad(Var v) { return grad_ref(v.id); }

// Each pullback needs the id the node is about to get; it equals the current
// node count at construction time.
#define TAPE_SELF int self = static_cast<int>(nodes_.size())

Var Tape::add(Var a, Var b) {
    require(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(), "add shapes");
    TAPE_SELF;
    int ia = a.id, ib = b.id;
    return push(value(a) + value(b), "add", [self, ia, ib](Tape& t) {
        const Matrix& g = t.nodes_[self].grad;
        t.grad_ref(ia) += g;
        t.grad_ref(ib) += g;
    });
}

Var Tape::sub(Var a, Var b) {
    require(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(), "sub shapes");
    TAPE_SELF;
    int ia = a.id, ib = b.id;
    return push(value(a) - value(b), "sub", [self, ia, ib](Tape& t) {
        const Matrix& g = t.nodes_[self].grad;
        t.grad_ref(ia) += g;
        t.grad_ref(ib) -= g;
    });
}

Var Tape::mul(Var a, Var b) {
    require(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(), "mul shapes");
    TAPE_SELF;
    int ia = a.id, ib = b.id;
    return push((value(a).array() * value(b).array()).matrix(), "mul", [self, ia, ib](Tape& t) {
        const Matrix& g = t.nodes_[self].grad;
        t.grad_ref(ia).array() += g.array() * t.nodes_[ib].value.array();
        t.grad_ref(ib).array() += g.array() * t.nodes_[ia].value.array();
    });
}

Var Tape::div(Var a, Var b) {
    require(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(), "div shapes");
    TAPE_SELF;
    int ia = a.id, ib = b.id;
    return push((value(a).array() / value(b).array()).matrix(), "div", [self, ia, ib](Tape& t) {
        const Matrix& g = t.nodes_[self].grad;
        const auto& bv = t.nodes_[ib].value.array();
        const auto& cv = t.nodes_[self].value.array();
        t.grad_ref(ia).array() += g.array() / bv;
        t.grad_ref(ib).array() -= g.array() * cv / bv;
    });
}

Var Tape::matmul(Var a, Var b) {
    require(value(a).cols() == value(b).rows(), "matmul shapes");
    TAPE_SELF;
    int ia = a.id, ib = b.id;
    return push(value(a) * value(b), "matmul", [self, ia, ib](Tape& t) {
        const Matrix& g = t.nodes_[self].grad;
        t.grad_ref(ia) += g * t.nodes_[ib].value.transpose();
        t.grad_ref(ib) += t.nodes_[ia].value.transpose() * g;
    });
}

Var Tape::scale(Var a, double c) {
    TAPE_SELF;
    int ia = a.id;
    return push(value(a) * c, "scale", [self, ia, c](Tape& t) {
        t.grad_ref(ia) += t.nodes_[self].grad * c;
    });
}

Var Tape::add_const(Var a, double c) {
    TAPE_SELF;
    int ia = a.id;
    return push((value(a).array() + c).matrix(), "add_const", [self, ia](Tape& t) {
        t.grad_ref(ia) += t.nodes_[self].grad;
    });
}

Var Tape::add_row_broadcast(Var a, Var row) {
    require(value(row).rows() == 1 && value(row).cols() == value(a).cols(), "row broadcast shapes");
    TAPE_SELF;
    int ia = a.id, ir = row.id;
    Matrix out = value(a);
    out.rowwise() += value(row).row(0);
    return push(std::move(out), "add_row", [self, ia, ir](Tape& t) {
        const Matrix& g = t.nodes_[self].grad;
        t.grad_ref(ia) += g;
        t.grad_ref(ir) += g.colwise().sum();
    });
}

Var Tape::concat_rows(Var a, Var b) {
    require(value(a).cols() == value(b).cols(), "concat_rows shapes");
    TAPE_SELF;
    int ia = a.id, ib = b.id;
    const long ra = value(a).rows(), rb = value(b).rows();
    Matrix out(ra + rb, value(a).cols());
    out.topRows(ra) = value(a);
    out.bottomRows(rb) = value(b);
    return push(std::move(out), "concat_rows", [self, ia, ib, ra, rb](Tape& t) {
        const Matrix& g = t.nodes_[self].grad;
        t.grad_ref(ia) += g.topRows(ra);
        t.grad_ref(ib) += g.bottomRows(rb);
    });
}

Var Tape::concat_cols(Var a, Var b) {
    require(value(a).rows() == value(b).rows(), "concat_cols shapes");
    TAPE_SELF;
    int ia = a.id, ib = b.id;
    const long ca = value(a).cols(), cb = value(b).cols();
    Matrix out(value(a).rows(), ca + cb);
    out.leftCols(ca) = value(a);
    out.rightCols(cb) = value(b);
    return push(std::move(out), "concat_cols", [self, ia, ib, ca, cb](Tape& t) {
        const Matrix& g = t.nodes_[self].grad;
        t.grad_ref(ia) += g.leftCols(ca);
        t.grad_ref(ib) += g.rightCols(cb);
    });
}

Var Tape::slice_rows(Var a, int first, int count) {
    require(first >= 0 && count >= 0 && first + count <= value(a).rows(), "slice_rows range");
    TAPE_SELF;
    int ia = a.id;
    return push(value(a).middleRows(first, count), "slice_rows", [self, ia, first, count](Tape& t) {
        t.grad_ref(ia).middleRows(first, count) += t.nodes_[self].grad;
    });
}

Var Tape::slice_cols(Var a, int first, int count) {
    require(first >= 0 && count >= 0 && first + count <= value(a).cols(), "slice_cols range");
    TAPE_SELF;
    int ia = a.id;
    return push(value(a).middleCols(first, count), "slice_cols", [self, ia, first, count](Tape& t) {
        t.grad_ref(ia).middleCols(first, count) += t.nodes_[self].grad;
    });
}

Var Tape::transpose(Var a) {
    TAPE_SELF;
    int ia = a.id;
    return push(value(a).transpose(), "transpose", [self, ia](Tape& t) {
        t.grad_ref(ia) += t.nodes_[self].grad.transpose();
    });
}

Var Tape::softmax_rows(Var a) {
    TAPE_SELF;
    int ia = a.id;
    Matrix out = value(a);
    for (long r = 0; r < out.rows(); ++r) {
        double m = out.row(r).maxCoeff();
        out.row(r) = (out.row(r).array() - m).exp();
        out.row(r) /= out.row(r).sum();
    }
    return push(std::move(out), "softmax", [self, ia](Tape& t) {
        const Matrix& s = t.nodes_[self].value;
        const Matrix& g = t.nodes_[self].grad;
        Matrix& ga = t.grad_ref(ia);
        for (long r = 0; r < s.rows(); ++r) {
            double inner = s.row(r).dot(g.row(r));
            ga.row(r).array() += s.row(r).array() * (g.row(r).array() - inner);
        }
    });
}

Var Tape::layer_norm_rows(Var x, Var gain, Var offset, double eps) {
    const long d = value(x).cols();
    require(value(gain).rows() == 1 && value(gain).cols() == d, "layer_norm gain shape");
    require(value(offset).rows() == 1 && value(offset).cols() == d, "layer_norm offset shape");
    TAPE_SELF;
    int ix = x.id, ig = gain.id, io = offset.id;

    const Matrix& xs = value(x);
    Matrix xhat(xs.rows(), d);
    Eigen::VectorXd inv_std(xs.rows());
    for (long r = 0; r < xs.rows(); ++r) {
        double mean = xs.row(r).mean();
        double var = (xs.row(r).array() - mean).square().mean();
        inv_std(r) = 1.0 / std::sqrt(var + eps);
        xhat.row(r) = (xs.row(r).array() - mean) * inv_std(r);
    }
    Matrix out = xhat;
    out.array().rowwise() *= value(gain).row(0).array();
    out.rowwise() += value(offset).row(0);

    return push(std::move(out), "layer_norm",
                [self, ix, ig, io, xhat, inv_std](Tape& t) {
        const Matrix& g = t.nodes_[self].grad;
        const auto gain_row = t.nodes_[ig].value.row(0).array();
        t.grad_ref(io) += g.colwise().sum();
        t.grad_ref(ig) += (g.array() * xhat.array()).colwise().sum().matrix();
        Matrix& gx = t.grad_ref(ix);
        for (long r = 0; r < g.rows(); ++r) {
            Eigen::Array<double, 1, Eigen::Dynamic> dxhat = g.row(r).array() * gain_row;
            double m1 = dxhat.mean();
            double m2 = (dxhat * xhat.row(r).array()).mean();
            gx.row(r).array() += inv_std(r) * (dxhat - m1 - xhat.row(r).array() * m2);
        }
    });
}

Var Tape::gelu(Var a) {
    TAPE_SELF;
    int ia = a.id;
    const double inv_sqrt2 = 0.7071067811865475244;
    Matrix out = value(a);
    out = out.unaryExpr([&](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); });
    return push(std::move(out), "gelu", [self, ia, inv_sqrt2](Tape& t) {
        const Matrix& x = t.nodes_[ia].value;
        const Matrix& g = t.nodes_[self].grad;
        const double inv_sqrt2pi = 0.3989422804014326779;
        Matrix dydx = x.unaryExpr([&](double v) {
            return 0.5 * (1.0 + std::erf(v * inv_sqrt2)) + v * inv_sqrt2pi * std::exp(-0.5 * v * v);
        });
        t.grad_ref(ia).array() += g.array() * dydx.array();
    });
}

Var Tape::gather_rows(Var table, std::vector<int> rows) {
    const Matrix& tab = value(table);
    for (int r : rows) require(r >= 0 && r < tab.rows(), "gather_rows index");
    TAPE_SELF;
    int it = table.id;
    Matrix out(static_cast<long>(rows.size()), tab.cols());
    for (size_t i = 0; i < rows.size(); ++i) out.row(static_cast<long>(i)) = tab.row(rows[i]);
    return push(std::move(out), "gather_rows", [self, it, rows = std::move(rows)](Tape& t) {
        const Matrix& g = t.nodes_[self].grad;
        Matrix& gt = t.grad_ref(it);
        for (size_t i = 0; i < rows.size(); ++i) gt.row(rows[i]) += g.row(static_cast<long>(i));
    });
}

Var Tape::sum(Var a) {
    TAPE_SELF;
    int ia = a.id;
    Matrix out(1, 1);
    out(0, 0) = value(a).sum();
    return push(std::move(out), "sum", [self, ia](Tape& t) {
        t.grad_ref(ia).array() += t.nodes_[self].grad(0, 0);
    });
}

Var Tape::add_many(const std::vector<Var>& vs) {
    require(!vs.empty(), "add_many nonempty");
    TAPE_SELF;
    std::vector<int> ids;
    ids.reserve(vs.size());
    Matrix out = value(vs[0]);
    ids.push_back(vs[0].id);
    for (size_t i = 1; i < vs.size(); ++i) {
        require(value(vs[i]).rows() == out.rows() && value(vs[i]).cols() == out.cols(),
                "add_many shapes");
        out += value(vs[i]);
        ids.push_back(vs[i].id);
    }
    return push(std::move(out), "add_many", [self, ids = std::move(ids)](Tape& t) {
        const Matrix& g = t.nodes_[self].grad;
        for (int id : ids) t.grad_ref(id) += g;
    });
}

Var Tape::log(Var a) {
    TAPE_SELF;
    int ia = a.id;
    return push(value(a).array().log().matrix(), "log", [self, ia](Tape& t) {
        t.grad_ref(ia).array() += t.nodes_[self].grad.array() / t.nodes_[ia].value.array();
    });
}

Var Tape::exp(Var a) {
    TAPE_SELF;
    int ia = a.id;
    return push(value(a).array().exp().matrix(), "exp", [self, ia](Tape& t) {
        t.grad_ref(ia).array() += t.nodes_[self].grad.array() * t.nodes_[self].value.array();
    });
}

Var Tape::sqrt(Var a) {
    TAPE_SELF;
    int ia = a.id;
    return push(value(a).array().sqrt().matrix(), "sqrt", [self, ia](Tape& t) {
        t.grad_ref(ia).array() +=
            t.nodes_[self].grad.array() / (2.0 * t.nodes_[self].value.array());
    });
}

Var Tape::relu(Var a) {
    TAPE_SELF;
    int ia = a.id;
    return push(value(a).cwiseMax(0.0), "relu", [self, ia](Tape& t) {
        const Matrix& x = t.nodes_[ia].value;
        t.grad_ref(ia).array() +=
            t.nodes_[self].grad.array() * (x.array() > 0.0).cast<double>();
    });
}

Var Tape::dot(Var a, Var b) {
    require(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(), "dot shapes");
    TAPE_SELF;
    int ia = a.id, ib = b.id;
    Matrix out(1, 1);
    out(0, 0) = (value(a).array() * value(b).array()).sum();
    return push(std::move(out), "dot", [self, ia, ib](Tape& t) {
        double g = t.nodes_[self].grad(0, 0);
        t.grad_ref(ia) += g * t.nodes_[ib].value;
        t.grad_ref(ib) += g * t.nodes_[ia].value;
    });
}

void Tape::backward(Var loss) {
    require(loss.valid() && loss.id < static_cast<int>(nodes_.size()), "backward target");
    require(value(loss).rows() == 1 && value(loss).cols() == 1, "backward target is scalar");
    if (!std::isfinite(value(loss)(0, 0))) {
        for (const Node& n : nodes_) {
            if (!n.value.allFinite()) {
                throw NumericError("non-finite value in node '" + n.label + "'");
            }
        }
        throw NumericError("non-finite loss");
    }
    grad_ref(loss.id)(0, 0) = 1.0;
    for (int i = loss.id; i >= 0; --i) {
        if (nodes_[i].pullback && grad_present(i)) nodes_[i].pullback(*this);
    }
}

}  // namespace topicdpr::ad
