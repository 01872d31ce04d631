#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace topicdpr::ad {

using Matrix = Eigen::MatrixXd;

struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Eager reverse-mode tape over double matrices. Every op computes its value
// immediately and records a pullback; backward() runs the pullbacks in
// reverse creation order, which is a valid topological order by construction.
// Scalars are 1x1 matrices.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(Matrix value, std::string label);
    Var constant(double value, std::string label = "const");

    const Matrix& value(Var v) const;
    // Zero-filled if no gradient reached this node.
    const Matrix& grad(Var v);

    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);  // elementwise
    Var div(Var a, Var b);  // elementwise
    Var matmul(Var a, Var b);
    Var scale(Var a, double c);
    Var add_const(Var a, double c);
    Var add_row_broadcast(Var a, Var row);
    Var concat_rows(Var a, Var b);
    Var concat_cols(Var a, Var b);
    Var slice_rows(Var a, int first, int count);
    Var slice_cols(Var a, int first, int count);
    Var transpose(Var a);
    Var softmax_rows(Var a);
    Var layer_norm_rows(Var x, Var gain, Var offset, double eps);
    Var gelu(Var a);
    Var gather_rows(Var table, std::vector<int> rows);
    Var sum(Var a);                 // 1x1
    Var add_many(const std::vector<Var>& vs);
    Var log(Var a);
    Var exp(Var a);
    Var sqrt(Var a);
    Var relu(Var a);
    Var dot(Var a, Var b);          // Frobenius inner product, 1x1

    // Seeds d(loss) = 1 and runs all pullbacks. loss must be 1x1; a
    // non-finite loss raises NumericError naming the first non-finite
    // node in creation order.
    void backward(Var loss);

    size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Matrix value;
        Matrix grad;  // empty until touched
        std::string label;
        std::function<void(Tape&)> pullback;  // empty for leaves
    };

    Var push(Matrix value, std::string label, std::function<void(Tape&)> pullback);
    Matrix& grad_ref(int id);
    bool grad_present(int id) const { return nodes_[id].grad.size() > 0; }

    std::vector<Node> nodes_;
};

}  // namespace topicdpr::ad
