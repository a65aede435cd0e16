#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "desmil/matrix.hpp"

namespace desmil {

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid as long as the tape lives.
struct Var {
    Tape* tape = nullptr;
    std::size_t id = 0;

    const Matrix& value() const;
};

/// Reverse-mode tape. Records each primitive as a value plus a closure that
/// pushes the node's adjoint into its inputs. backward() replays the
/// closures in exact reverse recording order; nodes with no path to the
/// loss keep an all-zero adjoint. Strictly single-threaded per instance.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Leaf that participates in differentiation (parameters).
    Var leaf(Matrix value);
    /// Leaf that gradients never flow into (data, masks).
    Var constant(Matrix value);

    /// Runs the reverse sweep from a scalar (1x1) loss node.
    void backward(const Var& loss);

    /// Adjoint of `wrt` for the given loss. Runs backward() on first use.
    /// A var recorded on a different tape yields an all-zero matrix.
    Matrix grad(const Var& loss, const Var& wrt);

    const Matrix& value(std::size_t id) const { return nodes_[id].value; }
    const Matrix& adjoint_of(const Var& v) const;
    std::size_t size() const { return nodes_.size(); }

    // --- recorded operations -------------------------------------------
    Var matmul(Var a, Var b);
    Var add(Var a, Var b);
    Var transpose(Var a);
    Var tanh(Var a);
    Var softmax_rows(Var a);
    Var hadamard(Var a, Var b);
    Var scale(Var a, double s);
    Var sum(Var a);
    Var gather_rows(Var a, std::vector<std::size_t> indices);
    /// -log softmax(logits)[index] for a 1xN logits row, max-stabilized.
    Var neg_log_softmax_at(Var logits, std::size_t index);

private:
    struct Node {
        Matrix value;
        Matrix adjoint; // empty until touched by the reverse sweep
        bool needs_grad = false;
        std::function<void(Tape&, const Matrix&)> backprop; // arg: this node's adjoint
    };

    Var record(Matrix value, bool needs_grad, std::function<void(Tape&, const Matrix&)> backprop);
    void accumulate(std::size_t id, Matrix delta);
    void check_same_tape(const Var& v, const char* op) const;

    std::vector<Node> nodes_;
    bool backward_done_ = false;
    std::size_t backward_loss_ = 0;
};

inline const Matrix& Var::value() const { return tape->value(id); }

} // namespace desmil
