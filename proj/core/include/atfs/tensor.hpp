#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace atfs {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Raised for operand shapes that do not conform.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

namespace detail {
struct Node;
}

/// Dense row-major float64 array with optional participation in a reverse-mode
/// gradient graph. Values are immutable after construction; only leaf gradient
/// buffers change (through backward() and zero_grad()).
class Tensor {
public:
    Tensor();

    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t numel() const;
    std::span<const double> values() const;
    std::vector<double> to_vector() const;
    double operator[](std::size_t i) const { return values()[i]; }
    /// Value of a single-element tensor.
    double item() const;

    bool requires_grad() const;
    bool is_leaf() const;
    bool has_grad() const;
    /// Accumulated gradient; empty span when none has been computed.
    std::span<const double> grad() const;
    Tensor grad_tensor() const;
    void zero_grad();

    /// Same values, disconnected from any graph.
    Tensor detach() const;

    std::shared_ptr<detail::Node> node() const { return node_; }
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<detail::Node> node_;
};

/// One recorded operation in backward order construction.
struct TapeEntry {
    std::string op;
    std::vector<std::size_t> parents;  // indices into Tape::entries
    bool leaf = false;
};

/// Topologically ordered view of the graph feeding a loss: every entry's
/// parents precede it and each node appears once.
struct Tape {
    std::vector<TapeEntry> entries;
};

Tape record_tape(const Tensor& loss);

/// Reverse-mode pass from a scalar loss. Leaf gradients accumulate across
/// calls; call zero_grad() on leaves between independent evaluations.
void backward(const Tensor& loss);

// Elementwise ops accept equal shapes, or a rank-0 tensor on either side.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }

/// (m,k)x(k,n) -> (m,n), or (m,k)x(k) -> (m).
Tensor matmul(const Tensor& a, const Tensor& b);

struct Conv2dOptions {
    std::size_t stride = 1;
    std::size_t padding = 0;
};

/// Cross-correlation with zero padding. Input is C×H×W or N×C×H×W, weight is
/// O×C×kh×kw, bias (optional) has O entries. The output keeps the input rank.
Tensor conv2d(const Tensor& input, const Tensor& weight, const std::optional<Tensor>& bias,
              Conv2dOptions options = {});

Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope = 0.2);
Tensor reshape(const Tensor& x, Shape shape);
Tensor flatten(const Tensor& x);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sq_l2_norm(const Tensor& x);
Tensor mse(const Tensor& a, const Tensor& b);

/// Vector quantization of a D×H×W map: each spatial D-vector is replaced by
/// its Euclidean-nearest codebook row (M×D; ties go to the lowest index).
/// Backward passes the gradient through unchanged (straight-through).
Tensor quantize_straight_through(const Tensor& z, const Tensor& codebook);

/// Index of the codebook row nearest to v; ties resolve to the lowest index.
std::size_t nearest_code(const Tensor& codebook, std::span<const double> v);

}  // namespace atfs
