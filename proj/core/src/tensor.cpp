#include "atfs/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <utility>

namespace atfs {

namespace detail {

struct Node {
    std::string op;
    Shape shape;
    std::vector<double> value;
    bool requires_grad = false;
    bool leaf = true;
    std::vector<double> grad;
    std::vector<std::shared_ptr<Node>> parents;
    // Reads this node's grad and accumulates into the parents' grads.
    std::function<void(Node&)> backward;

    std::vector<double>& grad_buffer() {
        if (grad.empty()) grad.assign(value.size(), 0.0);
        return grad;
    }
};

}  // namespace detail

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ')';
    return os.str();
}

namespace {

NodePtr make_leaf(Shape shape, std::vector<double> values, bool requires_grad) {
    for (auto e : shape) {
        if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
    }
    if (shape_numel(shape) != values.size()) {
        throw ShapeError("shape " + shape_str(shape) + " needs " + std::to_string(shape_numel(shape)) +
                         " values, got " + std::to_string(values.size()));
    }
    auto n = std::make_shared<Node>();
    n->op = "leaf";
    n->shape = std::move(shape);
    n->value = std::move(values);
    n->requires_grad = requires_grad;
    return n;
}

// Result node; linked into the graph only when some parent requires grad.
NodePtr make_result(std::string op, Shape shape, std::vector<double> values,
                    std::vector<NodePtr> parents, std::function<void(Node&)> bw) {
    auto n = std::make_shared<Node>();
    n->op = std::move(op);
    n->shape = std::move(shape);
    n->value = std::move(values);
    n->leaf = false;
    const bool any = std::any_of(parents.begin(), parents.end(),
                                 [](const NodePtr& p) { return p->requires_grad; });
    if (any) {
        n->requires_grad = true;
        n->parents = std::move(parents);
        n->backward = std::move(bw);
    }
    return n;
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
}

enum class Bcast { same, left_scalar, right_scalar };

Bcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() == b.shape()) return Bcast::same;
    if (a.rank() == 0) return Bcast::left_scalar;
    if (b.rank() == 0) return Bcast::right_scalar;
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

// Shared implementation of add / sub / mul with scalar broadcasting.
template <class Fwd, class DA, class DB>
Tensor elementwise(const char* op, const Tensor& a, const Tensor& b, Fwd fwd, DA da, DB db) {
    const Bcast kind = broadcast_kind(a, b, op);
    const Shape out_shape = kind == Bcast::left_scalar ? b.shape() : a.shape();
    const std::size_t n = shape_numel(out_shape);
    auto av = a.values();
    auto bv = b.values();
    auto ai = [&](std::size_t i) { return kind == Bcast::left_scalar ? av[0] : av[i]; };
    auto bi = [&](std::size_t i) { return kind == Bcast::right_scalar ? bv[0] : bv[i]; };
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = fwd(ai(i), bi(i));

    NodePtr pa = a.node(), pb = b.node();
    auto bw = [pa, pb, kind, da, db](Node& self) {
        const std::size_t n = self.value.size();
        auto a_at = [&](std::size_t i) { return kind == Bcast::left_scalar ? pa->value[0] : pa->value[i]; };
        auto b_at = [&](std::size_t i) { return kind == Bcast::right_scalar ? pb->value[0] : pb->value[i]; };
        if (pa->requires_grad) {
            auto& g = pa->grad_buffer();
            for (std::size_t i = 0; i < n; ++i) {
                g[kind == Bcast::left_scalar ? 0 : i] += self.grad[i] * da(a_at(i), b_at(i));
            }
        }
        if (pb->requires_grad) {
            auto& g = pb->grad_buffer();
            for (std::size_t i = 0; i < n; ++i) {
                g[kind == Bcast::right_scalar ? 0 : i] += self.grad[i] * db(a_at(i), b_at(i));
            }
        }
    };
    return Tensor(make_result(op, out_shape, std::move(out), {pa, pb}, bw));
}

template <class Fwd, class Deriv>
Tensor unary(const char* op, const Tensor& x, Fwd fwd, Deriv deriv) {
    auto xv = x.values();
    std::vector<double> out(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
    NodePtr px = x.node();
    auto bw = [px, deriv](Node& self) {
        auto& g = px->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * deriv(px->value[i]);
    };
    return Tensor(make_result(op, x.shape(), std::move(out), {px}, bw));
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor() : node_(make_leaf({}, {0.0}, false)) {}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    return Tensor(make_leaf(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    const std::size_t n = shape_numel(shape);
    return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({}, {value}, requires_grad); }

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::numel() const { return node_->value.size(); }
std::span<const double> Tensor::values() const { return node_->value; }
std::vector<double> Tensor::to_vector() const { return node_->value; }

double Tensor::item() const {
    if (numel() != 1) throw ShapeError("item() needs a single-element tensor, got " + shape_str(shape()));
    return node_->value[0];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }
bool Tensor::is_leaf() const { return node_->leaf; }
bool Tensor::has_grad() const { return !node_->grad.empty(); }
std::span<const double> Tensor::grad() const { return node_->grad; }

Tensor Tensor::grad_tensor() const {
    if (!has_grad()) return Tensor::zeros(shape());
    return Tensor::from(shape(), node_->grad);
}

void Tensor::zero_grad() { node_->grad.clear(); }

Tensor Tensor::detach() const { return from(shape(), node_->value, false); }

// ---------------------------------------------------------------------------
// Graph traversal

namespace {

std::vector<Node*> topo_order(Node* root) {
    std::vector<Node*> order;
    std::unordered_map<Node*, bool> visited;
    // Iterative DFS; post-order gives parents before children.
    std::vector<std::pair<Node*, std::size_t>> stack{{root, 0}};
    visited[root] = true;
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p->requires_grad && !visited[p]) {
                visited[p] = true;
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    return order;
}

}  // namespace

Tape record_tape(const Tensor& loss) {
    Tape tape;
    if (!loss.requires_grad()) return tape;
    auto order = topo_order(loss.node().get());
    std::unordered_map<Node*, std::size_t> index;
    for (std::size_t i = 0; i < order.size(); ++i) index[order[i]] = i;
    for (Node* n : order) {
        TapeEntry e;
        e.op = n->op;
        e.leaf = n->leaf;
        for (auto& p : n->parents) {
            if (p->requires_grad) e.parents.push_back(index.at(p.get()));
        }
        tape.entries.push_back(std::move(e));
    }
    return tape;
}

void backward(const Tensor& loss) {
    if (loss.numel() != 1) {
        throw ShapeError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
    }
    if (!loss.requires_grad()) {
        throw std::invalid_argument("backward: loss is not connected to any tensor requiring grad");
    }
    Node* root = loss.node().get();
    auto order = topo_order(root);
    for (Node* n : order) {
        if (!n->leaf) n->grad.assign(n->value.size(), 0.0);
    }
    if (root->leaf) {
        root->grad_buffer()[0] += 1.0;
        return;
    }
    root->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (!n->leaf && n->backward) n->backward(*n);
    }
    // Intermediate buffers are scratch space.
    for (Node* n : order) {
        if (!n->leaf) {
            n->grad.clear();
            n->grad.shrink_to_fit();
        }
    }
}

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
    return elementwise(
        "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
        [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return elementwise(
        "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
        [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return elementwise(
        "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
        [](double x, double) { return x; });
}

Tensor scale(const Tensor& a, double s) {
    return unary(
        "scale", a, [s](double x) { return s * x; }, [s](double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
    return unary(
        "add_scalar", a, [s](double x) { return x + s; }, [](double) { return 1.0; });
}

Tensor relu(const Tensor& x) {
    return unary(
        "relu", x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor& x, double slope) {
    return unary(
        "leaky_relu", x, [slope](double v) { return v > 0.0 ? v : slope * v; },
        [slope](double v) { return v > 0.0 ? 1.0 : slope; });
}

// ---------------------------------------------------------------------------
// Linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || (b.rank() != 2 && b.rank() != 1) || a.shape()[1] != b.shape()[0]) {
        throw ShapeError("matmul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    const std::size_t m = a.shape()[0], k = a.shape()[1];
    const std::size_t n = b.rank() == 2 ? b.shape()[1] : 1;
    auto av = a.values();
    auto bv = b.values();
    std::vector<double> out(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = av[i * k + p];
            for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aip * bv[p * n + j];
        }
    }
    Shape out_shape = b.rank() == 2 ? Shape{m, n} : Shape{m};
    NodePtr pa = a.node(), pb = b.node();
    auto bw = [pa, pb, m, k, n](Node& self) {
        const auto& g = self.grad;
        if (pa->requires_grad) {
            auto& ga = pa->grad_buffer();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * pb->value[p * n + j];
                    ga[i * k + p] += acc;
                }
        }
        if (pb->requires_grad) {
            auto& gb = pb->grad_buffer();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    const double aip = pa->value[i * k + p];
                    for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
                }
        }
    };
    return Tensor(make_result("matmul", std::move(out_shape), std::move(out), {pa, pb}, bw));
}

// ---------------------------------------------------------------------------
// Convolution

namespace {

struct ConvGeom {
    std::size_t batch, in_c, in_h, in_w, out_c, kh, kw, out_h, out_w, stride, pad;
};

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const std::optional<Tensor>& bias,
              Conv2dOptions options) {
    const auto& is = input.shape();
    const auto& ws = weight.shape();
    const bool batched = is.size() == 4;
    if ((is.size() != 3 && !batched) || ws.size() != 4 || is[batched ? 1 : 0] != ws[1]) {
        throw ShapeError("conv2d: shape mismatch input " + shape_str(is) + " vs weight " + shape_str(ws));
    }
    if (options.stride == 0) throw std::invalid_argument("conv2d: stride must be positive");
    ConvGeom g{};
    g.batch = batched ? is[0] : 1;
    g.in_c = ws[1];
    g.in_h = is[batched ? 2 : 1];
    g.in_w = is[batched ? 3 : 2];
    g.out_c = ws[0];
    g.kh = ws[2];
    g.kw = ws[3];
    g.stride = options.stride;
    g.pad = options.padding;
    if (g.in_h + 2 * g.pad < g.kh || g.in_w + 2 * g.pad < g.kw) {
        throw ShapeError("conv2d: kernel " + shape_str(ws) + " larger than padded input " + shape_str(is));
    }
    g.out_h = (g.in_h + 2 * g.pad - g.kh) / g.stride + 1;
    g.out_w = (g.in_w + 2 * g.pad - g.kw) / g.stride + 1;
    if (bias && (bias->rank() != 1 || bias->shape()[0] != g.out_c)) {
        throw ShapeError("conv2d: bias shape " + shape_str(bias->shape()) + " vs weight " + shape_str(ws));
    }

    auto x = input.values();
    auto w = weight.values();
    std::vector<double> out(g.batch * g.out_c * g.out_h * g.out_w, 0.0);
    const auto ih = static_cast<long>(g.in_h), iw = static_cast<long>(g.in_w);
    for (std::size_t nb = 0; nb < g.batch; ++nb) {
        for (std::size_t o = 0; o < g.out_c; ++o) {
            double* dst = &out[((nb * g.out_c) + o) * g.out_h * g.out_w];
            const double b0 = bias ? bias->values()[o] : 0.0;
            for (std::size_t i = 0; i < g.out_h * g.out_w; ++i) dst[i] = b0;
            for (std::size_t c = 0; c < g.in_c; ++c) {
                const double* src = &x[((nb * g.in_c) + c) * g.in_h * g.in_w];
                const double* ker = &w[((o * g.in_c) + c) * g.kh * g.kw];
                for (std::size_t ky = 0; ky < g.kh; ++ky) {
                    for (std::size_t kx = 0; kx < g.kw; ++kx) {
                        const double wv = ker[ky * g.kw + kx];
                        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                            const long y = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
                            if (y < 0 || y >= ih) continue;
                            for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                                const long xx = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
                                if (xx < 0 || xx >= iw) continue;
                                dst[oy * g.out_w + ox] += wv * src[y * iw + xx];
                            }
                        }
                    }
                }
            }
        }
    }

    Shape out_shape = batched ? Shape{g.batch, g.out_c, g.out_h, g.out_w} : Shape{g.out_c, g.out_h, g.out_w};
    NodePtr px = input.node(), pw = weight.node();
    NodePtr pb = bias ? bias->node() : nullptr;
    std::vector<NodePtr> parents{px, pw};
    if (pb) parents.push_back(pb);

    auto bw = [px, pw, pb, g](Node& self) {
        const auto& go = self.grad;
        const auto ih = static_cast<long>(g.in_h), iw = static_cast<long>(g.in_w);
        std::vector<double>* gx = px->requires_grad ? &px->grad_buffer() : nullptr;
        std::vector<double>* gw = pw->requires_grad ? &pw->grad_buffer() : nullptr;
        for (std::size_t nb = 0; nb < g.batch; ++nb) {
            for (std::size_t o = 0; o < g.out_c; ++o) {
                const double* gsrc = &go[((nb * g.out_c) + o) * g.out_h * g.out_w];
                for (std::size_t c = 0; c < g.in_c; ++c) {
                    const std::size_t xoff = ((nb * g.in_c) + c) * g.in_h * g.in_w;
                    const std::size_t woff = ((o * g.in_c) + c) * g.kh * g.kw;
                    for (std::size_t ky = 0; ky < g.kh; ++ky) {
                        for (std::size_t kx = 0; kx < g.kw; ++kx) {
                            const double wv = pw->value[woff + ky * g.kw + kx];
                            double wacc = 0.0;
                            for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                                const long y = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
                                if (y < 0 || y >= ih) continue;
                                for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                                    const long xx =
                                        static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
                                    if (xx < 0 || xx >= iw) continue;
                                    const double gv = gsrc[oy * g.out_w + ox];
                                    const std::size_t xi = xoff + static_cast<std::size_t>(y * iw + xx);
                                    if (gx) (*gx)[xi] += wv * gv;
                                    wacc += px->value[xi] * gv;
                                }
                            }
                            if (gw) (*gw)[woff + ky * g.kw + kx] += wacc;
                        }
                    }
                }
            }
        }
        if (pb && pb->requires_grad) {
            auto& gb = pb->grad_buffer();
            for (std::size_t nb = 0; nb < g.batch; ++nb)
                for (std::size_t o = 0; o < g.out_c; ++o)
                    for (std::size_t i = 0; i < g.out_h * g.out_w; ++i)
                        gb[o] += go[((nb * g.out_c) + o) * g.out_h * g.out_w + i];
        }
    };
    return Tensor(make_result("conv2d", std::move(out_shape), std::move(out), std::move(parents), bw));
}

// ---------------------------------------------------------------------------
// Shape and reductions

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) {
        throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    }
    NodePtr px = x.node();
    auto bw = [px](Node& self) {
        auto& g = px->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    };
    return Tensor(make_result("reshape", std::move(shape), x.to_vector(), {px}, bw));
}

Tensor flatten(const Tensor& x) { return reshape(x, {x.numel()}); }

Tensor sum(const Tensor& x) {
    auto v = x.values();
    const double s = std::accumulate(v.begin(), v.end(), 0.0);
    NodePtr px = x.node();
    auto bw = [px](Node& self) {
        auto& g = px->grad_buffer();
        for (auto& gi : g) gi += self.grad[0];
    };
    return Tensor(make_result("sum", {}, {s}, {px}, bw));
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor sq_l2_norm(const Tensor& x) {
    auto v = x.values();
    double s = 0.0;
    for (double e : v) s += e * e;
    NodePtr px = x.node();
    auto bw = [px](Node& self) {
        auto& g = px->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += 2.0 * px->value[i] * self.grad[0];
    };
    return Tensor(make_result("sq_l2_norm", {}, {s}, {px}, bw));
}

Tensor mse(const Tensor& a, const Tensor& b) {
    require_same(a, b, "mse");
    return scale(sq_l2_norm(sub(a, b)), 1.0 / static_cast<double>(a.numel()));
}

// ---------------------------------------------------------------------------
// Vector quantization

std::size_t nearest_code(const Tensor& codebook, std::span<const double> v) {
    if (codebook.rank() != 2 || codebook.shape()[1] != v.size()) {
        throw ShapeError("nearest_code: codebook " + shape_str(codebook.shape()) + " vs vector of length " +
                         std::to_string(v.size()));
    }
    const std::size_t m = codebook.shape()[0], d = codebook.shape()[1];
    auto cb = codebook.values();
    std::size_t best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < m; ++i) {
        double dist = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double diff = cb[i * d + j] - v[j];
            dist += diff * diff;
        }
        if (dist < best_dist) {
            best_dist = dist;
            best = i;
        }
    }
    return best;
}

Tensor quantize_straight_through(const Tensor& z, const Tensor& codebook) {
    if (z.rank() != 3 || codebook.rank() != 2 || codebook.shape()[1] != z.shape()[0]) {
        throw ShapeError("quantize: shape mismatch " + shape_str(z.shape()) + " vs codebook " +
                         shape_str(codebook.shape()));
    }
    const std::size_t d = z.shape()[0], hw = z.shape()[1] * z.shape()[2];
    auto zv = z.values();
    auto cb = codebook.values();
    std::vector<double> out(zv.size());
    std::vector<double> patch(d);
    for (std::size_t p = 0; p < hw; ++p) {
        for (std::size_t c = 0; c < d; ++c) patch[c] = zv[c * hw + p];
        const std::size_t k = nearest_code(codebook, patch);
        for (std::size_t c = 0; c < d; ++c) out[c * hw + p] = cb[k * d + c];
    }
    NodePtr pz = z.node();
    auto bw = [pz](Node& self) {
        auto& g = pz->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    };
    return Tensor(make_result("quantize_st", z.shape(), std::move(out), {pz}, bw));
}

}  // namespace atfs
