#include "midnet/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_set>

namespace midnet {

namespace {

thread_local std::uint64_t g_seq_counter = 0;
thread_local bool g_grad_enabled = true;
thread_local bool g_kink_watch = false;
thread_local double g_kink_min = std::numeric_limits<double>::infinity();

void note_kink_distance(double d) {
    if (g_kink_watch && d < g_kink_min) g_kink_min = d;
}

void quantize_all(std::vector<double>& v, DType d) {
    if (d != DType::F32) return;
    for (double& x : v) x = static_cast<double>(static_cast<float>(x));
}

// Float32 mode is contagious: one reduced-precision input makes the result
// reduced precision. Everything stays F64 unless explicitly switched.
DType promote(DType a, DType b) {
    return (a == DType::F32 || b == DType::F32) ? DType::F32 : DType::F64;
}

std::shared_ptr<Node> make_leaf(Shape shape, std::vector<double> data, bool requires_grad, DType dtype) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    n->requires_grad = requires_grad;
    n->dtype = dtype;
    n->seq = ++g_seq_counter;
    if (n->data.size() != shape_numel(n->shape))
        throw ShapeError("tensor data length " + std::to_string(n->data.size()) +
                         " does not match shape " + shape_str(n->shape));
    quantize_all(n->data, dtype);
    return n;
}

// Builds an op node. The backward function is recorded only when gradients
// are enabled and some parent needs them.
Tensor make_op(Shape shape, std::vector<double> data, std::vector<std::shared_ptr<Node>> parents,
               std::function<void(Node&)> backward_fn) {
    DType dtype = DType::F64;
    bool needs = false;
    for (const auto& p : parents) {
        dtype = promote(dtype, p->dtype);
        needs = needs || p->requires_grad;
    }
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    n->dtype = dtype;
    n->seq = ++g_seq_counter;
    quantize_all(n->data, dtype);
    if (g_grad_enabled && needs) {
        n->requires_grad = true;
        n->parents = std::move(parents);
        n->backward_fn = std::move(backward_fn);
    }
    return Tensor(n);
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

// C[m,n] += A[m,k] * B[k,n]
void mm_accum(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[m,k] += A[m,n] * B[k,n]^T
void mm_abt_accum(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * n;
        double* crow = c + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double* brow = b + p * n;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
            crow[p] += acc;
        }
    }
}

// C[k,n] += A[m,k]^T * B[m,n]
void mm_atb_accum(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        const double* brow = b + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            double* crow = c + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

struct ConvDims {
    std::size_t batch, h, w, cin, kh, kw, cout, ho, wo;
    std::size_t pad_top, pad_left;
    int stride;
};

ConvDims conv_dims(const Shape& in, const Shape& k, int stride, Padding pad) {
    if (in.size() != 4)
        throw ShapeError("conv2d: input must be NHWC, got " + shape_str(in));
    if (k.size() != 4)
        throw ShapeError("conv2d: kernel must be [kh,kw,cin,cout], got " + shape_str(k));
    if (in[3] != k[2])
        throw ShapeError("conv2d: input channels " + shape_str(in) + " vs kernel " + shape_str(k));
    if (stride < 1) throw ContractError("conv2d: stride must be >= 1");
    ConvDims d;
    d.batch = in[0]; d.h = in[1]; d.w = in[2]; d.cin = in[3];
    d.kh = k[0]; d.kw = k[1]; d.cout = k[3];
    d.stride = stride;
    const auto s = static_cast<std::size_t>(stride);
    if (pad == Padding::Same) {
        d.ho = (d.h + s - 1) / s;
        d.wo = (d.w + s - 1) / s;
        const std::size_t need_h = (d.ho - 1) * s + d.kh;
        const std::size_t need_w = (d.wo - 1) * s + d.kw;
        const std::size_t pad_h = need_h > d.h ? need_h - d.h : 0;
        const std::size_t pad_w = need_w > d.w ? need_w - d.w : 0;
        d.pad_top = pad_h / 2;   // extra row goes to the high side
        d.pad_left = pad_w / 2;
    } else {
        if (d.kh > d.h || d.kw > d.w)
            throw ShapeError("conv2d: kernel " + shape_str(k) + " larger than input " + shape_str(in));
        d.ho = (d.h - d.kh) / s + 1;
        d.wo = (d.w - d.kw) / s + 1;
        d.pad_top = d.pad_left = 0;
    }
    if (d.ho == 0 || d.wo == 0)
        throw ShapeError("conv2d: zero-size spatial output for input " + shape_str(in) +
                         " kernel " + shape_str(k) + " stride " + std::to_string(stride));
    return d;
}

// Gathers padded input patches into [batch*ho*wo, kh*kw*cin].
std::vector<double> im2col(const std::vector<double>& in, const ConvDims& d) {
    const std::size_t cols = d.kh * d.kw * d.cin;
    std::vector<double> m(d.batch * d.ho * d.wo * cols, 0.0);
    const auto s = static_cast<std::size_t>(d.stride);
    for (std::size_t n = 0; n < d.batch; ++n) {
        for (std::size_t oh = 0; oh < d.ho; ++oh) {
            for (std::size_t ow = 0; ow < d.wo; ++ow) {
                double* row = m.data() + ((n * d.ho + oh) * d.wo + ow) * cols;
                for (std::size_t ki = 0; ki < d.kh; ++ki) {
                    const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * s + ki) -
                                              static_cast<std::ptrdiff_t>(d.pad_top);
                    if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(d.h)) continue;
                    for (std::size_t kj = 0; kj < d.kw; ++kj) {
                        const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * s + kj) -
                                                  static_cast<std::ptrdiff_t>(d.pad_left);
                        if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(d.w)) continue;
                        const double* src = in.data() +
                            ((n * d.h + static_cast<std::size_t>(ih)) * d.w + static_cast<std::size_t>(iw)) * d.cin;
                        std::memcpy(row + (ki * d.kw + kj) * d.cin, src, d.cin * sizeof(double));
                    }
                }
            }
        }
    }
    return m;
}

// Scatter-adds column gradients back to input positions.
void col2im_accum(const std::vector<double>& m, const ConvDims& d, std::vector<double>& din) {
    const std::size_t cols = d.kh * d.kw * d.cin;
    const auto s = static_cast<std::size_t>(d.stride);
    for (std::size_t n = 0; n < d.batch; ++n) {
        for (std::size_t oh = 0; oh < d.ho; ++oh) {
            for (std::size_t ow = 0; ow < d.wo; ++ow) {
                const double* row = m.data() + ((n * d.ho + oh) * d.wo + ow) * cols;
                for (std::size_t ki = 0; ki < d.kh; ++ki) {
                    const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * s + ki) -
                                              static_cast<std::ptrdiff_t>(d.pad_top);
                    if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(d.h)) continue;
                    for (std::size_t kj = 0; kj < d.kw; ++kj) {
                        const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * s + kj) -
                                                  static_cast<std::ptrdiff_t>(d.pad_left);
                        if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(d.w)) continue;
                        double* dst = din.data() +
                            ((n * d.h + static_cast<std::size_t>(ih)) * d.w + static_cast<std::size_t>(iw)) * d.cin;
                        const double* src = row + (ki * d.kw + kj) * d.cin;
                        for (std::size_t c = 0; c < d.cin; ++c) dst[c] += src[c];
                    }
                }
            }
        }
    }
}

}  // namespace

std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

void Node::ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
}

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
    return Tensor(make_leaf(shape, std::vector<double>(shape_numel(shape), 0.0), requires_grad, DType::F64));
}

Tensor Tensor::full(const Shape& shape, double value, bool requires_grad) {
    return Tensor(make_leaf(shape, std::vector<double>(shape_numel(shape), value), requires_grad, DType::F64));
}

Tensor Tensor::from_data(const Shape& shape, std::vector<double> data, bool requires_grad) {
    return Tensor(make_leaf(shape, std::move(data), requires_grad, DType::F64));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return Tensor(make_leaf({1}, {value}, requires_grad, DType::F64));
}

const Shape& Tensor::shape() const {
    if (!node_) throw ContractError("shape() on undefined tensor");
    return node_->shape;
}

std::size_t Tensor::numel() const { return node_ ? node_->data.size() : 0; }

std::vector<double>& Tensor::data() {
    if (!node_) throw ContractError("data() on undefined tensor");
    return node_->data;
}

const std::vector<double>& Tensor::data() const {
    if (!node_) throw ContractError("data() on undefined tensor");
    return node_->data;
}

double Tensor::at(std::initializer_list<std::size_t> idx) const {
    const Shape& s = shape();
    if (idx.size() != s.size()) throw ShapeError("at(): rank mismatch for shape " + shape_str(s));
    std::size_t flat = 0;
    std::size_t i = 0;
    for (std::size_t v : idx) {
        if (v >= s[i]) throw ShapeError("at(): index out of range for shape " + shape_str(s));
        flat = flat * s[i] + v;
        ++i;
    }
    return node_->data[flat];
}

double Tensor::item() const {
    if (numel() != 1) throw ContractError("item() requires a one-element tensor, got " + shape_str(shape()));
    return node_->data[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool v) {
    if (!node_) throw ContractError("set_requires_grad on undefined tensor");
    node_->requires_grad = v;
    return *this;
}

const std::vector<double>& Tensor::grad() const {
    if (!node_) throw ContractError("grad() on undefined tensor");
    node_->ensure_grad();
    return node_->grad;
}

void Tensor::zero_grad() {
    if (!node_) return;
    node_->grad.assign(node_->data.size(), 0.0);
}

DType Tensor::dtype() const { return node_ ? node_->dtype : DType::F64; }

Tensor& Tensor::set_dtype(DType d) {
    if (!node_) throw ContractError("set_dtype on undefined tensor");
    node_->dtype = d;
    quantize_all(node_->data, d);
    return *this;
}

Tensor Tensor::detach() const {
    if (!node_) return Tensor();
    auto n = make_leaf(node_->shape, node_->data, false, node_->dtype);
    return Tensor(n);
}

Tensor Tensor::clone_leaf() const {
    if (!node_) return Tensor();
    auto n = make_leaf(node_->shape, node_->data, node_->requires_grad, node_->dtype);
    return Tensor(n);
}

void Tensor::assert_finite(const std::string& context) const {
    for (double v : data())
        if (!std::isfinite(v))
            throw DomainError(context + ": non-finite value encountered");
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }
bool grad_enabled() { return g_grad_enabled; }

void kink_watch_begin() {
    g_kink_watch = true;
    g_kink_min = std::numeric_limits<double>::infinity();
}

double kink_watch_end() {
    g_kink_watch = false;
    return g_kink_min;
}

// --- ops -------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0])
        throw ShapeError("matmul: incompatible shapes " + shape_str(sa) + " and " + shape_str(sb));
    const std::size_t m = sa[0], k = sa[1], n = sb[1];
    std::vector<double> out(m * n, 0.0);
    mm_accum(a.data().data(), b.data().data(), out.data(), m, k, n);
    auto an = a.node(), bn = b.node();
    return make_op({m, n}, std::move(out), {an, bn}, [an, bn, m, k, n](Node& self) {
        if (an->requires_grad) {
            an->ensure_grad();
            mm_abt_accum(self.grad.data(), bn->data.data(), an->grad.data(), m, n, k);
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            mm_atb_accum(an->data.data(), self.grad.data(), bn->grad.data(), m, k, n);
        }
    });
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, Padding pad) {
    const ConvDims d = conv_dims(input.shape(), kernel.shape(), stride, pad);
    const std::size_t cols = d.kh * d.kw * d.cin;
    const std::size_t rows = d.batch * d.ho * d.wo;
    auto col = std::make_shared<std::vector<double>>(im2col(input.data(), d));
    std::vector<double> out(rows * d.cout, 0.0);
    mm_accum(col->data(), kernel.data().data(), out.data(), rows, cols, d.cout);
    auto in_n = input.node(), k_n = kernel.node();
    return make_op({d.batch, d.ho, d.wo, d.cout}, std::move(out), {in_n, k_n},
                   [in_n, k_n, col, d, rows, cols](Node& self) {
        if (k_n->requires_grad) {
            k_n->ensure_grad();
            mm_atb_accum(col->data(), self.grad.data(), k_n->grad.data(), rows, cols, d.cout);
        }
        if (in_n->requires_grad) {
            in_n->ensure_grad();
            std::vector<double> dcol(rows * cols, 0.0);
            mm_abt_accum(self.grad.data(), k_n->data.data(), dcol.data(), rows, d.cout, cols);
            col2im_accum(dcol, d, in_n->grad);
        }
    });
}

namespace {

Tensor binary_elementwise(const Tensor& a, const Tensor& b, const char* name,
                          double (*fwd)(double, double),
                          double (*dfa)(double, double),
                          double (*dfb)(double, double)) {
    check_same_shape(a, b, name);
    const std::size_t n = a.numel();
    std::vector<double> out(n);
    const auto& da = a.data();
    const auto& db = b.data();
    for (std::size_t i = 0; i < n; ++i) out[i] = fwd(da[i], db[i]);
    auto an = a.node(), bn = b.node();
    return make_op(a.shape(), std::move(out), {an, bn}, [an, bn, dfa, dfb, n](Node& self) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (std::size_t i = 0; i < n; ++i)
                an->grad[i] += self.grad[i] * dfa(an->data[i], bn->data[i]);
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < n; ++i)
                bn->grad[i] += self.grad[i] * dfb(an->data[i], bn->data[i]);
        }
    });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_elementwise(a, b, "add",
        [](double x, double y) { return x + y; },
        [](double, double) { return 1.0; },
        [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_elementwise(a, b, "sub",
        [](double x, double y) { return x - y; },
        [](double, double) { return 1.0; },
        [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_elementwise(a, b, "mul",
        [](double x, double y) { return x * y; },
        [](double, double y) { return y; },
        [](double x, double) { return x; });
}

Tensor add(const Tensor& a, double s) {
    const std::size_t n = a.numel();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = a.data()[i] + s;
    auto an = a.node();
    return make_op(a.shape(), std::move(out), {an}, [an, n](Node& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) an->grad[i] += self.grad[i];
    });
}

Tensor mul(const Tensor& a, double s) {
    const std::size_t n = a.numel();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = a.data()[i] * s;
    auto an = a.node();
    return make_op(a.shape(), std::move(out), {an}, [an, s, n](Node& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) an->grad[i] += self.grad[i] * s;
    });
}

Tensor neg(const Tensor& a) { return mul(a, -1.0); }

Tensor add_bias(const Tensor& a, const Tensor& bias) {
    const Shape& s = a.shape();
    if (s.empty() || bias.shape().size() != 1 || bias.shape()[0] != s.back())
        throw ShapeError("add_bias: bias " + shape_str(bias.shape()) + " does not match last axis of " +
                         shape_str(s));
    const std::size_t c = s.back();
    const std::size_t rows = a.numel() / c;
    std::vector<double> out(a.numel());
    const auto& da = a.data();
    const auto& db = bias.data();
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < c; ++j) out[r * c + j] = da[r * c + j] + db[j];
    auto an = a.node(), bn = bias.node();
    return make_op(s, std::move(out), {an, bn}, [an, bn, rows, c](Node& self) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (std::size_t i = 0; i < rows * c; ++i) an->grad[i] += self.grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t j = 0; j < c; ++j) bn->grad[j] += self.grad[r * c + j];
        }
    });
}

namespace {

Tensor unary_elementwise(const Tensor& a, std::vector<double> out,
                         std::function<double(double, double)> dfy) {
    // dfy(x, y) is the local derivative given input x and output y.
    auto an = a.node();
    const std::size_t n = a.numel();
    auto out_shape = a.shape();
    return make_op(std::move(out_shape), std::move(out), {an},
                   [an, dfy = std::move(dfy), n](Node& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (std::size_t i = 0; i < n; ++i)
            an->grad[i] += self.grad[i] * dfy(an->data[i], self.data[i]);
    });
}

}  // namespace

Tensor relu(const Tensor& a) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < a.numel(); ++i) {
        note_kink_distance(std::abs(a.data()[i]));
        out[i] = a.data()[i] > 0.0 ? a.data()[i] : 0.0;
    }
    return unary_elementwise(a, std::move(out), [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& a) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < a.numel(); ++i) {
        out[i] = std::exp(a.data()[i]);
        if (!std::isfinite(out[i])) throw DomainError("exp: overflow at input " + std::to_string(a.data()[i]));
    }
    return unary_elementwise(a, std::move(out), [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < a.numel(); ++i) {
        if (a.data()[i] <= 0.0)
            throw DomainError("log: non-positive input " + std::to_string(a.data()[i]));
        out[i] = std::log(a.data()[i]);
    }
    return unary_elementwise(a, std::move(out), [](double x, double) { return 1.0 / x; });
}

Tensor clamp_min(const Tensor& a, double floor) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < a.numel(); ++i) {
        note_kink_distance(std::abs(a.data()[i] - floor));
        out[i] = std::max(a.data()[i], floor);
    }
    return unary_elementwise(a, std::move(out),
                             [floor](double x, double) { return x > floor ? 1.0 : 0.0; });
}

Tensor softmax(const Tensor& a, std::size_t axis) {
    const Shape& s = a.shape();
    if (s.size() != 2 || axis != 1)
        throw ShapeError("softmax: implemented for 2-D tensors along axis 1, got " + shape_str(s));
    const std::size_t rows = s[0], k = s[1];
    std::vector<double> out(a.numel());
    const auto& d = a.data();
    for (std::size_t r = 0; r < rows; ++r) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < k; ++j) mx = std::max(mx, d[r * k + j]);
        double denom = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            out[r * k + j] = std::exp(d[r * k + j] - mx);
            denom += out[r * k + j];
        }
        for (std::size_t j = 0; j < k; ++j) out[r * k + j] /= denom;
    }
    auto an = a.node();
    return make_op(s, std::move(out), {an}, [an, rows, k](Node& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
            double dot = 0.0;
            for (std::size_t j = 0; j < k; ++j) dot += self.grad[r * k + j] * self.data[r * k + j];
            for (std::size_t j = 0; j < k; ++j)
                an->grad[r * k + j] += self.data[r * k + j] * (self.grad[r * k + j] - dot);
        }
    });
}

Tensor sum(const Tensor& a) {
    double acc = 0.0;
    for (double v : a.data()) acc += v;
    auto an = a.node();
    return make_op({1}, {acc}, {an}, [an](Node& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (double& g : an->grad) g += self.grad[0];
    });
}

Tensor mean(const Tensor& a) {
    const double n = static_cast<double>(a.numel());
    double acc = 0.0;
    for (double v : a.data()) acc += v;
    auto an = a.node();
    return make_op({1}, {acc / n}, {an}, [an, n](Node& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        const double g = self.grad[0] / n;
        for (double& gi : an->grad) gi += g;
    });
}

Tensor frobenius_sq(const Tensor& a) {
    double acc = 0.0;
    for (double v : a.data()) acc += v * v;
    auto an = a.node();
    return make_op({1}, {acc}, {an}, [an](Node& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (std::size_t i = 0; i < an->data.size(); ++i)
            an->grad[i] += 2.0 * an->data[i] * self.grad[0];
    });
}

double max_value(const Tensor& a) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : a.data()) mx = std::max(mx, v);
    return mx;
}

Tensor reshape(const Tensor& a, const Shape& shape) {
    if (shape_numel(shape) != a.numel())
        throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
    std::vector<double> out = a.data();
    auto an = a.node();
    return make_op(shape, std::move(out), {an}, [an](Node& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (std::size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += self.grad[i];
    });
}

Tensor flatten(const Tensor& a) {
    const Shape& s = a.shape();
    if (s.empty()) throw ShapeError("flatten: undefined on rank-0 tensor");
    return reshape(a, {s[0], a.numel() / s[0]});
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
    if (parts.empty()) throw ContractError("concat: no inputs");
    const Shape& s0 = parts[0].shape();
    if (axis >= s0.size()) throw ShapeError("concat: axis out of range for " + shape_str(s0));
    Shape out_shape = s0;
    std::size_t total_axis = 0;
    for (const Tensor& p : parts) {
        const Shape& s = p.shape();
        if (s.size() != s0.size())
            throw ShapeError("concat: rank mismatch " + shape_str(s0) + " vs " + shape_str(s));
        for (std::size_t i = 0; i < s.size(); ++i)
            if (i != axis && s[i] != s0[i])
                throw ShapeError("concat: shape mismatch " + shape_str(s0) + " vs " + shape_str(s));
        total_axis += s[axis];
    }
    out_shape[axis] = total_axis;

    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= s0[i];
    for (std::size_t i = axis + 1; i < s0.size(); ++i) inner *= s0[i];

    std::vector<double> out(shape_numel(out_shape));
    const std::size_t out_block = total_axis * inner;
    std::size_t offset = 0;
    for (const Tensor& p : parts) {
        const std::size_t block = p.shape()[axis] * inner;
        for (std::size_t o = 0; o < outer; ++o)
            std::memcpy(out.data() + o * out_block + offset, p.data().data() + o * block,
                        block * sizeof(double));
        offset += block;
    }

    std::vector<std::shared_ptr<Node>> parents;
    for (const Tensor& p : parts) parents.push_back(p.node());
    return make_op(out_shape, std::move(out), parents,
                   [parents, outer, out_block](Node& self) {
        std::size_t offset = 0;
        for (const auto& pn : parents) {
            const std::size_t block = pn->data.size() / outer;
            if (pn->requires_grad) {
                pn->ensure_grad();
                for (std::size_t o = 0; o < outer; ++o) {
                    const double* src = self.grad.data() + o * out_block + offset;
                    double* dst = pn->grad.data() + o * block;
                    for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
                }
            }
            offset += block;
        }
    });
}

Tensor upsample_nearest(const Tensor& a, int factor) {
    const Shape& s = a.shape();
    if (s.size() != 4) throw ShapeError("upsample_nearest: input must be NHWC, got " + shape_str(s));
    if (factor < 1) throw ContractError("upsample_nearest: factor must be >= 1");
    const std::size_t f = static_cast<std::size_t>(factor);
    const std::size_t n = s[0], h = s[1], w = s[2], c = s[3];
    const std::size_t ho = h * f, wo = w * f;
    std::vector<double> out(n * ho * wo * c);
    const auto& d = a.data();
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t oh = 0; oh < ho; ++oh)
            for (std::size_t ow = 0; ow < wo; ++ow) {
                const double* src = d.data() + ((b * h + oh / f) * w + ow / f) * c;
                double* dst = out.data() + ((b * ho + oh) * wo + ow) * c;
                std::memcpy(dst, src, c * sizeof(double));
            }
    auto an = a.node();
    return make_op({n, ho, wo, c}, std::move(out), {an}, [an, n, h, w, c, f](Node& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        const std::size_t ho = h * f, wo = w * f;
        for (std::size_t b = 0; b < n; ++b)
            for (std::size_t oh = 0; oh < ho; ++oh)
                for (std::size_t ow = 0; ow < wo; ++ow) {
                    const double* src = self.grad.data() + ((b * ho + oh) * wo + ow) * c;
                    double* dst = an->grad.data() + ((b * h + oh / f) * w + ow / f) * c;
                    for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += src[ch];
                }
    });
}

Tensor crop_spatial(const Tensor& a, std::size_t h, std::size_t w) {
    const Shape& s = a.shape();
    if (s.size() != 4) throw ShapeError("crop_spatial: input must be NHWC, got " + shape_str(s));
    if (h > s[1] || w > s[2] || h == 0 || w == 0)
        throw ShapeError("crop_spatial: target " + shape_str({s[0], h, w, s[3]}) +
                         " exceeds input " + shape_str(s));
    const std::size_t n = s[0], ih = s[1], iw = s[2], c = s[3];
    std::vector<double> out(n * h * w * c);
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t r = 0; r < h; ++r)
            std::memcpy(out.data() + ((b * h + r) * w) * c,
                        a.data().data() + ((b * ih + r) * iw) * c, w * c * sizeof(double));
    auto an = a.node();
    return make_op({n, h, w, c}, std::move(out), {an}, [an, n, ih, iw, h, w, c](Node& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (std::size_t b = 0; b < n; ++b)
            for (std::size_t r = 0; r < h; ++r) {
                const double* src = self.grad.data() + ((b * h + r) * w) * c;
                double* dst = an->grad.data() + ((b * ih + r) * iw) * c;
                for (std::size_t i = 0; i < w * c; ++i) dst[i] += src[i];
            }
    });
}

Tensor gather_rows(const Tensor& a, const std::vector<std::size_t>& indices) {
    const Shape& s = a.shape();
    if (s.empty()) throw ShapeError("gather_rows: undefined on rank-0 tensor");
    const std::size_t row = a.numel() / s[0];
    for (std::size_t idx : indices)
        if (idx >= s[0])
            throw ShapeError("gather_rows: index " + std::to_string(idx) + " out of range for " + shape_str(s));
    Shape out_shape = s;
    out_shape[0] = indices.size();
    std::vector<double> out(indices.size() * row);
    for (std::size_t i = 0; i < indices.size(); ++i)
        std::memcpy(out.data() + i * row, a.data().data() + indices[i] * row, row * sizeof(double));
    auto an = a.node();
    return make_op(out_shape, std::move(out), {an}, [an, indices, row](Node& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (std::size_t i = 0; i < indices.size(); ++i) {
            const double* src = self.grad.data() + i * row;
            double* dst = an->grad.data() + indices[i] * row;
            for (std::size_t j = 0; j < row; ++j) dst[j] += src[j];
        }
    });
}

Tensor take_per_row(const Tensor& a, const std::vector<std::size_t>& cols) {
    const Shape& s = a.shape();
    if (s.size() != 2) throw ShapeError("take_per_row: input must be 2-D, got " + shape_str(s));
    if (cols.size() != s[0])
        throw ShapeError("take_per_row: need one column per row, got " + std::to_string(cols.size()) +
                         " for " + shape_str(s));
    const std::size_t n = s[0], k = s[1];
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (cols[i] >= k)
            throw ContractError("take_per_row: column " + std::to_string(cols[i]) + " out of range " +
                                std::to_string(k));
        out[i] = a.data()[i * k + cols[i]];
    }
    auto an = a.node();
    return make_op({n, 1}, std::move(out), {an}, [an, cols, k](Node& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (std::size_t i = 0; i < cols.size(); ++i) an->grad[i * k + cols[i]] += self.grad[i];
    });
}

void backward(const Tensor& root) {
    if (!root.defined()) throw ContractError("backward: undefined tensor");
    if (root.numel() != 1)
        throw ContractError("backward: root must be scalar, got " + shape_str(root.shape()));
    auto rn = root.node();
    rn->ensure_grad();
    rn->grad[0] += 1.0;

    // Collect reachable nodes; append order (seq) is a topological order.
    std::vector<std::shared_ptr<Node>> order;
    std::unordered_set<const Node*> visited;
    std::vector<std::shared_ptr<Node>> work{rn};
    while (!work.empty()) {
        auto n = work.back();
        work.pop_back();
        if (!visited.insert(n.get()).second) continue;
        order.push_back(n);
        for (const auto& p : n->parents)
            if (!visited.contains(p.get())) work.push_back(p);
    }
    std::sort(order.begin(), order.end(),
              [](const auto& a, const auto& b) { return a->seq > b->seq; });
    for (const auto& n : order) {
        if (!n->backward_fn) continue;
        n->ensure_grad();
        n->backward_fn(*n);
    }
}

// --- tensor dump format ----------------------------------------------

void write_tensor(std::ostream& os, const Tensor& t) {
    static_assert(std::endian::native == std::endian::little,
                  "tensor dump format is little-endian");
    os << "shape: ";
    const Shape& s = t.shape();
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ",";
        os << s[i];
    }
    os << "\n";
    os.write(reinterpret_cast<const char*>(t.data().data()),
             static_cast<std::streamsize>(t.numel() * sizeof(double)));
}

Tensor read_tensor(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw IoError("tensor dump: missing header");
    const std::string prefix = "shape: ";
    if (line.rfind(prefix, 0) != 0) throw IoError("tensor dump: bad header '" + line + "'");
    Shape shape;
    std::stringstream ss(line.substr(prefix.size()));
    std::string part;
    while (std::getline(ss, part, ',')) {
        if (part.empty()) throw IoError("tensor dump: empty extent in '" + line + "'");
        shape.push_back(static_cast<std::size_t>(std::stoull(part)));
    }
    std::vector<double> data(shape_numel(shape));
    is.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (static_cast<std::size_t>(is.gcount()) != data.size() * sizeof(double))
        throw IoError("tensor dump: truncated payload for shape " + shape_str(shape));
    return Tensor::from_data(shape, std::move(data));
}

void write_tensor_file(const std::string& path, const Tensor& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    write_tensor(os, t);
    if (!os) throw IoError("write failed: " + path);
}

Tensor read_tensor_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open for reading: " + path);
    return read_tensor(is);
}

}  // namespace midnet
