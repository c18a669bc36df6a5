#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

#include "midnet/error.hpp"

namespace midnet {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

enum class DType { F64, F32 };
enum class Padding { Same, Valid };

// A graph node. Children hold shared pointers to parents only, so the graph
// is acyclic by construction; `seq` records append order, which is a valid
// topological order because parents are created before children.
struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until backward touches this node
    bool requires_grad = false;
    DType dtype = DType::F64;
    std::uint64_t seq = 0;
    std::vector<std::shared_ptr<Node>> parents;
    // Reads this node's grad and accumulates into the parents' grads.
    std::function<void(Node&)> backward_fn;

    std::size_t numel() const { return data.size(); }
    void ensure_grad();
};

// Value-style handle over a shared graph node. Copying a Tensor aliases the
// node; detach() produces an independent leaf with copied data.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(const Shape& shape, bool requires_grad = false);
    static Tensor full(const Shape& shape, double value, bool requires_grad = false);
    static Tensor from_data(const Shape& shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t numel() const;
    std::size_t dim(std::size_t i) const { return shape().at(i); }

    std::vector<double>& data();
    const std::vector<double>& data() const;
    double at(std::initializer_list<std::size_t> idx) const;
    double item() const;  // value of a one-element tensor

    bool requires_grad() const;
    Tensor& set_requires_grad(bool v);
    const std::vector<double>& grad() const;
    void zero_grad();

    DType dtype() const;
    Tensor& set_dtype(DType d);  // quantizes stored data when switching to F32

    Tensor detach() const;      // leaf copy, no graph history, requires_grad off
    Tensor clone_leaf() const;  // leaf copy keeping requires_grad

    void assert_finite(const std::string& context) const;

    std::shared_ptr<Node> node() const { return node_; }
    explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

private:
    std::shared_ptr<Node> node_;
};

// Kink monitor: while active, relu and clamp_min record the smallest
// distance between an input and the kink. Gradient checks use it to reject
// evaluation points where finite differences are invalid.
void kink_watch_begin();
double kink_watch_end();  // smallest distance seen; +inf if none

// While a NoGradGuard is alive, ops do not record backward functions.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};
bool grad_enabled();

// --- ops -------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
// NHWC input, [kh, kw, cin, cout] kernel, cross-correlation (no flip).
// "same" pads symmetrically with the extra row/column on the high side.
Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, Padding pad);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, double s);
Tensor mul(const Tensor& a, double s);
Tensor neg(const Tensor& a);
// Broadcasts bias (shape = last axis of a) over all leading axes.
Tensor add_bias(const Tensor& a, const Tensor& bias);

Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);  // DomainError on non-positive input
Tensor clamp_min(const Tensor& a, double floor);

Tensor softmax(const Tensor& a, std::size_t axis);  // 2-D, axis 1
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor frobenius_sq(const Tensor& a);  // sum of squares of all elements
double max_value(const Tensor& a);     // plain data reduction, no graph

Tensor reshape(const Tensor& a, const Shape& shape);
Tensor flatten(const Tensor& a);  // [batch, rest]
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor upsample_nearest(const Tensor& a, int factor);       // NHWC spatial
Tensor crop_spatial(const Tensor& a, std::size_t h, std::size_t w);
Tensor gather_rows(const Tensor& a, const std::vector<std::size_t>& indices);
// Picks a[i, cols[i]] from a 2-D tensor -> [n, 1].
Tensor take_per_row(const Tensor& a, const std::vector<std::size_t>& cols);

// Accumulates d(root)/d(leaf) into every requires_grad leaf. Repeated calls
// accumulate; callers zero grads explicitly.
void backward(const Tensor& root);

// --- tensor dump format ----------------------------------------------
// Text header "shape: d1,d2,...\n" followed by raw little-endian f64.
void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);
void write_tensor_file(const std::string& path, const Tensor& t);
Tensor read_tensor_file(const std::string& path);

}  // namespace midnet
