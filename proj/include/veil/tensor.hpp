#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace veil {

struct TensorError : std::runtime_error {
    explicit TensorError(const std::string& what) : std::runtime_error(what) {}
};

// Dense row-major tensor of 64-bit floats. grad stays empty until backward
// (or ensure_grad) touches it; when present it always matches value's size.
struct TensorData {
    std::vector<size_t> shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;

    size_t size() const { return value.size(); }
    size_t rows() const { return shape.size() >= 2 ? shape[0] : 1; }
    size_t cols() const { return shape.empty() ? 0 : shape.back(); }
    bool has_grad() const { return !grad.empty(); }
    void ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), 0.0);
    }
    void zero_grad() { grad.assign(value.size(), 0.0); }
};

using TensorPtr = std::shared_ptr<TensorData>;

size_t numel(const std::vector<size_t>& shape);
std::string shape_str(const std::vector<size_t>& shape);

TensorPtr make_tensor(std::vector<size_t> shape, std::vector<double> value,
                      bool requires_grad = false);
TensorPtr make_tensor(std::vector<size_t> shape, double fill = 0.0,
                      bool requires_grad = false);

inline double sign0(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

// Define-by-run graph. Every op records a node (kind, inputs, output,
// backward closure) in insertion order, which is already topological.
// Ops validate shapes up front and reject non-finite outputs.
class Tape {
public:
    static constexpr double kLayerNormEps = 1e-5;

    // a:[m,k] @ b:[k,n] -> [m,n]; with transpose_b, b:[n,k] and a@b^T.
    TensorPtr matmul(const TensorPtr& a, const TensorPtr& b,
                     bool transpose_b = false);
    // Same shape, or b is a bias broadcast over a's last axis.
    TensorPtr add(const TensorPtr& a, const TensorPtr& b);
    TensorPtr mul(const TensorPtr& a, const TensorPtr& b);
    TensorPtr scale(const TensorPtr& a, double s);
    TensorPtr relu(const TensorPtr& a);
    // Normalizes over the last axis; gamma/beta have that axis's length.
    TensorPtr layer_norm(const TensorPtr& x, const TensorPtr& gamma,
                         const TensorPtr& beta);
    TensorPtr softmax(const TensorPtr& a);  // over last axis
    // table:[vocab,d]; out:[ids.size(),d]. Rejects out-of-range ids.
    TensorPtr gather_rows(const TensorPtr& table, const std::vector<int>& ids);
    TensorPtr reshape(const TensorPtr& a, std::vector<size_t> new_shape);
    TensorPtr slice_rows(const TensorPtr& a, size_t begin, size_t end);
    TensorPtr slice_cols(const TensorPtr& a, size_t begin, size_t end);
    TensorPtr concat_rows(const std::vector<TensorPtr>& parts);
    TensorPtr mean(const TensorPtr& a);  // -> scalar [1]
    // logits:[rows,vocab] -> per-row -log softmax(logits)[target].
    TensorPtr cross_entropy(const TensorPtr& logits,
                            const std::vector<int>& targets);
    TensorPtr cross_entropy(const TensorPtr& logits, int target);

    // Fills grad of every requires_grad tensor reachable from root with
    // d(root)/d(tensor). Leaf grads accumulate across calls; grads of
    // tensors produced by this tape are reset each call.
    void backward(const TensorPtr& root);

    size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        const char* op;
        std::vector<TensorPtr> inputs;
        TensorPtr output;
        std::function<void()> back;
    };
    std::vector<Node> nodes_;

    TensorPtr record(const char* op, std::vector<TensorPtr> inputs,
                     std::vector<size_t> out_shape,
                     std::vector<double> out_value);
    void set_back(std::function<void()> fn) { nodes_.back().back = std::move(fn); }
};

// Max over checked coordinates of
// |analytic - central difference| / max(1, |analytic|).
// f must be deterministic and return a scalar. coords restricts the check
// to a subset of x's coordinates; null means all of them.
double check_gradient(
    const std::function<TensorPtr(Tape&, const TensorPtr&)>& f,
    const TensorPtr& x, double h,
    const std::vector<size_t>* coords = nullptr);

}  // namespace veil
