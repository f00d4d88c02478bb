#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dunet/tensor.hpp"

namespace dunet {

// Trainable tensor plus its gradient accumulator and the RMSprop running
// squared-gradient average.
template <class T>
struct Parameter {
    Tensor<T> value;
    Tensor<T> grad;
    Tensor<T> rms;
    bool has_grad = false;

    Parameter() = default;
    explicit Parameter(Tensor<T> v) : value(std::move(v)), grad(value.shape), rms(value.shape) {}

    void zero_grad() {
        std::fill(grad.data.begin(), grad.data.end(), T(0));
        has_grad = false;
    }
};

// s <- decay*s + (1-decay)*g^2 ; p <- p - lr*g/(sqrt(s)+eps) ; grads zeroed.
template <class T>
void rmsprop_step(const std::vector<Parameter<T>*>& params, T lr, T decay, T eps);

// Reverse-mode tape. Each op records its output tensor and a closure that
// scatters the output gradient onto the op's inputs; backward() walks the node
// list once in reverse recording order. Gradients are only materialized along
// paths that reach a grad-requiring leaf. Every op checks its output for
// non-finite values and throws NumericError tagged with the op name (callers
// can pass a more specific tag).
template <class T>
class Tape {
public:
    struct Var {
        int i = -1;
        bool ok() const { return i >= 0; }
    };

    static Var none() { return Var{}; }

    Var leaf(Tensor<T> value, bool needs_grad = false, const std::string& tag = "leaf");
    // External parameter leaf; backward() accumulates into p.grad.
    Var param(Parameter<T>& p, const std::string& tag = "param");

    Var conv2d_valid(Var input, Var kernels, Var bias, const std::string& tag = "conv2d_valid");
    Var maxpool2(Var x, const std::string& tag = "maxpool2");
    Var upsample2(Var x, const std::string& tag = "upsample2");
    Var concat_channels(Var a, Var b, const std::string& tag = "concat_channels");
    Var relu(Var x, const std::string& tag = "relu");
    // ln(1 + x), x >= 0 elementwise
    Var log1p_pos(Var x, const std::string& tag = "log1p_pos");
    // ln(offset + x), offset + x > 0 elementwise
    Var log_shift(Var x, T offset, const std::string& tag = "log_shift");
    Var add(Var a, Var b, const std::string& tag = "add");
    Var sub(Var a, Var b, const std::string& tag = "sub");
    Var mul(Var a, Var b, const std::string& tag = "mul");
    Var scale(Var x, T c, const std::string& tag = "scale");
    Var channel_mean(Var x, const std::string& tag = "channel_mean");
    Var bilinear_resize(Var x, int oh, int ow, const std::string& tag = "bilinear_resize");
    Var replicate_pad1(Var x, const std::string& tag = "replicate_pad1");

    // Percentile clip + linear stretch to [0,255]. Vmin/Vmax are recomputed each
    // forward from the sorted data and treated as constants by the backward pass;
    // fixed_vmin/fixed_vmax override them (used by the finite-difference harness,
    // which must differentiate the same clip window the backward claims).
    Var color_balance(Var x, double s1, double s2,
                      const T* fixed_vmin = nullptr, const T* fixed_vmax = nullptr,
                      const std::string& tag = "color_balance");
    // Last stage of the correction: B=max(R,G,B), A=min(255/B, int1/int), channels
    // scaled by A and clamped to [0,255]. Gradient follows the selected min branch
    // and the argmax channel; clamp passes gradient inside the range only.
    Var chromatic_scale(Var image, Var int_map, Var int1, const std::string& tag = "chromatic_scale");

    // mean over pixels of the stable log-sum-exp binary cross-entropy
    Var bce_with_logits(Var logits, const Tensor<T>& target, const std::string& tag = "bce_with_logits");
    Var sum(Var x, const std::string& tag = "sum");
    Var weighted_sum(Var x, const Tensor<T>& weights, const std::string& tag = "weighted_sum");

    void backward(Var loss);

    const Tensor<T>& value(Var v) const { return node(v.i).out; }
    // zeros if the node was never reached by backward
    Tensor<T> grad(Var v) const;
    std::size_t size() const { return nodes_.size(); }
    // Vmin/Vmax recorded by the most recent color_balance op (diagnostics).
    std::pair<T, T> last_balance_window() const { return {last_vmin_, last_vmax_}; }

private:
    struct Node {
        Tensor<T> out;
        Tensor<T> grad;
        bool needs_grad = false;
        bool has_grad = false;
        Parameter<T>* external = nullptr;
        std::function<void(Tape&, const Tensor<T>&)> back;
    };

    std::vector<Node> nodes_;
    T last_vmin_ = T(0), last_vmax_ = T(0);

    Node& node(int i) { return nodes_[static_cast<std::size_t>(i)]; }
    const Node& node(int i) const { return nodes_[static_cast<std::size_t>(i)]; }
    bool needs(int i) const { return node(i).needs_grad; }
    Tensor<T>& grad_buf(int i);
    Var push(Tensor<T> out, bool needs_grad, const std::string& tag,
             std::function<void(Tape&, const Tensor<T>&)> back);
};

extern template class Tape<float>;
extern template class Tape<double>;
extern template void rmsprop_step<float>(const std::vector<Parameter<float>*>&, float, float, float);
extern template void rmsprop_step<double>(const std::vector<Parameter<double>*>&, double, double, double);

} // namespace dunet
