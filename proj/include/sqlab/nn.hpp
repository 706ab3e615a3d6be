#pragma once

// Minimal dense/conv2d network engine: just enough to train every model in
// this project. Double precision throughout so analytic gradients can be
// checked against central finite differences.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sqlab/rng.hpp"

namespace sqlab::nn {

enum class Activation { linear, relu, sigmoid, softmax };
enum class LayerKind { dense, conv2d };
enum class Padding { valid, same };

// Sigmoid outputs are clamped into [floor, 1-floor] so they stay strictly
// inside (0, 1) even for extreme logits.
inline constexpr double kSigmoidFloor = 1e-15;

struct Shape {
    // [n] for dense vectors, [h, w, c] for conv feature maps.
    std::vector<int> dims;

    int count() const {
        int n = 1;
        for (int d : dims) n *= d;
        return n;
    }
    bool operator==(const Shape&) const = default;
};

struct LayerSpec {
    LayerKind kind = LayerKind::dense;
    Shape input_shape;
    Shape output_shape;
    int kernel_size = 0;  // conv2d only
    Padding padding = Padding::valid;
    Activation activation = Activation::linear;
    bool has_bias = true;

    int parameter_count() const {
        if (kind == LayerKind::dense) {
            const int in = input_shape.count();
            const int out = output_shape.count();
            return in * out + (has_bias ? out : 0);
        }
        const int in_ch = input_shape.dims[2];
        const int out_ch = output_shape.dims[2];
        return out_ch * kernel_size * kernel_size * in_ch + (has_bias ? out_ch : 0);
    }
};

inline LayerSpec dense(int in, int out, Activation act, bool bias = true) {
    LayerSpec s;
    s.kind = LayerKind::dense;
    s.input_shape = {{in}};
    s.output_shape = {{out}};
    s.activation = act;
    s.has_bias = bias;
    return s;
}

inline LayerSpec conv2d(int h, int w, int in_ch, int out_ch, int kernel,
                        Padding pad, Activation act) {
    if (pad == Padding::valid && (h < kernel || w < kernel))
        throw std::invalid_argument("conv2d: kernel larger than input under valid padding");
    LayerSpec s;
    s.kind = LayerKind::conv2d;
    s.input_shape = {{h, w, in_ch}};
    const int oh = pad == Padding::valid ? h - kernel + 1 : h;
    const int ow = pad == Padding::valid ? w - kernel + 1 : w;
    s.output_shape = {{oh, ow, out_ch}};
    s.kernel_size = kernel;
    s.padding = pad;
    s.activation = act;
    return s;
}

// Parameter container: an ordered layer list plus one flat parameter vector
// with per-layer offsets. Forward is deterministic given parameters and input.
struct NetworkModel {
    std::vector<LayerSpec> layers;
    std::vector<double> parameters;
    std::vector<int> offsets;

    int parameter_count() const { return static_cast<int>(parameters.size()); }
    std::span<double> layer_params(std::size_t i) {
        return std::span<double>(parameters).subspan(offsets[i], layers[i].parameter_count());
    }
    std::span<const double> layer_params(std::size_t i) const {
        return std::span<const double>(parameters).subspan(offsets[i], layers[i].parameter_count());
    }
};

// Weights drawn uniformly from [-init_range, init_range].
inline NetworkModel make_network(std::vector<LayerSpec> layers, Rng& rng,
                                 double init_range = 0.1) {
    NetworkModel m;
    m.layers = std::move(layers);
    int total = 0;
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        if (i > 0 && m.layers[i].input_shape.count() != m.layers[i - 1].output_shape.count())
            throw std::invalid_argument("make_network: layer shapes do not chain");
        m.offsets.push_back(total);
        total += m.layers[i].parameter_count();
    }
    m.parameters.resize(total);
    for (double& p : m.parameters) p = rng.uniform(-init_range, init_range);
    return m;
}

// Reusable activation buffers; act[0] is the input copy, act[i+1] the
// post-activation output of layer i.
struct Workspace {
    std::vector<std::vector<double>> act;
    std::vector<std::vector<double>> grad;
};

namespace detail {

inline void apply_activation(Activation a, std::vector<double>& v) {
    switch (a) {
        case Activation::linear:
            break;
        case Activation::relu:
            for (double& x : v) x = x > 0.0 ? x : 0.0;
            break;
        case Activation::sigmoid:
            for (double& x : v) {
                x = 1.0 / (1.0 + std::exp(-x));
                x = std::clamp(x, kSigmoidFloor, 1.0 - kSigmoidFloor);
            }
            break;
        case Activation::softmax: {
            double mx = *std::max_element(v.begin(), v.end());
            double sum = 0.0;
            for (double& x : v) {
                x = std::exp(x - mx);
                sum += x;
            }
            for (double& x : v) x /= sum;
            break;
        }
    }
}

// dL/dy -> dL/dz using the post-activation output y.
inline void activation_backward(Activation a, const std::vector<double>& y,
                                std::vector<double>& dy) {
    switch (a) {
        case Activation::linear:
            break;
        case Activation::relu:
            for (std::size_t i = 0; i < y.size(); ++i)
                if (y[i] <= 0.0) dy[i] = 0.0;
            break;
        case Activation::sigmoid:
            for (std::size_t i = 0; i < y.size(); ++i) dy[i] *= y[i] * (1.0 - y[i]);
            break;
        case Activation::softmax: {
            double dot = 0.0;
            for (std::size_t i = 0; i < y.size(); ++i) dot += dy[i] * y[i];
            for (std::size_t i = 0; i < y.size(); ++i) dy[i] = y[i] * (dy[i] - dot);
            break;
        }
    }
}

inline void dense_forward(const LayerSpec& s, std::span<const double> w,
                          const std::vector<double>& x, std::vector<double>& y) {
    const int in = s.input_shape.count();
    const int out = s.output_shape.count();
    const double* bias = s.has_bias ? w.data() + in * out : nullptr;
    for (int o = 0; o < out; ++o) {
        double acc = bias ? bias[o] : 0.0;
        const double* row = w.data() + o * in;
        for (int i = 0; i < in; ++i) acc += row[i] * x[i];
        y[o] = acc;
    }
}

inline void dense_backward(const LayerSpec& s, std::span<const double> w,
                           const std::vector<double>& x, const std::vector<double>& dz,
                           std::span<double> dw, std::vector<double>* dx) {
    const int in = s.input_shape.count();
    const int out = s.output_shape.count();
    for (int o = 0; o < out; ++o) {
        const double g = dz[o];
        double* wrow = dw.data() + o * in;
        for (int i = 0; i < in; ++i) wrow[i] += g * x[i];
        if (s.has_bias) dw[in * out + o] += g;
    }
    if (dx) {
        for (int i = 0; i < in; ++i) {
            double acc = 0.0;
            for (int o = 0; o < out; ++o) acc += w[o * in + i] * dz[o];
            (*dx)[i] = acc;
        }
    }
}

// Feature maps are laid out [h][w][c], weights [oc][ky][kx][ic].
inline void conv_forward(const LayerSpec& s, std::span<const double> w,
                         const std::vector<double>& x, std::vector<double>& y) {
    const int ih = s.input_shape.dims[0], iw = s.input_shape.dims[1], ic = s.input_shape.dims[2];
    const int oh = s.output_shape.dims[0], ow = s.output_shape.dims[1], oc = s.output_shape.dims[2];
    const int k = s.kernel_size;
    const int off = s.padding == Padding::same ? -(k / 2) : 0;
    const double* bias = s.has_bias ? w.data() + oc * k * k * ic : nullptr;
    for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox)
            for (int c = 0; c < oc; ++c) {
                double acc = bias ? bias[c] : 0.0;
                const double* wc = w.data() + c * k * k * ic;
                for (int ky = 0; ky < k; ++ky) {
                    const int iy = oy + ky + off;
                    if (iy < 0 || iy >= ih) continue;
                    for (int kx = 0; kx < k; ++kx) {
                        const int ix = ox + kx + off;
                        if (ix < 0 || ix >= iw) continue;
                        const double* xr = x.data() + (iy * iw + ix) * ic;
                        const double* wr = wc + (ky * k + kx) * ic;
                        for (int ch = 0; ch < ic; ++ch) acc += wr[ch] * xr[ch];
                    }
                }
                y[(oy * ow + ox) * oc + c] = acc;
            }
}

inline void conv_backward(const LayerSpec& s, std::span<const double> w,
                          const std::vector<double>& x, const std::vector<double>& dz,
                          std::span<double> dw, std::vector<double>* dx) {
    const int ih = s.input_shape.dims[0], iw = s.input_shape.dims[1], ic = s.input_shape.dims[2];
    const int oh = s.output_shape.dims[0], ow = s.output_shape.dims[1], oc = s.output_shape.dims[2];
    const int k = s.kernel_size;
    const int off = s.padding == Padding::same ? -(k / 2) : 0;
    if (dx) std::fill(dx->begin(), dx->end(), 0.0);
    for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox)
            for (int c = 0; c < oc; ++c) {
                const double g = dz[(oy * ow + ox) * oc + c];
                if (g == 0.0) continue;
                double* dwc = dw.data() + c * k * k * ic;
                const double* wc = w.data() + c * k * k * ic;
                for (int ky = 0; ky < k; ++ky) {
                    const int iy = oy + ky + off;
                    if (iy < 0 || iy >= ih) continue;
                    for (int kx = 0; kx < k; ++kx) {
                        const int ix = ox + kx + off;
                        if (ix < 0 || ix >= iw) continue;
                        const double* xr = x.data() + (iy * iw + ix) * ic;
                        double* dwr = dwc + (ky * k + kx) * ic;
                        for (int ch = 0; ch < ic; ++ch) dwr[ch] += g * xr[ch];
                        if (dx) {
                            double* dxr = dx->data() + (iy * iw + ix) * ic;
                            const double* wr = wc + (ky * k + kx) * ic;
                            for (int ch = 0; ch < ic; ++ch) dxr[ch] += g * wr[ch];
                        }
                    }
                }
                if (s.has_bias) dw[oc * k * k * ic + c] += g;
            }
}

}  // namespace detail

inline const std::vector<double>& forward(const NetworkModel& m,
                                          std::span<const double> input, Workspace& ws) {
    if (m.layers.empty()) throw std::invalid_argument("forward: empty model");
    if (static_cast<int>(input.size()) != m.layers.front().input_shape.count())
        throw std::invalid_argument("forward: input shape mismatch");
    ws.act.resize(m.layers.size() + 1);
    ws.act[0].assign(input.begin(), input.end());
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        const LayerSpec& s = m.layers[i];
        ws.act[i + 1].resize(s.output_shape.count());
        if (s.kind == LayerKind::dense)
            detail::dense_forward(s, m.layer_params(i), ws.act[i], ws.act[i + 1]);
        else
            detail::conv_forward(s, m.layer_params(i), ws.act[i], ws.act[i + 1]);
        detail::apply_activation(s.activation, ws.act[i + 1]);
    }
    return ws.act.back();
}

inline std::vector<double> forward(const NetworkModel& m, std::span<const double> input) {
    Workspace ws;
    return forward(m, input, ws);
}

// Gradient of dot(output, output_gradient) w.r.t. the parameters, accumulated
// into param_grad. The workspace must hold the activations of a matching
// forward pass. If input_grad is non-empty it receives d/d(input).
inline void backward_into(const NetworkModel& m, Workspace& ws,
                          std::span<const double> output_gradient,
                          std::span<double> param_grad,
                          std::span<double> input_grad = {}) {
    if (static_cast<int>(output_gradient.size()) != m.layers.back().output_shape.count())
        throw std::invalid_argument("backward: output_gradient shape mismatch");
    if (static_cast<int>(param_grad.size()) != m.parameter_count())
        throw std::invalid_argument("backward: param_grad length mismatch");
    const std::size_t L = m.layers.size();
    ws.grad.resize(L + 1);
    ws.grad[L].assign(output_gradient.begin(), output_gradient.end());
    for (std::size_t i = L; i-- > 0;) {
        const LayerSpec& s = m.layers[i];
        detail::activation_backward(s.activation, ws.act[i + 1], ws.grad[i + 1]);
        const bool need_dx = i > 0 || !input_grad.empty();
        std::vector<double>* dx = nullptr;
        if (need_dx) {
            ws.grad[i].resize(s.input_shape.count());
            dx = &ws.grad[i];
        }
        auto dw = param_grad.subspan(m.offsets[i], s.parameter_count());
        if (s.kind == LayerKind::dense)
            detail::dense_backward(s, m.layer_params(i), ws.act[i], ws.grad[i + 1], dw, dx);
        else
            detail::conv_backward(s, m.layer_params(i), ws.act[i], ws.grad[i + 1], dw, dx);
    }
    if (!input_grad.empty()) {
        if (input_grad.size() != ws.grad[0].size())
            throw std::invalid_argument("backward: input_grad length mismatch");
        std::copy(ws.grad[0].begin(), ws.grad[0].end(), input_grad.begin());
    }
}

inline std::vector<double> backward(const NetworkModel& m, std::span<const double> input,
                                    std::span<const double> output_gradient) {
    Workspace ws;
    forward(m, input, ws);
    std::vector<double> g(m.parameter_count(), 0.0);
    backward_into(m, ws, output_gradient, g);
    return g;
}

enum class LossKind { bce, mse };

struct LossResult {
    double value = 0.0;
    std::vector<double> gradient;
};

// mse: mean of (p-t)^2, gradient 2(p-t)/n.
// bce: mean of -[t ln p + (1-t) ln(1-p)]; predictions must lie in (0, 1).
inline LossResult loss_and_gradient(std::span<const double> prediction,
                                    std::span<const double> target, LossKind kind) {
    if (prediction.size() != target.size())
        throw std::invalid_argument("loss_and_gradient: shape mismatch");
    if (prediction.empty()) throw std::invalid_argument("loss_and_gradient: empty input");
    const double n = static_cast<double>(prediction.size());
    LossResult r;
    r.gradient.resize(prediction.size());
    for (std::size_t i = 0; i < prediction.size(); ++i) {
        const double p = prediction[i], t = target[i];
        if (kind == LossKind::mse) {
            r.value += (p - t) * (p - t) / n;
            r.gradient[i] = 2.0 * (p - t) / n;
        } else {
            if (p <= 0.0 || p >= 1.0)
                throw std::domain_error("loss_and_gradient: bce prediction outside (0,1)");
            r.value += -(t * std::log(p) + (1.0 - t) * std::log(1.0 - p)) / n;
            r.gradient[i] = (p - t) / (p * (1.0 - p)) / n;
        }
    }
    return r;
}

enum class OptimizerKind { sgd, adam };
enum class Direction { ascend, descend };

struct OptimizerState {
    OptimizerKind kind = OptimizerKind::sgd;
    double step_size = 0.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    long step_count = 0;
    std::vector<double> m, v;  // adam first/second moments
};

inline OptimizerState make_sgd(double step_size) {
    if (step_size <= 0.0) throw std::invalid_argument("make_sgd: step_size must be > 0");
    OptimizerState s;
    s.kind = OptimizerKind::sgd;
    s.step_size = step_size;
    return s;
}

inline OptimizerState make_adam(double step_size, std::size_t n_params,
                                double beta1 = 0.9, double beta2 = 0.999,
                                double epsilon = 1e-8) {
    if (step_size <= 0.0) throw std::invalid_argument("make_adam: step_size must be > 0");
    OptimizerState s;
    s.kind = OptimizerKind::adam;
    s.step_size = step_size;
    s.beta1 = beta1;
    s.beta2 = beta2;
    s.epsilon = epsilon;
    s.m.assign(n_params, 0.0);
    s.v.assign(n_params, 0.0);
    return s;
}

inline void optimizer_step(NetworkModel& model, OptimizerState& st,
                           std::span<const double> gradient, Direction dir) {
    if (static_cast<int>(gradient.size()) != model.parameter_count())
        throw std::invalid_argument("optimizer_step: gradient length mismatch");
    const double sign = dir == Direction::ascend ? 1.0 : -1.0;
    st.step_count += 1;
    if (st.kind == OptimizerKind::sgd) {
        for (std::size_t i = 0; i < gradient.size(); ++i)
            model.parameters[i] += sign * st.step_size * gradient[i];
        return;
    }
    if (st.m.size() != gradient.size())
        throw std::invalid_argument("optimizer_step: adam moment length mismatch");
    const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step_count));
    const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step_count));
    for (std::size_t i = 0; i < gradient.size(); ++i) {
        const double g = gradient[i];
        st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * g;
        st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * g * g;
        const double mhat = st.m[i] / bc1;
        const double vhat = st.v[i] / bc2;
        model.parameters[i] += sign * st.step_size * mhat / (std::sqrt(vhat) + st.epsilon);
    }
}

// Independent oracle for backward(): central differences of
// dot(forward(m, x), output_gradient) over each parameter. Uses forward only.
inline std::vector<double> finite_difference_parameter_gradient(
    NetworkModel m, std::span<const double> input,
    std::span<const double> output_gradient, double step = 1e-5) {
    Workspace ws;
    auto value = [&]() {
        const std::vector<double>& out = forward(m, input, ws);
        double acc = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) acc += out[i] * output_gradient[i];
        return acc;
    };
    std::vector<double> g(m.parameter_count());
    for (int i = 0; i < m.parameter_count(); ++i) {
        const double saved = m.parameters[i];
        m.parameters[i] = saved + step;
        const double hi = value();
        m.parameters[i] = saved - step;
        const double lo = value();
        m.parameters[i] = saved;
        g[i] = (hi - lo) / (2.0 * step);
    }
    return g;
}

}  // namespace sqlab::nn
