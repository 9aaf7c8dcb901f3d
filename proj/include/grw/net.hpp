#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "grw/linalg.hpp"
#include "grw/matrix.hpp"
#include "grw/rng.hpp"

namespace grw {

struct Activation {
    enum class Kind { Identity, LeakyReLU };
    Kind kind = Kind::Identity;
    double slope = 0.2;

    static Activation identity() { return {Kind::Identity, 0.0}; }
    static Activation leaky_relu(double slope = 0.2) { return {Kind::LeakyReLU, slope}; }

    double apply(double x) const {
        return kind == Kind::Identity ? x : (x > 0.0 ? x : slope * x);
    }
    double deriv(double x) const {
        return kind == Kind::Identity ? 1.0 : (x > 0.0 ? 1.0 : slope);
    }
};

// Affine -> activation -> affine -> activation. Biases are 1 x n matrices.
// Instantiates both the generator G(a, z) -> x and the embedder D(a) -> x.
struct TwoLayerNet {
    Matrix w1, b1, w2, b2;
    Activation act1 = Activation::leaky_relu();
    Activation act2 = Activation::identity();

    std::size_t in_width() const { return w1.rows(); }
    std::size_t hidden_width() const { return w1.cols(); }
    std::size_t out_width() const { return w2.cols(); }

    bool all_finite() const {
        return w1.all_finite() && b1.all_finite() && w2.all_finite() && b2.all_finite();
    }
};

// Uniform [-1/sqrt(fan_in), 1/sqrt(fan_in)] init per layer.
inline TwoLayerNet make_net(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng,
                            Activation act1 = Activation::leaky_relu(),
                            Activation act2 = Activation::identity()) {
    TwoLayerNet net;
    net.w1 = Matrix(in, hidden);
    net.b1 = Matrix(1, hidden);
    net.w2 = Matrix(hidden, out);
    net.b2 = Matrix(1, out);
    net.act1 = act1;
    net.act2 = act2;
    double s1 = 1.0 / std::sqrt(static_cast<double>(in));
    double s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
    for (double& v : net.w1.data()) v = rng.uniform(-s1, s1);
    for (double& v : net.b1.data()) v = rng.uniform(-s1, s1);
    for (double& v : net.w2.data()) v = rng.uniform(-s2, s2);
    for (double& v : net.b2.data()) v = rng.uniform(-s2, s2);
    return net;
}

// Forward caches plus accumulated gradients. One forward populates the
// caches; the matching backward consumes them and adds into the gradient
// buffers, which accumulate until adam_step (or zero_grads) resets them.
struct GradTape {
    Matrix input, pre1, hidden, pre2;
    bool populated = false;

    Matrix gw1, gb1, gw2, gb2;

    void ensure_grad_shapes(const TwoLayerNet& net) {
        if (gw1.rows() != net.w1.rows() || gw1.cols() != net.w1.cols()) {
            gw1 = Matrix(net.w1.rows(), net.w1.cols());
            gb1 = Matrix(1, net.b1.cols());
            gw2 = Matrix(net.w2.rows(), net.w2.cols());
            gb2 = Matrix(1, net.b2.cols());
        }
    }

    void zero_grads() {
        gw1.fill(0.0);
        gb1.fill(0.0);
        gw2.fill(0.0);
        gb2.fill(0.0);
    }
};

inline Matrix forward(const TwoLayerNet& net, const Matrix& input, GradTape* tape = nullptr) {
    if (input.cols() != net.in_width())
        throw ShapeError("forward: input width " + std::to_string(input.cols()) +
                         " != net width " + std::to_string(net.in_width()));
    Matrix pre1 = matmul(input, net.w1);
    for (std::size_t i = 0; i < pre1.rows(); ++i)
        for (std::size_t j = 0; j < pre1.cols(); ++j) pre1(i, j) += net.b1(0, j);
    Matrix hidden(pre1.rows(), pre1.cols());
    for (std::size_t i = 0; i < pre1.size(); ++i)
        hidden.data()[i] = net.act1.apply(pre1.data()[i]);
    Matrix pre2 = matmul(hidden, net.w2);
    for (std::size_t i = 0; i < pre2.rows(); ++i)
        for (std::size_t j = 0; j < pre2.cols(); ++j) pre2(i, j) += net.b2(0, j);
    Matrix out(pre2.rows(), pre2.cols());
    for (std::size_t i = 0; i < pre2.size(); ++i)
        out.data()[i] = net.act2.apply(pre2.data()[i]);
    if (tape) {
        tape->ensure_grad_shapes(net);
        tape->input = input;
        tape->pre1 = std::move(pre1);
        tape->hidden = std::move(hidden);
        tape->pre2 = std::move(pre2);
        tape->populated = true;
    }
    return out;
}

// Accumulates parameter gradients into the tape and returns the gradient
// w.r.t. the input batch (generator gradients flow through D(G(z,a)) and
// dictionary gradients flow through G's attribute inputs).
inline Matrix backward(const TwoLayerNet& net, GradTape& tape, const Matrix& upstream) {
    if (!tape.populated)
        throw StateError("backward: tape not populated by a forward pass");
    require_same_shape(upstream, tape.pre2, "backward upstream");
    tape.populated = false;

    Matrix d_pre2 = upstream;
    for (std::size_t i = 0; i < d_pre2.size(); ++i)
        d_pre2.data()[i] *= net.act2.deriv(tape.pre2.data()[i]);

    axpy(tape.gw2, matmul(transpose(tape.hidden), d_pre2), 1.0);
    axpy(tape.gb2, col_sums(d_pre2), 1.0);

    Matrix d_hidden = matmul(d_pre2, transpose(net.w2));
    for (std::size_t i = 0; i < d_hidden.size(); ++i)
        d_hidden.data()[i] *= net.act1.deriv(tape.pre1.data()[i]);

    axpy(tape.gw1, matmul(transpose(tape.input), d_hidden), 1.0);
    axpy(tape.gb1, col_sums(d_hidden), 1.0);

    return matmul(d_hidden, transpose(net.w1));
}

struct AdamState {
    Matrix mw1, vw1, mb1, vb1, mw2, vw2, mb2, vb2;
    std::uint64_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double lr = 0.005;
    double weight_decay = 0.0;
};

inline AdamState make_adam(const TwoLayerNet& net, double lr, double weight_decay = 0.0) {
    AdamState s;
    s.lr = lr;
    s.weight_decay = weight_decay;
    s.mw1 = Matrix(net.w1.rows(), net.w1.cols());
    s.vw1 = s.mw1;
    s.mb1 = Matrix(1, net.b1.cols());
    s.vb1 = s.mb1;
    s.mw2 = Matrix(net.w2.rows(), net.w2.cols());
    s.vw2 = s.mw2;
    s.mb2 = Matrix(1, net.b2.cols());
    s.vb2 = s.mb2;
    return s;
}

namespace detail {

inline void adam_update(Matrix& param, const Matrix& grad, Matrix& m, Matrix& v,
                        const AdamState& s) {
    double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
    double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
    for (std::size_t i = 0; i < param.size(); ++i) {
        double g = grad.data()[i];
        double& mi = m.data()[i];
        double& vi = v.data()[i];
        mi = s.beta1 * mi + (1.0 - s.beta1) * g;
        vi = s.beta2 * vi + (1.0 - s.beta2) * g * g;
        double mhat = mi / c1;
        double vhat = vi / c2;
        param.data()[i] -= s.lr * mhat / (std::sqrt(vhat) + s.eps);
    }
}

} // namespace detail

// Adam with bias correction; decoupled weight decay is applied before the
// Adam delta so lr = 0 leaves parameters untouched.
inline void adam_step(TwoLayerNet& net, GradTape& tape, AdamState& state) {
    tape.ensure_grad_shapes(net);
    if (state.weight_decay != 0.0) {
        double f = 1.0 - state.lr * state.weight_decay;
        for (double& v : net.w1.data()) v *= f;
        for (double& v : net.b1.data()) v *= f;
        for (double& v : net.w2.data()) v *= f;
        for (double& v : net.b2.data()) v *= f;
    }
    state.step += 1;
    detail::adam_update(net.w1, tape.gw1, state.mw1, state.vw1, state);
    detail::adam_update(net.b1, tape.gb1, state.mb1, state.vb1, state);
    detail::adam_update(net.w2, tape.gw2, state.mw2, state.vw2, state);
    detail::adam_update(net.b2, tape.gb2, state.mb2, state.vb2, state);
    tape.zero_grads();
    if (!net.all_finite())
        throw NumericError("adam_step: parameters became non-finite");
}

// Views over the four parameter blocks, used by the finite-difference
// checker and the checkpoint codec.
inline std::vector<Matrix*> param_blocks(TwoLayerNet& net) {
    return {&net.w1, &net.b1, &net.w2, &net.b2};
}

struct ParamGrads {
    Matrix w1, b1, w2, b2;
    std::vector<const Matrix*> blocks() const { return {&w1, &b1, &w2, &b2}; }
};

inline ParamGrads snapshot_grads(const GradTape& tape) {
    return {tape.gw1, tape.gb1, tape.gw2, tape.gb2};
}

// Central finite differences (h = 1e-5) against the supplied analytic
// gradient for every parameter; returns the max relative error with
// denominator max(|analytic|, |numeric|, 1e-8).
//
// zero_floor handles structurally zero gradients (a loss invariant to some
// parameter, e.g. a common translation of all generated features): the
// central difference of such a component is pure cancellation noise of order
// eps * |loss| / h, which the 1e-8 denominator floor cannot absorb. When both
// the analytic and the numeric value sit below zero_floor the component is
// counted as agreeing at zero. The default keeps the strict formula.
inline double finite_diff_check(TwoLayerNet& net, const std::function<double()>& loss_fn,
                                const std::function<ParamGrads()>& grad_fn, double h = 1e-5,
                                double zero_floor = 0.0) {
    ParamGrads analytic = grad_fn();
    auto params = param_blocks(net);
    auto grads = analytic.blocks();
    double worst = 0.0;
    for (std::size_t blk = 0; blk < params.size(); ++blk) {
        Matrix& p = *params[blk];
        const Matrix& g = *grads[blk];
        for (std::size_t i = 0; i < p.size(); ++i) {
            double keep = p.data()[i];
            p.data()[i] = keep + h;
            double up = loss_fn();
            p.data()[i] = keep - h;
            double down = loss_fn();
            p.data()[i] = keep;
            double numeric = (up - down) / (2.0 * h);
            double a = g.data()[i];
            if (std::fabs(a) < zero_floor && std::fabs(numeric) < zero_floor) continue;
            double rel = std::fabs(a - numeric) /
                         std::max({std::fabs(a), std::fabs(numeric), 1e-8});
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

// --- checkpoint serialization ---------------------------------------------
//
// Flat little-endian layout:
//   "GRWN" | version u32 | w1.rows u32 | w1.cols u32 | w2.rows u32 | w2.cols u32
//   | w1 | b1 | w2 | b2 as f64
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_f64(std::ostream& os, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

inline double get_f64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

} // namespace detail

inline void save_net(const TwoLayerNet& net, std::ostream& os) {
    os.write("GRWN", 4);
    detail::put_u32(os, kCheckpointVersion);
    detail::put_u32(os, static_cast<std::uint32_t>(net.w1.rows()));
    detail::put_u32(os, static_cast<std::uint32_t>(net.w1.cols()));
    detail::put_u32(os, static_cast<std::uint32_t>(net.w2.rows()));
    detail::put_u32(os, static_cast<std::uint32_t>(net.w2.cols()));
    for (const Matrix* m : {&net.w1, &net.b1, &net.w2, &net.b2})
        for (double v : m->data()) detail::put_f64(os, v);
}

inline void save_net(const TwoLayerNet& net, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw StateError("save_net: cannot open " + path);
    save_net(net, os);
}

inline TwoLayerNet load_net(std::istream& is,
                            Activation act1 = Activation::leaky_relu(),
                            Activation act2 = Activation::identity()) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "GRWN", 4) != 0)
        throw ParseError("load_net: bad magic");
    std::uint32_t version = detail::get_u32(is);
    if (version != kCheckpointVersion)
        throw ParseError("load_net: unsupported version " + std::to_string(version));
    std::uint32_t in = detail::get_u32(is);
    std::uint32_t hidden = detail::get_u32(is);
    std::uint32_t hidden2 = detail::get_u32(is);
    std::uint32_t out = detail::get_u32(is);
    if (hidden != hidden2)
        throw ParseError("load_net: inconsistent hidden widths");
    TwoLayerNet net;
    net.w1 = Matrix(in, hidden);
    net.b1 = Matrix(1, hidden);
    net.w2 = Matrix(hidden, out);
    net.b2 = Matrix(1, out);
    net.act1 = act1;
    net.act2 = act2;
    for (Matrix* m : param_blocks(net))
        for (double& v : m->data()) v = detail::get_f64(is);
    if (!is) throw ParseError("load_net: truncated file");
    return net;
}

inline TwoLayerNet load_net(const std::string& path,
                            Activation act1 = Activation::leaky_relu(),
                            Activation act2 = Activation::identity()) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw StateError("load_net: cannot open " + path);
    return load_net(is, act1, act2);
}

} // namespace grw
