#pragma once

#include <Eigen/Core>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "deepjscc/tensor.hpp"

namespace deepjscc::nn {

template <typename T>
using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;  // column-major

template <typename T>
struct Param {
    Tensor<T> value;
    Tensor<T> grad;
    std::string name;

    void init_shape(int n, int c, int h, int w, std::string nm) {
        value = Tensor<T>(n, c, h, w);
        grad = Tensor<T>(n, c, h, w);
        name = std::move(nm);
    }
};

// Activation tape: layers push what their backward pass needs during
// forward, and pop it back (LIFO) during backward. Keeping the tape outside
// the layers makes a built network immutable during inference, so one model
// instance can serve concurrent read-only forward passes, each with its own
// tape.
template <typename T>
using Tape = std::vector<Tensor<T>>;

template <typename T>
Tensor<T> tape_pop(Tape<T>& tape) {
    Tensor<T> t = std::move(tape.back());
    tape.pop_back();
    return t;
}

template <typename T>
class Layer {
  public:
    virtual ~Layer() = default;
    // tape == nullptr runs inference without caching.
    virtual Tensor<T> forward(const Tensor<T>& x, Tape<T>* tape) const = 0;
    // Accumulates parameter gradients and returns the input gradient.
    virtual Tensor<T> backward(const Tensor<T>& dy, Tape<T>& tape) = 0;
    virtual std::vector<Param<T>*> params() { return {}; }
    virtual std::string describe() const = 0;
};

// ---------------------------------------------------------------------------
// im2col / col2im
//
// Patch matrices are column-major [P x K] with row p = (n*OH + oh)*OW + ow
// and column k = (c*KH + kh)*KW + kw, so each k-column is contiguous. A
// convolution is then one GEMM against the [K x OC] weight view.
// ---------------------------------------------------------------------------

struct ConvGeom {
    int C, H, W;     // input feature map
    int KH, KW;      // kernel
    int stride, pad; // same pad on both sides
    int OH, OW;      // output feature map

    static ConvGeom make(int C, int H, int W, int KH, int KW, int stride, int pad) {
        ConvGeom g{C, H, W, KH, KW, stride, pad, 0, 0};
        g.OH = (H + 2 * pad - KH) / stride + 1;
        g.OW = (W + 2 * pad - KW) / stride + 1;
        return g;
    }
    std::int64_t patch_len() const { return static_cast<std::int64_t>(C) * KH * KW; }
    std::int64_t positions(int batch) const { return static_cast<std::int64_t>(batch) * OH * OW; }
};

template <typename T>
void im2col(const Tensor<T>& x, const ConvGeom& g, std::vector<T>& cols) {
    const int N = x.n();
    const std::int64_t P = g.positions(N);
    cols.assign(static_cast<std::size_t>(P) * g.patch_len(), T(0));
    const std::int64_t plane = static_cast<std::int64_t>(g.H) * g.W;
    for (int c = 0; c < g.C; ++c) {
        for (int kh = 0; kh < g.KH; ++kh) {
            for (int kw = 0; kw < g.KW; ++kw) {
                const std::int64_t k = (static_cast<std::int64_t>(c) * g.KH + kh) * g.KW + kw;
                T* col = cols.data() + k * P;
                for (int n = 0; n < N; ++n) {
                    const T* src = x.data() + (static_cast<std::int64_t>(n) * g.C + c) * plane;
                    T* dst = col + static_cast<std::int64_t>(n) * g.OH * g.OW;
                    for (int oh = 0; oh < g.OH; ++oh) {
                        const int ih = oh * g.stride - g.pad + kh;
                        T* row = dst + static_cast<std::int64_t>(oh) * g.OW;
                        if (ih < 0 || ih >= g.H) continue;  // zero padding
                        const T* srow = src + static_cast<std::int64_t>(ih) * g.W;
                        for (int ow = 0; ow < g.OW; ++ow) {
                            const int iw = ow * g.stride - g.pad + kw;
                            if (iw >= 0 && iw < g.W) row[ow] = srow[iw];
                        }
                    }
                }
            }
        }
    }
}

// Scatter-add transpose of im2col: accumulates patch columns back into an
// [N, C, H, W] tensor (which must be pre-zeroed by the caller).
template <typename T>
void col2im_add(const std::vector<T>& cols, const ConvGeom& g, Tensor<T>& x) {
    const int N = x.n();
    const std::int64_t P = g.positions(N);
    const std::int64_t plane = static_cast<std::int64_t>(g.H) * g.W;
    for (int c = 0; c < g.C; ++c) {
        for (int kh = 0; kh < g.KH; ++kh) {
            for (int kw = 0; kw < g.KW; ++kw) {
                const std::int64_t k = (static_cast<std::int64_t>(c) * g.KH + kh) * g.KW + kw;
                const T* col = cols.data() + k * P;
                for (int n = 0; n < N; ++n) {
                    T* dst = x.data() + (static_cast<std::int64_t>(n) * g.C + c) * plane;
                    const T* src = col + static_cast<std::int64_t>(n) * g.OH * g.OW;
                    for (int oh = 0; oh < g.OH; ++oh) {
                        const int ih = oh * g.stride - g.pad + kh;
                        if (ih < 0 || ih >= g.H) continue;
                        T* drow = dst + static_cast<std::int64_t>(ih) * g.W;
                        const T* srow = src + static_cast<std::int64_t>(oh) * g.OW;
                        for (int ow = 0; ow < g.OW; ++ow) {
                            const int iw = ow * g.stride - g.pad + kw;
                            if (iw >= 0 && iw < g.W) drow[iw] += srow[ow];
                        }
                    }
                }
            }
        }
    }
}

// [N, C, H, W] -> column-major [P x C] position matrix (row p as above).
template <typename T>
void nchw_to_rows(const Tensor<T>& x, std::vector<T>& rows) {
    const int N = x.n(), C = x.c();
    const std::int64_t plane = static_cast<std::int64_t>(x.h()) * x.w();
    const std::int64_t P = static_cast<std::int64_t>(N) * plane;
    rows.resize(static_cast<std::size_t>(P) * C);
    for (int c = 0; c < C; ++c)
        for (int n = 0; n < N; ++n)
            std::copy_n(x.data() + (static_cast<std::int64_t>(n) * C + c) * plane, plane,
                        rows.data() + c * P + n * plane);
}

template <typename T>
void rows_to_nchw(const std::vector<T>& rows, Tensor<T>& x) {
    const int N = x.n(), C = x.c();
    const std::int64_t plane = static_cast<std::int64_t>(x.h()) * x.w();
    const std::int64_t P = static_cast<std::int64_t>(N) * plane;
    for (int c = 0; c < C; ++c)
        for (int n = 0; n < N; ++n)
            std::copy_n(rows.data() + c * P + n * plane, plane,
                        x.data() + (static_cast<std::int64_t>(n) * C + c) * plane);
}

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

template <typename T>
class Conv2d : public Layer<T> {
  public:
    Conv2d(int in_ch, int out_ch, int kernel, int stride, int pad, RngStream& init_rng)
        : in_ch_(in_ch), out_ch_(out_ch), kernel_(kernel), stride_(stride), pad_(pad) {
        w_.init_shape(out_ch, in_ch, kernel, kernel, "conv_w");
        b_.init_shape(1, out_ch, 1, 1, "conv_b");
        const double fan_in = static_cast<double>(in_ch) * kernel * kernel;
        w_.value.fill_normal(init_rng, std::sqrt(2.0 / fan_in));
        b_.value.zero();
    }

    Tensor<T> forward(const Tensor<T>& x, Tape<T>* tape) const override {
        const ConvGeom g = geom(x);
        std::vector<T> cols;
        im2col(x, g, cols);
        const std::int64_t P = g.positions(x.n());
        const std::int64_t K = g.patch_len();

        Tensor<T> y(x.n(), out_ch_, g.OH, g.OW);
        std::vector<T> yt(static_cast<std::size_t>(P) * out_ch_);
        Eigen::Map<EMat<T>> ym(yt.data(), P, out_ch_);
        Eigen::Map<const EMat<T>> cm(cols.data(), P, K);
        Eigen::Map<const EMat<T>> wm(w_.value.data(), K, out_ch_);
        ym.noalias() = cm * wm;
        for (int oc = 0; oc < out_ch_; ++oc) ym.col(oc).array() += b_.value[oc];
        rows_to_nchw(yt, y);

        if (tape) {
            Tensor<T> colt = Tensor<T>::vectors(1, static_cast<int>(P * K));
            std::copy(cols.begin(), cols.end(), colt.data());
            tape->push_back(std::move(colt));
            tape->push_back(Tensor<T>(x.n(), g.C, g.H, g.W));  // shape carrier for dx
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy, Tape<T>& tape) override {
        Tensor<T> dx = tape_pop(tape);
        Tensor<T> colt = tape_pop(tape);
        const ConvGeom g = geom(dx);
        const std::int64_t P = g.positions(dx.n());
        const std::int64_t K = g.patch_len();

        std::vector<T> dyt;
        nchw_to_rows(dy, dyt);
        Eigen::Map<const EMat<T>> dym(dyt.data(), P, out_ch_);
        Eigen::Map<const EMat<T>> cm(colt.data(), P, K);
        Eigen::Map<EMat<T>> dwm(w_.grad.data(), K, out_ch_);
        dwm.noalias() += cm.transpose() * dym;
        for (int oc = 0; oc < out_ch_; ++oc) b_.grad[oc] += dym.col(oc).sum();

        std::vector<T> dcols(static_cast<std::size_t>(P) * K);
        Eigen::Map<EMat<T>> dcm(dcols.data(), P, K);
        Eigen::Map<const EMat<T>> wm(w_.value.data(), K, out_ch_);
        dcm.noalias() = dym * wm.transpose();
        dx.zero();
        col2im_add(dcols, g, dx);
        return dx;
    }

    std::vector<Param<T>*> params() override { return {&w_, &b_}; }
    std::string describe() const override {
        return "conv(" + std::to_string(in_ch_) + "->" + std::to_string(out_ch_) + ",k" + std::to_string(kernel_) +
               ",s" + std::to_string(stride_) + ",p" + std::to_string(pad_) + ")";
    }

  private:
    ConvGeom geom(const Tensor<T>& x) const {
        if (x.c() != in_ch_) throw PlanError("conv: input depth " + std::to_string(x.c()) + " != " + std::to_string(in_ch_));
        return ConvGeom::make(in_ch_, x.h(), x.w(), kernel_, kernel_, stride_, pad_);
    }

    int in_ch_, out_ch_, kernel_, stride_, pad_;
    Param<T> w_, b_;
};

// Transposed convolution; output spatial size (H-1)*stride - 2*pad + kernel
// + out_pad. Implemented as the data-gradient of the mirrored convolution.
template <typename T>
class ConvTranspose2d : public Layer<T> {
  public:
    ConvTranspose2d(int in_ch, int out_ch, int kernel, int stride, int pad, int out_pad, RngStream& init_rng)
        : in_ch_(in_ch), out_ch_(out_ch), kernel_(kernel), stride_(stride), pad_(pad), out_pad_(out_pad) {
        if (out_pad < 0 || out_pad >= stride) throw ArgumentError("convT: out_pad must be in [0, stride)");
        w_.init_shape(in_ch, out_ch, kernel, kernel, "convT_w");
        b_.init_shape(1, out_ch, 1, 1, "convT_b");
        const double fan_in = static_cast<double>(in_ch) * kernel * kernel;
        w_.value.fill_normal(init_rng, std::sqrt(2.0 / fan_in));
        b_.value.zero();
    }

    Tensor<T> forward(const Tensor<T>& x, Tape<T>* tape) const override {
        if (x.c() != in_ch_) throw PlanError("convT: input depth mismatch");
        const int oh = (x.h() - 1) * stride_ - 2 * pad_ + kernel_ + out_pad_;
        const int ow = (x.w() - 1) * stride_ - 2 * pad_ + kernel_ + out_pad_;
        const ConvGeom g = ConvGeom::make(out_ch_, oh, ow, kernel_, kernel_, stride_, pad_);
        // g's conv output grid must coincide with our input grid.
        const std::int64_t P = g.positions(x.n());
        const std::int64_t K2 = g.patch_len();

        std::vector<T> xt;
        nchw_to_rows(x, xt);
        std::vector<T> cols(static_cast<std::size_t>(P) * K2);
        Eigen::Map<EMat<T>> cm(cols.data(), P, K2);
        Eigen::Map<const EMat<T>> xm(xt.data(), P, in_ch_);
        Eigen::Map<const EMat<T>> wm(w_.value.data(), K2, in_ch_);
        cm.noalias() = xm * wm.transpose();

        Tensor<T> y(x.n(), out_ch_, oh, ow);
        y.zero();
        col2im_add(cols, g, y);
        const std::int64_t plane = static_cast<std::int64_t>(oh) * ow;
        for (int n = 0; n < x.n(); ++n)
            for (int oc = 0; oc < out_ch_; ++oc) {
                T* p = y.data() + (static_cast<std::int64_t>(n) * out_ch_ + oc) * plane;
                for (std::int64_t i = 0; i < plane; ++i) p[i] += b_.value[oc];
            }

        if (tape) {
            Tensor<T> xtt = Tensor<T>::vectors(1, static_cast<int>(P * in_ch_));
            std::copy(xt.begin(), xt.end(), xtt.data());
            tape->push_back(std::move(xtt));
            tape->push_back(Tensor<T>(x.n(), x.c(), x.h(), x.w()));  // shape carrier
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy, Tape<T>& tape) override {
        Tensor<T> dx = tape_pop(tape);
        Tensor<T> xtt = tape_pop(tape);
        const ConvGeom g = ConvGeom::make(out_ch_, dy.h(), dy.w(), kernel_, kernel_, stride_, pad_);
        const std::int64_t P = g.positions(dx.n());
        const std::int64_t K2 = g.patch_len();

        std::vector<T> cols;
        im2col(dy, g, cols);
        Eigen::Map<const EMat<T>> cm(cols.data(), P, K2);
        Eigen::Map<const EMat<T>> xm(xtt.data(), P, in_ch_);
        Eigen::Map<EMat<T>> dwm(w_.grad.data(), K2, in_ch_);
        dwm.noalias() += cm.transpose() * xm;

        const std::int64_t plane = static_cast<std::int64_t>(dy.h()) * dy.w();
        for (int n = 0; n < dy.n(); ++n)
            for (int oc = 0; oc < out_ch_; ++oc) {
                const T* p = dy.data() + (static_cast<std::int64_t>(n) * out_ch_ + oc) * plane;
                T acc = T(0);
                for (std::int64_t i = 0; i < plane; ++i) acc += p[i];
                b_.grad[oc] += acc;
            }

        std::vector<T> dxt(static_cast<std::size_t>(P) * in_ch_);
        Eigen::Map<EMat<T>> dxm(dxt.data(), P, in_ch_);
        Eigen::Map<const EMat<T>> wm(w_.value.data(), K2, in_ch_);
        dxm.noalias() = cm * wm;
        rows_to_nchw(dxt, dx);
        return dx;
    }

    std::vector<Param<T>*> params() override { return {&w_, &b_}; }
    std::string describe() const override {
        return "convT(" + std::to_string(in_ch_) + "->" + std::to_string(out_ch_) + ",k" + std::to_string(kernel_) +
               ",s" + std::to_string(stride_) + ",p" + std::to_string(pad_) + ",op" + std::to_string(out_pad_) + ")";
    }

  private:
    int in_ch_, out_ch_, kernel_, stride_, pad_, out_pad_;
    Param<T> w_, b_;
};

// Parametric ReLU with one learnable slope per channel.
template <typename T>
class PReLU : public Layer<T> {
  public:
    explicit PReLU(int channels) : channels_(channels) {
        a_.init_shape(1, channels, 1, 1, "prelu_a");
        a_.value.fill(T(0.25));
    }

    Tensor<T> forward(const Tensor<T>& x, Tape<T>* tape) const override {
        if (x.c() != channels_) throw PlanError("prelu: channel mismatch");
        Tensor<T> y = x;
        const std::int64_t plane = static_cast<std::int64_t>(x.h()) * x.w();
        for (int n = 0; n < x.n(); ++n)
            for (int c = 0; c < channels_; ++c) {
                T* p = y.data() + (static_cast<std::int64_t>(n) * channels_ + c) * plane;
                const T a = a_.value[c];
                for (std::int64_t i = 0; i < plane; ++i)
                    if (p[i] < T(0)) p[i] *= a;
            }
        if (tape) tape->push_back(x);
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy, Tape<T>& tape) override {
        Tensor<T> x = tape_pop(tape);
        Tensor<T> dx = dy;
        const std::int64_t plane = static_cast<std::int64_t>(x.h()) * x.w();
        for (int n = 0; n < x.n(); ++n)
            for (int c = 0; c < channels_; ++c) {
                const std::int64_t off = (static_cast<std::int64_t>(n) * channels_ + c) * plane;
                const T* xp = x.data() + off;
                T* dp = dx.data() + off;
                const T a = a_.value[c];
                T da = T(0);
                for (std::int64_t i = 0; i < plane; ++i)
                    if (xp[i] < T(0)) {
                        da += dp[i] * xp[i];
                        dp[i] *= a;
                    }
                a_.grad[c] += da;
            }
        return dx;
    }

    std::vector<Param<T>*> params() override { return {&a_}; }
    std::string describe() const override { return "prelu(" + std::to_string(channels_) + ")"; }

  private:
    int channels_;
    Param<T> a_;
};

template <typename T>
class Sigmoid : public Layer<T> {
  public:
    Tensor<T> forward(const Tensor<T>& x, Tape<T>* tape) const override {
        Tensor<T> y = x;
        for (std::int64_t i = 0; i < y.size(); ++i) y[i] = T(1) / (T(1) + std::exp(-y[i]));
        if (tape) tape->push_back(y);
        return y;
    }
    Tensor<T> backward(const Tensor<T>& dy, Tape<T>& tape) override {
        Tensor<T> y = tape_pop(tape);
        Tensor<T> dx = dy;
        for (std::int64_t i = 0; i < dx.size(); ++i) dx[i] *= y[i] * (T(1) - y[i]);
        return dx;
    }
    std::string describe() const override { return "sigmoid"; }
};

template <typename T>
class Sequential {
  public:
    Sequential() = default;

    void add(std::unique_ptr<Layer<T>> l) { layers_.push_back(std::move(l)); }

    Tensor<T> forward(const Tensor<T>& x, Tape<T>* tape) const {
        Tensor<T> cur = x;
        for (const auto& l : layers_) cur = l->forward(cur, tape);
        return cur;
    }

    Tensor<T> backward(const Tensor<T>& dy, Tape<T>& tape) {
        Tensor<T> cur = dy;
        for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) cur = (*it)->backward(cur, tape);
        return cur;
    }

    std::vector<Param<T>*> params() {
        std::vector<Param<T>*> out;
        for (auto& l : layers_)
            for (auto* p : l->params()) out.push_back(p);
        return out;
    }

    std::string describe() const {
        std::string s;
        for (const auto& l : layers_) {
            if (!s.empty()) s += ";";
            s += l->describe();
        }
        return s;
    }

    std::size_t layer_count() const { return layers_.size(); }
    Layer<T>& layer(std::size_t i) { return *layers_[i]; }

  private:
    std::vector<std::unique_ptr<Layer<T>>> layers_;
};

// ---------------------------------------------------------------------------
// Optimizer and parameter plumbing
// ---------------------------------------------------------------------------

template <typename T>
std::int64_t param_count(const std::vector<Param<T>*>& ps) {
    std::int64_t total = 0;
    for (auto* p : ps) total += p->value.size();
    return total;
}

template <typename T>
void zero_grads(const std::vector<Param<T>*>& ps) {
    for (auto* p : ps) p->grad.zero();
}

template <typename T>
class Adam {
  public:
    explicit Adam(double lr = 1e-4, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void attach(const std::vector<Param<T>*>& ps) {
        params_ = ps;
        m_.clear();
        v_.clear();
        for (auto* p : ps) {
            m_.emplace_back(p->value.size(), 0.0);
            v_.emplace_back(p->value.size(), 0.0);
        }
        t_ = 0;
    }

    // Optional global-norm clip; threshold <= 0 disables.
    void set_clip_norm(double c) { clip_norm_ = c; }
    void set_lr(double lr) { lr_ = lr; }
    double lr() const { return lr_; }

    void step() {
        ++t_;
        double scale = 1.0;
        if (clip_norm_ > 0) {
            double sq = 0;
            for (auto* p : params_)
                for (std::int64_t i = 0; i < p->grad.size(); ++i) sq += static_cast<double>(p->grad[i]) * p->grad[i];
            const double norm = std::sqrt(sq);
            if (norm > clip_norm_) scale = clip_norm_ / norm;
        }
        const double bc1 = 1.0 - std::pow(beta1_, t_);
        const double bc2 = 1.0 - std::pow(beta2_, t_);
        for (std::size_t j = 0; j < params_.size(); ++j) {
            Param<T>* p = params_[j];
            for (std::int64_t i = 0; i < p->value.size(); ++i) {
                const double g = static_cast<double>(p->grad[i]) * scale;
                m_[j][i] = beta1_ * m_[j][i] + (1.0 - beta1_) * g;
                v_[j][i] = beta2_ * v_[j][i] + (1.0 - beta2_) * g * g;
                const double mh = m_[j][i] / bc1;
                const double vh = v_[j][i] / bc2;
                p->value[i] -= static_cast<T>(lr_ * mh / (std::sqrt(vh) + eps_));
            }
        }
    }

  private:
    double lr_, beta1_, beta2_, eps_;
    double clip_norm_ = 0.0;
    std::int64_t t_ = 0;
    std::vector<Param<T>*> params_;
    std::vector<std::vector<double>> m_, v_;
};

}  // namespace deepjscc::nn
