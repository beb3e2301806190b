#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "vac/params.hpp"
#include "vac/tensor.hpp"

namespace vac {

// ----- small dense kernels -------------------------------------------------

// C[M,N] (+)= A[M,K] * B[K,N], all row-major. The k-inner/j-stream order keeps
// the hot loop a pure axpy over contiguous rows, which the compiler vectorizes
// without relaxed FP semantics.
template <class S>
void matmul_nn(const S* A, const S* B, S* C, std::size_t M, std::size_t K, std::size_t N,
               bool accumulate) {
    if (!accumulate) std::fill(C, C + M * N, S(0));
    for (std::size_t i = 0; i < M; ++i) {
        S* Crow = C + i * N;
        const S* Arow = A + i * K;
        for (std::size_t k = 0; k < K; ++k) {
            const S a = Arow[k];
            if (a == S(0)) continue;
            const S* Brow = B + k * N;
            for (std::size_t j = 0; j < N; ++j) Crow[j] += a * Brow[j];
        }
    }
}

template <class S>
void transpose_mat(const S* A, S* AT, std::size_t M, std::size_t N) {
    for (std::size_t i = 0; i < M; ++i)
        for (std::size_t j = 0; j < N; ++j) AT[j * M + i] = A[i * N + j];
}

inline std::size_t conv_out_extent(std::size_t in, std::size_t k, std::size_t stride,
                                   std::size_t pad) {
    return (in + 2 * pad - k) / stride + 1;
}

// im2col for one CHW sample: col is [C*kh*kw, OH*OW] row-major. Out-of-image
// taps read as zero.
template <class S>
void im2col(const S* x, std::size_t C, std::size_t H, std::size_t W, std::size_t kh,
            std::size_t kw, std::size_t stride, std::size_t pad, std::size_t OH, std::size_t OW,
            S* col) {
    std::size_t row = 0;
    for (std::size_t c = 0; c < C; ++c) {
        const S* xc = x + c * H * W;
        for (std::size_t ki = 0; ki < kh; ++ki) {
            for (std::size_t kj = 0; kj < kw; ++kj, ++row) {
                S* out = col + row * OH * OW;
                for (std::size_t oh = 0; oh < OH; ++oh) {
                    const std::ptrdiff_t ih =
                        std::ptrdiff_t(oh * stride + ki) - std::ptrdiff_t(pad);
                    S* orow = out + oh * OW;
                    if (ih < 0 || ih >= std::ptrdiff_t(H)) {
                        std::fill(orow, orow + OW, S(0));
                        continue;
                    }
                    const S* xrow = xc + std::size_t(ih) * W;
                    for (std::size_t ow = 0; ow < OW; ++ow) {
                        const std::ptrdiff_t iw =
                            std::ptrdiff_t(ow * stride + kj) - std::ptrdiff_t(pad);
                        orow[ow] = (iw >= 0 && iw < std::ptrdiff_t(W)) ? xrow[std::size_t(iw)]
                                                                       : S(0);
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatter-add col back into the image.
template <class S>
void col2im_add(const S* col, std::size_t C, std::size_t H, std::size_t W, std::size_t kh,
                std::size_t kw, std::size_t stride, std::size_t pad, std::size_t OH,
                std::size_t OW, S* x) {
    std::size_t row = 0;
    for (std::size_t c = 0; c < C; ++c) {
        S* xc = x + c * H * W;
        for (std::size_t ki = 0; ki < kh; ++ki) {
            for (std::size_t kj = 0; kj < kw; ++kj, ++row) {
                const S* in = col + row * OH * OW;
                for (std::size_t oh = 0; oh < OH; ++oh) {
                    const std::ptrdiff_t ih =
                        std::ptrdiff_t(oh * stride + ki) - std::ptrdiff_t(pad);
                    if (ih < 0 || ih >= std::ptrdiff_t(H)) continue;
                    S* xrow = xc + std::size_t(ih) * W;
                    const S* irow = in + oh * OW;
                    for (std::size_t ow = 0; ow < OW; ++ow) {
                        const std::ptrdiff_t iw =
                            std::ptrdiff_t(ow * stride + kj) - std::ptrdiff_t(pad);
                        if (iw >= 0 && iw < std::ptrdiff_t(W)) xrow[std::size_t(iw)] += irow[ow];
                    }
                }
            }
        }
    }
}

// ----- layer vocabulary ------------------------------------------------------

// Layers cache whatever their backward pass needs during forward, so a given
// instance is single-flight: one forward, then its backward. Models clone per
// thread when running samples in parallel.
template <class S>
struct Layer {
    std::string name = "layer";

    virtual ~Layer() = default;
    virtual const char* kind() const = 0;

    virtual Tensor<S> forward(const Tensor<S>& x) = 0;

    // grad w.r.t. input; accumulates parameter gradients when param_grads.
    virtual Tensor<S> backward(const Tensor<S>& gy, bool param_grads = true) = 0;

    virtual void collect(ParamSet<S>&, const std::string&, ParamGroup) {}

    // Distance from the nearest non-differentiable point seen since the last
    // reset (finite-difference audits reject cases that sit on a kink).
    virtual double kink_margin() const { return std::numeric_limits<double>::infinity(); }
    virtual void reset_kink_margin() {}

protected:
    void check_finite(const Tensor<S>& t) const { ensure_finite(t, kind() + (" '" + name + "'")); }
};

template <class S>
class Linear : public Layer<S> {
public:
    Param<S> weight; // [out, in]
    Param<S> bias;   // [out]

    Linear(std::size_t in, std::size_t out)
        : weight({out, in}), bias({out}), in_(in), out_(out) {}

    const char* kind() const override { return "linear"; }

    std::size_t fan_in() const { return in_; }

    Tensor<S> forward(const Tensor<S>& x) override {
        if (x.rank() != 2 || x.shape[1] != in_)
            throw ConfigError("linear '" + this->name + "': expected [B," + std::to_string(in_) +
                              "], got " + shape_str(x.shape));
        x_ = x;
        const std::size_t B = x.shape[0];
        Tensor<S> y({B, out_});
        std::vector<S> wt(in_ * out_);
        transpose_mat(weight.value.ptr(), wt.data(), out_, in_);
        matmul_nn(x.ptr(), wt.data(), y.ptr(), B, in_, out_, false);
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t o = 0; o < out_; ++o) y.at(b, o) += bias.value[o];
        this->check_finite(y);
        return y;
    }

    Tensor<S> backward(const Tensor<S>& gy, bool param_grads = true) override {
        const std::size_t B = x_.shape[0];
        if (param_grads) {
            // gW += gy^T * x
            std::vector<S> gyt(out_ * B);
            transpose_mat(gy.ptr(), gyt.data(), B, out_);
            matmul_nn(gyt.data(), x_.ptr(), weight.grad.ptr(), out_, B, in_, true);
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t o = 0; o < out_; ++o) bias.grad[o] += gy.at(b, o);
        }
        Tensor<S> gx({B, in_});
        matmul_nn(gy.ptr(), weight.value.ptr(), gx.ptr(), B, out_, in_, false);
        return gx;
    }

    void collect(ParamSet<S>& ps, const std::string& prefix, ParamGroup g) override {
        ps.add(prefix + ".weight", g, false, weight);
        ps.add(prefix + ".bias", g, true, bias);
    }

private:
    std::size_t in_, out_;
    Tensor<S> x_;
};

template <class S>
class Conv2d : public Layer<S> {
public:
    Param<S> weight; // [oc, ic, kh, kw]
    Param<S> bias;   // [oc]

    Conv2d(std::size_t ic, std::size_t oc, std::size_t k, std::size_t stride, std::size_t pad)
        : weight({oc, ic, k, k}), bias({oc}), ic_(ic), oc_(oc), k_(k), stride_(stride), pad_(pad) {}

    const char* kind() const override { return "conv2d"; }

    std::size_t fan_in() const { return ic_ * k_ * k_; }

    Tensor<S> forward(const Tensor<S>& x) override {
        if (x.rank() != 4 || x.shape[1] != ic_)
            throw ConfigError("conv2d '" + this->name + "': expected [B," + std::to_string(ic_) +
                              ",H,W], got " + shape_str(x.shape));
        const std::size_t B = x.shape[0], H = x.shape[2], W = x.shape[3];
        if (H + 2 * pad_ < k_ || W + 2 * pad_ < k_)
            throw ConfigError("conv2d '" + this->name + "': input " + shape_str(x.shape) +
                              " smaller than kernel");
        H_ = H;
        W_ = W;
        OH_ = conv_out_extent(H, k_, stride_, pad_);
        OW_ = conv_out_extent(W, k_, stride_, pad_);
        const std::size_t K = ic_ * k_ * k_, P = OH_ * OW_;
        cols_ = Tensor<S>({B, K, P});
        Tensor<S> y({B, oc_, OH_, OW_});
        for (std::size_t b = 0; b < B; ++b) {
            S* col = cols_.ptr() + b * K * P;
            im2col(x.ptr() + b * ic_ * H * W, ic_, H, W, k_, k_, stride_, pad_, OH_, OW_, col);
            S* yb = y.ptr() + b * oc_ * P;
            matmul_nn(weight.value.ptr(), col, yb, oc_, K, P, false);
            for (std::size_t o = 0; o < oc_; ++o) {
                const S bo = bias.value[o];
                S* yrow = yb + o * P;
                for (std::size_t p = 0; p < P; ++p) yrow[p] += bo;
            }
        }
        this->check_finite(y);
        return y;
    }

    Tensor<S> backward(const Tensor<S>& gy, bool param_grads = true) override {
        const std::size_t B = cols_.shape[0], K = ic_ * k_ * k_, P = OH_ * OW_;
        Tensor<S> gx({B, ic_, H_, W_});
        std::vector<S> wt(K * oc_);
        transpose_mat(weight.value.ptr(), wt.data(), oc_, K);
        std::vector<S> gcol(K * P), colt(P * K);
        for (std::size_t b = 0; b < B; ++b) {
            const S* gyb = gy.ptr() + b * oc_ * P;
            const S* col = cols_.ptr() + b * K * P;
            if (param_grads) {
                transpose_mat(col, colt.data(), K, P);
                matmul_nn(gyb, colt.data(), weight.grad.ptr(), oc_, P, K, true);
                for (std::size_t o = 0; o < oc_; ++o) {
                    S acc = S(0);
                    const S* gyrow = gyb + o * P;
                    for (std::size_t p = 0; p < P; ++p) acc += gyrow[p];
                    bias.grad[o] += acc;
                }
            }
            matmul_nn(wt.data(), gyb, gcol.data(), K, oc_, P, false);
            col2im_add(gcol.data(), ic_, H_, W_, k_, k_, stride_, pad_, OH_, OW_,
                       gx.ptr() + b * ic_ * H_ * W_);
        }
        return gx;
    }

    void collect(ParamSet<S>& ps, const std::string& prefix, ParamGroup g) override {
        ps.add(prefix + ".weight", g, false, weight);
        ps.add(prefix + ".bias", g, true, bias);
    }

private:
    std::size_t ic_, oc_, k_, stride_, pad_;
    std::size_t H_ = 0, W_ = 0, OH_ = 0, OW_ = 0;
    Tensor<S> cols_;
};

// Transposed convolution, the adjoint map of a Conv2d with the same stride and
// padding. Weight layout [ic, oc, kh, kw]; output_pad disambiguates the output
// extent (must be < stride).
template <class S>
class ConvTranspose2d : public Layer<S> {
public:
    Param<S> weight; // [ic, oc, kh, kw]
    Param<S> bias;   // [oc]

    ConvTranspose2d(std::size_t ic, std::size_t oc, std::size_t k, std::size_t stride,
                    std::size_t pad, std::size_t out_pad)
        : weight({ic, oc, k, k}), bias({oc}), ic_(ic), oc_(oc), k_(k), stride_(stride),
          pad_(pad), out_pad_(out_pad) {
        if (out_pad_ >= stride_)
            throw ConfigError("conv_transpose2d: output padding must be < stride");
    }

    const char* kind() const override { return "conv_transpose2d"; }

    std::size_t fan_in() const { return ic_ * k_ * k_; }

    Tensor<S> forward(const Tensor<S>& x) override {
        if (x.rank() != 4 || x.shape[1] != ic_)
            throw ConfigError("conv_transpose2d '" + this->name + "': expected [B," +
                              std::to_string(ic_) + ",H,W], got " + shape_str(x.shape));
        x_ = x;
        const std::size_t B = x.shape[0], H = x.shape[2], W = x.shape[3];
        OH_ = (H - 1) * stride_ + k_ + out_pad_ - 2 * pad_;
        OW_ = (W - 1) * stride_ + k_ + out_pad_ - 2 * pad_;
        const std::size_t K = oc_ * k_ * k_, P = H * W;
        std::vector<S> wt(K * ic_);
        transpose_mat(weight.value.ptr(), wt.data(), ic_, K);
        std::vector<S> gcol(K * P);
        Tensor<S> y({B, oc_, OH_, OW_});
        for (std::size_t b = 0; b < B; ++b) {
            matmul_nn(wt.data(), x.ptr() + b * ic_ * P, gcol.data(), K, ic_, P, false);
            S* yb = y.ptr() + b * oc_ * OH_ * OW_;
            col2im_add(gcol.data(), oc_, OH_, OW_, k_, k_, stride_, pad_, H, W, yb);
            for (std::size_t o = 0; o < oc_; ++o) {
                const S bo = bias.value[o];
                S* yrow = yb + o * OH_ * OW_;
                for (std::size_t p = 0; p < OH_ * OW_; ++p) yrow[p] += bo;
            }
        }
        this->check_finite(y);
        return y;
    }

    Tensor<S> backward(const Tensor<S>& gy, bool param_grads = true) override {
        const std::size_t B = x_.shape[0], H = x_.shape[2], W = x_.shape[3];
        const std::size_t K = oc_ * k_ * k_, P = H * W;
        Tensor<S> gx({B, ic_, H, W});
        std::vector<S> col(K * P), colt(P * K);
        for (std::size_t b = 0; b < B; ++b) {
            const S* gyb = gy.ptr() + b * oc_ * OH_ * OW_;
            im2col(gyb, oc_, OH_, OW_, k_, k_, stride_, pad_, H, W, col.data());
            matmul_nn(weight.value.ptr(), col.data(), gx.ptr() + b * ic_ * P, ic_, K, P, false);
            if (param_grads) {
                transpose_mat(col.data(), colt.data(), K, P);
                matmul_nn(x_.ptr() + b * ic_ * P, colt.data(), weight.grad.ptr(), ic_, P, K,
                          true);
                for (std::size_t o = 0; o < oc_; ++o) {
                    S acc = S(0);
                    const S* gyrow = gyb + o * OH_ * OW_;
                    for (std::size_t p = 0; p < OH_ * OW_; ++p) acc += gyrow[p];
                    bias.grad[o] += acc;
                }
            }
        }
        return gx;
    }

    void collect(ParamSet<S>& ps, const std::string& prefix, ParamGroup g) override {
        ps.add(prefix + ".weight", g, false, weight);
        ps.add(prefix + ".bias", g, true, bias);
    }

private:
    std::size_t ic_, oc_, k_, stride_, pad_, out_pad_;
    std::size_t OH_ = 0, OW_ = 0;
    Tensor<S> x_;
};

template <class S>
class ReLU : public Layer<S> {
public:
    const char* kind() const override { return "relu"; }

    Tensor<S> forward(const Tensor<S>& x) override {
        for (const S& v : x.data) margin_ = std::min(margin_, std::abs(double(v)));
        y_ = x;
        for (S& v : y_.data) v = v > S(0) ? v : S(0);
        return y_;
    }

    Tensor<S> backward(const Tensor<S>& gy, bool = true) override {
        Tensor<S> gx = gy;
        for (std::size_t i = 0; i < gx.size(); ++i)
            if (!(y_[i] > S(0))) gx[i] = S(0);
        return gx;
    }

    double kink_margin() const override { return margin_; }
    void reset_kink_margin() override { margin_ = std::numeric_limits<double>::infinity(); }

private:
    Tensor<S> y_;
    double margin_ = std::numeric_limits<double>::infinity();
};

template <class S>
class Sigmoid : public Layer<S> {
public:
    const char* kind() const override { return "sigmoid"; }

    Tensor<S> forward(const Tensor<S>& x) override {
        y_ = Tensor<S>::zeros_like(x);
        for (std::size_t i = 0; i < x.size(); ++i) {
            const S v = x[i];
            y_[i] = v >= S(0) ? S(1) / (S(1) + std::exp(-v))
                              : S(std::exp(double(v)) / (1.0 + std::exp(double(v))));
        }
        this->check_finite(y_);
        return y_;
    }

    Tensor<S> backward(const Tensor<S>& gy, bool = true) override {
        Tensor<S> gx = gy;
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] *= y_[i] * (S(1) - y_[i]);
        return gx;
    }

private:
    Tensor<S> y_;
};

template <class S>
class GlobalAvgPool : public Layer<S> {
public:
    const char* kind() const override { return "global_avg_pool"; }

    Tensor<S> forward(const Tensor<S>& x) override {
        if (x.rank() != 4)
            throw ConfigError("global_avg_pool '" + this->name + "': expected [B,C,H,W], got " +
                              shape_str(x.shape));
        B_ = x.shape[0];
        C_ = x.shape[1];
        HW_ = x.shape[2] * x.shape[3];
        Tensor<S> y({B_, C_});
        const S inv = S(1) / S(HW_);
        for (std::size_t b = 0; b < B_; ++b)
            for (std::size_t c = 0; c < C_; ++c) {
                const S* xr = x.ptr() + (b * C_ + c) * HW_;
                S acc = S(0);
                for (std::size_t p = 0; p < HW_; ++p) acc += xr[p];
                y.at(b, c) = acc * inv;
            }
        H_ = x.shape[2];
        W_ = x.shape[3];
        return y;
    }

    Tensor<S> backward(const Tensor<S>& gy, bool = true) override {
        Tensor<S> gx({B_, C_, H_, W_});
        const S inv = S(1) / S(HW_);
        for (std::size_t b = 0; b < B_; ++b)
            for (std::size_t c = 0; c < C_; ++c) {
                const S g = gy.at(b, c) * inv;
                S* xr = gx.ptr() + (b * C_ + c) * HW_;
                for (std::size_t p = 0; p < HW_; ++p) xr[p] = g;
            }
        return gx;
    }

private:
    std::size_t B_ = 0, C_ = 0, H_ = 0, W_ = 0, HW_ = 0;
};

// Reshapes the per-sample extents, keeping the batch dimension.
template <class S>
class Reshape : public Layer<S> {
public:
    explicit Reshape(std::vector<std::size_t> per_sample) : to_(std::move(per_sample)) {}

    const char* kind() const override { return "reshape"; }

    Tensor<S> forward(const Tensor<S>& x) override {
        from_ = x.shape;
        std::vector<std::size_t> sh{x.shape[0]};
        sh.insert(sh.end(), to_.begin(), to_.end());
        return x.reshaped(sh);
    }

    Tensor<S> backward(const Tensor<S>& gy, bool = true) override { return gy.reshaped(from_); }

private:
    std::vector<std::size_t> to_;
    std::vector<std::size_t> from_;
};

template <class S>
class Sequential {
public:
    Sequential() = default;

    template <class L>
    L& add(L layer, std::string name) {
        auto p = std::make_unique<L>(std::move(layer));
        p->name = std::move(name);
        L& ref = *p;
        layers_.push_back(std::move(p));
        return ref;
    }

    Tensor<S> forward(const Tensor<S>& x) {
        Tensor<S> h = x;
        for (auto& l : layers_) h = l->forward(h);
        return h;
    }

    Tensor<S> backward(const Tensor<S>& gy, bool param_grads = true) {
        Tensor<S> g = gy;
        for (auto it = layers_.rbegin(); it != layers_.rend(); ++it)
            g = (*it)->backward(g, param_grads);
        return g;
    }

    void collect(ParamSet<S>& ps, const std::string& prefix, ParamGroup g) {
        for (auto& l : layers_) l->collect(ps, prefix + "." + l->name, g);
    }

    double kink_margin() const {
        double m = std::numeric_limits<double>::infinity();
        for (auto& l : layers_) m = std::min(m, l->kink_margin());
        return m;
    }

    void reset_kink_margin() {
        for (auto& l : layers_) l->reset_kink_margin();
    }

    std::size_t size() const { return layers_.size(); }
    Layer<S>& at(std::size_t i) { return *layers_[i]; }

private:
    std::vector<std::unique_ptr<Layer<S>>> layers_;
};

// ----- softmax cross-entropy head -------------------------------------------

// Row-wise softmax, shift-stable.
template <class S>
Tensor<S> softmax_rows(const Tensor<S>& logits) {
    const std::size_t B = logits.shape[0], K = logits.shape[1];
    Tensor<S> p({B, K});
    for (std::size_t b = 0; b < B; ++b) {
        const S* lr = logits.ptr() + b * K;
        S mx = lr[0];
        for (std::size_t k = 1; k < K; ++k) mx = std::max(mx, lr[k]);
        S z = S(0);
        S* pr = p.ptr() + b * K;
        for (std::size_t k = 0; k < K; ++k) {
            pr[k] = std::exp(lr[k] - mx);
            z += pr[k];
        }
        for (std::size_t k = 0; k < K; ++k) pr[k] /= z;
    }
    return p;
}

// Per-sample log p(label | logits); probs cached by the caller for backward.
template <class S>
std::vector<S> softmax_loglik(const Tensor<S>& probs, const std::vector<int>& labels) {
    const std::size_t B = probs.shape[0], K = probs.shape[1];
    std::vector<S> ll(B);
    for (std::size_t b = 0; b < B; ++b) {
        const int y = labels[b];
        if (y < 0 || std::size_t(y) >= K)
            throw ConfigError("label " + std::to_string(y) + " out of range [0," +
                              std::to_string(K) + ")");
        ll[b] = std::log(std::max(probs.at(b, std::size_t(y)), S(1e-300)));
    }
    return ll;
}

// d(sum_b w_b * -loglik_b)/dlogits = w_b * (p - onehot).
template <class S>
Tensor<S> softmax_loglik_backward(const Tensor<S>& probs, const std::vector<int>& labels,
                                  const std::vector<S>& w) {
    const std::size_t B = probs.shape[0], K = probs.shape[1];
    Tensor<S> g({B, K});
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t k = 0; k < K; ++k) {
            S v = probs.at(b, k);
            if (std::size_t(labels[b]) == k) v -= S(1);
            g.at(b, k) = w[b] * v;
        }
    return g;
}

} // namespace vac
