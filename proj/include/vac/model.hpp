#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "vac/checkpoint.hpp"
#include "vac/layers.hpp"
#include "vac/params.hpp"
#include "vac/rng.hpp"
#include "vac/tensor.hpp"

namespace vac {

enum class Likelihood { bernoulli, gaussian };

inline const char* likelihood_name(Likelihood l) {
    return l == Likelihood::bernoulli ? "bernoulli" : "gaussian";
}

struct ModelConfig {
    std::size_t in_channels = 1;
    std::size_t image_h = 28;
    std::size_t image_w = 28;
    std::size_t latent_dim = 100;
    std::vector<std::size_t> conv_widths = {16, 32, 48}; // stride-2 3x3 stages
    std::size_t classifier_hidden = 64;
    std::size_t n_classes = 10;
    Likelihood likelihood = Likelihood::bernoulli;

    void validate() const {
        if (conv_widths.empty()) throw ConfigError("model: conv_widths must be non-empty");
        if (latent_dim == 0 || n_classes == 0 || classifier_hidden == 0)
            throw ConfigError("model: zero-sized latent/classifier dimensions");
        std::size_t h = image_h, w = image_w;
        for (std::size_t s = 0; s < conv_widths.size(); ++s) {
            if (h + 2 < 3 || w + 2 < 3)
                throw ConfigError("model: image collapses before conv stage " +
                                  std::to_string(s));
            h = conv_out_extent(h, 3, 2, 1);
            w = conv_out_extent(w, 3, 2, 1);
        }
        if (h == 0 || w == 0) throw ConfigError("model: image collapses to zero extent");
    }
};

// Encoder–decoder–classifier triple sharing one latent space.
//
//   encoder  (phi):   stride-2 3x3 convs + ReLU, global average pool, then
//                     linear heads for mu and logvar.
//   decoder  (theta): linear from z to the deepest conv grid, then transposed
//                     convs mirroring the encoder, sigmoid output in [0,1].
//   classifier (omega): MLP on z, two hidden ReLU layers, softmax logits.
//
// Layers cache forward activations, so each instance runs one forward followed
// by its backward; clone() gives independent copies for concurrent use.
template <class S>
class VacModel {
public:
    explicit VacModel(ModelConfig cfg) : cfg_(std::move(cfg)) {
        cfg_.validate();

        // Encoder trunk; remember each stage's input extent so the decoder can
        // reproduce it exactly.
        std::size_t h = cfg_.image_h, w = cfg_.image_w, ch = cfg_.in_channels;
        for (std::size_t s = 0; s < cfg_.conv_widths.size(); ++s) {
            stage_h_.push_back(h);
            stage_w_.push_back(w);
            trunk_.add(Conv2d<S>(ch, cfg_.conv_widths[s], 3, 2, 1),
                       "conv" + std::to_string(s));
            trunk_.add(ReLU<S>(), "relu" + std::to_string(s));
            ch = cfg_.conv_widths[s];
            h = conv_out_extent(h, 3, 2, 1);
            w = conv_out_extent(w, 3, 2, 1);
        }
        trunk_.add(GlobalAvgPool<S>(), "gap");
        deep_c_ = ch;
        deep_h_ = h;
        deep_w_ = w;
        mu_head_ = std::make_unique<Linear<S>>(ch, cfg_.latent_dim);
        mu_head_->name = "mu";
        logvar_head_ = std::make_unique<Linear<S>>(ch, cfg_.latent_dim);
        logvar_head_->name = "logvar";

        // Decoder: z -> deepest grid -> mirrored transposed convs. A stride-2
        // k3 p1 stage maps n -> 2n-1+out_pad, so out_pad is 1 when the target
        // extent is even and 0 when odd.
        decoder_.add(Linear<S>(cfg_.latent_dim, ch * h * w), "fc");
        decoder_.add(ReLU<S>(), "fc_relu");
        decoder_.add(Reshape<S>({ch, h, w}), "grid");
        for (std::size_t s = cfg_.conv_widths.size(); s-- > 0;) {
            const std::size_t oc = s == 0 ? cfg_.in_channels : cfg_.conv_widths[s - 1];
            const std::size_t target_h = stage_h_[s];
            const std::size_t out_pad = target_h - ((stage_target_in(s) - 1) * 2 + 1);
            decoder_.add(ConvTranspose2d<S>(cfg_.conv_widths[s], oc, 3, 2, 1, out_pad),
                         "tconv" + std::to_string(s));
            if (s != 0) decoder_.add(ReLU<S>(), "trelu" + std::to_string(s));
        }
        decoder_.add(Sigmoid<S>(), "out");

        // One out_pad serves both axes; verify the mirrored geometry lands on
        // the original extents (true for square images, not guaranteed else).
        std::size_t mh = deep_h_, mw = deep_w_;
        for (std::size_t s = cfg_.conv_widths.size(); s-- > 0;) {
            const std::size_t op = stage_h_[s] - (2 * stage_target_in(s) - 1);
            mh = 2 * mh - 1 + op;
            mw = 2 * mw - 1 + op;
            if (mh != stage_h_[s] || mw != stage_w_[s])
                throw ConfigError("model: decoder cannot mirror image geometry " +
                                  std::to_string(cfg_.image_h) + "x" +
                                  std::to_string(cfg_.image_w));
        }

        classifier_.add(Linear<S>(cfg_.latent_dim, cfg_.classifier_hidden), "fc0");
        classifier_.add(ReLU<S>(), "relu0");
        classifier_.add(Linear<S>(cfg_.classifier_hidden, cfg_.classifier_hidden), "fc1");
        classifier_.add(ReLU<S>(), "relu1");
        classifier_.add(Linear<S>(cfg_.classifier_hidden, cfg_.n_classes), "fc2");

        trunk_.collect(params_, "phi", ParamGroup::encoder);
        mu_head_->collect(params_, "phi.mu", ParamGroup::encoder);
        logvar_head_->collect(params_, "phi.logvar", ParamGroup::encoder);
        decoder_.collect(params_, "theta", ParamGroup::decoder);
        classifier_.collect(params_, "omega", ParamGroup::classifier);
    }

    VacModel(const VacModel& o) : VacModel(o.cfg_) { load_state(o.state()); }
    VacModel& operator=(const VacModel&) = delete;

    const ModelConfig& config() const { return cfg_; }
    ParamSet<S>& params() { return params_; }
    const ParamSet<S>& params() const { return params_; }

    // Smallest |pre-activation| any ReLU has seen since the last reset.
    double kink_margin() const {
        return std::min({trunk_.kink_margin(), decoder_.kink_margin(),
                         classifier_.kink_margin()});
    }

    void reset_kink_margins() {
        trunk_.reset_kink_margin();
        decoder_.reset_kink_margin();
        classifier_.reset_kink_margin();
    }

    // He-normal weights scaled by fan-in, zero biases, with two posterior-head
    // exceptions. The mu head starts at zero so the initial posterior mean sits
    // on the prior and the capacity gradient cannot yank the encoder apart on
    // the first steps when beta is large. The logvar head starts at a negative
    // bias (sigma ~ e^{-2} ~ 0.14) so the sampled latent carries the mean's
    // signal from the first iteration; starting at the prior's sigma = 1
    // drowns z in noise, and the decoder and classifier then learn to ignore
    // the latent entirely (posterior collapse) before the variance can adapt.
    // The KL starts high and is annealed down by the capacity term instead.
    static constexpr double kInitLogvarBias = -4.0;

    void init(Rng& rng) {
        for (auto& ref : params_.items) {
            Param<S>& p = *ref.param;
            if (ref.is_bias) {
                p.value.fill(S(0));
            } else {
                const std::size_t fan_in = p.value.rank() == 2
                                               ? p.value.shape[1]
                                               : p.value.shape[1] * p.value.shape[2] *
                                                     p.value.shape[3];
                const double stddev = std::sqrt(2.0 / double(fan_in));
                for (S& v : p.value.data) v = S(rng.normal() * stddev);
            }
            p.grad.fill(S(0));
            p.momentum.fill(S(0));
        }
        if (auto* mu = params_.find("phi.mu.weight")) mu->param->value.fill(S(0));
        if (auto* lv = params_.find("phi.logvar.weight")) lv->param->value.fill(S(0));
        if (auto* lb = params_.find("phi.logvar.bias"))
            lb->param->value.fill(S(kInitLogvarBias));
    }

    // ----- forward passes ---------------------------------------------------

    struct Posterior {
        Tensor<S> mu;     // [B, latent]
        Tensor<S> logvar; // [B, latent]
    };

    Posterior encode(const Tensor<S>& x) {
        check_input(x);
        Tensor<S> feat = trunk_.forward(x);
        return {mu_head_->forward(feat), logvar_head_->forward(feat)};
    }

    Tensor<S> decode(const Tensor<S>& z) { return decoder_.forward(z); }

    Tensor<S> classify(const Tensor<S>& z) { return classifier_.forward(z); }

    // ----- backward passes (mirror the forwards above) -----------------------

    // Input gradient through the encoder given head gradients; parameter
    // gradients accumulate unless param_grads is false.
    Tensor<S> encode_backward(const Tensor<S>& gmu, const Tensor<S>& glogvar, bool param_grads) {
        Tensor<S> gfeat = mu_head_->backward(gmu, param_grads);
        Tensor<S> gfeat2 = logvar_head_->backward(glogvar, param_grads);
        for (std::size_t i = 0; i < gfeat.size(); ++i) gfeat[i] += gfeat2[i];
        return trunk_.backward(gfeat, param_grads);
    }

    // Encoder backward when only the mean path was used (logvar untouched).
    Tensor<S> encode_mean_backward(const Tensor<S>& gmu, bool param_grads) {
        Tensor<S> gfeat = mu_head_->backward(gmu, param_grads);
        return trunk_.backward(gfeat, param_grads);
    }

    Tensor<S> decode_backward(const Tensor<S>& gout, bool param_grads) {
        return decoder_.backward(gout, param_grads);
    }

    Tensor<S> classify_backward(const Tensor<S>& glogits, bool param_grads) {
        return classifier_.backward(glogits, param_grads);
    }

    // ----- mean-path inference ------------------------------------------------

    // Logits through z = mu(x); the deterministic path used for prediction and
    // for attacking the classifier.
    Tensor<S> mean_logits(const Tensor<S>& x) { return classify(encode(x).mu); }

    std::vector<int> predict(const Tensor<S>& x) {
        Tensor<S> logits = mean_logits(x);
        const std::size_t B = logits.shape[0], K = logits.shape[1];
        std::vector<int> labels(B);
        for (std::size_t b = 0; b < B; ++b) {
            std::size_t best = 0;
            for (std::size_t k = 1; k < K; ++k)
                if (logits.at(b, k) > logits.at(b, best)) best = k;
            labels[b] = int(best);
        }
        return labels;
    }

    // Mean-path reconstruction: decode(mu(x)).
    Tensor<S> reconstruct(const Tensor<S>& x) { return decode(encode(x).mu); }

    // ----- persistence ---------------------------------------------------------

    TensorMap<S> state() const {
        TensorMap<S> out;
        for (const auto& ref : params_.items) out.emplace(ref.name, ref.param->value);
        return out;
    }

    void load_state(const TensorMap<S>& st) {
        for (auto& ref : params_.items) {
            auto it = st.find(ref.name);
            if (it == st.end())
                throw IoError("checkpoint is missing tensor '" + ref.name + "'");
            ensure_shape(it->second, ref.param->value.shape, "checkpoint tensor " + ref.name);
            ref.param->value = it->second;
        }
        if (st.size() != params_.items.size())
            throw IoError("checkpoint has " + std::to_string(st.size()) + " tensors, model has " +
                          std::to_string(params_.items.size()));
    }

    void save_file(const std::string& path) const { save_tensors_file(path, state()); }
    void load_file(const std::string& path) { load_state(load_tensors_file<S>(path)); }

    VacModel clone() const { return VacModel(*this); }

    std::size_t deep_channels() const { return deep_c_; }

private:
    std::size_t stage_target_in(std::size_t s) const {
        // Input extent to decoder stage s = output extent of encoder stage s.
        return s + 1 < stage_h_.size() ? stage_h_[s + 1] : deep_h_;
    }

    void check_input(const Tensor<S>& x) const {
        if (x.rank() != 4 || x.shape[1] != cfg_.in_channels || x.shape[2] != cfg_.image_h ||
            x.shape[3] != cfg_.image_w)
            throw ConfigError("model: expected input [B," + std::to_string(cfg_.in_channels) +
                              "," + std::to_string(cfg_.image_h) + "," +
                              std::to_string(cfg_.image_w) + "], got " + shape_str(x.shape));
    }

    ModelConfig cfg_;
    Sequential<S> trunk_;
    std::unique_ptr<Linear<S>> mu_head_;
    std::unique_ptr<Linear<S>> logvar_head_;
    Sequential<S> decoder_;
    Sequential<S> classifier_;
    ParamSet<S> params_;
    std::vector<std::size_t> stage_h_, stage_w_;
    std::size_t deep_c_ = 0, deep_h_ = 0, deep_w_ = 0;
};

} // namespace vac
