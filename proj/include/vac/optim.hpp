#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "vac/params.hpp"
#include "vac/tensor.hpp"

namespace vac {

// Step-decay learning rate: divide the base rate by `factor` at every epoch in
// `drops` that has been reached. drops={10,30}, factor=10: epochs 0-9 run at
// lr, 10-29 at lr/10, 30+ at lr/100.
struct LrSchedule {
    double base = 0.01;
    std::vector<int> drops;
    double factor = 10.0;

    double at(int epoch) const {
        double lr = base;
        for (int d : drops)
            if (epoch >= d) lr /= factor;
        return lr;
    }
};

struct OptimizerConfig {
    double learning_rate = 0.01;
    double momentum = 0.9;
    double weight_decay = 1e-6;
    std::vector<int> lr_drop_epochs = {10, 30};
    double lr_drop_factor = 10.0;

    void validate() const {
        if (learning_rate <= 0) throw ConfigError("optimizer: learning_rate must be positive");
        if (momentum < 0 || momentum >= 1)
            throw ConfigError("optimizer: momentum must be in [0,1)");
        if (weight_decay < 0) throw ConfigError("optimizer: weight_decay must be non-negative");
        if (lr_drop_factor <= 0) throw ConfigError("optimizer: lr_drop_factor must be positive");
        for (std::size_t i = 1; i < lr_drop_epochs.size(); ++i)
            if (lr_drop_epochs[i] <= lr_drop_epochs[i - 1])
                throw ConfigError("optimizer: lr_drop_epochs must be strictly increasing");
    }

    LrSchedule schedule() const { return {learning_rate, lr_drop_epochs, lr_drop_factor}; }
};

// SGD with classical momentum and coupled weight decay:
//   v <- m*v + (g + wd*p);  p <- p - lr*v
// Gradients are zeroed after the step so accumulation starts fresh.
template <class S>
class SgdMomentum {
public:
    SgdMomentum(double momentum, double weight_decay)
        : momentum_(momentum), weight_decay_(weight_decay) {}

    void step(ParamSet<S>& params, double lr) {
        for (auto& ref : params.items) {
            Param<S>& p = *ref.param;
            const S m = S(momentum_), wd = S(weight_decay_), eta = S(lr);
            for (std::size_t i = 0; i < p.value.size(); ++i) {
                const S g = p.grad[i] + wd * p.value[i];
                p.momentum[i] = m * p.momentum[i] + g;
                p.value[i] -= eta * p.momentum[i];
            }
            ensure_finite(p.value, "parameter '" + ref.name + "' after sgd step");
        }
        params.zero_grads();
    }

    double momentum() const { return momentum_; }
    double weight_decay() const { return weight_decay_; }

private:
    double momentum_;
    double weight_decay_;
};

} // namespace vac
