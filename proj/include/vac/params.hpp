#pragma once

#include <string>
#include <vector>

#include "vac/tensor.hpp"

namespace vac {

// Parameter groups: phi = encoder, theta = decoder, omega = classifier.
enum class ParamGroup { encoder, decoder, classifier };

inline const char* group_name(ParamGroup g) {
    switch (g) {
        case ParamGroup::encoder: return "phi";
        case ParamGroup::decoder: return "theta";
        case ParamGroup::classifier: return "omega";
    }
    return "?";
}

// A trainable tensor with its gradient and momentum buffer. All three share
// one shape for the lifetime of the parameter.
template <class S>
struct Param {
    Tensor<S> value;
    Tensor<S> grad;
    Tensor<S> momentum;

    Param() = default;
    explicit Param(std::vector<std::size_t> shape)
        : value(shape), grad(shape), momentum(shape) {}

    void resize(std::vector<std::size_t> shape) {
        value = Tensor<S>(shape);
        grad = Tensor<S>(shape);
        momentum = Tensor<S>(shape);
    }
};

template <class S>
struct ParamRef {
    std::string name; // unique, stable across save/load; prefixed by group
    ParamGroup group = ParamGroup::encoder;
    bool is_bias = false;
    Param<S>* param = nullptr;
};

// Non-owning registry over a model's parameters, in a fixed registration
// order. Checkpointing and the optimizer walk this list.
template <class S>
struct ParamSet {
    std::vector<ParamRef<S>> items;

    void add(std::string name, ParamGroup group, bool is_bias, Param<S>& p) {
        for (const auto& it : items)
            if (it.name == name) throw ConfigError("duplicate parameter name: " + name);
        items.push_back(ParamRef<S>{std::move(name), group, is_bias, &p});
    }

    std::size_t size() const { return items.size(); }

    const ParamRef<S>* find(const std::string& name) const {
        for (const auto& it : items)
            if (it.name == name) return &it;
        return nullptr;
    }

    std::size_t value_count() const {
        std::size_t n = 0;
        for (const auto& it : items) n += it.param->value.size();
        return n;
    }

    void zero_grads() {
        for (auto& it : items) it.param->grad.fill(S(0));
    }
};

} // namespace vac
