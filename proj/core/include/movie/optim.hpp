#pragma once

#include <map>
#include <string>
#include <vector>

#include "movie/tensor.hpp"

namespace movie {

/// A named set of parameters sharing one learning rate, with per-tensor Adam
/// moment state. Groups are the unit of optimizer configuration: at test
/// time the STN blocks and the encoder live in different groups with very
/// different rates.
struct ParamGroup {
    struct AdamState {
        std::vector<double> m;  // first moment
        std::vector<double> v;  // second moment
    };

    std::string name;
    std::map<std::string, Tensor> tensors;  // ordered by name for determinism
    double learning_rate = 0.0;
    std::map<std::string, AdamState> adam_state;
    int64_t step_count = 0;

    ParamGroup() = default;
    ParamGroup(std::string group_name, double lr) : name(std::move(group_name)), learning_rate(lr) {
        if (lr <= 0.0) throw ContractError("ParamGroup " + name + ": learning_rate must be > 0");
    }

    /// Register a live parameter. The tensor is taken by reference so the
    /// requires_grad flag lands on the network's own handle; the stored copy
    /// shares its storage.
    void add(const std::string& param_name, Tensor& t) {
        t.set_requires_grad(true);
        adam_state[param_name] =
            AdamState{std::vector<double>(static_cast<size_t>(t.numel()), 0.0),
                      std::vector<double>(static_cast<size_t>(t.numel()), 0.0)};
        tensors[param_name] = t;
    }

    void zero_grad() {
        for (auto& [n, t] : tensors) t.zero_grad();
    }
};

/// One Adam update with bias correction over every tensor in the group.
/// Gradients must be populated and are left untouched.
void adam_step(ParamGroup& group, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

}  // namespace movie
