#include "movie/optim.hpp"

#include <cmath>

namespace movie {

void adam_step(ParamGroup& group, double beta1, double beta2, double eps) {
    group.step_count += 1;
    const double t = static_cast<double>(group.step_count);
    const double bc1 = 1.0 - std::pow(beta1, t);
    const double bc2 = 1.0 - std::pow(beta2, t);
    for (auto& [name, param] : group.tensors) {
        if (!param.has_grad())
            throw ContractError("adam_step: parameter '" + group.name + "/" + name +
                                "' has no gradient");
        auto& st = group.adam_state.at(name);
        double* p = param.data();
        const double* g = param.grad();
        for (int64_t i = 0; i < param.numel(); ++i) {
            st.m[(size_t)i] = beta1 * st.m[(size_t)i] + (1.0 - beta1) * g[i];
            st.v[(size_t)i] = beta2 * st.v[(size_t)i] + (1.0 - beta2) * g[i] * g[i];
            const double mhat = st.m[(size_t)i] / bc1;
            const double vhat = st.v[(size_t)i] / bc2;
            p[i] -= group.learning_rate * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

}  // namespace movie
