#include "movie/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "movie/rng.hpp"

namespace movie {

double grad_check(const std::function<Tensor(Graph*)>& fn, ParamGroup& params, double epsilon,
                  uint64_t seed, const std::string& op_name) {
    if (!(epsilon >= 1e-7 && epsilon <= 1e-3))
        throw ContractError("grad_check: epsilon must be in [1e-7, 1e-3], got " +
                            std::to_string(epsilon));

    // analytic pass
    params.zero_grad();
    Graph graph;
    Tensor loss = fn(&graph);
    graph.backward(loss);

    std::map<std::string, std::vector<double>> analytic;
    for (auto& [name, t] : params.tensors) {
        const double* g = t.grad_or_null();
        std::vector<double> copy(static_cast<size_t>(t.numel()), 0.0);
        if (g) std::copy(g, g + t.numel(), copy.begin());
        analytic[name] = std::move(copy);
    }

    Rng rng(derive_seed(seed, "grad_check"));
    double max_err = 0.0;
    for (auto& [name, t] : params.tensors) {
        const int64_t n = t.numel();
        const int64_t samples = std::max<int64_t>(32, std::min<int64_t>(n, 64));
        for (int64_t s = 0; s < samples; ++s) {
            const int64_t i = static_cast<int64_t>(rng.below(static_cast<uint64_t>(n)));
            double* p = t.data();
            const double saved = p[i];
            p[i] = saved + epsilon;
            const double fp = fn(nullptr).item();
            p[i] = saved - epsilon;
            const double fm = fn(nullptr).item();
            p[i] = saved;
            const double numeric = (fp - fm) / (2.0 * epsilon);
            const double a = analytic[name][(size_t)i];
            if (std::isnan(a) || std::isnan(numeric))
                throw GradCheckError("grad_check[" + op_name + "]: NaN gradient at " + name +
                                     "[" + std::to_string(i) + "] (analytic=" + std::to_string(a) +
                                     ", numeric=" + std::to_string(numeric) + ")");
            const double err = std::abs(a - numeric) / std::max(1.0, std::abs(numeric));
            max_err = std::max(max_err, err);
        }
    }
    return max_err;
}

}  // namespace movie
