#pragma once

#include <memory>
#include <unordered_map>
#include <vector>

#include "movie/tensor.hpp"

namespace movie {

class Graph;

/// One executed differentiable operation on the tape: the op kind, the ids
/// of its input/output values, and whatever saved state backward() needs
/// (each concrete node keeps Tensor handles to the values involved).
struct Node {
    const char* kind = "?";
    std::vector<int> input_ids;
    int output_id = -1;

    virtual ~Node() = default;
    /// Accumulate input gradients from the output gradient.
    virtual void backward() = 0;
};

/// Reverse-mode tape. Nodes are recorded in execution order, which is by
/// construction a topological order of the dataflow; backward() walks them
/// in exact reverse order. A Graph and the tensors recorded on it belong to
/// one execution context; independent graphs may live on separate threads.
class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    /// Stable id for a value (keyed on storage identity).
    int value_id(const Tensor& t) {
        const void* key = t.data();
        auto it = value_ids_.find(key);
        if (it != value_ids_.end()) return it->second;
        int id = next_value_id_++;
        value_ids_.emplace(key, id);
        return id;
    }

    void record(std::unique_ptr<Node> node) { nodes_.push_back(std::move(node)); }

    const std::vector<std::unique_ptr<Node>>& nodes() const { return nodes_; }
    size_t size() const { return nodes_.size(); }

    /// Seed d(loss)/d(loss) = 1 and run every recorded node's backward in
    /// reverse execution order. Gradients accumulate; callers zero them
    /// between steps. `visit_log`, when given, receives the node kinds in
    /// visit order (used by tests and diagnostics).
    void backward(Tensor& loss, std::vector<const char*>* visit_log = nullptr) {
        if (loss.numel() != 1)
            throw ContractError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
        loss.grad()[0] += 1.0;
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
            if (visit_log) visit_log->push_back((*it)->kind);
            (*it)->backward();
        }
    }

    void clear() {
        nodes_.clear();
        value_ids_.clear();
        next_value_id_ = 0;
    }

private:
    std::vector<std::unique_ptr<Node>> nodes_;
    std::unordered_map<const void*, int> value_ids_;
    int next_value_id_ = 0;
};

/// True when an op executed with this graph/input combination must record a
/// node: somebody downstream will ask for gradients.
inline bool tape_active(const Graph* g, std::initializer_list<const Tensor*> inputs) {
    if (!g) return false;
    for (const Tensor* t : inputs)
        if (t && t->requires_grad()) return true;
    return false;
}

}  // namespace movie
