#pragma once

#include <cstdint>
#include <vector>

#include "stablegnn/errors.hpp"

namespace stablegnn {

/// One value per graph node. Rating points in the MovieLens task.
struct GraphSignal {
    std::vector<double> values;

    GraphSignal() = default;
    explicit GraphSignal(std::size_t n, double fill = 0.0) : values(n, fill) {}
    GraphSignal(std::initializer_list<double> v) : values(v) {}

    std::size_t size() const { return values.size(); }
    double& operator[](std::size_t i) { return values[i]; }
    double operator[](std::size_t i) const { return values[i]; }

    friend bool operator==(const GraphSignal& a, const GraphSignal& b) {
        return a.values == b.values;
    }
};

using NodeMask = std::vector<std::uint8_t>;

inline std::size_t mask_count(const NodeMask& m) {
    std::size_t c = 0;
    for (auto b : m) c += (b != 0);
    return c;
}

/// (input, target, mask) triples sharing one node set.
struct SignalBatch {
    std::vector<GraphSignal> inputs;
    std::vector<GraphSignal> targets;
    std::vector<NodeMask> masks;

    std::size_t size() const { return inputs.size(); }
    bool empty() const { return inputs.empty(); }

    void validate(std::size_t n_nodes) const {
        if (inputs.size() != targets.size() || inputs.size() != masks.size())
            fail(errc::shape_mismatch, "batch lists differ in length");
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            if (inputs[i].size() != n_nodes || targets[i].size() != n_nodes ||
                masks[i].size() != n_nodes)
                fail(errc::dimension_mismatch, "batch sample size != node count");
            if (mask_count(masks[i]) == 0) fail(errc::empty_mask, "mask selects no node");
        }
    }

    SignalBatch subset(const std::vector<std::size_t>& idx) const {
        SignalBatch out;
        out.inputs.reserve(idx.size());
        out.targets.reserve(idx.size());
        out.masks.reserve(idx.size());
        for (auto i : idx) {
            out.inputs.push_back(inputs[i]);
            out.targets.push_back(targets[i]);
            out.masks.push_back(masks[i]);
        }
        return out;
    }
};

} // namespace stablegnn
