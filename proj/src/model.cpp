#include "srt/model.hpp"

namespace srt {

namespace {

void check_features(const SrtModel& m, std::span<const double> x) {
    if (static_cast<int>(x.size()) != m.num_features)
        throw InvalidInputError("feature vector has " + std::to_string(x.size()) +
                                " entries, model expects " + std::to_string(m.num_features));
    for (double v : x)
        if (!std::isfinite(v)) throw InvalidInputError("non-finite feature value");
}

} // namespace

double branch_probability(const SrtModel& m, int t, std::span<const double> x) {
    check_features(m, x);
    if (!m.tree.valid_node(t) || m.tree.is_leaf(t))
        throw InvalidInputError("node " + std::to_string(t) + " is not a branch node");
    return sigmoid_prob(m.mu, m.gate_input(t, x));
}

std::vector<double> leaf_probabilities(const SrtModel& m, std::span<const double> x) {
    check_features(m, x);
    const int fl = m.tree.first_leaf();
    const int nodes = m.tree.last_leaf() + 1;
    std::vector<double> path(nodes);
    if (m.tree.depth >= 8) {
        // Log-space: products of hundreds of gates underflow double range.
        path[1] = 0.0;
        for (int t = 1; t < fl; ++t) {
            const double p = sigmoid_prob(m.mu, m.gate_input(t, x));
            path[2 * t] = path[t] + std::log(p);
            path[2 * t + 1] = path[t] + std::log(1.0 - p);
        }
        std::vector<double> out(m.tree.num_leaves());
        for (int t = fl; t < nodes; ++t) out[m.tree.leaf_col(t)] = std::exp(path[t]);
        return out;
    }
    path[1] = 1.0;
    for (int t = 1; t < fl; ++t) {
        const double p = sigmoid_prob(m.mu, m.gate_input(t, x));
        path[2 * t] = path[t] * p;
        path[2 * t + 1] = path[t] * (1.0 - p);
    }
    std::vector<double> out(m.tree.num_leaves());
    for (int t = fl; t < nodes; ++t) out[m.tree.leaf_col(t)] = path[t];
    return out;
}

std::vector<int> hbp_path(const SrtModel& m, std::span<const double> x) {
    check_features(m, x);
    std::vector<int> path;
    path.reserve(m.tree.depth + 1);
    int t = 1;
    while (!m.tree.is_leaf(t)) {
        path.push_back(t);
        const double p = sigmoid_prob(m.mu, m.gate_input(t, x));
        t = p >= 0.5 ? TreeTopology::left(t) : TreeTopology::right(t);
    }
    path.push_back(t);
    return path;
}

int hbp_leaf(const SrtModel& m, std::span<const double> x) {
    check_features(m, x);
    int t = 1;
    while (!m.tree.is_leaf(t)) {
        const double p = sigmoid_prob(m.mu, m.gate_input(t, x));
        t = p >= 0.5 ? TreeTopology::left(t) : TreeTopology::right(t);
    }
    return t;
}

double predict(const SrtModel& m, std::span<const double> x) {
    return m.leaf_output(hbp_leaf(m, x), x);
}

} // namespace srt
