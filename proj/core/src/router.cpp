#include "condcls/router.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

namespace condcls::router {

namespace {

void check_confidence(const ClusterConfidence& v, std::size_t K1) {
    if (v.v.size() != K1) throw IndexOutOfRange("confidence vector length mismatch");
    double sum = 0.0;
    for (double p : v.v) {
        if (!std::isfinite(p) || p < 0.0 || p > 1.0 + 1e-9)
            throw IndexOutOfRange("confidence entry outside [0,1]");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-6) throw IndexOutOfRange("confidence vector does not sum to 1");
}

void sort_members(std::vector<ActivationMember>& members) {
    std::stable_sort(members.begin(), members.end(),
                     [](const ActivationMember& a, const ActivationMember& b) {
                         if (a.weight != b.weight) return a.weight > b.weight;
                         return a.cluster < b.cluster;
                     });
}

/// Activation by descending confidence; used when the confusion column
/// carries no information.
ActivationSet activate_by_confidence(const ClusterConfidence& v, double tau) {
    const std::size_t K1 = v.v.size();
    ActivationSet out;
    out.tau = tau;
    std::vector<std::size_t> order = top_n(v.v, K1);
    double cs = 0.0;
    double wsum = 0.0;
    for (std::size_t idx : order) {
        out.members.push_back({idx, v.v[idx]});
        cs += v.v[idx];
        wsum += v.v[idx];
        if (cs > tau) break;
    }
    for (auto& m : out.members) m.weight /= wsum;
    sort_members(out.members);
    return out;
}

}  // namespace

std::vector<std::size_t> top_n(const std::vector<double>& scores, std::size_t n) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    order.resize(std::min(n, order.size()));
    return order;
}

ConfusionMatrix confusion_matrix(
    const std::vector<std::pair<std::size_t, std::size_t>>& pred_true_pairs, std::size_t K1) {
    ConfusionMatrix cm;
    cm.K1 = K1;
    cm.counts.assign(K1, std::vector<std::uint64_t>(K1, 0));
    for (const auto& [predicted, truth] : pred_true_pairs) {
        if (predicted >= K1 || truth >= K1)
            throw IndexOutOfRange("cluster index out of range in confusion tally");
        ++cm.counts[truth][predicted];
    }
    return cm;
}

ActivationSet activate(const ClusterConfidence& v, const ConfusionMatrix& cm, double tau,
                       bool force_include_predicted) {
    const std::size_t K1 = cm.K1;
    check_confidence(v, K1);
    if (tau <= 0.0 || tau >= 1.0) throw IndexOutOfRange("tau must lie in (0,1)");

    std::size_t index = 0;
    for (std::size_t i = 1; i < K1; ++i)
        if (v.v[i] > v.v[index]) index = i;

    ActivationSet out;
    out.tau = tau;
    if (v.v[index] > tau) {
        out.members.push_back({index, 1.0});
        return out;
    }

    std::vector<double> column(K1);
    double column_sum = 0.0;
    for (std::size_t i = 0; i < K1; ++i) {
        column[i] = static_cast<double>(cm.counts[i][index]);
        column_sum += column[i];
    }
    if (column_sum == 0.0) return activate_by_confidence(v, tau);

    const std::vector<std::size_t> column_order = top_n(column, K1);
    for (std::size_t l = 1; l <= K1; ++l) {
        std::vector<std::size_t> actives(column_order.begin(), column_order.begin() + l);
        if (force_include_predicted &&
            std::find(actives.begin(), actives.end(), index) == actives.end())
            actives.push_back(index);

        double cs = 0.0;
        double wsum = 0.0;
        for (std::size_t a : actives) {
            cs += v.v[a];
            wsum += column[a];
        }
        if (cs > tau || l == K1) {
            for (std::size_t a : actives) {
                const double w = wsum > 0.0 ? column[a] / wsum : 1.0 / actives.size();
                out.members.push_back({a, w});
            }
            sort_members(out.members);
            return out;
        }
    }
    return out;  // unreachable: the l == K1 branch always returns
}

std::vector<double> fuse(
    const ActivationSet& act,
    const std::unordered_map<std::size_t, std::vector<double>>& hyper_outputs,
    const clustering::ClusterAssignment& membership) {
    std::vector<double> scores(membership.num_classes, 0.0);
    for (const auto& m : act.members) {
        const auto it = hyper_outputs.find(m.cluster);
        if (it == hyper_outputs.end())
            throw MissingHyperOutput("no hyper-class output for cluster " +
                                     std::to_string(m.cluster));
        const std::vector<std::size_t> classes = clustering::cluster_members(membership, m.cluster);
        if (it->second.size() != classes.size())
            throw MissingHyperOutput("hyper-class output length mismatch for cluster " +
                                     std::to_string(m.cluster));
        for (std::size_t c = 0; c < classes.size(); ++c)
            scores[classes[c]] = m.weight * it->second[c];
    }
    return scores;
}

std::string to_json(const ConfusionMatrix& cm) {
    nlohmann::json j;
    j["K1"] = cm.K1;
    j["counts"] = cm.counts;
    return j.dump(2);
}

ConfusionMatrix confusion_from_json(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    ConfusionMatrix cm;
    cm.K1 = j.at("K1").get<std::size_t>();
    cm.counts = j.at("counts").get<std::vector<std::vector<std::uint64_t>>>();
    if (cm.counts.size() != cm.K1)
        throw IndexOutOfRange("confusion matrix JSON is inconsistent");
    for (const auto& row : cm.counts)
        if (row.size() != cm.K1) throw IndexOutOfRange("confusion matrix JSON is inconsistent");
    return cm;
}

}  // namespace condcls::router
