#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "condcls/clustering.hpp"

namespace condcls::router {

struct IndexOutOfRange : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct MissingHyperOutput : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Clustifier benchmark counts. Entry (i,j) is the number of evaluation
/// samples with true cluster i predicted as cluster j; column j therefore
/// holds the classes confused into prediction j.
struct ConfusionMatrix {
    std::size_t K1 = 0;
    std::vector<std::vector<std::uint64_t>> counts;  // counts[true][predicted]

    std::uint64_t total() const {
        std::uint64_t t = 0;
        for (const auto& row : counts)
            for (std::uint64_t c : row) t += c;
        return t;
    }
};

/// One clustifier softmax output.
struct ClusterConfidence {
    std::vector<double> v;  // length K1, sums to 1
};

struct ActivationMember {
    std::size_t cluster = 0;
    double weight = 0.0;  // confusion-derived, members sum to 1
};

/// The hyper-class heads switched on for one input. Members are ordered by
/// descending weight (ties toward the lower cluster index).
struct ActivationSet {
    std::vector<ActivationMember> members;
    double tau = 0.0;

    bool contains(std::size_t cluster) const {
        for (const auto& m : members)
            if (m.cluster == cluster) return true;
        return false;
    }
};

/// Tally (predicted, true) pairs into a K1 x K1 confusion matrix.
ConfusionMatrix confusion_matrix(
    const std::vector<std::pair<std::size_t, std::size_t>>& pred_true_pairs, std::size_t K1);

/// Confidence-thresholded activation policy. If the top confidence clears
/// tau, only the predicted cluster is activated with weight 1. Otherwise
/// clusters are added in confusion-column order until the summed confidence
/// clears tau, with weights taken from the normalized column entries.
/// force_include_predicted unions the predicted cluster into the set before
/// the threshold test. A fully zero confusion column falls back to
/// activation by descending confidence.
ActivationSet activate(const ClusterConfidence& v, const ConfusionMatrix& cm, double tau,
                       bool force_include_predicted = true);

/// Confusion-weighted fusion of the active heads' outputs into global class
/// scores of length K. hyper_outputs maps an active cluster to a probability
/// vector over that cluster's classes in ascending global index order.
/// Classes of inactive clusters score 0.
std::vector<double> fuse(
    const ActivationSet& act,
    const std::unordered_map<std::size_t, std::vector<double>>& hyper_outputs,
    const clustering::ClusterAssignment& membership);

/// Indices of the n largest entries of `scores`, descending; ties break
/// toward the lower index.
std::vector<std::size_t> top_n(const std::vector<double>& scores, std::size_t n);

std::string to_json(const ConfusionMatrix& cm);
ConfusionMatrix confusion_from_json(const std::string& text);

}  // namespace condcls::router
