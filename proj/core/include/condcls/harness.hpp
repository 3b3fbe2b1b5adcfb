#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "condcls/clustering.hpp"
#include "condcls/router.hpp"

namespace condcls::harness {

struct BadConfig : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct SplitOverlap : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Generator constants, part of the harness contract so closed-form checks
/// can integrate over the same distributions. The clustifier's top softmax
/// entry is uniform on (kClusterConfLo, kClusterConfHi); keeping the lower
/// bound above 1/2 pins the argmax to the sampled predicted cluster. The
/// true cluster's head confidence is uniform on (kHyperConfLo, kHyperConfHi);
/// off-cluster heads emit exactly uniform vectors.
inline constexpr double kClusterConfLo = 0.51;
inline constexpr double kClusterConfHi = 0.995;
inline constexpr double kHyperConfLo = 0.6;
inline constexpr double kHyperConfHi = 0.99;

/// Row-stochastic planted confusion kernel: probability of each predicted
/// cluster given the true cluster, with errors decaying in circular cluster
/// distance at rate 1/(spread + 0.25).
std::vector<double> confusion_kernel_row(std::size_t true_cluster, std::size_t K1, double accuracy,
                                         double spread);

/// Calibrated synthetic stand-in for a trained hierarchical classifier.
struct SyntheticTaskConfig {
    std::size_t K = 100;
    std::vector<std::size_t> planted_sizes = {9, 28, 23, 15, 14, 11};
    double clustifier_accuracy = 0.923;
    std::vector<double> per_cluster_accuracy = {0.843, 0.769, 0.748, 0.810, 0.841, 0.832};
    double confusion_spread = 1.0;
    std::size_t samples_per_class = 100;
    std::uint64_t seed = 1;
    double baseline_accuracy = 0.76;  // monolithic-oracle reference for acc_gain
};

/// Per-component FLOP costs used by the evaluation accounting.
struct FlopTable {
    double shared = 0.0;
    double clustifier = 0.0;
    std::vector<double> per_cluster;
    double original = 0.0;  // uncompressed single-model cost
};

struct Sample {
    std::size_t id = 0;
    std::size_t true_class = 0;
    std::vector<double> cluster_probs;               // clustifier softmax, length K1
    std::vector<std::vector<double>> hyper_probs;    // per cluster, over its classes
};

struct SyntheticDataset {
    SyntheticTaskConfig cfg;
    clustering::ClusterAssignment planted;
    std::vector<Sample> samples;
};

struct EvaluationReport {
    double tau = 0.0;
    double top1 = 0.0;
    double top5 = 0.0;
    double mean_flops_per_sample = 0.0;
    std::vector<std::uint64_t> activation_histogram;  // index m-1 = samples with m active
    double acc_gain = 0.0;
    double cc_save = 0.0;
};

/// Deterministic given cfg.seed: each sample draws from an rng keyed by
/// (seed, sample id), so generation order is irrelevant.
SyntheticDataset gen_synthetic_task(const SyntheticTaskConfig& cfg);

/// 50/50 split by sample-id parity: even ids calibrate, odd ids test.
struct Split {
    std::vector<std::size_t> calibration_ids;
    std::vector<std::size_t> test_ids;
};
Split parity_split(const SyntheticDataset& ds);

/// Clustifier confusion matrix tallied on the calibration samples.
router::ConfusionMatrix calibrate(const SyntheticDataset& ds,
                                  const std::vector<std::size_t>& calibration_ids);

/// Route every test sample through activation and fusion, tallying accuracy,
/// activation histogram and per-sample FLOP cost.
EvaluationReport evaluate(const SyntheticDataset& ds,
                          const clustering::ClusterAssignment& clusters,
                          const router::ConfusionMatrix& cm, double tau, const FlopTable& flop_table,
                          const std::vector<std::size_t>& calibration_ids,
                          const std::vector<std::size_t>& test_ids);

/// One report per threshold; parallel across thresholds, bounded by the
/// CONDCLS_THREADS environment variable, output ordered by tau.
std::vector<EvaluationReport> sweep_tau(const SyntheticDataset& ds,
                                        const clustering::ClusterAssignment& clusters,
                                        const router::ConfusionMatrix& cm,
                                        const std::vector<double>& taus,
                                        const FlopTable& flop_table,
                                        const std::vector<std::size_t>& calibration_ids,
                                        const std::vector<std::size_t>& test_ids);

/// CSV with one row per tau; floats printed with 6 significant digits.
std::string reports_to_csv(const std::vector<EvaluationReport>& reports, std::size_t K1);
std::string reports_to_json(const std::vector<EvaluationReport>& reports);

SyntheticTaskConfig config_from_json(const std::string& text);
FlopTable flop_table_from_json(const std::string& text);

}  // namespace condcls::harness
