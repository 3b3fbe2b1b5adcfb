#include "condcls/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <mutex>
#include <numeric>
#include <random>
#include <set>
#include <thread>
#include <unordered_map>

#include <json.hpp>

namespace condcls::harness {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

void validate(const SyntheticTaskConfig& cfg) {
    if (cfg.K < 2) throw BadConfig("K must be at least 2");
    if (cfg.planted_sizes.empty()) throw BadConfig("planted_sizes must be nonempty");
    if (std::accumulate(cfg.planted_sizes.begin(), cfg.planted_sizes.end(), std::size_t{0}) !=
        cfg.K)
        throw BadConfig("planted_sizes must sum to K");
    for (std::size_t s : cfg.planted_sizes)
        if (s == 0) throw BadConfig("planted cluster sizes must be positive");
    if (cfg.clustifier_accuracy <= 0.0 || cfg.clustifier_accuracy > 1.0)
        throw BadConfig("clustifier_accuracy must lie in (0,1]");
    if (cfg.per_cluster_accuracy.size() != cfg.planted_sizes.size())
        throw BadConfig("per_cluster_accuracy must have one entry per planted cluster");
    for (double a : cfg.per_cluster_accuracy)
        if (a <= 0.0 || a > 1.0) throw BadConfig("per-cluster accuracy must lie in (0,1]");
    if (cfg.confusion_spread < 0.0) throw BadConfig("confusion_spread must be nonnegative");
    if (cfg.samples_per_class == 0) throw BadConfig("samples_per_class must be positive");
}

}  // namespace

std::vector<double> confusion_kernel_row(std::size_t true_cluster, std::size_t K1, double accuracy,
                                         double spread) {
    std::vector<double> row(K1, 0.0);
    if (K1 == 1) {
        row[0] = 1.0;
        return row;
    }
    row[true_cluster] = accuracy;
    double wsum = 0.0;
    std::vector<double> w(K1, 0.0);
    for (std::size_t j = 0; j < K1; ++j) {
        if (j == true_cluster) continue;
        const std::size_t linear = j > true_cluster ? j - true_cluster : true_cluster - j;
        const std::size_t d = std::min(linear, K1 - linear);
        w[j] = std::exp(-static_cast<double>(d) / (spread + 0.25));
        wsum += w[j];
    }
    for (std::size_t j = 0; j < K1; ++j)
        if (j != true_cluster) row[j] = (1.0 - accuracy) * w[j] / wsum;
    return row;
}

SyntheticDataset gen_synthetic_task(const SyntheticTaskConfig& cfg) {
    validate(cfg);
    const std::size_t K1 = cfg.planted_sizes.size();

    SyntheticDataset ds;
    ds.cfg = cfg;
    ds.planted.num_classes = cfg.K;
    ds.planted.num_clusters = K1;
    ds.planted.sizes = cfg.planted_sizes;
    ds.planted.seed = cfg.seed;
    ds.planted.membership.reserve(cfg.K);
    for (std::size_t c = 0; c < K1; ++c)
        for (std::size_t i = 0; i < cfg.planted_sizes[c]; ++i) ds.planted.membership.push_back(c);

    std::vector<std::vector<double>> kernel(K1);
    for (std::size_t t = 0; t < K1; ++t)
        kernel[t] = confusion_kernel_row(t, K1, cfg.clustifier_accuracy, cfg.confusion_spread);

    ds.samples.reserve(cfg.K * cfg.samples_per_class);
    std::size_t id = 0;
    for (std::size_t cls = 0; cls < cfg.K; ++cls) {
        const std::size_t t = ds.planted.membership[cls];
        for (std::size_t rep = 0; rep < cfg.samples_per_class; ++rep, ++id) {
            std::mt19937_64 rng(splitmix64(cfg.seed ^ splitmix64(id)));
            Sample s;
            s.id = id;
            s.true_class = cls;

            // Predicted cluster from the planted confusion kernel.
            std::discrete_distribution<std::size_t> pick(kernel[t].begin(), kernel[t].end());
            const std::size_t pred = pick(rng);

            // Top confidence above 1/2 guarantees argmax == pred; the rest of
            // the mass follows the kernel row of pred deterministically.
            s.cluster_probs.assign(K1, 0.0);
            if (K1 == 1) {
                s.cluster_probs[0] = 1.0;
            } else {
                const double u =
                    std::uniform_real_distribution<double>(kClusterConfLo, kClusterConfHi)(rng);
                s.cluster_probs[pred] = u;
                double wsum = 0.0;
                for (std::size_t j = 0; j < K1; ++j)
                    if (j != pred) wsum += kernel[pred][j];
                for (std::size_t j = 0; j < K1; ++j)
                    if (j != pred)
                        // A perfectly accurate kernel has no off-prediction
                        // mass to copy; spread the remainder uniformly.
                        s.cluster_probs[j] = wsum > 0.0
                                                 ? (1.0 - u) * kernel[pred][j] / wsum
                                                 : (1.0 - u) / static_cast<double>(K1 - 1);
            }

            s.hyper_probs.resize(K1);
            for (std::size_t f = 0; f < K1; ++f) {
                const std::size_t cf = cfg.planted_sizes[f];
                if (f != t) {
                    // Off-cluster heads know nothing about this sample.
                    s.hyper_probs[f].assign(cf, 1.0 / static_cast<double>(cf));
                    continue;
                }
                const std::vector<std::size_t> members = clustering::cluster_members(ds.planted, f);
                std::size_t local = 0;
                while (members[local] != cls) ++local;
                std::size_t predicted_local = local;
                if (cf > 1 &&
                    std::uniform_real_distribution<double>(0.0, 1.0)(rng) >
                        cfg.per_cluster_accuracy[f]) {
                    std::size_t wrong =
                        std::uniform_int_distribution<std::size_t>(0, cf - 2)(rng);
                    predicted_local = wrong < local ? wrong : wrong + 1;
                }
                if (cf == 1) {
                    s.hyper_probs[f] = {1.0};
                } else {
                    const double conf =
                        std::uniform_real_distribution<double>(kHyperConfLo, kHyperConfHi)(rng);
                    s.hyper_probs[f].assign(cf, (1.0 - conf) / static_cast<double>(cf - 1));
                    s.hyper_probs[f][predicted_local] = conf;
                }
            }
            ds.samples.push_back(std::move(s));
        }
    }
    return ds;
}

Split parity_split(const SyntheticDataset& ds) {
    Split split;
    for (const Sample& s : ds.samples)
        (s.id % 2 == 0 ? split.calibration_ids : split.test_ids).push_back(s.id);
    return split;
}

namespace {

std::unordered_map<std::size_t, std::size_t> index_by_id(const SyntheticDataset& ds) {
    std::unordered_map<std::size_t, std::size_t> map;
    map.reserve(ds.samples.size());
    for (std::size_t i = 0; i < ds.samples.size(); ++i) map[ds.samples[i].id] = i;
    return map;
}

}  // namespace

router::ConfusionMatrix calibrate(const SyntheticDataset& ds,
                                  const std::vector<std::size_t>& calibration_ids) {
    const auto by_id = index_by_id(ds);
    const std::size_t K1 = ds.planted.num_clusters;
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    pairs.reserve(calibration_ids.size());
    for (std::size_t id : calibration_ids) {
        const Sample& s = ds.samples.at(by_id.at(id));
        std::size_t pred = 0;
        for (std::size_t j = 1; j < K1; ++j)
            if (s.cluster_probs[j] > s.cluster_probs[pred]) pred = j;
        pairs.emplace_back(pred, ds.planted.membership[s.true_class]);
    }
    return router::confusion_matrix(pairs, K1);
}

EvaluationReport evaluate(const SyntheticDataset& ds,
                          const clustering::ClusterAssignment& clusters,
                          const router::ConfusionMatrix& cm, double tau,
                          const FlopTable& flop_table,
                          const std::vector<std::size_t>& calibration_ids,
                          const std::vector<std::size_t>& test_ids) {
    if (test_ids.empty()) throw BadConfig("evaluate: test split is empty");
    if (flop_table.original <= 0.0) throw BadConfig("evaluate: original flop count must be positive");
    if (flop_table.per_cluster.size() != clusters.num_clusters)
        throw BadConfig("evaluate: flop table has wrong cluster count");
    {
        std::set<std::size_t> calib(calibration_ids.begin(), calibration_ids.end());
        for (std::size_t id : test_ids)
            if (calib.count(id))
                throw SplitOverlap("sample " + std::to_string(id) +
                                   " appears in both calibration and test splits");
    }

    const auto by_id = index_by_id(ds);
    const std::size_t K1 = clusters.num_clusters;
    EvaluationReport report;
    report.tau = tau;
    report.activation_histogram.assign(K1, 0);

    std::uint64_t top1_hits = 0, top5_hits = 0;
    double flop_sum = 0.0;
    for (std::size_t id : test_ids) {
        const Sample& s = ds.samples.at(by_id.at(id));
        const router::ActivationSet act =
            router::activate(router::ClusterConfidence{s.cluster_probs}, cm, tau);
        ++report.activation_histogram[act.members.size() - 1];

        std::unordered_map<std::size_t, std::vector<double>> outputs;
        double sample_flops = flop_table.shared + flop_table.clustifier;
        for (const auto& m : act.members) {
            outputs[m.cluster] = s.hyper_probs[m.cluster];
            sample_flops += flop_table.per_cluster[m.cluster];
        }
        flop_sum += sample_flops;

        const std::vector<double> scores = router::fuse(act, outputs, clusters);
        const std::vector<std::size_t> best = router::top_n(scores, 5);
        if (!best.empty() && best[0] == s.true_class) ++top1_hits;
        if (std::find(best.begin(), best.end(), s.true_class) != best.end()) ++top5_hits;
    }

    const double n = static_cast<double>(test_ids.size());
    report.top1 = static_cast<double>(top1_hits) / n;
    report.top5 = static_cast<double>(top5_hits) / n;
    report.mean_flops_per_sample = flop_sum / n;
    report.acc_gain = report.top1 - ds.cfg.baseline_accuracy;
    report.cc_save = 1.0 - report.mean_flops_per_sample / flop_table.original;
    return report;
}

namespace {

std::size_t thread_budget() {
    if (const char* env = std::getenv("CONDCLS_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1) return static_cast<std::size_t>(v);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

}  // namespace

std::vector<EvaluationReport> sweep_tau(const SyntheticDataset& ds,
                                        const clustering::ClusterAssignment& clusters,
                                        const router::ConfusionMatrix& cm,
                                        const std::vector<double>& taus,
                                        const FlopTable& flop_table,
                                        const std::vector<std::size_t>& calibration_ids,
                                        const std::vector<std::size_t>& test_ids) {
    for (std::size_t i = 0; i < taus.size(); ++i) {
        if (taus[i] <= 0.0 || taus[i] >= 1.0)
            throw BadConfig("sweep thresholds must lie in (0,1)");
        if (i > 0 && taus[i] <= taus[i - 1])
            throw BadConfig("sweep thresholds must be strictly increasing");
    }
    std::vector<EvaluationReport> reports(taus.size());
    const std::size_t workers = std::min(thread_budget(), std::max<std::size_t>(taus.size(), 1));
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (std::size_t i = next.fetch_add(1); i < taus.size(); i = next.fetch_add(1)) {
            try {
                reports[i] =
                    evaluate(ds, clusters, cm, taus[i], flop_table, calibration_ids, test_ids);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
    worker();
    for (std::thread& t : pool) t.join();
    if (error) std::rethrow_exception(error);
    return reports;
}

namespace {

std::string fmt6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

}  // namespace

std::string reports_to_csv(const std::vector<EvaluationReport>& reports, std::size_t K1) {
    std::string out = "tau,top1,top5";
    for (std::size_t i = 1; i <= K1; ++i) out += ",hist_" + std::to_string(i);
    out += ",acc_gain,cc_save\n";
    for (const EvaluationReport& r : reports) {
        out += fmt6(r.tau) + "," + fmt6(r.top1) + "," + fmt6(r.top5);
        for (std::size_t i = 0; i < K1; ++i)
            out += "," + std::to_string(i < r.activation_histogram.size()
                                            ? r.activation_histogram[i]
                                            : 0);
        out += "," + fmt6(r.acc_gain) + "," + fmt6(r.cc_save) + "\n";
    }
    return out;
}

std::string reports_to_json(const std::vector<EvaluationReport>& reports) {
    nlohmann::json j = nlohmann::json::array();
    for (const EvaluationReport& r : reports) {
        nlohmann::json rj;
        rj["tau"] = r.tau;
        rj["top1"] = r.top1;
        rj["top5"] = r.top5;
        rj["mean_flops_per_sample"] = r.mean_flops_per_sample;
        rj["activation_histogram"] = r.activation_histogram;
        rj["acc_gain"] = r.acc_gain;
        rj["cc_save"] = r.cc_save;
        j.push_back(rj);
    }
    return j.dump(2);
}

SyntheticTaskConfig config_from_json(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    SyntheticTaskConfig cfg;
    cfg.K = j.value("K", cfg.K);
    if (j.contains("planted_sizes"))
        cfg.planted_sizes = j.at("planted_sizes").get<std::vector<std::size_t>>();
    cfg.clustifier_accuracy = j.value("clustifier_accuracy", cfg.clustifier_accuracy);
    if (j.contains("per_cluster_accuracy"))
        cfg.per_cluster_accuracy = j.at("per_cluster_accuracy").get<std::vector<double>>();
    cfg.confusion_spread = j.value("confusion_spread", cfg.confusion_spread);
    cfg.samples_per_class = j.value("samples_per_class", cfg.samples_per_class);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.baseline_accuracy = j.value("baseline_accuracy", cfg.baseline_accuracy);
    validate(cfg);
    return cfg;
}

FlopTable flop_table_from_json(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    FlopTable t;
    t.shared = j.value("shared", 0.0);
    t.clustifier = j.value("clustifier", 0.0);
    if (j.contains("per_cluster")) t.per_cluster = j.at("per_cluster").get<std::vector<double>>();
    t.original = j.value("original", 0.0);
    return t;
}

}  // namespace condcls::harness
