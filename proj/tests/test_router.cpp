#include <algorithm>
#include <cmath>
#include <random>
#include <unordered_map>
#include <vector>

#include <doctest.h>

#include "condcls/router.hpp"
#include "test_support.hpp"

namespace router = condcls::router;
namespace clu = condcls::clustering;

namespace {

clu::ClusterAssignment simple_assignment(const std::vector<std::size_t>& membership) {
    clu::ClusterAssignment a;
    a.num_classes = membership.size();
    a.membership = membership;
    a.num_clusters = *std::max_element(membership.begin(), membership.end()) + 1;
    a.sizes.assign(a.num_clusters, 0);
    for (std::size_t m : membership) ++a.sizes[m];
    return a;
}

}  // namespace

TEST_CASE("confusion matrix tallies (predicted, true) pairs into counts[true][predicted]") {
    const auto cm = router::confusion_matrix({{0, 0}, {0, 0}, {1, 0}, {2, 2}, {1, 1}}, 3);
    CHECK(cm.counts[0][0] == 2);
    CHECK(cm.counts[0][1] == 1);  // true 0 predicted as 1
    CHECK(cm.counts[1][1] == 1);
    CHECK(cm.counts[2][2] == 1);
    CHECK(cm.total() == 5);
}

TEST_CASE("confusion matrix matches a brute-force recount on random pairs") {
    std::mt19937_64 rng(4);
    std::uniform_int_distribution<std::size_t> pick(0, 3);
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (int i = 0; i < 500; ++i) pairs.emplace_back(pick(rng), pick(rng));
    const auto cm = router::confusion_matrix(pairs, 4);
    for (std::size_t t = 0; t < 4; ++t) {
        for (std::size_t p = 0; p < 4; ++p) {
            std::uint64_t n = 0;
            for (const auto& pr : pairs)
                if (pr.first == p && pr.second == t) ++n;
            CHECK(cm.counts[t][p] == n);
        }
    }
}

TEST_CASE("out-of-range cluster index is rejected") {
    CHECK_THROWS_AS(router::confusion_matrix({{3, 0}}, 3), router::IndexOutOfRange);
}

TEST_CASE("confident prediction activates only the predicted cluster with weight 1") {
    const auto cm = router::confusion_matrix({{0, 0}, {1, 1}, {2, 2}}, 3);
    const auto act = router::activate({{0.95, 0.03, 0.02}}, cm, 0.9);
    REQUIRE(act.members.size() == 1);
    CHECK(act.members[0].cluster == 0);
    CHECK(act.members[0].weight == doctest::Approx(1.0));
}

TEST_CASE("low confidence expands the set until the summed confidence clears tau") {
    // Column 0 of the confusion matrix: true clusters seen when 0 is
    // predicted, ordered 0 > 1 > 2 by count.
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (int i = 0; i < 6; ++i) pairs.emplace_back(0, 0);
    for (int i = 0; i < 3; ++i) pairs.emplace_back(0, 1);
    pairs.emplace_back(0, 2);
    const auto cm = router::confusion_matrix(pairs, 3);

    const auto act = router::activate({{0.5, 0.3, 0.2}}, cm, 0.95);
    CHECK(act.members.size() == 3);  // 0.5+0.3 = 0.8 < 0.95, all clusters needed
    double wsum = 0.0;
    for (const auto& m : act.members) wsum += m.weight;
    CHECK(wsum == doctest::Approx(1.0));
    // Weights follow the normalized confusion column: 0.6, 0.3, 0.1.
    CHECK(act.members[0].cluster == 0);
    CHECK(act.members[0].weight == doctest::Approx(0.6));
    CHECK(act.members[1].weight == doctest::Approx(0.3));
    CHECK(act.members[2].weight == doctest::Approx(0.1));
}

TEST_CASE("intermediate threshold stops as soon as the sum clears") {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (int i = 0; i < 6; ++i) pairs.emplace_back(0, 0);
    for (int i = 0; i < 3; ++i) pairs.emplace_back(0, 1);
    pairs.emplace_back(0, 2);
    const auto cm = router::confusion_matrix(pairs, 3);
    const auto act = router::activate({{0.5, 0.3, 0.2}}, cm, 0.7);
    CHECK(act.members.size() == 2);  // 0.5 < 0.7 <= 0.5+0.3
    CHECK(act.members[0].weight == doctest::Approx(6.0 / 9.0));
    CHECK(act.members[1].weight == doctest::Approx(3.0 / 9.0));
}

TEST_CASE("activation-set size is non-decreasing in tau") {
    const auto ind = test_support::planted_indicators({4, 4, 4}, 1);
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    std::uniform_int_distribution<std::size_t> pick(0, 2);
    for (int i = 0; i < 300; ++i) {
        const std::size_t t = pick(rng);
        pairs.emplace_back(unif(rng) < 0.8 ? t : pick(rng), t);
    }
    const auto cm = router::confusion_matrix(pairs, 3);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> v(3);
        double sum = 0.0;
        for (double& x : v) {
            x = unif(rng) + 1e-3;
            sum += x;
        }
        for (double& x : v) x /= sum;
        std::size_t prev = 0;
        for (double tau : {0.5, 0.6, 0.7, 0.8, 0.9, 0.95}) {
            const auto act = router::activate({v}, cm, tau);
            CHECK(act.members.size() >= prev);
            prev = act.members.size();
        }
    }
}

TEST_CASE("the predicted cluster is always forced into the set by default") {
    // Column order for predicted=1 ranks cluster 0 first; the forced union
    // must still include cluster 1 itself.
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (int i = 0; i < 9; ++i) pairs.emplace_back(1, 0);
    pairs.emplace_back(1, 1);
    const auto cm = router::confusion_matrix(pairs, 2);
    const auto act = router::activate({{0.45, 0.55}}, cm, 0.9);
    CHECK(act.contains(1));
}

TEST_CASE("a zero confusion column falls back to descending-confidence activation") {
    // Cluster 2 never predicted during calibration; its column is all zero.
    const auto cm = router::confusion_matrix({{0, 0}, {1, 1}}, 3);
    const auto act = router::activate({{0.2, 0.3, 0.5}}, cm, 0.9);
    CHECK(act.members.size() >= 2);
    CHECK(act.members[0].cluster == 2);  // highest confidence first
    double wsum = 0.0;
    for (const auto& m : act.members) wsum += m.weight;
    CHECK(wsum == doctest::Approx(1.0));
}

TEST_CASE("single-active fusion reduces to the head's own scores") {
    const auto a = simple_assignment({0, 0, 1, 1, 1});
    router::ActivationSet act;
    act.members = {{1, 1.0}};
    std::unordered_map<std::size_t, std::vector<double>> outputs = {{1, {0.2, 0.5, 0.3}}};
    const auto scores = router::fuse(act, outputs, a);
    CHECK(scores == std::vector<double>{0.0, 0.0, 0.2, 0.5, 0.3});
    CHECK(router::top_n(scores, 1)[0] == 3);
}

TEST_CASE("multi-active fusion matches a brute-force weighted recompute") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const auto a = simple_assignment({0, 1, 0, 2, 1, 2, 0});
    for (int trial = 0; trial < 20; ++trial) {
        router::ActivationSet act;
        double wsum = 0.0;
        std::vector<double> w(3);
        for (double& x : w) {
            x = unif(rng) + 0.05;
            wsum += x;
        }
        for (std::size_t c = 0; c < 3; ++c) act.members.push_back({c, w[c] / wsum});
        std::sort(act.members.begin(), act.members.end(),
                  [](const auto& x, const auto& y) { return x.weight > y.weight; });
        std::unordered_map<std::size_t, std::vector<double>> outputs;
        for (std::size_t c = 0; c < 3; ++c) {
            const auto members = clu::cluster_members(a, c);
            std::vector<double> probs(members.size());
            double sum = 0.0;
            for (double& p : probs) {
                p = unif(rng);
                sum += p;
            }
            for (double& p : probs) p /= sum;
            outputs[c] = probs;
        }
        const auto scores = router::fuse(act, outputs, a);
        for (std::size_t cls = 0; cls < a.num_classes; ++cls) {
            const std::size_t c = a.membership[cls];
            const auto members = clu::cluster_members(a, c);
            const std::size_t local =
                std::find(members.begin(), members.end(), cls) - members.begin();
            double expect = 0.0;
            for (const auto& m : act.members)
                if (m.cluster == c) expect = m.weight * outputs[c][local];
            CHECK(scores[cls] == doctest::Approx(expect).epsilon(1e-12));
        }
    }
}

TEST_CASE("fusion weighting can overturn a more confident head") {
    // Head 0 active with weight 0.75 scoring 0.6 beats head 1's 0.9 at 0.25.
    const auto a = simple_assignment({0, 1});
    router::ActivationSet act;
    act.members = {{0, 0.75}, {1, 0.25}};
    std::unordered_map<std::size_t, std::vector<double>> outputs = {{0, {0.6}}, {1, {0.9}}};
    const auto scores = router::fuse(act, outputs, a);
    CHECK(scores[0] == doctest::Approx(0.45));
    CHECK(scores[1] == doctest::Approx(0.225));
    CHECK(router::top_n(scores, 1)[0] == 0);
}

TEST_CASE("fusion requires an output for every active cluster") {
    const auto a = simple_assignment({0, 1});
    router::ActivationSet act;
    act.members = {{0, 0.5}, {1, 0.5}};
    std::unordered_map<std::size_t, std::vector<double>> outputs = {{0, {1.0}}};
    CHECK_THROWS_AS(router::fuse(act, outputs, a), router::MissingHyperOutput);
}

TEST_CASE("top_n orders descending and breaks ties toward the lower index") {
    const auto best = router::top_n({0.2, 0.5, 0.5, 0.1}, 3);
    CHECK(best == std::vector<std::size_t>{1, 2, 0});
}

TEST_CASE("fused ranking is invariant under uniform score scaling") {
    const auto a = simple_assignment({0, 0, 1, 1});
    router::ActivationSet act;
    act.members = {{0, 0.7}, {1, 0.3}};
    std::unordered_map<std::size_t, std::vector<double>> outputs = {{0, {0.3, 0.7}},
                                                                    {1, {0.9, 0.1}}};
    const auto scores = router::fuse(act, outputs, a);
    auto scaled_outputs = outputs;
    for (auto& [c, probs] : scaled_outputs)
        for (double& p : probs) p *= 4.0;
    const auto scaled = router::fuse(act, scaled_outputs, a);
    CHECK(router::top_n(scores, 4) == router::top_n(scaled, 4));
}

TEST_CASE("confusion matrix JSON round-trips") {
    const auto cm = router::confusion_matrix({{0, 0}, {1, 0}, {1, 1}, {2, 2}}, 3);
    const auto back = router::confusion_from_json(router::to_json(cm));
    CHECK(back.K1 == cm.K1);
    CHECK(back.counts == cm.counts);
}
