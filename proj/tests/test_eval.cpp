#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "evtad/eval.hpp"
#include "testutil.hpp"

using evtad::Detection;
using evtad::EvalConfig;
using evtad::GtGroups;
using evtad::Interval;
using evtad::Proposal;
using evtad::ProposalGroups;

namespace {

Proposal prop(double a, double b, double score) {
    Proposal p;
    p.interval = {a, b};
    p.score = score;
    return p;
}

Detection det(const std::string& roi, double a, double b, double score) {
    return Detection{roi, {a, b}, score, "ED"};
}

}  // namespace

TEST_CASE("average recall on the frozen two-instance example") {
    // One gt matched at tIoU 0.6, one missed entirely: recall is 0.5 at
    // thresholds 0.1/0.3/0.5 and 0 at 0.7, averaging 0.375.
    ProposalGroups props;
    props["nest_a"] = {prop(0.0, 6.0, 0.9)};
    GtGroups gts;
    gts["nest_a"] = {{0.0, 10.0}, {20.0, 30.0}};
    const auto res = evtad::average_recall(props, gts, {});
    REQUIRE(res.top_n == std::vector<int>{20, 30, 50});
    REQUIRE(res.thresholds.size() == 4);
    for (std::size_t i = 0; i < res.top_n.size(); ++i) {
        CHECK(res.ar[i] == Catch::Approx(0.375).epsilon(1e-12));
        CHECK(res.recall[i][0] == Catch::Approx(0.5));
        CHECK(res.recall[i][3] == 0.0);
    }
}

TEST_CASE("perfect proposals give unit recall, absent ones zero") {
    GtGroups gts;
    gts["nest_a"] = {{0.0, 10.0}, {20.0, 30.0}};
    ProposalGroups exact;
    exact["nest_a"] = {prop(0.0, 10.0, 0.9), prop(20.0, 30.0, 0.8)};
    const auto full = evtad::average_recall(exact, gts, {});
    for (double ar : full.ar) CHECK(ar == 1.0);

    const auto none = evtad::average_recall({}, gts, {});
    for (double ar : none.ar) CHECK(ar == 0.0);
}

TEST_CASE("recall counts only the top N proposals per roi") {
    GtGroups gts;
    gts["nest_a"] = {{100.0, 110.0}};
    ProposalGroups props;
    // Twenty high-scoring misses push the single hit past N = 20.
    for (int i = 0; i < 20; ++i)
        props["nest_a"].push_back(prop(i * 200.0, i * 200.0 + 5.0, 0.9));
    props["nest_a"].push_back(prop(100.0, 110.0, 0.1));
    EvalConfig cfg;
    cfg.top_n = {20, 30};
    const auto res = evtad::average_recall(props, gts, cfg);
    CHECK(res.ar[0] == 0.0);  // hit ranked 21st
    CHECK(res.ar[1] == 1.0);  // visible at N = 30
}

TEST_CASE("recall pools ground truth across rois") {
    GtGroups gts;
    gts["nest_a"] = {{0.0, 10.0}};
    gts["nest_b"] = {{0.0, 10.0}, {20.0, 26.0}};
    ProposalGroups props;
    props["nest_a"] = {prop(0.0, 10.0, 0.9)};
    props["nest_b"] = {prop(21.0, 26.0, 0.9)};  // tIoU 5/6 vs second gt
    EvalConfig cfg;
    cfg.tiou_thresholds = {0.5};
    const auto res = evtad::average_recall(props, gts, cfg);
    // Two of three pooled instances are recalled at 0.5.
    CHECK(res.recall[0][0] == Catch::Approx(2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("average recall validates its inputs") {
    GtGroups gts;
    gts["nest_a"] = {};
    CHECK_THROWS_AS(evtad::average_recall({}, gts, {}), std::invalid_argument);
    gts["nest_a"] = {{0.0, 1.0}};
    EvalConfig bad;
    bad.top_n = {};
    CHECK_THROWS_AS(evtad::average_recall({}, gts, bad), std::invalid_argument);
    bad = {};
    bad.tiou_thresholds = {};
    CHECK_THROWS_AS(evtad::average_recall({}, gts, bad), std::invalid_argument);
}

TEST_CASE("recall agrees with the brute-force oracle on random instances") {
    std::mt19937_64 rng(97);
    for (int c = 0; c < 300; ++c) {
        GtGroups gts;
        ProposalGroups props;
        const int n_roi = 1 + static_cast<int>(testutil::pick(rng, 3));
        std::size_t total_gt = 0;
        for (int r = 0; r < n_roi; ++r) {
            const std::string roi = "roi_" + std::to_string(r);
            const int n_gt = static_cast<int>(testutil::pick(rng, 4));
            double t = 0.0;
            for (int g = 0; g < n_gt; ++g) {
                t += testutil::uniform(rng, 0.5, 5.0);
                const double len = testutil::uniform(rng, 0.5, 6.0);
                gts[roi].push_back({t, t + len});
                t += len;
                ++total_gt;
            }
            props[roi] = testutil::random_proposals(
                rng, static_cast<int>(testutil::pick(rng, 8)));
        }
        if (total_gt == 0) continue;
        EvalConfig cfg;
        cfg.top_n = {1, 3, 5};
        const auto res = evtad::average_recall(props, gts, cfg);
        for (std::size_t i = 0; i < cfg.top_n.size(); ++i)
            for (std::size_t j = 0; j < cfg.tiou_thresholds.size(); ++j) {
                const double want = testutil::ref_recall(
                    props, gts, cfg.top_n[i], cfg.tiou_thresholds[j]);
                REQUIRE(res.recall[i][j] == Catch::Approx(want).margin(1e-12));
            }
        // More proposals can only help: recall must be monotone in N.
        for (std::size_t j = 0; j < cfg.tiou_thresholds.size(); ++j) {
            CHECK(res.recall[0][j] <= res.recall[1][j]);
            CHECK(res.recall[1][j] <= res.recall[2][j]);
        }
    }
}

TEST_CASE("ap is 1 for perfect detections and 0 for disjoint ones") {
    GtGroups gts;
    gts["nest_a"] = {{0.0, 10.0}, {20.0, 30.0}};
    const std::vector<Detection> perfect{det("nest_a", 0.0, 10.0, 0.9),
                                         det("nest_a", 20.0, 30.0, 0.8)};
    CHECK(evtad::ap_at_tiou(perfect, gts, 0.5) == 1.0);

    const std::vector<Detection> wrong{det("nest_a", 50.0, 60.0, 0.9)};
    CHECK(evtad::ap_at_tiou(wrong, gts, 0.5) == 0.0);
    CHECK(evtad::ap_at_tiou({}, gts, 0.5) == 0.0);
}

TEST_CASE("a false positive ranked first halves the frozen ap") {
    GtGroups gts;
    gts["nest_a"] = {{0.0, 10.0}};
    const std::vector<Detection> dets{det("nest_a", 50.0, 60.0, 0.9),
                                      det("nest_a", 0.0, 10.0, 0.8)};
    // Rank 1 is a miss, rank 2 a hit: AP = precision at the hit = 1/2.
    CHECK(evtad::ap_at_tiou(dets, gts, 0.5) == Catch::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("each ground truth instance is credited at most once") {
    GtGroups gts;
    gts["nest_a"] = {{0.0, 10.0}};
    const std::vector<Detection> dets{det("nest_a", 0.0, 10.0, 0.9),
                                      det("nest_a", 0.0, 9.0, 0.8)};
    // The second detection overlaps the same, already-matched instance.
    CHECK(evtad::ap_at_tiou(dets, gts, 0.5) == Catch::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("matching is confined to the detection's roi") {
    GtGroups gts;
    gts["nest_a"] = {{0.0, 10.0}};
    gts["nest_b"] = {};
    const std::vector<Detection> dets{det("nest_b", 0.0, 10.0, 0.9)};
    CHECK(evtad::ap_at_tiou(dets, gts, 0.5) == 0.0);
}

TEST_CASE("ap requires ground truth and valid thresholds") {
    GtGroups gts;
    gts["nest_a"] = {};
    CHECK_THROWS_AS(evtad::ap_at_tiou({}, gts, 0.5), std::invalid_argument);
    gts["nest_a"] = {{0.0, 1.0}};
    CHECK_THROWS_AS(evtad::ap_at_tiou({}, gts, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(evtad::ap_at_tiou({}, gts, 1.5), std::invalid_argument);
}

TEST_CASE("ap is invariant under strictly monotone score transforms") {
    std::mt19937_64 rng(103);
    for (int c = 0; c < 100; ++c) {
        GtGroups gts;
        gts["nest_a"] = {{0.0, 10.0}, {20.0, 30.0}, {40.0, 45.0}};
        std::vector<Detection> dets;
        const int n = 1 + static_cast<int>(testutil::pick(rng, 10));
        for (int i = 0; i < n; ++i) {
            const double a = testutil::uniform(rng, 0.0, 45.0);
            dets.push_back(det("nest_a", a, a + testutil::uniform(rng, 0.5, 12.0),
                               testutil::uniform(rng, 0.1, 0.9)));
        }
        const double base = evtad::ap_at_tiou(dets, gts, 0.5);
        auto squeezed = dets;
        for (auto& d : squeezed) d.score = 0.05 + d.score * d.score / 2.0;
        CHECK(evtad::ap_at_tiou(squeezed, gts, 0.5) ==
              Catch::Approx(base).margin(1e-12));
    }
}

TEST_CASE("ap never increases as the overlap threshold tightens") {
    std::mt19937_64 rng(107);
    for (int c = 0; c < 100; ++c) {
        GtGroups gts;
        double t = 0.0;
        for (int g = 0; g < 3; ++g) {
            t += testutil::uniform(rng, 1.0, 4.0);
            const double len = testutil::uniform(rng, 1.0, 8.0);
            gts["nest_a"].push_back({t, t + len});
            t += len;
        }
        std::vector<Detection> dets;
        for (int i = 0; i < 6; ++i) {
            const double a = testutil::uniform(rng, 0.0, t);
            dets.push_back(det("nest_a", a, a + testutil::uniform(rng, 0.5, 8.0),
                               testutil::uniform(rng, 0.0, 1.0)));
        }
        double prev = 1.0;
        for (double thr : {0.1, 0.3, 0.5, 0.7, 0.9}) {
            const double ap = evtad::ap_at_tiou(dets, gts, thr);
            CHECK(ap <= prev + 1e-12);
            prev = ap;
        }
    }
}

TEST_CASE("ap agrees with the greedy oracle on random instances") {
    std::mt19937_64 rng(109);
    for (int c = 0; c < 300; ++c) {
        GtGroups gts;
        std::vector<Detection> dets;
        std::size_t total_gt = 0;
        for (int r = 0; r < 2; ++r) {
            const std::string roi = "roi_" + std::to_string(r);
            gts[roi] = {};
            double t = 0.0;
            const int n_gt = static_cast<int>(testutil::pick(rng, 4));
            for (int g = 0; g < n_gt; ++g) {
                t += testutil::uniform(rng, 0.5, 3.0);
                const double len = testutil::uniform(rng, 0.5, 5.0);
                gts[roi].push_back({t, t + len});
                t += len;
                ++total_gt;
            }
            const int n_det = static_cast<int>(testutil::pick(rng, 6));
            for (int i = 0; i < n_det; ++i) {
                const double a = testutil::uniform(rng, 0.0, 20.0);
                dets.push_back(det(roi, a, a + testutil::uniform(rng, 0.5, 6.0),
                                   testutil::uniform(rng, 0.0, 1.0)));
            }
        }
        if (total_gt == 0) continue;
        for (double thr : {0.3, 0.5}) {
            const double got = evtad::ap_at_tiou(dets, gts, thr);
            const double want = testutil::ref_ap(dets, gts, thr);
            REQUIRE(got == Catch::Approx(want).margin(1e-12));
        }
    }
}

TEST_CASE("interpolated ap uses the precision envelope") {
    GtGroups gts;
    gts["nest_a"] = {{0.0, 10.0}, {20.0, 30.0}};
    // Ranks: FP, TP, TP -> raw precisions 0, 1/2, 2/3.
    const std::vector<Detection> dets{det("nest_a", 50.0, 60.0, 0.9),
                                      det("nest_a", 0.0, 10.0, 0.8),
                                      det("nest_a", 20.0, 30.0, 0.7)};
    CHECK(evtad::ap_at_tiou(dets, gts, 0.5, false) ==
          Catch::Approx((0.5 + 2.0 / 3.0) / 2.0).epsilon(1e-12));
    // Envelope lifts the first hit's precision to 2/3.
    CHECK(evtad::ap_at_tiou(dets, gts, 0.5, true) ==
          Catch::Approx(2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("mean ap averages the per-threshold values") {
    GtGroups gts;
    gts["nest_a"] = {{0.0, 10.0}};
    // One detection with tIoU 0.6 vs gt: counts at 0.1/0.3/0.5, not 0.7.
    const std::vector<Detection> dets{det("nest_a", 0.0, 6.0, 0.9)};
    const auto res = evtad::mean_ap(dets, gts, {});
    REQUIRE(res.ap.size() == 4);
    CHECK(res.ap[0] == 1.0);
    CHECK(res.ap[2] == 1.0);
    CHECK(res.ap[3] == 0.0);
    CHECK(res.mean == Catch::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("per-roi report isolates each roi and flags empty ones") {
    evtad::AnnotationSet ann;
    ann.rois = {{"nest_a", 0, 0, 2, 2}, {"nest_b", 2, 0, 2, 2}, {"nest_c", 4, 0, 2, 2}};
    ann.instances = {{"nest_a", 0, 10000000, "ED"},
                     {"nest_b", 0, 10000000, "ED"}};
    const auto gts = evtad::gt_groups_from_annotations(ann);
    REQUIRE(gts.size() == 3);
    REQUIRE(gts.at("nest_c").empty());

    const std::vector<Detection> dets{det("nest_a", 0.0, 10.0, 0.9)};
    const auto rows = evtad::per_roi_report(dets, gts, {});
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].roi_id == "nest_a");
    CHECK(rows[0].has_gt);
    CHECK(rows[0].mean_ap == 1.0);
    CHECK(rows[1].roi_id == "nest_b");
    CHECK(rows[1].mean_ap == 0.0);  // gt present, nothing found
    CHECK(rows[2].roi_id == "nest_c");
    CHECK_FALSE(rows[2].has_gt);

    std::ostringstream csv;
    evtad::write_per_roi_csv(csv, rows, {});
    const std::string text = csv.str();
    CHECK(text.find("roi_id,n_gt") == 0);
    CHECK(text.find("nest_c,0,n/a") != std::string::npos);
    CHECK(text.find("nest_a,1,1") != std::string::npos);
}

TEST_CASE("detection groups split by roi id") {
    const std::vector<Detection> dets{det("b", 0.0, 1.0, 0.5), det("a", 0.0, 1.0, 0.5),
                                      det("b", 2.0, 3.0, 0.5)};
    const auto groups = evtad::proposal_groups_from_detections(dets);
    REQUIRE(groups.size() == 2);
    CHECK(groups.at("a").size() == 1);
    CHECK(groups.at("b").size() == 2);
}
