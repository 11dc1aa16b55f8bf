// Acceptance gate: one self-contained check per release criterion, each
// printing a single [PASS]/[FAIL] line. Exit 0 only when all nine hold.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "minidet/blocks.hpp"
#include "minidet/data_io.hpp"
#include "minidet/eval.hpp"
#include "minidet/losses.hpp"
#include "minidet/neck.hpp"
#include "minidet/rng.hpp"
#include "minidet/sim.hpp"
#include "minidet/tensor.hpp"

using namespace minidet;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string g_note;  // first failing condition of the current criterion

bool fail(const std::string& note) {
    if (g_note.empty()) g_note = note;
    return false;
}

#define NEED(cond)                       \
    do {                                 \
        if (!(cond)) return fail(#cond); \
    } while (0)

Tensor random_tensor(Shape s, std::uint64_t seed) {
    ParamRng rng(seed);
    Tensor t(s);
    for (long i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform(-1.0, 1.0);
    return t;
}

// --- 1: loss identities at identical boxes ----------------------------------

bool c1() {
    const Box boxes[] = {{0, 0, 1, 1}, {-2.5, 0.25, 3.5, 9.75}, {10, 20, 10.125, 20.0625}};
    for (const Box& b : boxes) {
        NEED(std::abs(ciou_loss(b, b)) <= 1e-9);
        NEED(std::abs(eiou_loss(b, b)) <= 1e-9);
        WiouState st;
        const LossParams p;
        NEED(std::abs(wiou_loss(b, b, WiouVersion::v1, p, st)) <= 1e-9);
        const PiouTerms t = piou_penalty(b, b);
        NEED(std::abs(t.P) <= 1e-9);
        NEED(std::abs(t.q - 1.0) <= 1e-9);
    }
    return true;
}

// --- 2: analytic gradients vs central differences ---------------------------

bool c2() {
    const LossId ids[] = {LossId::ciou,    LossId::eiou,      LossId::wiou_v1,
                          LossId::wiou_v3, LossId::piou_base, LossId::piou};
    for (LossId id : ids) {
        const GradCheckResult r = grad_check(id, 1000, 42);
        NEED(r.pairs == 1000);
        if (!r.passed(1e-4))
            return fail(loss_id_name(id) + " worst rel err " + std::to_string(r.worst_rel_err));
    }
    return true;
}

// --- 3: penalty-only convergence vs CIoU enlargement ------------------------

bool c3() {
    const Trajectory penalty = simulate(default_scenario(LossId::piou, false));
    NEED(!penalty.truncated && penalty.error.empty());
    const EnlargementReport pr = detect_enlargement(penalty, 1.05);
    bool reached = false;
    for (const TrajectoryPoint& pt : penalty.points)
        if (pt.step <= 150 && pt.iou >= 0.99) reached = true;
    NEED(reached);
    NEED(pr.max_ratio <= 1.05);

    const Trajectory ciou = simulate(default_scenario(LossId::ciou));
    NEED(!ciou.truncated && ciou.error.empty());
    const EnlargementReport cr = detect_enlargement(ciou, 1.05);
    NEED(cr.event);
    NEED(cr.first_step >= 0 && cr.first_step <= 75);
    NEED(cr.max_ratio > 1.05);
    NEED(cr.final_iou < pr.final_iou);
    return true;
}

// --- 4: hand-computed loss values -------------------------------------------

bool c4() {
    NEED(std::abs(iou({0, 0, 2, 2}, {1, 1, 3, 3}) - 1.0 / 7.0) <= 1e-6);
    NEED(std::abs(ciou_loss({1, 1, 3, 3}, {0, 0, 4, 4}) - 0.75) <= 1e-6);
    NEED(std::abs(eiou_loss({1, 1, 3, 3}, {0, 0, 4, 4}) - 1.25) <= 1e-6);

    const PiouTerms t = piou_penalty({0, 0, 2, 2}, {1, 1, 3, 3});
    NEED(std::abs(t.P - 0.5) <= 1e-6);
    NEED(std::abs(t.q - 0.6065306597126334) <= 1e-6);
    NEED(std::abs(piou_loss({0, 0, 2, 2}, {1, 1, 3, 3}) - 0.10071273468192914) <= 1e-6);
    NEED(std::abs(piou_loss({1, 1, 3, 3}, {1, 1, 3, 3}) - (-0.8529399312556383)) <= 1e-6);
    NEED(std::abs(piou_attention(1.2) - 0.8529399312556383) <= 1e-6);
    return true;
}

// --- 5: EMA shape, softmax normalization, gate bypass -----------------------

bool c5() {
    const struct {
        long n, c, h, w;
        int g;
    } grid[] = {{1, 8, 6, 6, 2},  {2, 16, 8, 8, 8}, {1, 32, 5, 7, 4},
                {3, 4, 4, 4, 1},  {2, 12, 6, 5, 3}, {1, 24, 10, 3, 6}};
    for (const auto& cfg : grid) {
        ParamRng rng(static_cast<std::uint64_t>(cfg.c * 100 + cfg.g));
        const EMABlock block = make_ema(static_cast<int>(cfg.c), cfg.g, rng);
        const Tensor x = random_tensor({cfg.n, cfg.c, cfg.h, cfg.w},
                                       static_cast<std::uint64_t>(cfg.c + cfg.h));
        NEED(block.forward(x).shape() == x.shape());
    }

    ParamRng rng(17);
    const EMABlock block = make_ema(24, 4, rng);
    const Tensor x = random_tensor({3, 24, 5, 5}, 18);
    EmaDebug dbg;
    ema_forward(block, x, &dbg);
    NEED(dbg.softmax_gated.size() == 3 * 4);
    NEED(dbg.softmax_conv3.size() == 3 * 4);
    for (const auto* branch : {&dbg.softmax_gated, &dbg.softmax_conv3})
        for (const auto& v : *branch) {
            double sum = 0;
            for (double e : v) sum += e;
            NEED(std::abs(sum - 1.0) <= 1e-9);
        }

    ParamRng ra(22), rb(22);
    C2fEMABlock attn = make_c2f_ema(16, 16, 1, true, 4, ra);
    const C2fBlock plain = make_c2f(16, 16, 1, true, rb);
    std::fill(attn.ema.gate_weight.raw().begin(), attn.ema.gate_weight.raw().end(), 0.0);
    std::fill(attn.ema.gate_bias.begin(), attn.ema.gate_bias.end(), 30.0);
    std::fill(attn.ema.conv3_weight.raw().begin(), attn.ema.conv3_weight.raw().end(), 0.0);
    std::fill(attn.ema.conv3_bias.begin(), attn.ema.conv3_bias.end(), 60.0);
    const Tensor xb = random_tensor({2, 16, 6, 6}, 23);
    const Tensor ya = attn.forward(xb);
    const Tensor yp = plain.forward(xb);
    NEED(ya.shape() == yp.shape());
    for (long i = 0; i < ya.numel(); ++i) NEED(std::abs(ya.data()[i] - yp.data()[i]) <= 1e-9);
    return true;
}

// --- 6: skip-link source counts and gradient distance -----------------------

NeckGraphSpec chain_spec(int n, LinkPolicy policy) {
    NeckGraphSpec s;
    s.name = "chain";
    s.levels = {{"P3", 8, 8}};
    for (int k = 0; k < n; ++k) {
        NodeSpec nd;
        nd.id = "n" + std::to_string(k);
        nd.level = 0;
        nd.layer = k;
        nd.op = FusionOp::conv3x3;
        nd.out_channels = 8;
        if (k == 0)
            nd.in_channels = 8;
        else if (policy == LinkPolicy::log2n)
            nd.in_channels = 8 * static_cast<int>(log2n_sources(k).size());
        else
            nd.in_channels = 8 * k;  // dense
        s.nodes.push_back(nd);
    }
    s.policy = policy;
    s.head_nodes = {"n" + std::to_string(n - 1)};
    return s;
}

int ceil_log2(int n) {
    int c = 0;
    while ((1 << c) < n) ++c;
    return c;
}

bool c6() {
    for (int l = 1; l <= 64; ++l) {
        const int expect = static_cast<int>(std::floor(std::log2(static_cast<double>(l)))) + 1;
        NEED(static_cast<int>(log2n_sources(l).size()) == expect);
    }
    for (int n = 2; n <= 64; ++n) {
        NEED(shortest_gradient_distance(chain_spec(n, LinkPolicy::log2n)) <= 1 + ceil_log2(n));
        NEED(shortest_gradient_distance(chain_spec(n, LinkPolicy::dense)) == 1);
    }
    return true;
}

// --- 7: four-head neck forward at 640x640 -----------------------------------

bool c7() {
    const NeckGraphSpec spec = preset_spec("sod");
    NEED(validate_channels(spec).empty());

    const NeckGraph graph = build_sod_neck(16, 5);
    Tensor image({1, 3, 640, 640});
    for (long i = 0; i < image.numel(); ++i)
        image.data()[i] = 0.1 + 0.8 * static_cast<double>(i % 7) / 7.0;

    const auto t0 = Clock::now();
    const std::vector<HeadOutput> heads = neck_forward(graph, image);
    const double fwd = seconds_since(t0);

    NEED(heads.size() == 4);
    const int strides[4] = {4, 8, 16, 32};
    const long sizes[4] = {160, 80, 40, 20};
    for (int i = 0; i < 4; ++i) {
        NEED(heads[static_cast<std::size_t>(i)].stride == strides[i]);
        NEED((heads[static_cast<std::size_t>(i)].cls.shape() == Shape{1, 10, sizes[i], sizes[i]}));
        NEED((heads[static_cast<std::size_t>(i)].box.shape() == Shape{1, 4, sizes[i], sizes[i]}));
    }
    if (fwd >= 2.0) return fail("forward took " + std::to_string(fwd) + "s");
    return true;
}

// --- 8: evaluator vs brute-force recomputation ------------------------------

// Integral of the monotone precision envelope, written out again from the
// documented definition so agreement is arithmetic, not shared code.
double oracle_ap(const std::vector<bool>& tp_sequence, int total_gt) {
    const std::size_t n = tp_sequence.size();
    std::vector<double> rec(n), prec(n);
    long tp = 0;
    for (std::size_t k = 0; k < n; ++k) {
        if (tp_sequence[k]) ++tp;
        rec[k] = static_cast<double>(tp) / total_gt;
        prec[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
    }
    std::vector<double> env(prec);
    for (std::size_t k = n; k-- > 1;) env[k - 1] = std::max(env[k - 1], env[k]);
    double ap = 0, prev = 0;
    for (std::size_t k = 0; k < n; ++k)
        if (rec[k] > prev) {
            ap += (rec[k] - prev) * env[k];
            prev = rec[k];
        }
    return ap;
}

struct OracleClass {
    int num_gt = 0;
    int tp = 0;
    std::vector<bool> seq;
};

// Exhaustive greedy replay for one class: repeatedly select the unprocessed
// detection with the highest score (ties by input index), then scan every
// ground truth for its best still-unmatched candidate.
OracleClass oracle_match_class(const std::vector<Detection>& dets,
                               const std::vector<GroundTruth>& gts, int cls, double thr) {
    OracleClass oc;
    for (const GroundTruth& g : gts)
        if (!g.ignore_flag && g.class_id == cls) ++oc.num_gt;

    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < dets.size(); ++i)
        if (dets[i].class_id == cls) idx.push_back(i);

    std::vector<bool> used(idx.size(), false), taken(gts.size(), false);
    for (std::size_t round = 0; round < idx.size(); ++round) {
        std::size_t pick = idx.size();
        for (std::size_t j = 0; j < idx.size(); ++j) {
            if (used[j]) continue;
            if (pick == idx.size() || dets[idx[j]].score > dets[idx[pick]].score) pick = j;
        }
        used[pick] = true;
        const Detection& d = dets[idx[pick]];

        int best = -1;
        double best_iou = 0;
        for (std::size_t g = 0; g < gts.size(); ++g) {
            if (taken[g] || gts[g].ignore_flag) continue;
            if (gts[g].image_id != d.image_id || gts[g].class_id != cls) continue;
            const double v = iou(d.box, gts[g].box);
            if (v >= thr && v > best_iou) {
                best_iou = v;
                best = static_cast<int>(g);
            }
        }
        if (best >= 0) {
            taken[static_cast<std::size_t>(best)] = true;
            ++oc.tp;
        }
        oc.seq.push_back(best >= 0);
    }
    return oc;
}

bool oracle_agrees(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
                   double thr) {
    std::set<int> classes;
    for (const GroundTruth& g : gts)
        if (!g.ignore_flag) classes.insert(g.class_id);
    NEED(!classes.empty());

    const EvalReport rep = map_at(dets, gts, thr);
    NEED(rep.per_class.size() == classes.size());

    long tp = 0, fp = 0, fn = 0;
    double sum = 0;
    for (int c : classes) {
        const OracleClass oc = oracle_match_class(dets, gts, c, thr);
        const auto it = rep.per_class.find(c);
        NEED(it != rep.per_class.end());
        const ClassEval& ce = it->second;
        NEED(ce.num_gt == oc.num_gt);
        NEED(ce.tp == oc.tp);
        NEED(ce.num_det == static_cast<int>(oc.seq.size()));
        const double ap = oracle_ap(oc.seq, oc.num_gt);
        NEED(ce.ap == ap);  // exact: same documented arithmetic, fresh code
        sum += ap;
        tp += oc.tp;
        fp += static_cast<long>(oc.seq.size()) - oc.tp;
        fn += oc.num_gt - oc.tp;
    }
    for (const Detection& d : dets)
        if (!classes.count(d.class_id)) ++fp;
    NEED(rep.tp == tp);
    NEED(rep.fp == fp);
    NEED(rep.fn == fn);
    NEED(rep.map == sum / static_cast<double>(classes.size()));
    return true;
}

Detection mk_det(const char* img, int cls, Box b, double score) { return {img, cls, b, score}; }

GroundTruth mk_gt(const char* img, int cls, Box b, bool ignore = false) {
    return {img, cls, b, ignore};
}

bool c8() {
    // every fixture here has <= 6 detections and <= 6 ground truths
    std::mt19937 rng(4242);
    const char* images[] = {"a", "b"};
    const double scores[] = {0.25, 0.5, 0.75, 1.0};
    auto rand_box = [&]() {
        const double x = static_cast<double>(rng() % 5) * 2.0;
        const double y = static_cast<double>(rng() % 5) * 2.0;
        const double w = 2.0 + static_cast<double>(rng() % 3) * 2.0;
        const double h = 2.0 + static_cast<double>(rng() % 3) * 2.0;
        return Box{x, y, x + w, y + h};
    };
    for (int trial = 0; trial < 400; ++trial) {
        std::vector<GroundTruth> gts;
        const int ng = 1 + static_cast<int>(rng() % 6);
        for (int i = 0; i < ng; ++i)
            gts.push_back(mk_gt(images[rng() % 2], 1 + static_cast<int>(rng() % 2), rand_box(),
                                i > 0 && rng() % 5 == 0));
        std::vector<Detection> dets;
        const int nd = static_cast<int>(rng() % 7);
        for (int i = 0; i < nd; ++i) {
            Box b = rng() % 2 == 0 && !gts.empty() ? gts[rng() % gts.size()].box : rand_box();
            if (rng() % 3 == 0) b.x2 += 1.0;  // partial overlaps
            dets.push_back(
                mk_det(images[rng() % 2], 1 + static_cast<int>(rng() % 3), b, scores[rng() % 4]));
        }
        for (double thr : {0.3, 0.5, 0.75})
            if (!oracle_agrees(dets, gts, thr))
                return fail("trial " + std::to_string(trial) + " thr " + std::to_string(thr));
    }

    // (TP, FP, TP) over two ground truths
    const std::vector<GroundTruth> g2 = {mk_gt("a", 1, {0, 0, 10, 10}),
                                         mk_gt("a", 1, {20, 20, 30, 30})};
    const std::vector<Detection> d3 = {mk_det("a", 1, {0, 0, 10, 10}, 0.9),
                                       mk_det("a", 1, {40, 40, 50, 50}, 0.8),
                                       mk_det("a", 1, {20, 20, 30, 30}, 0.7)};
    const MatchResult m = match_detections(d3, g2, 0.5);
    std::vector<bool> seq;
    for (const DetLabel& l : m.labels) seq.push_back(l.tp);
    NEED(seq == std::vector<bool>({true, false, true}));
    NEED(std::abs(average_precision(seq, 2) - 5.0 / 6.0) <= 1e-9);

    // graded-overlap fixture so the 10 thresholds disagree
    const std::vector<GroundTruth> gr = {mk_gt("a", 1, {0, 0, 10, 10}),
                                         mk_gt("a", 1, {20, 0, 30, 10}),
                                         mk_gt("b", 2, {0, 0, 8, 8})};
    const std::vector<Detection> dr = {mk_det("a", 1, {0, 1, 10, 10}, 0.95),
                                       mk_det("a", 1, {20, 3, 30, 10}, 0.8),
                                       mk_det("b", 2, {0, 0, 8, 6}, 0.7),
                                       mk_det("a", 2, {50, 50, 60, 60}, 0.6)};
    double mean = 0;
    for (int i = 0; i < 10; ++i) mean += map_at(dr, gr, (50 + 5 * i) / 100.0).map;
    mean /= 10.0;
    NEED(std::abs(map_range(dr, gr) - mean) <= 1e-12);
    return true;
}

// --- 9: parser/serializer round-trips ---------------------------------------

bool c9() {
    const std::string ann =
        "1,2,3,4,0.9,1,0,0\n"
        "10,20,30,40,0.3333333333333333,4,1,2\n"
        "0,0,5,5,0,0,0,0\n";
    const AnnotationParse first = parse_annotations(ann);
    NEED(first.diagnostics.empty());
    NEED(serialize_annotations(first.lines) == ann);
    const AnnotationParse again = parse_annotations(serialize_annotations(first.lines));
    NEED(again.lines == first.lines);

    const std::vector<Detection> dets = {
        {"img_a", 1, {1.5, 2.25, 30.125, 44.5}, 0.9},
        {"img_b", 4, {0.0, 0.0, 10.0, 10.0}, 0.123456},
    };
    const std::string csv = write_detections(dets);
    const DetectionParse back = read_detections(csv);
    NEED(back.header_error.empty());
    NEED(back.diagnostics.empty());
    NEED(write_detections(back.detections) == csv);

    SimConfig cfg = default_scenario(LossId::piou, false);
    cfg.steps = 12;
    const Trajectory t = simulate(cfg);
    const Trajectory u = parse_trajectory_csv(trajectory_csv(t));
    NEED(u.error.empty());
    NEED(u.points.size() == t.points.size());
    for (std::size_t i = 0; i < t.points.size(); ++i) {
        const TrajectoryPoint& a = t.points[i];
        const TrajectoryPoint& b = u.points[i];
        NEED(a.step == b.step);
        NEED(std::abs(a.box.x1 - b.box.x1) <= 1e-8);
        NEED(std::abs(a.box.y1 - b.box.y1) <= 1e-8);
        NEED(std::abs(a.box.x2 - b.box.x2) <= 1e-8);
        NEED(std::abs(a.box.y2 - b.box.y2) <= 1e-8);
        NEED(std::abs(a.loss - b.loss) <= 1e-8);
        NEED(std::abs(a.iou - b.iou) <= 1e-8);
        NEED(std::abs(a.area_ratio - b.area_ratio) <= 1e-8);
    }
    return true;
}

}  // namespace

int main() {
    struct Entry {
        int num;
        const char* name;
        bool (*fn)();
        double limit_s;  // 0 = no wall-clock budget
    };
    const Entry entries[] = {
        {1, "loss identities at identical boxes", c1, 1.0},
        {2, "analytic gradients vs central differences", c2, 10.0},
        {3, "penalty-only convergence vs CIoU enlargement", c3, 5.0},
        {4, "hand-computed loss values", c4, 0.0},
        {5, "EMA shape, softmax normalization, gate bypass", c5, 0.0},
        {6, "skip-link source counts and gradient distance", c6, 1.0},
        {7, "four-head neck forward at 640x640", c7, 0.0},
        {8, "evaluator vs brute-force recomputation", c8, 0.0},
        {9, "parser/serializer round-trips", c9, 0.0},
    };

    int failures = 0;
    for (const Entry& e : entries) {
        g_note.clear();
        const auto t0 = Clock::now();
        bool ok = false;
        try {
            ok = e.fn();
        } catch (const std::exception& ex) {
            g_note = std::string("exception: ") + ex.what();
        }
        const double secs = seconds_since(t0);
        if (ok && e.limit_s > 0 && secs >= e.limit_s) {
            ok = false;
            g_note = "runtime " + std::to_string(secs) + "s over budget";
        }
        std::printf("[%s] %d %s (%.2fs)%s%s\n", ok ? "PASS" : "FAIL", e.num, e.name, secs,
                    g_note.empty() ? "" : " -- ", g_note.c_str());
        if (!ok) ++failures;
    }
    if (failures == 0)
        std::printf("acceptance: all 9 criteria passed\n");
    else
        std::printf("acceptance: %d of 9 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
