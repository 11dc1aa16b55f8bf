#include "minidet/eval.hpp"

#include <algorithm>
#include <numeric>
#include <set>

namespace minidet {

namespace {

// Indices into dets, descending score, ties by input index.
std::vector<int> score_order(const std::vector<Detection>& dets) {
    std::vector<int> order(dets.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return dets[static_cast<std::size_t>(a)].score > dets[static_cast<std::size_t>(b)].score;
    });
    return order;
}

// Best unmatched candidate for one detection; same_class narrows to the
// detection's class. Ties in IoU go to the lowest ground-truth index.
int best_candidate(const Detection& d, const std::vector<GroundTruth>& gts,
                   const std::vector<bool>& matched, double iou_threshold, bool same_class) {
    int best = -1;
    double best_iou = 0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
        const GroundTruth& gt = gts[g];
        if (matched[g] || gt.ignore_flag) continue;
        if (gt.image_id != d.image_id) continue;
        if (same_class && gt.class_id != d.class_id) continue;
        const double v = iou(d.box, gt.box);
        if (v >= iou_threshold && v > best_iou) {
            best_iou = v;
            best = static_cast<int>(g);
        }
    }
    return best;
}

}  // namespace

MatchResult match_detections(const std::vector<Detection>& dets,
                             const std::vector<GroundTruth>& gts, double iou_threshold) {
    MatchResult r;
    r.gt_matched.assign(gts.size(), false);
    for (const GroundTruth& g : gts)
        if (!g.ignore_flag) ++r.num_gt;
    for (int di : score_order(dets)) {
        const Detection& d = dets[static_cast<std::size_t>(di)];
        const int g = best_candidate(d, gts, r.gt_matched, iou_threshold, true);
        if (g >= 0) r.gt_matched[static_cast<std::size_t>(g)] = true;
        r.labels.push_back({di, g >= 0, g});
    }
    return r;
}

std::pair<double, double> precision_recall(long tp, long fp, long fn) {
    const double p = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    const double r = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    return {p, r};
}

double average_precision(const std::vector<bool>& tp_sequence, int total_gt, bool interp_101) {
    if (total_gt < 1) throw EvalError("average_precision needs at least one ground truth");
    const std::size_t n = tp_sequence.size();
    std::vector<double> rec(n), prec(n);
    long tp = 0;
    for (std::size_t k = 0; k < n; ++k) {
        if (tp_sequence[k]) ++tp;
        rec[k] = static_cast<double>(tp) / total_gt;
        prec[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
    }
    // monotone non-increasing envelope from the right
    std::vector<double> env(prec);
    for (std::size_t k = n; k-- > 1;) env[k - 1] = std::max(env[k - 1], env[k]);

    if (interp_101) {
        double sum = 0;
        for (int t = 0; t <= 100; ++t) {
            const double r = t / 100.0;
            double best = 0;
            for (std::size_t k = 0; k < n; ++k)
                if (rec[k] >= r) {
                    best = env[k];
                    break;
                }
            sum += best;
        }
        return sum / 101.0;
    }
    double ap = 0;
    double prev = 0;
    for (std::size_t k = 0; k < n; ++k) {
        if (rec[k] > prev) {
            ap += (rec[k] - prev) * env[k];
            prev = rec[k];
        }
    }
    return ap;
}

EvalReport map_at(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
                  double iou_threshold, bool interp_101) {
    std::set<int> classes;
    for (const GroundTruth& g : gts)
        if (!g.ignore_flag) classes.insert(g.class_id);
    if (classes.empty()) throw EvalError("no usable ground truth");

    EvalReport report;
    for (int c : classes) {
        std::vector<int> det_idx;
        for (std::size_t i = 0; i < dets.size(); ++i)
            if (dets[i].class_id == c) det_idx.push_back(static_cast<int>(i));
        std::stable_sort(det_idx.begin(), det_idx.end(), [&](int a, int b) {
            return dets[static_cast<std::size_t>(a)].score >
                   dets[static_cast<std::size_t>(b)].score;
        });

        ClassEval ce;
        ce.class_id = c;
        ce.num_det = static_cast<int>(det_idx.size());
        std::vector<bool> matched(gts.size(), false);
        for (const GroundTruth& g : gts)
            if (!g.ignore_flag && g.class_id == c) ++ce.num_gt;

        std::vector<bool> seq;
        seq.reserve(det_idx.size());
        for (int di : det_idx) {
            const Detection& d = dets[static_cast<std::size_t>(di)];
            const int g = best_candidate(d, gts, matched, iou_threshold, true);
            if (g >= 0) {
                matched[static_cast<std::size_t>(g)] = true;
                ++ce.tp;
            }
            seq.push_back(g >= 0);
            PRPoint pt;
            pt.score = d.score;
            pt.recall = ce.num_gt > 0 ? static_cast<double>(ce.tp) / ce.num_gt : 0.0;
            pt.precision = static_cast<double>(ce.tp) / static_cast<double>(seq.size());
            ce.curve.push_back(pt);
        }
        ce.ap = ce.num_gt > 0 ? average_precision(seq, ce.num_gt, interp_101) : 0.0;

        report.tp += ce.tp;
        report.fp += ce.num_det - ce.tp;
        report.fn += ce.num_gt - ce.tp;
        report.per_class.emplace(c, std::move(ce));
    }
    for (const Detection& d : dets)
        if (!classes.count(d.class_id)) ++report.fp;

    double sum = 0;
    for (const auto& [c, ce] : report.per_class) sum += ce.ap;
    report.map = sum / static_cast<double>(report.per_class.size());
    const auto [p, r] = precision_recall(report.tp, report.fp, report.fn);
    report.precision = p;
    report.recall = r;
    return report;
}

double map_range(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts) {
    double sum = 0;
    for (int i = 0; i < 10; ++i) sum += map_at(dets, gts, (50 + 5 * i) / 100.0).map;
    return sum / 10.0;
}

ConfusionMatrix confusion_matrix(const std::vector<Detection>& dets,
                                 const std::vector<GroundTruth>& gts, double iou_threshold,
                                 double score_threshold, int num_classes) {
    std::vector<int> kept;
    for (std::size_t i = 0; i < dets.size(); ++i)
        if (dets[i].score >= score_threshold) kept.push_back(static_cast<int>(i));

    int k = num_classes;
    if (k == 0) {
        for (int di : kept) k = std::max(k, dets[static_cast<std::size_t>(di)].class_id + 1);
        for (const GroundTruth& g : gts)
            if (!g.ignore_flag) k = std::max(k, g.class_id + 1);
    }
    ConfusionMatrix m;
    m.num_classes = k;
    m.counts.assign(static_cast<std::size_t>((k + 1) * (k + 1)), 0);

    const auto check_class = [&](int c, const char* what) {
        if (c < 0 || c >= k)
            throw EvalError(std::string(what) + " class id " + std::to_string(c) +
                            " outside [0, " + std::to_string(k) + ")");
    };

    std::stable_sort(kept.begin(), kept.end(), [&](int a, int b) {
        return dets[static_cast<std::size_t>(a)].score > dets[static_cast<std::size_t>(b)].score;
    });
    std::vector<bool> matched(gts.size(), false);
    for (int di : kept) {
        const Detection& d = dets[static_cast<std::size_t>(di)];
        check_class(d.class_id, "detection");
        const int g = best_candidate(d, gts, matched, iou_threshold, false);
        if (g >= 0) {
            matched[static_cast<std::size_t>(g)] = true;
            check_class(gts[static_cast<std::size_t>(g)].class_id, "ground-truth");
            m.at(gts[static_cast<std::size_t>(g)].class_id, d.class_id) += 1;
        } else {
            m.at(k, d.class_id) += 1;  // background row: spurious detection
        }
    }
    for (std::size_t g = 0; g < gts.size(); ++g) {
        if (gts[g].ignore_flag || matched[g]) continue;
        check_class(gts[g].class_id, "ground-truth");
        m.at(gts[g].class_id, k) += 1;  // background column: miss
    }
    return m;
}

}  // namespace minidet
