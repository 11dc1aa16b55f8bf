#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "minidet/losses.hpp"

namespace minidet {

class EvalError : public std::runtime_error {
public:
    explicit EvalError(const std::string& what) : std::runtime_error(what) {}
};

struct Detection {
    std::string image_id;
    int class_id = 0;
    Box box;
    double score = 0.0;
};

struct GroundTruth {
    std::string image_id;
    int class_id = 0;
    Box box;
    bool ignore_flag = false;
};

// One entry per detection, in descending-score order (ties by input index).
// gt_index is -1 for false positives.
struct DetLabel {
    int det_index = -1;
    bool tp = false;
    int gt_index = -1;
};

struct MatchResult {
    std::vector<DetLabel> labels;
    std::vector<bool> gt_matched;  // aligned with the input gts; ignored stay false
    int num_gt = 0;                // non-ignored count
};

// Greedy per-class matching over one image's boxes: descending score, each
// detection takes the highest-IoU unmatched same-class ground truth with
// IoU >= threshold. Ignored ground truths neither match nor count toward
// num_gt.
MatchResult match_detections(const std::vector<Detection>& dets,
                             const std::vector<GroundTruth>& gts, double iou_threshold);

// Zero denominators yield 0 by convention.
std::pair<double, double> precision_recall(long tp, long fp, long fn);

// tp_sequence is the TP/FP labeling in descending-score order. All-point
// interpolation by default: the precision envelope is made monotone
// non-increasing and integrated over recall. interp_101 samples the envelope
// at recalls 0.00, 0.01, ..., 1.00 instead.
double average_precision(const std::vector<bool>& tp_sequence, int total_gt,
                         bool interp_101 = false);

struct PRPoint {
    double score = 0;
    double recall = 0;
    double precision = 0;
};

struct ClassEval {
    int class_id = 0;
    int num_gt = 0;
    int num_det = 0;
    int tp = 0;
    double ap = 0;
    std::vector<PRPoint> curve;
};

struct EvalReport {
    std::map<int, ClassEval> per_class;  // classes present in ground truth
    double map = 0;                      // mean AP over per_class
    double precision = 0;                // micro, all detections counted
    double recall = 0;
    long tp = 0, fp = 0, fn = 0;
};

// Per-class AP at one IoU threshold, averaged over the classes present in the
// (non-ignored) ground truth. Detections of absent classes count as false
// positives in the micro precision but join no AP. Throws EvalError when no
// usable ground truth exists.
EvalReport map_at(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
                  double iou_threshold, bool interp_101 = false);

// Mean of map_at over thresholds 0.50, 0.55, ..., 0.95.
double map_range(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts);

// (num_classes+1)^2 counts; row = true class, column = predicted class, the
// last index is background (unmatched).
struct ConfusionMatrix {
    int num_classes = 0;
    std::vector<long> counts;

    long& at(int row, int col) { return counts[static_cast<std::size_t>(row * (num_classes + 1) + col)]; }
    long at(int row, int col) const { return counts[static_cast<std::size_t>(row * (num_classes + 1) + col)]; }
};

// Class-agnostic greedy box matching over detections with score >=
// score_threshold. num_classes = 0 sizes the matrix from the largest class id
// seen.
ConfusionMatrix confusion_matrix(const std::vector<Detection>& dets,
                                 const std::vector<GroundTruth>& gts, double iou_threshold,
                                 double score_threshold, int num_classes = 0);

}  // namespace minidet
