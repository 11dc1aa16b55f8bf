#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace minidet {

struct Box {
    double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

    double w() const { return x2 - x1; }
    double h() const { return y2 - y1; }
    double area() const { return w() * h(); }
    double cx() const { return 0.5 * (x1 + x2); }
    double cy() const { return 0.5 * (y1 + y2); }
};

class LossError : public std::runtime_error {
public:
    explicit LossError(const std::string& what) : std::runtime_error(what) {}
};

struct LossParams {
    double lambda = 1.2;        // PIoU attention scale
    double delta = 3.0;         // WIoU v3 focusing
    double alpha = 1.9;         // WIoU v3 focusing
    double wiou_momentum = 0.01;
    bool ciou_alpha_weighting = false;  // scale v by v/((1-IoU)+v), detached
    bool piou_nonneg_variant = false;   // base L = 1-IoU+1-e^{-P^2}
};

// Running mean of L_IoU across observed pairs. beta() is evaluated against
// the mean *before* the current observation; with no observations beta = 1.
struct WiouState {
    double mean = 0.0;
    long count = 0;

    double beta(double l_iou) const;
    void observe(double l_iou, double momentum);
};

struct PiouTerms {
    double dw1 = 0, dw2 = 0, dh1 = 0, dh2 = 0;
    double P = 0;
    double q = 1;  // e^{-P}
    double u = 0;  // attention value u(lambda*q)
};

enum class WiouVersion { v1, v3 };

// Loss selectors for gradient APIs and the regression simulator.
// piou = attention-weighted, piou_base = printed base L,
// piou_penalty = the penalty term 1 - e^{-P^2} alone.
enum class LossId { ciou, eiou, wiou_v1, wiou_v3, piou_base, piou, piou_penalty };

bool parse_loss_id(const std::string& name, LossId& out);
std::string loss_id_name(LossId id);

double iou(const Box& a, const Box& b);
double ciou_loss(const Box& a, const Box& gt, const LossParams& p = {});
double eiou_loss(const Box& a, const Box& gt);
double wiou_loss(const Box& a, const Box& gt, WiouVersion version, const LossParams& p,
                 WiouState& state);
PiouTerms piou_penalty(const Box& a, const Box& gt, const LossParams& p = {});
double piou_loss(const Box& a, const Box& gt, const LossParams& p = {});

// u(x) = 3x * e^{-x^2}, the PIoU attention function.
double piou_attention(double x);

// Analytic d(loss)/d(x1,y1,x2,y2) of the anchor. Detached quantities (WIoU v3
// beta, CIoU alpha weight) are frozen at the evaluation point; `state` is read
// but never advanced, and is only consulted for wiou_v3.
std::array<double, 4> loss_gradient(LossId id, const Box& a, const Box& gt,
                                    const LossParams& p = {}, const WiouState* state = nullptr);

// Central differences of the loss with the same detached-term freezing, so the
// two gradient paths approximate the same function.
std::array<double, 4> finite_diff_gradient(LossId id, const Box& a, const Box& gt,
                                           const LossParams& p = {}, double step = 1e-6,
                                           const WiouState* state = nullptr);

// Loss value with frozen detached terms; the function the two gradients differentiate.
double loss_value(LossId id, const Box& a, const Box& gt, const LossParams& p = {},
                  const WiouState* state = nullptr);

// --- gradient check harness -------------------------------------------------

struct GradCheckResult {
    int pairs = 0;
    double worst_rel_err = 0.0;
    Box worst_anchor, worst_gt;
    bool passed(double tol) const { return worst_rel_err <= tol; }
};

// Seeded random pairs, resampled away from non-differentiable boundaries
// (coordinate coincidences and intersection/enclosure zero crossings within
// 1e-5). Relative error = ||ga-gf||_inf / max(||ga||_inf, ||gf||_inf, 1e-4);
// the floor keeps near-zero-gradient tail configurations from amplifying
// finite-difference cancellation noise.
GradCheckResult grad_check(LossId id, int pairs, std::uint64_t seed, double step = 1e-6);

}  // namespace minidet
