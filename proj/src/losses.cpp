#include "minidet/losses.hpp"

#include <algorithm>
#include <cmath>

#include "minidet/rng.hpp"

namespace minidet {

namespace {

constexpr double kEps = 1e-9;
constexpr double kPi = 3.14159265358979323846;

struct Geom {
    double w, h, wg, hg;
    double iw, ih, inter, un, I;
    bool overlap;
    double cx, cy, gcx, gcy, d2;
    double wc, hc, c2;
};

Geom geom(const Box& a, const Box& g) {
    Geom q;
    q.w = a.w();
    q.h = a.h();
    q.wg = g.w();
    q.hg = g.h();
    q.iw = std::max(0.0, std::min(a.x2, g.x2) - std::max(a.x1, g.x1));
    q.ih = std::max(0.0, std::min(a.y2, g.y2) - std::max(a.y1, g.y1));
    q.inter = q.iw * q.ih;
    q.un = q.w * q.h + q.wg * q.hg - q.inter;
    q.I = q.un > 0.0 ? q.inter / q.un : 0.0;
    q.overlap = q.iw > 0.0 && q.ih > 0.0;
    q.cx = a.cx();
    q.cy = a.cy();
    q.gcx = g.cx();
    q.gcy = g.cy();
    q.d2 = (q.cx - q.gcx) * (q.cx - q.gcx) + (q.cy - q.gcy) * (q.cy - q.gcy);
    q.wc = std::max(a.x2, g.x2) - std::min(a.x1, g.x1);
    q.hc = std::max(a.y2, g.y2) - std::min(a.y1, g.y1);
    q.c2 = q.wc * q.wc + q.hc * q.hc;
    return q;
}

double aspect_v(const Geom& q) {
    const double t = std::atan(q.wg / std::max(q.hg, kEps)) - std::atan(q.w / std::max(q.h, kEps));
    return (4.0 / (kPi * kPi)) * t * t;
}

// Detached quantities frozen at the evaluation point so analytic and
// finite-difference gradients differentiate the same function.
struct Frozen {
    double wiou_r = 1.0;
    double ciou_alpha = 1.0;
};

Frozen freeze_at(LossId id, const Box& a, const Box& gt, const LossParams& p,
                 const WiouState* state) {
    Frozen f;
    const Geom q = geom(a, gt);
    if (id == LossId::ciou && p.ciou_alpha_weighting) {
        const double v = aspect_v(q);
        f.ciou_alpha = v / std::max((1.0 - q.I) + v, kEps);
    }
    if (id == LossId::wiou_v3) {
        const double beta = state ? state->beta(1.0 - q.I) : 1.0;
        f.wiou_r = beta / (p.delta * std::pow(p.alpha, beta - p.delta));
    }
    return f;
}

double wiou_v1_value(const Geom& q) {
    const double den = std::max(q.wg * q.wg + q.hg * q.hg, kEps);
    return std::exp(q.d2 / den) * (1.0 - q.I);
}

PiouTerms piou_terms_of(const Box& a, const Box& gt, const LossParams& p) {
    if (gt.w() <= 0.0 || gt.h() <= 0.0)
        throw LossError("piou ground truth must have positive width and height");
    PiouTerms t;
    t.dw1 = std::abs(a.x1 - gt.x1);
    t.dw2 = std::abs(a.x2 - gt.x2);
    t.dh1 = std::abs(a.y1 - gt.y1);
    t.dh2 = std::abs(a.y2 - gt.y2);
    t.P = 0.25 * ((t.dw1 + t.dw2) / gt.w() + (t.dh1 + t.dh2) / gt.h());
    t.q = std::exp(-t.P);
    t.u = piou_attention(p.lambda * t.q);
    return t;
}

double value_frozen(LossId id, const Box& a, const Box& gt, const LossParams& p,
                    const Frozen& f) {
    const Geom q = geom(a, gt);
    switch (id) {
        case LossId::ciou: {
            const double rd = q.d2 / std::max(q.c2, kEps);
            return (1.0 - q.I) + rd + f.ciou_alpha * aspect_v(q);
        }
        case LossId::eiou: {
            const double rd = q.d2 / std::max(q.c2, kEps);
            const double wt = (q.w - q.wg) * (q.w - q.wg) / std::max(q.wc * q.wc, kEps);
            const double ht = (q.h - q.hg) * (q.h - q.hg) / std::max(q.hc * q.hc, kEps);
            return (1.0 - q.I) + rd + wt + ht;
        }
        case LossId::wiou_v1:
            return wiou_v1_value(q);
        case LossId::wiou_v3:
            return f.wiou_r * wiou_v1_value(q);
        case LossId::piou_base: {
            const PiouTerms t = piou_terms_of(a, gt, p);
            double base = 1.0 - q.I - std::exp(-t.P * t.P);
            if (p.piou_nonneg_variant) base += 1.0;
            return base;
        }
        case LossId::piou: {
            const PiouTerms t = piou_terms_of(a, gt, p);
            double base = 1.0 - q.I - std::exp(-t.P * t.P);
            if (p.piou_nonneg_variant) base += 1.0;
            return t.u * base;
        }
        case LossId::piou_penalty: {
            const PiouTerms t = piou_terms_of(a, gt, p);
            return 1.0 - std::exp(-t.P * t.P);
        }
    }
    throw LossError("unknown loss id");
}

}  // namespace

double WiouState::beta(double l_iou) const {
    if (count == 0) return 1.0;
    return l_iou / std::max(mean, kEps);
}

void WiouState::observe(double l_iou, double momentum) {
    mean = count == 0 ? l_iou : (1.0 - momentum) * mean + momentum * l_iou;
    ++count;
}

bool parse_loss_id(const std::string& name, LossId& out) {
    if (name == "ciou") out = LossId::ciou;
    else if (name == "eiou") out = LossId::eiou;
    else if (name == "wiou_v1") out = LossId::wiou_v1;
    else if (name == "wiou_v3") out = LossId::wiou_v3;
    else if (name == "piou_base") out = LossId::piou_base;
    else if (name == "piou") out = LossId::piou;
    else if (name == "piou_penalty") out = LossId::piou_penalty;
    else return false;
    return true;
}

std::string loss_id_name(LossId id) {
    switch (id) {
        case LossId::ciou: return "ciou";
        case LossId::eiou: return "eiou";
        case LossId::wiou_v1: return "wiou_v1";
        case LossId::wiou_v3: return "wiou_v3";
        case LossId::piou_base: return "piou_base";
        case LossId::piou: return "piou";
        case LossId::piou_penalty: return "piou_penalty";
    }
    return "?";
}

double iou(const Box& a, const Box& b) {
    const Geom q = geom(a, b);
    return q.I;
}

double ciou_loss(const Box& a, const Box& gt, const LossParams& p) {
    return value_frozen(LossId::ciou, a, gt, p, freeze_at(LossId::ciou, a, gt, p, nullptr));
}

double eiou_loss(const Box& a, const Box& gt) {
    return value_frozen(LossId::eiou, a, gt, {}, {});
}

double wiou_loss(const Box& a, const Box& gt, WiouVersion version, const LossParams& p,
                 WiouState& state) {
    const Geom q = geom(a, gt);
    const double l_iou = 1.0 - q.I;
    double value = wiou_v1_value(q);
    if (version == WiouVersion::v3) {
        const double beta = state.beta(l_iou);
        value *= beta / (p.delta * std::pow(p.alpha, beta - p.delta));
    }
    state.observe(l_iou, p.wiou_momentum);
    return value;
}

PiouTerms piou_penalty(const Box& a, const Box& gt, const LossParams& p) {
    return piou_terms_of(a, gt, p);
}

double piou_loss(const Box& a, const Box& gt, const LossParams& p) {
    return value_frozen(LossId::piou, a, gt, p, {});
}

double piou_attention(double x) { return 3.0 * x * std::exp(-x * x); }

double loss_value(LossId id, const Box& a, const Box& gt, const LossParams& p,
                  const WiouState* state) {
    return value_frozen(id, a, gt, p, freeze_at(id, a, gt, p, state));
}

std::array<double, 4> loss_gradient(LossId id, const Box& a, const Box& gt, const LossParams& p,
                                    const WiouState* state) {
    const Geom q = geom(a, gt);
    const Frozen f = freeze_at(id, a, gt, p, state);

    // indicator derivatives of intersection and enclosure extents; exact ties
    // take the subgradient midpoint, which keeps identical boxes stationary
    // and matches what central differences see across the symmetric kink
    const auto ind = [](double diff, double slope) {
        return diff > 0.0 ? slope : (diff == 0.0 ? 0.5 * slope : 0.0);
    };
    const std::array<double, 4> diw = {ind(a.x1 - gt.x1, -1.0), 0.0, ind(gt.x2 - a.x2, 1.0), 0.0};
    const std::array<double, 4> dih = {0.0, ind(a.y1 - gt.y1, -1.0), 0.0,
                                       ind(gt.y2 - a.y2, 1.0)};
    const std::array<double, 4> darea = {-q.h, -q.w, q.h, q.w};
    std::array<double, 4> dinter{};
    if (q.overlap)
        for (int k = 0; k < 4; ++k) dinter[k] = q.ih * diw[k] + q.iw * dih[k];
    std::array<double, 4> diou{};
    if (q.un > 0.0) {
        for (int k = 0; k < 4; ++k) {
            const double dun = darea[k] - dinter[k];
            diou[k] = (dinter[k] * q.un - q.inter * dun) / (q.un * q.un);
        }
    }
    const std::array<double, 4> dd2 = {q.cx - q.gcx, q.cy - q.gcy, q.cx - q.gcx, q.cy - q.gcy};
    const std::array<double, 4> dwc = {ind(gt.x1 - a.x1, -1.0), 0.0, ind(a.x2 - gt.x2, 1.0), 0.0};
    const std::array<double, 4> dhc = {0.0, ind(gt.y1 - a.y1, -1.0), 0.0,
                                       ind(a.y2 - gt.y2, 1.0)};
    std::array<double, 4> drd{};
    if (q.c2 > 0.0) {
        for (int k = 0; k < 4; ++k) {
            const double dc2 = 2.0 * q.wc * dwc[k] + 2.0 * q.hc * dhc[k];
            drd[k] = (dd2[k] * q.c2 - q.d2 * dc2) / (q.c2 * q.c2);
        }
    }

    std::array<double, 4> out{};
    switch (id) {
        case LossId::ciou: {
            const double t =
                std::atan(q.wg / std::max(q.hg, kEps)) - std::atan(q.w / std::max(q.h, kEps));
            const double wh2 = std::max(q.w * q.w + q.h * q.h, kEps);
            const double dv_dw = -(8.0 / (kPi * kPi)) * t * q.h / wh2;
            const double dv_dh = (8.0 / (kPi * kPi)) * t * q.w / wh2;
            const std::array<double, 4> dv = {-dv_dw, -dv_dh, dv_dw, dv_dh};
            for (int k = 0; k < 4; ++k) out[k] = -diou[k] + drd[k] + f.ciou_alpha * dv[k];
            return out;
        }
        case LossId::eiou: {
            const std::array<double, 4> dw = {-1.0, 0.0, 1.0, 0.0};
            const std::array<double, 4> dh = {0.0, -1.0, 0.0, 1.0};
            const double wc2 = std::max(q.wc * q.wc, kEps);
            const double hc2 = std::max(q.hc * q.hc, kEps);
            for (int k = 0; k < 4; ++k) {
                const double dwt = (2.0 * (q.w - q.wg) * dw[k] * wc2 -
                                    (q.w - q.wg) * (q.w - q.wg) * 2.0 * q.wc * dwc[k]) /
                                   (wc2 * wc2);
                const double dht = (2.0 * (q.h - q.hg) * dh[k] * hc2 -
                                    (q.h - q.hg) * (q.h - q.hg) * 2.0 * q.hc * dhc[k]) /
                                   (hc2 * hc2);
                out[k] = -diou[k] + drd[k] + dwt + dht;
            }
            return out;
        }
        case LossId::wiou_v1:
        case LossId::wiou_v3: {
            const double den = std::max(q.wg * q.wg + q.hg * q.hg, kEps);
            const double e = std::exp(q.d2 / den);
            const double scale = id == LossId::wiou_v3 ? f.wiou_r : 1.0;
            for (int k = 0; k < 4; ++k)
                out[k] = scale * (e * (dd2[k] / den) * (1.0 - q.I) - e * diou[k]);
            return out;
        }
        case LossId::piou_base:
        case LossId::piou:
        case LossId::piou_penalty: {
            const PiouTerms t = piou_terms_of(a, gt, p);
            const double inv4w = 1.0 / (4.0 * q.wg);
            const double inv4h = 1.0 / (4.0 * q.hg);
            const auto sgn = [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); };
            const std::array<double, 4> dP = {sgn(a.x1 - gt.x1) * inv4w, sgn(a.y1 - gt.y1) * inv4h,
                                              sgn(a.x2 - gt.x2) * inv4w, sgn(a.y2 - gt.y2) * inv4h};
            const double eP2 = std::exp(-t.P * t.P);
            if (id == LossId::piou_penalty) {
                for (int k = 0; k < 4; ++k) out[k] = 2.0 * t.P * eP2 * dP[k];
                return out;
            }
            std::array<double, 4> dbase{};
            for (int k = 0; k < 4; ++k) dbase[k] = -diou[k] + eP2 * 2.0 * t.P * dP[k];
            if (id == LossId::piou_base) return dbase;
            double base = 1.0 - q.I - eP2;
            if (p.piou_nonneg_variant) base += 1.0;
            const double x = p.lambda * t.q;
            const double du = 3.0 * std::exp(-x * x) * (1.0 - 2.0 * x * x);
            for (int k = 0; k < 4; ++k) {
                const double dq = -t.q * dP[k];
                out[k] = du * p.lambda * dq * base + t.u * dbase[k];
            }
            return out;
        }
    }
    throw LossError("unknown loss id");
}

std::array<double, 4> finite_diff_gradient(LossId id, const Box& a, const Box& gt,
                                           const LossParams& p, double step,
                                           const WiouState* state) {
    if (step <= 0.0) throw LossError("finite difference step must be > 0");
    const Frozen f = freeze_at(id, a, gt, p, state);
    const auto coord = [](Box& b, int k) -> double& {
        switch (k) {
            case 0: return b.x1;
            case 1: return b.y1;
            case 2: return b.x2;
            default: return b.y2;
        }
    };
    std::array<double, 4> out{};
    for (int k = 0; k < 4; ++k) {
        Box hi = a, lo = a;
        coord(hi, k) += step;
        coord(lo, k) -= step;
        out[k] = (value_frozen(id, hi, gt, p, f) - value_frozen(id, lo, gt, p, f)) / (2.0 * step);
    }
    return out;
}

GradCheckResult grad_check(LossId id, int pairs, std::uint64_t seed, double step) {
    if (pairs < 1) throw LossError("grad_check needs pairs >= 1");
    ParamRng rng(seed);
    const auto sample_box = [&rng]() {
        const double cx = rng.uniform(0.0, 1.0);
        const double cy = rng.uniform(0.0, 1.0);
        const double w = rng.uniform(0.05, 0.6);
        const double h = rng.uniform(0.05, 0.6);
        return Box{cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2};
    };
    const auto near_boundary = [](const Box& a, const Box& g) {
        constexpr double margin = 1e-5;
        const double pa[4] = {a.x1, a.y1, a.x2, a.y2};
        const double pg[4] = {g.x1, g.y1, g.x2, g.y2};
        for (int i = 0; i < 4; ++i)
            if (std::abs(pa[i] - pg[i]) < margin) return true;
        // intersection extent zero crossings
        if (std::abs(std::min(a.x2, g.x2) - std::max(a.x1, g.x1)) < margin) return true;
        if (std::abs(std::min(a.y2, g.y2) - std::max(a.y1, g.y1)) < margin) return true;
        return false;
    };

    const LossParams p;
    WiouState state;
    state.mean = 0.5;
    state.count = 1;

    GradCheckResult result;
    result.pairs = pairs;
    for (int i = 0; i < pairs; ++i) {
        Box a, g;
        do {
            a = sample_box();
            g = sample_box();
        } while (near_boundary(a, g));
        const std::array<double, 4> ga = loss_gradient(id, a, g, p, &state);
        const std::array<double, 4> gf = finite_diff_gradient(id, a, g, p, step, &state);
        double num = 0.0, na = 0.0, nf = 0.0;
        for (int k = 0; k < 4; ++k) {
            num = std::max(num, std::abs(ga[k] - gf[k]));
            na = std::max(na, std::abs(ga[k]));
            nf = std::max(nf, std::abs(gf[k]));
        }
        const double rel = num / std::max({na, nf, 1e-4});
        if (rel > result.worst_rel_err) {
            result.worst_rel_err = rel;
            result.worst_anchor = a;
            result.worst_gt = g;
        }
    }
    return result;
}

}  // namespace minidet
