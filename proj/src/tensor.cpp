#include "minidet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace minidet {

std::string Shape::str() const {
    std::ostringstream os;
    os << "(" << n << "," << c << "," << h << "," << w << ")";
    return os.str();
}

Tensor::Tensor(Shape s, double fill) : shape_(s) {
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0)
        throw DimError("negative extent in shape " + s.str());
    data_.assign(static_cast<std::size_t>(s.numel()), fill);
}

Tensor Tensor::from(Shape s, std::vector<double> values) {
    if (static_cast<long>(values.size()) != s.numel())
        throw DimError("buffer length " + std::to_string(values.size()) +
                       " does not match shape " + s.str());
    Tensor t;
    t.shape_ = s;
    t.data_ = std::move(values);
    return t;
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const std::vector<double>& bias,
              int stride, int padding, int groups) {
    const Shape xs = x.shape();
    const Shape ws = weight.shape();
    if (stride < 1) throw DimError("conv2d stride must be >= 1");
    if (padding < 0) throw DimError("conv2d padding must be >= 0");
    if (groups < 1) throw DimError("conv2d groups must be >= 1");
    if (xs.c % groups != 0)
        throw DimError("conv2d input channel axis " + std::to_string(xs.c) +
                       " not divisible by groups " + std::to_string(groups));
    if (ws.c != xs.c / groups)
        throw DimError("conv2d weight channel axis " + std::to_string(ws.c) +
                       " does not match C_in/groups " + std::to_string(xs.c / groups));
    if (ws.n % groups != 0)
        throw DimError("conv2d output channel axis " + std::to_string(ws.n) +
                       " not divisible by groups " + std::to_string(groups));
    if (!bias.empty() && static_cast<long>(bias.size()) != ws.n)
        throw DimError("conv2d bias length " + std::to_string(bias.size()) +
                       " does not match output channel axis " + std::to_string(ws.n));

    const long kh = ws.h, kw = ws.w;
    const long oh = (xs.h + 2L * padding - kh) / stride + 1;
    const long ow = (xs.w + 2L * padding - kw) / stride + 1;
    if (oh < 1 || ow < 1)
        throw DimError("conv2d kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                       " larger than padded input " + xs.str());

    Tensor out({xs.n, ws.n, oh, ow});
    const long cpg_in = xs.c / groups;
    const long cpg_out = ws.n / groups;
    const long in_plane = xs.h * xs.w;
    const long out_plane = oh * ow;
    const double* xd = x.data();
    const double* wd = weight.data();
    double* od = out.data();

    for (long n = 0; n < xs.n; ++n) {
        for (long g = 0; g < groups; ++g) {
            for (long oc = g * cpg_out; oc < (g + 1) * cpg_out; ++oc) {
                double* op = od + (n * ws.n + oc) * out_plane;
                const double b = bias.empty() ? 0.0 : bias[oc];
                std::fill(op, op + out_plane, b);
                for (long ic = 0; ic < cpg_in; ++ic) {
                    const double* xp = xd + (n * xs.c + g * cpg_in + ic) * in_plane;
                    const double* wp = wd + ((oc * cpg_in + ic) * kh) * kw;
                    for (long ky = 0; ky < kh; ++ky) {
                        for (long kx = 0; kx < kw; ++kx) {
                            const double wv = wp[ky * kw + kx];
                            if (wv == 0.0) continue;
                            for (long oy = 0; oy < oh; ++oy) {
                                const long iy = oy * stride - padding + ky;
                                if (iy < 0 || iy >= xs.h) continue;
                                const double* xrow = xp + iy * xs.w;
                                double* orow = op + oy * ow;
                                long ox0 = 0, ox1 = ow;
                                // clamp to the valid input column range
                                while (ox0 < ow && ox0 * stride - padding + kx < 0) ++ox0;
                                while (ox1 > ox0 && (ox1 - 1) * stride - padding + kx >= xs.w) --ox1;
                                const double* xcol = xrow + ox0 * stride - padding + kx;
                                if (stride == 1) {
                                    for (long ox = ox0; ox < ox1; ++ox)
                                        orow[ox] += wv * xcol[ox - ox0];
                                } else {
                                    for (long ox = ox0; ox < ox1; ++ox)
                                        orow[ox] += wv * xcol[(ox - ox0) * stride];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    return out;
}

Tensor pad_replicate(const Tensor& x, int pad) {
    if (pad < 0) throw DimError("pad_replicate pad must be >= 0");
    if (pad == 0) return x;
    const Shape s = x.shape();
    if (s.h < 1 || s.w < 1) throw DimError("pad_replicate needs nonempty spatial axes");
    Tensor out({s.n, s.c, s.h + 2L * pad, s.w + 2L * pad});
    for (long n = 0; n < s.n; ++n)
        for (long c = 0; c < s.c; ++c)
            for (long y = 0; y < s.h + 2L * pad; ++y) {
                const long iy = std::clamp(y - pad, 0L, s.h - 1);
                for (long xg = 0; xg < s.w + 2L * pad; ++xg) {
                    const long ix = std::clamp(xg - pad, 0L, s.w - 1);
                    out.at(n, c, y, xg) = x.at(n, c, iy, ix);
                }
            }
    return out;
}

Tensor maxpool2d(const Tensor& x, int kernel, int stride, int padding) {
    const Shape s = x.shape();
    if (kernel < 1) throw DimError("maxpool2d kernel must be >= 1");
    if (stride < 1) throw DimError("maxpool2d stride must be >= 1");
    const long oh = (s.h + 2L * padding - kernel) / stride + 1;
    const long ow = (s.w + 2L * padding - kernel) / stride + 1;
    if (oh < 1 || ow < 1)
        throw DimError("maxpool2d kernel " + std::to_string(kernel) +
                       " larger than padded input " + s.str());
    Tensor out({s.n, s.c, oh, ow});
    for (long n = 0; n < s.n; ++n)
        for (long c = 0; c < s.c; ++c)
            for (long oy = 0; oy < oh; ++oy)
                for (long ox = 0; ox < ow; ++ox) {
                    double m = -std::numeric_limits<double>::infinity();
                    for (long ky = 0; ky < kernel; ++ky) {
                        const long iy = oy * stride - padding + ky;
                        if (iy < 0 || iy >= s.h) continue;
                        for (long kx = 0; kx < kernel; ++kx) {
                            const long ix = ox * stride - padding + kx;
                            if (ix < 0 || ix >= s.w) continue;
                            m = std::max(m, x.at(n, c, iy, ix));
                        }
                    }
                    out.at(n, c, oy, ox) = m;
                }
    return out;
}

Tensor global_avg2d(const Tensor& x) {
    const Shape s = x.shape();
    if (s.h < 1 || s.w < 1) throw DimError("global_avg2d needs nonempty spatial axes");
    Tensor out({s.n, s.c, 1, 1});
    const double inv = 1.0 / static_cast<double>(s.h * s.w);
    for (long n = 0; n < s.n; ++n)
        for (long c = 0; c < s.c; ++c) {
            double acc = 0.0;
            for (long y = 0; y < s.h; ++y)
                for (long xg = 0; xg < s.w; ++xg) acc += x.at(n, c, y, xg);
            out.at(n, c, 0, 0) = acc * inv;
        }
    return out;
}

Tensor avg_along_w(const Tensor& x) {
    const Shape s = x.shape();
    if (s.w < 1) throw DimError("avg_along_w needs nonempty w axis");
    Tensor out({s.n, s.c, s.h, 1});
    const double inv = 1.0 / static_cast<double>(s.w);
    for (long n = 0; n < s.n; ++n)
        for (long c = 0; c < s.c; ++c)
            for (long y = 0; y < s.h; ++y) {
                double acc = 0.0;
                for (long xg = 0; xg < s.w; ++xg) acc += x.at(n, c, y, xg);
                out.at(n, c, y, 0) = acc * inv;
            }
    return out;
}

Tensor avg_along_h(const Tensor& x) {
    const Shape s = x.shape();
    if (s.h < 1) throw DimError("avg_along_h needs nonempty h axis");
    Tensor out({s.n, s.c, 1, s.w});
    const double inv = 1.0 / static_cast<double>(s.h);
    for (long n = 0; n < s.n; ++n)
        for (long c = 0; c < s.c; ++c)
            for (long xg = 0; xg < s.w; ++xg) {
                double acc = 0.0;
                for (long y = 0; y < s.h; ++y) acc += x.at(n, c, y, xg);
                out.at(n, c, 0, xg) = acc * inv;
            }
    return out;
}

Tensor pool(const Tensor& x, PoolKind kind, int kernel, int stride) {
    switch (kind) {
        case PoolKind::max2d:
            return maxpool2d(x, kernel, stride, kernel / 2);
        case PoolKind::global_avg2d:
            return global_avg2d(x);
        case PoolKind::avg_along_w:
            return avg_along_w(x);
        case PoolKind::avg_along_h:
            return avg_along_h(x);
    }
    throw DimError("unknown pool kind");
}

double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }
double silu(double t) { return t * sigmoid(t); }

Tensor activation(const Tensor& x, Activation kind) {
    Tensor out = x;
    double* d = out.data();
    const long n = out.numel();
    if (kind == Activation::sigmoid)
        for (long i = 0; i < n; ++i) d[i] = sigmoid(d[i]);
    else
        for (long i = 0; i < n; ++i) d[i] = silu(d[i]);
    return out;
}

namespace {

struct AxisView {
    long outer, axis, inner;
};

AxisView axis_view(const Shape& s, int axis) {
    const long ext[4] = {s.n, s.c, s.h, s.w};
    if (axis < 0 || axis > 3) throw DimError("invalid axis " + std::to_string(axis));
    AxisView v{1, ext[axis], 1};
    for (int i = 0; i < axis; ++i) v.outer *= ext[i];
    for (int i = axis + 1; i < 4; ++i) v.inner *= ext[i];
    return v;
}

}  // namespace

Tensor softmax(const Tensor& x, int axis) {
    const AxisView v = axis_view(x.shape(), axis);
    Tensor out = x;
    double* d = out.data();
    for (long o = 0; o < v.outer; ++o)
        for (long i = 0; i < v.inner; ++i) {
            double* base = d + o * v.axis * v.inner + i;
            double m = -std::numeric_limits<double>::infinity();
            for (long a = 0; a < v.axis; ++a) m = std::max(m, base[a * v.inner]);
            double sum = 0.0;
            for (long a = 0; a < v.axis; ++a) {
                const double e = std::exp(base[a * v.inner] - m);
                base[a * v.inner] = e;
                sum += e;
            }
            for (long a = 0; a < v.axis; ++a) base[a * v.inner] /= sum;
        }
    return out;
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw DimError("concat of zero tensors");
    Shape s = parts[0].shape();
    long total = 0;
    for (const Tensor& p : parts) {
        const Shape ps = p.shape();
        Shape cmp = ps;
        const long ext[4] = {ps.n, ps.c, ps.h, ps.w};
        total += ext[axis];
        // zero out the concat axis for comparison
        switch (axis) {
            case 0: cmp.n = s.n; break;
            case 1: cmp.c = s.c; break;
            case 2: cmp.h = s.h; break;
            case 3: cmp.w = s.w; break;
            default: throw DimError("invalid axis " + std::to_string(axis));
        }
        if (!(cmp == s))
            throw DimError("concat mismatch on non-concat axes: " + ps.str() + " vs " + s.str());
    }
    Shape os = s;
    switch (axis) {
        case 0: os.n = total; break;
        case 1: os.c = total; break;
        case 2: os.h = total; break;
        case 3: os.w = total; break;
    }
    Tensor out(os);
    const AxisView ov = axis_view(os, axis);
    double* od = out.data();
    long offset = 0;
    for (const Tensor& p : parts) {
        const AxisView pv = axis_view(p.shape(), axis);
        const double* pd = p.data();
        for (long o = 0; o < pv.outer; ++o)
            for (long a = 0; a < pv.axis; ++a)
                std::copy(pd + (o * pv.axis + a) * pv.inner,
                          pd + (o * pv.axis + a + 1) * pv.inner,
                          od + (o * ov.axis + offset + a) * ov.inner);
        offset += pv.axis;
    }
    return out;
}

std::vector<Tensor> split(const Tensor& x, int axis, int parts) {
    const Shape s = x.shape();
    const long ext[4] = {s.n, s.c, s.h, s.w};
    if (parts < 1) throw DimError("split into zero parts");
    if (ext[axis] % parts != 0)
        throw DimError("axis extent " + std::to_string(ext[axis]) + " not divisible into " +
                       std::to_string(parts) + " parts");
    const long step = ext[axis] / parts;
    Shape ps = s;
    switch (axis) {
        case 0: ps.n = step; break;
        case 1: ps.c = step; break;
        case 2: ps.h = step; break;
        case 3: ps.w = step; break;
        default: throw DimError("invalid axis " + std::to_string(axis));
    }
    const AxisView xv = axis_view(s, axis);
    std::vector<Tensor> out;
    out.reserve(parts);
    const double* xd = x.data();
    for (int p = 0; p < parts; ++p) {
        Tensor t(ps);
        double* td = t.data();
        const AxisView tv = axis_view(ps, axis);
        for (long o = 0; o < tv.outer; ++o)
            for (long a = 0; a < tv.axis; ++a)
                std::copy(xd + (o * xv.axis + p * step + a) * xv.inner,
                          xd + (o * xv.axis + p * step + a + 1) * xv.inner,
                          td + (o * tv.axis + a) * tv.inner);
        out.push_back(std::move(t));
    }
    return out;
}

Tensor upsample_nearest(const Tensor& x, int factor) {
    if (factor < 1) throw DimError("upsample factor must be >= 1");
    const Shape s = x.shape();
    Tensor out({s.n, s.c, s.h * factor, s.w * factor});
    for (long n = 0; n < s.n; ++n)
        for (long c = 0; c < s.c; ++c)
            for (long y = 0; y < s.h * factor; ++y)
                for (long xg = 0; xg < s.w * factor; ++xg)
                    out.at(n, c, y, xg) = x.at(n, c, y / factor, xg / factor);
    return out;
}

Tensor transpose_hw(const Tensor& x) {
    const Shape s = x.shape();
    Tensor out({s.n, s.c, s.w, s.h});
    for (long n = 0; n < s.n; ++n)
        for (long c = 0; c < s.c; ++c)
            for (long y = 0; y < s.h; ++y)
                for (long xg = 0; xg < s.w; ++xg) out.at(n, c, xg, y) = x.at(n, c, y, xg);
    return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    const Shape as = a.shape(), bs = b.shape();
    if (as.n != bs.n || as.c != bs.c)
        throw DimError("matmul batch axes differ: " + as.str() + " vs " + bs.str());
    if (as.w != bs.h)
        throw DimError("matmul inner axes differ: " + as.str() + " vs " + bs.str());
    Tensor out({as.n, as.c, as.h, bs.w});
    for (long n = 0; n < as.n; ++n)
        for (long c = 0; c < as.c; ++c)
            for (long i = 0; i < as.h; ++i)
                for (long j = 0; j < bs.w; ++j) {
                    double acc = 0.0;
                    for (long k = 0; k < as.w; ++k) acc += a.at(n, c, i, k) * b.at(n, c, k, j);
                    out.at(n, c, i, j) = acc;
                }
    return out;
}

Tensor batch_norm_inference(const Tensor& x, const std::vector<double>& mean,
                            const std::vector<double>& var, const std::vector<double>& gamma,
                            const std::vector<double>& beta, double eps) {
    const Shape s = x.shape();
    const auto check = [&](const std::vector<double>& v, const char* name) {
        if (static_cast<long>(v.size()) != s.c)
            throw DimError(std::string("batch_norm ") + name + " length " +
                           std::to_string(v.size()) + " does not match channel axis " +
                           std::to_string(s.c));
    };
    check(mean, "mean");
    check(var, "var");
    check(gamma, "gamma");
    check(beta, "beta");
    if (eps <= 0.0) throw DimError("batch_norm eps must be > 0");
    Tensor out = x;
    for (long c = 0; c < s.c; ++c) {
        const double scale = gamma[c] / std::sqrt(var[c] + eps);
        const double shift = beta[c] - mean[c] * scale;
        for (long n = 0; n < s.n; ++n)
            for (long y = 0; y < s.h; ++y)
                for (long xg = 0; xg < s.w; ++xg)
                    out.at(n, c, y, xg) = x.at(n, c, y, xg) * scale + shift;
    }
    return out;
}

}  // namespace minidet
