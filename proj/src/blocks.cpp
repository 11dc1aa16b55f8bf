#include "minidet/blocks.hpp"

#include <string>

namespace minidet {

namespace {

Tensor seeded_weight(int c_out, int c_in, int k, ParamRng& rng) {
    Tensor w({c_out, c_in, k, k});
    const int fan_in = c_in * k * k;
    double* d = w.data();
    for (long i = 0; i < w.numel(); ++i) d[i] = rng.fan_in_uniform(fan_in);
    return w;
}

std::vector<double> seeded_bias(int c_out, int fan_in, ParamRng& rng) {
    std::vector<double> b(static_cast<std::size_t>(c_out));
    for (double& v : b) v = rng.fan_in_uniform(fan_in);
    return b;
}

// slice [start, start+len) along the h axis
Tensor slice_h(const Tensor& x, long start, long len) {
    const Shape s = x.shape();
    Tensor out({s.n, s.c, len, s.w});
    for (long n = 0; n < s.n; ++n)
        for (long c = 0; c < s.c; ++c)
            for (long y = 0; y < len; ++y)
                for (long xg = 0; xg < s.w; ++xg) out.at(n, c, y, xg) = x.at(n, c, start + y, xg);
    return out;
}

}  // namespace

Tensor ConvBlock::forward(const Tensor& x) const {
    Tensor y = conv2d(x, weight, bias, stride, padding);
    y = batch_norm_inference(y, bn_mean, bn_var, bn_gamma, bn_beta, bn_eps);
    return activation(y, Activation::silu);
}

ConvBlock make_conv_block(int c_in, int c_out, int kernel, int stride, ParamRng& rng) {
    if (c_in < 1 || c_out < 1) throw DimError("conv block needs positive channel counts");
    ConvBlock b;
    b.weight = seeded_weight(c_out, c_in, kernel, rng);
    b.bias = seeded_bias(c_out, c_in * kernel * kernel, rng);
    b.bn_mean.assign(c_out, 0.0);
    b.bn_var.assign(c_out, 1.0);
    b.bn_gamma.assign(c_out, 1.0);
    b.bn_beta.assign(c_out, 0.0);
    b.stride = stride;
    b.padding = kernel / 2;
    return b;
}

Tensor Bottleneck::forward(const Tensor& x) const {
    Tensor y = cv2.forward(cv1.forward(x));
    if (!shortcut) return y;
    Tensor out = x;
    double* od = out.data();
    const double* yd = y.data();
    for (long i = 0; i < out.numel(); ++i) od[i] += yd[i];
    return out;
}

Bottleneck make_bottleneck(int channels, bool shortcut, ParamRng& rng) {
    Bottleneck b;
    b.cv1 = make_conv_block(channels, channels, 3, 1, rng);
    b.cv2 = make_conv_block(channels, channels, 3, 1, rng);
    b.shortcut = shortcut;
    return b;
}

Tensor C2fBlock::forward(const Tensor& x) const {
    Tensor y = cv1.forward(x);
    std::vector<Tensor> parts = split(y, 1, 2);
    std::vector<Tensor> gathered;
    gathered.reserve(2 + stages.size());
    gathered.push_back(std::move(parts[0]));
    gathered.push_back(std::move(parts[1]));
    for (const Bottleneck& m : stages) gathered.push_back(m.forward(gathered.back()));
    return cv2.forward(concat(gathered, 1));
}

C2fBlock make_c2f(int c_in, int c_out, int n, bool shortcut, ParamRng& rng) {
    if (n < 0) throw DimError("c2f needs n >= 0 bottlenecks");
    C2fBlock b;
    b.hidden = std::max(1, c_out / 2);
    b.cv1 = make_conv_block(c_in, 2 * b.hidden, 1, 1, rng);
    for (int i = 0; i < n; ++i) b.stages.push_back(make_bottleneck(b.hidden, shortcut, rng));
    b.cv2 = make_conv_block((2 + n) * b.hidden, c_out, 1, 1, rng);
    return b;
}

Tensor SPPFBlock::forward(const Tensor& x) const {
    Tensor y = cv1.forward(x);
    Tensor p1 = maxpool2d(y, kernel, 1, kernel / 2);
    Tensor p2 = maxpool2d(p1, kernel, 1, kernel / 2);
    Tensor p3 = maxpool2d(p2, kernel, 1, kernel / 2);
    return cv2.forward(concat({y, p1, p2, p3}, 1));
}

SPPFBlock make_sppf(int c_in, int c_out, int kernel, ParamRng& rng) {
    SPPFBlock b;
    const int hidden = std::max(1, c_in / 2);
    b.cv1 = make_conv_block(c_in, hidden, 1, 1, rng);
    b.cv2 = make_conv_block(4 * hidden, c_out, 1, 1, rng);
    b.kernel = kernel;
    return b;
}

Tensor ema_forward(const EMABlock& block, const Tensor& x, EmaDebug* debug) {
    const Shape s = x.shape();
    if (s.c != block.channels)
        throw DimError("ema channel axis " + std::to_string(s.c) + " does not match block " +
                       std::to_string(block.channels));
    if (s.c % block.groups != 0)
        throw DimError("ema channel axis " + std::to_string(s.c) + " not divisible by groups " +
                       std::to_string(block.groups));
    const long cg = s.c / block.groups;
    const long hw = s.h * s.w;

    std::vector<Tensor> group_in = split(x, 1, block.groups);
    std::vector<Tensor> group_out;
    group_out.reserve(group_in.size());

    for (const Tensor& xg : group_in) {
        // directional pooling, joint 1x1 conv over the stacked strip
        Tensor ph = avg_along_w(xg);                 // N,Cg,H,1
        Tensor pw = transpose_hw(avg_along_h(xg));   // N,Cg,W,1
        Tensor strip = concat({ph, pw}, 2);          // N,Cg,H+W,1
        strip = conv2d(strip, block.gate_weight, block.gate_bias, 1, 0);
        Tensor gh = activation(slice_h(strip, 0, s.h), Activation::sigmoid);
        Tensor gw = activation(slice_h(strip, s.h, s.w), Activation::sigmoid);

        // gated branch
        Tensor x1 = xg;
        for (long n = 0; n < s.n; ++n)
            for (long c = 0; c < cg; ++c)
                for (long yy = 0; yy < s.h; ++yy)
                    for (long xx = 0; xx < s.w; ++xx)
                        x1.at(n, c, yy, xx) *= gh.at(n, c, yy, 0) * gw.at(n, c, xx, 0);

        // parallel 3x3 branch; edge padding keeps constants constant
        Tensor x2 = conv2d(pad_replicate(xg, 1), block.conv3_weight, block.conv3_bias, 1, 0);

        // cross-spatial fusion: channel softmax of one branch's pooled vector
        // against the other branch's flattened spatial map
        Tensor s1 = softmax(global_avg2d(x1), 1);  // N,Cg,1,1
        Tensor s2 = softmax(global_avg2d(x2), 1);
        if (debug) {
            for (long n = 0; n < s.n; ++n) {
                std::vector<double> v1(static_cast<std::size_t>(cg)), v2(v1);
                for (long c = 0; c < cg; ++c) {
                    v1[c] = s1.at(n, c, 0, 0);
                    v2[c] = s2.at(n, c, 0, 0);
                }
                debug->softmax_gated.push_back(std::move(v1));
                debug->softmax_conv3.push_back(std::move(v2));
            }
        }
        Tensor s1_row = Tensor::from({s.n, 1, 1, cg}, s1.raw());
        Tensor s2_row = Tensor::from({s.n, 1, 1, cg}, s2.raw());
        Tensor x1_flat = Tensor::from({s.n, 1, cg, hw}, x1.raw());
        Tensor x2_flat = Tensor::from({s.n, 1, cg, hw}, x2.raw());
        Tensor map1 = matmul(s1_row, x2_flat);  // N,1,1,HW
        Tensor map2 = matmul(s2_row, x1_flat);

        Tensor out = xg;
        for (long n = 0; n < s.n; ++n)
            for (long yy = 0; yy < s.h; ++yy)
                for (long xx = 0; xx < s.w; ++xx) {
                    const double m = sigmoid(map1.at(n, 0, 0, yy * s.w + xx) +
                                             map2.at(n, 0, 0, yy * s.w + xx));
                    for (long c = 0; c < cg; ++c) out.at(n, c, yy, xx) *= m;
                }
        group_out.push_back(std::move(out));
    }
    return concat(group_out, 1);
}

Tensor EMABlock::forward(const Tensor& x) const { return ema_forward(*this, x); }

EMABlock make_ema(int channels, int groups, ParamRng& rng) {
    if (groups < 1) throw DimError("ema needs groups >= 1");
    if (channels % groups != 0)
        throw DimError("ema channel axis " + std::to_string(channels) +
                       " not divisible by groups " + std::to_string(groups));
    EMABlock b;
    b.channels = channels;
    b.groups = groups;
    const int cg = channels / groups;
    b.gate_weight = seeded_weight(cg, cg, 1, rng);
    b.gate_bias = seeded_bias(cg, cg, rng);
    b.conv3_weight = seeded_weight(cg, cg, 3, rng);
    b.conv3_bias = seeded_bias(cg, cg * 9, rng);
    return b;
}

Tensor C2fEMABlock::forward(const Tensor& x) const {
    Tensor y = c2f.cv1.forward(x);
    std::vector<Tensor> parts = split(y, 1, 2);
    std::vector<Tensor> gathered;
    gathered.reserve(2 + c2f.stages.size());
    gathered.push_back(std::move(parts[0]));
    gathered.push_back(std::move(parts[1]));
    for (std::size_t i = 0; i < c2f.stages.size(); ++i) {
        const Bottleneck& m = c2f.stages[i];
        const Tensor& cur = gathered.back();
        if (static_cast<int>(i) + 1 == ema_stage) {
            Tensor conv_path = ema_forward(ema, m.cv2.forward(m.cv1.forward(cur)));
            if (shortcut) {
                Tensor sum = cur;
                double* sd = sum.data();
                const double* cd = conv_path.data();
                for (long k = 0; k < sum.numel(); ++k) sd[k] += cd[k];
                gathered.push_back(std::move(sum));
            } else {
                gathered.push_back(std::move(conv_path));
            }
        } else {
            gathered.push_back(m.forward(cur));
        }
    }
    return c2f.cv2.forward(concat(gathered, 1));
}

C2fEMABlock make_c2f_ema(int c_in, int c_out, int n, bool shortcut, int groups, ParamRng& rng) {
    C2fEMABlock b;
    b.c2f = make_c2f(c_in, c_out, n, shortcut, rng);
    b.ema = make_ema(b.c2f.hidden, groups, rng);
    b.ema_stage = std::min(std::max(n, 1), 2);
    b.shortcut = shortcut;
    return b;
}

}  // namespace minidet
