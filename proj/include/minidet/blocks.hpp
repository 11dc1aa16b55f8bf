#pragma once

#include <vector>

#include "minidet/rng.hpp"
#include "minidet/tensor.hpp"

namespace minidet {

// Convolution -> batch-norm (inference form, identity-initialized) -> SiLU.
struct ConvBlock {
    Tensor weight;
    std::vector<double> bias;
    std::vector<double> bn_mean, bn_var, bn_gamma, bn_beta;
    double bn_eps = 1e-5;
    int stride = 1;
    int padding = 0;

    int in_channels() const { return static_cast<int>(weight.shape().c); }
    int out_channels() const { return static_cast<int>(weight.shape().n); }
    Tensor forward(const Tensor& x) const;
};

ConvBlock make_conv_block(int c_in, int c_out, int kernel, int stride, ParamRng& rng);

struct Bottleneck {
    ConvBlock cv1, cv2;  // both 3x3 on the hidden width
    bool shortcut = true;

    Tensor forward(const Tensor& x) const;
};

Bottleneck make_bottleneck(int channels, bool shortcut, ParamRng& rng);

// Entry 1x1 conv to 2*hidden, split, n chained bottlenecks, concat of the
// (2+n) hidden-width stages, exit 1x1 conv.
struct C2fBlock {
    ConvBlock cv1;  // c_in -> 2*hidden
    std::vector<Bottleneck> stages;
    ConvBlock cv2;  // (2+n)*hidden -> c_out
    int hidden = 0;

    Tensor forward(const Tensor& x) const;
};

C2fBlock make_c2f(int c_in, int c_out, int n, bool shortcut, ParamRng& rng);

struct SPPFBlock {
    ConvBlock cv1;  // c_in -> hidden
    ConvBlock cv2;  // 4*hidden -> c_out
    int kernel = 5;

    Tensor forward(const Tensor& x) const;
};

SPPFBlock make_sppf(int c_in, int c_out, int kernel, ParamRng& rng);

// Efficient multi-scale attention over channel groups. Channels are split
// into `groups` sub-features processed independently; output shape equals
// input shape.
struct EMABlock {
    int channels = 0;
    int groups = 1;
    Tensor gate_weight;  // 1x1, Cg -> Cg, applied to the pooled H+W strip
    std::vector<double> gate_bias;
    Tensor conv3_weight;  // 3x3 branch, Cg -> Cg, edge-padded
    std::vector<double> conv3_bias;

    Tensor forward(const Tensor& x) const;  // ema_forward without debug capture
};

// Per-group channel-softmax vectors captured during a forward, one entry per
// (batch, group); each vector sums to 1.
struct EmaDebug {
    std::vector<std::vector<double>> softmax_gated;  // from the gated branch pool
    std::vector<std::vector<double>> softmax_conv3;  // from the 3x3 branch pool
};

Tensor ema_forward(const EMABlock& block, const Tensor& x, EmaDebug* debug = nullptr);

EMABlock make_ema(int channels, int groups, ParamRng& rng);

// C2f whose designated bottleneck stage routes its convolution output through
// EMA before the residual add.
struct C2fEMABlock {
    C2fBlock c2f;
    EMABlock ema;
    int ema_stage = 1;  // 1-based stage index
    bool shortcut = true;

    Tensor forward(const Tensor& x) const;
};

C2fEMABlock make_c2f_ema(int c_in, int c_out, int n, bool shortcut, int groups, ParamRng& rng);

}  // namespace minidet
