#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace minidet {

// Thrown on any shape, axis, or parameter mismatch. Messages name the
// offending axes; nothing in this module aborts the process.
class DimError : public std::runtime_error {
public:
    explicit DimError(const std::string& what) : std::runtime_error(what) {}
};

struct Shape {
    long n = 0, c = 0, h = 0, w = 0;

    bool operator==(const Shape&) const = default;
    long numel() const { return n * c * h * w; }
    std::string str() const;
};

// Dense rank-4 array, NCHW, row-major, float64. Values are plain data;
// all operations below are pure functions returning fresh tensors.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape s, double fill = 0.0);
    static Tensor from(Shape s, std::vector<double> values);

    const Shape& shape() const { return shape_; }
    long numel() const { return static_cast<long>(data_.size()); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& at(long n, long c, long y, long x) {
        return data_[((n * shape_.c + c) * shape_.h + y) * shape_.w + x];
    }
    double at(long n, long c, long y, long x) const {
        return data_[((n * shape_.c + c) * shape_.h + y) * shape_.w + x];
    }

    std::vector<double>& raw() { return data_; }
    const std::vector<double>& raw() const { return data_; }

private:
    Shape shape_;
    std::vector<double> data_;
};

// --- convolution ------------------------------------------------------------

// Cross-correlation (no kernel flip). weight is (C_out, C_in/groups, kH, kW),
// bias has C_out entries (empty vector = no bias). Output spatial size is
// floor((H + 2*padding - kH)/stride) + 1.
Tensor conv2d(const Tensor& x, const Tensor& weight, const std::vector<double>& bias,
              int stride = 1, int padding = 0, int groups = 1);

// Edge-replicating pad of both spatial axes; used where a constant input
// must stay constant through a 3x3 convolution.
Tensor pad_replicate(const Tensor& x, int pad);

// --- pooling ----------------------------------------------------------------

enum class PoolKind { max2d, global_avg2d, avg_along_w, avg_along_h };

// kernel/stride apply to max2d only; max2d uses padding = kernel/2 so the
// spatial size is preserved at stride 1.
Tensor pool(const Tensor& x, PoolKind kind, int kernel = 0, int stride = 1);

Tensor maxpool2d(const Tensor& x, int kernel, int stride, int padding);
Tensor global_avg2d(const Tensor& x);
Tensor avg_along_w(const Tensor& x);  // N,C,H,W -> N,C,H,1
Tensor avg_along_h(const Tensor& x);  // N,C,H,W -> N,C,1,W

// --- activations ------------------------------------------------------------

enum class Activation { sigmoid, silu };

Tensor activation(const Tensor& x, Activation kind);
double sigmoid(double t);
double silu(double t);

// Max-subtracted softmax along one axis (0=n, 1=c, 2=h, 3=w); every slice
// along that axis sums to 1.
Tensor softmax(const Tensor& x, int axis);

// --- reshape family ---------------------------------------------------------

Tensor concat(const std::vector<Tensor>& parts, int axis);
std::vector<Tensor> split(const Tensor& x, int axis, int parts);
Tensor upsample_nearest(const Tensor& x, int factor);

// Swap of the trailing two axes.
Tensor transpose_hw(const Tensor& x);

// Matrix product over the trailing two axes; n and c extents must match.
Tensor matmul(const Tensor& a, const Tensor& b);

// --- normalization ----------------------------------------------------------

Tensor batch_norm_inference(const Tensor& x, const std::vector<double>& mean,
                            const std::vector<double>& var, const std::vector<double>& gamma,
                            const std::vector<double>& beta, double eps = 1e-5);

}  // namespace minidet
