#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

namespace ldisc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Dense row-major tensor of fixed rank. Only used for the 3- and 4-index
// objects (policy spreads, memory logits); everything that feeds a linear
// solve is kept as an Eigen matrix.
template <std::size_t Rank>
class DenseTensor {
public:
    using Shape = std::array<std::size_t, Rank>;

    DenseTensor() { shape_.fill(0); }
    explicit DenseTensor(const Shape& shape, double fill = 0.0)
        : shape_(shape),
          data_(std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                                std::multiplies<>()),
                fill) {}

    const Shape& shape() const noexcept { return shape_; }
    std::size_t dim(std::size_t i) const noexcept { return shape_[i]; }
    std::size_t size() const noexcept { return data_.size(); }

    template <typename... Idx>
    double& operator()(Idx... idx) {
        return data_[offset({static_cast<std::size_t>(idx)...})];
    }
    template <typename... Idx>
    double operator()(Idx... idx) const {
        return data_[offset({static_cast<std::size_t>(idx)...})];
    }

    std::vector<double>& data() noexcept { return data_; }
    const std::vector<double>& data() const noexcept { return data_; }

    bool operator==(const DenseTensor&) const = default;

private:
    std::size_t offset(const std::array<std::size_t, Rank>& idx) const {
        std::size_t off = 0;
        for (std::size_t i = 0; i < Rank; ++i) off = off * shape_[i] + idx[i];
        return off;
    }

    Shape shape_;
    std::vector<double> data_;
};

using Tensor3 = DenseTensor<3>;
using Tensor4 = DenseTensor<4>;

/// Softmax of each row.
inline Matrix row_softmax(const Matrix& logits) {
    Matrix out(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const double mx = logits.row(r).maxCoeff();
        double total = 0.0;
        for (Eigen::Index c = 0; c < logits.cols(); ++c) {
            out(r, c) = std::exp(logits(r, c) - mx);
            total += out(r, c);
        }
        out.row(r) /= total;
    }
    return out;
}

/// Back-propagates a gradient on row-softmax probabilities to the logits.
inline Matrix row_softmax_backward(const Matrix& probs, const Matrix& grad_probs) {
    Matrix out(probs.rows(), probs.cols());
    for (Eigen::Index r = 0; r < probs.rows(); ++r) {
        const double inner = probs.row(r).dot(grad_probs.row(r));
        for (Eigen::Index c = 0; c < probs.cols(); ++c)
            out(r, c) = probs(r, c) * (grad_probs(r, c) - inner);
    }
    return out;
}

}  // namespace ldisc
