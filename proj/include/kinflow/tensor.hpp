#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace kinflow {

using Index = std::int64_t;

// Malformed on-disk data (tensor files, WAV headers). The message names the
// offending field.
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) {
        throw std::invalid_argument(msg);
    }
}

// Dense row-major float64 array of rank 1..4. Storage is a flat Eigen array
// so elementwise expressions stay vectorized; multi-index access goes through
// operator().
class Tensor {
public:
    Tensor() = default;

    // Zero extents are allowed in memory (an empty token axis is a valid
    // degenerate case); the file format only accepts positive extents.
    explicit Tensor(std::vector<Index> dims) : dims_(std::move(dims)) {
        require(!dims_.empty() && dims_.size() <= 4, "tensor rank must be 1..4");
        Index n = 1;
        for (Index d : dims_) {
            require(d >= 0, "tensor extents must be nonnegative");
            n *= d;
        }
        data_ = Eigen::ArrayXd::Zero(n);
    }

    Tensor(std::initializer_list<Index> dims) : Tensor(std::vector<Index>(dims)) {}

    static Tensor zeros(std::vector<Index> dims) { return Tensor(std::move(dims)); }

    static Tensor full(std::vector<Index> dims, double value) {
        Tensor t(std::move(dims));
        t.data_.setConstant(value);
        return t;
    }

    Index rank() const { return static_cast<Index>(dims_.size()); }
    const std::vector<Index>& dims() const { return dims_; }
    Index dim(Index axis) const { return dims_.at(static_cast<std::size_t>(axis)); }
    Index size() const { return data_.size(); }

    Eigen::ArrayXd& flat() { return data_; }
    const Eigen::ArrayXd& flat() const { return data_; }
    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator()(Index i) { return data_[check1(i)]; }
    double operator()(Index i) const { return data_[check1(i)]; }
    double& operator()(Index i, Index j) { return data_[offset({i, j})]; }
    double operator()(Index i, Index j) const { return data_[offset({i, j})]; }
    double& operator()(Index i, Index j, Index k) { return data_[offset({i, j, k})]; }
    double operator()(Index i, Index j, Index k) const { return data_[offset({i, j, k})]; }
    double& operator()(Index i, Index j, Index k, Index l) { return data_[offset({i, j, k, l})]; }
    double operator()(Index i, Index j, Index k, Index l) const { return data_[offset({i, j, k, l})]; }

    // Flat position of a multi-index; rank must match.
    Index offset(std::initializer_list<Index> idx) const {
        require(static_cast<Index>(idx.size()) == rank(), "index rank mismatch");
        Index pos = 0;
        auto it = idx.begin();
        for (std::size_t a = 0; a < dims_.size(); ++a, ++it) {
            pos = pos * dims_[a] + *it;
        }
        return pos;
    }

    bool same_shape(const Tensor& other) const { return dims_ == other.dims_; }

    bool all_finite() const { return data_.isFinite().all(); }

private:
    Index check1(Index i) const {
        require(rank() == 1, "index rank mismatch");
        return i;
    }

    std::vector<Index> dims_;
    Eigen::ArrayXd data_;
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const std::string& what) {
    require(a.same_shape(b), what + ": shape mismatch");
}

inline std::string shape_string(const Tensor& t) {
    std::string s = "[";
    for (Index a = 0; a < t.rank(); ++a) {
        if (a) s += ",";
        s += std::to_string(t.dim(a));
    }
    return s + "]";
}

}  // namespace kinflow
