#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace dragsplat {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

// Dense row-major tensor of doubles. Shape is logical; storage is flat.
struct Tensor {
    std::vector<int> shape;
    Eigen::ArrayXd d;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)), d(Eigen::ArrayXd::Zero(numel_of(shape))) {}

    static long numel_of(const std::vector<int>& s) {
        long n = 1;
        for (int v : s) {
            if (v <= 0) throw std::invalid_argument("Tensor: non-positive dimension");
            n *= v;
        }
        return n;
    }

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }

    static Tensor full(std::vector<int> s, double v) {
        Tensor t(std::move(s));
        t.d.setConstant(v);
        return t;
    }

    static Tensor scalar(double v) { return full({1}, v); }

    static Tensor from(std::vector<int> s, std::vector<double> vals) {
        Tensor t(std::move(s));
        if (static_cast<long>(vals.size()) != t.numel())
            throw std::invalid_argument("Tensor::from: value count does not match shape");
        for (long i = 0; i < t.numel(); ++i) t.d[i] = vals[static_cast<size_t>(i)];
        return t;
    }

    long numel() const { return d.size(); }
    int ndim() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    double& operator()(long i) { return d[i]; }
    double operator()(long i) const { return d[i]; }
    double& operator()(long i, long j) { return d[i * dim(ndim() - 1) + j]; }
    double operator()(long i, long j) const { return d[i * dim(ndim() - 1) + j]; }

    long index3(long i, long j, long k) const {
        return (i * dim(ndim() - 2) + j) * dim(ndim() - 1) + k;
    }
    double& at3(long i, long j, long k) { return d[index3(i, j, k)]; }
    double at3(long i, long j, long k) const { return d[index3(i, j, k)]; }

    // View the flat buffer as a rows x cols row-major matrix.
    MatMap mat(long rows, long cols) {
        if (rows * cols != numel()) throw std::invalid_argument("Tensor::mat: size mismatch");
        return MatMap(d.data(), rows, cols);
    }
    ConstMatMap mat(long rows, long cols) const {
        if (rows * cols != numel()) throw std::invalid_argument("Tensor::mat: size mismatch");
        return ConstMatMap(d.data(), rows, cols);
    }

    bool all_finite() const { return d.isFinite().all(); }
};

inline std::string shape_str(const std::vector<int>& s) {
    std::string r = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) r += "x";
        r += std::to_string(s[i]);
    }
    return r + "]";
}

}  // namespace dragsplat
