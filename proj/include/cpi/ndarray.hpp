#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace cpi {

// Physical scale of one array axis: coordinate(i) = origin + i * pitch (mm).
struct Axis {
    std::string name;
    double origin = 0.0;
    double pitch = 1.0;

    double coord(std::ptrdiff_t i) const { return origin + static_cast<double>(i) * pitch; }
    // fractional index of a physical coordinate
    double index_of(double x) const { return (x - origin) / pitch; }
};

// Dense row-major double array with named, physically scaled axes.
// This is the in-memory form of the self-describing binary container
// used for correlation tensors, kernels slices and refocused images.
class NdArray {
public:
    NdArray() = default;
    NdArray(std::vector<std::size_t> dims, std::vector<Axis> axes)
        : dims_(std::move(dims)), axes_(std::move(axes)) {
        if (axes_.size() != dims_.size())
            throw std::invalid_argument("NdArray: axes/dims rank mismatch");
        std::size_t n = 1;
        for (auto d : dims_) n *= d;
        data_.assign(n, 0.0);
    }

    std::size_t rank() const { return dims_.size(); }
    const std::vector<std::size_t>& dims() const { return dims_; }
    std::size_t dim(std::size_t i) const { return dims_.at(i); }
    const std::vector<Axis>& axes() const { return axes_; }
    const Axis& axis(std::size_t i) const { return axes_.at(i); }
    Axis& axis(std::size_t i) { return axes_.at(i); }
    std::size_t size() const { return data_.size(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& raw() { return data_; }
    const std::vector<double>& raw() const { return data_; }

    double& operator[](std::size_t flat) { return data_[flat]; }
    double operator[](std::size_t flat) const { return data_[flat]; }

    double& at2(std::size_t i, std::size_t j) { return data_[i * dims_[1] + j]; }
    double at2(std::size_t i, std::size_t j) const { return data_[i * dims_[1] + j]; }

    std::size_t flat4(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
        return ((i * dims_[1] + j) * dims_[2] + k) * dims_[3] + l;
    }

private:
    std::vector<std::size_t> dims_;
    std::vector<Axis> axes_;
    std::vector<double> data_;
};

} // namespace cpi
