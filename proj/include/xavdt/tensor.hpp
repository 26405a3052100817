#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace xavdt {

inline std::string shape_string(const std::vector<int64_t>& shape) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << ")";
    return os.str();
}

// Dense row-major n-d tensor. Scheduler math instantiates T=double, feature
// and detector tensors T=float.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;

    explicit Tensor(std::vector<int64_t> shape, T fill = T{}) : shape_(std::move(shape)) {
        data_.assign(static_cast<size_t>(checked_numel(shape_)), fill);
    }

    static Tensor from_data(std::vector<int64_t> shape, std::vector<T> data) {
        Tensor t;
        if (checked_numel(shape) != static_cast<int64_t>(data.size()))
            throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                        " does not match shape " + xavdt::shape_string(shape));
        t.shape_ = std::move(shape);
        t.data_ = std::move(data);
        return t;
    }

    static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

    const std::vector<int64_t>& shape() const { return shape_; }
    std::string shape_string() const { return xavdt::shape_string(shape_); }
    int rank() const { return static_cast<int>(shape_.size()); }
    int64_t dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& raw() { return data_; }
    const std::vector<T>& raw() const { return data_; }

    T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    const T& operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    template <typename... Idx>
    T& at(Idx... idx) {
        return data_[static_cast<size_t>(offset(idx...))];
    }
    template <typename... Idx>
    const T& at(Idx... idx) const {
        return data_[static_cast<size_t>(offset(idx...))];
    }

    template <typename... Idx>
    int64_t offset(Idx... idx) const {
        const int64_t ids[] = {static_cast<int64_t>(idx)...};
        constexpr size_t n = sizeof...(Idx);
        if (n != shape_.size())
            throw std::invalid_argument("tensor index rank mismatch: got " + std::to_string(n) +
                                        " indices for shape " + xavdt::shape_string(shape_));
        int64_t off = 0;
        for (size_t i = 0; i < n; ++i) {
            if (ids[i] < 0 || ids[i] >= shape_[i])
                throw std::out_of_range("tensor index " + std::to_string(ids[i]) + " outside dim " +
                                        std::to_string(i) + " of shape " + xavdt::shape_string(shape_));
            off = off * shape_[i] + ids[i];
        }
        return off;
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    Tensor reshaped(std::vector<int64_t> shape) const {
        if (checked_numel(shape) != numel())
            throw std::invalid_argument("reshape " + xavdt::shape_string(shape_) + " -> " +
                                        xavdt::shape_string(shape) + " changes element count");
        Tensor t = *this;
        t.shape_ = std::move(shape);
        return t;
    }

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(data_.size());
        for (size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return Tensor<U>::from_data(shape_, std::move(out));
    }

    Tensor& operator+=(const Tensor& o) { return zip(o, [](T a, T b) { return a + b; }); }
    Tensor& operator-=(const Tensor& o) { return zip(o, [](T a, T b) { return a - b; }); }
    Tensor& operator*=(T s) {
        for (auto& v : data_) v *= s;
        return *this;
    }

    friend Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
    friend Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
    friend Tensor operator*(Tensor a, T s) { return a *= s; }
    friend Tensor operator*(T s, Tensor a) { return a *= s; }

    T min() const { return data_.empty() ? T{} : *std::min_element(data_.begin(), data_.end()); }
    T max() const { return data_.empty() ? T{} : *std::max_element(data_.begin(), data_.end()); }

    double sum() const {
        double acc = 0.0;
        for (const auto& v : data_) acc += static_cast<double>(v);
        return acc;
    }
    double mean() const { return data_.empty() ? 0.0 : sum() / static_cast<double>(data_.size()); }

    double norm_l2() const {
        double acc = 0.0;
        for (const auto& v : data_) acc += static_cast<double>(v) * static_cast<double>(v);
        return std::sqrt(acc);
    }
    double norm_linf() const {
        double m = 0.0;
        for (const auto& v : data_) m = std::max(m, std::abs(static_cast<double>(v)));
        return m;
    }

    bool all_finite() const {
        for (const auto& v : data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

private:
    static int64_t checked_numel(const std::vector<int64_t>& shape) {
        int64_t n = 1;
        for (int64_t d : shape) {
            if (d < 0) throw std::invalid_argument("negative tensor dimension in " + xavdt::shape_string(shape));
            n *= d;
        }
        return n;
    }

    template <typename F>
    Tensor& zip(const Tensor& o, F f) {
        if (!same_shape(o))
            throw std::invalid_argument("tensor shape mismatch: " + xavdt::shape_string(shape_) + " vs " +
                                        xavdt::shape_string(o.shape_));
        for (size_t i = 0; i < data_.size(); ++i) data_[i] = f(data_[i], o.data_[i]);
        return *this;
    }

    std::vector<int64_t> shape_;
    std::vector<T> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(what) + ": shape mismatch " + shape_string(a.shape()) +
                                    " vs " + shape_string(b.shape()));
}

}  // namespace xavdt
