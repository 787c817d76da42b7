#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace adafuse {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DimensionError : Error { using Error::Error; };
struct NumericError : Error { using Error::Error; };
struct VocabError : Error { using Error::Error; };
struct AlignmentError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };
struct UsageError : Error { using Error::Error; };

// Dense row-major matrix of doubles. All training arithmetic is 64-bit.
struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> v;

    Mat() = default;
    Mat(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), v(r * c, fill) {}

    double& at(std::size_t r, std::size_t c) { return v[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
    double* row(std::size_t r) { return v.data() + r * cols; }
    const double* row(std::size_t r) const { return v.data() + r * cols; }
    std::size_t size() const { return v.size(); }
};

// Named tensor of rank 1 or 2. The shape is fixed at construction; only the
// values are mutable.
class ParamTensor {
public:
    ParamTensor(std::string name, std::size_t len)
        : name_(std::move(name)), shape_{len}, v_(len, 0.0) {}
    ParamTensor(std::string name, std::size_t rows, std::size_t cols)
        : name_(std::move(name)), shape_{rows, cols}, v_(rows * cols, 0.0) {}

    const std::string& name() const { return name_; }
    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return v_.size(); }
    std::size_t rows() const { return shape_[0]; }
    std::size_t cols() const { return shape_.size() == 2 ? shape_[1] : 1; }

    std::vector<double>& values() { return v_; }
    const std::vector<double>& values() const { return v_; }
    double& operator[](std::size_t i) { return v_[i]; }
    double operator[](std::size_t i) const { return v_[i]; }
    double& at(std::size_t r, std::size_t c) { return v_[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return v_[r * cols() + c]; }

    void fill(double x) { v_.assign(v_.size(), x); }

    void check_finite() const {
        for (double x : v_) {
            if (!std::isfinite(x)) {
                throw NumericError("non-finite value in tensor '" + name_ + "'");
            }
        }
    }

private:
    std::string name_;
    std::vector<std::size_t> shape_;
    std::vector<double> v_;
};

// Ordered, name-addressable collection of parameter tensors. Iteration order
// is insertion order everywhere (updates, clipping, serialization), which is
// what makes reruns byte-identical.
class ParamStore {
public:
    ParamStore() = default;

    ParamTensor& add(ParamTensor t);
    bool has(const std::string& name) const;
    ParamTensor& at(const std::string& name);
    const ParamTensor& at(const std::string& name) const;

    std::size_t count() const { return tensors_.size(); }
    std::size_t scalar_count() const;
    ParamTensor& operator[](std::size_t i) { return tensors_[i]; }
    const ParamTensor& operator[](std::size_t i) const { return tensors_[i]; }

    auto begin() { return tensors_.begin(); }
    auto end() { return tensors_.end(); }
    auto begin() const { return tensors_.begin(); }
    auto end() const { return tensors_.end(); }

    void check_finite() const;
    void zero();

    // Same names and shapes, all values zero.
    static ParamStore zeros_like(const ParamStore& other);

private:
    std::vector<ParamTensor> tensors_;
};

std::uint64_t fnv1a64(const void* data, std::size_t len);
std::uint64_t fnv1a64(const std::string& s);

}  // namespace adafuse
