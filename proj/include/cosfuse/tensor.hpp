#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace cosfuse {

// Dense rank-0/1/2 array of doubles, row-major. Scalars are represented as
// shape {1}. Immutable by convention once handed to a Graph.
class Tensor {
  public:
    Tensor() = default;

    static Tensor scalar(double v);
    static Tensor zeros(const std::vector<int>& shape);
    static Tensor full(const std::vector<int>& shape, double v);
    static Tensor vec(std::vector<double> values);
    static Tensor mat(int rows, int cols, std::vector<double> values);

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    // Row/col accessors are only meaningful for rank-2 tensors.
    int rows() const { return shape_.at(0); }
    int cols() const { return shape_.at(1); }
    int size() const { return static_cast<int>(data_.size()); }

    bool is_scalar() const { return data_.size() == 1 && rank() <= 1; }
    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    double item() const;
    double& at(int i) { return data_[static_cast<size_t>(i)]; }
    double at(int i) const { return data_[static_cast<size_t>(i)]; }
    double& at(int r, int c) { return data_[static_cast<size_t>(r) * cols() + c]; }
    double at(int r, int c) const { return data_[static_cast<size_t>(r) * cols() + c]; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool all_finite() const;
    double norm2() const;

    std::string shape_str() const;

  private:
    Tensor(std::vector<int> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {}

    std::vector<int> shape_;
    std::vector<double> data_;
};

}  // namespace cosfuse
