#include "cosfuse/tensor.hpp"

#include <cmath>
#include <sstream>

#include "cosfuse/errors.hpp"

namespace cosfuse {

Tensor Tensor::scalar(double v) {
    return Tensor({1}, {v});
}

Tensor Tensor::zeros(const std::vector<int>& shape) {
    return full(shape, 0.0);
}

Tensor Tensor::full(const std::vector<int>& shape, double v) {
    if (shape.size() > 2) {
        throw shape_error("tensor rank > 2 not supported");
    }
    size_t n = 1;
    for (int d : shape) {
        if (d <= 0) {
            throw shape_error("non-positive dimension in shape");
        }
        n *= static_cast<size_t>(d);
    }
    return Tensor(shape, std::vector<double>(n, v));
}

Tensor Tensor::vec(std::vector<double> values) {
    const int n = static_cast<int>(values.size());
    return Tensor({n}, std::move(values));
}

Tensor Tensor::mat(int rows, int cols, std::vector<double> values) {
    if (static_cast<size_t>(rows) * static_cast<size_t>(cols) != values.size()) {
        std::ostringstream msg;
        msg << "matrix " << rows << "x" << cols << " needs " << rows * cols
            << " values, got " << values.size();
        throw shape_error(msg.str());
    }
    return Tensor({rows, cols}, std::move(values));
}

double Tensor::item() const {
    if (data_.size() != 1) {
        throw contract_error("item() on tensor of size " + std::to_string(data_.size()));
    }
    return data_[0];
}

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) {
            return false;
        }
    }
    return true;
}

double Tensor::norm2() const {
    double s = 0.0;
    for (double v : data_) {
        s += v * v;
    }
    return std::sqrt(s);
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape_.size(); i++) {
        os << shape_[i] << (i + 1 < shape_.size() ? "x" : "");
    }
    os << "]";
    return os.str();
}

}  // namespace cosfuse
