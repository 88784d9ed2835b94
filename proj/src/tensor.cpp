#include "egc/tensor.hpp"

#include <Eigen/Core>

#include <numeric>
#include <sstream>

namespace egc {

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

[[noreturn]] void shape_mismatch(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": shape mismatch " + a.str() + " vs " + b.str());
}

}  // namespace

Shape::Shape(std::initializer_list<int> dims) : Shape(std::span<const int>(dims.begin(), dims.size())) {}

Shape::Shape(std::span<const int> dims) {
  if (dims.size() > kMaxRank) throw ShapeError("invalid shape: rank " + std::to_string(dims.size()) + " > 4");
  rank_ = static_cast<int>(dims.size());
  std::copy(dims.begin(), dims.end(), dims_.begin());
}

int Shape::operator[](int axis) const {
  if (axis < 0 || axis >= rank_) throw ShapeError("axis " + std::to_string(axis) + " out of range for " + str());
  return dims_[axis];
}

std::size_t Shape::numel() const noexcept {
  if (rank_ == 0) return 0;
  std::size_t n = 1;
  for (int i = 0; i < rank_; ++i) n *= static_cast<std::size_t>(dims_[i]);
  return n;
}

std::string Shape::str() const {
  std::ostringstream out;
  out << '[';
  for (int i = 0; i < rank_; ++i) out << (i ? "," : "") << dims_[i];
  out << ']';
  return out.str();
}

Shape validated_shape(std::span<const int> dims) {
  if (dims.empty() || dims.size() > Shape::kMaxRank)
    throw ShapeError("invalid shape: rank must be in [1, 4]");
  for (int d : dims)
    if (d < 1) throw ShapeError("invalid shape: extent " + std::to_string(d) + " < 1");
  return Shape(dims);
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, T fill)
    : shape_(validated_shape(shape.dims())), data_(shape_.numel(), fill) {}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> values)
    : shape_(validated_shape(shape.dims())), data_(std::move(values)) {
  if (data_.size() != shape_.numel())
    throw ShapeError("tensor " + shape_.str() + " needs " + std::to_string(shape_.numel()) + " values, got " +
                     std::to_string(data_.size()));
}

template <typename T>
BasicTensor<T> BasicTensor<T>::reshaped(Shape shape) const {
  return BasicTensor<T>(shape, data_);
}

template <typename T>
void BasicTensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
BasicTensor<T> create(const Shape& shape, T fill) {
  return BasicTensor<T>(shape, fill);
}

template <typename T>
BasicTensor<T> elementwise_add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (!(a.shape() == b.shape())) shape_mismatch("elementwise_add", a.shape(), b.shape());
  BasicTensor<T> out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, T k) {
  BasicTensor<T> out = a;
  for (auto& v : out.data()) v *= k;
  return out;
}

template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int p, int k, const T* a, const T* b, T* c, bool accumulate) {
  using Map = Eigen::Map<const RowMatrix<T>>;
  Eigen::Map<RowMatrix<T>> cm(c, m, p);
  auto run = [&](const auto& lhs, const auto& rhs) {
    if (accumulate)
      cm.noalias() += lhs * rhs;
    else
      cm.noalias() = lhs * rhs;
  };
  if (!trans_a && !trans_b) run(Map(a, m, k), Map(b, k, p));
  else if (trans_a && !trans_b) run(Map(a, k, m).transpose(), Map(b, k, p));
  else if (!trans_a && trans_b) run(Map(a, m, k), Map(b, p, k).transpose());
  else run(Map(a, k, m).transpose(), Map(b, p, k).transpose());
}

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2) throw ShapeError("matmul: operands must be rank 2");
  if (a.dim(1) != b.dim(0)) shape_mismatch("matmul", a.shape(), b.shape());
  BasicTensor<T> out(Shape{a.dim(0), b.dim(1)});
  gemm<T>(false, false, a.dim(0), b.dim(1), a.dim(1), a.ptr(), b.ptr(), out.ptr(), false);
  return out;
}

template <typename T>
BasicTensor<T> pad_nchw(const BasicTensor<T>& a, int top, int bottom, int left, int right) {
  if (a.rank() != 4) throw ShapeError("pad_nchw: input must be rank 4, got " + a.shape().str());
  if (top < 0 || bottom < 0 || left < 0 || right < 0) throw ShapeError("pad_nchw: negative pad");
  const int n = a.dim(0), c = a.dim(1), h = a.dim(2), w = a.dim(3);
  BasicTensor<T> out(Shape{n, c, h + top + bottom, w + left + right});
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < h; ++y)
        std::copy_n(&a.at(i, ch, y, 0), w, &out.at(i, ch, y + top, left));
  return out;
}

template <typename T>
T sum(const BasicTensor<T>& a) {
  return std::accumulate(a.data().begin(), a.data().end(), T{});
}

#define EGC_INSTANTIATE(T)                                                                        \
  template class BasicTensor<T>;                                                                  \
  template BasicTensor<T> create(const Shape&, T);                                                \
  template BasicTensor<T> elementwise_add(const BasicTensor<T>&, const BasicTensor<T>&);          \
  template BasicTensor<T> scale(const BasicTensor<T>&, T);                                        \
  template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&);                   \
  template BasicTensor<T> pad_nchw(const BasicTensor<T>&, int, int, int, int);                    \
  template T sum(const BasicTensor<T>&);                                                          \
  template void gemm(bool, bool, int, int, int, const T*, const T*, T*, bool);

EGC_INSTANTIATE(float)
EGC_INSTANTIATE(double)

#undef EGC_INSTANTIATE

}  // namespace egc
