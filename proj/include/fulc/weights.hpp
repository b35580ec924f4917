#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fulc/core.hpp"

namespace fulc {

// Dense f32 tensor, row-major, dims outermost first. Rank 0 holds one value.
struct Tensor {
  std::vector<std::uint32_t> dims;
  std::vector<float> data;

  std::size_t element_count() const;
  bool operator==(const Tensor&) const = default;
};

// Named tensors kept in insertion (layer) order.
class ModelWeights {
 public:
  void add(std::string name, Tensor tensor);
  const Tensor* find(std::string_view name) const;
  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;
  bool operator==(const ModelWeights&) const = default;

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

// Binary layout, little-endian:
//   "FULC" | u32 version (1) | u32 tensor count |
//   per tensor: u16 name length | UTF-8 name | u8 rank | u32 dims[rank] | f32 data[prod(dims)]
inline constexpr std::uint32_t kWeightFormatVersion = 1;

std::vector<unsigned char> encode_weights(const ModelWeights& weights);
ModelWeights decode_weights(const std::vector<unsigned char>& bytes);
void save_weights(const ModelWeights& weights, const std::string& path);
ModelWeights load_weights(const std::string& path);

// Collects problems while filling a parameter set from a ModelWeights and reports them all at once.
class WeightBinder {
 public:
  explicit WeightBinder(const ModelWeights& weights) : weights_(weights) {}

  template <typename Scalar>
  void bind(const std::string& name, Eigen::Map<Mat<Scalar>> dst, int rank) {
    seen_.push_back(name);
    const Tensor* t = weights_.find(name);
    if (!t) {
      missing_.push_back(name);
      return;
    }
    const auto expect = dims_of(dst.rows(), dst.cols(), rank);
    if (t->dims != expect) {
      mismatched_.push_back(name + " (expected " + dims_string(expect) + ", got " + dims_string(t->dims) + ")");
      return;
    }
    // Row-major file order into a column-major map.
    const Index cols = dst.cols();
    for (Index r = 0; r < dst.rows(); ++r) {
      for (Index c = 0; c < cols; ++c) dst(r, c) = Scalar(t->data[r * cols + c]);
    }
  }

  // Throws ParseError listing every tensor that failed to bind or was never requested.
  void finish() const;

  static std::vector<std::uint32_t> dims_of(Index rows, Index cols, int rank);
  static std::string dims_string(const std::vector<std::uint32_t>& dims);

 private:
  const ModelWeights& weights_;
  std::vector<std::string> seen_;
  std::vector<std::string> missing_;
  std::vector<std::string> mismatched_;
};

template <typename Derived>
Tensor to_tensor(const Eigen::MatrixBase<Derived>& src, int rank) {
  Tensor t;
  t.dims = WeightBinder::dims_of(src.rows(), src.cols(), rank);
  t.data.reserve(src.size());
  for (Index r = 0; r < src.rows(); ++r) {
    for (Index c = 0; c < src.cols(); ++c) t.data.push_back(float(src(r, c)));
  }
  return t;
}

// Appends every tensor of a visitable parameter set under `prefix`.
template <typename Params>
void export_tensors(const Params& params, const std::string& prefix, ModelWeights& out) {
  params.visit([&](std::string_view name, auto view, int rank) {
    out.add(prefix + std::string(name), to_tensor(view, rank));
  });
}

template <typename Params>
void import_tensors(Params& params, const std::string& prefix, WeightBinder& binder) {
  params.visit([&](std::string_view name, auto view, int rank) { binder.bind(prefix + std::string(name), view, rank); });
}

}  // namespace fulc
