#include "fulc/weights.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <functional>
#include <iterator>
#include <numeric>
#include <unordered_set>

namespace fulc {

std::size_t Tensor::element_count() const {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

void ModelWeights::add(std::string name, Tensor tensor) {
  if (find(name)) throw ShapeError("duplicate tensor " + name);
  if (tensor.data.size() != tensor.element_count()) throw ShapeError("tensor " + name + " data does not match dims");
  entries_.emplace_back(std::move(name), std::move(tensor));
}

const Tensor* ModelWeights::find(std::string_view name) const {
  auto it = std::find_if(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == name; });
  return it == entries_.end() ? nullptr : &it->second;
}

std::size_t ModelWeights::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.data.size();
  return n;
}

namespace {

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) out_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void f32(float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    u32(bits);
  }
  std::vector<unsigned char> take() { return std::move(out_); }

 private:
  std::vector<unsigned char> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<unsigned char>& in) : in_(in) {}
  void need(std::size_t n, const char* what) const {
    if (in_.size() - pos_ < n) {
      throw ParseError(std::string("weight file truncated while reading ") + what + " at byte " + std::to_string(pos_));
    }
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return in_[pos_++];
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    std::uint16_t v = std::uint16_t(in_[pos_] | in_[pos_ + 1] << 8);
    pos_ += 2;
    return v;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(in_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32(const char* what) {
    const std::uint32_t bits = u32(what);
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
  }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(in_.begin() + pos_, in_.begin() + pos_ + n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  const std::vector<unsigned char>& in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<unsigned char> encode_weights(const ModelWeights& weights) {
  Writer w;
  w.bytes("FULC", 4);
  w.u32(kWeightFormatVersion);
  w.u32(static_cast<std::uint32_t>(weights.size()));
  for (const auto& [name, t] : weights.entries()) {
    if (name.size() > 0xFFFF) throw ShapeError("tensor name too long: " + name.substr(0, 32));
    if (t.dims.size() > 0xFF) throw ShapeError("tensor rank too large: " + name);
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.u8(static_cast<std::uint8_t>(t.dims.size()));
    for (auto d : t.dims) w.u32(d);
    for (float f : t.data) w.f32(f);
  }
  return w.take();
}

ModelWeights decode_weights(const std::vector<unsigned char>& bytes) {
  Reader r(bytes);
  if (r.str(4, "magic") != "FULC") throw ParseError("not a weight file (bad magic)");
  const std::uint32_t version = r.u32("version");
  if (version != kWeightFormatVersion) throw ParseError("unsupported weight file version " + std::to_string(version));
  const std::uint32_t count = r.u32("tensor count");
  ModelWeights weights;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint16_t len = r.u16("name length");
    std::string name = r.str(len, "tensor name");
    Tensor t;
    const std::uint8_t rank = r.u8("rank");
    for (int d = 0; d < rank; ++d) t.dims.push_back(r.u32("dims"));
    const std::size_t n = t.element_count();
    r.need(n * 4, "tensor data");
    t.data.resize(n);
    for (auto& f : t.data) f = r.f32("tensor data");
    if (weights.find(name)) throw ParseError("duplicate tensor " + name);
    weights.add(std::move(name), std::move(t));
  }
  if (r.remaining() != 0) throw ParseError(std::to_string(r.remaining()) + " trailing bytes after last tensor");
  return weights;
}

void save_weights(const ModelWeights& weights, const std::string& path) {
  const auto bytes = encode_weights(weights);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write weight file " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ParseError("write failed for " + path);
}

ModelWeights load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open weight file " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_weights(bytes);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

std::vector<std::uint32_t> WeightBinder::dims_of(Index rows, Index cols, int rank) {
  switch (rank) {
    case 0: return {};
    case 1: return {static_cast<std::uint32_t>(rows * cols)};
    default: return {static_cast<std::uint32_t>(rows), static_cast<std::uint32_t>(cols)};
  }
}

std::string WeightBinder::dims_string(const std::vector<std::uint32_t>& dims) {
  std::string s = "[";
  for (std::size_t i = 0; i < dims.size(); ++i) s += (i ? "," : "") + std::to_string(dims[i]);
  return s + "]";
}

void WeightBinder::finish() const {
  std::vector<std::string> unknown;
  const std::unordered_set<std::string> seen(seen_.begin(), seen_.end());
  for (const auto& [name, t] : weights_.entries()) {
    if (!seen.count(name)) unknown.push_back(name);
  }
  if (missing_.empty() && mismatched_.empty() && unknown.empty()) return;
  std::string msg = "weights do not match the model:";
  auto list = [&](const char* label, const std::vector<std::string>& names) {
    if (names.empty()) return;
    msg += std::string(" ") + label + ":";
    for (const auto& n : names) msg += " " + n;
    msg += ";";
  };
  list("missing", missing_);
  list("shape mismatch", mismatched_);
  list("unknown", unknown);
  throw ParseError(msg);
}

}  // namespace fulc
