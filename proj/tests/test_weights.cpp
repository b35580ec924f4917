#include <doctest.h>

#include <cstdio>
#include <cstring>
#include <filesystem>

#include "fulc/model.hpp"

using namespace fulc;

namespace {

ModelWeights sample() {
  ModelWeights w;
  w.add("a.matrix", Tensor{{2, 3}, {1.0f, -2.0f, 3.5f, 0.0f, -0.0f, 1e-30f}});
  w.add("a.vector", Tensor{{2}, {std::numeric_limits<float>::max(), std::numeric_limits<float>::denorm_min()}});
  w.add("scalar", Tensor{{}, {0.999f}});
  return w;
}

std::string parse_message(const std::vector<unsigned char>& bytes) {
  try {
    decode_weights(bytes);
  } catch (const ParseError& e) {
    return e.what();
  }
  return "";
}

std::string bind_message(const ModelWeights& w) {
  try {
    Model<float>::from_weights(ModelConfig::fast_ulcnet(), w);
  } catch (const ParseError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("encoded layout") {
  const auto bytes = encode_weights(sample());
  CHECK(std::memcmp(bytes.data(), "FULC", 4) == 0);
  CHECK(bytes[4] == 1);  // version
  CHECK(bytes[8] == 3);  // tensor count
  CHECK(bytes[12] == 8);  // name length of "a.matrix"
  CHECK(std::string(bytes.begin() + 14, bytes.begin() + 22) == "a.matrix");
  CHECK(bytes[22] == 2);  // rank
  const std::size_t header = 12 + (2 + 8 + 1 + 8 + 24) + (2 + 8 + 1 + 4 + 8) + (2 + 6 + 1 + 4);
  CHECK(bytes.size() == header);
}

TEST_CASE("bitwise round trip through a file") {
  const ModelWeights w = sample();
  const auto path = (std::filesystem::temp_directory_path() / "fulc_weights_test.bin").string();
  save_weights(w, path);
  const ModelWeights back = load_weights(path);
  std::remove(path.c_str());
  REQUIRE(back.size() == 3);
  CHECK(back == w);
  const Tensor* v = back.find("a.vector");
  REQUIRE(v);
  CHECK(std::memcmp(v->data.data(), w.find("a.vector")->data.data(), 8) == 0);
  CHECK(std::signbit(back.find("a.matrix")->data[4]));
  CHECK(back.entries()[2].first == "scalar");
}

TEST_CASE("malformed files") {
  const auto good = encode_weights(sample());
  for (std::size_t cut : {std::size_t(0), std::size_t(3), std::size_t(10), std::size_t(13), std::size_t(30), good.size() - 1}) {
    std::vector<unsigned char> truncated(good.begin(), good.begin() + cut);
    CAPTURE(cut);
    CHECK_FALSE(parse_message(truncated).empty());
  }
  const std::vector<unsigned char> cut_data(good.begin(), good.end() - 2);
  CHECK(parse_message(cut_data).find("truncated") != std::string::npos);
  auto magic = good;
  magic[0] = 'X';
  CHECK(parse_message(magic).find("magic") != std::string::npos);
  auto version = good;
  version[4] = 2;
  CHECK(parse_message(version).find("version") != std::string::npos);
  auto trailing = good;
  trailing.push_back(0);
  CHECK(parse_message(trailing).find("trailing") != std::string::npos);

  CHECK_THROWS_AS(load_weights("/nonexistent/file.bin"), ParseError);
  ModelWeights dup;
  dup.add("x", Tensor{{}, {1.0f}});
  CHECK_THROWS_AS(dup.add("x", Tensor{{}, {2.0f}}), ShapeError);
  CHECK_THROWS_AS(dup.add("y", Tensor{{3}, {2.0f}}), ShapeError);
}

TEST_CASE("binding reports missing, mismatched and unknown tensors") {
  const ModelWeights full = Model<float>::build(ModelConfig::fast_ulcnet(), 4).export_weights();
  CHECK(bind_message(full).empty());

  ModelWeights missing, reshaped, extra;
  for (const auto& [name, t] : full.entries()) {
    if (name != "subband.1.0.U") missing.add(name, t);
    if (name == "fc.0.weight") {
      reshaped.add(name, Tensor{{t.dims[1], t.dims[0]}, t.data});
    } else {
      reshaped.add(name, t);
    }
    extra.add(name, t);
  }
  extra.add("stray.tensor", Tensor{{}, {0.0f}});
  CHECK(bind_message(missing).find("missing: subband.1.0.U;") != std::string::npos);
  CHECK(bind_message(reshaped).find("shape mismatch: fc.0.weight (expected [257,256], got [256,257])") !=
        std::string::npos);
  CHECK(bind_message(extra).find("unknown: stray.tensor") != std::string::npos);
}

TEST_CASE("tensor names of the default graph") {
  const ModelWeights w = Model<float>::build(ModelConfig::for_cell(CellKind::Comfi), 0).export_weights();
  for (const char* name : {"conv_block.0.depthwise", "conv_block.3.pointwise", "freq_rnn.fwd.W", "freq_rnn.bwd.gamma",
                           "freq_pointwise.kernel", "subband.0.1.nu_raw", "fc.1.bias", "stage2.conv.1.kernel",
                           "stage2.pointwise.bias"}) {
    CAPTURE(name);
    CHECK(w.find(name) != nullptr);
  }
  CHECK(w.find("subband.0.1.lambda")->dims.empty());
  CHECK(w.find("conv_block.0.depthwise")->dims == std::vector<std::uint32_t>{3, 16});
}
