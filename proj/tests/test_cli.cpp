#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "fulc/cli.hpp"
#include "fulc/wav.hpp"

using namespace fulc;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "fulc");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(int(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "fulc_cli_test";
  fs::create_directories(dir);
  return (dir / name).string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("usage errors exit 2") {
  CHECK(run({}).code == kExitUsage);
  CHECK(run({"frobnicate"}).code == kExitUsage);
  CHECK(run({"count", "--cell", "lstm"}).code == kExitUsage);
  CHECK(run({"bench", "--threads", "4", "--iters", "1"}).code == kExitUsage);
  const Run help = run({"--help"});
  CHECK(help.code == kExitOk);
  CHECK(help.out.find("step,mean_h,mean_abs_h") != std::string::npos);
  CHECK(help.out.find("epoch,train_loss,val_loss,learning_rate") != std::string::npos);
}

TEST_CASE("count") {
  const Run r = run({"count"});
  CHECK(r.code == kExitOk);
  CHECK(r.out.find("Fast-ULCNet") != std::string::npos);
  CHECK(r.out.find("params ratio Fast/ULC: 0.496") != std::string::npos);
  CHECK(r.out.find("339265 vs 683957") != std::string::npos);
}

TEST_CASE("drift") {
  const std::string csv = scratch("drift.csv");
  const Run fast = run({"drift", "--cell", "fastgrnn", "--mode", "adversarial", "--steps", "10000", "--out", csv});
  CHECK(fast.code == kExitOk);
  CHECK(fast.out.find("final mean_abs_h: 7998") != std::string::npos);
  const std::string body = slurp(csv);
  CHECK(body.rfind("step,mean_h,mean_abs_h\n1,", 0) == 0);
  CHECK(std::count(body.begin(), body.end(), '\n') == 10001);

  const Run comfi = run({"drift", "--cell", "comfi", "--steps", "10000", "--out", csv});
  CHECK(comfi.code == kExitOk);
  CHECK(comfi.out.find("closed-form bound: 98.51") != std::string::npos);

  CHECK(run({"drift", "--cell", "comfi", "--steps", "0", "--out", csv}).code == kExitOk);
  CHECK(slurp(csv) == "step,mean_h,mean_abs_h\n");
  CHECK(run({"drift", "--cell", "comfi", "--gamma", "1.5", "--out", csv}).code == kExitUsage);
  CHECK(run({"drift", "--steps", "10", "--out", "/nonexistent/dir/x.csv"}).code == kExitUsage);
}

TEST_CASE("enhance") {
  const std::string weights = scratch("model.fulc"), in = scratch("in.wav"), out = scratch("out.wav");
  std::mt19937_64 rng(1);
  std::normal_distribution<float> d(0.0f, 0.1f);
  std::vector<float> x(160000);
  for (auto& v : x) v = d(rng);
  write_wav(in, x);

  const Run missing = run({"enhance", "--in", in, "--out", out, "--weights", scratch("absent.fulc")});
  CHECK(missing.code == kExitUsage);
  CHECK(missing.err.find(scratch("absent.fulc")) != std::string::npos);

  REQUIRE(run({"initweights", "--cell", "fastgrnn", "--seed", "3", "--out", weights, "--identity-mask"}).code == kExitOk);
  const Run ok = run({"enhance", "--in", in, "--out", out, "--weights", weights, "--reference", in});
  CHECK(ok.code == kExitOk);
  CHECK(read_wav(out).samples.size() == x.size());
  CHECK(ok.out.find("SI-SDR: ") != std::string::npos);

  // weights of the wrong family
  CHECK(run({"enhance", "--in", in, "--out", out, "--weights", weights, "--cell", "gru"}).code == kExitUsage);
  std::ofstream(scratch("bad.wav")) << "not audio";
  CHECK(run({"enhance", "--in", scratch("bad.wav"), "--out", out, "--weights", weights}).code == kExitUsage);
}

TEST_CASE("gradcheck and bench") {
  const Run g = run({"gradcheck", "--seeds", "5"});
  CHECK(g.code == kExitOk);
  CHECK(g.out.find("gradcheck passed") != std::string::npos);
  CHECK(run({"gradcheck", "--seeds", "3", "--cell", "gru"}).code == kExitOk);
  CHECK(run({"gradcheck", "--seeds", "0"}).code == kExitUsage);
  const Run b = run({"bench", "--iters", "20", "--warmup", "2", "--compare"});
  CHECK(b.code == kExitOk);
  CHECK(b.out.find("RTF") != std::string::npos);
  CHECK(b.out.find("gru") != std::string::npos);
}

TEST_CASE("traincell writes weights and curve") {
  const std::string w = scratch("toy.fulc"), csv = scratch("toy.csv");
  const Run r = run({"traincell", "--cell", "comfi", "--seed", "2", "--out", w, "--loss-csv", csv, "--epochs", "2",
                     "--steps-per-epoch", "20"});
  CHECK(r.code == kExitOk);
  CHECK(slurp(csv).rfind("epoch,train_loss,val_loss,learning_rate\n", 0) == 0);
  const std::string trace = scratch("trained.csv");
  CHECK(run({"drift", "--cell", "comfi", "--mode", "trained", "--weights", w, "--steps", "500", "--out", trace}).code ==
        kExitOk);
  CHECK(run({"drift", "--cell", "gru", "--mode", "trained", "--weights", w, "--steps", "5", "--out", trace}).code ==
        kExitUsage);
}
