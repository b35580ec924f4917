#include "fulc/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fulc/bench.hpp"
#include "fulc/drift.hpp"
#include "fulc/model.hpp"
#include "fulc/train.hpp"
#include "fulc/wav.hpp"

namespace fulc {
namespace {

constexpr const char* kFooter = R"(CSV outputs:
  drift      step,mean_h,mean_abs_h          (one row per timestep, step counted from 1)
  traincell  epoch,train_loss,val_loss,learning_rate

Exit codes: 0 success, 1 verification failure, 2 usage or I/O error.)";

// Failure that maps to a specific exit code, reported as "error: <message>".
struct CliFailure : std::runtime_error {
  CliFailure(int code, const std::string& what) : std::runtime_error(what), code(code) {}
  int code;
};

void require_file(const std::string& path, const char* what) {
  if (!std::filesystem::is_regular_file(path)) throw CliFailure(kExitUsage, std::string(what) + " not found: " + path);
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw CliFailure(kExitUsage, "cannot write " + path);
  return out;
}

struct Options {
  std::string in, out, weights, reference, cell = "fastgrnn", mode = "adversarial", loss_csv;
  long steps = 10000;
  int iters = 10000, threads = 1, seeds = 100, warmup = kBenchWarmupFrames, epochs = 40, steps_per_epoch = 200;
  std::uint64_t seed = 1;
  double gamma = 0.99;
  bool compare = false, identity = false, all_cells = false;
};

// ---------------------------------------------------------------------------------------------

int cmd_enhance(const Options& o, std::ostream& out) {
  require_file(o.in, "input WAV");
  require_file(o.weights, "weights file");
  if (!o.reference.empty()) require_file(o.reference, "reference WAV");
  const ModelConfig cfg = ModelConfig::for_cell(parse_cell_kind(o.cell));
  const auto model = Model<float>::from_weights(cfg, load_weights(o.weights));
  const WavData wav = read_wav(o.in, cfg.stft.sample_rate);
  const std::vector<float> enhanced = model.enhance_utterance(wav.samples);
  write_wav(o.out, enhanced, cfg.stft.sample_rate);
  out << "wrote " << o.out << " (" << enhanced.size() << " samples)\n";
  if (!o.reference.empty()) {
    const WavData ref = read_wav(o.reference, cfg.stft.sample_rate);
    if (ref.samples.size() != enhanced.size()) {
      throw CliFailure(kExitUsage, "reference length " + std::to_string(ref.samples.size()) +
                                       " differs from input length " + std::to_string(enhanced.size()));
    }
    const auto score = si_sdr<float>(ref.samples, enhanced);
    if (!score) throw CliFailure(kExitUsage, "SI-SDR undefined: reference or output is silent");
    out << std::fixed << std::setprecision(2) << "SI-SDR: " << *score << " dB\n";
  }
  return kExitOk;
}

int cmd_initweights(const Options& o, std::ostream& out) {
  const ModelConfig cfg = ModelConfig::for_cell(parse_cell_kind(o.cell));
  auto model = Model<float>::build(cfg, o.seed);
  if (o.identity) model.set_identity_mask();
  save_weights(model.export_weights(), o.out);
  out << "wrote " << o.out << " (" << count_params(model) << " parameters)\n";
  return kExitOk;
}

int cmd_drift(const Options& o, std::ostream& out) {
  if (o.steps < 0) throw CliFailure(kExitUsage, "--steps must be non-negative");
  const CellKind kind = parse_cell_kind(o.cell);
  DriftTrace trace;
  std::optional<double> bound;
  if (o.mode == "adversarial") {
    const AdversarialCell adv;
    const Mat<double> inputs = Mat<double>::Zero(1, o.steps);
    const Vec<double> h0 = Vec<double>::Zero(1);
    switch (kind) {
      case CellKind::FastGrnn: trace = drift_trace(adv.fastgrnn(), inputs, h0); break;
      case CellKind::Comfi:
        if (!(o.gamma > 0.0 && o.gamma < 1.0)) throw CliFailure(kExitUsage, "--gamma must lie in (0, 1)");
        trace = drift_trace(adv.comfi(o.gamma), inputs, h0);
        bound = adv.comfi_bound(o.gamma);
        break;
      case CellKind::Gru: {
        auto p = GruParams<double>::zeros(1, 1);
        p.b_z(0) = adv.gate_bias;
        p.b_h(0) = adv.candidate_bias;
        trace = drift_trace(p, inputs, h0);
        break;
      }
    }
  } else if (o.mode == "trained") {
    ToyTaskConfig task;
    task.seed = o.seed;
    ToyTrainResult toy;
    if (!o.weights.empty()) {
      require_file(o.weights, "toy weights file");
      toy = ToyTrainResult::from_weights(load_weights(o.weights));
      if (toy.kind != kind) {
        throw CliFailure(kExitUsage, "toy weights hold a " + std::string(cell_kind_name(toy.kind)) + " cell, not " + o.cell);
      }
    } else {
      toy = train_cell_toy(kind, task, OptimizerConfig{});
    }
    task.input_dim = int(input_dim(toy.cell));
    const ToySequence seq = make_toy_sequence(task, 0xD81F7ull, int(o.steps));
    const Vec<double> h0 = Vec<double>::Zero(hidden_dim(toy.cell));
    trace = std::visit([&](const auto& p) { return drift_trace(p, seq.noisy, h0); }, toy.cell);
    if (const auto* comfi = std::get_if<ComfiParams<double>>(&toy.cell)) bound = comfi_state_bound(*comfi);
  } else {
    throw CliFailure(kExitUsage, "--mode must be adversarial or trained");
  }

  auto csv = open_output(o.out);
  trace.write_csv(csv);
  out << "wrote " << o.out << " (" << trace.size() << " steps)\n";
  if (trace.size() > 0) {
    out << std::setprecision(6) << "final mean_abs_h: " << trace.mean_abs_h.back() << "\n";
    out << "max |mean_h|: " << max_abs(trace.mean_h) << "\n";
  }
  if (bound) out << "closed-form bound: " << *bound << "\n";
  return kExitOk;
}

void print_bench(std::ostream& out, CellKind kind, const BenchResult& r) {
  out << std::left << std::setw(10) << cell_kind_name(kind) << std::right << std::fixed << std::setprecision(4)
      << " RTF " << r.rtf << "  (" << std::setprecision(1) << r.mean_frame_seconds * 1e6 << " us/frame, "
      << r.iterations << " iters, " << r.warmup << " warm-up)\n";
}

int cmd_bench(const Options& o, std::ostream& out) {
  if (o.threads != 1) throw CliFailure(kExitUsage, "only --threads 1 is supported");
  if (o.iters < 1) throw CliFailure(kExitUsage, "--iters must be at least 1");
  const CellKind kind = parse_cell_kind(o.cell);
  const auto model = Model<float>::build(ModelConfig::for_cell(kind), o.seed);
  const BenchResult r = rtf_bench(model, o.iters, o.warmup, o.seed);
  print_bench(out, kind, r);
  if (o.compare) {
    const CellKind other = kind == CellKind::Gru ? CellKind::FastGrnn : CellKind::Gru;
    const auto other_model = Model<float>::build(ModelConfig::for_cell(other), o.seed);
    const BenchResult ro = rtf_bench(other_model, o.iters, o.warmup, o.seed);
    print_bench(out, other, ro);
    const double fast = kind == CellKind::Gru ? ro.rtf : r.rtf;
    const double gru = kind == CellKind::Gru ? r.rtf : ro.rtf;
    out << std::setprecision(1) << "FastGRNN-based model is " << 100.0 * (1.0 - fast / gru) << "% faster than GRU\n";
  }
  return kExitOk;
}

int cmd_count(const Options& o, std::ostream& out) {
  auto row = [&](const char* label, const ModelConfig& cfg) {
    const LayerPlan plan = LayerPlan::from(cfg);
    out << std::left << std::setw(22) << label << std::right << std::fixed << std::setprecision(3) << std::setw(10)
        << plan.total_params() / 1e6 << std::setw(10) << plan.total_macs() / 1e6 << "\n";
    return plan;
  };
  out << std::left << std::setw(22) << "model" << std::right << std::setw(10) << "params(M)" << std::setw(10)
      << "MACs(M)" << "\n";
  const LayerPlan fast = row("Fast-ULCNet", ModelConfig::fast_ulcnet());
  const LayerPlan ulc = row("ULCNet (GRU)", ModelConfig::ulcnet());
  if (!o.cell.empty() && o.cell != "fastgrnn" && o.cell != "gru") {
    row(("cell=" + o.cell).c_str(), ModelConfig::for_cell(parse_cell_kind(o.cell)));
  }
  out << std::setprecision(3) << "params ratio Fast/ULC: " << double(fast.total_params()) / ulc.total_params() << "\n";
  out << "MACs ratio Fast/ULC:   " << double(fast.total_macs()) / ulc.total_macs() << "\n";
  out << "parameters: " << fast.total_params() << " vs " << ulc.total_params() << "; MACs per frame: "
      << fast.total_macs() << " vs " << ulc.total_macs() << "\n";
  return kExitOk;
}

int cmd_gradcheck(const Options& o, std::ostream& out) {
  if (o.seeds < 1) throw CliFailure(kExitUsage, "--seeds must be at least 1");
  std::vector<CellKind> kinds;
  if (o.all_cells) {
    kinds = {CellKind::Gru, CellKind::FastGrnn, CellKind::Comfi};
  } else {
    kinds = {parse_cell_kind(o.cell)};
  }
  constexpr double kTolerance = 1e-6;
  bool ok = true;
  for (CellKind kind : kinds) {
    double worst = 0.0;
    std::string where;
    int failures = 0;
    for (int s = 0; s < o.seeds; ++s) {
      const auto dims = random_check_dims(o.seed + s);
      const auto rep = grad_check(kind, dims.d, dims.h, dims.T, o.seed + s);
      if (rep.max_rel_error >= kTolerance) ++failures;
      if (rep.max_rel_error > worst) {
        worst = rep.max_rel_error;
        where = rep.worst_coordinate + " (seed " + std::to_string(o.seed + s) + ")";
      }
    }
    out << std::left << std::setw(10) << cell_kind_name(kind) << std::scientific << std::setprecision(3)
        << " max rel error " << worst << " at " << where << "; " << failures << "/" << o.seeds << " over tolerance\n";
    ok = ok && failures == 0;
  }
  out << (ok ? "gradcheck passed\n" : "gradcheck FAILED\n");
  return ok ? kExitOk : kExitVerificationFailed;
}

int cmd_traincell(const Options& o, std::ostream& out) {
  ToyTaskConfig task;
  task.seed = o.seed;
  task.max_epochs = o.epochs;
  task.steps_per_epoch = o.steps_per_epoch;
  const CellKind kind = parse_cell_kind(o.cell);
  const std::string curve_path = o.loss_csv.empty() ? o.out + ".loss.csv" : o.loss_csv;
  auto csv = open_output(curve_path);
  const ToyTrainResult r = train_cell_toy(kind, task, OptimizerConfig{});
  save_weights(r.to_weights(), o.out);
  r.write_curve_csv(csv);
  out << std::setprecision(5) << cell_kind_name(kind) << ": validation MAE " << r.initial_loss << " -> " << r.final_loss
      << " (best epoch " << r.best_epoch << ", " << r.curve.size() << " epochs"
      << (r.early_stopped ? ", early stopped" : "") << ")\n";
  out << "wrote " << o.out << " and " << curve_path << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Streaming speech enhancement with FastGRNN / Comfi-FastGRNN / GRU recurrent cells", "fulc"};
  app.footer(kFooter);
  app.require_subcommand(1);
  Options o;
  const std::vector<std::string> cells{"gru", "fastgrnn", "comfi"};

  auto* enhance = app.add_subcommand("enhance", "Enhance a 16 kHz mono 16-bit WAV file");
  enhance->add_option("--in", o.in, "Noisy input WAV")->required();
  enhance->add_option("--out", o.out, "Enhanced output WAV")->required();
  enhance->add_option("--weights", o.weights, "Model weight file")->required();
  enhance->add_option("--cell", o.cell, "Recurrent cell kind")->check(CLI::IsMember(cells));
  enhance->add_option("--reference", o.reference, "Clean reference WAV; prints SI-SDR of the output");

  auto* init = app.add_subcommand("initweights", "Write a randomly initialised model weight file");
  init->add_option("--cell", o.cell, "Recurrent cell kind")->check(CLI::IsMember(cells));
  init->add_option("--seed", o.seed, "Initialisation seed");
  init->add_option("--out", o.out, "Output weight file")->required();
  init->add_flag("--identity-mask", o.identity, "Make stage 2 emit the unit complex mask");

  auto* drift = app.add_subcommand("drift", "Record hidden-state drift over a long sequence");
  drift->add_option("--cell", o.cell, "Recurrent cell kind")->check(CLI::IsMember(cells));
  drift->add_option("--mode", o.mode, "adversarial or trained")->check(CLI::IsMember({"adversarial", "trained"}));
  drift->add_option("--steps", o.steps, "Number of timesteps");
  drift->add_option("--out", o.out, "Output CSV")->required();
  drift->add_option("--gamma", o.gamma, "Filter gain for the adversarial Comfi cell");
  drift->add_option("--seed", o.seed, "Seed for toy training (trained mode)");
  drift->add_option("--weights", o.weights, "Toy weights from traincell (trained mode)");

  auto* bench = app.add_subcommand("bench", "Measure the single-threaded real-time factor");
  bench->add_option("--cell", o.cell, "Recurrent cell kind")->check(CLI::IsMember(cells));
  bench->add_option("--iters", o.iters, "Timed frames");
  bench->add_option("--warmup", o.warmup, "Untimed warm-up frames");
  bench->add_option("--threads", o.threads, "Thread count (only 1 is supported)");
  bench->add_option("--seed", o.seed, "Weight and input seed");
  bench->add_flag("--compare", o.compare, "Also run the other model family and print both");

  auto* count = app.add_subcommand("count", "Print parameter and MAC counts");
  count->add_option("--cell", o.cell, "Additionally report this cell kind")->check(CLI::IsMember(cells));

  auto* gradcheck = app.add_subcommand("gradcheck", "Check BPTT gradients against finite differences");
  gradcheck->add_option("--seeds", o.seeds, "Random configurations per cell kind");
  gradcheck->add_option("--seed", o.seed, "First seed");
  auto* gc_cell = gradcheck->add_option("--cell", o.cell, "Only this cell kind")->check(CLI::IsMember(cells));

  auto* traincell = app.add_subcommand("traincell", "Train a cell with a linear readout on the toy denoising task");
  traincell->add_option("--cell", o.cell, "Recurrent cell kind")->check(CLI::IsMember(cells));
  traincell->add_option("--seed", o.seed, "Task and initialisation seed");
  traincell->add_option("--out", o.out, "Output weight file")->required();
  traincell->add_option("--loss-csv", o.loss_csv, "Loss curve CSV (default: <out>.loss.csv)");
  traincell->add_option("--epochs", o.epochs, "Maximum epochs");
  traincell->add_option("--steps-per-epoch", o.steps_per_epoch, "Training sequences per epoch");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kExitOk;
    }
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (*enhance) return cmd_enhance(o, out);
    if (*init) return cmd_initweights(o, out);
    if (*drift) return cmd_drift(o, out);
    if (*bench) return cmd_bench(o, out);
    if (*count) return cmd_count(o, out);
    if (*gradcheck) {
      o.all_cells = gc_cell->count() == 0;
      return cmd_gradcheck(o, out);
    }
    if (*traincell) return cmd_traincell(o, out);
  } catch (const CliFailure& e) {
    err << "error: " << e.what() << "\n";
    return e.code;
  } catch (const WavError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace fulc
