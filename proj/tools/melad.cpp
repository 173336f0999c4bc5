// melad: command-line front end for the Mela-D engine.
//
// Exit status: 0 success, 1 usage error, 2 data error (unreadable or
// invalid input files, bad configs), 3 internal error.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "melad/bench.hpp"
#include "melad/dataset.hpp"
#include "melad/image.hpp"
#include "melad/model.hpp"
#include "melad/parallel.hpp"
#include "melad/trainer.hpp"
#include "melad/weights.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace melad;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kInternal = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

bool g_json = false;

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void emit(const json& j) { std::cout << j.dump(2) << '\n'; }

ArchitectureConfig resolve_arch(const std::string& s) {
  if (fs::exists(s)) return load_architecture(s);
  try {
    return preset_architecture(s);
  } catch (const ConfigError&) {
    throw DataError("no architecture file or preset named \"" + s + "\"");
  }
}

double elapsed_ms(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

// ------------------------------------------------------------------ init

struct InitArgs {
  std::string arch, out;
  bool zero = false;
  std::uint64_t seed = 0;
};

void cmd_init(const InitArgs& a) {
  const auto arch = resolve_arch(a.arch);
  const WeightBundle w = a.zero ? zero_weights(arch) : initial_weights(arch, a.seed);
  save_weights(w, a.out);
  if (g_json) {
    emit({{"model", arch.name}, {"out", a.out}, {"zero", a.zero}, {"seed", a.seed}});
  } else {
    std::cout << "wrote " << a.out << " (" << arch.name << ", "
              << (a.zero ? "zero weights" : "seed " + std::to_string(a.seed)) << ")\n";
  }
}

// ----------------------------------------------------------------- infer

struct InferArgs {
  std::string image, weights;
};

void cmd_infer(const InferArgs& a) {
  const WeightBundle w = load_weights(a.weights);
  const Network net(w);
  const auto& in = net.config().input;
  const auto t0 = std::chrono::steady_clock::now();
  const Tensor x = preprocess(fs::path(a.image), in.height, in.width);
  const Prediction p = net.forward(x);
  const double ms = elapsed_ms(t0);
  if (g_json) {
    emit({{"label", to_string(p.label)},
          {"p_benign", p.p_benign},
          {"p_malignant", p.p_malignant},
          {"runtime_ms", ms},
          {"tie", p.tie},
          {"model", net.config().name}});
  } else {
    std::cout << "label: " << to_string(p.label) << (p.tie ? " (tie)" : "") << '\n'
              << "p_benign: " << fmt("%.6f", p.p_benign) << '\n'
              << "p_malignant: " << fmt("%.6f", p.p_malignant) << '\n'
              << "runtime_ms: " << fmt("%.3f", ms) << '\n';
  }
}

// ----------------------------------------------------------------- train

struct TrainArgs {
  std::string manifest, arch, out, history, config;
  std::optional<std::size_t> epochs, batch_size, image_size;
  std::optional<double> lr;
  std::optional<std::uint64_t> seed;
  bool no_balance = false, fast = false;
};

void cmd_train(const TrainArgs& a) {
  TrainConfig cfg = a.config.empty() ? TrainConfig{} : load_train_config(a.config);
  if (a.epochs) cfg.epochs = *a.epochs;
  if (a.batch_size) cfg.batch_size = *a.batch_size;
  if (a.image_size) cfg.image_size = *a.image_size;
  if (a.lr) cfg.learning_rate = *a.lr;
  if (a.seed) cfg.seed = *a.seed;
  if (a.no_balance) cfg.balance = false;
  if (a.fast) cfg.mode = ExecMode::fast;
  cfg.validate();

  const auto arch = resolve_arch(a.arch);
  const DatasetManifest m = read_manifest(a.manifest);
  if (m.empty()) throw DataError("manifest " + a.manifest + " has no records");

  std::ostream& log = g_json ? std::cerr : std::cout;
  log << "training " << arch.name << ": lr=" << fmt("%g", cfg.learning_rate)
      << ", batch=" << cfg.batch_size << ", epochs=" << cfg.epochs << ", seed=" << cfg.seed
      << ", records=" << m.size() << '\n';

  const auto t0 = std::chrono::steady_clock::now();
  const TrainResult r = train(arch, m, cfg, [&](const EpochStats& e) {
    log << "epoch " << e.epoch << "/" << cfg.epochs << "  loss " << fmt("%.4f", e.loss)
        << "  accuracy " << fmt("%.4f", e.accuracy) << '\n';
  });
  const double secs = elapsed_ms(t0) / 1000.0;

  save_weights(r.weights, a.out);
  std::string history = a.history;
  if (history.empty()) history = fs::path(a.out).replace_extension(".history.csv").string();
  {
    std::ofstream h(history, std::ios::binary | std::ios::trunc);
    if (!h) throw DataError("cannot write history " + history);
    h << history_to_csv(r.history);
  }
  const EpochStats& last = r.history.back();
  if (g_json) {
    emit({{"model", arch.name},
          {"learning_rate", cfg.learning_rate},
          {"batch_size", cfg.batch_size},
          {"epochs", cfg.epochs},
          {"seed", cfg.seed},
          {"weights", a.out},
          {"history", history},
          {"final_loss", last.loss},
          {"final_accuracy", last.accuracy},
          {"seconds", secs}});
  } else {
    std::cout << "final: loss " << fmt("%.4f", last.loss) << ", accuracy "
              << fmt("%.4f", last.accuracy) << " after " << fmt("%.1f", secs) << " s\n"
              << "wrote " << a.out << " and " << history << '\n';
  }
}

// ----------------------------------------------------------------- bench

struct BenchArgs {
  std::string weights, image, trainsets, format = "markdown";
  std::size_t trials = 3;
  bool include_preprocessing = false, header = false;
  std::optional<double> precision;
};

void cmd_bench(const BenchArgs& a) {
  if (a.trials < 1) throw UsageError("--trials must be at least 1");
  const WeightBundle w = load_weights(a.weights);
  TimingOptions opt;
  opt.trials = a.trials;
  opt.trainsets = a.trainsets;
  opt.include_preprocessing = a.include_preprocessing;
  BenchmarkReport r;
  if (a.image.empty()) {
    if (a.include_preprocessing) throw UsageError("--include-preprocessing needs --image");
    const auto& in = w.config.input;
    Tensor x = Tensor::chw(in.channels, in.height, in.width);
    Rng rng(0);
    for (auto& v : x.data()) v = static_cast<float>(rng.uniform());
    r = time_inference(w, x, opt);
  } else {
    r = time_inference(w, fs::path(a.image), opt);
  }
  if (a.precision) r.perf_ratio = perf_ratio(*a.precision, r.mean_ms);
  if (g_json || a.format == "json") {
    std::cout << emit_report(r, ReportFormat::json) << '\n';
  } else {
    if (a.header) std::cout << markdown_header(r.trials_ms.size());
    std::cout << emit_report(r, ReportFormat::markdown) << '\n';
  }
}

// ------------------------------------------------------------ params / rf

struct ArchArgs {
  std::string arch, reference;
};

void cmd_params(const ArchArgs& a) {
  const auto arch = resolve_arch(a.arch);
  const ParamCount p = count_params(arch);
  json j{{"model", arch.name},
         {"trainable", p.trainable},
         {"non_trainable", p.non_trainable},
         {"total", p.total()}};
  if (!arch.reference_only) j["flops"] = count_flops(arch, arch.input.height, arch.input.width);
  if (!a.reference.empty()) {
    const auto ref = resolve_arch(a.reference);
    const ParamCount q = count_params(ref);
    j["reference"] = {{"model", ref.name},
                      {"trainable", q.trainable},
                      {"non_trainable", q.non_trainable},
                      {"total", q.total()}};
    j["ratio_trainable"] = static_cast<double>(q.trainable) / static_cast<double>(p.trainable);
    j["ratio_total"] = static_cast<double>(q.total()) / static_cast<double>(p.total());
  }
  if (g_json) return emit(j);
  std::cout << arch.name << ": " << p.trainable << " trainable, " << p.non_trainable
            << " non-trainable, " << p.total() << " total\n";
  if (j.contains("flops")) {
    std::cout << "flops at " << arch.input.height << "x" << arch.input.width << ": "
              << j["flops"].get<std::uint64_t>() << '\n';
  }
  if (j.contains("reference")) {
    std::cout << j["reference"]["model"].get<std::string>() << ": "
              << j["reference"]["trainable"].get<std::uint64_t>() << " trainable, "
              << j["reference"]["total"].get<std::uint64_t>() << " total\n"
              << "ratio: " << fmt("%.2f", j["ratio_trainable"].get<double>()) << "x trainable, "
              << fmt("%.2f", j["ratio_total"].get<double>()) << "x total\n";
  }
}

void cmd_arch(const ArchArgs& a) { std::cout << architecture_to_json(resolve_arch(a.arch), 2) << '\n'; }

void cmd_rf(const ArchArgs& a) {
  const auto arch = resolve_arch(a.arch);
  const std::size_t rf = receptive_field(arch);
  if (g_json) return emit({{"model", arch.name}, {"receptive_field", rf}});
  std::cout << rf << '\n';
}

// ----------------------------------------------------------------- synth

struct SynthArgs {
  std::string out;
  std::size_t n = 500, size = 64;
  std::uint64_t seed = 7;
};

void cmd_synth(const SynthArgs& a) {
  if (a.n < 1 || a.size < 1) throw UsageError("--n and --size must be at least 1");
  const DatasetManifest m = synthetic_dataset(a.seed, a.n, a.size, a.out);
  const std::string manifest = (fs::path(a.out) / "manifest.csv").string();
  if (g_json) {
    emit({{"manifest", manifest},
          {"benign", m.counts().benign},
          {"malignant", m.counts().malignant},
          {"size", a.size},
          {"seed", a.seed}});
  } else {
    std::cout << "wrote " << m.size() << " images and " << manifest << '\n';
  }
}

// --------------------------------------------------------------- dataset

json counts_json(const DatasetManifest& m) {
  return {{"records", m.size()}, {"benign", m.counts().benign}, {"malignant", m.counts().malignant}};
}

void print_counts(const std::string& out, const DatasetManifest& m) {
  std::cout << "wrote " << out << ": " << m.size() << " records (" << m.counts().benign
            << " benign, " << m.counts().malignant << " malignant)\n";
}

struct IngestArgs {
  std::string csv, images, folders, source = "x", out, aliases, image_column = "image",
                                    label_column = "label", rejects;
};

void cmd_ingest(const IngestArgs& a) {
  if (a.csv.empty() == a.folders.empty()) throw UsageError("give exactly one of --csv or --folders");
  IngestResult r;
  if (!a.csv.empty()) {
    CsvIngestOptions opt;
    opt.source = a.source;
    opt.image_column = a.image_column;
    opt.label_column = a.label_column;
    if (!a.aliases.empty()) opt.aliases = AliasTable::load(a.aliases);
    const fs::path root = a.images.empty() ? fs::path(a.csv).parent_path() : fs::path(a.images);
    r = ingest_csv(a.csv, root, opt);
  } else {
    r = ingest_folders(a.folders, a.source);
  }
  write_manifest(r.manifest, a.out);
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
  if (!a.rejects.empty()) {
    std::ofstream f(a.rejects, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write rejects report " + a.rejects);
    f << "line,image,raw_label,reason\n";
    for (const auto& x : r.rejects) {
      auto q = [](const std::string& s) {
        if (s.find_first_of(",\"\n") == std::string::npos) return s;
        std::string o = "\"";
        for (char c : s) o += c == '"' ? std::string("\"\"") : std::string(1, c);
        return o + "\"";
      };
      f << x.line << ',' << q(x.image) << ',' << q(x.raw_label) << ',' << q(x.reason) << '\n';
    }
  }
  if (g_json) {
    json j = counts_json(r.manifest);
    j["out"] = a.out;
    j["input_rows"] = r.input_rows;
    j["rejected"] = r.rejects.size();
    j["warnings"] = r.warnings;
    return emit(j);
  }
  print_counts(a.out, r.manifest);
  if (!r.rejects.empty()) {
    std::cout << r.rejects.size() << " rows rejected";
    if (!a.rejects.empty()) std::cout << " (see " << a.rejects << ")";
    std::cout << '\n';
  }
}

struct CombineArgs {
  std::vector<std::string> inputs;
  std::string combo, preset, presets, out;
};

void cmd_combine(const CombineArgs& a) {
  if (a.combo.empty() == a.preset.empty()) throw UsageError("give exactly one of --combo or --preset");
  std::map<std::string, DatasetManifest> named;
  for (const auto& in : a.inputs) {
    const auto eq = in.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--input expects code=path, got " + in);
    named[in.substr(0, eq)] = read_manifest(in.substr(eq + 1));
  }
  std::vector<std::string> codes;
  if (!a.combo.empty()) {
    codes = parse_combination(a.combo);
  } else {
    const auto presets =
        a.presets.empty() ? builtin_combination_presets() : load_combination_presets(a.presets);
    const auto it = presets.find(a.preset);
    if (it == presets.end()) throw DataError("unknown combination preset \"" + a.preset + "\"");
    codes = it->second;
  }
  const DatasetManifest m = combine(named, codes);
  write_manifest(m, a.out);
  if (g_json) {
    json j = counts_json(m);
    j["out"] = a.out;
    j["provenance"] = m.provenance();
    return emit(j);
  }
  print_counts(a.out, m);
}

struct BalanceArgs {
  std::string manifest, out;
  std::uint64_t seed = 0;
};

void cmd_balance(const BalanceArgs& a) {
  const DatasetManifest in = read_manifest(a.manifest);
  Rng rng(a.seed);
  const DatasetManifest m = balance_50_50(in, rng);
  write_manifest(m, a.out);
  if (g_json) {
    json j = counts_json(m);
    j["out"] = a.out;
    return emit(j);
  }
  print_counts(a.out, m);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mela-D melanoma classifier: inference, training, benchmarking and dataset tools"};
  app.require_subcommand(1);
  app.fallthrough();
  int threads = 0;
  app.add_flag("--json", g_json, "Machine-readable JSON on stdout");
  app.add_option("--threads", threads, "Worker threads (default: MELAD_THREADS, else all cores)");
  app.footer("Exit status: 0 ok, 1 usage error, 2 data error, 3 internal error.");

  InitArgs init;
  auto* c_init = app.add_subcommand("init", "Write freshly initialized weights for an architecture");
  c_init->add_option("--arch", init.arch, "Preset name or architecture JSON")->required();
  c_init->add_option("--out", init.out, "Output .meld file")->required();
  c_init->add_flag("--zero", init.zero, "All-zero conv weights instead of He-uniform");
  c_init->add_option("--seed", init.seed, "Initialization seed");

  InferArgs infer;
  bool deterministic = true;
  auto* c_infer = app.add_subcommand("infer", "Classify one image");
  c_infer->add_option("image", infer.image, "PNG or JPEG file")->required();
  c_infer->add_option("--weights", infer.weights, "Weight bundle (.meld)")->required();
  c_infer->add_flag("--deterministic", deterministic, "Fixed accumulation order (always on)");

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Train an architecture on a manifest");
  c_train->add_option("--manifest", tr.manifest, "Manifest CSV")->required();
  c_train->add_option("--arch", tr.arch, "Preset name or architecture JSON")->required();
  c_train->add_option("--out", tr.out, "Output .meld file")->required();
  c_train->add_option("--history", tr.history, "History CSV (default: --out with extension .history.csv)");
  c_train->add_option("--config", tr.config, "TrainConfig JSON; flags override it");
  c_train->add_option("--epochs", tr.epochs, "Epochs (default 20)");
  c_train->add_option("--batch-size", tr.batch_size, "Batch size (default 32)");
  c_train->add_option("--lr", tr.lr, "Adam learning rate (default 0.0001)");
  c_train->add_option("--seed", tr.seed, "Seed for init, balancing, shuffling, augmentation");
  c_train->add_option("--image-size", tr.image_size, "Square training size (default: arch input)");
  c_train->add_flag("--no-balance", tr.no_balance, "Skip 50:50 oversampling");
  c_train->add_flag("--fast", tr.fast, "Thread-count-dependent reductions (not bit-reproducible)");

  BenchArgs bench;
  auto* c_bench = app.add_subcommand("bench", "Time single-image inference");
  c_bench->add_option("--weights", bench.weights, "Weight bundle (.meld)")->required();
  c_bench->add_option("--image", bench.image, "Image to classify (default: random input)");
  c_bench->add_option("--trials", bench.trials, "Timed trials after one warm-up (default 3)");
  c_bench->add_option("--trainsets", bench.trainsets, "Dataset code recorded in the report");
  c_bench->add_option("--precision", bench.precision, "Precision for the perf ratio");
  c_bench->add_flag("--include-preprocessing", bench.include_preprocessing,
                    "Time decode and resize too");
  c_bench->add_option("--format", bench.format, "markdown or json")
      ->check(CLI::IsMember({"markdown", "json"}));
  c_bench->add_flag("--header", bench.header, "Print the markdown table header");

  ArchArgs params;
  auto* c_params = app.add_subcommand("params", "Count parameters and FLOPs");
  c_params->add_option("--arch", params.arch, "Preset name or architecture JSON")->required();
  c_params->add_option("--reference", params.reference, "Architecture to compare against");

  ArchArgs arch;
  auto* c_arch = app.add_subcommand("arch", "Print an architecture as JSON");
  c_arch->add_option("--arch", arch.arch, "Preset name or architecture JSON")->required();

  ArchArgs rf;
  auto* c_rf = app.add_subcommand("rf", "Receptive field of an architecture");
  c_rf->add_option("--arch", rf.arch, "Preset name or architecture JSON")->required();

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Generate the synthetic two-class dataset");
  c_synth->add_option("--out", synth.out, "Output directory")->required();
  c_synth->add_option("--n", synth.n, "Images per class (default 500)");
  c_synth->add_option("--size", synth.size, "Image side in pixels (default 64)");
  c_synth->add_option("--seed", synth.seed, "Seed (default 7)");

  auto* c_dataset = app.add_subcommand("dataset", "Manifest tools");
  c_dataset->require_subcommand(1);
  IngestArgs ing;
  auto* c_ingest = c_dataset->add_subcommand("ingest", "Build a manifest from a CSV or folders");
  c_ingest->add_option("--csv", ing.csv, "Metadata CSV");
  c_ingest->add_option("--images", ing.images, "Image root for CSV ids (default: CSV dir)");
  c_ingest->add_option("--folders", ing.folders, "Directory with benign/ and malignant/");
  c_ingest->add_option("--source", ing.source, "Dataset code recorded per record");
  c_ingest->add_option("--aliases", ing.aliases, "Label alias JSON");
  c_ingest->add_option("--image-column", ing.image_column, "CSV image column (default image)");
  c_ingest->add_option("--label-column", ing.label_column, "CSV label column (default label)");
  c_ingest->add_option("--rejects", ing.rejects, "Write rejected rows to this CSV");
  c_ingest->add_option("--out", ing.out, "Output manifest CSV")->required();

  CombineArgs comb;
  auto* c_combine = c_dataset->add_subcommand("combine", "Concatenate manifests by dataset code");
  c_combine->add_option("--input", comb.inputs, "code=manifest.csv (repeatable)")->required();
  c_combine->add_option("--combo", comb.combo, "Combination such as a+b+c");
  c_combine->add_option("--preset", comb.preset, "Named combination preset");
  c_combine->add_option("--presets", comb.presets, "Presets JSON (default: built-in list)");
  c_combine->add_option("--out", comb.out, "Output manifest CSV")->required();

  BalanceArgs bal;
  auto* c_balance = c_dataset->add_subcommand("balance", "Oversample the minority class to 50:50");
  c_balance->add_option("--manifest", bal.manifest, "Input manifest CSV")->required();
  c_balance->add_option("--seed", bal.seed, "Seed");
  c_balance->add_option("--out", bal.out, "Output manifest CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    set_num_threads(threads > 0 ? threads : threads_from_env());
    if (*c_init) cmd_init(init);
    else if (*c_infer) cmd_infer(infer);
    else if (*c_train) cmd_train(tr);
    else if (*c_bench) cmd_bench(bench);
    else if (*c_params) cmd_params(params);
    else if (*c_arch) cmd_arch(arch);
    else if (*c_rf) cmd_rf(rf);
    else if (*c_synth) cmd_synth(synth);
    else if (*c_ingest) cmd_ingest(ing);
    else if (*c_combine) cmd_combine(comb);
    else if (*c_balance) cmd_balance(bal);
    return kOk;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kInternal;
  }
}
