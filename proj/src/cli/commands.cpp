#include "agan/cli.hpp"
#include "agan/metrics.hpp"
#include "agan/objectives.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <fstream>
#include <ostream>

namespace agan {

std::vector<GradcheckRow> run_gradcheck_suite(int trials, std::uint64_t seed, std::optional<OpKind> corrupt) {
  std::optional<BackwardFault> fault;
  if (corrupt) fault.emplace(*corrupt);
  std::vector<GradcheckRow> rows;
  for (OpKind kind : kAllOps) {
    rows.push_back({std::string(op_name(kind)), true,
                    gradcheck(kind, trials, kGradcheckEpsilon, kGradcheckTolerance, seed)});
  }
  Prng prng(seed);
  for (const auto& gc : objective_gradcheck_cases()) {
    rows.push_back({gc.name, false, run_gradcheck(gc, trials, kGradcheckEpsilon, kGradcheckTolerance, prng)});
  }
  return rows;
}

std::string format_gradcheck_table(const std::vector<GradcheckRow>& rows) {
  std::string out = "kind       name                   trials  max_rel_error  status\n";
  for (const auto& row : rows) {
    char line[160];
    std::snprintf(line, sizeof line, "%-10s %-22s %6d  %13.3e  %s\n", row.catalog_op ? "op" : "loss", row.name.c_str(),
                  row.result.trials, row.result.max_relative_error, row.result.passed ? "pass" : "FAIL");
    out += line;
  }
  return out;
}

InferOutputs InferOutputs::for_prefix(const fs::path& prefix) {
  const std::string p = prefix.string();
  return {p + "_composite.png", p + "_attention.png", p + "_transformed.png"};
}

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

const fs::path& require_data_dir(const RunConfig& cfg) {
  if (!cfg.data_dir) throw ConfigError("missing key 'data_dir'");
  return *cfg.data_dir;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f << text;
  if (!f) throw std::runtime_error(path.string() + ": write failed");
}

Direction direction_from(const std::string& token) {
  try {
    return parse_direction(token);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

struct Flags {
  std::string config;
  std::string resume;
  std::optional<std::uint64_t> seed;
  std::optional<double> lambda_attn;
  std::string mode;
  std::string direction = "x2y";
  std::string out;
  std::string checkpoint;
  std::string data;
  std::string input;
  std::string force_attention;
  std::string corrupt;
  int trials = 10;
};

int cmd_gen_data(const Flags& f, std::ostream& out, std::ostream& err) {
  RunConfig cfg = load_run_config(f.config);
  if (f.seed) cfg.synth.seed = *f.seed;
  if (!f.out.empty()) cfg.data_dir = f.out;
  const auto manifest = synth_generate(cfg.synth, require_data_dir(cfg));
  out << "dataset " << manifest.root.string() << "\n"
      << "trainA " << manifest.train_a.size() << "\ntrainB " << manifest.train_b.size() << "\n"
      << "testA " << manifest.test_a.size() << "\ntestB " << manifest.test_b.size() << "\n"
      << "masksA " << manifest.masks_a.size() << "\nmasksB " << manifest.masks_b.size() << "\n";
  (void)err;
  return 0;
}

int cmd_train(const Flags& f, std::ostream& out, std::ostream& err) {
  RunConfig cfg = load_run_config(f.config);
  if (f.seed) cfg.train.seed = *f.seed;
  if (f.lambda_attn) cfg.train.weights.lambda_a_sparse = *f.lambda_attn;
  if (!f.mode.empty()) {
    try {
      cfg.train.mode = parse_mode(f.mode);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  if (!f.out.empty()) cfg.out_dir = f.out;
  cfg.validate();
  const auto manifest = DatasetManifest::load(require_data_dir(cfg));
  TrainRunOptions options;
  options.out_dir = cfg.out_dir;
  options.log = &err;
  if (!f.resume.empty()) {
    options.resume = fs::path(f.resume);
  } else {
    fs::create_directories(cfg.out_dir);
    write_text(cfg.out_dir / "config.cfg", format_key_values(cfg.to_key_values()));
  }
  const auto result = train_loop(cfg.train, manifest, options);
  out << "trained " << result.state.epoch << "/" << result.config.total_epochs() << " epochs, "
      << result.state.iteration << " iterations; output in " << cfg.out_dir.string() << "\n";
  return 0;
}

int cmd_eval(const Flags& f, std::ostream& out, std::ostream& err) {
  const Direction direction = direction_from(f.direction);
  const Checkpoint ck = load_checkpoint(f.checkpoint);
  fs::path data;
  if (!f.config.empty()) {
    const RunConfig cfg = load_run_config(f.config);
    if (cfg.train.width_base != ck.config.width_base || cfg.train.image_size != ck.config.image_size) {
      throw ConfigError("checkpoint architecture (width_base " + std::to_string(ck.config.width_base) +
                        ", image_size " + std::to_string(ck.config.image_size) + ") does not match " + f.config);
    }
    data = require_data_dir(cfg);
  }
  if (!f.data.empty()) data = f.data;
  if (data.empty()) throw UsageError("eval needs --data or a --config with data_dir");
  const auto manifest = DatasetManifest::load(data);
  const auto report = evaluate_testset(ck.state.bundle, manifest, direction, ForcedAttention::none, &err);
  fs::path prefix = f.out;
  if (prefix.empty()) {
    prefix = fs::path(f.checkpoint);
    prefix.replace_extension();
    prefix += "_" + std::string(direction_name(direction));
  }
  write_text(prefix.string() + ".csv", report.csv());
  write_text(prefix.string() + ".md", report.markdown());
  out << report.markdown();
  return 0;
}

int cmd_infer(const Flags& f, std::ostream& out, std::ostream&) {
  const Direction direction = direction_from(f.direction);
  ForcedAttention forced = ForcedAttention::none;
  if (f.force_attention == "zeros") forced = ForcedAttention::zeros;
  else if (f.force_attention == "ones") forced = ForcedAttention::ones;
  else if (!f.force_attention.empty()) throw UsageError("--force-attention takes zeros or ones");
  const Checkpoint ck = load_checkpoint(f.checkpoint);
  Sample sample;
  sample.image = decode_image(f.input);
  Prng unused(0);
  sample = augment(sample, unused, false, ck.config.image_size);
  const auto& bundle = ck.state.bundle;
  const auto t = direction == Direction::x2y ? map_g(bundle, sample.image, forced) : map_f(bundle, sample.image, forced);
  const auto files = InferOutputs::for_prefix(f.out);
  if (files.composite.has_parent_path()) fs::create_directories(files.composite.parent_path());
  encode_image(t.output, files.composite);
  write_png(unit_map_to_image(t.attention), files.attention);
  encode_image(t.transformed, files.transformed);
  out << files.composite.string() << "\n" << files.attention.string() << "\n" << files.transformed.string() << "\n";
  return 0;
}

int cmd_gradcheck(const Flags& f, std::ostream& out, std::ostream& err) {
  std::optional<OpKind> corrupt;
  if (!f.corrupt.empty()) {
    for (OpKind kind : kAllOps)
      if (op_name(kind) == f.corrupt) corrupt = kind;
    if (!corrupt) throw UsageError("--corrupt: unknown op '" + f.corrupt + "'");
  }
  if (f.trials < 1) throw UsageError("--trials must be positive");
  const auto rows = run_gradcheck_suite(f.trials, f.seed.value_or(1), corrupt);
  out << format_gradcheck_table(rows);
  int failed = 0;
  for (const auto& row : rows) {
    if (!row.result.passed) {
      err << "gradcheck failed: " << row.name << " (max relative error " << row.result.max_relative_error << ")\n";
      ++failed;
    }
  }
  return failed == 0 ? 0 : 1;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Attention-guided two-domain image translation at toy scale", "agan"};
  app.require_subcommand(1);
  Flags f;

  auto* gen = app.add_subcommand("gen-data", "Write the synthetic two-domain dataset");
  gen->add_option("--config", f.config, "Run configuration file")->required();
  gen->add_option("--seed", f.seed, "Override synth_seed");
  gen->add_option("--out", f.out, "Override data_dir");

  auto* train = app.add_subcommand("train", "Train all six networks");
  train->add_option("--config", f.config, "Run configuration file")->required();
  train->add_option("--resume", f.resume, "Continue from this checkpoint");
  train->add_option("--seed", f.seed, "Override seed");
  train->add_option("--lambda-attn", f.lambda_attn, "Override lambda_attn");
  train->add_option("--mode", f.mode, "unsupervised or supervised");
  train->add_option("--out", f.out, "Override out_dir");

  auto* eval = app.add_subcommand("eval", "Background PSNR/SSIM and attention IoU on the test split");
  eval->add_option("--checkpoint", f.checkpoint, "Checkpoint file")->required();
  eval->add_option("--config", f.config, "Run configuration supplying data_dir");
  eval->add_option("--data", f.data, "Dataset root (overrides the config)");
  eval->add_option("--direction", f.direction, "x2y or y2x");
  eval->add_option("--out", f.out, "Output prefix for .csv and .md");

  auto* infer = app.add_subcommand("infer", "Translate one image");
  infer->add_option("--checkpoint", f.checkpoint, "Checkpoint file")->required();
  infer->add_option("--input", f.input, "Input PNG")->required();
  infer->add_option("--direction", f.direction, "x2y or y2x");
  infer->add_option("--out", f.out, "Output prefix")->required();
  infer->add_option("--force-attention", f.force_attention)->group("");

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of every op and loss term");
  grad->add_option("--trials", f.trials, "Random trials per case");
  grad->add_option("--seed", f.seed, "Input seed");
  grad->add_option("--corrupt", f.corrupt)->group("");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*gen) return cmd_gen_data(f, out, err);
    if (*train) return cmd_train(f, out, err);
    if (*eval) return cmd_eval(f, out, err);
    if (*infer) return cmd_infer(f, out, err);
    if (*grad) return cmd_gradcheck(f, out, err);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace agan
