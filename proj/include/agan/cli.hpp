#pragma once

#include "agan/gradcheck.hpp"
#include "agan/keyvalue.hpp"
#include "agan/training.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace agan {

/// Everything a run needs, read from one flat key = value file. Synthetic-data keys carry a
/// `synth_` prefix; `image_size` drives both the dataset and the networks.
struct RunConfig {
  TrainConfig train;
  SynthConfig synth;
  /// Dataset root. Has no default: gen-data, train and eval refuse to guess it.
  std::optional<fs::path> data_dir;
  fs::path out_dir = "run";

  /// Unknown keys are rejected.
  static RunConfig from_key_values(const KeyValues& values);
  KeyValues to_key_values() const;
  void validate() const;
};

struct KeyDoc {
  std::string key;
  std::string default_value;
  std::string help;
};

/// Every accepted key with its default, in file order.
const std::vector<KeyDoc>& run_config_keys();

RunConfig load_run_config(const fs::path& path);

/// Synthetic-data part of the key space, shared with the command line.
KeyValues synth_to_key_values(const SynthConfig& cfg);
std::vector<std::string> apply_synth_keys(SynthConfig& cfg, const KeyValues& values);

struct GradcheckRow {
  std::string name;
  bool catalog_op = false;
  GradcheckResult result;
};

/// Every catalog op followed by every loss term through the two-layer fixture.
std::vector<GradcheckRow> run_gradcheck_suite(int trials, std::uint64_t seed,
                                              std::optional<OpKind> corrupt = std::nullopt);
std::string format_gradcheck_table(const std::vector<GradcheckRow>& rows);

/// File names written by `infer` for a given output prefix.
struct InferOutputs {
  fs::path composite, attention, transformed;
  static InferOutputs for_prefix(const fs::path& prefix);
};

/// Parses and runs one command line. Data goes to `out`, diagnostics to `err`; returns the exit status.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace agan
