#include "agan/cli.hpp"

#include <cstdint>
#include <set>

namespace agan {

namespace {

int narrow_int(const std::string& key, const std::string& value) {
  const auto n = to_int(key, value);
  if (n < INT32_MIN || n > INT32_MAX) throw ConfigError("key '" + key + "': out of range");
  return static_cast<int>(n);
}

struct SynthKey {
  const char* key;
  const char* help;
  std::string (*get)(const SynthConfig&);
  void (*set)(SynthConfig&, const std::string& key, const std::string& value);
};

#define AGAN_SYNTH_DOUBLE(name, help)                                                              \
  SynthKey {                                                                                       \
    "synth_" #name, help, [](const SynthConfig& c) { return format_double(c.name); },              \
        [](SynthConfig& c, const std::string& k, const std::string& v) { c.name = to_double(k, v); } \
  }
#define AGAN_SYNTH_INT(name, help)                                                                 \
  SynthKey {                                                                                       \
    "synth_" #name, help, [](const SynthConfig& c) { return std::to_string(c.name); },             \
        [](SynthConfig& c, const std::string& k, const std::string& v) { c.name = narrow_int(k, v); } \
  }

const std::vector<SynthKey>& synth_keys() {
  static const std::vector<SynthKey> keys{
      AGAN_SYNTH_INT(shapes_min, "fewest objects per image"),
      AGAN_SYNTH_INT(shapes_max, "most objects per image"),
      AGAN_SYNTH_DOUBLE(radius_min, "smallest ellipse semi-axis, as a fraction of image_size"),
      AGAN_SYNTH_DOUBLE(radius_max, "largest ellipse semi-axis, as a fraction of image_size"),
      AGAN_SYNTH_INT(stripe_period_min, "shortest domain-Y stripe period in pixels"),
      AGAN_SYNTH_INT(stripe_period_max, "longest domain-Y stripe period in pixels"),
      AGAN_SYNTH_DOUBLE(stripe_dark_min, "dark stripe grey level, lower bound"),
      AGAN_SYNTH_DOUBLE(stripe_dark_max, "dark stripe grey level, upper bound"),
      AGAN_SYNTH_DOUBLE(stripe_light_min, "light stripe grey level, lower bound"),
      AGAN_SYNTH_DOUBLE(stripe_light_max, "light stripe grey level, upper bound"),
      AGAN_SYNTH_DOUBLE(stripe_vertical_prob, "probability of vertical stripes"),
      SynthKey{"synth_stripe_random_phase", "draw a stripe phase per image",
               [](const SynthConfig& c) { return std::string(c.stripe_random_phase ? "true" : "false"); },
               [](SynthConfig& c, const std::string& k, const std::string& v) { c.stripe_random_phase = to_bool(k, v); }},
      AGAN_SYNTH_INT(background_cells, "value-noise lattice cells per side"),
      AGAN_SYNTH_DOUBLE(background_jitter, "value-noise amplitude around the base colour"),
      AGAN_SYNTH_DOUBLE(fill_r_min, "domain-X fill red, lower bound"),
      AGAN_SYNTH_DOUBLE(fill_r_max, "domain-X fill red, upper bound"),
      AGAN_SYNTH_DOUBLE(fill_g_min, "domain-X fill green, lower bound"),
      AGAN_SYNTH_DOUBLE(fill_g_max, "domain-X fill green, upper bound"),
      AGAN_SYNTH_DOUBLE(fill_b_min, "domain-X fill blue, lower bound"),
      AGAN_SYNTH_DOUBLE(fill_b_max, "domain-X fill blue, upper bound"),
      AGAN_SYNTH_DOUBLE(coverage_min, "smallest object area fraction"),
      AGAN_SYNTH_DOUBLE(coverage_max, "largest object area fraction"),
      AGAN_SYNTH_INT(count, "training images per domain"),
      AGAN_SYNTH_INT(test_count, "test images per domain (negative: same as synth_count)"),
      SynthKey{"synth_seed", "dataset seed",
               [](const SynthConfig& c) { return std::to_string(c.seed); },
               [](SynthConfig& c, const std::string& k, const std::string& v) { c.seed = to_uint(k, v); }},
  };
  return keys;
}

#undef AGAN_SYNTH_DOUBLE
#undef AGAN_SYNTH_INT

const std::map<std::string, std::string>& train_help() {
  static const std::map<std::string, std::string> help{
      {"mode", "unsupervised or supervised"},
      {"lambda_cyc", "cycle-consistency weight"},
      {"lambda_a_cyc", "attention cycle-consistency weight (unsupervised)"},
      {"lambda_attn", "sparse attention weight (unsupervised)"},
      {"lambda_a_sup", "supervised attention weight (supervised)"},
      {"base_lr", "learning rate before decay"},
      {"epochs_keep", "epochs at base_lr"},
      {"epochs_decay", "epochs of linear decay to zero"},
      {"batch_size", "images per step; only 1 is supported"},
      {"buffer_capacity", "replay buffer size per domain"},
      {"seed", "training seed (initialization, shuffling, augmentation, buffers)"},
      {"image_size", "image side in pixels, for both the dataset and the networks"},
      {"width_base", "channel width of the first convolution in every network"},
      {"adam_beta1", "Adam first-moment decay"},
      {"adam_beta2", "Adam second-moment decay"},
      {"adam_eps", "Adam denominator epsilon"},
      {"checkpoint_every", "epochs between checkpoints and sample grids"},
      {"augment", "resize-crop-flip augmentation during training"},
      {"attention_warmup_epochs", "epochs during which the attention networks are not updated"},
  };
  return help;
}

}  // namespace

KeyValues synth_to_key_values(const SynthConfig& cfg) {
  KeyValues out;
  for (const auto& k : synth_keys()) out[k.key] = k.get(cfg);
  return out;
}

std::vector<std::string> apply_synth_keys(SynthConfig& cfg, const KeyValues& values) {
  std::vector<std::string> used;
  for (const auto& k : synth_keys()) {
    const auto it = values.find(k.key);
    if (it == values.end()) continue;
    k.set(cfg, it->first, it->second);
    used.push_back(k.key);
  }
  return used;
}

const std::vector<KeyDoc>& run_config_keys() {
  static const std::vector<KeyDoc> docs = [] {
    std::vector<KeyDoc> out;
    out.push_back({"data_dir", "(required)", "dataset root with trainA/trainB/testA/testB and optional masksA/masksB"});
    out.push_back({"out_dir", RunConfig{}.out_dir.string(), "training output directory"});
    const auto train = TrainConfig{}.to_key_values();
    for (const auto& [key, help] : train_help()) out.push_back({key, train.at(key), help});
    const SynthConfig synth{};
    for (const auto& k : synth_keys()) out.push_back({k.key, k.get(synth), k.help});
    return out;
  }();
  return docs;
}

RunConfig RunConfig::from_key_values(const KeyValues& values) {
  RunConfig cfg;
  std::set<std::string> used;
  for (const auto& k : cfg.train.apply(values)) used.insert(k);
  for (const auto& k : apply_synth_keys(cfg.synth, values)) used.insert(k);
  if (const auto it = values.find("data_dir"); it != values.end()) {
    if (it->second.empty()) throw ConfigError("key 'data_dir': empty path");
    cfg.data_dir = fs::path(it->second);
    used.insert("data_dir");
  }
  if (const auto it = values.find("out_dir"); it != values.end()) {
    if (it->second.empty()) throw ConfigError("key 'out_dir': empty path");
    cfg.out_dir = fs::path(it->second);
    used.insert("out_dir");
  }
  for (const auto& [key, value] : values) {
    if (!used.count(key)) throw ConfigError("unknown key '" + key + "'");
  }
  cfg.synth.image_size = cfg.train.image_size;
  cfg.validate();
  return cfg;
}

KeyValues RunConfig::to_key_values() const {
  KeyValues out = train.to_key_values();
  for (auto& [k, v] : synth_to_key_values(synth)) out[k] = v;
  if (data_dir) out["data_dir"] = data_dir->string();
  out["out_dir"] = out_dir.string();
  return out;
}

void RunConfig::validate() const {
  train.validate();
  try {
    synth.validate();
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
}

RunConfig load_run_config(const fs::path& path) {
  try {
    return RunConfig::from_key_values(read_key_values(path.string()));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace agan
