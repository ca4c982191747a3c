#include "agan/training.hpp"

#include <cmath>

namespace agan {

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("train config: " + msg); };
  if (batch_size != 1) fail("batch_size must be 1");
  if (!(base_lr > 0.0) || !std::isfinite(base_lr)) fail("base_lr must be positive");
  if (epochs_keep < 0 || epochs_decay < 0) fail("epochs_keep and epochs_decay must be non-negative");
  if (buffer_capacity < 1) fail("buffer_capacity must be at least 1");
  if (image_size < 8 || image_size % 4 != 0) fail("image_size must be a multiple of 4 and at least 8");
  if (width_base < 8) fail("width_base must be at least 8");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    fail("adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) fail("adam_eps must be positive");
  if (checkpoint_every < 1) fail("checkpoint_every must be positive");
  if (attention_warmup_epochs < 0) fail("attention_warmup_epochs must be non-negative");
  try {
    weights.validate();
  } catch (const std::invalid_argument& e) {
    fail(e.what());
  }
}

std::vector<std::string> TrainConfig::keys() {
  std::vector<std::string> out;
  for (const auto& [k, v] : TrainConfig{}.to_key_values()) out.push_back(k);
  return out;
}

KeyValues TrainConfig::to_key_values() const {
  return {
      {"mode", std::string(mode_name(mode))},
      {"lambda_cyc", format_double(weights.lambda_cyc)},
      {"lambda_a_cyc", format_double(weights.lambda_a_cyc)},
      {"lambda_attn", format_double(weights.lambda_a_sparse)},
      {"lambda_a_sup", format_double(weights.lambda_a_sup)},
      {"base_lr", format_double(base_lr)},
      {"epochs_keep", std::to_string(epochs_keep)},
      {"epochs_decay", std::to_string(epochs_decay)},
      {"batch_size", std::to_string(batch_size)},
      {"buffer_capacity", std::to_string(buffer_capacity)},
      {"seed", std::to_string(seed)},
      {"image_size", std::to_string(image_size)},
      {"width_base", std::to_string(width_base)},
      {"adam_beta1", format_double(adam_beta1)},
      {"adam_beta2", format_double(adam_beta2)},
      {"adam_eps", format_double(adam_eps)},
      {"checkpoint_every", std::to_string(checkpoint_every)},
      {"augment", augment ? "true" : "false"},
      {"attention_warmup_epochs", std::to_string(attention_warmup_epochs)},
  };
}

std::vector<std::string> TrainConfig::apply(const KeyValues& values) {
  std::vector<std::string> used;
  auto take = [&](const char* key, auto&& setter) {
    const auto it = values.find(key);
    if (it == values.end()) return;
    setter(it->first, it->second);
    used.push_back(key);
  };
  auto as_int = [](const std::string& k, const std::string& v) {
    const auto n = to_int(k, v);
    if (n < INT32_MIN || n > INT32_MAX) throw ConfigError("key '" + k + "': out of range");
    return static_cast<int>(n);
  };
  take("mode", [&](const std::string& k, const std::string& v) {
    try {
      mode = parse_mode(v);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("key '" + k + "': " + e.what());
    }
  });
  take("lambda_cyc", [&](auto& k, auto& v) { weights.lambda_cyc = to_double(k, v); });
  take("lambda_a_cyc", [&](auto& k, auto& v) { weights.lambda_a_cyc = to_double(k, v); });
  take("lambda_attn", [&](auto& k, auto& v) { weights.lambda_a_sparse = to_double(k, v); });
  take("lambda_a_sup", [&](auto& k, auto& v) { weights.lambda_a_sup = to_double(k, v); });
  take("base_lr", [&](auto& k, auto& v) { base_lr = to_double(k, v); });
  take("epochs_keep", [&](auto& k, auto& v) { epochs_keep = as_int(k, v); });
  take("epochs_decay", [&](auto& k, auto& v) { epochs_decay = as_int(k, v); });
  take("batch_size", [&](auto& k, auto& v) { batch_size = as_int(k, v); });
  take("buffer_capacity", [&](auto& k, auto& v) { buffer_capacity = as_int(k, v); });
  take("seed", [&](auto& k, auto& v) { seed = to_uint(k, v); });
  take("image_size", [&](auto& k, auto& v) { image_size = to_int(k, v); });
  take("width_base", [&](auto& k, auto& v) { width_base = to_int(k, v); });
  take("adam_beta1", [&](auto& k, auto& v) { adam_beta1 = to_double(k, v); });
  take("adam_beta2", [&](auto& k, auto& v) { adam_beta2 = to_double(k, v); });
  take("adam_eps", [&](auto& k, auto& v) { adam_eps = to_double(k, v); });
  take("checkpoint_every", [&](auto& k, auto& v) { checkpoint_every = as_int(k, v); });
  take("augment", [&](auto& k, auto& v) { augment = to_bool(k, v); });
  take("attention_warmup_epochs", [&](auto& k, auto& v) { attention_warmup_epochs = as_int(k, v); });
  return used;
}

double lr_at_epoch(const TrainConfig& config, int epoch) {
  const int total = config.total_epochs();
  if (epoch < 0 || epoch > total) {
    throw std::out_of_range("lr_at_epoch: epoch " + std::to_string(epoch) + " outside [0, " +
                            std::to_string(total) + "]");
  }
  if (epoch < config.epochs_keep) return config.base_lr;
  if (config.epochs_decay == 0) return 0.0;
  const double progress = static_cast<double>(epoch - config.epochs_keep) / config.epochs_decay;
  return config.base_lr * (1.0 - progress);
}

}  // namespace agan
