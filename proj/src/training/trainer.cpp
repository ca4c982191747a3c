#include "agan/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace agan {

namespace {

// Stream identifiers for derive_seed.
enum : std::uint64_t {
  kStreamInit = 1,
  kStreamShuffleX = 2,
  kStreamShuffleY = 3,
  kStreamAugment = 4,
  kStreamPoolX = 5,
  kStreamPoolY = 6,
};

const std::vector<std::string>& generator_names() {
  static const std::vector<std::string> names{"a_x", "a_y", "t_x", "t_y"};
  return names;
}

const std::vector<std::string>& transformation_names() {
  static const std::vector<std::string> names{"t_x", "t_y"};
  return names;
}

const std::vector<std::string>& attention_names() {
  static const std::vector<std::string> names{"a_x", "a_y"};
  return names;
}

const std::vector<std::string>& discriminator_names() {
  static const std::vector<std::string> names{"d_x", "d_y"};
  return names;
}

const NetworkParams<float>& network(const ModelBundle<float>& b, const std::string& name) {
  for (const auto& [n, p] : b.named()) {
    if (n == name) return *p;
  }
  throw TrainingError("unknown network " + name);
}

void update(TrainingState& state, const std::vector<std::string>& names, double lr, const TrainConfig& config,
            std::ostream* log) {
  const AdamOptions options{config.adam_beta1, config.adam_beta2, config.adam_eps};
  for (const auto& name : names) {
    const auto& params = network(state.bundle, name);
    const auto skipped = adam_step(params, state.adam.at(name), lr, options);
    for (const auto& s : skipped) {
      if (log) *log << "warning: iteration " << state.iteration << ": non-finite gradient, skipped update of " << name << "/" << s << "\n";
    }
    params.zero_grad();
  }
}

void set_trainable(const ModelBundle<float>& b, const std::vector<std::string>& names, bool flag) {
  for (const auto& name : names) network(b, name).set_requires_grad(flag);
}

std::vector<std::size_t> shuffled(std::size_t n, Prng& prng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  // Fisher-Yates with our own integer draws so the order is library independent.
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(prng.uniform_int(i));
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

std::string epoch_stem(int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%04d", epoch);
  return buf;
}

}  // namespace

TrainingState TrainingState::fresh(const TrainConfig& config) {
  config.validate();
  Prng prng(derive_seed(config.seed, kStreamInit));
  TrainingState s{build_bundle<float>(config.width_base, 3, config.image_size, prng), {},
                  ReplayBuffer(config.buffer_capacity, derive_seed(config.seed, kStreamPoolX)),
                  ReplayBuffer(config.buffer_capacity, derive_seed(config.seed, kStreamPoolY)), 0, 0};
  for (const auto& [name, params] : s.bundle.named()) s.adam.emplace(name, AdamState<float>::for_params(*params));
  return s;
}

GeneratorPass generator_update(TrainingState& state, const Sample& x, const Sample& y, const TrainConfig& config,
                               double lr, std::ostream* log) {
  const bool supervised = config.mode == TrainMode::supervised;
  if (supervised && (!x.mask.defined() || !y.mask.defined())) {
    throw TrainingError("supervised training needs a mask for every sample");
  }
  const auto& b = state.bundle;
  const bool attention_frozen = state.epoch < config.attention_warmup_epochs;
  const auto& trained = attention_frozen ? transformation_names() : generator_names();
  set_trainable(b, generator_names(), true);
  if (attention_frozen) set_trainable(b, attention_names(), false);
  set_trainable(b, discriminator_names(), false);
  GeneratorPass pass;
  {
    Tape<float> tape;
    Tape<float>::Scope scope(tape);
    const auto g = map_g(b, x.image);
    const auto f_of_g = map_f(b, g.output);
    const auto f = map_f(b, y.image);
    const auto g_of_f = map_g(b, f.output);

    GeneratorComponents<float> c;
    c.gan_g_xy = loss_gan_g(discriminator_forward(b.d_y, g.output));
    c.gan_g_yx = loss_gan_g(discriminator_forward(b.d_x, f.output));
    c.cyc = loss_cycle(x.image, f_of_g.output, y.image, g_of_f.output);
    if (supervised) {
      const Tensor<float> maps_x[] = {g.attention}, masks_x[] = {x.mask};
      const Tensor<float> maps_y[] = {f.attention}, masks_y[] = {y.mask};
      c.a_sup = loss_attn_supervised<float>(maps_x, masks_x, maps_y, masks_y);
    } else {
      c.a_cyc = loss_attn_cycle(g.attention, f_of_g.attention, f.attention, g_of_f.attention);
      c.a_sparse = loss_attn_sparse(g.attention, f.attention);
    }
    const auto objective = total_generator_loss(config.mode, config.weights, c);
    pass.report = objective.report;
    if (!std::isfinite(pass.report.total_g)) {
      throw TrainingError("iteration " + std::to_string(state.iteration) + ": non-finite generator objective, step aborted");
    }
    tape.backward(objective.total);
    pass.fake_x = f.output.detach();
    pass.fake_y = g.output.detach();
  }
  update(state, trained, lr, config, log);
  set_trainable(b, generator_names(), true);
  set_trainable(b, discriminator_names(), true);
  return pass;
}

void discriminator_update(TrainingState& state, const Sample& x, const Sample& y, const GeneratorPass& pass,
                          const TrainConfig& config, double lr, LossReport& report, std::ostream* log) {
  const auto& b = state.bundle;
  set_trainable(b, generator_names(), false);
  set_trainable(b, discriminator_names(), true);
  {
    const Tensor<float> fake_y = state.pool_y.query(pass.fake_y);
    const Tensor<float> fake_x = state.pool_x.query(pass.fake_x);
    Tape<float> tape;
    Tape<float>::Scope scope(tape);
    const auto d_x = loss_gan_d(discriminator_forward(b.d_x, x.image), discriminator_forward(b.d_x, fake_x));
    const auto d_y = loss_gan_d(discriminator_forward(b.d_y, y.image), discriminator_forward(b.d_y, fake_y));
    const auto total = add(d_x, d_y);
    report.gan_d_x = d_x.item();
    report.gan_d_y = d_y.item();
    report.total_d = total.item();
    if (!std::isfinite(report.total_d)) {
      set_trainable(b, generator_names(), true);
      throw TrainingError("iteration " + std::to_string(state.iteration) + ": non-finite discriminator objective, step aborted");
    }
    tape.backward(total);
  }
  update(state, discriminator_names(), lr, config, log);
  set_trainable(b, generator_names(), true);
}

LossReport train_step(TrainingState& state, const Sample& x, const Sample& y, const TrainConfig& config, double lr,
                      std::ostream* log) {
  GeneratorPass pass = generator_update(state, x, y, config, lr, log);
  discriminator_update(state, x, y, pass, config, lr, pass.report, log);
  ++state.iteration;
  return pass.report;
}

std::string loss_csv_header() { return "epoch,iteration,lr," + LossReport::csv_header(); }

Image8 translation_grid(const ModelBundle<float>& bundle, std::span<const Tensor<float>> inputs, Domain domain) {
  if (inputs.empty()) throw TrainingError("translation_grid: no inputs");
  const Index h = inputs.front().dim(1), w = inputs.front().dim(2);
  constexpr Index kColumns = 6;
  Image8 grid(3, h * static_cast<Index>(inputs.size()), w * kColumns);
  auto paste = [&](const Image8& tile, Index row, Index col) {
    for (Index c = 0; c < 3; ++c)
      for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x) {
          grid.at(c, row * h + y, col * w + x) = tile.at(tile.channels == 1 ? 0 : c, y, x);
        }
  };
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto& in = inputs[i];
    const auto t = domain == Domain::x ? map_g(bundle, in) : map_f(bundle, in);
    // Layers are shown on a black canvas: (1-a) * x and a * T(x) in [0, 1] intensity.
    Buffer<float> background(in.numel()), object(in.numel());
    const Index plane = h * w;
    for (Index c = 0; c < 3; ++c)
      for (Index p = 0; p < plane; ++p) {
        const float a = t.attention[p];
        background[c * plane + p] = (1.0f - a) * (in[c * plane + p] + 1.0f) - 1.0f;
        object[c * plane + p] = a * (t.transformed[c * plane + p] + 1.0f) - 1.0f;
      }
    const auto row = static_cast<Index>(i);
    paste(tensor_to_image(in), row, 0);
    paste(unit_map_to_image(t.attention), row, 1);
    paste(tensor_to_image(t.transformed), row, 2);
    paste(tensor_to_image(Tensor<float>::from_buffer(in.shape(), std::move(background))), row, 3);
    paste(tensor_to_image(Tensor<float>::from_buffer(in.shape(), std::move(object))), row, 4);
    paste(tensor_to_image(t.output), row, 5);
  }
  return grid;
}

std::uint64_t parameter_hash(const NetworkParams<float>& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [name, t] : params.entries()) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(t.data().data());
    for (std::size_t i = 0; i < static_cast<std::size_t>(t.numel()) * sizeof(float); ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

Checkpoint train_loop(const TrainConfig& requested, const DatasetManifest& dataset, const TrainRunOptions& options) {
  Checkpoint run;
  if (options.resume) {
    run = load_checkpoint(*options.resume);
    if (run.config.to_key_values() != requested.to_key_values()) {
      if (options.log) *options.log << "note: resuming with the configuration stored in " << options.resume->string() << "\n";
    }
  } else {
    requested.validate();
    run.config = requested;
    run.state = TrainingState::fresh(requested);
  }
  const TrainConfig& config = run.config;
  TrainingState& state = run.state;
  const bool supervised = config.mode == TrainMode::supervised;

  const auto& paths_x = dataset.split(Domain::x, true);
  const auto& paths_y = dataset.split(Domain::y, true);
  if (paths_x.empty() || paths_y.empty()) throw DataError(dataset.root.string() + ": both trainA and trainB need images");
  if (supervised && (!dataset.has_masks(Domain::x) || !dataset.has_masks(Domain::y))) {
    throw DataError(dataset.root.string() + ": supervised mode needs masksA and masksB");
  }
  std::vector<Sample> xs, ys;
  for (const auto& p : paths_x) xs.push_back(load_sample(dataset, Domain::x, p, supervised));
  for (const auto& p : paths_y) ys.push_back(load_sample(dataset, Domain::y, p, supervised));

  fs::create_directories(options.out_dir / "checkpoints");
  fs::create_directories(options.out_dir / "samples");
  const fs::path csv_path = options.out_dir / "loss.csv";
  const bool append = options.resume.has_value() && fs::exists(csv_path);
  std::ofstream csv(csv_path, append ? std::ios::app : std::ios::trunc);
  if (!csv) throw TrainingError(csv_path.string() + ": cannot open loss log for writing");
  if (!append) csv << loss_csv_header() << "\n";

  std::vector<Tensor<float>> preview;
  for (std::size_t i = 0; i < std::min<std::size_t>(4, xs.size()); ++i) {
    Prng unused(0);
    preview.push_back(augment(xs[i], unused, false, config.image_size).image);
  }

  const int last = std::min(config.total_epochs(), options.stop_after_epoch.value_or(config.total_epochs()));
  const std::size_t steps = std::max(xs.size(), ys.size());
  for (int epoch = state.epoch; epoch < last; ++epoch) {
    const double lr = lr_at_epoch(config, epoch);
    Prng shuffle_x(derive_seed(config.seed, kStreamShuffleX, static_cast<std::uint64_t>(epoch)));
    Prng shuffle_y(derive_seed(config.seed, kStreamShuffleY, static_cast<std::uint64_t>(epoch)));
    const auto order_x = shuffled(xs.size(), shuffle_x);
    const auto order_y = shuffled(ys.size(), shuffle_y);
    for (std::size_t s = 0; s < steps; ++s) {
      Prng aug(derive_seed(config.seed, kStreamAugment, static_cast<std::uint64_t>(state.iteration)));
      const Sample x = augment(xs[order_x[s % xs.size()]], aug, config.augment, config.image_size);
      const Sample y = augment(ys[order_y[s % ys.size()]], aug, config.augment, config.image_size);
      StepRecord rec{epoch, state.iteration, lr, train_step(state, x, y, config, lr, options.log)};
      char prefix[64];
      std::snprintf(prefix, sizeof prefix, "%d,%lld,%.9g,", epoch, static_cast<long long>(rec.iteration), lr);
      csv << prefix << rec.report.csv_row() << "\n";
      if (options.on_step) options.on_step(rec);
    }
    csv.flush();
    if (!csv) throw TrainingError(csv_path.string() + ": write failed");
    state.epoch = epoch + 1;
    if (state.epoch % config.checkpoint_every == 0 || state.epoch == config.total_epochs()) {
      const std::string stem = epoch_stem(state.epoch);
      save_checkpoint(options.out_dir / "checkpoints" / (stem + ".ckpt"), config, state);
      write_png(translation_grid(state.bundle, preview, Domain::x), options.out_dir / "samples" / (stem + ".png"));
      if (options.log) *options.log << "epoch " << state.epoch << "/" << config.total_epochs() << " checkpoint " << stem << "\n";
    }
  }
  return run;
}

}  // namespace agan
