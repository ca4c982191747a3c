#pragma once

#include "agan/data.hpp"
#include "agan/keyvalue.hpp"
#include "agan/networks.hpp"
#include "agan/objectives.hpp"

#include <functional>
#include <map>
#include <ostream>
#include <span>

namespace agan {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  TrainMode mode = TrainMode::unsupervised;
  LossWeights weights;
  double base_lr = 0.0002;
  int epochs_keep = 100;
  int epochs_decay = 100;
  int batch_size = 1;
  int buffer_capacity = 50;
  std::uint64_t seed = 1;
  Index image_size = 32;
  Index width_base = 8;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  /// Checkpoint and image grid every this many epochs; the final epoch always gets one.
  int checkpoint_every = 10;
  bool augment = true;
  /// Attention networks stay at their initial weights for this many epochs.
  int attention_warmup_epochs = 2;

  void validate() const;
  int total_epochs() const { return epochs_keep + epochs_decay; }

  /// Flat key/value form, as stored in checkpoints and config files.
  KeyValues to_key_values() const;
  /// Applies known keys and leaves the rest untouched; returns the keys it consumed.
  std::vector<std::string> apply(const KeyValues& values);
  static std::vector<std::string> keys();
};

/// base_lr before epochs_keep, then linear decay reaching 0 at the last epoch boundary.
double lr_at_epoch(const TrainConfig& config, int epoch);

template <typename Scalar>
struct AdamState {
  std::vector<Buffer<Scalar>> m;
  std::vector<Buffer<Scalar>> v;
  std::int64_t step = 0;

  static AdamState for_params(const NetworkParams<Scalar>& params);
};

struct AdamOptions {
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update using each parameter's gradient slot (missing slot = 0).
/// Tensors whose gradient is non-finite are left untouched and their names returned.
template <typename Scalar>
std::vector<std::string> adam_step(const NetworkParams<Scalar>& params, AdamState<Scalar>& state, double lr,
                                   const AdamOptions& options);

/// Pool of earlier generated images shown to a discriminator.
class ReplayBuffer {
 public:
  enum class Branch { store, fresh, swap };

  ReplayBuffer(int capacity, std::uint64_t seed);

  /// Stores until full; then returns the fresh image or swaps it for a random stored one,
  /// each with probability 1/2.
  Tensor<float> query(const Tensor<float>& fresh);
  /// Same, with the random choice replaced by `branch` and `index` (used by tests).
  Tensor<float> query(const Tensor<float>& fresh, Branch branch, std::size_t index);

  int capacity() const { return capacity_; }
  std::size_t size() const { return stored_.size(); }
  const std::vector<Tensor<float>>& stored() const { return stored_; }
  Branch last_branch() const { return last_; }

  Prng& prng() { return prng_; }
  const Prng& prng() const { return prng_; }
  void restore(std::vector<Tensor<float>> stored, const std::string& prng_state);

 private:
  int capacity_;
  std::vector<Tensor<float>> stored_;
  Prng prng_;
  Branch last_ = Branch::store;
};

/// Everything that evolves during training.
struct TrainingState {
  ModelBundle<float> bundle;
  std::map<std::string, AdamState<float>> adam;  // keyed like ModelBundle::named()
  ReplayBuffer pool_x{1, 0};                     // fakes of domain X, i.e. F(y)
  ReplayBuffer pool_y{1, 0};                     // fakes of domain Y, i.e. G(x)
  int epoch = 0;                                 // completed epochs
  std::int64_t iteration = 0;                    // completed steps

  static TrainingState fresh(const TrainConfig& config);
};

/// Translations of the current samples produced by the generator half-step.
struct GeneratorPass {
  LossReport report;
  Tensor<float> fake_x;  // F(y)
  Tensor<float> fake_y;  // G(x)
};

/// Generator half: combined objective, backward, Adam on A_X, A_Y, T_X, T_Y. Discriminators
/// are frozen and collect no gradient.
GeneratorPass generator_update(TrainingState& state, const Sample& x, const Sample& y, const TrainConfig& config,
                               double lr, std::ostream* log = nullptr);

/// Discriminator half on replay-selected detached fakes; fills the D entries of `report`.
void discriminator_update(TrainingState& state, const Sample& x, const Sample& y, const GeneratorPass& pass,
                          const TrainConfig& config, double lr, LossReport& report, std::ostream* log = nullptr);

/// One alternating iteration: generator-side update on the combined objective, then both
/// discriminators on replay-selected detached fakes. A non-finite generator objective
/// aborts the step before any parameter changes.
LossReport train_step(TrainingState& state, const Sample& x, const Sample& y, const TrainConfig& config,
                      double lr, std::ostream* log = nullptr);

struct Checkpoint {
  TrainConfig config;
  TrainingState state;
};

inline constexpr char kCheckpointMagic[8] = {'A', 'G', 'A', 'N', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const fs::path& path, const TrainConfig& config, const TrainingState& state);
Checkpoint load_checkpoint(const fs::path& path);

struct StepRecord {
  int epoch = 0;
  std::int64_t iteration = 0;
  double lr = 0.0;
  LossReport report;
};

struct TrainRunOptions {
  fs::path out_dir;
  /// Continue from this checkpoint instead of a fresh initialization.
  std::optional<fs::path> resume;
  /// Stop after this many completed epochs (default: the whole schedule).
  std::optional<int> stop_after_epoch;
  std::function<void(const StepRecord&)> on_step;
  std::ostream* log = nullptr;
};

/// "epoch,iteration,lr," followed by LossReport::csv_header().
std::string loss_csv_header();

/// Runs the schedule, appending to out_dir/loss.csv and writing
/// out_dir/checkpoints/epoch_NNNN.ckpt and out_dir/samples/epoch_NNNN.png.
Checkpoint train_loop(const TrainConfig& config, const DatasetManifest& dataset, const TrainRunOptions& options);

/// Rows: samples. Columns: input, attention, T(x), background layer, object layer, composite.
Image8 translation_grid(const ModelBundle<float>& bundle, std::span<const Tensor<float>> inputs, Domain domain);

/// 64-bit FNV-1a hash of all parameter values of one network (used for invariant checks).
std::uint64_t parameter_hash(const NetworkParams<float>& params);

}  // namespace agan
