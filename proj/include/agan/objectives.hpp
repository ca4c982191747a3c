#pragma once

#include "agan/gradcheck.hpp"
#include "agan/ops.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace agan {

enum class TrainMode { unsupervised, supervised };

std::string_view mode_name(TrainMode mode);
TrainMode parse_mode(std::string_view text);

struct LossWeights {
  double lambda_cyc = 10.0;
  double lambda_a_cyc = 1.0;
  /// Sparse attention weight, also called lambda_attn.
  double lambda_a_sparse = 1.0;
  double lambda_a_sup = 1.0;

  /// Rejects negative weights.
  void validate() const;
};

/// Scalar value of every loss term for one iteration. Mode-specific terms are empty when
/// the mode does not use them.
struct LossReport {
  double gan_g_xy = 0.0;
  double gan_g_yx = 0.0;
  double gan_d_x = 0.0;
  double gan_d_y = 0.0;
  double cyc = 0.0;
  std::optional<double> a_cyc;
  std::optional<double> a_sparse;
  std::optional<double> a_sup;
  double total_g = 0.0;
  double total_d = 0.0;

  /// "gan_g_xy,gan_g_yx,gan_d_x,gan_d_y,cyc,a_cyc,a_sparse,a_sup,total_g,total_d"
  static std::string csv_header();
  /// Values printed with %.9g; absent terms are empty cells.
  std::string csv_row() const;
  bool all_finite() const;
};

/// LSGAN discriminator loss: mean((real - 1)^2) + mean(fake^2).
template <typename Scalar>
Tensor<Scalar> loss_gan_d(const Tensor<Scalar>& real_scores, const Tensor<Scalar>& fake_scores);

/// LSGAN generator loss: mean((fake - 1)^2).
template <typename Scalar>
Tensor<Scalar> loss_gan_g(const Tensor<Scalar>& fake_scores);

/// mean|F(G(x)) - x| + mean|G(F(y)) - y|.
template <typename Scalar>
Tensor<Scalar> loss_cycle(const Tensor<Scalar>& x, const Tensor<Scalar>& f_of_g_x, const Tensor<Scalar>& y,
                          const Tensor<Scalar>& g_of_f_y);

/// mean|A_X(x) - A_Y(G(x))| + mean|A_Y(y) - A_X(F(y))|.
template <typename Scalar>
Tensor<Scalar> loss_attn_cycle(const Tensor<Scalar>& a_x_of_x, const Tensor<Scalar>& a_y_of_gx,
                               const Tensor<Scalar>& a_y_of_y, const Tensor<Scalar>& a_x_of_fy);

/// mean|A_X(x)| + mean|A_Y(y)|; reads only the maps of real inputs.
template <typename Scalar>
Tensor<Scalar> loss_attn_sparse(const Tensor<Scalar>& a_x_of_x, const Tensor<Scalar>& a_y_of_y);

/// Per-sample mean |m - A| averaged over each domain's batch, summed over the two domains.
/// Masks must be binary to within 1e-6.
template <typename Scalar>
Tensor<Scalar> loss_attn_supervised(std::span<const Tensor<Scalar>> maps_x, std::span<const Tensor<Scalar>> masks_x,
                                    std::span<const Tensor<Scalar>> maps_y, std::span<const Tensor<Scalar>> masks_y);

template <typename Scalar>
struct GeneratorComponents {
  Tensor<Scalar> gan_g_xy;
  Tensor<Scalar> gan_g_yx;
  Tensor<Scalar> cyc;
  Tensor<Scalar> a_cyc;     // unsupervised only
  Tensor<Scalar> a_sparse;  // unsupervised only
  Tensor<Scalar> a_sup;     // supervised only
};

template <typename Scalar>
struct GeneratorObjective {
  Tensor<Scalar> total;
  LossReport report;
};

/// Unsupervised: gan_g_xy + gan_g_yx + l_cyc*cyc + l_a_cyc*a_cyc + l_a_sparse*a_sparse.
/// Supervised:   gan_g_xy + gan_g_yx + l_cyc*cyc + l_a_sup*a_sup.
/// A missing term, or a term the mode excludes, is rejected.
template <typename Scalar>
GeneratorObjective<Scalar> total_generator_loss(TrainMode mode, const LossWeights& weights,
                                                const GeneratorComponents<Scalar>& components);

/// Gradient checks for every loss term composed with a small two-layer convolutional network.
std::vector<GradcheckCase> objective_gradcheck_cases();

}  // namespace agan
