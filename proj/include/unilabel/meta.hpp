/*
 * Copyright (c) 2026 The unilabel Authors
 *
 * Licensed under the Apache License, Version 2.0;
 * You may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an 'AS IS' BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Label-correction stage: the unimodal and multimodal denoising tasks, the
// inner update, the pre/post gate with its bi-level fallback, and extraction
// of corrected labels.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "unilabel/autodiff.hpp"
#include "unilabel/labels.hpp"
#include "unilabel/modality.hpp"
#include "unilabel/nn.hpp"
#include "unilabel/tensor.hpp"

namespace unilabel::meta {

/// Stage-1 outputs for every training sample, row-aligned with `ids`.
struct FrozenBank {
  std::vector<long long> ids;
  std::vector<double> y;
  PerModality<Tensor> uni;                        // x_m      [n x d_m]
  PerModality<Tensor> proj;                       // x_{m'}   [n x d_m]
  PerModality<std::vector<double>> proj_pred{};   // y_hat_{m'}

  std::size_t size() const noexcept { return ids.size(); }
  std::size_t width(Modality m) const { return uni[index(m)].cols(); }
  /// Throws ShapeError when rows disagree.
  void validate() const;
  bool operator==(const FrozenBank& other) const;
};

/// One JSON object per line: id, y, x_<m>, p_<m>, yp_<m>.
std::string bank_jsonl(const FrozenBank& bank);
FrozenBank parse_bank_jsonl(std::string_view text);
void save_bank(const std::filesystem::path& path, const FrozenBank& bank);
FrozenBank load_bank(const std::filesystem::path& path);

inline constexpr double kMinSigma = 1e-12;

struct MetaConfig {
  double alpha = 5e-3;       // inner learning rate
  double meta_alpha = 1e-3;  // meta learning rate
  double sigma = 1.0;        // label corruption std
  double lambda_init = 0.5;
  double rho = 3.0;
  std::size_t oversample = 10;  // b
  std::size_t k_inner = 1;
  std::size_t batch_size = 32;
  std::size_t epochs = 65;
  bool second_order = true;
  bool parallel = true;  // one thread per modality
  std::uint64_t seed = 1111;

  void validate() const;
};

double lambda_schedule(double lambda_init, std::size_t epoch);
double mixed_target(double prev, double y, double lambda);

/// y + sigma * z with z ~ N(0, 1) from `rng`; sigma below kMinSigma throws.
double corrupt_label(double y, double sigma, std::mt19937_64& rng);
/// y_hat_{m'} + sigma * z; same draw rule as corrupt_label.
double make_noisy_label(double pred, double sigma, std::mt19937_64& rng);

/// mean_j |target_j - MUCN(rep_j, label_j)|, the common form of both
/// denoising tasks.
ad::Var denoise_loss(const nn::Bound& mucn, const Tensor& reps, std::span<const double> labels,
                     std::span<const double> targets, double rho);

/// Inner task on unimodal representations, labels already corrupted.
inline ad::Var unimodal_denoise_loss(const nn::Bound& mucn, const Tensor& uni,
                                     std::span<const double> noisy, std::span<const double> targets,
                                     double rho) {
  return denoise_loss(mucn, uni, noisy, targets, rho);
}

/// Outer task on projected multimodal representations against clean y.
inline ad::Var multimodal_denoise_loss(const nn::Bound& mucn, const Tensor& proj,
                                       std::span<const double> noisy, std::span<const double> y,
                                       double rho) {
  return denoise_loss(mucn, proj, noisy, y, rho);
}

/// Rows of `t` at `rows`.
Tensor gather_rows(const Tensor& t, std::span<const std::size_t> rows);

struct OuterDraw {
  std::vector<std::size_t> extra;  // S'
  bool with_replacement = false;
};

/// Draws b * |S| indices from [0, n) avoiding S; falls back to sampling with
/// replacement (possibly overlapping S) when too few samples remain.
OuterDraw draw_outer_set(std::size_t n, std::span<const std::size_t> task, std::size_t oversample,
                         std::mt19937_64& rng);

enum class Branch { kAccepted, kMetaUpdated };
const char* branch_name(Branch b);

struct GateOutcome {
  Branch branch = Branch::kAccepted;
  double loss_pre = 0.0;
  double loss_post = 0.0;
};

using TaskLoss = std::function<ad::Var(const nn::Bound& params)>;

struct GateConfig {
  double alpha = 5e-3;
  double meta_alpha = 1e-3;
  std::size_t k_inner = 1;
  bool second_order = true;
};

/// One gate step on `params`: L_pre = outer(theta); theta' from k_inner SGD
/// steps on `inner`; L_post = outer(theta'). Accepts theta' when
/// L_post < L_pre, otherwise theta -= meta_alpha * d L_post / d theta.
/// Non-finite losses or hypergradients throw NumericalError and leave
/// `params` untouched.
GateOutcome gate_step(nn::ParamStore& params, const TaskLoss& inner, const TaskLoss& outer,
                      const GateConfig& config);

struct GateRecord {
  std::size_t epoch = 0;
  std::size_t batch = 0;
  Modality modality = Modality::kAcoustic;
  double loss_pre = 0.0;
  double loss_post = 0.0;
  Branch branch = Branch::kAccepted;
};

struct EpochCounts {
  std::size_t accepted = 0;
  std::size_t meta_updated = 0;
  std::size_t skipped = 0;
};

struct ModalityResult {
  nn::ParamStore mucn;
  std::vector<GateRecord> gates;
  std::vector<EpochCounts> counts;  // one per epoch
  std::vector<std::string> notes;   // fallbacks and skipped steps
};

/// Runs all meta epochs for one modality starting from `mucn`.
ModalityResult run_modality(const MetaConfig& config, const FrozenBank& bank, Modality m,
                            nn::ParamStore mucn);

/// y_{m_c} = MUCN(x_m, y) with no corruption, for every bank row.
std::vector<double> correct_labels(const nn::ParamStore& mucn, const FrozenBank& bank,
                                   Modality m, double rho);

struct MetaResult {
  PerModality<nn::ParamStore> mucn;
  LabelStore labels;
  std::vector<GateRecord> gates;  // modality-major, then epoch and batch order
  PerModality<std::vector<EpochCounts>> counts;
  std::vector<std::string> notes;
};

/// Fresh MUCNs (seeded per modality), all epochs, then extraction.
MetaResult run_meta(const MetaConfig& config, const FrozenBank& bank);

LabelStore extract_labels(const PerModality<nn::ParamStore>& mucn, const FrozenBank& bank,
                          double rho);

/// Header `epoch,batch,modality,loss_pre,loss_post,branch`.
std::string gate_log_csv(std::span<const GateRecord> gates);

}  // namespace unilabel::meta
