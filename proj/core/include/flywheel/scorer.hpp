#pragma once

#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "flywheel/common.hpp"
#include "flywheel/toyworld.hpp"

namespace flywheel {

enum class ScorerKind { knn, rbf, recon };
const char* to_string(ScorerKind kind);
ScorerKind scorer_kind_from_string(const std::string& s);

/// A weighted reference state. Positive weight marks expert-like mass,
/// negative weight a counter-example.
struct Anchor {
  StateVec state;
  double weight = 1.0;
  /// rbf only: kernel width as a fraction of the model bandwidth, in (0, 1].
  double scale = 1.0;
};

/// Raw-score bounds mapped to 0 and 1.
struct Calibration {
  double lo = 0.0;
  double hi = 1.0;
};

struct KnnParams {
  std::size_t k = 1;
  double sigma = 0.05;  // distance scale in 1/(1 + d/sigma)
  std::vector<Anchor> anchors;
};

struct RbfParams {
  std::vector<double> bandwidth;  // per-dimension sigma
  std::vector<Anchor> anchors;
};

/// Dense layer, weights row-major (out x in).
struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weights;
  std::vector<double> bias;
};

/// Autoencoder: tanh hidden layers, linear output, inputs rescaled to the
/// unit box. Reconstruction error is the squared L2 residual.
struct ReconParams {
  std::vector<std::size_t> widths;
  std::vector<DenseLayer> layers;
  DomainBox input_box;
  double tau = 1.0;  // error scale in exp(-err / tau)
  /// Counter-examples folded in by refinement refits.
  std::vector<StateVec> patch_negatives;
};

class ScorerModel {
 public:
  using Params = std::variant<KnnParams, RbfParams, ReconParams>;

  ScorerModel() = default;
  ScorerModel(Params params, Calibration calibration, double w_max = 1.0);

  ScorerKind kind() const;
  const Params& params() const { return params_; }
  const Calibration& calibration() const { return calibration_; }
  double w_max() const { return w_max_; }

  const KnnParams& knn() const { return std::get<KnnParams>(params_); }
  const RbfParams& rbf() const { return std::get<RbfParams>(params_); }
  const ReconParams& recon() const { return std::get<ReconParams>(params_); }

  /// Uncalibrated score; larger means more expert-like.
  double raw(const StateVec& s) const;
  /// Calibrated expertness L(s) in [0, 1].
  double score(const StateVec& s) const;
  /// Calibrated value before clamping to [0, 1].
  double unclamped(const StateVec& s) const;

  void set_calibration(Calibration c);
  /// Throws on broken invariants (k range, sigma > 0, layer chaining, lo < hi).
  void validate() const;

  friend bool operator==(const ScorerModel&, const ScorerModel&);

 private:
  Params params_;
  Calibration calibration_;
  double w_max_ = 1.0;
};

// ---------------------------------------------------------------------------
// Negative sampling

enum class NegativeStrategy { uniform, perturb, constraint_violating, patch };
const char* to_string(NegativeStrategy s);
NegativeStrategy negative_strategy_from_string(const std::string& s);

struct NegativeSet {
  std::vector<StateVec> states;
  NegativeStrategy strategy = NegativeStrategy::uniform;
  /// perturb only: index of the expert state each sample was displaced from.
  std::vector<std::size_t> sources;
};

struct NegativeParams {
  double r_min = 0.05;
  double r_max = 0.1;
  /// constraint_violating only: accepts states that break some constraint.
  std::function<bool(const StateVec&)> violates;
};

NegativeSet sample_negatives(const DomainBox& domain, const ExpertDataset& experts,
                             NegativeStrategy strategy, std::size_t n, std::uint64_t seed,
                             const NegativeParams& params = {});

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  std::size_t epochs = 1500;
  double step_size = 0.01;
  double margin = 0.5;
  std::uint64_t seed = 0;
  std::size_t ensemble_size = 5;
  std::size_t knn_k = 5;
  std::vector<double> sigma_grid{0.03, 0.04, 0.05};
  std::vector<double> knn_sigma_grid{0.02, 0.05, 0.1};
  std::vector<std::size_t> hidden{16, 1, 16};
  double w_max = 1.0;
  double calib_lo_q = 0.01;
  double calib_hi_q = 0.99;

  void validate() const;
};

double raw_score(const ScorerModel& model, const StateVec& s);

/// Mean L over experts minus mean L over negatives.
double contrast(const ScorerModel& model, std::span<const StateVec> experts,
                std::span<const StateVec> negatives);

/// Exact pairwise ranking AUC of expert vs negative scores (ties count 1/2).
double ranking_auc(const ScorerModel& model, std::span<const StateVec> experts,
                   std::span<const StateVec> negatives);

/// Trains a scorer against the expert-vs-negative contrast. `neg_holdout`
/// is used only for model selection and the post-fit contrast check.
ScorerModel fit(ScorerKind kind, const ExpertDataset& experts, const NegativeSet& neg_train,
                const NegativeSet& neg_holdout, const TrainConfig& cfg);

/// Deterministic recon refit from the original inputs plus extra
/// counter-examples (the recon patch path).
ScorerModel refit_recon(const ExpertDataset& experts, const NegativeSet& neg_train,
                        const NegativeSet& neg_holdout, const TrainConfig& cfg,
                        const std::vector<StateVec>& extra_negatives);

/// Bootstrap ensemble: member i refits on a resample of the expert train
/// split with seed derived from (cfg.seed, i).
std::vector<ScorerModel> fit_ensemble(ScorerKind kind, const ExpertDataset& experts,
                                      const NegativeSet& neg_train, const NegativeSet& neg_holdout,
                                      const TrainConfig& cfg);

ScorerModel add_anchor(const ScorerModel& model, const Anchor& anchor);

/// Population standard deviation of L across ensemble members.
double uncertainty(std::span<const ScorerModel> ensemble, const StateVec& s);

// ---------------------------------------------------------------------------
// Reconstruction scorer internals, exposed for gradient checks.

namespace recon {

ReconParams init(std::size_t dims, const std::vector<std::size_t>& hidden, const DomainBox& box,
                 std::uint64_t seed);
double reconstruction_error(const ReconParams& p, const StateVec& s);
/// mean err over experts + mean max(0, margin - err) over negatives.
double loss(const ReconParams& p, std::span<const StateVec> experts,
            std::span<const StateVec> negatives, double margin);
/// Analytic gradient of `loss`, flattened in parameter order.
std::vector<double> gradient(const ReconParams& p, std::span<const StateVec> experts,
                             std::span<const StateVec> negatives, double margin);
std::vector<double> flatten(const ReconParams& p);
void unflatten(ReconParams& p, std::span<const double> flat);

}  // namespace recon

}  // namespace flywheel
