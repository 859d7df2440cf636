#include "flywheel/scorer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace flywheel {

const char* to_string(ScorerKind kind) {
  switch (kind) {
    case ScorerKind::knn: return "knn";
    case ScorerKind::rbf: return "rbf";
    case ScorerKind::recon: return "recon";
  }
  return "?";
}

ScorerKind scorer_kind_from_string(const std::string& s) {
  if (s == "knn") return ScorerKind::knn;
  if (s == "rbf") return ScorerKind::rbf;
  if (s == "recon") return ScorerKind::recon;
  fail(ErrorCode::usage, "unknown scorer kind '" + s + "'");
}

const char* to_string(NegativeStrategy s) {
  switch (s) {
    case NegativeStrategy::uniform: return "uniform";
    case NegativeStrategy::perturb: return "perturb";
    case NegativeStrategy::constraint_violating: return "constraint-violating";
    case NegativeStrategy::patch: return "patch";
  }
  return "?";
}

NegativeStrategy negative_strategy_from_string(const std::string& s) {
  if (s == "uniform") return NegativeStrategy::uniform;
  if (s == "perturb") return NegativeStrategy::perturb;
  if (s == "constraint-violating") return NegativeStrategy::constraint_violating;
  if (s == "patch") return NegativeStrategy::patch;
  fail(ErrorCode::usage, "unknown negative strategy '" + s + "'");
}

namespace {

double rbf_kernel(const RbfParams& p, std::span<const double> a, std::span<const double> s, double scale = 1.0) {
  double e = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double d = (s[i] - a[i]) / (scale * p.bandwidth[i]);
    e += d * d;
  }
  return std::exp(-0.5 * e);
}

double rbf_raw(const RbfParams& p, const StateVec& s, std::size_t skip = SIZE_MAX) {
  double acc = 0.0;
  for (std::size_t i = 0; i < p.anchors.size(); ++i) {
    if (i == skip) continue;
    acc += p.anchors[i].weight * rbf_kernel(p, p.anchors[i].state.values, s.values, p.anchors[i].scale);
  }
  return acc;
}

double knn_raw(const KnnParams& p, const StateVec& s, std::size_t skip = SIZE_MAX) {
  // (distance, index) of the k nearest anchors; index breaks distance ties.
  std::vector<std::pair<double, std::size_t>> best;
  best.reserve(p.anchors.size());
  for (std::size_t i = 0; i < p.anchors.size(); ++i) {
    if (i == skip) continue;
    best.emplace_back(distance(p.anchors[i].state.values, s.values), i);
  }
  const std::size_t k = std::min(p.k, best.size());
  std::partial_sort(best.begin(), best.begin() + static_cast<std::ptrdiff_t>(k), best.end());
  double acc = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    acc += p.anchors[best[j].second].weight / (1.0 + best[j].first / p.sigma);
  }
  return k > 0 ? acc / static_cast<double>(k) : 0.0;
}

}  // namespace

namespace recon {

namespace {

std::vector<double> normalize(const ReconParams& p, const StateVec& s) {
  std::vector<double> x(s.values.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = (s.values[i] - p.input_box.lo[i]) / (p.input_box.hi[i] - p.input_box.lo[i]);
  }
  return x;
}

// Forward pass keeping every layer's activations (activations[0] = input).
std::vector<std::vector<double>> forward(const ReconParams& p, const std::vector<double>& x) {
  std::vector<std::vector<double>> acts;
  acts.reserve(p.layers.size() + 1);
  acts.push_back(x);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& layer = p.layers[l];
    const auto& in = acts.back();
    std::vector<double> out(layer.out);
    for (std::size_t o = 0; o < layer.out; ++o) {
      double z = layer.bias[o];
      const double* w = &layer.weights[o * layer.in];
      for (std::size_t i = 0; i < layer.in; ++i) z += w[i] * in[i];
      out[o] = (l + 1 < p.layers.size()) ? std::tanh(z) : z;
    }
    acts.push_back(std::move(out));
  }
  return acts;
}

double error_of(const std::vector<double>& x, const std::vector<double>& y) {
  double e = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) e += (y[i] - x[i]) * (y[i] - x[i]);
  return e;
}

// Accumulate coef * d err / d params into grad.
void backprop(const ReconParams& p, const std::vector<std::vector<double>>& acts, double coef,
              std::vector<double>& grad, const std::vector<std::size_t>& offsets) {
  const auto& x = acts.front();
  const auto& y = acts.back();
  std::vector<double> delta(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) delta[i] = coef * 2.0 * (y[i] - x[i]);
  for (std::size_t l = p.layers.size(); l-- > 0;) {
    const auto& layer = p.layers[l];
    const auto& in = acts[l];
    const std::size_t off = offsets[l];
    for (std::size_t o = 0; o < layer.out; ++o) {
      for (std::size_t i = 0; i < layer.in; ++i) grad[off + o * layer.in + i] += delta[o] * in[i];
      grad[off + layer.out * layer.in + o] += delta[o];
    }
    if (l == 0) break;
    std::vector<double> prev(layer.in, 0.0);
    for (std::size_t o = 0; o < layer.out; ++o) {
      const double* w = &layer.weights[o * layer.in];
      for (std::size_t i = 0; i < layer.in; ++i) prev[i] += w[i] * delta[o];
    }
    // acts[l] are tanh outputs of the previous layer.
    for (std::size_t i = 0; i < layer.in; ++i) prev[i] *= 1.0 - in[i] * in[i];
    delta = std::move(prev);
  }
}

std::vector<std::size_t> layer_offsets(const ReconParams& p) {
  std::vector<std::size_t> off;
  std::size_t acc = 0;
  for (const auto& l : p.layers) {
    off.push_back(acc);
    acc += l.in * l.out + l.out;
  }
  off.push_back(acc);
  return off;
}

}  // namespace

ReconParams init(std::size_t dims, const std::vector<std::size_t>& hidden, const DomainBox& box,
                 std::uint64_t seed) {
  ReconParams p;
  p.input_box = box;
  p.widths.push_back(dims);
  for (auto h : hidden) p.widths.push_back(h);
  p.widths.push_back(dims);
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < p.widths.size(); ++l) {
    DenseLayer layer;
    layer.in = p.widths[l];
    layer.out = p.widths[l + 1];
    const double scale = std::sqrt(2.0 / static_cast<double>(layer.in + layer.out));
    layer.weights.resize(layer.in * layer.out);
    for (auto& w : layer.weights) w = scale * rng.normal();
    layer.bias.assign(layer.out, 0.0);
    p.layers.push_back(std::move(layer));
  }
  return p;
}

double reconstruction_error(const ReconParams& p, const StateVec& s) {
  const auto x = normalize(p, s);
  const auto acts = forward(p, x);
  return error_of(x, acts.back());
}

double loss(const ReconParams& p, std::span<const StateVec> experts,
            std::span<const StateVec> negatives, double margin) {
  double pos = 0.0;
  for (const auto& s : experts) pos += reconstruction_error(p, s);
  double neg = 0.0;
  for (const auto& s : negatives) neg += std::max(0.0, margin - reconstruction_error(p, s));
  double out = 0.0;
  if (!experts.empty()) out += pos / static_cast<double>(experts.size());
  if (!negatives.empty()) out += neg / static_cast<double>(negatives.size());
  return out;
}

std::vector<double> gradient(const ReconParams& p, std::span<const StateVec> experts,
                             std::span<const StateVec> negatives, double margin) {
  const auto offsets = layer_offsets(p);
  std::vector<double> grad(offsets.back(), 0.0);
  for (const auto& s : experts) {
    const auto acts = forward(p, normalize(p, s));
    backprop(p, acts, 1.0 / static_cast<double>(experts.size()), grad, offsets);
  }
  for (const auto& s : negatives) {
    const auto x = normalize(p, s);
    const auto acts = forward(p, x);
    if (margin - error_of(x, acts.back()) > 0.0) {
      backprop(p, acts, -1.0 / static_cast<double>(negatives.size()), grad, offsets);
    }
  }
  return grad;
}

std::vector<double> flatten(const ReconParams& p) {
  std::vector<double> flat;
  for (const auto& l : p.layers) {
    flat.insert(flat.end(), l.weights.begin(), l.weights.end());
    flat.insert(flat.end(), l.bias.begin(), l.bias.end());
  }
  return flat;
}

void unflatten(ReconParams& p, std::span<const double> flat) {
  std::size_t k = 0;
  for (auto& l : p.layers) {
    for (auto& w : l.weights) w = flat[k++];
    for (auto& b : l.bias) b = flat[k++];
  }
  require(k == flat.size(), ErrorCode::precondition, "flattened parameter length mismatch");
}

}  // namespace recon

ScorerModel::ScorerModel(Params params, Calibration calibration, double w_max)
    : params_(std::move(params)), calibration_(calibration), w_max_(w_max) {
  validate();
}

ScorerKind ScorerModel::kind() const {
  switch (params_.index()) {
    case 0: return ScorerKind::knn;
    case 1: return ScorerKind::rbf;
    default: return ScorerKind::recon;
  }
}

void ScorerModel::validate() const {
  require(calibration_.lo < calibration_.hi, ErrorCode::precondition,
          "uncalibrated model: calibration lo must be < hi");
  if (const auto* k = std::get_if<KnnParams>(&params_)) {
    require(!k->anchors.empty(), ErrorCode::precondition, "knn scorer has an empty anchor set");
    require(k->k >= 1 && k->k <= k->anchors.size(), ErrorCode::precondition,
            "knn k must satisfy 1 <= k <= |anchors|");
    require(k->sigma > 0.0, ErrorCode::precondition, "knn sigma must be > 0");
  } else if (const auto* r = std::get_if<RbfParams>(&params_)) {
    require(!r->anchors.empty(), ErrorCode::precondition, "rbf scorer has an empty anchor set");
    for (double s : r->bandwidth) require(s > 0.0, ErrorCode::precondition, "rbf sigma must be > 0");
    for (const auto& a : r->anchors) {
      require(a.state.dims() == r->bandwidth.size(), ErrorCode::precondition,
              "rbf anchor dimensionality does not match bandwidth");
    }
  } else {
    const auto& p = std::get<ReconParams>(params_);
    require(p.layers.size() + 1 == p.widths.size(), ErrorCode::precondition,
            "recon widths and layers disagree");
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
      const auto& layer = p.layers[l];
      require(layer.in == p.widths[l] && layer.out == p.widths[l + 1] &&
                  layer.weights.size() == layer.in * layer.out && layer.bias.size() == layer.out,
              ErrorCode::precondition, "recon layer shapes do not chain");
    }
    require(p.tau > 0.0, ErrorCode::precondition, "recon tau must be > 0");
  }
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (!std::is_same_v<T, ReconParams>) {
          for (const auto& a : p.anchors) {
            require(std::abs(a.weight) <= w_max_ + 1e-12, ErrorCode::precondition,
                    "anchor weight exceeds w_max");
            require(a.scale > 0.0 && a.scale <= 1.0, ErrorCode::precondition, "anchor scale must lie in (0, 1]");
            if constexpr (std::is_same_v<T, KnnParams>) {
              require(a.scale == 1.0, ErrorCode::precondition, "knn anchors take no kernel scale");
            }
          }
        }
      },
      params_);
}

double ScorerModel::raw(const StateVec& s) const {
  if (const auto* k = std::get_if<KnnParams>(&params_)) return knn_raw(*k, s);
  if (const auto* r = std::get_if<RbfParams>(&params_)) return rbf_raw(*r, s);
  const auto& p = std::get<ReconParams>(params_);
  return std::exp(-recon::reconstruction_error(p, s) / p.tau);
}

double ScorerModel::unclamped(const StateVec& s) const {
  return (raw(s) - calibration_.lo) / (calibration_.hi - calibration_.lo);
}

double ScorerModel::score(const StateVec& s) const { return std::clamp(unclamped(s), 0.0, 1.0); }

void ScorerModel::set_calibration(Calibration c) {
  calibration_ = c;
  validate();
}

bool operator==(const ScorerModel& a, const ScorerModel& b) {
  auto anchors_eq = [](const std::vector<Anchor>& x, const std::vector<Anchor>& y) {
    if (x.size() != y.size()) return false;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i].weight != y[i].weight || x[i].scale != y[i].scale || !(x[i].state == y[i].state)) return false;
    }
    return true;
  };
  if (a.kind() != b.kind() || a.calibration_.lo != b.calibration_.lo ||
      a.calibration_.hi != b.calibration_.hi || a.w_max_ != b.w_max_) {
    return false;
  }
  switch (a.kind()) {
    case ScorerKind::knn:
      return a.knn().k == b.knn().k && a.knn().sigma == b.knn().sigma &&
             anchors_eq(a.knn().anchors, b.knn().anchors);
    case ScorerKind::rbf:
      return a.rbf().bandwidth == b.rbf().bandwidth && anchors_eq(a.rbf().anchors, b.rbf().anchors);
    case ScorerKind::recon: {
      const auto& x = a.recon();
      const auto& y = b.recon();
      return x.widths == y.widths && recon::flatten(x) == recon::flatten(y) && x.tau == y.tau &&
             x.input_box == y.input_box && x.patch_negatives == y.patch_negatives;
    }
  }
  return false;
}

// ---------------------------------------------------------------------------

NegativeSet sample_negatives(const DomainBox& domain, const ExpertDataset& experts,
                             NegativeStrategy strategy, std::size_t n, std::uint64_t seed,
                             const NegativeParams& params) {
  require(n >= 1, ErrorCode::precondition, "sample_negatives needs n >= 1");
  domain.validate();
  NegativeSet out;
  out.strategy = strategy;
  Rng rng(seed);
  const std::size_t max_attempts = 1000 * n;
  std::size_t attempts = 0;
  const std::size_t d = domain.dims();

  auto far_from_experts = [&](const std::vector<double>& x) {
    const double r2 = params.r_min * params.r_min;
    for (const auto& e : experts.states) {
      if (squared_distance(e.values, x) < r2) return false;
    }
    return true;
  };
  auto uniform_point = [&] {
    std::vector<double> x(d);
    for (std::size_t i = 0; i < d; ++i) x[i] = rng.uniform(domain.lo[i], domain.hi[i]);
    return x;
  };

  switch (strategy) {
    case NegativeStrategy::uniform:
      while (out.states.size() < n) {
        require(attempts++ < max_attempts, ErrorCode::exhausted,
                "uniform negative sampling exhausted (expert data covers the box)");
        auto x = uniform_point();
        if (far_from_experts(x)) out.states.emplace_back(std::move(x));
      }
      break;
    case NegativeStrategy::perturb:
      require(!experts.states.empty(), ErrorCode::precondition, "perturb needs expert states");
      require(params.r_min >= 0.0 && params.r_max >= params.r_min, ErrorCode::precondition,
              "perturb radii must satisfy 0 <= r_min <= r_max");
      while (out.states.size() < n) {
        require(attempts++ < max_attempts, ErrorCode::exhausted, "perturb negative sampling exhausted");
        const std::size_t src = rng.index(experts.states.size());
        const auto dir = rng.direction(d);
        const double r = rng.uniform(params.r_min, params.r_max);
        std::vector<double> x = experts.states[src].values;
        for (std::size_t i = 0; i < d; ++i) x[i] += r * dir[i];
        if (!domain.contains(x)) continue;
        out.states.emplace_back(std::move(x));
        out.sources.push_back(src);
      }
      break;
    case NegativeStrategy::constraint_violating:
      require(static_cast<bool>(params.violates), ErrorCode::precondition,
              "constraint-violating negatives need a violation predicate");
      while (out.states.size() < n) {
        require(attempts++ < max_attempts, ErrorCode::exhausted,
                "constraint-violating negative sampling exhausted");
        StateVec s(uniform_point());
        if (params.violates(s)) out.states.push_back(std::move(s));
      }
      break;
    case NegativeStrategy::patch:
      fail(ErrorCode::usage, "patch negatives come from refinement proposals, not sampling");
  }
  return out;
}

void TrainConfig::validate() const {
  require(margin > 0.0 && margin <= 1.0, ErrorCode::usage, "hinge margin must lie in (0, 1]");
  require(ensemble_size >= 1, ErrorCode::usage, "ensemble size must be >= 1");
  require(!sigma_grid.empty() && !knn_sigma_grid.empty(), ErrorCode::usage, "empty bandwidth grid");
  require(knn_k >= 1, ErrorCode::usage, "knn k must be >= 1");
  require(step_size > 0.0, ErrorCode::usage, "step size must be > 0");
  require(calib_lo_q >= 0.0 && calib_lo_q < calib_hi_q && calib_hi_q <= 1.0, ErrorCode::usage,
          "calibration quantiles must satisfy 0 <= lo < hi <= 1");
}

double raw_score(const ScorerModel& model, const StateVec& s) { return model.score(s); }

double contrast(const ScorerModel& model, std::span<const StateVec> experts,
                std::span<const StateVec> negatives) {
  require(!experts.empty() && !negatives.empty(), ErrorCode::precondition,
          "contrast needs non-empty expert and negative sets");
  double e = 0.0;
  for (const auto& s : experts) e += model.score(s);
  double n = 0.0;
  for (const auto& s : negatives) n += model.score(s);
  return e / static_cast<double>(experts.size()) - n / static_cast<double>(negatives.size());
}

double ranking_auc(const ScorerModel& model, std::span<const StateVec> experts,
                   std::span<const StateVec> negatives) {
  require(!experts.empty() && !negatives.empty(), ErrorCode::precondition,
          "ranking_auc needs non-empty sets");
  std::vector<double> e;
  std::vector<double> n;
  for (const auto& s : experts) e.push_back(model.score(s));
  for (const auto& s : negatives) n.push_back(model.score(s));
  double wins = 0.0;
  for (double a : e) {
    for (double b : n) wins += a > b ? 1.0 : (a == b ? 0.5 : 0.0);
  }
  return wins / static_cast<double>(e.size() * n.size());
}

namespace {

Calibration calibrate(std::vector<double> raw_scores, const TrainConfig& cfg) {
  Calibration c;
  c.lo = quantile(raw_scores, cfg.calib_lo_q);
  c.hi = quantile(std::move(raw_scores), cfg.calib_hi_q);
  if (!(c.hi > c.lo)) c.hi = c.lo + std::max(1.0, std::abs(c.lo)) * 1e-9;
  return c;
}

ScorerModel fit_instance(ScorerKind kind, const std::vector<StateVec>& train,
                         const std::vector<StateVec>& holdout, const NegativeSet& neg_train,
                         const NegativeSet& neg_holdout, const TrainConfig& cfg) {
  const std::size_t d = train.front().dims();
  std::optional<ScorerModel> best;
  double best_contrast = -std::numeric_limits<double>::infinity();

  std::vector<Anchor> anchors;
  for (const auto& s : train) anchors.push_back({s, 1.0});
  if (kind == ScorerKind::rbf) {
    for (const auto& s : neg_train.states) anchors.push_back({s, -1.0});
  }

  const auto& grid = kind == ScorerKind::rbf ? cfg.sigma_grid : cfg.knn_sigma_grid;
  for (double sigma : grid) {
    ScorerModel::Params params;
    if (kind == ScorerKind::rbf) {
      params = RbfParams{std::vector<double>(d, sigma), anchors};
    } else {
      params = KnnParams{std::min(cfg.knn_k, anchors.size()), sigma, anchors};
    }
    // Leave-one-out raw scores on the expert train split.
    std::vector<double> loo;
    loo.reserve(train.size());
    for (std::size_t i = 0; i < train.size(); ++i) {
      if (kind == ScorerKind::rbf) {
        loo.push_back(rbf_raw(std::get<RbfParams>(params), train[i], i));
      } else {
        loo.push_back(knn_raw(std::get<KnnParams>(params), train[i], i));
      }
    }
    ScorerModel model(std::move(params), calibrate(std::move(loo), cfg), cfg.w_max);
    const auto& eval = holdout.empty() ? train : holdout;
    const double c = contrast(model, eval, neg_holdout.states);
    if (c > best_contrast) {
      best_contrast = c;
      best = std::move(model);
    }
  }
  return *best;
}

ScorerModel fit_recon(const std::vector<StateVec>& train, const NegativeSet& neg_train,
                      const std::vector<StateVec>& extra_negatives, const TrainConfig& cfg) {
  const std::size_t d = train.front().dims();
  std::vector<StateVec> negatives = neg_train.states;
  negatives.insert(negatives.end(), extra_negatives.begin(), extra_negatives.end());

  DomainBox box{train.front().values, train.front().values};
  for (const std::vector<StateVec>* set : {&train, static_cast<const std::vector<StateVec>*>(&negatives)}) {
    for (const auto& s : *set) {
      for (std::size_t i = 0; i < d; ++i) {
        box.lo[i] = std::min(box.lo[i], s.values[i]);
        box.hi[i] = std::max(box.hi[i], s.values[i]);
      }
    }
  }
  for (std::size_t i = 0; i < d; ++i) {
    if (!(box.hi[i] > box.lo[i])) box.hi[i] = box.lo[i] + 1.0;
  }

  ReconParams p = recon::init(d, cfg.hidden, box, Rng::derive(cfg.seed, 0x7265636f6e));
  p.patch_negatives = extra_negatives;
  auto theta = recon::flatten(p);
  std::vector<double> m(theta.size(), 0.0);
  std::vector<double> v(theta.size(), 0.0);
  constexpr double b1 = 0.9;
  constexpr double b2 = 0.999;
  constexpr double eps = 1e-8;
  double b1t = 1.0;
  double b2t = 1.0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    recon::unflatten(p, theta);
    const auto g = recon::gradient(p, train, negatives, cfg.margin);
    b1t *= b1;
    b2t *= b2;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = b1 * m[i] + (1 - b1) * g[i];
      v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
      const double mh = m[i] / (1 - b1t);
      const double vh = v[i] / (1 - b2t);
      theta[i] -= cfg.step_size * mh / (std::sqrt(vh) + eps);
    }
  }
  recon::unflatten(p, theta);

  std::vector<double> errs;
  for (const auto& s : train) errs.push_back(recon::reconstruction_error(p, s));
  p.tau = std::max(median(errs), 1e-12);
  std::vector<double> raws;
  for (double e : errs) raws.push_back(std::exp(-e / p.tau));
  return ScorerModel(std::move(p), calibrate(std::move(raws), cfg), cfg.w_max);
}

ScorerModel fit_on(ScorerKind kind, const std::vector<StateVec>& train,
                   const std::vector<StateVec>& holdout, const NegativeSet& neg_train,
                   const NegativeSet& neg_holdout, const TrainConfig& cfg,
                   const std::vector<StateVec>& extra_negatives) {
  cfg.validate();
  require(train.size() >= 10, ErrorCode::precondition, "fit needs at least 10 expert train states");
  require(!neg_holdout.states.empty(), ErrorCode::precondition, "fit needs holdout negatives");
  require(kind == ScorerKind::recon || !neg_train.states.empty() || kind == ScorerKind::knn,
          ErrorCode::precondition, "rbf fit needs training negatives");
  ScorerModel model = kind == ScorerKind::recon
                          ? fit_recon(train, neg_train, extra_negatives, cfg)
                          : fit_instance(kind, train, holdout, neg_train, neg_holdout, cfg);
  const auto& eval = holdout.empty() ? train : holdout;
  const double c = contrast(model, eval, neg_holdout.states);
  require(c > 0.0, ErrorCode::fit_failure,
          "fit did not separate experts from negatives (holdout contrast " + std::to_string(c) + ")");
  return model;
}

}  // namespace

ScorerModel fit(ScorerKind kind, const ExpertDataset& experts, const NegativeSet& neg_train,
                const NegativeSet& neg_holdout, const TrainConfig& cfg) {
  return fit_on(kind, experts.train(), experts.holdout(), neg_train, neg_holdout, cfg, {});
}

ScorerModel refit_recon(const ExpertDataset& experts, const NegativeSet& neg_train,
                        const NegativeSet& neg_holdout, const TrainConfig& cfg,
                        const std::vector<StateVec>& extra_negatives) {
  return fit_on(ScorerKind::recon, experts.train(), experts.holdout(), neg_train, neg_holdout, cfg,
                extra_negatives);
}

std::vector<ScorerModel> fit_ensemble(ScorerKind kind, const ExpertDataset& experts,
                                      const NegativeSet& neg_train, const NegativeSet& neg_holdout,
                                      const TrainConfig& cfg) {
  const auto train = experts.train();
  const auto holdout = experts.holdout();
  std::vector<ScorerModel> out;
  for (std::size_t m = 0; m < cfg.ensemble_size; ++m) {
    Rng rng(Rng::derive(cfg.seed, 1000 + m));
    std::vector<StateVec> resample;
    resample.reserve(train.size());
    for (std::size_t i = 0; i < train.size(); ++i) resample.push_back(train[rng.index(train.size())]);
    TrainConfig member = cfg;
    member.seed = Rng::derive(cfg.seed, 2000 + m);
    out.push_back(fit_on(kind, resample, holdout, neg_train, neg_holdout, member, {}));
  }
  return out;
}

ScorerModel add_anchor(const ScorerModel& model, const Anchor& anchor) {
  require(model.kind() != ScorerKind::recon, ErrorCode::unsupported,
          "add_anchor is not supported for recon scorers; refit with patch negatives instead");
  require(std::abs(anchor.weight) <= model.w_max(), ErrorCode::precondition,
          "anchor weight exceeds w_max");
  ScorerModel::Params params = model.params();
  std::visit(
      [&](auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (!std::is_same_v<T, ReconParams>) {
          require(p.anchors.empty() || p.anchors.front().state.dims() == anchor.state.dims(),
                  ErrorCode::precondition, "anchor dimensionality mismatch");
          p.anchors.push_back(anchor);
        }
      },
      params);
  return ScorerModel(std::move(params), model.calibration(), model.w_max());
}

double uncertainty(std::span<const ScorerModel> ensemble, const StateVec& s) {
  require(ensemble.size() >= 2, ErrorCode::precondition, "uncertainty needs an ensemble of >= 2");
  for (const auto& m : ensemble) {
    require(m.kind() == ensemble.front().kind(), ErrorCode::precondition,
            "uncertainty ensemble has heterogeneous kinds");
  }
  double mean = 0.0;
  std::vector<double> l;
  for (const auto& m : ensemble) l.push_back(m.score(s));
  for (double x : l) mean += x;
  mean /= static_cast<double>(l.size());
  double var = 0.0;
  for (double x : l) var += (x - mean) * (x - mean);
  return std::sqrt(var / static_cast<double>(l.size()));
}

}  // namespace flywheel
