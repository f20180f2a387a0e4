#include <algorithm>
#include <cmath>

#include "learner_internal.hpp"
#include "rbc/parallel.hpp"

namespace rbc {

namespace {

// Above this many samples the Gram matrix is not materialized and kernel
// columns are recomputed on demand.
constexpr std::size_t kGramLimit = 4000;

double kernel_value(KernelKind kind, double gamma, std::span<const double> a, std::span<const double> b) {
  if (kind == KernelKind::Linear) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s + 1.0;
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  // The added constant acts as the bias term.
  return std::exp(-gamma * s) + 1.0;
}

}  // namespace

SvmModel::SvmModel(LearnerConfig cfg, KernelKind kernel, double gamma, Matrix support_vectors,
                   std::vector<BinaryMachine> machines, std::size_t n_features, int n_classes)
    : Classifier(n_features, n_classes), cfg_(std::move(cfg)), kernel_(kernel), gamma_(gamma),
      support_vectors_(std::move(support_vectors)), machines_(std::move(machines)) {}

double SvmModel::kernel(std::span<const double> a, std::span<const double> b) const {
  return kernel_value(kernel_, gamma_, a, b);
}

void SvmModel::decision_function(std::span<const double> x, std::span<double> out) const {
  check_width(x);
  std::vector<double> kx(support_vectors_.rows());
  for (std::size_t s = 0; s < kx.size(); ++s) kx[s] = kernel(support_vectors_.row(s), x);
  for (std::size_t c = 0; c < machines_.size(); ++c) {
    double f = 0.0;
    const auto& m = machines_[c];
    for (std::size_t j = 0; j < m.support.size(); ++j) f += m.coef[j] * kx[m.support[j]];
    out[c] = f;
  }
}

void SvmModel::predict_proba(std::span<const double> x, std::span<double> out) const {
  decision_function(x, out);
  softmax_inplace(out);
}

json SvmModel::to_json() const {
  json machines = json::array();
  for (const auto& m : machines_) machines.push_back({{"support", m.support}, {"coef", m.coef}});
  return model_envelope("SVM", cfg_, n_features(), n_classes(),
                        {{"kernel", kernel_ == KernelKind::Rbf ? "rbf" : "linear"},
                         {"gamma", gamma_},
                         {"n_support", support_vectors_.rows()},
                         {"support_vectors", support_vectors_.data()},
                         {"machines", machines}});
}

std::unique_ptr<SvmModel> fit_svm(const LabeledDataset& train, const LearnerConfig& cfg) {
  check_trainable(train, LearnerKind::SVM);
  const json hp = cfg.resolved();
  check_standardized(train, hp, LearnerKind::SVM);
  const KernelKind kind = hp["kernel"] == "linear" ? KernelKind::Linear : KernelKind::Rbf;
  const double gamma = hp["gamma"].is_string() ? 1.0 / static_cast<double>(std::max<std::size_t>(train.dim(), 1))
                                               : hp["gamma"].get<double>();
  const double c_param = hp["C"].get<double>();
  const auto epochs = hp["epochs"].get<std::size_t>();
  const auto w = class_sample_weights(train, hp["class_weight"].get<std::string>());
  const std::size_t n = train.size();
  const auto k = static_cast<std::size_t>(train.n_classes);
  const Matrix& x = train.features;

  const bool use_gram = n <= kGramLimit;
  Matrix gram;
  if (use_gram) {
    gram = Matrix(n, n);
    parallel_for(n, [&](std::size_t i) {
      for (std::size_t j = 0; j < n; ++j) gram(i, j) = kernel_value(kind, gamma, x.row(i), x.row(j));
    });
  }

  const double lambda = 1.0 / (c_param * static_cast<double>(n));
  const double horizon = static_cast<double>(epochs * n);

  // Kernel Pegasos, one-vs-rest. g[i] = sum_j alpha_j y_j K(i,j) is kept up
  // to date so each step costs O(1) unless a margin violation triggers an
  // O(n) column update.
  std::vector<std::vector<double>> alphas(k);
  parallel_for(k, [&](std::size_t c) {
    std::vector<double> alpha(n, 0.0), g(n, 0.0), col(n);
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<std::size_t>(train.labels[i]) == c ? 1.0 : -1.0;
    Rng rng(derive_seed(cfg.seed, c));
    auto order = iota_indices(n);
    std::size_t t = 0;
    for (std::size_t e = 0; e < epochs; ++e) {
      rng.shuffle(order);
      for (std::size_t i : order) {
        ++t;
        const double margin = y[i] * g[i] / (lambda * static_cast<double>(t));
        if (margin >= 1.0) continue;
        alpha[i] += w[i];
        const double scale = w[i] * y[i];
        if (use_gram) {
          for (std::size_t j = 0; j < n; ++j) g[j] += scale * gram(i, j);
        } else {
          for (std::size_t j = 0; j < n; ++j) g[j] += scale * kernel_value(kind, gamma, x.row(i), x.row(j));
        }
      }
    }
    for (std::size_t i = 0; i < n; ++i) alpha[i] *= y[i] / (lambda * horizon);
    alphas[c] = std::move(alpha);
  });

  // Pool support vectors across machines so each is stored once.
  std::vector<std::size_t> slot(n, static_cast<std::size_t>(-1));
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < k; ++c)
      if (alphas[c][i] != 0.0) {
        slot[i] = rows.size();
        rows.push_back(i);
        break;
      }
  std::vector<SvmModel::BinaryMachine> machines(k);
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t i = 0; i < n; ++i)
      if (alphas[c][i] != 0.0) {
        machines[c].support.push_back(slot[i]);
        machines[c].coef.push_back(alphas[c][i]);
      }
  return std::make_unique<SvmModel>(cfg, kind, gamma, x.select_rows(rows), std::move(machines), train.dim(),
                                    train.n_classes);
}

}  // namespace rbc
