#include <algorithm>
#include <cmath>

#include "learner_internal.hpp"

namespace rbc {

// ------------------------------------------------------------------- MLP --

void MlpNetwork::forward(std::span<const double> x, std::span<double> hidden_act, std::span<double> probs) const {
  const double* w1 = params.data();
  const double* b1 = w1 + hidden * inputs;
  const double* w2 = b1 + hidden;
  const double* b2 = w2 + outputs * hidden;
  for (std::size_t j = 0; j < hidden; ++j) {
    double s = b1[j];
    const double* row = w1 + j * inputs;
    for (std::size_t i = 0; i < inputs; ++i) s += row[i] * x[i];
    hidden_act[j] = s > 0.0 ? s : 0.0;
  }
  for (std::size_t o = 0; o < outputs; ++o) {
    double s = b2[o];
    const double* row = w2 + o * hidden;
    for (std::size_t j = 0; j < hidden; ++j) s += row[j] * hidden_act[j];
    probs[o] = s;
  }
  softmax_inplace(probs);
}

double MlpNetwork::loss_and_gradient(const Matrix& x, std::span<const int> y, std::span<const double> w,
                                     std::span<const std::size_t> rows, double alpha,
                                     std::span<double> grad) const {
  const bool want_grad = !grad.empty();
  if (want_grad) std::fill(grad.begin(), grad.end(), 0.0);
  double w_total = 0.0;
  for (auto r : rows) w_total += w[r];
  require(w_total > 0.0, ErrorCode::EmptyData, "MLP batch has no weight");

  const double* w2 = params.data() + hidden * inputs + hidden;
  double* g_w1 = want_grad ? grad.data() : nullptr;
  double* g_b1 = want_grad ? g_w1 + hidden * inputs : nullptr;
  double* g_w2 = want_grad ? g_b1 + hidden : nullptr;
  double* g_b2 = want_grad ? g_w2 + outputs * hidden : nullptr;

  std::vector<double> h(hidden), p(outputs), delta(outputs), dh(hidden);
  double loss = 0.0;
  for (auto r : rows) {
    const auto xr = x.row(r);
    forward(xr, h, p);
    const auto label = static_cast<std::size_t>(y[r]);
    loss += w[r] * -std::log(std::max(p[label], 1e-300));
    if (!want_grad) continue;
    const double scale = w[r] / w_total;
    for (std::size_t o = 0; o < outputs; ++o) delta[o] = scale * (p[o] - (o == label ? 1.0 : 0.0));
    std::fill(dh.begin(), dh.end(), 0.0);
    for (std::size_t o = 0; o < outputs; ++o) {
      g_b2[o] += delta[o];
      double* grow = g_w2 + o * hidden;
      const double* wrow = w2 + o * hidden;
      for (std::size_t j = 0; j < hidden; ++j) {
        grow[j] += delta[o] * h[j];
        dh[j] += wrow[j] * delta[o];
      }
    }
    for (std::size_t j = 0; j < hidden; ++j) {
      if (h[j] <= 0.0) continue;
      g_b1[j] += dh[j];
      double* grow = g_w1 + j * inputs;
      for (std::size_t i = 0; i < inputs; ++i) grow[i] += dh[j] * xr[i];
    }
  }
  loss /= w_total;

  // L2 on the weight matrices only.
  double sq = 0.0;
  auto penalize = [&](std::size_t offset, std::size_t count) {
    for (std::size_t i = offset; i < offset + count; ++i) {
      sq += params[i] * params[i];
      if (want_grad) grad[i] += alpha * params[i];
    }
  };
  penalize(0, hidden * inputs);
  penalize(hidden * inputs + hidden, outputs * hidden);
  return loss + 0.5 * alpha * sq;
}

MlpModel::MlpModel(LearnerConfig cfg, MlpNetwork net)
    : Classifier(net.inputs, static_cast<int>(net.outputs)), cfg_(std::move(cfg)), net_(std::move(net)) {}

void MlpModel::predict_proba(std::span<const double> x, std::span<double> out) const {
  check_width(x);
  std::vector<double> h(net_.hidden);
  net_.forward(x, h, out);
}

json MlpModel::to_json() const {
  return model_envelope("MLP", cfg_, n_features(), n_classes(),
                        {{"inputs", net_.inputs}, {"hidden", net_.hidden}, {"outputs", net_.outputs},
                         {"params", net_.params}});
}

std::unique_ptr<MlpModel> fit_mlp(const LabeledDataset& train, const LearnerConfig& cfg) {
  check_trainable(train, LearnerKind::MLP);
  const json hp = cfg.resolved();
  check_standardized(train, hp, LearnerKind::MLP);
  const auto w = class_sample_weights(train, hp["class_weight"].get<std::string>());
  const auto epochs = hp["epochs"].get<std::size_t>();
  const auto batch = hp["batch_size"].get<std::size_t>();
  const double lr = hp["learning_rate"].get<double>();
  const double momentum = hp["momentum"].get<double>();
  const double alpha = hp["alpha"].get<double>();

  MlpNetwork net;
  net.inputs = train.dim();
  net.hidden = hp["hidden_units"].get<std::size_t>();
  net.outputs = static_cast<std::size_t>(train.n_classes);
  net.params.assign(net.param_count(), 0.0);

  Rng rng(derive_seed(cfg.seed, "mlp-init"));
  const double r1 = std::sqrt(6.0 / static_cast<double>(net.inputs + net.hidden));
  const double r2 = std::sqrt(6.0 / static_cast<double>(net.hidden + net.outputs));
  const std::size_t n_w1 = net.hidden * net.inputs;
  const std::size_t off_w2 = n_w1 + net.hidden;
  for (std::size_t i = 0; i < n_w1; ++i) net.params[i] = rng.uniform(-r1, r1);
  for (std::size_t i = 0; i < net.outputs * net.hidden; ++i) net.params[off_w2 + i] = rng.uniform(-r2, r2);

  Rng order_rng(derive_seed(cfg.seed, "mlp-order"));
  auto order = iota_indices(train.size());
  std::vector<double> grad(net.param_count()), velocity(net.param_count(), 0.0);
  for (std::size_t e = 0; e < epochs; ++e) {
    order_rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      const std::span<const std::size_t> rows(order.data() + start, end - start);
      epoch_loss += net.loss_and_gradient(train.features, train.labels, w, rows, alpha, grad);
      for (std::size_t i = 0; i < grad.size(); ++i) {
        velocity[i] = momentum * velocity[i] - lr * grad[i];
        net.params[i] += velocity[i];
      }
    }
    require(std::isfinite(epoch_loss), ErrorCode::Divergence,
            "MLP training diverged at epoch " + std::to_string(e + 1) + " (non-finite loss)");
  }
  return std::make_unique<MlpModel>(cfg, std::move(net));
}

// --------------------------------------------------- logistic regression --

namespace {

struct LogRegProblem {
  const Matrix& x;
  std::span<const int> y;
  std::span<const double> w;
  std::size_t k;
  double l2;
  double w_total;

  std::size_t dim() const { return x.cols(); }

  // theta = [W (k x d) row-major, b (k)].
  double evaluate(const std::vector<double>& theta, std::vector<double>* grad) const {
    const std::size_t d = dim();
    if (grad) std::fill(grad->begin(), grad->end(), 0.0);
    std::vector<double> z(k);
    double loss = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
      const auto xi = x.row(i);
      for (std::size_t c = 0; c < k; ++c) {
        double s = theta[k * d + c];
        const double* wc = theta.data() + c * d;
        for (std::size_t f = 0; f < d; ++f) s += wc[f] * xi[f];
        z[c] = s;
      }
      const double m = *std::max_element(z.begin(), z.end());
      double sum = 0.0;
      for (double v : z) sum += std::exp(v - m);
      const auto label = static_cast<std::size_t>(y[i]);
      loss += w[i] * (m + std::log(sum) - z[label]);
      if (!grad) continue;
      const double scale = w[i] / w_total;
      for (std::size_t c = 0; c < k; ++c) {
        const double g = scale * (std::exp(z[c] - m) / sum - (c == label ? 1.0 : 0.0));
        double* gc = grad->data() + c * d;
        for (std::size_t f = 0; f < d; ++f) gc[f] += g * xi[f];
        (*grad)[k * d + c] += g;
      }
    }
    loss /= w_total;
    double sq = 0.0;
    for (std::size_t i = 0; i < k * d; ++i) {
      sq += theta[i] * theta[i];
      if (grad) (*grad)[i] += l2 * theta[i];
    }
    return loss + 0.5 * l2 * sq;
  }
};

}  // namespace

LogRegModel::LogRegModel(LearnerConfig cfg, Matrix coef, std::vector<double> intercept, bool converged)
    : Classifier(coef.cols(), static_cast<int>(coef.rows())), cfg_(std::move(cfg)), coef_(std::move(coef)),
      intercept_(std::move(intercept)), converged_(converged) {}

void LogRegModel::predict_proba(std::span<const double> x, std::span<double> out) const {
  check_width(x);
  for (std::size_t c = 0; c < coef_.rows(); ++c) {
    double s = intercept_[c];
    const auto wc = coef_.row(c);
    for (std::size_t f = 0; f < wc.size(); ++f) s += wc[f] * x[f];
    out[c] = s;
  }
  softmax_inplace(out);
}

json LogRegModel::to_json() const {
  return model_envelope("LOGREG", cfg_, n_features(), n_classes(),
                        {{"coef", coef_.data()}, {"intercept", intercept_}, {"converged", converged_}});
}

std::unique_ptr<LogRegModel> fit_logreg(const LabeledDataset& train, const LearnerConfig& cfg) {
  check_trainable(train, LearnerKind::LOGREG);
  const json hp = cfg.resolved();
  const auto w = class_sample_weights(train, hp["class_weight"].get<std::string>());
  const auto k = static_cast<std::size_t>(train.n_classes);
  const std::size_t d = train.dim();
  double w_total = 0.0;
  for (double v : w) w_total += v;
  LogRegProblem prob{train.features, train.labels, w, k, hp["l2"].get<double>(), w_total};

  const auto max_epochs = hp["max_epochs"].get<std::size_t>();
  const double tol = hp["tol"].get<double>();
  double step = hp["learning_rate"].get<double>();

  // Full-batch accelerated gradient descent (Nesterov momentum) with
  // backtracking on the step size and a momentum restart whenever the
  // objective goes up.
  std::vector<double> theta(k * d + k, 0.0), y = theta, prev = theta;
  std::vector<double> grad(theta.size()), grad_y(theta.size()), trial(theta.size());
  double loss = prob.evaluate(theta, &grad);
  double loss_y = loss;
  grad_y = grad;
  double momentum_t = 1.0;
  bool converged = false;
  std::size_t epoch = 0;
  auto max_abs = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
  };
  for (; epoch < max_epochs; ++epoch) {
    if (max_abs(grad) < tol) {
      converged = true;
      break;
    }
    double gsq = 0.0;
    for (double g : grad_y) gsq += g * g;
    double trial_loss = loss_y;
    bool accepted = false;
    while (step > 1e-20) {
      for (std::size_t i = 0; i < theta.size(); ++i) trial[i] = y[i] - step * grad_y[i];
      trial_loss = prob.evaluate(trial, nullptr);
      if (trial_loss <= loss_y - 0.5 * step * gsq) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    if (trial_loss > loss) {
      // Restart from the last iterate with plain gradient information.
      momentum_t = 1.0;
      y = theta;
      loss_y = loss;
      grad_y = grad;
      continue;
    }
    prev.swap(theta);
    theta = trial;
    loss = prob.evaluate(theta, &grad);
    require(std::isfinite(loss), ErrorCode::Divergence,
            "logistic regression diverged at epoch " + std::to_string(epoch + 1));
    const double next_t = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum_t * momentum_t));
    const double beta = (momentum_t - 1.0) / next_t;
    momentum_t = next_t;
    for (std::size_t i = 0; i < theta.size(); ++i) y[i] = theta[i] + beta * (theta[i] - prev[i]);
    loss_y = prob.evaluate(y, &grad_y);
  }
  if (!converged) converged = max_abs(grad) < tol;
  if (!converged)
    log_warning("logistic regression stopped after " + std::to_string(epoch) +
                " epochs without reaching gradient tolerance " + std::to_string(tol));

  Matrix coef(k, d);
  std::copy(theta.begin(), theta.begin() + static_cast<std::ptrdiff_t>(k * d), coef.data().begin());
  std::vector<double> intercept(theta.begin() + static_cast<std::ptrdiff_t>(k * d), theta.end());
  return std::make_unique<LogRegModel>(cfg, std::move(coef), std::move(intercept), converged);
}

}  // namespace rbc
