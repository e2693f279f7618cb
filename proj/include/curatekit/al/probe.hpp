#pragma once

// Linear multinomial probe used to score acquisition uncertainty.

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "curatekit/core.hpp"
#include "curatekit/distance.hpp"
#include "curatekit/store.hpp"

namespace curatekit {

struct ProbeOptions {
  std::size_t max_epochs = 500;
  double tolerance = 1e-4;  // stop once the gradient norm drops below this
  double l2 = 1e-3;
  std::uint64_t seed = 1234;
};

struct ProbeModel {
  std::vector<int> classes;  // ascending; column c of the output is classes[c]
  RowMatrixD weights;        // (dim + 1) x classes, last row is the bias
  std::size_t epochs = 0;
  double grad_norm = 0.0;

  std::size_t dim() const noexcept { return weights.rows() > 0 ? static_cast<std::size_t>(weights.rows() - 1) : 0; }

  /// Class probabilities, one row per input row.
  RowMatrixD predict_proba(const Matrix& x) const {
    if (classes.empty()) throw ValidationError("probe is not trained");
    if (!x.empty() && x.cols() != dim()) {
      throw ValidationError("probe: input dim " + std::to_string(x.cols()) + " != " + std::to_string(dim()));
    }
    const auto d = static_cast<Eigen::Index>(dim());
    RowMatrixD logits = as_eigen(x).cast<double>() * weights.topRows(d);
    logits.rowwise() += weights.row(d);
    softmax_rows(logits);
    return logits;
  }

  static void softmax_rows(RowMatrixD& z) {
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      const double m = z.row(i).maxCoeff();
      z.row(i) = (z.row(i).array() - m).exp();
      z.row(i) /= z.row(i).sum();
    }
  }
};

/// Trains on rows of `vectors` aligned with `labeled.ids` (row i has label
/// labeled.labels[i]). Full-batch gradient descent with step 1/L, where L
/// bounds the curvature of the regularized cross-entropy.
inline ProbeModel train_probe(const LabeledPool& labeled, const Matrix& vectors, const ProbeOptions& opt = {}) {
  const std::size_t n = labeled.size();
  if (vectors.rows() != n) throw ValidationError("train_probe: vectors do not align with labels");
  if (n < 2) throw ValidationError("train_probe: need at least 2 labeled samples");
  if (labeled.distinct_labels() < 2) throw ValidationError("train_probe: need at least 2 distinct classes");

  ProbeModel model;
  model.classes = labeled.labels;
  std::sort(model.classes.begin(), model.classes.end());
  model.classes.erase(std::unique(model.classes.begin(), model.classes.end()), model.classes.end());
  std::map<int, Eigen::Index> col;
  for (std::size_t c = 0; c < model.classes.size(); ++c) col[model.classes[c]] = static_cast<Eigen::Index>(c);

  const auto rows = static_cast<Eigen::Index>(n);
  const auto d = static_cast<Eigen::Index>(vectors.cols());
  const auto k = static_cast<Eigen::Index>(model.classes.size());
  RowMatrixD x(rows, d + 1);
  x.leftCols(d) = as_eigen(vectors).cast<double>();
  x.col(d).setOnes();
  RowMatrixD y = RowMatrixD::Zero(rows, k);
  for (std::size_t i = 0; i < n; ++i) y(static_cast<Eigen::Index>(i), col[labeled.labels[i]]) = 1.0;

  // Largest eigenvalue of X^T X / n by power iteration from a fixed start.
  const Eigen::MatrixXd gram = x.transpose() * x / static_cast<double>(n);
  Eigen::VectorXd v = Eigen::VectorXd::Ones(d + 1).normalized();
  double lambda = 0.0;
  for (int it = 0; it < 100; ++it) {
    const Eigen::VectorXd w = gram * v;
    lambda = w.norm();
    if (lambda == 0.0) break;
    v = w / lambda;
  }
  const double step = 1.0 / (1.05 * 0.5 * lambda + opt.l2);

  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> g(0.0, 0.01);
  model.weights.resize(d + 1, k);
  for (Eigen::Index i = 0; i < model.weights.size(); ++i) model.weights.data()[i] = g(rng);

  RowMatrixD grad(d + 1, k);
  for (model.epochs = 0; model.epochs < opt.max_epochs; ++model.epochs) {
    RowMatrixD p = x * model.weights;
    ProbeModel::softmax_rows(p);
    grad.noalias() = x.transpose() * (p - y) / static_cast<double>(n);
    grad.topRows(d) += opt.l2 * model.weights.topRows(d);
    model.grad_norm = grad.norm();
    if (model.grad_norm < opt.tolerance) break;
    model.weights -= step * grad;
  }
  return model;
}

enum class UncertaintyKind { Margin, Entropy };

/// 1 - (p1 - p2) over the two largest probabilities.
inline double margin_score(std::span<const double> p) {
  double a = 0.0, b = 0.0;
  for (double v : p) {
    if (v > a) {
      b = a;
      a = v;
    } else if (v > b) {
      b = v;
    }
  }
  return 1.0 - (a - b);
}

inline double entropy_score(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

/// Higher is more uncertain.
inline std::vector<double> score_uncertainty(const ProbeModel& model, const Matrix& vectors, UncertaintyKind kind) {
  const RowMatrixD p = model.predict_proba(vectors);
  std::vector<double> out(vectors.rows());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::span<const double> row(p.data() + i * static_cast<std::size_t>(p.cols()),
                                      static_cast<std::size_t>(p.cols()));
    out[i] = kind == UncertaintyKind::Margin ? margin_score(row) : entropy_score(row);
  }
  return out;
}

}  // namespace curatekit
