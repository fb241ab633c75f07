#include "chinf/approximator.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "json.hpp"

namespace chinf {
namespace {

using json = nlohmann::json;

int num_layers(const ApproximatorParams& theta) {
  return static_cast<int>(theta.layers.size());
}

// Activations of one batch pass. A[0] is the input; A[k] = sin(Z[k-1]) for
// hidden layers; `out` is the raw linear output.
struct Tape {
  std::vector<Matrix> Z;
  std::vector<Matrix> A;
  Matrix out;
};

Tape run(const ApproximatorParams& theta, const Matrix& X) {
  const int L = num_layers(theta);
  Tape tape;
  tape.A.push_back(X);
  for (int k = 0; k + 1 < L; ++k) {
    const DenseLayer& layer = theta.layers[k];
    Matrix z = layer.W * tape.A.back();
    z.colwise() += layer.b;
    tape.A.push_back(z.array().sin().matrix());
    tape.Z.push_back(std::move(z));
  }
  tape.out = theta.layers.back().W * tape.A.back();
  tape.out.colwise() += theta.layers.back().b;
  return tape;
}

void flatten_into(const std::vector<DenseLayer>& layers, Vector* flat) {
  Eigen::Index offset = 0;
  for (const DenseLayer& l : layers) {
    flat->segment(offset, l.W.size()) =
        Eigen::Map<const Vector>(l.W.data(), l.W.size());
    offset += l.W.size();
    flat->segment(offset, l.b.size()) = l.b;
    offset += l.b.size();
  }
}

std::vector<DenseLayer> zeros_like(const ApproximatorParams& theta) {
  std::vector<DenseLayer> g;
  for (const DenseLayer& l : theta.layers) {
    g.push_back({Matrix::Zero(l.W.rows(), l.W.cols()), Vector::Zero(l.b.size())});
  }
  return g;
}

// Jacobian chain at the origin: J[k] = diag(cos z_k(0)) W_k J[k-1], J[0] = I,
// given the hidden pre-activations z_k(0).
std::vector<Matrix> jacobian_chain(const ApproximatorParams& theta,
                                   const std::vector<Vector>& z0) {
  const int L = num_layers(theta);
  std::vector<Matrix> J;
  J.push_back(Matrix::Identity(theta.input_dim(), theta.input_dim()));
  for (int k = 0; k + 1 < L; ++k) {
    J.push_back(z0[k].array().cos().matrix().asDiagonal() *
                (theta.layers[k].W * J.back()));
  }
  return J;
}

double norm_power(double r, double nu) { return nu == 2.0 ? r * r : std::pow(r, nu); }

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::size_t ApproximatorParams::parameter_count() const {
  std::size_t count = 0;
  for (const DenseLayer& l : layers) count += l.W.size() + l.b.size();
  return count;
}

Vector ApproximatorParams::flatten() const {
  Vector flat(parameter_count());
  flatten_into(layers, &flat);
  return flat;
}

void ApproximatorParams::unflatten(const Vector& flat) {
  if (static_cast<std::size_t>(flat.size()) != parameter_count()) {
    throw Error(ErrorCode::kInvalidArgument, "parameter vector has wrong size");
  }
  Eigen::Index offset = 0;
  for (DenseLayer& l : layers) {
    l.W = Eigen::Map<const Matrix>(flat.data() + offset, l.W.rows(), l.W.cols());
    offset += l.W.size();
    l.b = flat.segment(offset, l.b.size());
    offset += l.b.size();
  }
}

bool ApproximatorParams::all_finite() const {
  for (const DenseLayer& l : layers) {
    if (!l.W.allFinite() || !l.b.allFinite()) return false;
  }
  return true;
}

ApproximatorParams init_params(int n, const std::vector<int>& hidden,
                               std::uint64_t seed) {
  if (n <= 0) throw Error(ErrorCode::kInvalidArgument, "input dimension must be positive");
  ApproximatorParams theta;
  theta.seed = seed;
  theta.widths.push_back(n);
  for (int w : hidden) {
    if (w <= 0) throw Error(ErrorCode::kInvalidArgument, "layer width must be positive");
    theta.widths.push_back(w);
  }
  theta.widths.push_back(n + 1);
  std::mt19937_64 rng(seed);
  for (std::size_t k = 0; k + 1 < theta.widths.size(); ++k) {
    const int fan_in = theta.widths[k];
    const int fan_out = theta.widths[k + 1];
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> uni(-limit, limit);
    DenseLayer layer{Matrix(fan_out, fan_in), Vector::Zero(fan_out)};
    for (Eigen::Index j = 0; j < layer.W.cols(); ++j)
      for (Eigen::Index i = 0; i < layer.W.rows(); ++i) layer.W(i, j) = uni(rng);
    theta.layers.push_back(std::move(layer));
  }
  return theta;
}

Matrix raw_output(const ApproximatorParams& theta, const Matrix& X) {
  return run(theta, X).out;
}

Matrix forward_batch(const ApproximatorParams& theta, const Matrix& X) {
  Matrix Xa(X.rows(), X.cols() + 1);
  Xa << X, Vector::Zero(X.rows());
  const Matrix out = run(theta, Xa).out;
  return out.leftCols(X.cols()).colwise() - out.col(X.cols());
}

Prediction forward(const ApproximatorParams& theta, const Vector& x) {
  const Matrix y = forward_batch(theta, x);
  const int n = theta.input_dim();
  return {y.col(0).head(n), y(n, 0)};
}

Matrix jacobian_at_zero(const ApproximatorParams& theta) {
  const Tape tape = run(theta, Vector::Zero(theta.input_dim()));
  std::vector<Vector> z0;
  for (const Matrix& z : tape.Z) z0.push_back(z.col(0));
  const std::vector<Matrix> J = jacobian_chain(theta, z0);
  const int n = theta.input_dim();
  return theta.layers.back().W.topRows(n) * J.back();
}

Batch to_batch(const Dataset& data) {
  Batch batch;
  if (data.samples.empty()) return batch;
  const Eigen::Index n = data.samples.front().x.size();
  const Eigen::Index B = static_cast<Eigen::Index>(data.samples.size());
  batch.X.resize(n, B);
  batch.Y.resize(n + 1, B);
  for (Eigen::Index i = 0; i < B; ++i) {
    const Sample& s = data.samples[i];
    batch.X.col(i) = s.x;
    batch.Y.col(i) << s.p, s.V;
  }
  return batch;
}

double loss_and_gradient(const ApproximatorParams& theta, const Batch& batch,
                         const LossWeights& w, const Matrix& P, Vector* grad) {
  const Eigen::Index B = batch.size();
  const int n = theta.input_dim();
  if (B == 0) throw Error(ErrorCode::kInvalidArgument, "loss needs a nonempty batch");
  if (batch.X.rows() != n || batch.Y.rows() != n + 1) {
    throw Error(ErrorCode::kInvalidArgument, "batch shape does not match network");
  }
  if (w.sigma1 < 0 || w.sigma2 < 0 || w.sigma3 < 0 || !(w.nu >= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "invalid loss weights");
  }
  const int L = num_layers(theta);

  // One pass over the batch plus a zero column for the shift.
  Matrix Xa(n, B + 1);
  Xa << batch.X, Vector::Zero(n);
  const Tape tape = run(theta, Xa);
  const Matrix E =
      batch.Y - (tape.out.leftCols(B).colwise() - tape.out.col(B));
  const Vector norms = E.colwise().norm().transpose();

  double mean_term = 0.0;
  for (Eigen::Index i = 0; i < B; ++i) mean_term += norm_power(norms(i), w.nu);
  mean_term /= static_cast<double>(B);
  Eigen::Index argmax = 0;
  const double max_term = norms.maxCoeff(&argmax);

  std::vector<Vector> z0;
  for (const Matrix& z : tape.Z) z0.push_back(z.col(B));
  const std::vector<Matrix> J = jacobian_chain(theta, z0);
  const Matrix gap = theta.layers.back().W.topRows(n) * J.back() - P;
  double jac_term = 0.0;
  Matrix dgap = Matrix::Zero(n, n);
  if (w.norm == JacobianNorm::kFrobenius) {
    jac_term = gap.norm();
    if (jac_term > 0.0) dgap = gap / jac_term;
  } else {
    Eigen::JacobiSVD<Matrix> svd(gap, Eigen::ComputeFullU | Eigen::ComputeFullV);
    jac_term = svd.singularValues()(0);
    if (jac_term > 0.0) {
      dgap = svd.matrixU().col(0) * svd.matrixV().col(0).transpose();
    }
  }
  const double total =
      w.sigma1 * mean_term + w.sigma2 * max_term + w.sigma3 * jac_term;
  if (grad == nullptr) return total;

  // d total / d raw output, per column; the zero column collects the shift.
  Matrix G = Matrix::Zero(n + 1, B + 1);
  for (Eigen::Index i = 0; i < B; ++i) {
    const double r = norms(i);
    if (w.nu == 2.0) {
      G.col(i) = -2.0 * w.sigma1 / B * E.col(i);
    } else if (r > 0.0) {
      G.col(i) = -w.sigma1 / B * w.nu * std::pow(r, w.nu - 2.0) * E.col(i);
    }
  }
  if (max_term > 0.0) G.col(argmax) -= w.sigma2 / max_term * E.col(argmax);
  G.col(B) = -G.leftCols(B).rowwise().sum();

  std::vector<DenseLayer> g = zeros_like(theta);
  Matrix dA = theta.layers.back().W.transpose() * G;
  g.back().W = G * tape.A.back().transpose();
  g.back().b = G.rowwise().sum();
  for (int k = L - 2; k >= 0; --k) {
    const Matrix dZ = dA.cwiseProduct(tape.Z[k].array().cos().matrix());
    g[k].W = dZ * tape.A[k].transpose();
    g[k].b = dZ.rowwise().sum();
    if (k > 0) dA = theta.layers[k].W.transpose() * dZ;
  }

  // Jacobian term through the chain at the origin.
  if (w.sigma3 > 0.0 && jac_term > 0.0) {
    const Matrix D = w.sigma3 * dgap;
    g.back().W.topRows(n) += D * J.back().transpose();
    Matrix dJ = theta.layers.back().W.topRows(n).transpose() * D;
    Vector da = Vector::Zero(J.back().rows());  // d/d a_k(0), no output term
    for (int k = L - 2; k >= 0; --k) {
      const Matrix& W = theta.layers[k].W;
      const Vector& z = z0[k];
      const Vector c = z.array().cos();
      const Vector s = z.array().sin();
      const Matrix M = W * J[k];
      const Vector dc = dJ.cwiseProduct(M).rowwise().sum();
      const Matrix dM = c.asDiagonal() * dJ;
      g[k].W += dM * J[k].transpose();
      const Vector dz = -s.cwiseProduct(dc) + c.cwiseProduct(da);
      const Vector a_prev = k > 0 ? Vector(z0[k - 1].array().sin())
                                  : Vector(Vector::Zero(n));
      g[k].W += dz * a_prev.transpose();
      g[k].b += dz;
      dJ = W.transpose() * dM;
      da = W.transpose() * dz;
    }
  }

  grad->resize(theta.parameter_count());
  flatten_into(g, grad);
  return total;
}

LossTerms loss_terms(const ApproximatorParams& theta, const Batch& batch,
                     const LossWeights& w, const Matrix& P) {
  const Eigen::Index B = batch.size();
  if (B == 0) throw Error(ErrorCode::kInvalidArgument, "loss needs a nonempty batch");
  const Matrix pred = forward_batch(theta, batch.X);
  const Vector norms = (batch.Y - pred).colwise().norm().transpose();
  LossTerms t;
  for (Eigen::Index i = 0; i < B; ++i) t.mean_term += norm_power(norms(i), w.nu);
  t.mean_term /= static_cast<double>(B);
  t.max_term = norms.maxCoeff(&t.argmax);
  const Matrix gap = jacobian_at_zero(theta) - P;
  if (w.norm == JacobianNorm::kFrobenius) {
    t.jacobian_term = gap.norm();
  } else {
    t.jacobian_term =
        gap.size() > 0 ? Eigen::JacobiSVD<Matrix>(gap).singularValues()(0) : 0.0;
  }
  t.total = w.sigma1 * t.mean_term + w.sigma2 * t.max_term +
            w.sigma3 * t.jacobian_term;
  return t;
}

double loss(const ApproximatorParams& theta, const Batch& batch,
            const LossWeights& w, const Matrix& P) {
  return loss_and_gradient(theta, batch, w, P, nullptr);
}

double learning_rate(const TrainOptions& options, int epoch) {
  const int halvings = options.decay_every > 0 ? epoch / options.decay_every : 0;
  return options.base_lr * std::pow(0.5, halvings);
}

std::vector<double> pointwise_errors(const ApproximatorParams& theta,
                                     const Dataset& data) {
  if (data.empty()) return {};
  const Batch batch = to_batch(data);
  const Vector norms =
      (batch.Y - forward_batch(theta, batch.X)).colwise().norm().transpose();
  return std::vector<double>(norms.data(), norms.data() + norms.size());
}

TrainResult train(const ApproximatorParams& theta0, const Dataset& train_set,
                  const Dataset& val_set, const Matrix& P,
                  const TrainOptions& options) {
  if (train_set.empty() || val_set.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "training needs nonempty datasets");
  }
  if (options.epochs < 0) {
    throw Error(ErrorCode::kInvalidArgument, "epoch count must be nonnegative");
  }
  const Batch full = to_batch(train_set);
  const Batch val = to_batch(val_set);
  TrainResult result{theta0, {}};
  ApproximatorParams& theta = result.theta;

  Vector flat = theta.flatten();
  Vector m = Vector::Zero(flat.size());
  Vector v = Vector::Zero(flat.size());
  Vector grad;
  long step = 0;
  std::mt19937_64 rng(options.seed);
  std::vector<Eigen::Index> order(full.size());
  std::iota(order.begin(), order.end(), 0);

  auto adam_step = [&](double lr) {
    ++step;
    m = options.beta1 * m + (1.0 - options.beta1) * grad;
    v = options.beta2 * v + (1.0 - options.beta2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(options.beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(options.beta2, static_cast<double>(step));
    flat.array() -= lr * (m.array() / c1) /
                    ((v.array() / c2).sqrt() + options.adam_eps);
    theta.unflatten(flat);
  };

  ApproximatorParams last_finite = theta;
  for (int e = 0; e < options.epochs; ++e) {
    const int epoch = options.start_epoch + e;
    const double lr = learning_rate(options, epoch);
    EpochRecord rec{epoch, lr, 0.0, std::numeric_limits<double>::quiet_NaN()};
    if (options.batch_size <= 0 || options.batch_size >= full.size()) {
      rec.train_loss = loss_and_gradient(theta, full, options.weights, P, &grad);
      if (!std::isfinite(rec.train_loss) || !grad.allFinite()) {
        throw TrainingDiverged("non-finite loss at epoch " + std::to_string(epoch),
                               last_finite);
      }
      last_finite = theta;
      adam_step(lr);
    } else {
      std::shuffle(order.begin(), order.end(), rng);
      double acc = 0.0;
      int steps = 0;
      for (Eigen::Index lo = 0; lo < full.size(); lo += options.batch_size) {
        const Eigen::Index hi =
            std::min<Eigen::Index>(lo + options.batch_size, full.size());
        Batch mb;
        mb.X.resize(full.X.rows(), hi - lo);
        mb.Y.resize(full.Y.rows(), hi - lo);
        for (Eigen::Index i = lo; i < hi; ++i) {
          mb.X.col(i - lo) = full.X.col(order[i]);
          mb.Y.col(i - lo) = full.Y.col(order[i]);
        }
        const double l = loss_and_gradient(theta, mb, options.weights, P, &grad);
        if (!std::isfinite(l) || !grad.allFinite()) {
          throw TrainingDiverged(
              "non-finite loss at epoch " + std::to_string(epoch), last_finite);
        }
        last_finite = theta;
        acc += l;
        ++steps;
        adam_step(lr);
      }
      rec.train_loss = acc / steps;
    }
    if (!theta.all_finite()) {
      throw TrainingDiverged("non-finite parameters at epoch " +
                                 std::to_string(epoch),
                             last_finite);
    }
    if (options.val_every > 0 &&
        (e % options.val_every == 0 || e + 1 == options.epochs)) {
      rec.val_loss = loss(theta, val, options.weights, P);
    }
    result.report.history.push_back(rec);
  }

  TrainReport& rep = result.report;
  rep.final_train_loss = loss(theta, full, options.weights, P);
  rep.val_loss = loss(theta, val, options.weights, P);
  if (!std::isfinite(rep.final_train_loss)) {
    throw TrainingDiverged("non-finite final loss", last_finite);
  }
  const std::vector<double> errs = pointwise_errors(theta, train_set);
  rep.max_pointwise_error = *std::max_element(errs.begin(), errs.end());
  rep.jacobian_gap = (jacobian_at_zero(theta) - P).norm();
  return result;
}

std::vector<Vector> refine_points(const ApproximatorParams& theta,
                                  const Dataset& data, double radius,
                                  const RefineOptions& options) {
  if (options.fraction < 0.0 || options.fraction > 1.0 || options.per_point < 0) {
    throw Error(ErrorCode::kInvalidArgument, "invalid refinement options");
  }
  const std::vector<double> errs = pointwise_errors(theta, data);
  std::vector<std::size_t> order(errs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return errs[a] > errs[b]; });
  const std::size_t take =
      static_cast<std::size_t>(std::floor(options.fraction * errs.size()));
  std::vector<Vector> points;
  for (std::size_t r = 0; r < take; ++r) {
    const std::size_t i = order[r];
    const Vector& x = data.samples[i].x;
    const double nx = x.norm();
    if (!(nx > 0.0)) continue;
    std::seed_seq seq{static_cast<std::uint32_t>(options.seed),
                      static_cast<std::uint32_t>(options.seed >> 32),
                      static_cast<std::uint32_t>(i), 2u};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> uni(-options.angular_noise,
                                               options.angular_noise);
    for (int j = 0; j < options.per_point; ++j) {
      Vector dir = x / nx;
      for (Eigen::Index c = 0; c < dir.size(); ++c) dir(c) += uni(rng);
      if (dir.norm() == 0.0) continue;
      points.push_back(radius * dir / dir.norm());
    }
  }
  return points;
}

Dataset adaptive_refine(const ApproximatorParams& theta, const Dataset& data,
                        const ControlSystem& sys, const LinearCertificate& lc,
                        const GenerationConfig& generation,
                        const RefineOptions& options) {
  const std::vector<Vector> points =
      refine_points(theta, data, generation.radius, options);
  Dataset out = data;
  if (points.empty()) return out;
  int next_id = 0;
  for (const Sample& s : data.samples) next_id = std::max(next_id, s.traj + 1);
  GenerationConfig cfg = generation;
  cfg.min_acceptance = 0.0;
  cfg.keep_trajectories = false;
  const GenerationResult res = generate_from_points(sys, lc, points, cfg, next_id);
  if (res.dataset.meta.accepted == 0) {
    throw Error(ErrorCode::kRefineFailed,
                "all " + std::to_string(points.size()) +
                    " refinement trajectories were rejected");
  }
  out.samples.insert(out.samples.end(), res.dataset.samples.begin(),
                     res.dataset.samples.end());
  out.meta.count += static_cast<int>(points.size());
  out.meta.accepted += res.dataset.meta.accepted;
  return out;
}

Controller nn_controller(const ApproximatorParams& theta,
                         const ControlSystem& sys) {
  return [theta, sys](const Vector& x) -> Vector {
    const Prediction pr = forward(theta, x);
    return -0.5 * sys.W_inverse() * (sys.input_map(x).transpose() * pr.p);
  };
}

Controller linear_controller(const Matrix& P, const ControlSystem& sys) {
  return [P, sys](const Vector& x) -> Vector {
    return -0.5 * sys.W_inverse() * (sys.input_map(x).transpose() * (P * x));
  };
}

void write_checkpoint(const ApproximatorParams& theta, const CheckpointMeta& meta,
                      std::ostream& out) {
  json layers = json::array();
  for (const DenseLayer& l : theta.layers) {
    std::vector<double> w;
    w.reserve(l.W.size());
    for (Eigen::Index i = 0; i < l.W.rows(); ++i)
      for (Eigen::Index j = 0; j < l.W.cols(); ++j) w.push_back(l.W(i, j));
    layers.push_back({{"shape", {l.W.rows(), l.W.cols()}},
                      {"W", w},
                      {"b", std::vector<double>(l.b.data(), l.b.data() + l.b.size())}});
  }
  json j = {{"activation", theta.activation},
            {"widths", theta.widths},
            {"layers", layers},
            {"meta",
             {{"seed", meta.seed},
              {"init_seed", theta.seed},
              {"epochs", meta.epochs},
              {"final_train_loss", meta.final_train_loss},
              {"val_loss", meta.val_loss},
              {"max_pointwise_error", meta.max_pointwise_error},
              {"jacobian_gap", meta.jacobian_gap}}}};
  out << j.dump(1) << '\n';
  if (!out) throw Error(ErrorCode::kIoError, "failed writing checkpoint");
}

ApproximatorParams read_checkpoint(std::istream& in, CheckpointMeta* meta) {
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kIoError, std::string("checkpoint: ") + e.what());
  }
  auto need = [&](const json& obj, const char* field) -> const json& {
    if (!obj.is_object() || !obj.contains(field)) {
      throw Error(ErrorCode::kIoError,
                  std::string("checkpoint: missing field '") + field + "'");
    }
    return obj[field];
  };
  ApproximatorParams theta;
  try {
    theta.activation = need(j, "activation").get<std::string>();
    if (theta.activation != "sin") {
      throw Error(ErrorCode::kIoError,
                  "checkpoint: unsupported activation '" + theta.activation + "'");
    }
    theta.widths = need(j, "widths").get<std::vector<int>>();
    const json& layers = need(j, "layers");
    if (!layers.is_array() || layers.size() + 1 != theta.widths.size()) {
      throw Error(ErrorCode::kIoError, "checkpoint: field 'layers' has wrong length");
    }
    for (std::size_t k = 0; k < layers.size(); ++k) {
      const auto shape = need(layers[k], "shape").get<std::vector<Eigen::Index>>();
      const auto w = need(layers[k], "W").get<std::vector<double>>();
      const auto b = need(layers[k], "b").get<std::vector<double>>();
      if (shape.size() != 2 || shape[0] != theta.widths[k + 1] ||
          shape[1] != theta.widths[k] ||
          w.size() != static_cast<std::size_t>(shape[0] * shape[1]) ||
          b.size() != static_cast<std::size_t>(shape[0])) {
        throw Error(ErrorCode::kIoError, "checkpoint: layer " + std::to_string(k) +
                                             " field 'shape' disagrees with data");
      }
      DenseLayer layer{Matrix(shape[0], shape[1]),
                       Eigen::Map<const Vector>(b.data(), shape[0])};
      for (Eigen::Index i = 0; i < shape[0]; ++i)
        for (Eigen::Index c = 0; c < shape[1]; ++c)
          layer.W(i, c) = w[i * shape[1] + c];
      theta.layers.push_back(std::move(layer));
    }
    if (theta.widths.size() < 2 || theta.widths.back() != theta.widths.front() + 1) {
      throw Error(ErrorCode::kIoError, "checkpoint: field 'widths' must end in n+1");
    }
    const json& m = need(j, "meta");
    theta.seed = m.value("init_seed", std::uint64_t{0});
    if (meta != nullptr) {
      meta->seed = m.value("seed", std::uint64_t{0});
      meta->epochs = m.value("epochs", 0);
      meta->final_train_loss = m.value("final_train_loss", 0.0);
      meta->val_loss = m.value("val_loss", 0.0);
      meta->max_pointwise_error = m.value("max_pointwise_error", 0.0);
      meta->jacobian_gap = m.value("jacobian_gap", 0.0);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kIoError, std::string("checkpoint: ") + e.what());
  }
  if (!theta.all_finite()) {
    throw Error(ErrorCode::kIoError, "checkpoint: non-finite parameters");
  }
  return theta;
}

void write_checkpoint(const ApproximatorParams& theta, const CheckpointMeta& meta,
                      const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot open " + path);
  write_checkpoint(theta, meta, out);
}

ApproximatorParams read_checkpoint(const std::string& path, CheckpointMeta* meta) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path);
  return read_checkpoint(in, meta);
}

void write_loss_csv(const TrainReport& report, std::ostream& out) {
  out << "epoch,lr,train_loss,val_loss\n";
  for (const EpochRecord& r : report.history) {
    out << r.epoch << ',' << format_double(r.lr) << ','
        << format_double(r.train_loss) << ',';
    if (std::isfinite(r.val_loss)) out << format_double(r.val_loss);
    out << '\n';
  }
}

}  // namespace chinf
