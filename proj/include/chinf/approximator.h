#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "chinf/error.h"
#include "chinf/manifold.h"
#include "chinf/model.h"

namespace chinf {

struct DenseLayer {
  Matrix W;  // out × in
  Vector b;
};

/// Feedforward net n → hidden… → n+1 with sine on hidden layers and a linear
/// output. Outputs are (p, V) after subtracting the raw output at x = 0.
struct ApproximatorParams {
  std::vector<int> widths;  // including input and output
  std::vector<DenseLayer> layers;
  std::string activation = "sin";
  std::uint64_t seed = 0;

  int input_dim() const { return widths.front(); }
  std::size_t parameter_count() const;
  Vector flatten() const;
  void unflatten(const Vector& flat);
  bool all_finite() const;
};

/// Glorot-uniform weights, zero biases.
ApproximatorParams init_params(int n, const std::vector<int>& hidden,
                               std::uint64_t seed);

struct Prediction {
  Vector p;
  double V = 0.0;
};

/// raw(x) − raw(0).
Prediction forward(const ApproximatorParams& theta, const Vector& x);

/// Columns of X in, columns of (p; V) out.
Matrix forward_batch(const ApproximatorParams& theta, const Matrix& X);

/// Unshifted network output, n+1 rows per column.
Matrix raw_output(const ApproximatorParams& theta, const Matrix& X);

/// ∂p/∂x at the origin.
Matrix jacobian_at_zero(const ApproximatorParams& theta);

enum class JacobianNorm { kFrobenius, kSpectral };

struct LossWeights {
  double sigma1 = 1.0;
  double sigma2 = 0.01;
  double sigma3 = 0.01;
  double nu = 2.0;
  JacobianNorm norm = JacobianNorm::kFrobenius;
};

/// Samples as column matrices: X is n×B, Y is (n+1)×B with rows (p; V).
struct Batch {
  Matrix X;
  Matrix Y;

  Eigen::Index size() const { return X.cols(); }
};

Batch to_batch(const Dataset& data);

struct LossTerms {
  double total = 0.0;
  double mean_term = 0.0;      // mean ‖e‖^ν
  double max_term = 0.0;       // max ‖e‖
  double jacobian_term = 0.0;  // ‖∂p/∂x(0) − P‖
  Eigen::Index argmax = 0;
};

LossTerms loss_terms(const ApproximatorParams& theta, const Batch& batch,
                     const LossWeights& w, const Matrix& P);

double loss(const ApproximatorParams& theta, const Batch& batch,
            const LossWeights& w, const Matrix& P);

/// Loss and its gradient with respect to flatten(θ).
double loss_and_gradient(const ApproximatorParams& theta, const Batch& batch,
                         const LossWeights& w, const Matrix& P, Vector* grad);

struct TrainOptions {
  int epochs = 4000;
  double base_lr = 1e-3;
  int decay_every = 1500;  // lr = base_lr·½^⌊j/decay_every⌋
  int start_epoch = 0;     // continues a schedule across refine rounds
  int batch_size = 0;      // ≤ 0 trains on the full batch
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int val_every = 1;
  std::uint64_t seed = 0;
  LossWeights weights;
};

double learning_rate(const TrainOptions& options, int epoch);

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;  // NaN on epochs without validation
};

struct TrainReport {
  std::vector<EpochRecord> history;
  double final_train_loss = 0.0;
  double val_loss = 0.0;
  double max_pointwise_error = 0.0;  // sup over training samples of ‖e‖
  double jacobian_gap = 0.0;         // ‖∂p/∂x(0) − P‖_F
};

/// Raised when a loss turns non-finite; carries the last finite parameters.
class TrainingDiverged : public Error {
 public:
  TrainingDiverged(const std::string& what, ApproximatorParams last_finite)
      : Error(ErrorCode::kTrainingDiverged, what),
        last_finite_(std::move(last_finite)) {}
  const ApproximatorParams& last_finite() const { return last_finite_; }

 private:
  ApproximatorParams last_finite_;
};

struct TrainResult {
  ApproximatorParams theta;
  TrainReport report;
};

/// Adam with bias correction on the three-term loss.
TrainResult train(const ApproximatorParams& theta0, const Dataset& train_set,
                  const Dataset& val_set, const Matrix& P,
                  const TrainOptions& options);

/// Per-sample ‖(p, V) − (p^NN, V^NN)‖.
std::vector<double> pointwise_errors(const ApproximatorParams& theta,
                                     const Dataset& data);

struct RefineOptions {
  double fraction = 0.1;  // share of worst samples that spawn new points
  int per_point = 1;
  double angular_noise = 0.1;  // half-width of the uniform perturbation
  std::uint64_t seed = 0;
};

/// New BVP initial points around the worst-fit samples, projected to the
/// sampling sphere; returns the union of the old and new data.
Dataset adaptive_refine(const ApproximatorParams& theta, const Dataset& data,
                        const ControlSystem& sys, const LinearCertificate& lc,
                        const GenerationConfig& generation,
                        const RefineOptions& options);

/// Initial points adaptive_refine would hand to the BVP solver.
std::vector<Vector> refine_points(const ApproximatorParams& theta,
                                  const Dataset& data, double radius,
                                  const RefineOptions& options);

using Controller = std::function<Vector(const Vector&)>;

/// ũ(x) = −½W⁻¹g(x)ᵀp^NN(x).
Controller nn_controller(const ApproximatorParams& theta,
                         const ControlSystem& sys);

/// Exact linear feedback u = −½W⁻¹g(x)ᵀPx.
Controller linear_controller(const Matrix& P, const ControlSystem& sys);

struct CheckpointMeta {
  std::uint64_t seed = 0;
  int epochs = 0;
  double final_train_loss = 0.0;
  double val_loss = 0.0;
  double max_pointwise_error = 0.0;
  double jacobian_gap = 0.0;
};

void write_checkpoint(const ApproximatorParams& theta, const CheckpointMeta& meta,
                      std::ostream& out);
ApproximatorParams read_checkpoint(std::istream& in,
                                   CheckpointMeta* meta = nullptr);
void write_checkpoint(const ApproximatorParams& theta, const CheckpointMeta& meta,
                      const std::string& path);
ApproximatorParams read_checkpoint(const std::string& path,
                                   CheckpointMeta* meta = nullptr);

/// Columns epoch, lr, train_loss, val_loss.
void write_loss_csv(const TrainReport& report, std::ostream& out);

}  // namespace chinf
