#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lesionbench/datamodel.hpp"
#include "lesionbench/features.hpp"
#include "lesionbench/folds.hpp"
#include "lesionbench/targets.hpp"

namespace lesionbench {

// Trainable tensors of the fusion head, in serialization order. Also used as
// the gradient container.
struct HeadParameters {
  Eigen::MatrixXd w1;  // H1 x 14
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;  // H2 x H1
  Eigen::VectorXd b2;
  Eigen::MatrixXd w3;  // C x (H2 + D)
  Eigen::VectorXd b3;

  static HeadParameters zeros(std::size_t h1, std::size_t h2, std::size_t cnn_dim,
                              std::size_t classes);
  std::size_t parameter_count() const noexcept;

  // Visits every scalar in serialization order (matrices row-major).
  template <typename Fn>
  void for_each(Fn&& fn) {
    visit_matrix(w1, fn);
    visit_vector(b1, fn);
    visit_matrix(w2, fn);
    visit_vector(b2, fn);
    visit_matrix(w3, fn);
    visit_vector(b3, fn);
  }

  bool operator==(const HeadParameters& o) const;

 private:
  template <typename Fn>
  static void visit_matrix(Eigen::MatrixXd& m, Fn& fn) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) fn(m(r, c));
  }
  template <typename Fn>
  static void visit_vector(Eigen::VectorXd& v, Fn& fn) {
    for (Eigen::Index i = 0; i < v.size(); ++i) fn(v(i));
  }
};

// Metadata branch (14 -> H1 -> H2, ReLU) whose output is concatenated with a
// D-dimensional external CNN feature block and fed to a linear classifier
// over the scheme's classes.
struct FusionHeadModel {
  TargetScheme scheme = TargetScheme::NineClass;
  HeadParameters params;

  static FusionHeadModel zeros(TargetScheme scheme, std::size_t h1, std::size_t h2,
                               std::size_t cnn_dim);
  // Weights ~ N(0, 2 / fan_in), biases zero.
  static FusionHeadModel he_init(TargetScheme scheme, std::size_t h1, std::size_t h2,
                                 std::size_t cnn_dim, std::uint64_t seed);

  std::size_t hidden1() const noexcept { return static_cast<std::size_t>(params.w1.rows()); }
  std::size_t hidden2() const noexcept { return static_cast<std::size_t>(params.w2.rows()); }
  std::size_t cnn_dim() const noexcept {
    return static_cast<std::size_t>(params.w3.cols()) - hidden2();
  }
  std::size_t classes() const noexcept { return static_cast<std::size_t>(params.w3.rows()); }

  // Throws ShapeError on inconsistent shapes and DomainError on non-finite values.
  void validate() const;

  bool operator==(const FusionHeadModel& o) const {
    return scheme == o.scheme && params == o.params;
  }
};

struct ForwardResult {
  Eigen::VectorXd logits;
  Eigen::VectorXd probs;
};

Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

ForwardResult forward(const FusionHeadModel& m, std::span<const double> meta,
                      std::span<const double> cnn = {});

// Class probabilities for every row of `meta` (n x 14) and `cnn` (n x D).
Eigen::MatrixXd predict_batch(const FusionHeadModel& m, const Eigen::MatrixXd& meta,
                              const Eigen::MatrixXd& cnn);

inline constexpr double kProbFloor = 1e-12;

// -ln(max(probs[target], 1e-12)).
double cross_entropy(std::span<const double> probs, std::size_t target);

// Row i of `meta` / `cnn` is one sample.
struct Batch {
  Eigen::MatrixXd meta;  // n x 14
  Eigen::MatrixXd cnn;   // n x D
  std::vector<std::size_t> targets;

  std::size_t size() const noexcept { return targets.size(); }
};

struct LossGradient {
  double loss = 0.0;
  HeadParameters grad;
};

// Mean batch cross-entropy and its exact gradient.
LossGradient backward(const FusionHeadModel& m, const Batch& batch);

// Epoch 0 is the warm-up at one tenth of lr_peak, followed by one cosine
// cycle from lr_peak down to 0 over the remaining epochs. The tenth is taken
// on the shortest decimal form of lr_peak, so 3e-4 warms up at exactly 3e-5.
double lr_schedule(std::size_t epoch, std::size_t total_epochs, double lr_peak);

struct TrainConfig {
  std::size_t epochs = 15;
  std::size_t batch_size = 64;
  double lr_peak = 3e-4;
  std::uint64_t seed = 42;
  std::size_t hidden1 = 512;
  std::size_t hidden2 = 128;
  TargetScheme scheme = TargetScheme::NineClass;
  // Folds trained concurrently; results do not depend on it.
  std::size_t threads = 1;

  void validate() const;
};

struct AdamState {
  HeadParameters m;
  HeadParameters v;
  std::uint64_t step = 0;
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEpsilon = 1e-8;

void adam_step(HeadParameters& params, const HeadParameters& grad, AdamState& state, double lr);

struct EpochRecord {
  std::size_t fold = 0;
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  std::optional<double> valid_auc;
};

struct TrainResult {
  std::vector<FusionHeadModel> models;
  PredictionSet oof;
  std::vector<EpochRecord> history;
};

// Output index of record_class(r, scheme).
std::size_t training_target(const SampleRecord& r, TargetScheme scheme);

// One model per fold trained on the other folds; out-of-fold MEL scores come
// back in dataset order. `cnn` may be null for a metadata-only head.
TrainResult train(const Dataset& d, const FeatureTable& features, const FeatureTable* cnn,
                  const FoldAssignment& folds, const TrainConfig& cfg);

std::string write_history_csv(std::span<const EpochRecord> history);

// Versioned little-endian weight file, magic "LSNB".
inline constexpr char kModelMagic[4] = {'L', 'S', 'N', 'B'};
inline constexpr std::uint16_t kModelVersion = 1;

std::vector<std::uint8_t> save_model(const FusionHeadModel& m);
FusionHeadModel load_model(std::span<const std::uint8_t> bytes);

}  // namespace lesionbench
