#include "lesionbench/fusion.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <numeric>

#include "lesionbench/errors.hpp"
#include "lesionbench/metrics.hpp"
#include "lesionbench/parallel.hpp"
#include "lesionbench/random.hpp"

namespace lesionbench {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Activations {
  MatrixXd z1, a1, z2, a2, concat, logits, probs;
};

MatrixXd relu(const MatrixXd& z) { return z.cwiseMax(0.0); }

MatrixXd row_softmax(const MatrixXd& logits) {
  MatrixXd p(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    p.row(i) = (logits.row(i).array() - mx).exp().matrix();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

void check_inputs(const FusionHeadModel& m, const MatrixXd& meta, const MatrixXd& cnn) {
  if (static_cast<std::size_t>(meta.cols()) != kMetaFeatures)
    throw ShapeError("metadata input has " + std::to_string(meta.cols()) + " columns, expected " +
                     std::to_string(kMetaFeatures));
  const bool cnn_ok = static_cast<std::size_t>(cnn.cols()) == m.cnn_dim() &&
                      (cnn.rows() == meta.rows() || m.cnn_dim() == 0);
  if (!cnn_ok)
    throw ShapeError("CNN feature block is " + std::to_string(cnn.rows()) + "x" +
                     std::to_string(cnn.cols()) + ", model expects D=" +
                     std::to_string(m.cnn_dim()));
}

// Shared by single-sample forward, batch prediction and backprop.
Activations run_forward(const FusionHeadModel& m, const MatrixXd& meta, const MatrixXd& cnn) {
  check_inputs(m, meta, cnn);
  const auto& p = m.params;
  Activations a;
  a.z1 = (meta * p.w1.transpose()).rowwise() + p.b1.transpose();
  a.a1 = relu(a.z1);
  a.z2 = (a.a1 * p.w2.transpose()).rowwise() + p.b2.transpose();
  a.a2 = relu(a.z2);
  const Eigen::Index h2 = a.a2.cols();
  const Eigen::Index d = static_cast<Eigen::Index>(m.cnn_dim());
  a.concat.resize(meta.rows(), h2 + d);
  a.concat.leftCols(h2) = a.a2;
  if (d > 0) a.concat.rightCols(d) = cnn;
  a.logits = (a.concat * p.w3.transpose()).rowwise() + p.b3.transpose();
  a.probs = row_softmax(a.logits);
  return a;
}

MatrixXd gather_rows(const MatrixXd& src, std::span<const std::size_t> rows) {
  MatrixXd out(static_cast<Eigen::Index>(rows.size()), src.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = src.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

template <typename Fn>
void zip_params(HeadParameters& a, const HeadParameters& b, Fn&& fn) {
  fn(a.w1.array(), b.w1.array());
  fn(a.b1.array(), b.b1.array());
  fn(a.w2.array(), b.w2.array());
  fn(a.b2.array(), b.b2.array());
  fn(a.w3.array(), b.w3.array());
  fn(a.b3.array(), b.b3.array());
}

// One tenth of a decimal learning rate, computed on its shortest decimal
// spelling so that configured values such as 3e-4 map to exactly 3e-5.
double decimal_tenth(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x, std::chars_format::scientific);
  std::string text(buf, res.ptr);
  const auto e = text.find('e');
  const int exponent = std::stoi(text.substr(e + 1));
  text = text.substr(0, e) + "e" + std::to_string(exponent - 1);
  double out = 0.0;
  std::from_chars(text.data(), text.data() + text.size(), out);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Parameters

HeadParameters HeadParameters::zeros(std::size_t h1, std::size_t h2, std::size_t cnn_dim,
                                     std::size_t classes) {
  const auto i = [](std::size_t v) { return static_cast<Eigen::Index>(v); };
  HeadParameters p;
  p.w1 = MatrixXd::Zero(i(h1), i(kMetaFeatures));
  p.b1 = VectorXd::Zero(i(h1));
  p.w2 = MatrixXd::Zero(i(h2), i(h1));
  p.b2 = VectorXd::Zero(i(h2));
  p.w3 = MatrixXd::Zero(i(classes), i(h2 + cnn_dim));
  p.b3 = VectorXd::Zero(i(classes));
  return p;
}

std::size_t HeadParameters::parameter_count() const noexcept {
  return static_cast<std::size_t>(w1.size() + b1.size() + w2.size() + b2.size() + w3.size() +
                                  b3.size());
}

bool HeadParameters::operator==(const HeadParameters& o) const {
  const auto same = [](const auto& x, const auto& y) {
    return x.rows() == y.rows() && x.cols() == y.cols() && x == y;
  };
  return same(w1, o.w1) && same(b1, o.b1) && same(w2, o.w2) && same(b2, o.b2) &&
         same(w3, o.w3) && same(b3, o.b3);
}

FusionHeadModel FusionHeadModel::zeros(TargetScheme scheme, std::size_t h1, std::size_t h2,
                                       std::size_t cnn_dim) {
  if (h1 == 0 || h2 == 0) throw DomainError("hidden widths must be positive");
  return FusionHeadModel{scheme, HeadParameters::zeros(h1, h2, cnn_dim, class_count(scheme))};
}

FusionHeadModel FusionHeadModel::he_init(TargetScheme scheme, std::size_t h1, std::size_t h2,
                                         std::size_t cnn_dim, std::uint64_t seed) {
  auto m = zeros(scheme, h1, h2, cnn_dim);
  Rng rng(seed);
  const auto fill = [&](MatrixXd& w) {
    const double scale = std::sqrt(2.0 / static_cast<double>(w.cols()));
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = scale * rng.normal();
  };
  fill(m.params.w1);
  fill(m.params.w2);
  fill(m.params.w3);
  return m;
}

void FusionHeadModel::validate() const {
  const auto& p = params;
  const bool ok = p.w1.cols() == static_cast<Eigen::Index>(kMetaFeatures) && p.w1.rows() > 0 &&
                  p.b1.size() == p.w1.rows() && p.w2.cols() == p.w1.rows() && p.w2.rows() > 0 &&
                  p.b2.size() == p.w2.rows() && p.w3.cols() >= p.w2.rows() &&
                  p.w3.rows() == static_cast<Eigen::Index>(class_count(scheme)) &&
                  p.b3.size() == p.w3.rows();
  if (!ok) throw ShapeError("fusion head parameter shapes are inconsistent");
  auto copy = params;
  bool finite = true;
  copy.for_each([&](double v) { finite = finite && std::isfinite(v); });
  if (!finite) throw DomainError("fusion head has non-finite parameters");
}

// ---------------------------------------------------------------------------
// Forward / loss / backward

VectorXd softmax(const VectorXd& logits) {
  return row_softmax(logits.transpose()).transpose();
}

ForwardResult forward(const FusionHeadModel& m, std::span<const double> meta,
                      std::span<const double> cnn) {
  if (meta.size() != kMetaFeatures)
    throw ShapeError("metadata vector has " + std::to_string(meta.size()) + " entries, expected " +
                     std::to_string(kMetaFeatures));
  if (cnn.size() != m.cnn_dim())
    throw ShapeError("CNN vector has " + std::to_string(cnn.size()) + " entries, model expects " +
                     std::to_string(m.cnn_dim()));
  const MatrixXd x = Eigen::Map<const Eigen::RowVectorXd>(meta.data(), 14);
  MatrixXd c(1, static_cast<Eigen::Index>(cnn.size()));
  for (std::size_t i = 0; i < cnn.size(); ++i) c(0, static_cast<Eigen::Index>(i)) = cnn[i];
  const auto a = run_forward(m, x, c);
  return {a.logits.row(0).transpose(), a.probs.row(0).transpose()};
}

MatrixXd predict_batch(const FusionHeadModel& m, const MatrixXd& meta, const MatrixXd& cnn) {
  return run_forward(m, meta, cnn).probs;
}

double cross_entropy(std::span<const double> probs, std::size_t target) {
  if (target >= probs.size())
    throw DomainError("target index " + std::to_string(target) + " out of range for " +
                      std::to_string(probs.size()) + " classes");
  return -std::log(std::max(probs[target], kProbFloor));
}

LossGradient backward(const FusionHeadModel& m, const Batch& batch) {
  if (batch.size() == 0) throw DomainError("backward needs a non-empty batch");
  if (static_cast<std::size_t>(batch.meta.rows()) != batch.size())
    throw ShapeError("batch has " + std::to_string(batch.meta.rows()) + " rows but " +
                     std::to_string(batch.size()) + " targets");
  const auto a = run_forward(m, batch.meta, batch.cnn);
  const auto& p = m.params;
  const double n = static_cast<double>(batch.size());
  const std::size_t classes = m.classes();

  LossGradient out;
  MatrixXd dz3 = a.probs;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const std::size_t t = batch.targets[i];
    if (t >= classes)
      throw DomainError("target index " + std::to_string(t) + " out of range for " +
                        std::to_string(classes) + " classes");
    const auto row = static_cast<Eigen::Index>(i);
    out.loss += -std::log(std::max(a.probs(row, static_cast<Eigen::Index>(t)), kProbFloor));
    dz3(row, static_cast<Eigen::Index>(t)) -= 1.0;
  }
  out.loss /= n;
  dz3 /= n;

  const Eigen::Index h2 = p.w2.rows();
  out.grad.w3 = dz3.transpose() * a.concat;
  out.grad.b3 = dz3.colwise().sum().transpose();
  const MatrixXd dz2 = (dz3 * p.w3.leftCols(h2)).cwiseProduct(
      (a.z2.array() > 0.0).cast<double>().matrix());
  out.grad.w2 = dz2.transpose() * a.a1;
  out.grad.b2 = dz2.colwise().sum().transpose();
  const MatrixXd dz1 =
      (dz2 * p.w2).cwiseProduct((a.z1.array() > 0.0).cast<double>().matrix());
  out.grad.w1 = dz1.transpose() * batch.meta;
  out.grad.b1 = dz1.colwise().sum().transpose();
  return out;
}

// ---------------------------------------------------------------------------
// Optimization

double lr_schedule(std::size_t epoch, std::size_t total_epochs, double lr_peak) {
  if (total_epochs < 2)
    throw DomainError("schedule needs at least 2 epochs (one warm-up plus one cosine)");
  if (epoch >= total_epochs)
    throw DomainError("epoch " + std::to_string(epoch) + " outside schedule of " +
                      std::to_string(total_epochs));
  if (epoch == 0) return decimal_tenth(lr_peak);
  if (total_epochs == 2) return lr_peak;
  const double progress =
      static_cast<double>(epoch - 1) / static_cast<double>(total_epochs - 2);
  if (epoch == total_epochs - 1) return 0.0;
  return 0.5 * lr_peak * (1.0 + std::cos(std::numbers::pi * progress));
}

void TrainConfig::validate() const {
  if (epochs < 2) throw DomainError("training needs at least 2 epochs, got " + std::to_string(epochs));
  if (batch_size == 0) throw DomainError("batch size must be positive");
  if (!(lr_peak > 0.0) || !std::isfinite(lr_peak)) throw DomainError("lr_peak must be positive");
  if (hidden1 == 0 || hidden2 == 0) throw DomainError("hidden widths must be positive");
}

void adam_step(HeadParameters& params, const HeadParameters& grad, AdamState& state, double lr) {
  if (state.step == 0) {
    const auto zero = [](HeadParameters& p) {
      p.for_each([](double& v) { v = 0.0; });
    };
    state.m = grad;
    state.v = grad;
    zero(state.m);
    zero(state.v);
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.step));
  zip_params(state.m, grad, [](auto m, auto g) { m = kAdamBeta1 * m + (1.0 - kAdamBeta1) * g; });
  zip_params(state.v, grad,
             [](auto v, auto g) { v = kAdamBeta2 * v + (1.0 - kAdamBeta2) * g.square(); });
  HeadParameters step = state.m;
  zip_params(step, state.v, [&](auto s, auto v) {
    s = lr * (s / bc1) / ((v / bc2).sqrt() + kAdamEpsilon);
  });
  zip_params(params, step, [](auto p, auto s) { p -= s; });
}

std::size_t training_target(const SampleRecord& r, TargetScheme scheme) {
  return class_index(record_class(r, scheme), scheme);
}

TrainResult train(const Dataset& d, const FeatureTable& features, const FeatureTable* cnn,
                  const FoldAssignment& folds, const TrainConfig& cfg) {
  cfg.validate();
  if (d.empty()) throw DomainError("cannot train on an empty dataset");
  if (features.dim() != kMetaFeatures)
    throw ShapeError("feature table has " + std::to_string(features.dim()) + " columns, expected " +
                     std::to_string(kMetaFeatures));

  const std::size_t n = d.size();
  const std::size_t cnn_dim = cnn ? cnn->dim() : 0;
  const auto rows = static_cast<Eigen::Index>(n);
  MatrixXd meta(rows, static_cast<Eigen::Index>(kMetaFeatures));
  MatrixXd cnn_block(rows, static_cast<Eigen::Index>(cnn_dim));
  std::vector<std::size_t> targets(n), fold(n);

  // Coverage is checked for every record before any training starts.
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = d[i];
    const auto row = static_cast<Eigen::Index>(i);
    const auto f = features.find(r.image_name);
    if (!f) throw CoverageError("no metadata features for image " + r.image_name);
    for (std::size_t c = 0; c < kMetaFeatures; ++c)
      meta(row, static_cast<Eigen::Index>(c)) = features.row(*f)[c];
    if (cnn) {
      const auto g = cnn->find(r.image_name);
      if (!g) throw CoverageError("no CNN features for image " + r.image_name);
      for (std::size_t c = 0; c < cnn_dim; ++c)
        cnn_block(row, static_cast<Eigen::Index>(c)) = cnn->row(*g)[c];
    }
    const auto k = folds.fold_of(r.image_name);
    if (!k) throw CoverageError("image " + r.image_name + " has no fold assignment");
    fold[i] = *k;
    targets[i] = training_target(r, cfg.scheme);
  }

  const std::size_t k_folds = folds.k();
  std::vector<std::vector<std::size_t>> train_rows(k_folds), valid_rows(k_folds);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < k_folds; ++k) (fold[i] == k ? valid_rows : train_rows)[k].push_back(i);
  for (std::size_t k = 0; k < k_folds; ++k)
    if (train_rows[k].empty())
      throw DomainError("fold " + std::to_string(k) + " leaves no training data");

  TrainResult result;
  result.models.resize(k_folds);
  std::vector<std::vector<EpochRecord>> histories(k_folds);
  std::vector<double> oof(n, 0.0);

  parallel_for(k_folds, cfg.threads, [&](std::size_t k) {
    const std::uint64_t fold_seed = cfg.seed + k;
    auto model = FusionHeadModel::he_init(cfg.scheme, cfg.hidden1, cfg.hidden2, cnn_dim,
                                          splitmix64(fold_seed));
    Rng shuffler(splitmix64(fold_seed ^ 0x5DEECE66Dull));
    AdamState adam;
    auto order = train_rows[k];

    const MatrixXd valid_meta = gather_rows(meta, valid_rows[k]);
    const MatrixXd valid_cnn = gather_rows(cnn_block, valid_rows[k]);
    std::vector<std::uint8_t> valid_labels;
    for (std::size_t i : valid_rows[k]) valid_labels.push_back(d[i].malignant() ? 1 : 0);
    const std::size_t mel_col = class_index(DiagnosisClass::MEL, cfg.scheme);
    const auto mel_scores = [&](const MatrixXd& probs) {
      std::vector<double> s(static_cast<std::size_t>(probs.rows()));
      for (Eigen::Index i = 0; i < probs.rows(); ++i)
        s[static_cast<std::size_t>(i)] = probs(i, static_cast<Eigen::Index>(mel_col));
      return s;
    };

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
      const double lr = lr_schedule(epoch, cfg.epochs, cfg.lr_peak);
      shuffler.shuffle(order.begin(), order.end());
      double loss_sum = 0.0;
      for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
        const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
        const std::span<const std::size_t> idx(order.data() + start, stop - start);
        Batch batch{gather_rows(meta, idx), gather_rows(cnn_block, idx), {}};
        for (std::size_t i : idx) batch.targets.push_back(targets[i]);
        const auto lg = backward(model, batch);
        loss_sum += lg.loss * static_cast<double>(idx.size());
        adam_step(model.params, lg.grad, adam, lr);
      }
      EpochRecord rec;
      rec.fold = k;
      rec.epoch = epoch;
      rec.lr = lr;
      rec.train_loss = loss_sum / static_cast<double>(order.size());
      if (!valid_rows[k].empty())
        rec.valid_auc = try_auc(mel_scores(predict_batch(model, valid_meta, valid_cnn)), valid_labels);
      histories[k].push_back(rec);
    }

    if (!valid_rows[k].empty()) {
      const auto scores = mel_scores(predict_batch(model, valid_meta, valid_cnn));
      for (std::size_t j = 0; j < valid_rows[k].size(); ++j) oof[valid_rows[k][j]] = scores[j];
    }
    result.models[k] = std::move(model);
  });

  for (auto& h : histories) result.history.insert(result.history.end(), h.begin(), h.end());
  std::vector<std::string> images;
  images.reserve(n);
  for (const auto& r : d.records()) images.push_back(r.image_name);
  result.oof = PredictionSet::scalar(std::move(images), std::move(oof));
  return result;
}

std::string write_history_csv(std::span<const EpochRecord> history) {
  std::string out = "fold,epoch,lr,train_loss,valid_auc\n";
  for (const auto& h : history) {
    out += std::to_string(h.fold) + "," + std::to_string(h.epoch) + "," + format_double(h.lr) +
           "," + format_double(h.train_loss) + "," +
           (h.valid_auc ? format_double(*h.valid_auc) : std::string()) + "\n";
  }
  return out;
}

}  // namespace lesionbench
