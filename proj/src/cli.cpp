#include "lesionbench/cli.hpp"

#include <charconv>
#include <chrono>
#include <ctime>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "csv.hpp"
#include "lesionbench/datamodel.hpp"
#include "lesionbench/ensemble.hpp"
#include "lesionbench/errors.hpp"
#include "lesionbench/features.hpp"
#include "lesionbench/folds.hpp"
#include "lesionbench/fusion.hpp"
#include "lesionbench/metrics.hpp"

namespace lesionbench {
namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string utc_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

class Session {
 public:
  Session(std::string subcommand, std::ostream& out, std::ostream& err)
      : out(out), err(err) {
    manifest_.subcommand = std::move(subcommand);
  }

  std::string read_input(const std::string& flag, const std::string& path) {
    auto text = read_text_file(path);
    manifest_.input_digests.emplace_back(flag, fnv1a64(text));
    return text;
  }
  void arg(const std::string& key, const std::string& value) {
    manifest_.arguments.emplace_back(key, value);
  }
  void seed(std::uint64_t s) { manifest_.seed = s; }
  void write_manifest(const std::string& out_path) {
    manifest_.timestamp = utc_timestamp();
    write_text_file(out_path + ".manifest.txt", manifest_.to_text());
  }

  std::ostream& out;
  std::ostream& err;

 private:
  RunManifest manifest_;
};

// `image_name,image_size_bytes` side file for the features subcommand.
Dataset merge_sizes(const Dataset& d, std::string_view text) {
  const auto rows = csv::parse(text);
  if (rows.empty() || rows.front().fields.size() != 2 ||
      csv::trim(rows.front().fields[0]) != "image_name" ||
      csv::trim(rows.front().fields[1]) != "image_size_bytes")
    throw FormatError("sizes CSV header must be 'image_name,image_size_bytes'");
  auto records = d.records();
  for (std::size_t ri = 1; ri < rows.size(); ++ri) {
    const auto& row = rows[ri];
    if (row.fields.size() != 2) throw ParseError(row.line, "expected 2 fields");
    const auto pos = d.find(csv::trim(row.fields[0]));
    if (!pos) continue;
    const auto cell = csv::trim(row.fields[1]);
    if (cell.empty()) continue;
    std::uint64_t bytes = 0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), bytes);
    if (ec != std::errc() || ptr != cell.data() + cell.size() || bytes == 0)
      throw ParseError(row.line, "image_size_bytes '" + std::string(cell) +
                                     "' is not a positive integer");
    records[*pos].image_size_bytes = bytes;
  }
  return Dataset(std::move(records));
}

std::string optional_text(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string("undefined");
}

// ---------------------------------------------------------------------------

struct SplitArgs {
  std::string meta, out;
  std::size_t folds = 5;
  std::uint64_t seed = 42;
};

int run_split(const SplitArgs& a, Session& s) {
  s.arg("meta", a.meta);
  s.arg("folds", std::to_string(a.folds));
  s.arg("seed", std::to_string(a.seed));
  s.arg("out", a.out);
  s.seed(a.seed);
  const auto d = parse_metadata_csv(s.read_input("meta", a.meta));
  const auto f = assign_folds(d, a.folds, a.seed);
  write_text_file(a.out, write_folds_csv(f));
  s.write_manifest(a.out);

  const auto report = fold_ratio_report(d, f);
  s.out << "fold,size,positives,ratio\n";
  for (std::size_t k = 0; k < report.folds.size(); ++k) {
    const auto& st = report.folds[k];
    s.out << k << "," << st.size << "," << st.positives << "," << format_double(st.ratio) << "\n";
  }
  s.out << "all," << report.global.size << "," << report.global.positives << ","
        << format_double(report.global.ratio) << "\n";
  return exit_code::kOk;
}

struct FeaturesArgs {
  std::string meta, sizes, out, folds;
  int exclude_fold = -1;
};

int run_features(const FeaturesArgs& a, Session& s) {
  s.arg("meta", a.meta);
  s.arg("sizes", a.sizes);
  s.arg("folds", a.folds);
  s.arg("exclude-fold", std::to_string(a.exclude_fold));
  s.arg("out", a.out);
  auto d = parse_metadata_csv(s.read_input("meta", a.meta));
  if (!a.sizes.empty()) d = merge_sizes(d, s.read_input("sizes", a.sizes));
  if (!d.has_image_sizes())
    s.err << "warning: no image sizes available; log_size features are 0\n";

  std::vector<std::size_t> fit_rows;
  if (!a.folds.empty()) {
    if (a.exclude_fold < 0) throw DomainError("--folds requires --exclude-fold");
    const auto f = parse_folds_csv(s.read_input("folds", a.folds));
    for (std::size_t i = 0; i < d.size(); ++i) {
      const auto k = f.fold_of(d[i].image_name);
      if (!k) throw CoverageError("image " + d[i].image_name + " has no fold assignment");
      if (static_cast<int>(*k) != a.exclude_fold) fit_rows.push_back(i);
    }
    if (fit_rows.empty()) throw DomainError("excluded fold leaves no rows to fit on");
  }
  const auto table = build_feature_table(d, fit_rows);
  write_text_file(a.out, write_feature_csv(table, 'f'));
  s.write_manifest(a.out);
  return exit_code::kOk;
}

struct TrainArgs {
  std::string meta, features, folds, cnn, out;
  int scheme = 9;
  std::size_t epochs = 15, batch_size = 64;
  double lr = 3e-4;
  std::vector<std::size_t> hidden = {512, 128};
  std::uint64_t seed = 42;
};

int run_train(const TrainArgs& a, Session& s) {
  if (a.scheme != 9 && a.scheme != 4) throw DomainError("--scheme must be 9 or 4");
  if (a.hidden.size() != 2) throw DomainError("--hidden takes exactly two widths, e.g. 512,128");
  TrainConfig cfg;
  cfg.scheme = a.scheme == 9 ? TargetScheme::NineClass : TargetScheme::FourClass;
  cfg.epochs = a.epochs;
  cfg.batch_size = a.batch_size;
  cfg.lr_peak = a.lr;
  cfg.hidden1 = a.hidden[0];
  cfg.hidden2 = a.hidden[1];
  cfg.seed = a.seed;
  cfg.threads = worker_threads_from_env();

  for (const auto& [k, v] : std::vector<std::pair<std::string, std::string>>{
           {"meta", a.meta}, {"features", a.features}, {"folds", a.folds}, {"cnn", a.cnn},
           {"scheme", std::to_string(a.scheme)}, {"epochs", std::to_string(a.epochs)},
           {"batch-size", std::to_string(a.batch_size)}, {"lr", format_double(a.lr)},
           {"hidden", std::to_string(a.hidden[0]) + "," + std::to_string(a.hidden[1])},
           {"seed", std::to_string(a.seed)}, {"out", a.out}})
    s.arg(k, v);
  s.seed(a.seed);

  const auto d = parse_metadata_csv(s.read_input("meta", a.meta));
  const auto feats = parse_feature_csv(s.read_input("features", a.features), 'f');
  const auto folds = parse_folds_csv(s.read_input("folds", a.folds));
  std::optional<FeatureTable> cnn;
  if (!a.cnn.empty()) cnn = parse_feature_csv(s.read_input("cnn", a.cnn), 'c');

  const auto result = train(d, feats, cnn ? &*cnn : nullptr, folds, cfg);
  write_text_file(a.out, write_predictions_csv(result.oof));
  for (std::size_t k = 0; k < result.models.size(); ++k) {
    const auto bytes = save_model(result.models[k]);
    write_text_file(a.out + ".fold" + std::to_string(k) + ".lsnb",
                    std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  }
  write_text_file(a.out + ".history.csv", write_history_csv(result.history));
  s.write_manifest(a.out);

  const auto cv = evaluate_cv(result.oof, d, folds);
  s.out << "cv_all=" << optional_text(cv.cv_all) << "\n";
  return exit_code::kOk;
}

struct EvaluateArgs {
  std::string meta, preds, folds;
};

int run_evaluate(const EvaluateArgs& a, Session& s) {
  const auto d = parse_metadata_csv(s.read_input("meta", a.meta));
  const auto preds = parse_predictions_csv(s.read_input("preds", a.preds));
  const auto folds = parse_folds_csv(s.read_input("folds", a.folds));
  const auto cv = evaluate_cv(preds, d, folds);
  s.out << "cv_all=" << optional_text(cv.cv_all) << "\n";
  s.out << "cv_2020=" << optional_text(cv.cv_2020) << "\n";
  for (std::size_t k = 0; k < cv.per_fold.size(); ++k)
    s.out << "fold" << k << "=" << optional_text(cv.per_fold[k]) << "\n";
  return exit_code::kOk;
}

struct EnsembleArgs {
  std::vector<std::string> preds;
  std::string out;
};

int run_ensemble(const EnsembleArgs& a, Session& s) {
  std::string joined;
  for (const auto& p : a.preds) joined += (joined.empty() ? "" : ",") + p;
  s.arg("preds", joined);
  s.arg("out", a.out);
  std::vector<PredictionSet> models;
  for (std::size_t i = 0; i < a.preds.size(); ++i)
    models.push_back(parse_predictions_csv(s.read_input("preds" + std::to_string(i), a.preds[i])));
  const auto ens = rank_average(models);
  write_text_file(a.out, write_predictions_csv(ens));
  s.write_manifest(a.out);
  return exit_code::kOk;
}

int run_stability(const std::string& table_path, Session& s) {
  const auto table = parse_score_table_csv(s.read_input("table", table_path));
  const auto st = stability(table);
  for (std::size_t m = 0; m < 4; ++m)
    s.out << metric_name(static_cast<Metric>(m)) << "_std=" << std::fixed << std::setprecision(6)
          << st.stddev[m] << "\n";
  s.out.unsetf(std::ios::floatfield);
  s.out << "ranking=";
  for (std::size_t i = 0; i < 4; ++i) s.out << (i ? " > " : "") << metric_name(st.ranking[i]);
  s.out << "\n";
  const std::array<Metric, 4> reported = {Metric::CvAll, Metric::Cv2020, Metric::PrivateLb,
                                          Metric::PublicLb};
  if (st.ranking == reported) s.out << "ordering cv_all > cv_2020 > private_lb > public_lb holds\n";
  return exit_code::kOk;
}

}  // namespace

std::string RunManifest::to_text() const {
  std::ostringstream os;
  os << "subcommand=" << subcommand << "\n";
  os << "version=" << version << "\n";
  os << "seed=" << seed << "\n";
  for (const auto& [k, v] : arguments) os << "arg." << k << "=" << v << "\n";
  for (const auto& [k, h] : input_digests) os << "input." << k << ".fnv1a64=" << hex64(h) << "\n";
  os << "timestamp=" << timestamp << "\n";
  return os.str();
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("error reading " + path.string());
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("error writing " + path.string());
}

std::size_t worker_threads_from_env() {
  const char* v = std::getenv("LESIONBENCH_THREADS");
  if (!v) return 1;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (end == v || *end != '\0' || n < 1) return 1;
  return static_cast<std::size_t>(n);
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"lesionbench: melanoma-classification pipeline toolkit", "lesionbench"};
  app.require_subcommand(1);

  SplitArgs split;
  auto* split_cmd = app.add_subcommand("split", "Patient-grouped stratified fold assignment");
  split_cmd->add_option("--meta", split.meta, "Metadata CSV")->required();
  split_cmd->add_option("--folds", split.folds, "Fold count")->capture_default_str();
  split_cmd->add_option("--seed", split.seed, "Tie-break seed")->capture_default_str();
  split_cmd->add_option("--out", split.out, "Output folds CSV")->required();

  FeaturesArgs features;
  auto* features_cmd = app.add_subcommand("features", "Encode the 14 metadata features");
  features_cmd->add_option("--meta", features.meta, "Metadata CSV")->required();
  features_cmd->add_option("--sizes", features.sizes, "CSV image_name,image_size_bytes");
  features_cmd->add_option("--folds", features.folds,
                           "Folds CSV; with --exclude-fold, fit normalization without that fold");
  features_cmd->add_option("--exclude-fold", features.exclude_fold, "Fold left out of fitting");
  features_cmd->add_option("--out", features.out, "Output feature CSV")->required();

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train one fusion head per fold");
  train_cmd->add_option("--meta", train_args.meta, "Metadata CSV")->required();
  train_cmd->add_option("--features", train_args.features, "Feature CSV (f0..f13)")->required();
  train_cmd->add_option("--folds", train_args.folds, "Folds CSV")->required();
  train_cmd->add_option("--cnn", train_args.cnn, "CNN feature CSV (c0..)");
  train_cmd->add_option("--scheme", train_args.scheme, "Target classes: 9 or 4")->capture_default_str();
  train_cmd->add_option("--epochs", train_args.epochs, "Epochs including warm-up")->capture_default_str();
  train_cmd->add_option("--batch-size", train_args.batch_size, "Mini-batch size")->capture_default_str();
  train_cmd->add_option("--lr", train_args.lr, "Peak learning rate")->capture_default_str();
  train_cmd->add_option("--hidden", train_args.hidden, "Hidden widths H1,H2")
      ->delimiter(',')
      ->expected(2);
  train_cmd->add_option("--seed", train_args.seed, "Seed")->capture_default_str();
  train_cmd->add_option("--out", train_args.out, "Output OOF predictions CSV")->required();

  EvaluateArgs evaluate;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "cv_all, cv_2020 and per-fold AUC");
  evaluate_cmd->add_option("--meta", evaluate.meta, "Metadata CSV")->required();
  evaluate_cmd->add_option("--preds", evaluate.preds, "Prediction CSV")->required();
  evaluate_cmd->add_option("--folds", evaluate.folds, "Folds CSV")->required();

  EnsembleArgs ensemble;
  auto* ensemble_cmd = app.add_subcommand("ensemble", "Rank-average prediction files");
  ensemble_cmd->add_option("--preds", ensemble.preds, "Comma-separated prediction CSVs")
      ->required()
      ->delimiter(',');
  ensemble_cmd->add_option("--out", ensemble.out, "Output prediction CSV")->required();

  std::string table_path;
  auto* stability_cmd = app.add_subcommand("stability", "Per-metric standard deviations");
  stability_cmd->add_option("--table", table_path, "Score table CSV")->required();

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? exit_code::kOk : exit_code::kValidation;
  }

  CLI::App* chosen = app.get_subcommands().front();
  Session session(chosen->get_name(), out, err);
  try {
    if (chosen == split_cmd) return run_split(split, session);
    if (chosen == features_cmd) return run_features(features, session);
    if (chosen == train_cmd) return run_train(train_args, session);
    if (chosen == evaluate_cmd) return run_evaluate(evaluate, session);
    if (chosen == ensemble_cmd) return run_ensemble(ensemble, session);
    if (chosen == stability_cmd) return run_stability(table_path, session);
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return exit_code::kIo;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code::kValidation;
  }
  return exit_code::kValidation;
}

}  // namespace lesionbench
