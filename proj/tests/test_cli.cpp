#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include <unistd.h>

#include "lesionbench/cli.hpp"
#include "lesionbench/datamodel.hpp"
#include "lesionbench/ensemble.hpp"
#include "lesionbench/fusion.hpp"
#include "support/synthetic.hpp"

using namespace lesionbench;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("lesionbench_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string operator/(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

std::string without_timestamp(const std::string& manifest) {
  return manifest.substr(0, manifest.find("timestamp="));
}

const std::string kHeader =
    "image_name,patient_id,sex,age_approx,anatom_site_general_challenge,diagnosis,target,source";

}  // namespace

TEST_CASE("help and usage errors") {
  CHECK(run({"--help"}).code == 0);
  CHECK(run({"split", "--help"}).code == 0);
  CHECK(run({}).code == exit_code::kValidation);
  CHECK(run({"split", "--meta", "x.csv"}).code == exit_code::kValidation);
}

TEST_CASE("split writes deterministic folds and a manifest") {
  TempDir dir;
  const auto d = synthetic::separable_dataset(120, 30, 3);
  write_text_file(dir / "meta.csv", write_metadata_csv(d));

  auto r = run({"split", "--meta", dir / "meta.csv", "--out", dir / "a.csv"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("all,120,") != std::string::npos);
  r = run({"split", "--meta", dir / "meta.csv", "--out", dir / "b.csv"});
  REQUIRE(r.code == 0);
  CHECK(read_text_file(dir / "a.csv") == read_text_file(dir / "b.csv"));

  const auto manifest = read_text_file(dir / "a.csv.manifest.txt");
  CHECK(manifest.find("subcommand=split\n") != std::string::npos);
  CHECK(manifest.find("seed=42\n") != std::string::npos);
  CHECK(manifest.find("arg.folds=5\n") != std::string::npos);
  CHECK(manifest.find("input.meta.fnv1a64=") != std::string::npos);
  CHECK(manifest.find("timestamp=") != std::string::npos);
  const auto again = read_text_file(dir / "b.csv.manifest.txt");
  // Only the output path and timestamp differ.
  auto strip_out = [](std::string m) {
    const auto p = m.find("arg.out=");
    return m.erase(p, m.find('\n', p) - p);
  };
  CHECK(strip_out(without_timestamp(manifest)) == strip_out(without_timestamp(again)));
}

TEST_CASE("split edge cases") {
  TempDir dir;
  write_text_file(dir / "one.csv", kHeader + "\nA,P1,male,40,torso,nevus,0,2020\nB,P1,male,40,torso,nevus,0,2020\n");
  REQUIRE(run({"split", "--meta", dir / "one.csv", "--out", dir / "f.csv"}).code == 0);
  const auto folds = read_text_file(dir / "f.csv");
  CHECK((folds.find("A,3\nB,3\n") != std::string::npos || folds.find("A,0\nB,0\n") != std::string::npos ||
         folds.find("A,1\nB,1\n") != std::string::npos || folds.find("A,2\nB,2\n") != std::string::npos ||
         folds.find("A,4\nB,4\n") != std::string::npos));

  const auto bad = run({"split", "--meta", dir / "one.csv", "--folds", "1", "--out", dir / "g.csv"});
  CHECK(bad.code == exit_code::kValidation);
  CHECK(bad.err.find("at least 2") != std::string::npos);

  CHECK(run({"split", "--meta", dir / "missing.csv", "--out", dir / "h.csv"}).code == exit_code::kIo);
}

TEST_CASE("features on a hand-checked toy file") {
  TempDir dir;
  write_text_file(dir / "meta.csv", kHeader + ",image_size_bytes\n"
                                              "A,P1,male,40,torso,nevus,0,2020,100\n"
                                              "B,P1,female,60,head/neck,nevus,0,2020,10000\n");
  const auto r = run({"features", "--meta", dir / "meta.csv", "--out", dir / "f.csv"});
  REQUIRE(r.code == 0);
  CHECK(r.err.empty());
  const auto t = parse_feature_csv(read_text_file(dir / "f.csv"), 'f');
  REQUIRE(t.dim() == 14);
  // Two-point z-scores are -+1/sqrt(2); both images share one patient, so the
  // count feature has zero spread and encodes as 0.
  const double h = 1.0 / std::sqrt(2.0);
  const std::vector<double> a = {1, -h, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0, -h, 0};
  const std::vector<double> b = {0, h, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, h, 0};
  for (std::size_t c = 0; c < 14; ++c) {
    CHECK(t.row(0)[c] == doctest::Approx(a[c]).epsilon(1e-12));
    CHECK(t.row(1)[c] == doctest::Approx(b[c]).epsilon(1e-12));
  }
}

TEST_CASE("features without sizes warns and zeroes the size slot") {
  TempDir dir;
  write_text_file(dir / "meta.csv", kHeader + "\nA,P1,male,40,torso,nevus,0,2020\nB,P2,female,60,torso,nevus,0,2020\n");
  const auto r = run({"features", "--meta", dir / "meta.csv", "--out", dir / "f.csv"});
  REQUIRE(r.code == 0);
  CHECK(r.err.find("warning") != std::string::npos);
  const auto t = parse_feature_csv(read_text_file(dir / "f.csv"), 'f');
  CHECK(t.row(0)[12] == 0.0);
  CHECK(t.row(1)[12] == 0.0);

  write_text_file(dir / "sizes.csv", "image_name,image_size_bytes\nA,100\nB,10000\n");
  const auto r2 = run({"features", "--meta", dir / "meta.csv", "--sizes", dir / "sizes.csv", "--out", dir / "g.csv"});
  REQUIRE(r2.code == 0);
  CHECK(r2.err.empty());
  const auto t2 = parse_feature_csv(read_text_file(dir / "g.csv"), 'f');
  CHECK(t2.row(0)[12] == doctest::Approx(-1.0 / std::sqrt(2.0)));
}

TEST_CASE("evaluate reports coverage errors with exit code 2") {
  TempDir dir;
  write_text_file(dir / "meta.csv", kHeader + "\nA,P1,male,40,torso,nevus,0,2020\nB,P2,female,60,torso,melanoma,1,2020\n");
  write_text_file(dir / "folds.csv", "image_name,fold\nA,0\nB,1\n");
  write_text_file(dir / "preds.csv", "image_name,target\nA,0.2\n");
  const auto r = run({"evaluate", "--meta", dir / "meta.csv", "--preds", dir / "preds.csv", "--folds", dir / "folds.csv"});
  CHECK(r.code == exit_code::kValidation);
  CHECK(r.err.find("B") != std::string::npos);

  write_text_file(dir / "preds.csv", "image_name,target\nA,0.2\nB,0.7\n");
  const auto ok = run({"evaluate", "--meta", dir / "meta.csv", "--preds", dir / "preds.csv", "--folds", dir / "folds.csv"});
  CHECK(ok.code == 0);
  CHECK(ok.out == "cv_all=1\ncv_2020=1\nfold0=undefined\nfold1=undefined\n");
}

TEST_CASE("ensemble of one file is its rank transform") {
  TempDir dir;
  write_text_file(dir / "a.csv", "image_name,target\nx,0.9\ny,0.1\nz,0.5\n");
  write_text_file(dir / "b.csv", "image_name,target\nx,0.2\ny,0.3\nz,0.1\n");
  REQUIRE(run({"ensemble", "--preds", dir / "a.csv", "--out", dir / "e.csv"}).code == 0);
  CHECK(read_text_file(dir / "e.csv") == "image_name,target\nx,1\ny,0\nz,0.5\n");
  REQUIRE(run({"ensemble", "--preds", dir / "a.csv" + "," + dir / "b.csv", "--out", dir / "e2.csv"}).code == 0);
  CHECK(read_text_file(dir / "e2.csv") == "image_name,target\nx,0.75\ny,0.5\nz,0.25\n");
  CHECK(fs::exists(dir / "e2.csv.manifest.txt"));

  write_text_file(dir / "c.csv", "image_name,target\nx,0.2\nw,0.3\nz,0.1\n");
  CHECK(run({"ensemble", "--preds", dir / "a.csv" + "," + dir / "c.csv", "--out", dir / "e3.csv"}).code ==
        exit_code::kValidation);
}

TEST_CASE("stability on the fixture") {
  const auto r = run({"stability", "--table", LESIONBENCH_DATA_DIR "/model_scores.csv"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("cv_all_std=0.001194\n") != std::string::npos);
  CHECK(r.out.find("cv_2020_std=0.004343\n") != std::string::npos);
  CHECK(r.out.find("private_lb_std=0.005957\n") != std::string::npos);
  CHECK(r.out.find("public_lb_std=0.009335\n") != std::string::npos);
  CHECK(r.out.find("ranking=cv_all > cv_2020 > private_lb > public_lb\n") != std::string::npos);
  CHECK(r.out.find("holds") != std::string::npos);
}

TEST_CASE("train writes predictions, weights and history") {
  TempDir dir;
  const auto d = synthetic::separable_dataset(200, 40, 8);
  write_text_file(dir / "meta.csv", write_metadata_csv(d));
  REQUIRE(run({"split", "--meta", dir / "meta.csv", "--folds", "2", "--out", dir / "folds.csv"}).code == 0);
  REQUIRE(run({"features", "--meta", dir / "meta.csv", "--out", dir / "feats.csv"}).code == 0);
  write_text_file(dir / "cnn.csv", write_feature_csv(synthetic::noise_features(d, 4, 1), 'c'));
  const auto r = run({"train", "--meta", dir / "meta.csv", "--features", dir / "feats.csv", "--folds",
                      dir / "folds.csv", "--cnn", dir / "cnn.csv", "--epochs", "3", "--hidden", "8,4",
                      "--scheme", "4", "--out", dir / "oof.csv"});
  REQUIRE(r.code == 0);
  const auto oof = parse_predictions_csv(read_text_file(dir / "oof.csv"));
  CHECK(oof.size() == 200);
  const auto model_text = read_text_file(dir / "oof.csv.fold1.lsnb");
  const std::vector<std::uint8_t> bytes(model_text.begin(), model_text.end());
  const auto m = load_model(bytes);
  CHECK(m.hidden1() == 8);
  CHECK(m.cnn_dim() == 4);
  CHECK(m.scheme == TargetScheme::FourClass);
  CHECK(read_text_file(dir / "oof.csv.history.csv").starts_with("fold,epoch,lr,train_loss,valid_auc\n"));
  CHECK(fs::exists(dir / "oof.csv.manifest.txt"));

  CHECK(run({"train", "--meta", dir / "meta.csv", "--features", dir / "feats.csv", "--folds",
             dir / "folds.csv", "--epochs", "1", "--out", dir / "x.csv"})
            .code == exit_code::kValidation);
}
