#include <doctest.h>

#include <map>
#include <random>
#include <set>

#include "lesionbench/errors.hpp"
#include "lesionbench/folds.hpp"

using namespace lesionbench;

namespace {

SampleRecord rec(std::string image, std::string patient, std::string diagnosis, bool malignant) {
  SampleRecord r;
  r.image_name = std::move(image);
  r.patient_id = std::move(patient);
  r.diagnosis = std::move(diagnosis);
  r.target = malignant ? BinaryTarget::Malignant : BinaryTarget::Benign;
  return r;
}

const std::vector<std::string> kCodes = {"NV", "MEL", "BCC", "BKL", "AK", "SCC", "VASC", "DF", ""};

}  // namespace

TEST_CASE("splitmix64 and fnv1a64 reference values") {
  // Reference outputs of the published algorithms.
  CHECK(splitmix64(0) == 0xE220A8397B1DCDAFull);
  CHECK(fnv1a64("") == 0xCBF29CE484222325ull);
  CHECK(fnv1a64("a") == 0xAF63DC4C8601EC8Cull);
}

TEST_CASE("a single patient lands in one fold") {
  std::vector<SampleRecord> rs;
  for (int i = 0; i < 6; ++i) rs.push_back(rec("i" + std::to_string(i), "P", i ? "nevus" : "melanoma", i == 0));
  const Dataset d(rs);
  const auto f = assign_folds(d, 5, 42);
  const std::set<std::size_t> used(f.folds().begin(), f.folds().end());
  CHECK(used.size() == 1);
  CHECK(f.k() == 5);
}

TEST_CASE("ten balanced singleton patients give two per fold") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    for (std::size_t n_classes : {2u, 5u}) {
      std::vector<SampleRecord> rs;
      for (int i = 0; i < 10; ++i) {
        const std::string code = kCodes[static_cast<std::size_t>(i) % n_classes];
        rs.push_back(rec("I" + std::to_string(i), "P" + std::to_string(i), code, code == "MEL"));
      }
      const auto f = assign_folds(Dataset(rs), 5, seed);
      std::vector<int> per_fold(5, 0);
      for (auto k : f.folds()) ++per_fold[k];
      CHECK(per_fold == std::vector<int>(5, 2));
    }
  }
}

TEST_CASE("fold preconditions") {
  const Dataset d({rec("a", "P1", "nevus", false), rec("b", "P2", "nevus", false)});
  CHECK_THROWS_AS(assign_folds(d, 1, 42), DomainError);
  CHECK_THROWS_AS(assign_folds(Dataset{}, 2, 42), DomainError);
}

TEST_CASE("grouping, partition and stratification on generated data") {
  std::mt19937_64 gen(99);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<SampleRecord> rs;
    const int patients = 10 + static_cast<int>(gen() % 40);
    int img = 0;
    for (int p = 0; p < patients; ++p) {
      const int images = 1 + static_cast<int>(gen() % 4);
      for (int i = 0; i < images; ++i) {
        const std::string code = kCodes[gen() % kCodes.size()];
        rs.push_back(rec("I" + std::to_string(img++), "P" + std::to_string(p), code, code == "MEL"));
      }
    }
    const Dataset d(rs);
    const std::size_t k = 2 + gen() % 4;
    const auto f = assign_folds(d, k, gen());
    REQUIRE(f.images().size() == d.size());
    std::map<std::string, std::size_t> patient_fold;
    for (const auto& r : d.records()) {
      const auto fold = f.fold_of(r.image_name);
      REQUIRE(fold.has_value());
      CHECK(*fold < k);
      const auto [it, inserted] = patient_fold.emplace(r.patient_id, *fold);
      CHECK(it->second == *fold);
    }
    CHECK(parse_folds_csv(write_folds_csv(f)).folds() == f.folds());
  }
}

TEST_CASE("assignment is deterministic for a fixed seed") {
  std::vector<SampleRecord> rs;
  for (int i = 0; i < 300; ++i)
    rs.push_back(rec("I" + std::to_string(i), "P" + std::to_string(i % 90), kCodes[i % 9], i % 9 == 1));
  const Dataset d(rs);
  CHECK(write_folds_csv(assign_folds(d, 5, 7)) == write_folds_csv(assign_folds(d, 5, 7)));
}

TEST_CASE("fold_ratio_report") {
  std::vector<SampleRecord> rs;
  for (int i = 0; i < 100; ++i)
    rs.push_back(rec("I" + std::to_string(i), "P" + std::to_string(i), i < 2 ? "melanoma" : "nevus", i < 2));
  const Dataset d(rs);
  const auto f = assign_folds(d, 2, 42);
  const auto rep = fold_ratio_report(d, f);
  REQUIRE(rep.folds.size() == 2);
  for (const auto& s : rep.folds) {
    CHECK(s.size == 50);
    CHECK(s.positives == 1);
    CHECK(s.ratio == 0.02);
  }
  CHECK(rep.global.ratio == 0.02);

  std::vector<SampleRecord> neg;
  for (int i = 0; i < 10; ++i) neg.push_back(rec("N" + std::to_string(i), "P" + std::to_string(i), "nevus", false));
  const Dataset dn(neg);
  for (const auto& s : fold_ratio_report(dn, assign_folds(dn, 3, 1)).folds) CHECK(s.ratio == 0.0);

  const FoldAssignment partial(2, 0, {"I0"}, {0});
  try {
    fold_ratio_report(d, partial);
    FAIL("expected coverage error");
  } catch (const CoverageError& e) {
    CHECK(std::string(e.what()).find("I1") != std::string::npos);
  }
}
