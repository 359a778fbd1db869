#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>

#include "mtscale/data.hpp"
#include "mtscale/errors.hpp"

using namespace mtscale;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mtscale_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

constexpr double kPi = std::numbers::pi;

}  // namespace

TEST_SUITE("data") {

TEST_CASE("case1 closed-form values") {
  const SequenceSet s = gen_case1();
  REQUIRE(s.size() == 2);
  const Matrix& x1 = s.at("X1").data;
  const Matrix& x2 = s.at("X2").data;
  CHECK(x1.rows() == 100);
  CHECK(x1.cols() == 2);
  for (std::size_t k : {0u, 25u, 50u, 75u, 99u}) {
    const double t = (static_cast<double>(k) - 50.0) / 50.0 * kPi;
    CHECK(std::abs(x1(k, 0) - std::sin(2 * t)) <= 1e-12);
    CHECK(std::abs(x1(k, 1) - std::sin(t)) <= 1e-12);
    CHECK(std::abs(x2(k, 0) - std::sin(2 * t) * std::cos(3 * t)) <= 1e-12);
    const double second = t == 0.0 ? 1.0 : (std::sin(3 * t) / (2 * t)) * (std::sin(t) / t) - 0.5;
    CHECK(std::abs(x2(k, 1) - second) <= 1e-12);
  }
  // Literal values at the quarter points and the removable singularity.
  CHECK(std::abs(x1(75, 0)) <= 1e-12);
  CHECK(std::abs(x1(75, 1) - 1.0) <= 1e-12);
  CHECK(std::abs(x1(25, 1) + 1.0) <= 1e-12);
  CHECK(std::abs(x2(25, 1) - (-0.5 - 2.0 / (kPi * kPi))) <= 1e-12);
  CHECK(std::abs(x2(75, 1) - (-0.5 - 2.0 / (kPi * kPi))) <= 1e-12);
  CHECK(std::abs(x2(0, 1) + 0.5) <= 1e-12);
  CHECK(x1(50, 0) == 0.0);
  CHECK(x1(50, 1) == 0.0);
  CHECK(x2(50, 0) == 0.0);
  CHECK(x2(50, 1) == 1.0);
}

TEST_CASE("case1 continuity and ranges") {
  const auto at_zero = case1_x2(0.0);
  for (double t : {1e-8, -1e-8}) {
    const auto near = case1_x2(t);
    CHECK(std::abs(near.first - at_zero.first) < 1e-6);
    CHECK(std::abs(near.second - at_zero.second) < 1e-6);
  }
  const SequenceSet s = gen_case1();
  for (std::size_t k = 0; k < 100; ++k) {
    for (std::size_t d = 0; d < 2; ++d) CHECK(std::abs(s.at("X1").data(k, d)) <= 1.0);
    CHECK(std::abs(s.at("X2").data(k, 0)) <= 1.0);
    const double v = s.at("X2").data(k, 1);
    CHECK((v >= -2.0 && v <= 1.0));
  }
  CHECK(case1_time(50) == 0.0);
}

TEST_CASE("command dictionary") {
  CHECK(encode_command("lift", "ball") == Vector{0.8, 0.2});
  CHECK(encode_command("slide left", "tractor") == Vector{0.0, 0.0});
  CHECK(encode_command("push", "modi") == Vector{0.4, 0.4});

  const double grid[] = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8};
  const auto& d = default_dictionary();
  for (const auto* map : {&d.verbs, &d.nouns}) {
    REQUIRE(map->size() == 9);
    std::set<std::string> words;
    for (std::size_t i = 0; i < 9; ++i) {
      CHECK((*map)[i].second == grid[i]);
      words.insert((*map)[i].first);
    }
    CHECK(words.size() == 9);
  }
  CHECK_THROWS_WITH_AS(encode_command("throw", "ball"), doctest::Contains("grasp"), ContractError);
  CHECK_THROWS_WITH_AS(encode_command("lift", "rock"), doctest::Contains("spiky"), ContractError);
}

TEST_CASE("multimodal generator") {
  MultimodalSpec spec;
  const SequenceSet s = gen_multimodal(spec);
  CHECK(s.size() == 20);
  CHECK(s.dims == 43);
  CHECK(s.synthetic);
  std::set<std::string> ids;
  for (const auto& seq : s.sequences) {
    ids.insert(seq.id);
    CHECK(seq.data.rows() == 100);
    for (std::size_t k = 1; k < seq.data.rows(); ++k) {
      CHECK(seq.data(k, 0) == seq.data(0, 0));
      CHECK(seq.data(k, 1) == seq.data(0, 1));
    }
    for (double v : seq.data.flat()) CHECK((v >= -1.0 && v <= 1.0));
  }
  CHECK(ids.size() == 20);

  spec.noise_std = 0.0;
  const SequenceSet a = gen_multimodal(spec), b = gen_multimodal(spec);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.sequences[i].data == b.sequences[i].data);

  MultimodalSpec sweep;
  sweep.full_sweep = true;
  sweep.seq_len = 10;
  CHECK(gen_multimodal(sweep).size() == 81);

  MultimodalSpec bad;
  bad.noise_std = -1.0;
  CHECK_THROWS_AS(gen_multimodal(bad), ContractError);
  bad = MultimodalSpec{};
  bad.n_sequences = 9 * 9 * 6 + 1;
  CHECK_THROWS_AS(gen_multimodal(bad), ContractError);
}

TEST_CASE("save and load round trip") {
  const fs::path dir = temp_dir("set_rt");
  const SequenceSet c1 = gen_case1();
  save_set(c1, dir / "c1");
  const SequenceSet back = load_set(dir / "c1");
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back.sequences[i].id == c1.sequences[i].id);
    CHECK(back.sequences[i].data == c1.sequences[i].data);
  }
  CHECK(back.generator == "case1");

  MultimodalSpec spec;
  spec.n_sequences = 3;
  spec.seed = 1234567;
  const SequenceSet mm = gen_multimodal(spec);
  save_set(mm, dir / "mm");
  const SequenceSet mm_back = load_set(dir / "mm");
  CHECK(mm_back.seed == 1234567);
  CHECK(mm_back.synthetic);
  CHECK(mm_back.params == mm.params);
  for (std::size_t i = 0; i < 3; ++i) CHECK(mm_back.sequences[i].data == mm.sequences[i].data);
}

TEST_CASE("load errors") {
  const fs::path dir = temp_dir("set_err");
  save_set(gen_case1(), dir);
  {
    std::ofstream f(dir / "X2.csv", std::ios::trunc);
    f << "d0,d1,d2\n1,2,3\n4,5,6\n";
  }
  try {
    (void)load_set(dir);
    FAIL("expected an IoError");
  } catch (const IoError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("X2.csv") != std::string::npos);
    CHECK(msg.find("3 dims") != std::string::npos);
    CHECK(msg.find("has 2") != std::string::npos);
  }
  CHECK_THROWS_AS(load_set(dir / "nowhere"), IoError);
  {
    std::ofstream f(dir / "X2.csv", std::ios::trunc);
    f << "d0,d1\n1,abc\n";
  }
  CHECK_THROWS_WITH_AS(load_set(dir), doctest::Contains("X2.csv"), IoError);
}

TEST_CASE("csv values survive text round trip") {
  const fs::path dir = temp_dir("csv");
  Matrix m(3, 2, {0.1, 1.0 / 3.0, -2.5e-300, 123456789.123456789, std::nextafter(1.0, 2.0), -0.0});
  write_csv(dir / "m.csv", {"a", "b"}, m);
  const CsvTable t = read_csv(dir / "m.csv");
  CHECK(t.header == std::vector<std::string>{"a", "b"});
  CHECK(t.values == m);
  CHECK(format_double(0.1) == "0.1");
}

}
