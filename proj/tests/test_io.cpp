#include <filesystem>

#include "doctest.h"
#include "dtr/io.hpp"

using namespace dtr;

TEST_CASE("doubles render shortest and round-trip") {
  CHECK(format_double(0.5) == "0.5");
  CHECK(format_double(1.0 / 3.0) == "0.3333333333333333");
  for (double v : {0.1, 1e-7, 123456.789, -2.5e17, 0.30000000000000004})
    CHECK(std::stod(format_double(v)) == v);
}

TEST_CASE("number lists, with and without arithmetic continuation") {
  CHECK(parse_number_list("1,2,3") == std::vector<double>{1, 2, 3});
  const auto tau = parse_number_list("0,-0.1,...,-0.5");
  REQUIRE(tau.size() == 6);
  CHECK(tau[1] == doctest::Approx(-0.1));
  CHECK(tau.back() == doctest::Approx(-0.5));
  const auto up = parse_number_list("0.4,0.5,...,0.9");
  REQUIRE(up.size() == 6);
  CHECK(up.back() == doctest::Approx(0.9));
  CHECK_THROWS_AS(parse_number_list("1,...,5"), ParseError);
  CHECK_THROWS_AS(parse_number_list("1,x"), ParseError);
}

TEST_CASE("grid specs expand inclusively") {
  const auto g = parse_grid_spec("0:10:2.5");
  CHECK(g == std::vector<double>{0, 2.5, 5, 7.5, 10});
  CHECK_THROWS_AS(parse_grid_spec("5:1:1"), ParseError);
}

TEST_CASE("key-value files: comments, repeats, typed getters") {
  const auto kv = KeyValueFile::from_string(
      "# settings\n"
      "M = 100\n"
      "rate = 0.5 # inline comment\n"
      "covariate = a\n"
      "covariate = b\n"
      "flag = true\n");
  CHECK(kv.get_int("M", 0) == 100);
  CHECK(kv.get_double("rate", 0) == 0.5);
  CHECK(kv.get_bool("flag", false));
  CHECK(kv.get_all("covariate") == std::vector<std::string>{"a", "b"});
  CHECK(kv.get_or("missing", "d") == "d");
  CHECK_THROWS_AS(kv.get("missing"), ConfigError);
  CHECK_THROWS_AS(KeyValueFile::from_string("novalue\n"), ParseError);
}

TEST_CASE("type-7 quantiles") {
  std::vector<double> x = {0.2, 0.4, 0.6, 0.8};
  CHECK(quantile(x, 0.25) == doctest::Approx(0.35));
  CHECK(quantile(x, 0.75) == doctest::Approx(0.65));
  CHECK(quantile(x, 0.0) == 0.2);
  CHECK(quantile(x, 1.0) == 0.8);
}

TEST_CASE("atomic writes leave no temp files") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path();
  const auto path = dir / "dtr_io_test.txt";
  write_file_atomic(path, "hello\n");
  CHECK(read_file(path) == "hello\n");
  CHECK_FALSE(fs::exists(path.string() + ".tmp"));
  write_file_atomic(path, "replaced\n");
  CHECK(read_file(path) == "replaced\n");
  fs::remove(path);
}

TEST_CASE("content hashing is stable") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") != fnv1a64("b"));
}
