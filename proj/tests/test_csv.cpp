#include <sstream>

#include "strata/csv.hpp"
#include "support.hpp"

using namespace strata;

TEST_CASE("csv parses quoted fields") {
  const auto t = csv::parse("a,b,c\n1,\"x, y\",\"he said \"\"hi\"\"\"\n2,\"line\nbreak\",\n");
  REQUIRE(t.header == std::vector<std::string>{"a", "b", "c"});
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[0][1] == "x, y");
  CHECK(t.rows[0][2] == "he said \"hi\"");
  CHECK(t.rows[1][1] == "line\nbreak");
  CHECK(t.rows[1][2] == "");
  CHECK(t.column("c") == 2);
  CHECK_FALSE(t.find_column("z").has_value());
  CHECK_KIND(t.column("z"), "MissingColumn");
}

TEST_CASE("csv write then parse round-trips") {
  csv::Table t;
  t.header = {"k", "text"};
  t.rows = {{"1", "plain"}, {"2", "comma, quote \" and\nnewline"}, {"3", ""}};
  std::ostringstream os;
  for (const auto& r : std::vector<std::vector<std::string>>{t.header}) csv::write_row(os, r);
  for (const auto& r : t.rows) csv::write_row(os, r);
  const auto back = csv::parse(os.str());
  CHECK(back.header == t.header);
  CHECK(back.rows == t.rows);
}

TEST_CASE("numbers render round-trippably") {
  for (double v : {0.0, 1.0, -2.5, 0.1, 1.0 / 3.0, 1e-300, 123456789.125}) {
    const auto s = csv::format_number(v);
    CHECK(csv::parse_number(s).value() == v);
  }
  CHECK(csv::format_number(3.0) == "3");
  CHECK_FALSE(csv::parse_number("").has_value());
  CHECK_FALSE(csv::parse_number("abc").has_value());
  CHECK_FALSE(csv::parse_number("1.5x").has_value());
}
