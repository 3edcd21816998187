#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "tokflow/checkpoint.hpp"
#include "tokflow/report.hpp"

using namespace tokflow;

namespace {

std::string tmp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("fdck round trip with named tensors") {
  std::string path = tmp_path("tokflow_test.fdck");
  Tensor a = constant({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b = constant({4}, {0.5, -0.5, 1.5, -1.5});
  write_fdck(path, {{"enc.w", a}, {"enc.b", b}});
  NamedTensors back = read_fdck(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].first == "enc.w");
  CHECK(back[0].second->shape == std::vector<size_t>{2, 3});
  CHECK(back[0].second->val == a->val);
  CHECK(back[1].second->val == b->val);
  std::remove(path.c_str());
}

TEST_CASE("fdck bad magic and truncation raise format errors") {
  std::string path = tmp_path("tokflow_bad.fdck");
  {
    std::ofstream f(path, std::ios::binary);
    f.write("XXXX\x01\x00\x00\x00\x00\x00\x00\x00", 12);
  }
  CHECK_THROWS_AS(read_fdck(path), FormatError);

  Tensor a = constant({2}, {1, 2});
  write_fdck(path, {{"w", a}});
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 3);
  CHECK_THROWS_AS(read_fdck(path), FormatError);
  std::remove(path.c_str());
}

TEST_CASE("load_into matches by name and validates shapes") {
  Tensor src = constant({2, 2}, {9, 8, 7, 6});
  Tensor dst = param({2, 2}, {0, 0, 0, 0});
  load_into({{"w", src}}, {{"w", dst}});
  CHECK(dst->val == src->val);

  Tensor wrong = param({4}, {0, 0, 0, 0});
  CHECK_THROWS(load_into({{"w", src}}, {{"w", wrong}}));
  CHECK_THROWS(load_into({{"other", src}}, {{"w", dst}}));
}

TEST_CASE("csv output carries provenance and parses back") {
  Provenance prov{"tokflow test --seed 5", 5, hash_config_text("k=v")};
  std::string csv = csv_table(prov, {"a", "b"}, {{"1", "2.5"}, {"3", "-4"}});
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  CHECK(line.rfind("# ", 0) == 0);
  CHECK(line.find("seed=5") != std::string::npos);
  std::getline(in, line);
  CHECK(line == "a,b");
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  REQUIRE(rows.size() == 2);
  CHECK(rows[0] == std::vector<std::string>{"1", "2.5"});
  CHECK(rows[1] == std::vector<std::string>{"3", "-4"});
}

TEST_CASE("atomic write leaves the payload and no temp file") {
  std::string path = tmp_path("tokflow_atomic.txt");
  write_file_atomic(path, "hello\n");
  std::ifstream f(path);
  std::stringstream ss;
  ss << f.rdbuf();
  CHECK(ss.str() == "hello\n");
  CHECK_FALSE(std::filesystem::exists(path + ".tmp"));
  // overwrite is atomic too
  write_file_atomic(path, "second\n");
  std::ifstream g(path);
  std::stringstream ss2;
  ss2 << g.rdbuf();
  CHECK(ss2.str() == "second\n");
  std::remove(path.c_str());
}

namespace {

// Tiny XML well-formedness check: every <tag ...> has a matching </tag> or is
// self-closing; declarations and comments are skipped.
bool xml_well_formed(const std::string& s) {
  std::vector<std::string> stack;
  size_t i = 0;
  while ((i = s.find('<', i)) != std::string::npos) {
    size_t end = s.find('>', i);
    if (end == std::string::npos) return false;
    std::string tag = s.substr(i + 1, end - i - 1);
    i = end + 1;
    if (tag.empty()) return false;
    if (tag[0] == '?' || tag[0] == '!') continue;
    if (tag[0] == '/') {
      std::string name = tag.substr(1);
      if (stack.empty() || stack.back() != name) return false;
      stack.pop_back();
      continue;
    }
    if (tag.back() == '/') continue;  // self-closing
    std::string name = tag.substr(0, tag.find_first_of(" \t\n"));
    stack.push_back(name);
  }
  return stack.empty();
}

}  // namespace

TEST_CASE("svg heatmap and line chart are well-formed and self-contained") {
  Provenance prov{"tokflow ablate", 7, 1};
  std::string heat = svg_heatmap(prov, 2, 3, {0, 1, 2, 3, 4, 5}, "demo");
  CHECK(xml_well_formed(heat));
  CHECK(heat.find("<svg") != std::string::npos);
  CHECK(heat.find("seed=7") != std::string::npos);
  CHECK(heat.find("rect") != std::string::npos);

  std::string chart = svg_line_chart(prov, {0, 1, 2}, {{1.0, 0.5, 0.25}}, {"curve"},
                                     "demo chart");
  CHECK(xml_well_formed(chart));
  CHECK(chart.find("polyline") != std::string::npos);
  CHECK(chart.find("curve") != std::string::npos);

  CHECK_THROWS_AS(svg_heatmap(prov, 2, 2, {1.0}, "bad"), DimError);
  CHECK_THROWS_AS(svg_line_chart(prov, {0, 1}, {{1.0}}, {"x"}, "bad"), DimError);
}

TEST_CASE("config hash is stable and content sensitive") {
  CHECK(hash_config_text("a=1\n") == hash_config_text("a=1\n"));
  CHECK(hash_config_text("a=1\n") != hash_config_text("a=2\n"));
}

TEST_CASE("format_double round-trips doubles through text") {
  for (double x : {0.1, 1.0 / 3.0, 123456.789, 1e-9, -2.5e17}) {
    double back = std::stod(format_double(x));
    CHECK(std::abs(back - x) <= 1e-11 * std::abs(x));
  }
}
