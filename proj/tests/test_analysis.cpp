#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "ltree/analysis.hpp"
#include "ltree/rng.hpp"
#include "ltree/tree.hpp"

using ltree::BinaryTree;
using ltree::Branch;
using ltree::ParsedSentence;
using ltree::Rng;
using ltree::TreeFile;
using ltree::branching_tree;
using ltree::catalan;
using ltree::corpus_f1;
using ltree::random_tree;
using ltree::to_bracketed;
using ltree::unlabelled_f1;

namespace {

std::filesystem::path scratch_dir() {
  auto dir = std::filesystem::temp_directory_path() / "ltree_analysis_test";
  std::filesystem::create_directories(dir);
  return dir;
}

TreeFile random_file(const std::vector<std::size_t>& lens, Rng& rng) {
  TreeFile f;
  for (std::size_t n : lens) f.push_back({random_tree(n, rng), {}});
  return f;
}

// P(a fixed span of width w is a constituent of a uniform random tree over n)
double span_prob(std::size_t n, std::size_t w) {
  return catalan(w - 1) * catalan(n - w) / catalan(n - 1);
}

}  // namespace

TEST_CASE("catalan numbers") {
  const double want[] = {1, 1, 2, 5, 14, 42, 132, 429};
  for (std::size_t k = 0; k < 8; ++k) CHECK(catalan(k) == want[k]);
  CHECK(catalan(12) == 208012.0);
}

TEST_CASE("branching trees have the spec shapes") {
  CHECK(to_bracketed(branching_tree(Branch::kLeft, 3)) == "( ( 0 1 ) 2 )");
  CHECK(to_bracketed(branching_tree(Branch::kRight, 3)) == "( 0 ( 1 2 ) )");
  CHECK(to_bracketed(branching_tree(Branch::kLeft, 1)) == "0");
  CHECK(to_bracketed(branching_tree(Branch::kRight, 2)) == "( 0 1 )");

  auto left6 = ltree::tree_spans(branching_tree(Branch::kLeft, 6));
  auto right6 = ltree::tree_spans(branching_tree(Branch::kRight, 6));
  std::vector<std::pair<std::int32_t, std::int32_t>> want_left, want_right;
  for (std::int32_t k = 2; k <= 6; ++k) want_left.emplace_back(0, k);
  for (std::int32_t k = 0; k <= 4; ++k) want_right.emplace_back(k, 6);
  CHECK(left6 == want_left);
  CHECK(right6 == want_right);

  CHECK_THROWS_AS(branching_tree(Branch::kLeft, 0), std::invalid_argument);
}

TEST_CASE("left vs right F1 follows 1/(n-1)") {
  CHECK(unlabelled_f1(branching_tree(Branch::kLeft, 3),
                      branching_tree(Branch::kRight, 3)) == 0.5);
  for (std::size_t n = 2; n <= 12; ++n) {
    double f1 = unlabelled_f1(branching_tree(Branch::kLeft, n),
                              branching_tree(Branch::kRight, n));
    CHECK(std::abs(f1 - 1.0 / static_cast<double>(n - 1)) < 1e-12);
  }
}

TEST_CASE("unlabelled F1 basics") {
  Rng rng(77);
  for (int rep = 0; rep < 10; ++rep) {
    BinaryTree a = random_tree(9, rng);
    BinaryTree b = random_tree(9, rng);
    CHECK(unlabelled_f1(a, a) == 1.0);
    CHECK(unlabelled_f1(a, b) == unlabelled_f1(b, a));
    CHECK(unlabelled_f1(a, b) >= 1.0 / 8.0);  // root span always shared
    CHECK(unlabelled_f1(a, b) <= 1.0);
  }
  CHECK(unlabelled_f1(random_tree(1, rng), random_tree(1, rng)) == 1.0);
  CHECK(unlabelled_f1(random_tree(2, rng), random_tree(2, rng)) == 1.0);
  CHECK_THROWS_WITH(unlabelled_f1(random_tree(3, rng), random_tree(4, rng)),
                    Catch::Matchers::ContainsSubstring("leaf counts differ"));
}

TEST_CASE("random_tree is uniform at n=3 and n=4") {
  Rng rng(5);
  std::map<std::string, int> count3;
  for (int i = 0; i < 10000; ++i) count3[to_bracketed(random_tree(3, rng))]++;
  REQUIRE(count3.size() == 2);
  for (const auto& [shape, c] : count3)
    CHECK(std::abs(c / 10000.0 - 0.5) < 0.02);

  std::map<std::string, int> count4;
  for (int i = 0; i < 100000; ++i) count4[to_bracketed(random_tree(4, rng))]++;
  REQUIRE(count4.size() == 5);
  for (const auto& [shape, c] : count4)
    CHECK(std::abs(c / 100000.0 - 0.2) < 0.02);
}

TEST_CASE("random_tree covers all 42 shapes at n=6") {
  Rng rng(11);
  std::map<std::string, int> counts;
  for (int i = 0; i < 42000; ++i) counts[to_bracketed(random_tree(6, rng))]++;
  REQUIRE(counts.size() == 42);
  for (const auto& [shape, c] : counts) CHECK(std::abs(c - 1000) < 200);

  CHECK(to_bracketed(random_tree(2, rng)) == "( 0 1 )");
  CHECK(to_bracketed(random_tree(1, rng)) == "0");
  CHECK_THROWS_AS(random_tree(0, rng), std::invalid_argument);
}

TEST_CASE("monte carlo matches the analytic span-probability tables") {
  // E[F1(rand, rand)] = sum over spans P(s)^2 / (n-1)
  // E[F1(rand, left)] = sum over widths P(w) / (n-1)
  const std::size_t n = 8;
  double err = 0.0, erl = 0.0;
  for (std::size_t w = 2; w <= n; ++w) {
    err += static_cast<double>(n - w + 1) * span_prob(n, w) * span_prob(n, w);
    erl += span_prob(n, w);
  }
  err /= static_cast<double>(n - 1);
  erl /= static_cast<double>(n - 1);

  Rng rng(123);
  BinaryTree left = branching_tree(Branch::kLeft, n);
  double mc_rr = 0.0, mc_rl = 0.0;
  const int reps = 20000;
  for (int i = 0; i < reps; ++i) {
    BinaryTree a = random_tree(n, rng);
    BinaryTree b = random_tree(n, rng);
    mc_rr += unlabelled_f1(a, b);
    mc_rl += unlabelled_f1(a, left);
  }
  CHECK(std::abs(mc_rr / reps - err) < 0.01);
  CHECK(std::abs(mc_rl / reps - erl) < 0.01);
}

TEST_CASE("corpus, self, and inter-model F1") {
  Rng rng(9);
  const std::vector<std::size_t> lens = {5, 1, 8, 2, 6};
  TreeFile a = random_file(lens, rng);
  TreeFile b = random_file(lens, rng);
  TreeFile c = random_file(lens, rng);

  CHECK(corpus_f1(a, a) == 100.0);
  CHECK(corpus_f1(a, b) == corpus_f1(b, a));
  CHECK(corpus_f1(a, b) <= 100.0);

  const TreeFile abc[] = {a, b, c};
  const TreeFile bca[] = {b, c, a};
  double self = ltree::self_f1(abc);
  CHECK(self == ltree::self_f1(bca));
  double expect =
      (corpus_f1(a, b) + corpus_f1(a, c) + corpus_f1(b, c)) / 3.0;
  CHECK(self == Catch::Approx(expect).epsilon(1e-12));
  const TreeFile aa[] = {a, a};
  CHECK(ltree::self_f1(aa) == 100.0);
  const TreeFile just_a[] = {a};
  CHECK_THROWS_AS(ltree::self_f1(just_a), std::invalid_argument);

  const TreeFile ga[] = {a, b};
  const TreeFile gb[] = {c};
  double inter = ltree::inter_model_f1(ga, gb);
  double lo = std::min(corpus_f1(a, c), corpus_f1(b, c));
  double hi = std::max(corpus_f1(a, c), corpus_f1(b, c));
  CHECK(inter >= lo);
  CHECK(inter <= hi);
  CHECK(ltree::inter_model_f1(just_a, just_a) == 100.0);
  CHECK_THROWS_AS(ltree::inter_model_f1(ga, {}), std::invalid_argument);
}

TEST_CASE("corpus F1 alignment errors") {
  Rng rng(13);
  TreeFile a = random_file({4, 5}, rng);
  TreeFile b = random_file({4, 5, 6}, rng);
  CHECK_THROWS_WITH(corpus_f1(a, b),
                    Catch::Matchers::ContainsSubstring("tree counts differ"));
  TreeFile d = random_file({4, 6}, rng);
  CHECK_THROWS_WITH(corpus_f1(a, d),
                    Catch::Matchers::ContainsSubstring("at index 1"));
  CHECK_THROWS_AS(corpus_f1({}, {}), std::invalid_argument);
}

TEST_CASE("short-sentence exclusion is config-exposed") {
  Rng rng(21);
  // n=2 sentences always agree; excluding them changes the average.
  TreeFile a, b;
  a.push_back({branching_tree(Branch::kLeft, 2), {}});
  b.push_back({branching_tree(Branch::kRight, 2), {}});
  a.push_back({branching_tree(Branch::kLeft, 7), {}});
  b.push_back({branching_tree(Branch::kRight, 7), {}});
  double with_short = corpus_f1(a, b, true);
  double without = corpus_f1(a, b, false);
  CHECK(with_short == Catch::Approx(100.0 * (1.0 + 1.0 / 6.0) / 2.0));
  CHECK(without == Catch::Approx(100.0 / 6.0));
  TreeFile shorts;
  shorts.push_back({branching_tree(Branch::kLeft, 2), {}});
  CHECK_THROWS_WITH(corpus_f1(shorts, shorts, false),
                    Catch::Matchers::ContainsSubstring("no sentences left"));
}

TEST_CASE("tree file round trip") {
  Rng rng(31);
  TreeFile file;
  file.push_back(ltree::parse_bracketed("( ( the dog ) barks )"));
  file.push_back({random_tree(6, rng), {}});
  file.push_back(ltree::parse_bracketed("hello"));

  auto path = (scratch_dir() / "trees.txt").string();
  ltree::write_tree_file(path, file);
  TreeFile back = ltree::read_tree_file(path);
  REQUIRE(back.size() == file.size());
  for (std::size_t i = 0; i < file.size(); ++i) {
    CHECK(ltree::tree_spans(back[i].tree) == ltree::tree_spans(file[i].tree));
    CHECK(unlabelled_f1(back[i].tree, file[i].tree) == 1.0);
  }
  CHECK(back[0].tokens == std::vector<std::string>{"the", "dog", "barks"});
  CHECK(back[2].tokens == std::vector<std::string>{"hello"});

  CHECK_THROWS_AS(ltree::read_tree_file((scratch_dir() / "nope.txt").string()),
                  std::runtime_error);
  auto bad = (scratch_dir() / "bad.txt").string();
  {
    std::ofstream out(bad);
    out << "( a b )\n\n( c d )\n";
  }
  CHECK_THROWS_WITH(ltree::read_tree_file(bad),
                    Catch::Matchers::ContainsSubstring(":2: empty line"));
  auto bad2 = (scratch_dir() / "bad2.txt").string();
  {
    std::ofstream out(bad2);
    out << "( a b )\n( c d e )\n";
  }
  CHECK_THROWS_WITH(ltree::read_tree_file(bad2),
                    Catch::Matchers::ContainsSubstring(":2:"));
}

TEST_CASE("report over identical files") {
  Rng rng(41);
  TreeFile f = random_file({5, 3, 9, 1, 6, 2}, rng);
  std::vector<TreeFile> five(5, f);
  TreeFile gold = random_file({5, 3, 9, 1, 6, 2}, rng);

  ltree::Report r = ltree::make_report(five, &gold);
  CHECK(r.self == 100.0);
  CHECK(r.instances == 5);
  CHECK(r.sentences == 6);
  CHECK(r.left.sigma == 0.0);
  CHECK(r.right.sigma == 0.0);
  CHECK(r.gold.sigma == 0.0);
  CHECK(r.left.mean == r.left.max);
  CHECK(r.right.mean == r.right.max);
  CHECK(r.has_gold);
  CHECK(r.gold.mean == corpus_f1(f, gold));

  std::string text = ltree::format_report(r, "toy");
  CHECK(text.find("Self-F1") != std::string::npos);
  CHECK(text.find("100.0") != std::string::npos);
  CHECK(text.find("toy") != std::string::npos);
  CHECK(text.find("Provided Parses") != std::string::npos);

  auto j = ltree::report_to_json(r);
  CHECK(j["self_f1"].get<double>() == 100.0);
  CHECK(j["left_branching"]["sigma"].get<double>() == 0.0);
  CHECK(j.contains("gold"));
}

TEST_CASE("report over distinct instances") {
  Rng rng(51);
  const std::vector<std::size_t> lens = {7, 4, 10, 5, 8};
  std::vector<TreeFile> files;
  for (int i = 0; i < 4; ++i) files.push_back(random_file(lens, rng));

  ltree::Report r = ltree::make_report(files);
  CHECK_FALSE(r.has_gold);
  CHECK(r.left.mean <= r.left.max);
  CHECK(r.right.mean <= r.right.max);
  CHECK(r.left.sigma >= 0.0);
  CHECK(r.self > 0.0);
  CHECK(r.self < 100.0);

  ltree::Report one = ltree::make_report({files.data(), 1});
  CHECK(std::isnan(one.self));
  CHECK(ltree::report_to_json(one)["self_f1"].is_null());
  CHECK(ltree::format_report(one).find("---") != std::string::npos);

  CHECK_THROWS_AS(ltree::make_report({}), std::invalid_argument);
}
