#include "test_util.hpp"

#include "verify/formal_code.hpp"

#include <gtest/gtest.h>

using namespace verify;
namespace formal = verify::formal;
using namespace verify::formal;

TEST(Markers, Corpus) {
  json cases = json::parse(read_file(testutil::data("markers.json")));
  ASSERT_GE(cases.size(), 15u);
  for (auto& c : cases) {
    std::string code = c["code"];
    EXPECT_EQ(formal::contains_incomplete_marker(code), c["incomplete"].get<bool>()) << code;
  }
}

TEST(Markers, CustomList) {
  EXPECT_FALSE(formal::contains_incomplete_marker("theorem t : 1 = 1 := by native_decide"));
  EXPECT_TRUE(formal::contains_incomplete_marker("theorem t : 1 = 1 := by native_decide", {"native_decide"}));
}

TEST(Tokenize, CommentsAndStrings) {
  auto toks = tokenize("theorem t : \"a -- b\" = x -- tail\n/- block -/ y", true);
  std::vector<Token::Kind> kinds;
  for (auto& t : toks) kinds.push_back(t.kind);
  EXPECT_EQ(std::count(kinds.begin(), kinds.end(), Token::Kind::Comment), 2);
  EXPECT_EQ(std::count(kinds.begin(), kinds.end(), Token::Kind::String), 1);
  auto plain = tokenize("x₁ + h₀ = 3.50");
  ASSERT_GE(plain.size(), 5u);
  EXPECT_EQ(plain[0].text, "x₁");
  EXPECT_EQ(plain[2].text, "h₀");
}

TEST(Declarations, HeaderAndRename) {
  std::string code = "import Mathlib\n\ntheorem foo (x : ℤ) (h₀ : x + 1 = 4) : x = 3 := by\n  omega\n";
  auto d = first_declaration(code);
  ASSERT_TRUE(d);
  EXPECT_EQ(d->name, "foo");
  EXPECT_EQ(d->keyword, "theorem");
  ASSERT_TRUE(d->body);
  EXPECT_EQ(statement_header(code, "lemma_1").value(), "theorem lemma_1 (x : ℤ) (h₀ : x + 1 = 4) : x = 3");
  EXPECT_EQ(statement_header("example : 2 = 2 := rfl", "main_goal").value(), "theorem main_goal : 2 = 2");
  EXPECT_FALSE(statement_header("-- nothing here", "x").has_value());
}

TEST(Declarations, AssignInsideBindersNotTopLevel) {
  auto d = first_declaration("theorem t (f : ℕ → ℕ) (hf : ∀ n, f n = (let y := n; y)) : f 0 = 0 := by simp [hf]");
  ASSERT_TRUE(d);
  EXPECT_EQ(d->header, "theorem t (f : ℕ → ℕ) (hf : ∀ n, f n = (let y := n; y)) : f 0 = 0");
}

TEST(Declarations, Multiple) {
  auto ds = declarations("lemma a : 1 = 1 := rfl\n-- theorem hidden : 2 = 2\ntheorem b : 2 = 2 := rfl\n");
  ASSERT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds[0].name, "a");
  EXPECT_EQ(ds[1].name, "b");
}

TEST(ProofBody, Shapes) {
  EXPECT_EQ(proof_body("theorem x : 1 = 1 := by\n  rfl"), "by\n  rfl");
  EXPECT_EQ(proof_body("by\n  omega"), "by\n  omega");
  EXPECT_EQ(trim(proof_body("norm_num")), "by\n  norm_num");
}

TEST(Literals, Normalized) {
  auto l = numeric_literals("theorem t (x : ℝ) (h : x = 3.50) : 2 * x = 007 := by sorry");
  EXPECT_NE(std::find(l.begin(), l.end(), "3.5"), l.end());
  EXPECT_NE(std::find(l.begin(), l.end(), "7"), l.end());
  EXPECT_NE(std::find(l.begin(), l.end(), "2"), l.end());
  auto t = numeric_literals_in_text("x equals 3.50 and y is 12");
  EXPECT_EQ(t, (std::vector<std::string>{"3.5", "12"}));
}

TEST(Binders, Types) {
  std::string h = "theorem t (x y : ℤ) (z : ℝ) {n : ℕ} (h : x = y) : z = z";
  EXPECT_EQ(binder_types(h, "x"), std::vector<std::string>{"ℤ"});
  EXPECT_EQ(binder_types(h, "z"), std::vector<std::string>{"ℝ"});
  EXPECT_EQ(binder_types(h, "n"), std::vector<std::string>{"ℕ"});
  EXPECT_TRUE(binder_types(h, "w").empty());
  EXPECT_TRUE(mentions_identifier(h, "y"));
  EXPECT_FALSE(mentions_identifier(h, "t2"));
}
