#include <random>
#include <stdexcept>

#include "doctest.h"
#include "pararec/metrics.hpp"

using namespace pararec;

namespace {

// Full DP table, kept deliberately separate from the production
// implementation (which uses two rolling rows).
std::size_t dp_oracle(const std::u32string& a, const std::u32string& b) {
  std::vector<std::vector<std::size_t>> d(a.size() + 1,
                                          std::vector<std::size_t>(b.size() + 1));
  for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = i;
  for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i)
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      d[i][j] = std::min(std::min(d[i - 1][j] + 1, d[i][j - 1] + 1), sub);
    }
  return d[a.size()][b.size()];
}

std::u32string random_string(std::mt19937_64& rng, int max_len) {
  std::uniform_int_distribution<int> len(0, max_len);
  std::uniform_int_distribution<int> ch(0, 3);
  std::u32string s;
  const int n = len(rng);
  for (int i = 0; i < n; ++i) s.push_back(U'a' + static_cast<char32_t>(ch(rng)));
  return s;
}

}  // namespace

TEST_CASE("levenshtein basics") {
  CHECK(levenshtein(U"abc", U"abc") == 0);
  CHECK(levenshtein(U"", U"abc") == 3);
  CHECK(levenshtein(U"kitten", U"sitting") == dp_oracle(U"kitten", U"sitting"));
  CHECK(levenshtein(U"kitten", U"sitting") == 3);
}

TEST_CASE("levenshtein matches the DP oracle and is a metric") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 3000; ++trial) {
    const std::u32string a = random_string(rng, 12);
    const std::u32string b = random_string(rng, 12);
    const std::u32string c = random_string(rng, 12);
    const std::size_t ab = levenshtein(a, b);
    CHECK(ab == dp_oracle(a, b));
    CHECK(levenshtein(a, a) == 0);
    CHECK(ab == levenshtein(b, a));
    CHECK(levenshtein(a, c) <= ab + levenshtein(b, c));
  }
}

TEST_CASE("pooled corpus cer") {
  CHECK(corpus_cer({"ab", "cd"}, {"ab", "cd"}) == doctest::Approx(0.0));
  CHECK(corpus_cer({"ab", "cd"}, {"ab", "ce"}) == doctest::Approx(0.25));
}

TEST_CASE("pooling is not a mean of per-line rates") {
  // refs {a, bbb} vs hyps {b, bbb}: pooled 1/4, mean-of-lines would be 1/2.
  CHECK(corpus_cer({"a", "bbb"}, {"b", "bbb"}) == doctest::Approx(0.25));
}

TEST_CASE("wer basics") {
  CHECK(corpus_wer({"to be or"}, {"to be or"}) == doctest::Approx(0.0));
  CHECK(corpus_wer({"to be or"}, {"to bee or"}) == doctest::Approx(1.0 / 3));
  CHECK(corpus_wer({"a"}, {"a b c"}) == doctest::Approx(2.0));
}

TEST_CASE("newlines count as whitespace for word scoring") {
  CHECK(corpus_wer({"to be\nor not"}, {"to be or not"}) == doctest::Approx(0.0));
  // ...but they are characters for cer.
  CHECK(corpus_cer({"ab\ncd"}, {"ab cd"}) == doctest::Approx(0.2));
}

TEST_CASE("error handling") {
  CHECK_THROWS_AS(corpus_cer({}, {}), std::invalid_argument);
  CHECK_THROWS_AS(corpus_cer({"a", "b"}, {"a"}), std::invalid_argument);
  CHECK_THROWS_AS(corpus_cer({""}, {""}), std::invalid_argument);
}

TEST_CASE("report is order invariant and totals add up") {
  const std::vector<std::string> refs = {"abc", "de", "fgh"};
  const std::vector<std::string> hyps = {"abd", "de", "fh"};
  const EvalReport fwd = evaluate_corpus(refs, hyps);
  const EvalReport rev = evaluate_corpus({refs[2], refs[1], refs[0]},
                                         {hyps[2], hyps[1], hyps[0]});
  CHECK(fwd.cer() == doctest::Approx(rev.cer()));
  CHECK(fwd.wer() == doctest::Approx(rev.wer()));
  std::uint64_t edits = 0, total = 0;
  for (const auto& s : fwd.samples) {
    edits += s.char_edits;
    total += s.char_len;
  }
  CHECK(edits == fwd.char_edits);
  CHECK(total == fwd.char_total);
}

TEST_CASE("report renders a table and key=value block") {
  const EvalReport r = evaluate_corpus({"ab"}, {"ab"});
  CHECK(r.table().find("pooled") != std::string::npos);
  const std::string kv = r.key_values("greedy_");
  CHECK(kv.find("greedy_cer=0") != std::string::npos);
  CHECK(kv.find("greedy_wer=0") != std::string::npos);
}

TEST_CASE("unicode scalar values are the character unit") {
  // One two-byte codepoint substituted: 1 edit over 2 reference chars.
  CHECK(corpus_cer({"éa"}, {"ea"}) == doctest::Approx(0.5));
}
