#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pararec/text.hpp"

namespace pararec {

// Minimum insert/delete/substitute count between two symbol sequences.
template <typename Seq>
std::size_t levenshtein_seq(const Seq& a, const Seq& b) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<std::size_t> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min(std::min(prev[j] + 1, cur[j - 1] + 1), sub);
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

std::size_t levenshtein(const std::u32string& a, const std::u32string& b);

struct SampleScore {
  std::string id;
  std::size_t char_edits = 0, char_len = 0;
  std::size_t word_edits = 0, word_len = 0;
};

// Pooled error rates: total edit operations over total reference length,
// not a mean of per-sample rates.
struct EvalReport {
  std::uint64_t char_edits = 0, char_total = 0;
  std::uint64_t word_edits = 0, word_total = 0;
  std::vector<SampleScore> samples;

  double cer() const { return static_cast<double>(char_edits) / static_cast<double>(char_total); }
  double wer() const { return static_cast<double>(word_edits) / static_cast<double>(word_total); }

  std::string table() const;
  // Machine-readable block, one key=value per line, keys prefixed.
  std::string key_values(const std::string& prefix) const;
};

// refs/hyps are UTF-8 texts; characters are Unicode scalar values and words
// are whitespace-separated tokens (newlines count as whitespace).
double corpus_cer(const std::vector<std::string>& refs,
                  const std::vector<std::string>& hyps);
double corpus_wer(const std::vector<std::string>& refs,
                  const std::vector<std::string>& hyps);
EvalReport evaluate_corpus(const std::vector<std::string>& refs,
                           const std::vector<std::string>& hyps,
                           const std::vector<std::string>& ids = {});

}  // namespace pararec
