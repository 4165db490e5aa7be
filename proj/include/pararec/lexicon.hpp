#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "pararec/tensor.hpp"

namespace pararec {

// Splits the alphabet into word and non-word characters. The CTC blank
// belongs to neither set.
struct CharClassing {
  std::set<char32_t> word_chars;
  std::set<char32_t> nonword_chars;

  bool is_word_char(char32_t c) const { return word_chars.count(c) > 0; }
  // Letters are word characters, everything else (digits, punctuation,
  // space) is non-word.
  static CharClassing alphabetic(const std::u32string& alphabet);
};

// Character trie over the lexicon; every path to a terminal spells a word.
class PrefixTree {
 public:
  PrefixTree() : nodes_(1) {}

  void insert(const std::u32string& word);
  bool has_prefix(const std::u32string& prefix) const;
  bool has_word(const std::u32string& word) const;
  std::vector<char32_t> next_chars(const std::u32string& prefix) const;
  std::size_t word_count() const { return words_; }

  // Node-level access used by the beam search.
  static constexpr int kRoot = 0;
  int child(int node, char32_t c) const;  // -1 when absent
  bool terminal(int node) const { return nodes_[static_cast<size_t>(node)].terminal; }
  const std::map<char32_t, int>& children(int node) const {
    return nodes_[static_cast<size_t>(node)].children;
  }

 private:
  struct Node {
    std::map<char32_t, int> children;
    bool terminal = false;
  };
  int walk(const std::u32string& s) const;
  std::vector<Node> nodes_;
  std::size_t words_ = 0;
};

// Word unigram/bigram counts with add-one smoothing.
class NgramModel {
 public:
  void add_sentence(const std::vector<std::u32string>& words);

  int unigram_count(const std::u32string& w) const;
  int bigram_count(const std::u32string& prev, const std::u32string& w) const;
  std::size_t vocab_size() const { return unigram_.size(); }
  long total_tokens() const { return total_; }

  real log_unigram(const std::u32string& w) const;
  real log_bigram(const std::u32string& prev, const std::u32string& w) const;
  // Unigram for a sentence-initial word, bigram afterwards.
  real log_word(const std::u32string& prev, const std::u32string& w) const;

 private:
  std::map<std::u32string, int> unigram_;
  std::map<std::pair<std::u32string, std::u32string>, int> bigram_;
  long total_ = 0;
};

struct Lexicon {
  PrefixTree tree;
  NgramModel lm;
  CharClassing classing;
};

// Builds the prefix tree and bigram model from corpus text: words are the
// maximal word-character runs of each line.
Lexicon build_lexicon(const std::vector<std::string>& corpus_lines,
                      CharClassing classing);

enum class WbsMode { words, ngrams };

struct WbsOptions {
  WbsMode mode = WbsMode::ngrams;
  int beam_width = 50;
};

struct WbsResult {
  std::u32string text;
  // True when no beam ended in a lexicon-consistent state and the empty
  // fallback was returned.
  bool no_viable_beam = false;
};

// Lexicon-constrained CTC beam search over a [T,N+1] posterior matrix.
// alphabet maps label id -> character; blank is the last class. Word-state
// beams extend only along the prefix tree; a run of word characters can
// only close on a complete lexicon word; non-word characters are always
// available between words. In NGrams mode completed words are rescored with
// the smoothed bigram model. Ties break lexicographically on the text.
//
// mass_trace, when given, receives log(sum of retained beam probability)
// after each frame; accumulating log-probabilities make it non-increasing.
// (The per-step maximum is not monotone: merging can concentrate mass.)
WbsResult word_beam_search(const Tensor& probs, const std::u32string& alphabet,
                           const Lexicon& lexicon, const WbsOptions& options,
                           std::vector<real>* mass_trace = nullptr);

// Per-line search results joined with newlines, in attention order.
std::string decode_paragraph(const std::vector<Tensor>& line_probs,
                             const std::u32string& alphabet,
                             const Lexicon& lexicon, const WbsOptions& options);

}  // namespace pararec
