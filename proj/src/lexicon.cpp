#include "pararec/lexicon.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "pararec/errors.hpp"
#include "pararec/text.hpp"

namespace pararec {

namespace {

constexpr real kNegInf = -std::numeric_limits<real>::infinity();

real lse2(real a, real b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const real m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

bool is_letter(char32_t c) {
  return (c >= U'a' && c <= U'z') || (c >= U'A' && c <= U'Z') ||
         (c >= 0xC0 && c <= 0x17F);  // accented Latin letters
}

}  // namespace

CharClassing CharClassing::alphabetic(const std::u32string& alphabet) {
  CharClassing cc;
  for (char32_t c : alphabet) {
    if (is_letter(c))
      cc.word_chars.insert(c);
    else
      cc.nonword_chars.insert(c);
  }
  return cc;
}

void PrefixTree::insert(const std::u32string& word) {
  if (word.empty()) return;
  int node = kRoot;
  for (char32_t c : word) {
    auto it = nodes_[static_cast<size_t>(node)].children.find(c);
    if (it == nodes_[static_cast<size_t>(node)].children.end()) {
      nodes_.push_back(Node());
      const int next = static_cast<int>(nodes_.size()) - 1;
      nodes_[static_cast<size_t>(node)].children[c] = next;
      node = next;
    } else {
      node = it->second;
    }
  }
  if (!nodes_[static_cast<size_t>(node)].terminal) {
    nodes_[static_cast<size_t>(node)].terminal = true;
    ++words_;
  }
}

int PrefixTree::walk(const std::u32string& s) const {
  int node = kRoot;
  for (char32_t c : s) {
    node = child(node, c);
    if (node < 0) return -1;
  }
  return node;
}

int PrefixTree::child(int node, char32_t c) const {
  const auto& ch = nodes_[static_cast<size_t>(node)].children;
  auto it = ch.find(c);
  return it == ch.end() ? -1 : it->second;
}

bool PrefixTree::has_prefix(const std::u32string& prefix) const {
  return walk(prefix) >= 0;
}

bool PrefixTree::has_word(const std::u32string& word) const {
  const int node = walk(word);
  return node >= 0 && nodes_[static_cast<size_t>(node)].terminal;
}

std::vector<char32_t> PrefixTree::next_chars(const std::u32string& prefix) const {
  std::vector<char32_t> out;
  const int node = walk(prefix);
  if (node < 0) return out;
  for (const auto& [c, _] : nodes_[static_cast<size_t>(node)].children)
    out.push_back(c);
  return out;
}

void NgramModel::add_sentence(const std::vector<std::u32string>& words) {
  for (std::size_t i = 0; i < words.size(); ++i) {
    ++unigram_[words[i]];
    ++total_;
    if (i > 0) ++bigram_[{words[i - 1], words[i]}];
  }
}

int NgramModel::unigram_count(const std::u32string& w) const {
  auto it = unigram_.find(w);
  return it == unigram_.end() ? 0 : it->second;
}

int NgramModel::bigram_count(const std::u32string& prev,
                             const std::u32string& w) const {
  auto it = bigram_.find({prev, w});
  return it == bigram_.end() ? 0 : it->second;
}

real NgramModel::log_unigram(const std::u32string& w) const {
  const real num = static_cast<real>(unigram_count(w)) + 1;
  const real den = static_cast<real>(total_) + static_cast<real>(vocab_size());
  return std::log(num) - std::log(den);
}

real NgramModel::log_bigram(const std::u32string& prev,
                            const std::u32string& w) const {
  const real num = static_cast<real>(bigram_count(prev, w)) + 1;
  const real den = static_cast<real>(unigram_count(prev)) +
                   static_cast<real>(vocab_size());
  return std::log(num) - std::log(den);
}

real NgramModel::log_word(const std::u32string& prev,
                          const std::u32string& w) const {
  return prev.empty() ? log_unigram(w) : log_bigram(prev, w);
}

namespace {

std::vector<std::u32string> word_runs(const std::u32string& line,
                                      const CharClassing& cc) {
  std::vector<std::u32string> words;
  std::u32string cur;
  for (char32_t c : line) {
    if (cc.is_word_char(c)) {
      cur.push_back(c);
    } else if (!cur.empty()) {
      words.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) words.push_back(cur);
  return words;
}

}  // namespace

Lexicon build_lexicon(const std::vector<std::string>& corpus_lines,
                      CharClassing classing) {
  if (corpus_lines.empty())
    throw DataError("build_lexicon: corpus is empty");
  Lexicon lex;
  lex.classing = std::move(classing);
  for (const std::string& raw : corpus_lines) {
    const std::vector<std::u32string> words =
        word_runs(utf8_decode(raw), lex.classing);
    for (const auto& w : words) lex.tree.insert(w);
    lex.lm.add_sentence(words);
  }
  return lex;
}

namespace {

struct Beam {
  std::u32string text;
  std::u32string prefix;     // trailing word-char run
  std::u32string last_word;  // most recent completed word
  int node = PrefixTree::kRoot;
  real lp_blank = kNegInf;  // paths ending in blank
  real lp_char = kNegInf;   // paths ending in the last label
  real lm = 0;

  real log_total() const { return lse2(lp_blank, lp_char); }
  real sort_score() const { return log_total() + lm; }
};

}  // namespace

WbsResult word_beam_search(const Tensor& probs, const std::u32string& alphabet,
                           const Lexicon& lexicon, const WbsOptions& options,
                           std::vector<real>* mass_trace) {
  if (probs.rank() != 2 ||
      probs.dim(1) != static_cast<int>(alphabet.size()) + 1)
    throw std::invalid_argument(
        "word_beam_search: probs must be [T," +
        std::to_string(alphabet.size() + 1) + "], got " + probs.shape_str());
  if (options.beam_width < 1)
    throw std::invalid_argument("word_beam_search: beam width must be >= 1");
  const int frames = probs.dim(0);
  const int blank = static_cast<int>(alphabet.size());
  const bool use_lm = options.mode == WbsMode::ngrams;

  std::vector<Beam> beams(1);
  beams[0].lp_blank = 0;  // empty labelling, probability 1

  for (int t = 0; t < frames; ++t) {
    std::map<std::u32string, Beam> next;
    auto merge = [&](Beam&& b, real lp_blank_add, real lp_char_add) {
      auto [it, inserted] = next.try_emplace(b.text, std::move(b));
      Beam& dst = it->second;
      if (inserted) {
        dst.lp_blank = kNegInf;
        dst.lp_char = kNegInf;
      }
      dst.lp_blank = lse2(dst.lp_blank, lp_blank_add);
      dst.lp_char = lse2(dst.lp_char, lp_char_add);
    };

    for (const Beam& b : beams) {
      const real lp_total = b.log_total();
      // Keep the labelling: emit blank, or repeat the trailing label.
      {
        const real with_blank =
            lp_total + std::log(std::max(probs.at(t, blank), real(0)));
        real with_repeat = kNegInf;
        if (!b.text.empty()) {
          const int last = static_cast<int>(
              alphabet.find(b.text.back()));
          with_repeat = b.lp_char + std::log(std::max(probs.at(t, last), real(0)));
        }
        Beam copy = b;
        merge(std::move(copy), with_blank, with_repeat);
      }

      // Extend with word characters along the prefix tree.
      for (const auto& [c, child_node] : lexicon.tree.children(b.node)) {
        const std::size_t label = alphabet.find(c);
        if (label == std::u32string::npos) continue;
        const real pc = std::log(std::max(probs.at(t, static_cast<int>(label)), real(0)));
        const real base =
            (!b.text.empty() && b.text.back() == c) ? b.lp_blank : lp_total;
        if (base == kNegInf) continue;
        Beam nb = b;
        nb.text.push_back(c);
        nb.prefix.push_back(c);
        nb.node = child_node;
        merge(std::move(nb), kNegInf, base + pc);
      }

      // Non-word characters close the current word (which must be complete)
      // or follow other non-word characters.
      if (b.prefix.empty() || lexicon.tree.terminal(b.node)) {
        for (char32_t c : lexicon.classing.nonword_chars) {
          const std::size_t label = alphabet.find(c);
          if (label == std::u32string::npos) continue;
          const real pc = std::log(std::max(probs.at(t, static_cast<int>(label)), real(0)));
          const real base =
              (!b.text.empty() && b.text.back() == c) ? b.lp_blank : lp_total;
          if (base == kNegInf) continue;
          Beam nb = b;
          nb.text.push_back(c);
          if (!b.prefix.empty()) {
            if (use_lm) nb.lm += lexicon.lm.log_word(b.last_word, b.prefix);
            nb.last_word = b.prefix;
            nb.prefix.clear();
          }
          nb.node = PrefixTree::kRoot;
          merge(std::move(nb), kNegInf, base + pc);
        }
      }
    }

    beams.clear();
    beams.reserve(next.size());
    for (auto& [_, b] : next) beams.push_back(std::move(b));
    std::sort(beams.begin(), beams.end(), [](const Beam& a, const Beam& b) {
      if (a.sort_score() != b.sort_score()) return a.sort_score() > b.sort_score();
      return a.text < b.text;
    });
    if (static_cast<int>(beams.size()) > options.beam_width)
      beams.resize(static_cast<size_t>(options.beam_width));
    if (mass_trace) {
      real mass = kNegInf;
      for (const Beam& b : beams) mass = lse2(mass, b.log_total());
      mass_trace->push_back(mass);
    }
  }

  // Final scoring: an open word run must itself be a lexicon word, and in
  // NGrams mode it contributes its language-model term.
  WbsResult result;
  real best = kNegInf;
  bool found = false;
  for (const Beam& b : beams) {
    real score = b.log_total() + b.lm;
    if (!b.prefix.empty()) {
      if (!lexicon.tree.terminal(b.node)) continue;
      if (use_lm) score += lexicon.lm.log_word(b.last_word, b.prefix);
    }
    if (!found || score > best ||
        (score == best && b.text < result.text)) {
      best = score;
      result.text = b.text;
      found = true;
    }
  }
  if (!found) result.no_viable_beam = true;
  return result;
}

std::string decode_paragraph(const std::vector<Tensor>& line_probs,
                             const std::u32string& alphabet,
                             const Lexicon& lexicon,
                             const WbsOptions& options) {
  if (line_probs.empty())
    throw std::invalid_argument("decode_paragraph: need at least one line");
  std::vector<std::string> lines;
  for (const Tensor& probs : line_probs)
    lines.push_back(utf8_encode(
        word_beam_search(probs, alphabet, lexicon, options).text));
  return join_lines(lines);
}

}  // namespace pararec
