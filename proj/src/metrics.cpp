#include "pararec/metrics.hpp"

#include <sstream>
#include <stdexcept>

namespace pararec {

std::size_t levenshtein(const std::u32string& a, const std::u32string& b) {
  return levenshtein_seq(a, b);
}

EvalReport evaluate_corpus(const std::vector<std::string>& refs,
                           const std::vector<std::string>& hyps,
                           const std::vector<std::string>& ids) {
  if (refs.size() != hyps.size())
    throw std::invalid_argument(
        "evaluate_corpus: " + std::to_string(refs.size()) + " references vs " +
        std::to_string(hyps.size()) + " hypotheses");
  if (refs.empty())
    throw std::invalid_argument("evaluate_corpus: empty reference corpus");

  EvalReport report;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    SampleScore s;
    s.id = i < ids.size() ? ids[i] : std::to_string(i);
    const std::u32string ref = utf8_decode(refs[i]);
    const std::u32string hyp = utf8_decode(hyps[i]);
    s.char_edits = levenshtein(ref, hyp);
    s.char_len = ref.size();
    const auto ref_words = split_whitespace(ref);
    const auto hyp_words = split_whitespace(hyp);
    s.word_edits = levenshtein_seq(ref_words, hyp_words);
    s.word_len = ref_words.size();
    report.char_edits += s.char_edits;
    report.char_total += s.char_len;
    report.word_edits += s.word_edits;
    report.word_total += s.word_len;
    report.samples.push_back(std::move(s));
  }
  if (report.char_total == 0)
    throw std::invalid_argument("evaluate_corpus: total reference length is 0");
  return report;
}

double corpus_cer(const std::vector<std::string>& refs,
                  const std::vector<std::string>& hyps) {
  return evaluate_corpus(refs, hyps).cer();
}

double corpus_wer(const std::vector<std::string>& refs,
                  const std::vector<std::string>& hyps) {
  return evaluate_corpus(refs, hyps).wer();
}

std::string EvalReport::table() const {
  std::ostringstream os;
  os << "sample        char_edits  char_len  word_edits  word_len\n";
  for (const auto& s : samples) {
    os << s.id;
    for (std::size_t i = s.id.size(); i < 14; ++i) os << ' ';
    os << s.char_edits << "           " << s.char_len << "        "
       << s.word_edits << "           " << s.word_len << "\n";
  }
  os << "pooled: cer=" << cer() << " wer=" << wer() << " over "
     << samples.size() << " samples\n";
  return os.str();
}

std::string EvalReport::key_values(const std::string& prefix) const {
  std::ostringstream os;
  os << prefix << "cer=" << cer() << "\n";
  os << prefix << "wer=" << wer() << "\n";
  os << prefix << "char_edits=" << char_edits << "\n";
  os << prefix << "char_total=" << char_total << "\n";
  os << prefix << "word_edits=" << word_edits << "\n";
  os << prefix << "word_total=" << word_total << "\n";
  return os.str();
}

}  // namespace pararec
