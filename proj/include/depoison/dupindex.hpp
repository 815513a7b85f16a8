#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "depoison/corpus.hpp"

namespace depoison {

// ---- duplication records --------------------------------------------------

struct DuplicationRecord {
  ElementKey element;
  std::vector<std::int64_t> containing_ids;  // sorted, distinct samples
  std::size_t n_e = 0;                       // = containing_ids.size()
  double q = 0.0;                            // n_e / corpus size
};

// One record per distinct token; n_e counts containing samples, not
// occurrences.
std::map<ElementKey, DuplicationRecord> word_frequencies(const Corpus& corpus);

// One record per distinct tag at the given level (Structure or Style).
// Returns nullopt when no sample carries that tag kind at all.
std::optional<std::map<ElementKey, DuplicationRecord>> tag_frequencies(
    const Corpus& corpus, ElementLevel level);

// ---- span index -----------------------------------------------------------

// Suffix array over the corpus token stream. Samples are joined with unique
// separator sentinels (ids 0..S-2, below every token id) so no shared prefix
// can cross a sample boundary. Token ids are remapped to the lexicographic
// rank of their string, making suffix order match token-string order.
struct SpanIndex {
  std::vector<std::int32_t> stream;
  std::vector<std::int32_t> sa;          // suffix array
  std::vector<std::int32_t> lcp;         // lcp[i] = lcp(sa[i-1], sa[i]); lcp[0]=0
  std::vector<std::int32_t> pos_sample;  // sample id per position, -1 on separators
  std::vector<std::string> token_names;  // indexed by stream value - sep_count
  std::int32_t num_samples = 0;
  std::int32_t sep_count = 0;

  const std::string& token_at(std::size_t pos) const {
    return token_names.at(static_cast<std::size_t>(stream[pos]) -
                          static_cast<std::size_t>(sep_count));
  }
};

inline constexpr std::size_t kDefaultMaxStreamTokens = 100'000'000;

SpanIndex build_span_index(const Corpus& corpus,
                           std::size_t max_stream_tokens = kDefaultMaxStreamTokens);

// Maximal repeated spans with length in [min_len, max_len] present in >= 2
// distinct samples with q >= min_q. Among spans with identical containing-id
// sets only the longest survive (ties kept). Sorted by (q desc, length desc,
// token order).
std::vector<DuplicationRecord> repeated_spans(const SpanIndex& index,
                                              std::size_t min_len,
                                              std::size_t max_len,
                                              double min_q);

// ---- brute-force oracle ---------------------------------------------------

inline constexpr std::size_t kOracleSampleCap = 200;

// Exhaustive recount by direct scanning; must agree exactly with the fast
// paths above. Only for small corpora.
std::map<ElementKey, DuplicationRecord> oracle_element_frequencies(
    const Corpus& corpus, ElementLevel level,
    std::size_t sample_cap = kOracleSampleCap);

std::vector<DuplicationRecord> oracle_repeated_spans(
    const Corpus& corpus, std::size_t min_len, std::size_t max_len, double min_q,
    std::size_t sample_cap = kOracleSampleCap);

}  // namespace depoison
