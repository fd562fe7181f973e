#pragma once

#include <string>
#include <vector>

#include "btsumm/corpus.hpp"

namespace btsumm {

// Per-word presence frequencies over both corpora, indexed by one shared
// vocabulary. Presence semantics: a word counts once per sequence.
struct MomentStats {
    std::vector<double> mu_f;
    std::vector<double> mu_s;

    void save(const std::string& path, const Vocabulary& shared_vocab) const;
    static MomentStats load(const std::string& path, const Vocabulary& shared_vocab);
};

MomentStats compute_moments(const Corpus& fulltext, const Corpus& summary,
                            const Vocabulary& shared_vocab);

// DBAE summarization-mode input weights over the shared vocabulary:
// w_v = max(mu_s / mu_f, 1) for words of the summary vocabulary, 0 otherwise
// (those words are dropped); summary words never seen in full texts get the
// cap.
std::vector<float> summary_weights(const MomentStats& stats, const Vocabulary& shared_vocab,
                                   const Vocabulary& summary_vocab, double weight_cap = 10.0);

}  // namespace btsumm
