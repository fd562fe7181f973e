#pragma once

#include "btsumm/alignment.hpp"
#include "btsumm/corpus.hpp"

namespace btsumm {

struct PrThrConfig {
    float eta = 0.9f;  // cosine-distance threshold on [0, 2]
    int max_len = 12;  // N
};

// Thresholded nearest-neighbor summarizer over an aligned space. The
// neighbor map is precomputed for the whole source vocabulary at build time
// so queries are pure lookups.
struct PrThrModel {
    PrThrConfig cfg;
    std::vector<NeighborHit> neighbors;  // indexed by source vocab id
    int tgt_vocab_size = 0;

    static PrThrModel build(const AlignedSpace& space, const PrThrConfig& cfg, int threads = 1);
};

// Maps each input word (in order) to its aligned nearest neighbor; skips the
// word when the neighbor is EOS or at distance >= eta; keeps the first N
// emitted tokens. Input ids live in the source (full-text) vocabulary,
// output ids in the target (summary) vocabulary.
TokenSequence prthr_summarize(const TokenSequence& seq, const PrThrModel& model);

}  // namespace btsumm
