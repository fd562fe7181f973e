#include "btsumm/prthr.hpp"

namespace btsumm {

PrThrModel PrThrModel::build(const AlignedSpace& space, const PrThrConfig& cfg, int threads) {
    if (!(cfg.eta > 0.0f && cfg.eta <= 2.0f)) throw InvalidArgument("prthr: eta must be in (0, 2]");
    if (cfg.max_len < 1) throw InvalidArgument("prthr: max_len must be >= 1");
    PrThrModel model;
    model.cfg = cfg;
    model.neighbors = neighbor_map(space, threads);
    model.tgt_vocab_size = space.tgt_vocab_size;
    return model;
}

TokenSequence prthr_summarize(const TokenSequence& seq, const PrThrModel& model) {
    TokenSequence out;
    out.side = Side::kSummary;
    for (int id : seq.ids) {
        if (static_cast<int>(out.ids.size()) >= model.cfg.max_len) break;
        const NeighborHit& hit = model.neighbors[static_cast<size_t>(id)];
        if (hit.id == Vocabulary::kEos) continue;
        if (hit.distance >= model.cfg.eta) continue;
        out.ids.push_back(hit.id);
    }
    return out;
}

}  // namespace btsumm
