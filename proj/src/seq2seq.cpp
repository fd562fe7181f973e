#include "btsumm/seq2seq.hpp"

namespace btsumm {

std::string direction_name(Direction d) {
    return d == Direction::kFullToSummary ? "f2s" : "s2f";
}

Direction direction_from_name(const std::string& name) {
    if (name == "f2s") return Direction::kFullToSummary;
    if (name == "s2f") return Direction::kSummaryToFull;
    throw InvalidArgument("unknown direction: " + name);
}

std::vector<int> postprocess(const std::vector<int>& ids, int period_id, int unk_id) {
    std::vector<int> out;
    out.reserve(ids.size());
    for (int id : ids) {
        if (id == unk_id && !out.empty() && out.back() == unk_id) continue;
        out.push_back(id);
        if (period_id >= 0 && id == period_id) break;  // cut at the first full stop, keep it
    }
    return out;
}

}  // namespace btsumm
