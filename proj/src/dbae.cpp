#include "btsumm/dbae.hpp"

namespace btsumm {

std::vector<int> dbae_noise(const std::vector<int>& seq, double p, uint64_t seed,
                            std::span<const int> insert_pool) {
    if (p < 0.0 || p > 1.0) throw InvalidArgument("dbae_noise: p must be in [0, 1]");
    auto rng = make_rng(seed, 0x4015e);
    auto u01 = [&rng]() { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
    std::vector<int> out;
    out.reserve(seq.size() * 2);
    for (int id : seq) {
        if (!(u01() < p / 2.0)) out.push_back(id);  // delete with prob p/2
        if (u01() < p && !insert_pool.empty())      // insert after the position with prob p
            out.push_back(insert_pool[static_cast<size_t>(rng() % insert_pool.size())]);
    }
    return out;
}

}  // namespace btsumm
