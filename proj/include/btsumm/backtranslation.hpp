#pragma once

#include <functional>
#include <string>
#include <vector>

#include "btsumm/corpus.hpp"

namespace btsumm {

using StringSeq = std::vector<std::string>;

// Lineages in fixed mixing order.
enum class Lineage { kPrThr, kDbae, kMu1, kAll };
std::string lineage_name(Lineage l);
Lineage lineage_from_name(const std::string& name);

// Dataset direction: which side is artificial (primed).
enum class DataDirection { kSummaryPrimeToFull, kFullPrimeToSummary };
std::string data_direction_name(DataDirection d);
// Iteration parity fixes the direction: even datasets pair artificial
// summaries with real full texts.
DataDirection dataset_direction_for_iteration(int iteration);

struct DatasetStats {
    int64_t pairs = 0;
    int64_t dropped_empty = 0;
    int raw_min_len = 0;   // generated side, before postprocess
    int raw_max_len = 0;
    int post_min_len = 0;  // generated side, as stored
    int post_max_len = 0;
};

struct ArtificialDataset {
    // (generated input, real output)
    std::vector<std::pair<StringSeq, StringSeq>> pairs;
    Lineage lineage = Lineage::kPrThr;
    int iteration = 0;
    DataDirection direction = DataDirection::kSummaryPrimeToFull;
    DatasetStats stats;
};

// Model adapters hand back postprocessed tokens plus the raw decode length.
struct GenOutput {
    StringSeq tokens;
    int raw_len = 0;
};
using GeneratorFn = std::function<GenOutput(const StringSeq& input, uint64_t seed)>;

// One pair per real sequence: (f(real), real). Empty generated inputs are
// dropped and counted. Per-sequence seeds derive from (seed, index), so the
// result is identical for any job count; outputs keep corpus order.
ArtificialDataset make_dataset(const GeneratorFn& generate, const std::vector<StringSeq>& real,
                               Lineage lineage, int iteration, DataDirection direction,
                               uint64_t seed, int jobs = 1);

// Concatenation in lineage order (PrThr, DBAE, Mu1); all parts must exist,
// be non-empty, and agree on iteration and direction.
ArtificialDataset mix_all(const std::vector<const ArtificialDataset*>& parts);

void save_dataset(const ArtificialDataset& ds, const std::string& path);
ArtificialDataset load_dataset(const std::string& path, Lineage lineage, int iteration,
                               DataDirection direction);

}  // namespace btsumm
