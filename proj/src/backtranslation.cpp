#include "btsumm/backtranslation.hpp"

#include <algorithm>
#include <limits>
#include <sstream>
#include <thread>

namespace btsumm {

std::string lineage_name(Lineage l) {
    switch (l) {
        case Lineage::kPrThr: return "prthr";
        case Lineage::kDbae: return "dbae";
        case Lineage::kMu1: return "mu1";
        case Lineage::kAll: return "all";
    }
    return "?";
}

Lineage lineage_from_name(const std::string& name) {
    if (name == "prthr") return Lineage::kPrThr;
    if (name == "dbae") return Lineage::kDbae;
    if (name == "mu1") return Lineage::kMu1;
    if (name == "all") return Lineage::kAll;
    throw InvalidArgument("unknown lineage: " + name);
}

std::string data_direction_name(DataDirection d) {
    return d == DataDirection::kSummaryPrimeToFull ? "sprime2f" : "fprime2s";
}

DataDirection dataset_direction_for_iteration(int iteration) {
    return iteration % 2 == 0 ? DataDirection::kSummaryPrimeToFull
                              : DataDirection::kFullPrimeToSummary;
}

ArtificialDataset make_dataset(const GeneratorFn& generate, const std::vector<StringSeq>& real,
                               Lineage lineage, int iteration, DataDirection direction,
                               uint64_t seed, int jobs) {
    ArtificialDataset ds;
    ds.lineage = lineage;
    ds.iteration = iteration;
    ds.direction = direction;

    std::vector<GenOutput> outs(real.size());
    auto work = [&](size_t begin, size_t end) {
        for (size_t i = begin; i < end; ++i)
            outs[i] = generate(real[i], mix_seed(seed, static_cast<uint64_t>(i), 0x9e4));
    };
    int threads = std::max(1, jobs);
    if (threads == 1 || real.size() < 64) {
        work(0, real.size());
    } else {
        std::vector<std::thread> pool;
        size_t chunk = (real.size() + static_cast<size_t>(threads) - 1) /
                       static_cast<size_t>(threads);
        for (int t = 0; t < threads; ++t) {
            size_t b = static_cast<size_t>(t) * chunk;
            size_t e = std::min(real.size(), b + chunk);
            if (b >= e) break;
            pool.emplace_back(work, b, e);
        }
        for (auto& th : pool) th.join();
    }

    int raw_min = std::numeric_limits<int>::max(), raw_max = 0;
    int post_min = std::numeric_limits<int>::max(), post_max = 0;
    for (size_t i = 0; i < real.size(); ++i) {
        auto& out = outs[i];
        raw_min = std::min(raw_min, out.raw_len);
        raw_max = std::max(raw_max, out.raw_len);
        if (out.tokens.empty()) {
            ds.stats.dropped_empty++;
            continue;
        }
        post_min = std::min(post_min, static_cast<int>(out.tokens.size()));
        post_max = std::max(post_max, static_cast<int>(out.tokens.size()));
        ds.pairs.emplace_back(std::move(out.tokens), real[i]);
    }
    ds.stats.pairs = static_cast<int64_t>(ds.pairs.size());
    ds.stats.raw_min_len = real.empty() ? 0 : raw_min;
    ds.stats.raw_max_len = raw_max;
    ds.stats.post_min_len = ds.pairs.empty() ? 0 : post_min;
    ds.stats.post_max_len = post_max;
    return ds;
}

ArtificialDataset mix_all(const std::vector<const ArtificialDataset*>& parts) {
    if (parts.empty()) throw InvalidArgument("mix_all: no parts");
    for (const auto* p : parts) {
        if (p == nullptr || p->pairs.empty())
            throw MissingArtifactError("mix_all: a lineage dataset is missing or empty");
        if (p->iteration != parts[0]->iteration || p->direction != parts[0]->direction)
            throw InvalidArgument("mix_all: iteration/direction mismatch between lineages");
    }
    ArtificialDataset ds;
    ds.lineage = Lineage::kAll;
    ds.iteration = parts[0]->iteration;
    ds.direction = parts[0]->direction;
    for (const auto* p : parts) {
        ds.pairs.insert(ds.pairs.end(), p->pairs.begin(), p->pairs.end());
        ds.stats.dropped_empty += p->stats.dropped_empty;
        ds.stats.raw_min_len = ds.stats.raw_min_len == 0
                                   ? p->stats.raw_min_len
                                   : std::min(ds.stats.raw_min_len, p->stats.raw_min_len);
        ds.stats.raw_max_len = std::max(ds.stats.raw_max_len, p->stats.raw_max_len);
        ds.stats.post_min_len = ds.stats.post_min_len == 0
                                    ? p->stats.post_min_len
                                    : std::min(ds.stats.post_min_len, p->stats.post_min_len);
        ds.stats.post_max_len = std::max(ds.stats.post_max_len, p->stats.post_max_len);
    }
    ds.stats.pairs = static_cast<int64_t>(ds.pairs.size());
    return ds;
}

void save_dataset(const ArtificialDataset& ds, const std::string& path) {
    std::ostringstream out;
    for (const auto& [in, real] : ds.pairs) {
        for (size_t i = 0; i < in.size(); ++i) {
            if (i) out << ' ';
            out << in[i];
        }
        out << '\t';
        for (size_t i = 0; i < real.size(); ++i) {
            if (i) out << ' ';
            out << real[i];
        }
        out << '\n';
    }
    write_file_atomic(path, out.str());
}

ArtificialDataset load_dataset(const std::string& path, Lineage lineage, int iteration,
                               DataDirection direction) {
    ArtificialDataset ds;
    ds.lineage = lineage;
    ds.iteration = iteration;
    ds.direction = direction;
    auto lines = read_lines(path);
    int post_min = std::numeric_limits<int>::max(), post_max = 0;
    for (size_t i = 0; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        auto tab = lines[i].find('\t');
        if (tab == std::string::npos)
            throw IoError(path + ": missing tab at line " + std::to_string(i + 1));
        auto in = split_ws(lines[i].substr(0, tab));
        auto out = split_ws(lines[i].substr(tab + 1));
        if (in.empty()) throw IoError(path + ": empty input at line " + std::to_string(i + 1));
        post_min = std::min(post_min, static_cast<int>(in.size()));
        post_max = std::max(post_max, static_cast<int>(in.size()));
        ds.pairs.emplace_back(std::move(in), std::move(out));
    }
    ds.stats.pairs = static_cast<int64_t>(ds.pairs.size());
    ds.stats.post_min_len = ds.pairs.empty() ? 0 : post_min;
    ds.stats.post_max_len = post_max;
    return ds;
}

}  // namespace btsumm
