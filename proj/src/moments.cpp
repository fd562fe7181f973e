#include "btsumm/moments.hpp"

#include <algorithm>
#include <sstream>

namespace btsumm {

namespace {

std::vector<double> presence_frequencies(const Corpus& corpus, int vocab_size) {
    std::vector<int64_t> counts(static_cast<size_t>(vocab_size), 0);
    std::vector<int> seen;
    for (const auto& seq : corpus.sequences) {
        seen.clear();
        for (int id : seq.ids) {
            if (std::find(seen.begin(), seen.end(), id) != seen.end()) continue;
            seen.push_back(id);
            counts[static_cast<size_t>(id)]++;
        }
    }
    std::vector<double> mu(static_cast<size_t>(vocab_size));
    // plain division: exact agreement with any independent recount
    for (size_t i = 0; i < mu.size(); ++i)
        mu[i] = static_cast<double>(counts[i]) / static_cast<double>(corpus.sequences.size());
    return mu;
}

}  // namespace

MomentStats compute_moments(const Corpus& fulltext, const Corpus& summary,
                            const Vocabulary& shared_vocab) {
    if (fulltext.sequences.empty() || summary.sequences.empty())
        throw InvalidArgument("compute_moments: empty corpus");
    MomentStats stats;
    stats.mu_f = presence_frequencies(fulltext, shared_vocab.size());
    stats.mu_s = presence_frequencies(summary, shared_vocab.size());
    return stats;
}

std::vector<float> summary_weights(const MomentStats& stats, const Vocabulary& shared_vocab,
                                   const Vocabulary& summary_vocab, double weight_cap) {
    std::vector<float> w(static_cast<size_t>(shared_vocab.size()), 0.0f);
    for (int id = Vocabulary::kNumSpecials; id < shared_vocab.size(); ++id) {
        const std::string& tok = shared_vocab.token(id);
        if (!summary_vocab.contains(tok)) continue;  // dropped
        double mf = stats.mu_f[static_cast<size_t>(id)];
        double ms = stats.mu_s[static_cast<size_t>(id)];
        w[static_cast<size_t>(id)] =
            mf > 0.0 ? static_cast<float>(std::max(ms / mf, 1.0)) : static_cast<float>(weight_cap);
    }
    return w;
}

void MomentStats::save(const std::string& path, const Vocabulary& shared_vocab) const {
    std::ostringstream out;
    out << "# btsumm moments v1\n";
    for (int id = 0; id < shared_vocab.size(); ++id)
        out << shared_vocab.token(id) << '\t' << format_double(mu_f[static_cast<size_t>(id)], 17)
            << '\t' << format_double(mu_s[static_cast<size_t>(id)], 17) << '\n';
    write_file_atomic(path, out.str());
}

MomentStats MomentStats::load(const std::string& path, const Vocabulary& shared_vocab) {
    auto lines = read_lines(path);
    if (lines.empty() || lines[0] != "# btsumm moments v1")
        throw IoError("bad moments header in " + path);
    MomentStats stats;
    stats.mu_f.assign(static_cast<size_t>(shared_vocab.size()), 0.0);
    stats.mu_s.assign(static_cast<size_t>(shared_vocab.size()), 0.0);
    for (size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        std::istringstream ss(lines[i]);
        std::string tok;
        double mf, ms;
        if (!(ss >> tok >> mf >> ms)) throw IoError("bad moments line in " + path);
        if (!shared_vocab.contains(tok) && tok != "<unk>" && tok != "<eos>" && tok != "<pad>")
            continue;
        int id = shared_vocab.lookup(tok);
        if (tok == "<eos>") id = Vocabulary::kEos;
        if (tok == "<pad>") id = Vocabulary::kPad;
        stats.mu_f[static_cast<size_t>(id)] = mf;
        stats.mu_s[static_cast<size_t>(id)] = ms;
    }
    return stats;
}

}  // namespace btsumm
