#include "btsumm/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <sstream>

namespace btsumm {

namespace {

enum class KeyType { kInt, kReal, kBool, kStr, kU64 };

struct KeySpec {
    KeyType type;
    const char* def;
    double lo = 0;
    double hi = 0;  // lo == hi means unchecked
};

// Defaults follow the paper's hyperparameter appendix where one exists;
// synth/loop/runtime keys are artifact-level choices.
const std::map<std::string, KeySpec>& registry() {
    static const std::map<std::string, KeySpec> reg = {
        {"paths.paired", {KeyType::kStr, ""}},
        {"paths.workdir", {KeyType::kStr, "runs/default"}},

        {"corpus.vocab_cap_full", {KeyType::kInt, "50000", 1, 1e9}},
        {"corpus.vocab_cap_summary", {KeyType::kInt, "15000", 1, 1e9}},
        {"corpus.vocab_cap_shared", {KeyType::kInt, "50000", 1, 1e9}},

        {"split.ratio_summary", {KeyType::kReal, "0.52", 0, 1}},
        {"split.ratio_fulltext", {KeyType::kReal, "0.46", 0, 1}},
        {"split.ratio_val", {KeyType::kReal, "0.015", 0, 1}},
        {"split.ratio_test", {KeyType::kReal, "0.005", 0, 1}},
        {"split.seed", {KeyType::kU64, "13"}},

        {"synth.enabled", {KeyType::kBool, "false"}},
        {"synth.n", {KeyType::kInt, "41000", 1, 1e9}},
        {"synth.content", {KeyType::kInt, "120", 2, 1e6}},
        {"synth.filler", {KeyType::kInt, "80", 1, 1e6}},
        {"synth.synonym_frac", {KeyType::kReal, "0.25", 0, 1}},
        {"synth.k", {KeyType::kInt, "6", 1, 64}},
        {"synth.min_content", {KeyType::kInt, "4", 1, 64}},
        {"synth.max_content", {KeyType::kInt, "9", 1, 64}},
        {"synth.min_len", {KeyType::kInt, "16", 2, 512}},
        {"synth.max_len", {KeyType::kInt, "22", 2, 512}},
        {"synth.seed", {KeyType::kU64, "101"}},

        {"embeddings.dim_side", {KeyType::kInt, "256", 1, 4096}},
        {"embeddings.dim_shared", {KeyType::kInt, "512", 1, 4096}},
        {"embeddings.window", {KeyType::kInt, "5", 1, 64}},
        {"embeddings.negatives", {KeyType::kInt, "5", 1, 64}},
        {"embeddings.epochs", {KeyType::kInt, "5", 1, 1000}},
        {"embeddings.lr", {KeyType::kReal, "0.025", 1e-6, 10}},
        {"embeddings.sample", {KeyType::kReal, "0", 0, 1}},
        {"embeddings.parallel", {KeyType::kBool, "false"}},
        {"embeddings.threads", {KeyType::kInt, "2", 1, 256}},
        {"embeddings.seed", {KeyType::kU64, "29"}},

        {"alignment.topk", {KeyType::kInt, "2000", 8, 1000000}},
        {"alignment.refine_iters", {KeyType::kInt, "5", 0, 100}},
        {"alignment.sinkhorn_iters", {KeyType::kInt, "50", 1, 10000}},
        {"alignment.sinkhorn_reg", {KeyType::kReal, "0.05", 1e-6, 10}},
        {"alignment.anchor_policy", {KeyType::kStr, "identical"}},
        {"alignment.seed", {KeyType::kU64, "31"}},

        {"prthr.eta", {KeyType::kReal, "0.9", 1e-9, 2}},
        {"prthr.max_len", {KeyType::kInt, "12", 1, 512}},

        {"dbae.enc_dim", {KeyType::kInt, "256", 1, 4096}},
        {"dbae.hidden", {KeyType::kInt, "256", 1, 4096}},
        {"dbae.noise_p", {KeyType::kReal, "0.2", 0, 1}},
        {"dbae.lambda", {KeyType::kReal, "2", 0, 100}},
        {"dbae.beam", {KeyType::kInt, "5", 1, 64}},
        {"dbae.max_len", {KeyType::kInt, "15", 1, 512}},
        {"dbae.epochs", {KeyType::kInt, "8", 0, 1000}},
        {"dbae.batch", {KeyType::kInt, "32", 2, 4096}},
        {"dbae.weight_cap", {KeyType::kReal, "10", 1, 1e6}},
        {"dbae.seed", {KeyType::kU64, "37"}},

        {"moments.enc_dim", {KeyType::kInt, "256", 1, 4096}},
        {"moments.eta", {KeyType::kReal, "0.3", 0, 1}},
        {"moments.max_len", {KeyType::kInt, "12", 1, 512}},
        {"moments.epochs", {KeyType::kInt, "20", 0, 1000}},
        {"moments.batch", {KeyType::kInt, "32", 2, 4096}},
        {"moments.seed", {KeyType::kU64, "41"}},

        {"seq2seq.hidden", {KeyType::kInt, "256", 1, 4096}},
        {"seq2seq.epochs", {KeyType::kInt, "10", 1, 1000}},
        {"seq2seq.val_frac", {KeyType::kReal, "0.05", 0, 0.5}},
        {"seq2seq.patience", {KeyType::kInt, "3", 1, 100}},
        {"seq2seq.freeze_embeddings", {KeyType::kBool, "false"}},
        {"seq2seq.len_norm", {KeyType::kReal, "0.7", 0, 4}},

        {"generate.sample_k", {KeyType::kInt, "15", 1, 1000}},
        {"generate.min_len_full", {KeyType::kInt, "16", 0, 512}},
        {"generate.max_len_full", {KeyType::kInt, "40", 1, 512}},
        {"generate.max_len_summary", {KeyType::kInt, "12", 1, 512}},

        {"train.lr", {KeyType::kReal, "5e-4", 1e-9, 10}},
        {"train.beta1", {KeyType::kReal, "0.9", 0, 1}},
        {"train.beta2", {KeyType::kReal, "0.999", 0, 1}},
        {"train.eps", {KeyType::kReal, "1e-8", 0, 1}},
        {"train.clip_norm", {KeyType::kReal, "5.0", 0, 1e6}},
        {"train.precision", {KeyType::kStr, "float32"}},

        {"loop.max_iteration", {KeyType::kInt, "2", 1, 64}},
        {"loop.mix", {KeyType::kStr, "per_lineage"}},
        {"loop.jobs", {KeyType::kInt, "1", 1, 256}},
        {"loop.seed", {KeyType::kU64, "4242"}},

        {"eval.beam", {KeyType::kInt, "5", 1, 64}},
        {"eval.max_len", {KeyType::kInt, "12", 1, 512}},

        {"validation.use_for_hyperparams", {KeyType::kBool, "true"}},
        {"validation.use_for_early_stopping", {KeyType::kBool, "true"}},
    };
    return reg;
}

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

Config Config::defaults() {
    Config c;
    for (const auto& [key, spec] : registry()) c.values_[key] = spec.def;
    return c;
}

void Config::set(const std::string& key, const std::string& value) {
    auto it = registry().find(key);
    if (it == registry().end()) throw ConfigError("unknown config key: " + key);
    values_[key] = value;
}

void Config::load_file(const std::string& path) {
    auto lines = read_lines(path);
    std::string section;
    for (size_t i = 0; i < lines.size(); ++i) {
        std::string line = trim(lines[i]);
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;
        if (line.front() == '[' && line.back() == ']') {
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(i + 1) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (section.empty())
            throw ConfigError(path + ":" + std::to_string(i + 1) + ": key outside a section");
        set(section + "." + key, value);
    }
}

void Config::apply_env() {
    for (const auto& [key, spec] : registry()) {
        std::string env = "BTSUMM_" + key;
        for (auto& c : env) {
            if (c == '.') c = '_';
            c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        }
        const char* v = std::getenv(env.c_str());
        if (v != nullptr) values_[key] = v;
    }
}

bool Config::has(const std::string& key) const { return values_.count(key) > 0; }

std::string Config::get_str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("missing config key: " + key);
    return it->second;
}

int64_t Config::get_int(const std::string& key) const {
    const std::string v = get_str(key);
    try {
        size_t pos = 0;
        int64_t r = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        const KeySpec& spec = registry().at(key);
        if (spec.lo != spec.hi &&
            (static_cast<double>(r) < spec.lo || static_cast<double>(r) > spec.hi))
            throw ConfigError("config " + key + "=" + v + " out of range");
        return r;
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception&) {
        throw ConfigError("config " + key + "=" + v + " is not an integer");
    }
}

uint64_t Config::get_u64(const std::string& key) const {
    const std::string v = get_str(key);
    try {
        size_t pos = 0;
        uint64_t r = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("config " + key + "=" + v + " is not an unsigned integer");
    }
}

double Config::get_real(const std::string& key) const {
    const std::string v = get_str(key);
    try {
        size_t pos = 0;
        double r = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        const KeySpec& spec = registry().at(key);
        if (spec.lo != spec.hi && (r < spec.lo || r > spec.hi))
            throw ConfigError("config " + key + "=" + v + " out of range");
        return r;
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception&) {
        throw ConfigError("config " + key + "=" + v + " is not a number");
    }
}

bool Config::get_bool(const std::string& key) const {
    std::string v = get_str(key);
    std::transform(v.begin(), v.end(), v.begin(), ::tolower);
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("config " + key + "=" + v + " is not a boolean");
}

std::string Config::echo() const {
    std::ostringstream out;
    std::string section;
    for (const auto& [key, value] : values_) {
        auto dot = key.find('.');
        std::string sec = key.substr(0, dot);
        if (sec != section) {
            if (!section.empty()) out << "\n";
            out << "[" << sec << "]\n";
            section = sec;
        }
        out << key.substr(dot + 1) << " = " << value << "\n";
    }
    return out.str();
}

void Config::validate() const {
    for (const auto& [key, spec] : registry()) {
        switch (spec.type) {
            case KeyType::kInt: get_int(key); break;
            case KeyType::kReal: get_real(key); break;
            case KeyType::kBool: get_bool(key); break;
            case KeyType::kU64: get_u64(key); break;
            case KeyType::kStr: get_str(key); break;
        }
    }
    double rsum = get_real("split.ratio_summary") + get_real("split.ratio_fulltext") +
                  get_real("split.ratio_val") + get_real("split.ratio_test");
    if (std::abs(rsum - 1.0) > 1e-9)
        throw ConfigError("split ratios must sum to 1, got " + format_double(rsum, 12));
    const std::string prec = get_str("train.precision");
    if (prec != "float32" && prec != "float64")
        throw ConfigError("train.precision must be float32 or float64");
    const std::string mix = get_str("loop.mix");
    if (mix != "per_lineage" && mix != "all_lineage")
        throw ConfigError("loop.mix must be per_lineage or all_lineage");
    const std::string pol = get_str("alignment.anchor_policy");
    if (pol != "identical" && pol != "none")
        throw ConfigError("alignment.anchor_policy must be identical or none");
    if (get_int("synth.max_content") < get_int("synth.min_content"))
        throw ConfigError("synth.max_content < synth.min_content");
    if (get_int("synth.max_len") < get_int("synth.min_len"))
        throw ConfigError("synth.max_len < synth.min_len");
}

}  // namespace btsumm
