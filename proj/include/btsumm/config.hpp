#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "btsumm/common.hpp"

namespace btsumm {

// Flat key = value configuration with one section per module. Unknown keys
// are rejected; every value is range-checked on access. Precedence:
// defaults < file < environment (BTSUMM_<SECTION>_<KEY>) < explicit sets.
class Config {
  public:
    static Config defaults();

    void load_file(const std::string& path);
    void apply_env();
    // key is "section.key"; value parsed per the registered type.
    void set(const std::string& key, const std::string& value);

    bool has(const std::string& key) const;
    std::string get_str(const std::string& key) const;
    int64_t get_int(const std::string& key) const;
    uint64_t get_u64(const std::string& key) const;
    double get_real(const std::string& key) const;
    bool get_bool(const std::string& key) const;

    // INI-style echo with stable key order; embedded in every manifest.
    std::string echo() const;
    const std::map<std::string, std::string>& entries() const { return values_; }

    void validate() const;

  private:
    std::map<std::string, std::string> values_;
};

}  // namespace btsumm
