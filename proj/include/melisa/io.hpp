#pragma once

#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "melisa/net.hpp"
#include "melisa/tensor.hpp"

namespace melisa {

// Error taxonomy mapped to process exit codes by the CLI: configuration (1),
// data (2), numerical (3), internal (4).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InternalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Writes bytes to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::string& path, const std::string& bytes);
/// Whole file as bytes; throws DataError if unreadable.
std::string read_file(const std::string& path);

// ---- checkpoints ------------------------------------------------------------
// Self-describing binary: magic "MLSA", version, architecture fields, then
// parameter blobs in declaration order (name-prefixed little-endian f64).

void save_checkpoint(const std::string& path, const NetConfig& cfg,
                     const ParamStore& ps);
/// Rebuilds the network from the stored architecture and overwrites every
/// parameter; name or element-count mismatches are DataErrors.
DenoiserNet load_checkpoint(const std::string& path);

// ---- trajectory sets --------------------------------------------------------
// Binary container: magic "MLTR", version, dims (B,T,C,H,W), f64 dtype tag,
// row-major little-endian payload, trailing CRC32 of the payload.

void save_trajectories(const std::string& path,
                       const std::vector<Tensor>& trajs);  ///< each [T,C,H,W]
std::vector<Tensor> load_trajectories(const std::string& path);

// ---- configuration ----------------------------------------------------------

/// Flat key=value text: one pair per line, '#' starts a comment, blank lines
/// ignored. Consumers read typed values and then call
/// require_all_consumed(), which rejects unknown keys by name.
class Config {
public:
    static Config parse_file(const std::string& path);
    static Config parse_string(const std::string& text, const std::string& origin = "<string>");

    bool has(const std::string& key) const;
    std::string get_string(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    int64_t get_int(const std::string& key) const;
    int64_t get_int(const std::string& key, int64_t fallback) const;
    double get_double(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key) const;
    bool get_bool(const std::string& key, bool fallback) const;

    /// Throws ConfigError naming every key no getter ever touched.
    void require_all_consumed() const;

    const std::map<std::string, std::string>& entries() const { return kv_; }

private:
    std::string origin_;
    std::map<std::string, std::string> kv_;
    mutable std::set<std::string> used_;

    const std::string& raw(const std::string& key) const;
};

}  // namespace melisa
