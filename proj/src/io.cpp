#include "melisa/io.hpp"

#include <zlib.h>

#include <bit>
#include <cerrno>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace melisa {

namespace {

// Explicit little-endian codec so the formats are identical on every host.

void put_u16(std::string& out, uint16_t v) {
    out.push_back(char(v & 0xff));
    out.push_back(char(v >> 8));
}

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) {
    put_u64(out, std::bit_cast<uint64_t>(v));
}

/// Sequential reader over an in-memory file image with bounds checking.
struct Cursor {
    const std::string& buf;
    size_t pos = 0;
    std::string file;

    void need(size_t n) const {
        if (pos + n > buf.size())
            throw DataError(file + ": truncated at byte " + std::to_string(pos));
    }
    uint8_t u8() {
        need(1);
        return uint8_t(buf[pos++]);
    }
    uint16_t u16() {
        need(2);
        uint16_t v = uint16_t(uint8_t(buf[pos])) | uint16_t(uint8_t(buf[pos + 1])) << 8;
        pos += 2;
        return v;
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= uint32_t(uint8_t(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= uint64_t(uint8_t(buf[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string bytes(size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

uint32_t payload_crc(const std::string& buf, size_t off, size_t len) {
    uLong crc = crc32(0L, Z_NULL, 0);
    return uint32_t(crc32(crc, reinterpret_cast<const Bytef*>(buf.data() + off),
                          uInt(len)));
}

constexpr uint16_t kFormatVersion = 1;

}  // namespace

void write_file_atomic(const std::string& path, const std::string& bytes) {
    std::filesystem::path target(path);
    std::filesystem::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw DataError("cannot open for writing: " + tmp.string());
        f.write(bytes.data(), std::streamsize(bytes.size()));
        f.flush();
        if (!f) throw DataError("write failed: " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, target, ec);
    if (ec)
        throw DataError("rename " + tmp.string() + " -> " + target.string() +
                        ": " + ec.message());
}

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    if (!f && !f.eof()) throw DataError("read failed: " + path);
    return ss.str();
}

// ---- checkpoints ------------------------------------------------------------

void save_checkpoint(const std::string& path, const NetConfig& cfg,
                     const ParamStore& ps) {
    std::string out;
    out.reserve(size_t(ps.total_elements()) * 8 + 4096);
    out += "MLSA";
    put_u16(out, kFormatVersion);
    for (int v : {cfg.depth, cfg.width, cfg.window, cfg.channels, cfg.height,
                  cfg.width_s, cfg.embed, cfg.groups})
        put_u32(out, uint32_t(v));
    put_u32(out, uint32_t(ps.size()));
    for (size_t i = 0; i < ps.size(); ++i) {
        const std::string& name = ps.name(int(i));
        const Tensor& t = ps.value(int(i));
        put_u32(out, uint32_t(name.size()));
        out += name;
        put_u64(out, uint64_t(t.numel()));
        for (int64_t j = 0; j < t.numel(); ++j) put_f64(out, t[j]);
    }
    write_file_atomic(path, out);
}

DenoiserNet load_checkpoint(const std::string& path) {
    std::string buf = read_file(path);
    Cursor c{buf, 0, path};
    if (c.bytes(4) != "MLSA") throw DataError(path + ": bad checkpoint magic");
    uint16_t ver = c.u16();
    if (ver != kFormatVersion)
        throw DataError(path + ": unsupported checkpoint version " +
                        std::to_string(ver));
    NetConfig cfg;
    cfg.depth = int(c.u32());
    cfg.width = int(c.u32());
    cfg.window = int(c.u32());
    cfg.channels = int(c.u32());
    cfg.height = int(c.u32());
    cfg.width_s = int(c.u32());
    cfg.embed = int(c.u32());
    cfg.groups = int(c.u32());
    try {
        cfg.validate();
    } catch (const std::exception& e) {
        throw DataError(path + ": invalid architecture: " + e.what());
    }
    DenoiserNet net(cfg, 0);
    ParamStore& ps = net.params();
    uint32_t n = c.u32();
    if (n != ps.size())
        throw DataError(path + ": parameter count " + std::to_string(n) +
                        " does not match architecture (" +
                        std::to_string(ps.size()) + ")");
    for (uint32_t i = 0; i < n; ++i) {
        uint32_t len = c.u32();
        std::string name = c.bytes(len);
        if (name != ps.name(int(i)))
            throw DataError(path + ": parameter " + std::to_string(i) +
                            " is '" + name + "', expected '" + ps.name(int(i)) +
                            "'");
        uint64_t count = c.u64();
        Tensor& t = ps.value(int(i));
        if (count != uint64_t(t.numel()))
            throw DataError(path + ": parameter '" + name + "' has " +
                            std::to_string(count) + " elements, expected " +
                            std::to_string(t.numel()));
        for (int64_t j = 0; j < t.numel(); ++j) t[j] = c.f64();
    }
    if (c.pos != buf.size())
        throw DataError(path + ": trailing bytes after checkpoint payload");
    return net;
}

// ---- trajectory sets --------------------------------------------------------

void save_trajectories(const std::string& path,
                       const std::vector<Tensor>& trajs) {
    if (trajs.empty()) throw DataError("trajectory set is empty");
    const Tensor& first = trajs.front();
    if (first.rank() != 4)
        throw DataError("trajectories must be [T,C,H,W] tensors");
    for (const Tensor& t : trajs)
        if (!t.same_shape(first))
            throw DataError("trajectories must share one shape; got " +
                            t.shape_str() + " vs " + first.shape_str());
    std::string out;
    out.reserve(size_t(first.numel()) * trajs.size() * 8 + 64);
    out += "MLTR";
    put_u16(out, kFormatVersion);
    put_u32(out, uint32_t(trajs.size()));
    for (int i = 0; i < 4; ++i) put_u32(out, uint32_t(first.dim(i)));
    out.push_back(char(1));  // dtype: f64
    size_t payload_off = out.size();
    for (const Tensor& t : trajs)
        for (int64_t j = 0; j < t.numel(); ++j) put_f64(out, t[j]);
    put_u32(out, payload_crc(out, payload_off, out.size() - payload_off));
    write_file_atomic(path, out);
}

std::vector<Tensor> load_trajectories(const std::string& path) {
    std::string buf = read_file(path);
    Cursor c{buf, 0, path};
    if (c.bytes(4) != "MLTR") throw DataError(path + ": bad trajectory magic");
    uint16_t ver = c.u16();
    if (ver != kFormatVersion)
        throw DataError(path + ": unsupported trajectory version " +
                        std::to_string(ver));
    uint32_t B = c.u32(), T = c.u32(), C = c.u32(), H = c.u32(), W = c.u32();
    uint8_t dtype = c.u8();
    if (dtype != 1)
        throw DataError(path + ": unsupported dtype tag " + std::to_string(dtype));
    if (B == 0 || T == 0 || C == 0 || H == 0 || W == 0)
        throw DataError(path + ": zero dimension in header");
    size_t payload_off = c.pos;
    uint64_t count = uint64_t(B) * T * C * H * W;
    uint64_t payload_len = count * 8;
    c.need(payload_len + 4);
    uint32_t want_crc = payload_crc(buf, payload_off, payload_len);
    Cursor tail{buf, payload_off + size_t(payload_len), path};
    uint32_t got_crc = tail.u32();
    if (want_crc != got_crc) {
        std::ostringstream msg;
        msg << path << ": payload CRC mismatch at byte " << payload_off
            << " (stored " << std::hex << got_crc << ", computed " << want_crc
            << ")";
        throw DataError(msg.str());
    }
    if (tail.pos != buf.size())
        throw DataError(path + ": trailing bytes after CRC");
    std::vector<Tensor> trajs;
    trajs.reserve(B);
    for (uint32_t b = 0; b < B; ++b) {
        Tensor t({int(T), int(C), int(H), int(W)});
        for (int64_t j = 0; j < t.numel(); ++j) t[j] = c.f64();
        trajs.push_back(std::move(t));
    }
    return trajs;
}

// ---- configuration ----------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

Config Config::parse_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_string(ss.str(), path);
}

Config Config::parse_string(const std::string& text, const std::string& origin) {
    Config cfg;
    cfg.origin_ = origin;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(lineno) +
                              ": expected key=value, got '" + line + "'");
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError(origin + ":" + std::to_string(lineno) +
                              ": empty key");
        if (cfg.kv_.count(key))
            throw ConfigError(origin + ":" + std::to_string(lineno) +
                              ": duplicate key '" + key + "'");
        cfg.kv_[key] = val;
    }
    return cfg;
}

bool Config::has(const std::string& key) const {
    if (kv_.count(key)) {
        used_.insert(key);
        return true;
    }
    return false;
}

const std::string& Config::raw(const std::string& key) const {
    auto it = kv_.find(key);
    if (it == kv_.end())
        throw ConfigError(origin_ + ": missing required key '" + key + "'");
    used_.insert(key);
    return it->second;
}

std::string Config::get_string(const std::string& key) const { return raw(key); }

std::string Config::get_string(const std::string& key,
                               const std::string& fallback) const {
    used_.insert(key);
    auto it = kv_.find(key);
    return it == kv_.end() ? fallback : it->second;
}

int64_t Config::get_int(const std::string& key) const {
    const std::string& v = raw(key);
    try {
        size_t used = 0;
        int64_t r = std::stoll(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError(origin_ + ": key '" + key + "' is not an integer: '" +
                          v + "'");
    }
}

int64_t Config::get_int(const std::string& key, int64_t fallback) const {
    used_.insert(key);
    return kv_.count(key) ? get_int(key) : fallback;
}

double Config::get_double(const std::string& key) const {
    const std::string& v = raw(key);
    try {
        size_t used = 0;
        double r = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError(origin_ + ": key '" + key + "' is not a number: '" +
                          v + "'");
    }
}

double Config::get_double(const std::string& key, double fallback) const {
    used_.insert(key);
    return kv_.count(key) ? get_double(key) : fallback;
}

bool Config::get_bool(const std::string& key) const {
    const std::string& v = raw(key);
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError(origin_ + ": key '" + key + "' is not a boolean: '" + v +
                      "'");
}

bool Config::get_bool(const std::string& key, bool fallback) const {
    used_.insert(key);
    return kv_.count(key) ? get_bool(key) : fallback;
}

void Config::require_all_consumed() const {
    std::string unknown;
    for (const auto& [k, v] : kv_)
        if (!used_.count(k)) unknown += (unknown.empty() ? "" : ", ") + k;
    if (!unknown.empty())
        throw ConfigError(origin_ + ": unknown keys: " + unknown);
}

}  // namespace melisa
