#include "swinfuse/weights.hpp"

#include <zlib.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>

namespace swinfuse {

void WeightStore::add(std::string name, Tensor<float> tensor) {
    if (contains(name)) throw ContractError("weight store already holds tensor '" + name + "'");
    entries_.emplace_back(std::move(name), std::move(tensor));
}

bool WeightStore::contains(const std::string& name) const {
    for (const auto& [n, t] : entries_)
        if (n == name) return true;
    return false;
}

const Tensor<float>& WeightStore::get(const std::string& name) const {
    for (const auto& [n, t] : entries_)
        if (n == name) return t;
    throw FormatError("weight store has no tensor '" + name + "'");
}

namespace {

constexpr char kMagic[4] = {'S', 'W', 'N', 'F'};
constexpr std::uint32_t kVersion = 1;

static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559,
              "SWNF requires IEEE-754 binary32");

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    out.push_back(static_cast<unsigned char>(v & 0xff));
    out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
    out.push_back(static_cast<unsigned char>((v >> 16) & 0xff));
    out.push_back(static_cast<unsigned char>((v >> 24) & 0xff));
}

void put_f32(std::vector<unsigned char>& out, float f) {
    put_u32(out, std::bit_cast<std::uint32_t>(f));
}

struct Reader {
    const unsigned char* p;
    std::size_t len;
    std::size_t off = 0;

    std::uint32_t u32(const char* what) {
        if (off + 4 > len) throw FormatError(std::string("SWNF truncated reading ") + what);
        const std::uint32_t v = static_cast<std::uint32_t>(p[off]) |
                                (static_cast<std::uint32_t>(p[off + 1]) << 8) |
                                (static_cast<std::uint32_t>(p[off + 2]) << 16) |
                                (static_cast<std::uint32_t>(p[off + 3]) << 24);
        off += 4;
        return v;
    }
    float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
    void bytes(void* dst, std::size_t n, const char* what) {
        if (off + n > len) throw FormatError(std::string("SWNF truncated reading ") + what);
        std::memcpy(dst, p + off, n);
        off += n;
    }
};

std::uint32_t crc_of(const unsigned char* data, std::size_t len) {
    return static_cast<std::uint32_t>(
        crc32(crc32(0L, nullptr, 0), data, static_cast<uInt>(len)));
}

} // namespace

void save_weights(const WeightStore& store, const std::filesystem::path& path) {
    std::vector<unsigned char> buf;
    buf.insert(buf.end(), kMagic, kMagic + 4);
    put_u32(buf, kVersion);
    put_u32(buf, static_cast<std::uint32_t>(store.count()));
    for (const auto& [name, tensor] : store.entries()) {
        put_u32(buf, static_cast<std::uint32_t>(name.size()));
        buf.insert(buf.end(), name.begin(), name.end());
        put_u32(buf, static_cast<std::uint32_t>(tensor.rank()));
        for (std::size_t d : tensor.shape()) put_u32(buf, static_cast<std::uint32_t>(d));
        for (float v : tensor.data()) put_f32(buf, v);
    }
    put_u32(buf, crc_of(buf.data(), buf.size()));

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write weight file " + path.string());
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("failed writing weight file " + path.string());
}

WeightStore load_weights(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open weight file " + path.string());
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (!in.good() && !in.eof()) throw IoError("failed reading weight file " + path.string());

    // magic + version + count + crc is the minimum valid file
    if (buf.size() < 16) throw FormatError("SWNF file too short: " + path.string());

    // the trailing CRC covers everything else; verify before parsing
    Reader tail{buf.data(), buf.size(), buf.size() - 4};
    const std::uint32_t stored_crc = tail.u32("crc");
    const std::uint32_t actual_crc = crc_of(buf.data(), buf.size() - 4);
    if (stored_crc != actual_crc)
        throw FormatError("SWNF CRC mismatch in " + path.string());

    Reader r{buf.data(), buf.size() - 4};
    char magic[4];
    r.bytes(magic, 4, "magic");
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError("SWNF bad magic in " + path.string());
    const std::uint32_t version = r.u32("version");
    if (version != kVersion)
        throw FormatError("SWNF unsupported version " + std::to_string(version) + " in " + path.string());

    WeightStore store;
    const std::uint32_t count = r.u32("tensor count");
    for (std::uint32_t t = 0; t < count; ++t) {
        const std::uint32_t name_len = r.u32("name length");
        if (r.off + name_len > r.len) throw FormatError("SWNF truncated reading tensor name");
        std::string name(reinterpret_cast<const char*>(r.p + r.off), name_len);
        r.off += name_len;

        const std::uint32_t rank = r.u32("rank");
        std::vector<std::size_t> shape(rank);
        std::size_t numel = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            shape[d] = r.u32("dim");
            if (shape[d] == 0) throw FormatError("SWNF zero dimension in tensor '" + name + "'");
            numel *= shape[d];
        }
        if (r.off + numel * 4 > r.len)
            throw FormatError("SWNF truncated reading data of tensor '" + name + "'");
        std::vector<float> data(numel);
        for (std::size_t i = 0; i < numel; ++i) data[i] = r.f32("data");
        store.add(std::move(name), Tensor<float>(std::move(shape), std::move(data)));
    }
    if (r.off != r.len)
        throw FormatError("SWNF trailing garbage in " + path.string());
    return store;
}

} // namespace swinfuse
