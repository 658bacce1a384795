#include "kinflow/tensor_io.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <vector>

namespace kinflow {

namespace {

constexpr std::array<char, 8> kMagic = {'K', 'F', 'T', 'E', 'N', 'S', 'R', '\0'};
constexpr Index kMaxElements = Index(1) << 32;

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
}

void put_f64(std::string& out, double v) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &v, sizeof(bits));
    put_u64(out, bits);
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;

    bool take(void* dst, std::size_t n) {
        if (pos + n > buf.size()) return false;
        std::memcpy(dst, buf.data() + pos, n);
        pos += n;
        return true;
    }

    bool u32(std::uint32_t& v) {
        std::array<unsigned char, 4> b{};
        if (!take(b.data(), 4)) return false;
        v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | b[static_cast<std::size_t>(i)];
        return true;
    }

    bool u64(std::uint64_t& v) {
        std::array<unsigned char, 8> b{};
        if (!take(b.data(), 8)) return false;
        v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | b[static_cast<std::size_t>(i)];
        return true;
    }

    bool f64(double& v) {
        std::uint64_t bits = 0;
        if (!u64(bits)) return false;
        std::memcpy(&v, &bits, sizeof(v));
        return true;
    }
};

}  // namespace

void write_tensor(const std::string& path, const Tensor& t) {
    require(t.rank() >= 1, "write_tensor: empty tensor");
    for (Index a = 0; a < t.rank(); ++a) {
        require(t.dim(a) > 0, "write_tensor: extents must be positive");
    }
    require(t.all_finite(), "write_tensor: values must be finite");

    std::string out;
    out.reserve(24 + static_cast<std::size_t>(t.rank()) * 8 +
                static_cast<std::size_t>(t.size()) * 8);
    out.append(kMagic.data(), kMagic.size());
    put_u32(out, kTensorFileVersion);
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (Index a = 0; a < t.rank(); ++a) {
        put_u64(out, static_cast<std::uint64_t>(t.dim(a)));
    }
    for (Index i = 0; i < t.size(); ++i) {
        put_f64(out, t.data()[i]);
    }

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) {
        throw FormatError("tensor file '" + path + "': cannot open for writing");
    }
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) {
        throw FormatError("tensor file '" + path + "': write failed");
    }
}

Tensor read_tensor(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw FormatError("tensor file '" + path + "': cannot open");
    }
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    Reader r{buf};

    std::array<char, 8> magic{};
    if (!r.take(magic.data(), magic.size()) || magic != kMagic) {
        throw FormatError("tensor file '" + path + "': bad magic");
    }
    std::uint32_t version = 0;
    if (!r.u32(version)) {
        throw FormatError("tensor file '" + path + "': truncated version");
    }
    if (version != kTensorFileVersion) {
        throw FormatError("tensor file '" + path + "': unsupported version " +
                          std::to_string(version));
    }
    std::uint32_t rank = 0;
    if (!r.u32(rank)) {
        throw FormatError("tensor file '" + path + "': truncated rank");
    }
    if (rank < 1 || rank > 4) {
        throw FormatError("tensor file '" + path + "': bad rank " + std::to_string(rank));
    }
    std::vector<Index> dims(rank);
    Index n = 1;
    for (std::uint32_t a = 0; a < rank; ++a) {
        std::uint64_t d = 0;
        if (!r.u64(d)) {
            throw FormatError("tensor file '" + path + "': truncated dims");
        }
        if (d == 0 || static_cast<Index>(d) > kMaxElements || n > kMaxElements / static_cast<Index>(d)) {
            throw FormatError("tensor file '" + path + "': bad dims");
        }
        dims[a] = static_cast<Index>(d);
        n *= dims[a];
    }

    const std::size_t expected = static_cast<std::size_t>(n) * 8;
    if (buf.size() - r.pos != expected) {
        throw FormatError("tensor file '" + path + "': bad payload length (expected " +
                          std::to_string(expected) + " bytes, got " +
                          std::to_string(buf.size() - r.pos) + ")");
    }

    Tensor t(dims);
    for (Index i = 0; i < n; ++i) {
        r.f64(t.data()[i]);
    }
    return t;
}

}  // namespace kinflow
