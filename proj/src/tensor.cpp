#include "redgan/tensor.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace redgan {

std::size_t shape_numel(const Shape& shape)
{
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape)
{
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

template <class T>
bool all_finite(std::span<const T> values)
{
    for (T v : values)
        if (!std::isfinite(v)) return false;
    return true;
}

template <class T>
void require_finite(const Tensor<T>& t, const char* what)
{
    if (!all_finite(t.data())) throw NumericError(std::string("non-finite value produced by ") + what);
}

template bool all_finite<float>(std::span<const float>);
template bool all_finite<double>(std::span<const double>);
template void require_finite<float>(const Tensor<float>&, const char*);
template void require_finite<double>(const Tensor<double>&, const char*);

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

void put_u32(std::ostream& os, std::uint32_t v)
{
    const char b[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff), char((v >> 24) & 0xff)};
    os.write(b, 4);
}

std::uint32_t get_u32(std::istream& is)
{
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw FormatError("truncated stream reading u32");
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
           (std::uint32_t(b[3]) << 24);
}

std::size_t dtype_size(DType d)
{
    switch (d) {
    case DType::F32: return 4;
    case DType::F64: return 8;
    case DType::U8: return 1;
    }
    throw FormatError("unknown dtype");
}

// Copies `n` elements of width `w` between host order and little-endian.
void to_le(const void* src, std::uint8_t* dst, std::size_t n, std::size_t w)
{
    std::memcpy(dst, src, n * w);
    if constexpr (std::endian::native == std::endian::big) {
        for (std::size_t i = 0; i < n; ++i) std::reverse(dst + i * w, dst + (i + 1) * w);
    }
}

void from_le(const std::uint8_t* src, void* dst, std::size_t n, std::size_t w)
{
    std::memcpy(dst, src, n * w);
    if constexpr (std::endian::native == std::endian::big) {
        auto* d = static_cast<std::uint8_t*>(dst);
        for (std::size_t i = 0; i < n; ++i) std::reverse(d + i * w, d + (i + 1) * w);
    }
}

struct RawTensor {
    DType dtype;
    Shape shape;
    std::vector<std::uint8_t> payload;
};

void write_raw(std::ostream& os, DType dtype, const Shape& shape, const std::uint8_t* payload, std::size_t bytes)
{
    os.write("RGT1", 4);
    put_u32(os, static_cast<std::uint32_t>(shape.size()));
    for (auto e : shape) put_u32(os, static_cast<std::uint32_t>(e));
    const char d = static_cast<char>(dtype);
    os.write(&d, 1);
    os.write(reinterpret_cast<const char*>(payload), static_cast<std::streamsize>(bytes));
}

RawTensor read_raw(std::istream& is)
{
    char magic[4];
    if (!is.read(magic, 4)) throw FormatError("truncated stream reading RGT1 magic");
    if (std::memcmp(magic, "RGT1", 4) != 0) throw FormatError("bad magic, expected RGT1");
    RawTensor r;
    const std::uint32_t rank = get_u32(is);
    if (rank > 8) throw FormatError("implausible tensor rank " + std::to_string(rank));
    for (std::uint32_t i = 0; i < rank; ++i) r.shape.push_back(get_u32(is));
    char d;
    if (!is.read(&d, 1)) throw FormatError("truncated stream reading dtype");
    if (static_cast<unsigned char>(d) > 2) throw FormatError("unknown dtype byte " + std::to_string(int(d)));
    r.dtype = static_cast<DType>(d);
    const std::size_t bytes = shape_numel(r.shape) * dtype_size(r.dtype);
    r.payload.resize(bytes);
    if (bytes && !is.read(reinterpret_cast<char*>(r.payload.data()), static_cast<std::streamsize>(bytes)))
        throw FormatError("truncated tensor payload");
    return r;
}

template <class T>
Tensor<T> decode(const RawTensor& r)
{
    Tensor<T> t(r.shape);
    from_le(r.payload.data(), t.ptr(), t.size(), sizeof(T));
    return t;
}

template <class T>
Tensor<T> decode_float(DType dtype, const Shape& shape, const std::vector<std::uint8_t>& payload)
{
    RawTensor r{dtype, shape, payload};
    if (dtype == DType::F32) return decode<float>(r).template cast<T>();
    if (dtype == DType::F64) return decode<double>(r).template cast<T>();
    throw FormatError("expected a floating-point tensor");
}

} // namespace

template <class T>
void write_rgt1(std::ostream& os, const Tensor<T>& t)
{
    std::vector<std::uint8_t> buf(t.size() * sizeof(T));
    to_le(t.ptr(), buf.data(), t.size(), sizeof(T));
    write_raw(os, dtype_of<T>(), t.shape(), buf.data(), buf.size());
}

template <class T>
Tensor<T> read_rgt1(std::istream& is)
{
    RawTensor r = read_raw(is);
    if (r.dtype != dtype_of<T>()) throw FormatError("RGT1 dtype mismatch");
    return decode<T>(r);
}

template <class T>
Tensor<T> read_rgt1_float(std::istream& is)
{
    RawTensor r = read_raw(is);
    return decode_float<T>(r.dtype, r.shape, r.payload);
}

template void write_rgt1<float>(std::ostream&, const Tensor<float>&);
template void write_rgt1<double>(std::ostream&, const Tensor<double>&);
template void write_rgt1<std::uint8_t>(std::ostream&, const Tensor<std::uint8_t>&);
template Tensor<float> read_rgt1<float>(std::istream&);
template Tensor<double> read_rgt1<double>(std::istream&);
template Tensor<std::uint8_t> read_rgt1<std::uint8_t>(std::istream&);
template Tensor<float> read_rgt1_float<float>(std::istream&);
template Tensor<double> read_rgt1_float<double>(std::istream&);

// ---------------------------------------------------------------------------

template <class T>
void NamedContainer::add(std::string name, const Tensor<T>& t)
{
    NamedEntry e;
    e.name = std::move(name);
    e.dtype = dtype_of<T>();
    e.shape = t.shape();
    e.payload.resize(t.size() * sizeof(T));
    to_le(t.ptr(), e.payload.data(), t.size(), sizeof(T));
    entries.push_back(std::move(e));
}

template void NamedContainer::add<float>(std::string, const Tensor<float>&);
template void NamedContainer::add<double>(std::string, const Tensor<double>&);
template void NamedContainer::add<std::uint8_t>(std::string, const Tensor<std::uint8_t>&);

const NamedEntry* NamedContainer::find(const std::string& name) const
{
    for (const auto& e : entries)
        if (e.name == name) return &e;
    return nullptr;
}

template <class T>
Tensor<T> NamedContainer::get_float(const std::string& name) const
{
    const NamedEntry* e = find(name);
    if (!e) throw FormatError("container has no entry '" + name + "'");
    return decode_float<T>(e->dtype, e->shape, e->payload);
}

template Tensor<float> NamedContainer::get_float<float>(const std::string&) const;
template Tensor<double> NamedContainer::get_float<double>(const std::string&) const;

Tensor<std::uint8_t> NamedContainer::get_u8(const std::string& name) const
{
    const NamedEntry* e = find(name);
    if (!e) throw FormatError("container has no entry '" + name + "'");
    if (e->dtype != DType::U8) throw FormatError("entry '" + name + "' is not u8");
    return decode<std::uint8_t>(RawTensor{e->dtype, e->shape, e->payload});
}

void write_container(std::ostream& os, const NamedContainer& c)
{
    for (const auto& line : c.header_lines) {
        if (line.empty() || line.find('\n') != std::string::npos)
            throw FormatError("container header lines must be non-empty single lines");
        os << line << '\n';
    }
    os << '\n';
    put_u32(os, static_cast<std::uint32_t>(c.entries.size()));
    for (const auto& e : c.entries) {
        put_u32(os, static_cast<std::uint32_t>(e.name.size()));
        os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
        write_raw(os, e.dtype, e.shape, e.payload.data(), e.payload.size());
    }
}

NamedContainer read_container(std::istream& is)
{
    NamedContainer c;
    std::string line;
    for (;;) {
        if (!std::getline(is, line)) throw FormatError("truncated container header");
        if (line.empty()) break;
        c.header_lines.push_back(line);
        if (c.header_lines.size() > 4096) throw FormatError("container header too long");
    }
    const std::uint32_t n = get_u32(is);
    for (std::uint32_t i = 0; i < n; ++i) {
        const std::uint32_t len = get_u32(is);
        if (len > 4096) throw FormatError("implausible entry name length");
        NamedEntry e;
        e.name.resize(len);
        if (len && !is.read(e.name.data(), len)) throw FormatError("truncated entry name");
        RawTensor r = read_raw(is);
        e.dtype = r.dtype;
        e.shape = std::move(r.shape);
        e.payload = std::move(r.payload);
        c.entries.push_back(std::move(e));
    }
    if (is.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after container");
    return c;
}

void write_container(const std::string& path, const NamedContainer& c)
{
    std::ostringstream buf(std::ios::binary);
    write_container(buf, c);
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    const std::string bytes = buf.str();
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw IoError("write failed for '" + path + "'");
}

NamedContainer read_container(const std::string& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path + "'");
    return read_container(is);
}

} // namespace redgan
