#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <iosfwd>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "redgan/errors.hpp"

namespace redgan {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major array. Value type: copies are deep.
template <class T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T(0))
        : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}
    Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data))
    {
        if (data_.size() != shape_numel(shape_))
            throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                                 " does not match shape " + shape_str(shape_));
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }
    T* ptr() noexcept { return data_.data(); }
    const T* ptr() const noexcept { return data_.data(); }
    std::vector<T>& storage() noexcept { return data_; }
    const std::vector<T>& storage() const noexcept { return data_; }

    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    // NCHW accessors; caller guarantees rank 4.
    T& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) noexcept
    {
        return data_[((n * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
    }
    const T& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const noexcept
    {
        return data_[((n * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
    }

    void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

    /// Same data, new shape with equal element count.
    Tensor reshaped(Shape shape) const
    {
        if (shape_numel(shape) != data_.size())
            throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
        return Tensor(std::move(shape), data_);
    }

    template <class U>
    Tensor<U> cast() const
    {
        std::vector<U> out(data_.begin(), data_.end());
        return Tensor<U>(shape_, std::move(out));
    }

    bool operator==(const Tensor& other) const = default;

private:
    Shape shape_;
    std::vector<T> data_;
};

template <class T>
bool all_finite(std::span<const T> values);

/// Throws NumericError naming `what` when any element is NaN/Inf.
template <class T>
void require_finite(const Tensor<T>& t, const char* what);

// ---------------------------------------------------------------------------
// RGT1 binary tensor format:
//   "RGT1" | u32 rank | rank x u32 extents | u8 dtype (0=f32,1=f64,2=u8) | payload
// All integers and payload little-endian.

enum class DType : std::uint8_t { F32 = 0, F64 = 1, U8 = 2 };

template <class T>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<float>() { return DType::F32; }
template <>
constexpr DType dtype_of<double>() { return DType::F64; }
template <>
constexpr DType dtype_of<std::uint8_t>() { return DType::U8; }

template <class T>
void write_rgt1(std::ostream& os, const Tensor<T>& t);

/// Reads one tensor; the stored dtype must be exactly T.
template <class T>
Tensor<T> read_rgt1(std::istream& is);

/// Reads a floating tensor stored as f32 or f64, converting to T.
template <class T>
Tensor<T> read_rgt1_float(std::istream& is);

// ---------------------------------------------------------------------------
// Named container: text header lines terminated by an empty line, then
// u32 entry count, then per entry u32 name length, name bytes, RGT1 tensor.

struct NamedEntry {
    std::string name;
    DType dtype = DType::F32;
    Shape shape;
    std::vector<std::uint8_t> payload; // raw little-endian bytes
};

struct NamedContainer {
    std::vector<std::string> header_lines;
    std::vector<NamedEntry> entries;

    template <class T>
    void add(std::string name, const Tensor<T>& t);

    const NamedEntry* find(const std::string& name) const;

    template <class T>
    Tensor<T> get_float(const std::string& name) const;
    Tensor<std::uint8_t> get_u8(const std::string& name) const;
};

void write_container(const std::string& path, const NamedContainer& c);
NamedContainer read_container(const std::string& path);
void write_container(std::ostream& os, const NamedContainer& c);
NamedContainer read_container(std::istream& is);

} // namespace redgan
