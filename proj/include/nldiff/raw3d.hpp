#ifndef NLDIFF_RAW3D_HPP
#define NLDIFF_RAW3D_HPP

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "nldiff/errors.hpp"
#include "nldiff/volume.hpp"

namespace nldiff {

/// Raw volume container: a small `key: value` text header next to a binary
/// payload file. Keys:
///
///   dims: m1 m2 [m3]          slowest axis first (last axis is fastest in
///                             the payload)
///   spacing: h1 h2 [h3]       optional, defaults to 1 per axis
///   dtype: u8 | u16 | f32
///   endian: little | big      optional, defaults to little
///   data: <payload filename>  optional, defaults to <header stem>.raw
///
/// u8/u16 samples are mapped onto [0,1]; f32 samples are taken as-is.
enum class RawDType { u8, u16, f32 };
enum class RawEndian { little, big };

struct Raw3dHeader {
    std::vector<std::size_t> dims;
    std::vector<double> spacing;
    RawDType dtype = RawDType::f32;
    RawEndian endian = RawEndian::little;
    std::string data_file; // may be empty
};

namespace detail {

inline Raw3dHeader parse_raw3d_header(std::istream& in) {
    Raw3dHeader h;
    bool have_dims = false, have_dtype = false;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto colon = line.find(':');
        if (colon == std::string::npos)
            throw format_error("raw3d: header line without ':' — '" + line + "'");
        const std::string key = line.substr(0, colon);
        std::istringstream value(line.substr(colon + 1));
        if (key == "dims") {
            std::size_t d;
            while (value >> d) h.dims.push_back(d);
            if (h.dims.empty() || h.dims.size() > 3)
                throw format_error("raw3d: dims must list 1 to 3 axis lengths");
            have_dims = true;
        } else if (key == "spacing") {
            double s;
            while (value >> s) h.spacing.push_back(s);
        } else if (key == "dtype") {
            std::string t;
            value >> t;
            if (t == "u8")
                h.dtype = RawDType::u8;
            else if (t == "u16")
                h.dtype = RawDType::u16;
            else if (t == "f32")
                h.dtype = RawDType::f32;
            else
                throw format_error("raw3d: unknown scalar type '" + t + "'");
            have_dtype = true;
        } else if (key == "endian") {
            std::string e;
            value >> e;
            if (e == "little")
                h.endian = RawEndian::little;
            else if (e == "big")
                h.endian = RawEndian::big;
            else
                throw format_error("raw3d: unknown endianness '" + e + "'");
        } else if (key == "data") {
            value >> h.data_file;
        }
        // other keys are ignored
    }
    if (!have_dims) throw format_error("raw3d: header is missing 'dims'");
    if (!have_dtype) throw format_error("raw3d: header is missing 'dtype'");
    if (!h.spacing.empty() && h.spacing.size() != h.dims.size())
        throw format_error("raw3d: spacing rank does not match dims");
    return h;
}

inline std::uint16_t byteswap16(std::uint16_t x) {
    return static_cast<std::uint16_t>((x >> 8) | (x << 8));
}

inline std::uint32_t byteswap32(std::uint32_t x) {
    return ((x & 0xff000000u) >> 24) | ((x & 0x00ff0000u) >> 8) | ((x & 0x0000ff00u) << 8) |
           ((x & 0x000000ffu) << 24);
}

inline bool host_is_little() { return std::endian::native == std::endian::little; }

} // namespace detail

inline ImageVolume load_raw3d(std::istream& header, std::istream& payload) {
    const Raw3dHeader h = detail::parse_raw3d_header(header);
    std::size_t count = 1;
    for (std::size_t d : h.dims) count *= d;

    const std::size_t bytes_per =
        h.dtype == RawDType::u8 ? 1 : h.dtype == RawDType::u16 ? 2 : 4;
    std::vector<unsigned char> raw(count * bytes_per);
    payload.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(payload.gcount()) != raw.size())
        throw format_error("raw3d: payload size does not match dims");
    // trailing bytes mean the header lies about the shape
    if (payload.peek() != EOF) throw format_error("raw3d: payload larger than dims describe");

    const bool swap = (h.endian == RawEndian::little) != detail::host_is_little();
    std::vector<double> data(count);
    switch (h.dtype) {
        case RawDType::u8:
            for (std::size_t i = 0; i < count; ++i) data[i] = raw[i] / 255.0;
            break;
        case RawDType::u16:
            for (std::size_t i = 0; i < count; ++i) {
                std::uint16_t s;
                std::memcpy(&s, raw.data() + 2 * i, 2);
                if (swap) s = detail::byteswap16(s);
                data[i] = s / 65535.0;
            }
            break;
        case RawDType::f32:
            for (std::size_t i = 0; i < count; ++i) {
                std::uint32_t bits;
                std::memcpy(&bits, raw.data() + 4 * i, 4);
                if (swap) bits = detail::byteswap32(bits);
                float f;
                std::memcpy(&f, &bits, 4);
                data[i] = static_cast<double>(f);
            }
            break;
    }
    return ImageVolume(h.dims, std::move(data), h.spacing);
}

inline void save_raw3d(const ImageVolume& v, std::ostream& header, std::ostream& payload,
                       RawDType dtype = RawDType::f32, RawEndian endian = RawEndian::little,
                       const std::string& data_name = "") {
    header << "dims:";
    for (std::size_t d : v.dims()) header << ' ' << d;
    header << "\nspacing:";
    char buf[64];
    for (double s : v.spacing()) {
        std::snprintf(buf, sizeof buf, " %.17g", s);
        header << buf;
    }
    header << "\ndtype: " << (dtype == RawDType::u8 ? "u8" : dtype == RawDType::u16 ? "u16" : "f32")
           << "\nendian: " << (endian == RawEndian::little ? "little" : "big") << "\n";
    if (!data_name.empty()) header << "data: " << data_name << "\n";

    const bool swap = (endian == RawEndian::little) != detail::host_is_little();
    std::vector<unsigned char> raw;
    switch (dtype) {
        case RawDType::u8:
            raw.resize(v.size());
            for (std::size_t i = 0; i < v.size(); ++i)
                raw[i] = static_cast<unsigned char>(std::lround(std::clamp(v[i], 0.0, 1.0) * 255.0));
            break;
        case RawDType::u16:
            raw.resize(v.size() * 2);
            for (std::size_t i = 0; i < v.size(); ++i) {
                auto s = static_cast<std::uint16_t>(
                    std::lround(std::clamp(v[i], 0.0, 1.0) * 65535.0));
                if (swap) s = detail::byteswap16(s);
                std::memcpy(raw.data() + 2 * i, &s, 2);
            }
            break;
        case RawDType::f32:
            raw.resize(v.size() * 4);
            for (std::size_t i = 0; i < v.size(); ++i) {
                const auto f = static_cast<float>(v[i]);
                std::uint32_t bits;
                std::memcpy(&bits, &f, 4);
                if (swap) bits = detail::byteswap32(bits);
                std::memcpy(raw.data() + 4 * i, &bits, 4);
            }
            break;
    }
    payload.write(reinterpret_cast<const char*>(raw.data()),
                  static_cast<std::streamsize>(raw.size()));
    if (!header || !payload) throw io_error("save_raw3d: write failed");
}

/// Payload path for a header path: the `data:` key resolved next to the
/// header, or the header's stem with a .raw extension.
inline std::filesystem::path raw3d_payload_path(const std::filesystem::path& header_path,
                                                const std::string& data_file) {
    std::filesystem::path p =
        data_file.empty() ? header_path.filename().replace_extension(".raw")
                          : std::filesystem::path(data_file);
    return header_path.parent_path() / p;
}

inline ImageVolume load_raw3d_file(const std::string& header_path) {
    std::ifstream hdr(header_path);
    if (!hdr) throw io_error("cannot open '" + header_path + "' for reading");
    std::stringstream hdr_copy;
    hdr_copy << hdr.rdbuf();

    Raw3dHeader parsed;
    {
        std::istringstream probe(hdr_copy.str());
        parsed = detail::parse_raw3d_header(probe);
    }
    const auto payload_path = raw3d_payload_path(header_path, parsed.data_file);
    std::ifstream payload(payload_path, std::ios::binary);
    if (!payload) throw io_error("cannot open payload '" + payload_path.string() + "'");
    hdr_copy.seekg(0);
    return load_raw3d(hdr_copy, payload);
}

inline void save_raw3d_file(const ImageVolume& v, const std::string& header_path,
                            RawDType dtype = RawDType::f32,
                            RawEndian endian = RawEndian::little) {
    const auto payload_path = raw3d_payload_path(header_path, "");
    std::ofstream hdr(header_path);
    if (!hdr) throw io_error("cannot open '" + header_path + "' for writing");
    std::ofstream payload(payload_path, std::ios::binary);
    if (!payload) throw io_error("cannot open '" + payload_path.string() + "' for writing");
    save_raw3d(v, hdr, payload, dtype, endian, payload_path.filename().string());
}

} // namespace nldiff

#endif
