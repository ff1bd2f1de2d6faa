#ifndef NLDIFF_PGM_HPP
#define NLDIFF_PGM_HPP

#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "nldiff/errors.hpp"
#include "nldiff/volume.hpp"

namespace nldiff {

namespace detail {

/// Next whitespace/comment-delimited header token. '#' starts a comment
/// running to end of line.
inline std::string pgm_token(std::istream& in) {
    std::string tok;
    int ch;
    while ((ch = in.get()) != EOF) {
        if (ch == '#') {
            while ((ch = in.get()) != EOF && ch != '\n') {}
            continue;
        }
        if (std::isspace(ch)) {
            if (!tok.empty()) return tok;
            continue;
        }
        tok.push_back(static_cast<char>(ch));
    }
    if (tok.empty()) throw format_error("pgm: unexpected end of file");
    return tok;
}

inline unsigned long pgm_number(std::istream& in, const char* what) {
    const std::string tok = pgm_token(in);
    std::size_t pos = 0;
    unsigned long value = 0;
    try {
        value = std::stoul(tok, &pos);
    } catch (const std::exception&) {
        throw format_error(std::string("pgm: bad ") + what + " '" + tok + "'");
    }
    if (pos != tok.size()) throw format_error(std::string("pgm: bad ") + what + " '" + tok + "'");
    return value;
}

} // namespace detail

/// Parse a P2 (ASCII) or P5 (binary) portable greymap. Samples are mapped
/// from [0, maxval] onto [0, 1]; dims come out {height, width} so the PGM
/// raster order matches the volume's flat order.
inline ImageVolume load_pgm(std::istream& in) {
    const std::string magic = detail::pgm_token(in);
    if (magic != "P2" && magic != "P5")
        throw format_error("pgm: unsupported magic number '" + magic + "'");
    const unsigned long width = detail::pgm_number(in, "width");
    const unsigned long height = detail::pgm_number(in, "height");
    const unsigned long maxval = detail::pgm_number(in, "maxval");
    if (width == 0 || height == 0) throw format_error("pgm: zero image dimension");
    if (maxval == 0 || maxval > 65535)
        throw format_error("pgm: maxval " + std::to_string(maxval) + " out of range");

    const std::size_t count = static_cast<std::size_t>(width) * height;
    std::vector<double> data(count);
    const double scale = 1.0 / static_cast<double>(maxval);

    if (magic == "P2") {
        for (std::size_t i = 0; i < count; ++i) {
            const unsigned long s = detail::pgm_number(in, "sample");
            if (s > maxval) throw format_error("pgm: sample exceeds maxval");
            data[i] = static_cast<double>(s) * scale;
        }
    } else {
        // P5: exactly one whitespace byte separates maxval from the raster.
        const std::size_t bytes_per = maxval < 256 ? 1 : 2;
        std::vector<unsigned char> raw(count * bytes_per);
        in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
        if (static_cast<std::size_t>(in.gcount()) != raw.size())
            throw format_error("pgm: truncated raster payload");
        for (std::size_t i = 0; i < count; ++i) {
            unsigned long s;
            if (bytes_per == 1)
                s = raw[i];
            else // two-byte samples are big-endian
                s = (static_cast<unsigned long>(raw[2 * i]) << 8) | raw[2 * i + 1];
            if (s > maxval) throw format_error("pgm: sample exceeds maxval");
            data[i] = static_cast<double>(s) * scale;
        }
    }
    return ImageVolume({height, width}, std::move(data));
}

/// Write a 2-D volume as PGM, quantizing [0,1] onto [0, max_grey] (values
/// outside [0,1] are clamped). Binary (P5) by default.
inline void save_pgm(const ImageVolume& v, std::ostream& out, unsigned max_grey = 255,
                     bool binary = true) {
    if (v.rank() != 2) throw std::invalid_argument("save_pgm: volume must be 2-D");
    if (max_grey == 0 || max_grey > 65535)
        throw std::invalid_argument("save_pgm: max_grey out of range");

    const std::size_t height = v.dims()[0];
    const std::size_t width = v.dims()[1];
    out << (binary ? "P5" : "P2") << "\n" << width << " " << height << "\n" << max_grey << "\n";

    const double scale = static_cast<double>(max_grey);
    if (binary) {
        std::vector<unsigned char> raw;
        raw.reserve(v.size() * (max_grey < 256 ? 1 : 2));
        for (std::size_t i = 0; i < v.size(); ++i) {
            const auto q = static_cast<unsigned long>(
                std::lround(std::clamp(v[i], 0.0, 1.0) * scale));
            if (max_grey < 256) {
                raw.push_back(static_cast<unsigned char>(q));
            } else {
                raw.push_back(static_cast<unsigned char>(q >> 8));
                raw.push_back(static_cast<unsigned char>(q & 0xff));
            }
        }
        out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    } else {
        for (std::size_t r = 0; r < height; ++r) {
            for (std::size_t c = 0; c < width; ++c) {
                if (c > 0) out << ' ';
                out << std::lround(std::clamp(v.at(r, c), 0.0, 1.0) * scale);
            }
            out << '\n';
        }
    }
    if (!out) throw io_error("save_pgm: write failed");
}

inline ImageVolume load_pgm_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open '" + path + "' for reading");
    return load_pgm(in);
}

inline void save_pgm_file(const ImageVolume& v, const std::string& path, unsigned max_grey = 255,
                          bool binary = true) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open '" + path + "' for writing");
    save_pgm(v, out, max_grey, binary);
}

} // namespace nldiff

#endif
