#include "eqr/netpbm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "eqr/error.hpp"

namespace eqr {
namespace {

[[noreturn]] void parse_fail(std::size_t offset, const std::string& what)
{
    throw_error(ErrorKind::Parse, "netpbm: " + what + " at byte offset " + std::to_string(offset));
}

class HeaderReader {
public:
    explicit HeaderReader(const std::string& bytes) : bytes_(bytes) {}

    void skip_whitespace_and_comments()
    {
        while (pos_ < bytes_.size()) {
            const auto c = static_cast<unsigned char>(bytes_[pos_]);
            if (c == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
            } else if (std::isspace(c)) {
                ++pos_;
            } else {
                break;
            }
        }
    }

    long read_uint(const char* field)
    {
        skip_whitespace_and_comments();
        const std::size_t start = pos_;
        long value = 0;
        while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
            value = value * 10 + (bytes_[pos_] - '0');
            if (value > 1'000'000'000L) parse_fail(start, std::string(field) + " too large");
            ++pos_;
        }
        if (pos_ == start) parse_fail(start, std::string("expected ") + field);
        return value;
    }

    // Exactly one whitespace byte separates maxval from the raster.
    void consume_single_whitespace()
    {
        if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
            parse_fail(pos_, "expected whitespace before raster");
        }
        ++pos_;
    }

    std::size_t pos() const noexcept { return pos_; }
    void advance(std::size_t n) noexcept { pos_ += n; }

private:
    const std::string& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

Image parse_netpbm(const std::string& bytes)
{
    if (bytes.size() < 2 || bytes[0] != 'P') parse_fail(0, "missing magic number");
    int channels = 0;
    if (bytes[1] == '5') {
        channels = 1;
    } else if (bytes[1] == '6') {
        channels = 3;
    } else {
        parse_fail(1, "unsupported magic P" + std::string(1, bytes[1]) + " (P5 and P6 only)");
    }
    HeaderReader reader(bytes);
    reader.advance(2);
    const long width = reader.read_uint("width");
    const long height = reader.read_uint("height");
    const std::size_t maxval_offset = reader.pos();
    const long maxval = reader.read_uint("maxval");
    if (width <= 0 || height <= 0) parse_fail(maxval_offset, "non-positive image size");
    if (maxval <= 0 || maxval > 65535) parse_fail(maxval_offset, "maxval out of range");
    reader.consume_single_whitespace();

    const std::size_t bytes_per_sample = maxval > 255 ? 2 : 1;
    const std::size_t samples =
        static_cast<std::size_t>(width) * static_cast<std::size_t>(height) *
        static_cast<std::size_t>(channels);
    const std::size_t start = reader.pos();
    if (bytes.size() - start < samples * bytes_per_sample) {
        parse_fail(bytes.size(), "truncated payload (expected " +
                                     std::to_string(samples * bytes_per_sample) + " bytes, found " +
                                     std::to_string(bytes.size() - start) + ")");
    }

    std::vector<double> data(samples);
    const double scale = static_cast<double>(maxval);
    for (std::size_t i = 0; i < samples; ++i) {
        unsigned value = 0;
        if (bytes_per_sample == 1) {
            value = static_cast<unsigned char>(bytes[start + i]);
        } else {
            value = (static_cast<unsigned>(static_cast<unsigned char>(bytes[start + 2 * i])) << 8) |
                    static_cast<unsigned char>(bytes[start + 2 * i + 1]);
        }
        if (value > static_cast<unsigned>(maxval)) {
            parse_fail(start + i * bytes_per_sample, "sample exceeds maxval");
        }
        data[i] = static_cast<double>(value) / scale;
    }
    return Image(Shape{static_cast<int>(height), static_cast<int>(width), channels},
                 std::move(data));
}

Image read_netpbm(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    try {
        return parse_netpbm(buffer.str());
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::Parse) throw_error(ErrorKind::Parse, path.string() + ": " + e.what());
        throw;
    }
}

std::string encode_netpbm(const Image& img, int maxval)
{
    require(maxval == 255 || maxval == 65535, ErrorKind::Config, "maxval must be 255 or 65535");
    require(img.channels() == 1 || img.channels() == 3, ErrorKind::Dimension,
            "netpbm output needs 1 or 3 channels");
    std::string out = (img.channels() == 1 ? "P5\n" : "P6\n") + std::to_string(img.width()) + " " +
                      std::to_string(img.height()) + "\n" + std::to_string(maxval) + "\n";
    const std::size_t header = out.size();
    const std::size_t bps = maxval > 255 ? 2 : 1;
    out.resize(header + img.size() * bps);
    for (std::size_t i = 0; i < img.size(); ++i) {
        const double v = std::clamp(img[i], 0.0, 1.0);
        const auto q = static_cast<unsigned>(std::lround(v * maxval));
        if (bps == 1) {
            out[header + i] = static_cast<char>(q);
        } else {
            out[header + 2 * i] = static_cast<char>(q >> 8);
            out[header + 2 * i + 1] = static_cast<char>(q & 0xFFu);
        }
    }
    return out;
}

void write_netpbm(const Image& img, const std::filesystem::path& path, int maxval)
{
    const std::string bytes = encode_netpbm(img, maxval);
    std::ofstream out(path, std::ios::binary);
    require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    require(static_cast<bool>(out), ErrorKind::Io, "short write to " + path.string());
}

}  // namespace eqr
