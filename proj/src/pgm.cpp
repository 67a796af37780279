#include "racer/pgm.hpp"

#include <fstream>
#include <string>

#include "racer/errors.hpp"

namespace racer::imaging {

namespace {

// Reads the next header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& in) {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {
            }
            continue;
        }
        if (std::isspace(c)) {
            if (!tok.empty()) break;
            continue;
        }
        tok.push_back(static_cast<char>(c));
    }
    return tok;
}

}  // namespace

Frame read_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    if (next_token(in) != "P5") throw FormatError(path.string() + ": not a binary PGM (P5)");
    int w = 0, h = 0, maxval = 0;
    try {
        w = std::stoi(next_token(in));
        h = std::stoi(next_token(in));
        maxval = std::stoi(next_token(in));
    } catch (const std::exception&) {
        throw FormatError(path.string() + ": malformed PGM header");
    }
    if (w <= 0 || h <= 0 || maxval != 255) throw FormatError(path.string() + ": unsupported PGM geometry or maxval");
    std::vector<std::uint8_t> data(static_cast<std::size_t>(w) * h);
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (in.gcount() != static_cast<std::streamsize>(data.size()))
        throw CorruptionError(path.string() + ": truncated PGM payload");
    return Frame(w, h, std::move(data));
}

void write_pgm(const std::filesystem::path& path, const Frame& frame) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "P5\n" << frame.width << ' ' << frame.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(frame.pixels.data()), static_cast<std::streamsize>(frame.pixels.size()));
}

void write_edge_pgm(const std::filesystem::path& path, const EdgeMap& edge) {
    Frame f(EdgeMap::kSize, EdgeMap::kSize);
    for (std::size_t i = 0; i < edge.bits.size(); ++i) f.pixels[i] = edge.bits[i] ? 255 : 0;
    write_pgm(path, f);
}

}  // namespace racer::imaging
