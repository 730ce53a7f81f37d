#include "tamperloc/netpbm.hpp"

#include <cctype>
#include <fstream>

namespace tamperloc {

ImageU8 ImageU8::make(Index h, Index w, Index channels, std::uint8_t fill) {
  if (h < 1 || w < 1 || (channels != 1 && channels != 3)) {
    throw ConfigError("bad image dims " + std::to_string(h) + "x" +
                      std::to_string(w) + "x" + std::to_string(channels));
  }
  ImageU8 img;
  img.h = h;
  img.w = w;
  img.channels = channels;
  img.v.assign(static_cast<size_t>(h * w * channels), fill);
  return img;
}

namespace {

// reads one whitespace-separated token, skipping '#' comment lines
std::string next_token(std::istream& in) {
  std::string tok;
  int ch = in.get();
  while (ch != EOF) {
    if (ch == '#') {
      while (ch != EOF && ch != '\n') ch = in.get();
    } else if (std::isspace(ch)) {
      ch = in.get();
    } else {
      break;
    }
  }
  while (ch != EOF && !std::isspace(ch) && ch != '#') {
    tok.push_back(static_cast<char>(ch));
    ch = in.get();
  }
  if (ch == '#') in.unget();
  return tok;
}

long parse_dim(const std::string& tok, const std::string& path,
               const char* what) {
  if (tok.empty()) throw IoError(path + ": truncated header, missing " + what);
  for (char c : tok) {
    if (!std::isdigit(static_cast<unsigned char>(c))) {
      throw IoError(path + ": bad " + what + " '" + tok + "'");
    }
  }
  long val = std::stol(tok);
  if (val < 1) throw IoError(path + ": bad " + what + " '" + tok + "'");
  return val;
}

}  // namespace

ImageU8 read_netpbm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open for reading");

  std::string magic = next_token(in);
  Index channels = 0;
  if (magic == "P6") {
    channels = 3;
  } else if (magic == "P5") {
    channels = 1;
  } else {
    throw IoError(path + ": unsupported magic '" + magic +
                  "' (want P5 or P6)");
  }

  long w = parse_dim(next_token(in), path, "width");
  long h = parse_dim(next_token(in), path, "height");
  long maxval = parse_dim(next_token(in), path, "maxval");
  if (maxval != 255) {
    throw IoError(path + ": maxval " + std::to_string(maxval) +
                  " unsupported (want 255)");
  }
  // header ends with exactly one whitespace byte, already consumed by the
  // tokenizer

  ImageU8 img = ImageU8::make(h, w, channels);
  in.read(reinterpret_cast<char*>(img.v.data()),
          static_cast<std::streamsize>(img.v.size()));
  if (static_cast<size_t>(in.gcount()) != img.v.size()) {
    throw IoError(path + ": truncated pixel data (got " +
                  std::to_string(in.gcount()) + " of " +
                  std::to_string(img.v.size()) + " bytes)");
  }
  return img;
}

void write_netpbm(const std::string& path, const ImageU8& img) {
  if (img.channels != 1 && img.channels != 3) {
    throw ConfigError("image has " + std::to_string(img.channels) +
                      " channels, netpbm wants 1 or 3");
  }
  if (img.v.size() != static_cast<size_t>(img.h * img.w * img.channels)) {
    throw ConfigError("image buffer size does not match dims");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path + ": cannot open for writing");
  out << (img.channels == 3 ? "P6" : "P5") << "\n"
      << img.w << " " << img.h << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.v.data()),
            static_cast<std::streamsize>(img.v.size()));
  if (!out) throw IoError(path + ": write failed");
}

}  // namespace tamperloc
