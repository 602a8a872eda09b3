// SPDX-License-Identifier: Apache-2.0
#include "hyrr/io.hpp"

#include <array>
#include <sstream>

#include <openssl/evp.h>

namespace hyrr::io {

BinaryWriter::BinaryWriter(const std::filesystem::path& path)
    : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
  if (!out_) throw Error("cannot write " + path.string());
}

void BinaryWriter::put_string(std::string_view s) {
  put<std::uint64_t>(s.size());
  out_.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void BinaryWriter::put_magic(std::string_view magic) {
  out_.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

void BinaryWriter::close() {
  out_.close();
  if (!out_) throw Error("write failed: " + path_.string());
}

BinaryReader::BinaryReader(const std::filesystem::path& path)
    : path_(path), in_(path, std::ios::binary) {
  if (!in_) throw Error("cannot open " + path.string());
}

void BinaryReader::read_raw(void* dst, std::size_t n) {
  in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in_.gcount()) != n) {
    throw Error("truncated file: " + path_.string());
  }
}

std::string BinaryReader::get_string() {
  const auto n = get<std::uint64_t>();
  if (n > (1ULL << 32)) throw Error("corrupt string length in " + path_.string());
  std::string s(n, '\0');
  read_raw(s.data(), n);
  return s;
}

void BinaryReader::expect_magic(std::string_view magic) {
  std::string got(magic.size(), '\0');
  in_.read(got.data(), static_cast<std::streamsize>(got.size()));
  if (static_cast<std::size_t>(in_.gcount()) != magic.size() || got != magic) {
    throw Error(path_.string() + ": not a " + std::string(magic) + " file");
  }
}

void BinaryReader::expect_end() {
  if (in_.peek() != std::char_traits<char>::eof()) {
    throw Error(path_.string() + ": trailing bytes");
  }
}

namespace {

std::string hex(const unsigned char* digest, unsigned int len) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (ctx_ == nullptr || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1) {
      throw Error("sha256 init failed");
    }
  }
  ~Sha256() { EVP_MD_CTX_free(ctx_); }
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(const void* data, std::size_t n) { EVP_DigestUpdate(ctx_, data, n); }

  std::string hex_digest() {
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx_, digest.data(), &len);
    return hex(digest.data(), len);
  }

 private:
  EVP_MD_CTX* ctx_;
};

}  // namespace

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  Sha256 sha;
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    sha.update(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return sha.hex_digest();
}

std::string sha256_bytes(std::string_view bytes) {
  Sha256 sha;
  sha.update(bytes.data(), bytes.size());
  return sha.hex_digest();
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error("write failed: " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace hyrr::io
