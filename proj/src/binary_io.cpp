#include "vera/binary_io.hpp"

#include <fstream>
#include <iterator>
#include <limits>

namespace vera {

void ByteWriter::name(const std::string& s) {
  if (s.size() > std::numeric_limits<std::uint16_t>::max()) throw InvalidArgument("name longer than 65535 bytes");
  u16(static_cast<std::uint16_t>(s.size()));
  raw(s);
}

std::string ByteReader::raw(std::size_t n) {
  need(n);
  std::string out(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
  pos_ += n;
  return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed for '" + path.string() + "'");
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace vera
