#include "mote/io.hpp"

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

namespace mote::io {

namespace fs = std::filesystem;

void write_file_atomic(const std::string& path, const std::string& content) {
  fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + tmp.string());
    out.write(content.data(),
              static_cast<std::streamsize>(content.size()));
    if (!out) throw DataError("write failed: " + tmp.string());
  }
  fs::rename(tmp, target);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string fnv1a64_hex(const std::string& s) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, fnv1a64(s));
  return std::string(buf);
}

std::string matrix_to_csv(const MatX& m) {
  std::ostringstream os;
  os << "layer_id,expert_id,value\n";
  os.precision(17);
  for (Eigen::Index l = 0; l < m.rows(); ++l)
    for (Eigen::Index e = 0; e < m.cols(); ++e)
      os << l << "," << e << "," << m(l, e) << "\n";
  return os.str();
}

MatX matrix_from_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) throw DataError("matrix csv: empty file");

  struct Cell {
    int l, e;
    Real v;
  };
  std::vector<Cell> cells;
  int max_l = -1, max_e = -1;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    Cell c;
    if (std::sscanf(line.c_str(), "%d,%d,%lf", &c.l, &c.e, &c.v) != 3)
      throw DataError("matrix csv: bad row: " + line);
    if (c.l < 0 || c.e < 0) throw DataError("matrix csv: negative index");
    max_l = std::max(max_l, c.l);
    max_e = std::max(max_e, c.e);
    cells.push_back(c);
  }
  if (cells.empty()) throw DataError("matrix csv: no rows");
  MatX m = MatX::Zero(max_l + 1, max_e + 1);
  for (const auto& c : cells) m(c.l, c.e) = c.v;
  return m;
}

}  // namespace mote::io
