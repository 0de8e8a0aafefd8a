#include "advedit/binio.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace advedit {

void BinaryWriter::u64(uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  buf_.append(b, 8);
}

void BinaryWriter::f64(double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  u64(bits);
}

void BinaryWriter::str(const std::string& s) {
  u64(s.size());
  buf_.append(s);
}

void BinaryWriter::vec(const Eigen::VectorXd& v) {
  u64(static_cast<uint64_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) f64(v(i));
}

void BinaryWriter::mat(const Eigen::MatrixXd& m) {
  u64(static_cast<uint64_t>(m.rows()));
  u64(static_cast<uint64_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.size(); ++i) f64(m.data()[i]);
}

void BinaryWriter::ints(const std::vector<int>& v) {
  u64(v.size());
  for (int x : v) i64(x);
}

void BinaryReader::need(size_t n) const {
  if (buf_.size() - pos_ < n) throw ParseError("binary record truncated");
}

uint64_t BinaryReader::u64() {
  need(8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<uint64_t>(static_cast<unsigned char>(buf_[pos_ + static_cast<size_t>(i)])) << (8 * i);
  }
  pos_ += 8;
  return v;
}

double BinaryReader::f64() {
  const uint64_t bits = u64();
  double v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

std::string BinaryReader::str() {
  const uint64_t n = u64();
  need(n);
  std::string s = buf_.substr(pos_, n);
  pos_ += n;
  return s;
}

Eigen::VectorXd BinaryReader::vec() {
  const uint64_t n = u64();
  need(n * 8);
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = f64();
  return v;
}

Eigen::MatrixXd BinaryReader::mat() {
  const uint64_t r = u64();
  const uint64_t c = u64();
  need(r * c * 8);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = f64();
  return m;
}

std::vector<int> BinaryReader::ints() {
  const uint64_t n = u64();
  need(n * 8);
  std::vector<int> v(n);
  for (auto& x : v) x = static_cast<int>(i64());
  return v;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::string& path, const std::string& data) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp);
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw Error("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace advedit
