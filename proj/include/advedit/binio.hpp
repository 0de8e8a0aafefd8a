#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "advedit/common.hpp"

namespace advedit {

/// Little-endian binary record builder used by checkpoints.
class BinaryWriter {
 public:
  void u64(uint64_t v);
  void i64(int64_t v) { u64(static_cast<uint64_t>(v)); }
  void f64(double v);
  void str(const std::string& s);
  void vec(const Eigen::VectorXd& v);
  void mat(const Eigen::MatrixXd& m);
  void ints(const std::vector<int>& v);

  const std::string& data() const { return buf_; }

 private:
  std::string buf_;
};

/// Reader counterpart; every accessor throws ParseError on truncation.
class BinaryReader {
 public:
  explicit BinaryReader(std::string data) : buf_(std::move(data)) {}

  uint64_t u64();
  int64_t i64() { return static_cast<int64_t>(u64()); }
  double f64();
  std::string str();
  Eigen::VectorXd vec();
  Eigen::MatrixXd mat();
  std::vector<int> ints();

  bool done() const { return pos_ == buf_.size(); }

 private:
  void need(size_t n) const;

  std::string buf_;
  size_t pos_ = 0;
};

std::string read_file(const std::string& path);
/// Writes through a temporary file and rename so readers never see a
/// partially written file.
void write_file_atomic(const std::string& path, const std::string& data);

}  // namespace advedit
