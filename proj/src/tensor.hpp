#pragma once

// Dense double-precision tensors (rank 1 and 2) with a reverse-mode tape.
//
// Parameters are long-lived Tensors with requires_grad set. Every forward
// pass builds its graph on a fresh Tape; Tape::backward replays the recorded
// operations in reverse and accumulates (+=) into each input's grad buffer.
// Call zero_grad() on parameters between steps.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace rest::tensor {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor vector(std::vector<double> values, bool requires_grad = false);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                       bool requires_grad = false);

  bool defined() const noexcept { return storage_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  // Rank-1 tensors behave as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const;
  std::span<double> mutable_values();
  double operator[](std::size_t i) const { return values()[i]; }
  double at(std::size_t r, std::size_t c) const { return values()[r * cols() + c]; }
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool on);
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  // Deep copy without graph history.
  Tensor detached() const;

  bool same_storage(const Tensor& other) const { return storage_ == other.storage_; }

 private:
  struct Storage {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Storage> storage_;

  Storage& storage() const;
  friend class Tape;
};

// Row-major boolean matrix; true = allowed.
class Mask {
 public:
  Mask() = default;
  Mask(std::size_t rows, std::size_t cols, bool fill = false)
      : rows_(rows), cols_(cols), cells_(rows * cols, fill ? 1 : 0) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool operator()(std::size_t r, std::size_t c) const { return cells_[r * cols_ + c] != 0; }
  void set(std::size_t r, std::size_t c, bool on) { cells_[r * cols_ + c] = on ? 1 : 0; }
  bool operator==(const Mask&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<unsigned char> cells_;
};

// The computation record. A Tape built with recording=false evaluates the
// same operations without keeping anything for backward.
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor matmul(const Tensor& a, const Tensor& b);
  Tensor transpose(const Tensor& a);
  Tensor add(const Tensor& a, const Tensor& b);
  // m[r][c] + row[c] for every r.
  Tensor add_row(const Tensor& m, const Tensor& row);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor scale(const Tensor& a, double factor);
  Tensor sum(const Tensor& a);

  Tensor softmax_masked(const Tensor& logits, const Mask& mask);
  Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
  Tensor gelu(const Tensor& x);
  Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets);

  Tensor gather_rows(const Tensor& table, std::span<const std::size_t> rows);
  Tensor concat_rows(std::span<const Tensor> parts);
  Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count);
  Tensor concat_cols(std::span<const Tensor> parts);

  // Seeds d(loss)/d(loss) = 1 and replays the record in reverse. The record
  // is consumed: a second call is a contract error.
  void backward(const Tensor& loss);

  std::size_t size() const noexcept { return ops_.size(); }
  bool recording() const noexcept { return recording_; }

 private:
  Tensor make_result(Shape shape, std::vector<double> values,
                     std::initializer_list<const Tensor*> inputs);
  void record(const Tensor& out, std::function<void()> op);

  bool recording_;
  bool consumed_ = false;
  std::vector<std::function<void()>> ops_;
};

double gelu_value(double x);

}  // namespace rest::tensor
