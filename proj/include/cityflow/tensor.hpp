#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace cityflow::nn {

// Row-major dense matrix of doubles.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c, double fill = 0.0)
      : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}

  double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
  double* row(int r) { return data.data() + static_cast<std::size_t>(r) * cols; }
  const double* row(int r) const { return data.data() + static_cast<std::size_t>(r) * cols; }
  std::size_t size() const { return data.size(); }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
  bool all_finite() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

// Named trainable tensor. The gradient is an accumulation buffer filled by
// Graph::backward and is not part of the parameter's value.
struct Param {
  std::string name;
  Matrix value;
  mutable Matrix grad;
};

// C = A * B
void matmul(const Matrix& a, const Matrix& b, Matrix& c);
// C += A * B^T
void matmul_add_nt(const Matrix& a, const Matrix& b, Matrix& c);
// C += A^T * B
void matmul_add_tn(const Matrix& a, const Matrix& b, Matrix& c);

// Tape of matrix-valued nodes with reverse-mode differentiation. Nodes are
// appended in evaluation order; backward() replays them in reverse.
class Graph {
 public:
  using Id = int;

  Id constant(Matrix value);
  // Leaf holding a copy of param.value; backward() accumulates into
  // param.grad. With track == false the leaf is a plain constant.
  Id parameter(const Param& param, bool track = true);

  Id matmul(Id a, Id b);
  // x * w + b, with w stored (in x out) and b a 1 x out row.
  Id linear(Id x, Id w, Id b);
  Id add(Id a, Id b);
  Id scale(Id a, double s);
  Id layer_norm(Id x, Id gamma, Id beta, double eps = 1e-5);
  Id gelu(Id x);
  Id silu(Id x);
  // (B x d) -> (B*times x d); row b*times + t copies row b.
  Id repeat_rows(Id x, int times);
  // Multi-head scaled dot-product attention, independently per group: the
  // query rows split into `groups` equal blocks, as do key/value rows.
  Id attention(Id q, Id k, Id v, int groups, int heads);
  // Mean of squared differences, 1 x 1.
  Id mse(Id prediction, Id target);

  const Matrix& value(Id id) const { return nodes_[id].value; }
  bool requires_grad(Id id) const { return nodes_[id].requires_grad; }
  void backward(Id scalar);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    std::function<void()> backward;
  };

  Id push(Matrix value, bool requires_grad);
  Matrix& grad(Id id);
  bool needs(std::initializer_list<Id> ids) const;

  std::vector<Node> nodes_;
};

}  // namespace cityflow::nn
