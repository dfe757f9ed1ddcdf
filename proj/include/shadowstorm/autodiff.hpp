#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace shadowstorm::ad {

/// Dense row-major real array. Images use the layout {height, width, channels};
/// convolution kernels {kh, kw, in_channels, out_channels}; scalars have rank 0.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<int> shape, std::vector<double> data);

  static Tensor zeros(std::vector<int> shape);
  static Tensor scalar(double v) { return Tensor({}, {v}); }

  std::size_t size() const { return data.size(); }
  int rank() const { return static_cast<int>(shape.size()); }
};

std::size_t element_count(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

class Tape;

/// Handle to a value recorded on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const std::vector<int>& shape() const { return value().shape; }
  /// Accumulated gradient; zeros when backward never reached this node.
  std::span<const double> grad() const;
  bool requires_grad() const;

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/**
 * Records operations in execution order, which is a topological order of
 * the computation graph, and replays their vector-Jacobian rules in reverse.
 *
 * A tape is single-threaded. `backward` may run once; call `reset_grad` to
 * clear gradients before running it again.
 */
class Tape {
 public:
  /// Local VJP rule: reads the node's output gradient and accumulates into its inputs.
  using Backward = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that receives a gradient.
  Var variable(Tensor value);
  /// Leaf that does not.
  Var constant(Tensor value);

  Var record(Tensor value, std::initializer_list<Var> inputs, Backward backward);

  void backward(Var loss);
  void reset_grad();

  std::size_t size() const { return nodes_.size(); }

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::span<const double> grad(std::size_t id) const;
  /// Mutable gradient buffer, allocated on first use.
  std::vector<double>& grad_buffer(std::size_t id);

 private:
  struct Node {
    Tensor value;
    mutable std::vector<double> grad;
    bool requires_grad = false;
    Backward backward;
  };

  std::deque<Node> nodes_;  // deque: references to earlier values survive growth
  bool backward_done_ = false;
};

// Element-wise arithmetic on equal shapes.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
/// Element-wise product with a fixed array of the same shape (no gradient to `w`).
Var mul_const(Var a, std::span<const double> w);

Var relu(Var a);
/// Gradient passes where lo < x < hi and is zero at or beyond the bounds.
Var clamp(Var a, double lo, double hi);
Var clamp01(Var a);

Var sqrt(Var a);
Var sum(Var a);
Var mean(Var a);
Var sq_l2norm(Var a);
/// Euclidean norm; gradient at the origin is defined as zero.
Var l2norm(Var a);

/// Repeats a rank-0 value over `shape`.
Var broadcast(Var scalar, const std::vector<int>& shape);
/// {H, W, C} -> {H, W, 1}, averaging channels.
Var channel_mean(Var image);
/// {H, W, 1} -> {H, W, channels}.
Var expand_channels(Var plane, int channels);

/// Stride-1 convolution with zero padding to the input size.
/// input {H, W, Cin}, weight {KH, KW, Cin, Cout} with odd KH and KW, bias {Cout} or empty.
Var conv2d(Var input, Var weight, Var bias);
Var conv2d(Var input, Var weight);

/// Non-overlapping k x k averaging; trailing rows/columns that do not fill a window are dropped.
Var avg_pool2d(Var input, int k);

/// Fixed square filter with odd side length and non-negative weights.
struct Kernel2D {
  int radius = 0;
  std::vector<double> weights;  // (2r+1)^2, row-major

  static Kernel2D box(int radius);
  static Kernel2D gaussian(int radius, double sigma);
};

/// Per-channel blur that renormalizes by the kernel mass falling inside the
/// image, so constant inputs stay constant up to the border. Linear in `input`.
Var blur(Var input, const Kernel2D& kernel);

/// Same filter applied to a plain H x W x C array (no tape).
std::vector<double> blur_values(std::span<const double> input, int height, int width, int channels,
                                const Kernel2D& kernel);

}  // namespace shadowstorm::ad
