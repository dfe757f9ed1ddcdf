#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "shadowstorm/autodiff.hpp"
#include "shadowstorm/gradcheck.hpp"
#include "shadowstorm/image.hpp"

namespace shadowstorm {

/// Named parameter tensors; iteration order (and therefore file order) is by name.
using ModelParams = std::map<std::string, ad::Tensor>;

/// Maps a model output to the cotangent that is pulled back to the input.
using CotangentFn = std::function<std::vector<double>(const Image& output)>;

struct VjpResult {
  Image output;
  std::vector<double> input_grad;
};

/**
 * Differentiable image-to-image map, the only view the attack engine has of
 * a model. Outputs keep the input shape and lie in [0, 1]. Implementations
 * with frozen parameters are read-only and may be shared across threads.
 */
class DiffModel {
 public:
  virtual ~DiffModel() = default;

  virtual std::string name() const = 0;
  virtual Image forward(const Image& input) const = 0;
  /// Vector-Jacobian product: J(input)^T * cotangent.
  virtual std::vector<double> input_grad(const Image& input, std::span<const double> cotangent) const = 0;
  /// Forward pass plus the pull-back of `cotangent_of(output)`. The default runs forward twice.
  virtual VjpResult forward_with_vjp(const Image& input, const CotangentFn& cotangent_of) const;
};

class IdentityModel final : public DiffModel {
 public:
  std::string name() const override { return "identity"; }
  Image forward(const Image& input) const override { return input; }
  std::vector<double> input_grad(const Image& input, std::span<const double> cotangent) const override;
  VjpResult forward_with_vjp(const Image& input, const CotangentFn& cotangent_of) const override;
};

/// Model expressed as a recording on an autodiff tape.
class TapeModel : public DiffModel {
 public:
  const ModelParams& params() const { return params_; }
  /// Replaces parameters; names and shapes must match the current set and values must be finite.
  void set_params(ModelParams params);
  /// Parameter names updated by training.
  virtual std::vector<std::string> trainable() const = 0;

  /// Records the model on `tape`. `params` holds a Var for every entry of params().
  virtual ad::Var build(ad::Tape& tape, ad::Var input, const std::map<std::string, ad::Var>& params) const = 0;

  Image forward(const Image& input) const override;
  std::vector<double> input_grad(const Image& input, std::span<const double> cotangent) const override;
  VjpResult forward_with_vjp(const Image& input, const CotangentFn& cotangent_of) const override;

 protected:
  explicit TapeModel(ModelParams params);

 private:
  ModelParams params_;
};

/**
 * Analytic illumination correction:
 *   lum   = channel mean of the input
 *   gain  = clamp(mean(lum) / (box_blur(lum, r) + 1e-3), 1, max_gain)
 *   out   = clamp(input * gain, 0, 1)
 * Gains never drop below one, so the model never darkens a pixel.
 */
class GainMapModel final : public TapeModel {
 public:
  static constexpr double kDenominatorFloor = 1e-3;

  GainMapModel(int blur_radius, double max_gain);
  explicit GainMapModel(const ModelParams& params);

  std::string name() const override { return "gainmap"; }
  std::vector<std::string> trainable() const override { return {}; }
  ad::Var build(ad::Tape& tape, ad::Var input, const std::map<std::string, ad::Var>& params) const override;

  int blur_radius() const { return blur_radius_; }
  double max_gain() const { return max_gain_; }

 private:
  int blur_radius_;
  double max_gain_;
};

/// conv3x3(3->8) relu conv3x3(8->8) relu conv3x3(8->3), added to the input and clamped to [0, 1].
class TinyCnnModel final : public TapeModel {
 public:
  /// Weights and biases drawn from U(-0.1, 0.1) in parameter-name order.
  explicit TinyCnnModel(std::uint64_t seed);
  explicit TinyCnnModel(const ModelParams& params);

  std::string name() const override { return "tinycnn"; }
  std::vector<std::string> trainable() const override;
  ad::Var build(ad::Tape& tape, ad::Var input, const std::map<std::string, ad::Var>& params) const override;
};

std::unique_ptr<IdentityModel> model_identity();
std::unique_ptr<GainMapModel> model_gainmap(int blur_radius = 4, double max_gain = 4.0);
std::unique_ptr<TinyCnnModel> model_tinycnn(std::uint64_t seed);

/// Rebuilds a gain-map or tiny-CNN model from its saved parameters.
std::unique_ptr<TapeModel> model_from_params(const ModelParams& params);

/// "identity", "gainmap", "tinycnn" (seeded with `seed`) or a path to a parameter file.
std::unique_ptr<DiffModel> make_model(const std::string& spec, std::uint64_t seed = 42);

/// Names accepted by make_model without a parameter file.
std::vector<std::string> zoo_names();

/**
 * Random RGB test input: texture U(0.3, 0.95) with a rectangle covering a
 * quarter to half of the image darkened by a factor U(0.25, 0.6), so the
 * gain-map model leaves its gain = 1 plateau.
 */
Image gradcheck_image(int height, int width, std::uint64_t seed);

/**
 * Checks input_grad against central differences of <r, forward(x)> for a
 * random probe r ~ U(-1, 1) drawn from `probe_seed`.
 */
ad::GradCheckReport model_grad_check(const DiffModel& model, const Image& input, std::uint64_t probe_seed,
                                     const ad::GradCheckOptions& options = {});

// Parameter files: little-endian "SSPM" magic, u32 version (1), u64 tensor
// count, then per tensor u32 name length, name bytes, u32 rank, u64 dims,
// and the payload as IEEE-754 binary64.
inline constexpr std::uint32_t kParamsVersion = 1;
std::vector<std::uint8_t> encode_params(const ModelParams& params);
ModelParams decode_params(std::span<const std::uint8_t> bytes);
void save_params(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_params(const std::filesystem::path& path);

struct TrainingPair {
  Image input;
  Image target;
};

struct TrainReport {
  ModelParams params;
  /// Mean squared error before the update of each epoch.
  std::vector<double> epoch_losses;
  /// Mean squared error after the last update (initial loss when epochs == 0).
  double final_loss = 0.0;
};

/**
 * Full-batch gradient descent on the per-pixel squared error (summed over
 * channels) between model output and target, averaged over every pixel of
 * every pair. Updates `model` in place.
 * Throws NumericError if the loss stops being finite.
 */
TrainReport train_toy(TapeModel& model, std::span<const TrainingPair> dataset, int epochs, double lr,
                      const std::function<void(int epoch, double loss)>& on_epoch = {});

}  // namespace shadowstorm
