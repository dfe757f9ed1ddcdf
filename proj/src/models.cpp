#include "shadowstorm/models.hpp"

#include <algorithm>
#include <cmath>

#include "shadowstorm/error.hpp"
#include "shadowstorm/numeric.hpp"

namespace shadowstorm {
namespace {

ad::Tensor to_tensor(const Image& image) {
  const Shape& s = image.shape();
  return ad::Tensor({s.height, s.width, s.channels}, std::vector<double>(image.data().begin(), image.data().end()));
}

Image to_image(const ad::Tensor& t) {
  return Image(Shape{t.shape[0], t.shape[1], t.shape[2]}, t.data);
}

void check_cotangent(const Image& input, std::span<const double> cotangent) {
  if (cotangent.size() != input.size()) {
    throw ShapeError("cotangent has " + std::to_string(cotangent.size()) + " values, image " +
                     input.shape().str() + " needs " + std::to_string(input.size()));
  }
}

const std::string kBlurRadius = "gainmap.blur_radius";
const std::string kMaxGain = "gainmap.max_gain";

const char* const kCnnNames[] = {"tinycnn.conv1.weight", "tinycnn.conv1.bias", "tinycnn.conv2.weight",
                                 "tinycnn.conv2.bias",   "tinycnn.conv3.weight", "tinycnn.conv3.bias"};

std::vector<std::vector<int>> cnn_shapes() {
  return {{3, 3, 3, 8}, {8}, {3, 3, 8, 8}, {8}, {3, 3, 8, 3}, {3}};
}

ModelParams seeded_cnn_params(std::uint64_t seed) {
  Xoshiro256 rng(seed);
  ModelParams params;
  const auto shapes = cnn_shapes();
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    ad::Tensor t = ad::Tensor::zeros(shapes[i]);
    for (double& v : t.data) v = rng.uniform(-0.1, 0.1);
    params.emplace(kCnnNames[i], std::move(t));
  }
  return params;
}

double scalar_param(const ModelParams& params, const std::string& name) {
  const auto it = params.find(name);
  if (it == params.end() || it->second.size() != 1) throw UsageError("missing scalar parameter " + name);
  return it->second.data[0];
}

ModelParams gainmap_params(int blur_radius, double max_gain) {
  if (blur_radius < 1) throw UsageError("gain map blur radius must be at least 1");
  if (!(max_gain > 1.0)) throw UsageError("gain map max_gain must exceed 1");
  ModelParams p;
  p.emplace(kBlurRadius, ad::Tensor::scalar(blur_radius));
  p.emplace(kMaxGain, ad::Tensor::scalar(max_gain));
  return p;
}

void check_finite(const ModelParams& params) {
  for (const auto& [name, t] : params) {
    for (double v : t.data) {
      if (!std::isfinite(v)) throw NumericError("parameter " + name + " holds a non-finite value");
    }
  }
}

}  // namespace

VjpResult DiffModel::forward_with_vjp(const Image& input, const CotangentFn& cotangent_of) const {
  Image output = forward(input);
  std::vector<double> cot = cotangent_of(output);
  return {std::move(output), input_grad(input, cot)};
}

std::vector<double> IdentityModel::input_grad(const Image& input, std::span<const double> cotangent) const {
  check_cotangent(input, cotangent);
  return {cotangent.begin(), cotangent.end()};
}

VjpResult IdentityModel::forward_with_vjp(const Image& input, const CotangentFn& cotangent_of) const {
  std::vector<double> cot = cotangent_of(input);
  check_cotangent(input, cot);
  return {input, std::move(cot)};
}

TapeModel::TapeModel(ModelParams params) : params_(std::move(params)) { check_finite(params_); }

void TapeModel::set_params(ModelParams params) {
  if (params.size() != params_.size()) throw UsageError("parameter set does not match model " + name());
  for (const auto& [key, t] : params) {
    const auto it = params_.find(key);
    if (it == params_.end()) throw UsageError("unexpected parameter " + key + " for model " + name());
    if (it->second.shape != t.shape) {
      throw ShapeError("parameter " + key + " has shape " + ad::shape_str(t.shape) + ", expected " +
                       ad::shape_str(it->second.shape));
    }
  }
  check_finite(params);
  params_ = std::move(params);
}

Image TapeModel::forward(const Image& input) const {
  ad::Tape tape;
  ad::Var x = tape.constant(to_tensor(input));
  std::map<std::string, ad::Var> vars;
  for (const auto& [key, t] : params_) vars.emplace(key, tape.constant(t));
  return to_image(build(tape, x, vars).value());
}

std::vector<double> TapeModel::input_grad(const Image& input, std::span<const double> cotangent) const {
  check_cotangent(input, cotangent);
  std::vector<double> cot(cotangent.begin(), cotangent.end());
  return forward_with_vjp(input, [&](const Image&) { return cot; }).input_grad;
}

VjpResult TapeModel::forward_with_vjp(const Image& input, const CotangentFn& cotangent_of) const {
  ad::Tape tape;
  ad::Var x = tape.variable(to_tensor(input));
  std::map<std::string, ad::Var> vars;
  for (const auto& [key, t] : params_) vars.emplace(key, tape.constant(t));
  ad::Var out = build(tape, x, vars);
  Image output = to_image(out.value());
  const std::vector<double> cot = cotangent_of(output);
  check_cotangent(input, cot);
  tape.backward(ad::sum(ad::mul_const(out, cot)));
  const auto g = x.grad();
  return {std::move(output), std::vector<double>(g.begin(), g.end())};
}

GainMapModel::GainMapModel(int blur_radius, double max_gain)
    : TapeModel(gainmap_params(blur_radius, max_gain)), blur_radius_(blur_radius), max_gain_(max_gain) {}

GainMapModel::GainMapModel(const ModelParams& params)
    : GainMapModel(static_cast<int>(scalar_param(params, kBlurRadius)), scalar_param(params, kMaxGain)) {}

ad::Var GainMapModel::build(ad::Tape&, ad::Var input, const std::map<std::string, ad::Var>&) const {
  const auto& shape = input.shape();
  ad::Var lum = ad::channel_mean(input);
  ad::Var global = ad::mean(lum);
  ad::Var local = ad::add_scalar(ad::blur(lum, ad::Kernel2D::box(blur_radius_)), kDenominatorFloor);
  ad::Var gain = ad::clamp(ad::div(ad::broadcast(global, lum.shape()), local), 1.0, max_gain_);
  return ad::clamp01(ad::mul(input, ad::expand_channels(gain, shape[2])));
}

TinyCnnModel::TinyCnnModel(std::uint64_t seed) : TapeModel(seeded_cnn_params(seed)) {}

TinyCnnModel::TinyCnnModel(const ModelParams& params) : TapeModel(seeded_cnn_params(0)) { set_params(params); }

std::vector<std::string> TinyCnnModel::trainable() const { return {std::begin(kCnnNames), std::end(kCnnNames)}; }

ad::Var TinyCnnModel::build(ad::Tape&, ad::Var input, const std::map<std::string, ad::Var>& p) const {
  if (input.shape().size() != 3 || input.shape()[2] != 3) {
    throw ShapeError("tinycnn expects a 3-channel image, got " + ad::shape_str(input.shape()));
  }
  ad::Var h = ad::relu(ad::conv2d(input, p.at(kCnnNames[0]), p.at(kCnnNames[1])));
  h = ad::relu(ad::conv2d(h, p.at(kCnnNames[2]), p.at(kCnnNames[3])));
  h = ad::conv2d(h, p.at(kCnnNames[4]), p.at(kCnnNames[5]));
  return ad::clamp01(ad::add(input, h));
}

std::unique_ptr<IdentityModel> model_identity() { return std::make_unique<IdentityModel>(); }

std::unique_ptr<GainMapModel> model_gainmap(int blur_radius, double max_gain) {
  return std::make_unique<GainMapModel>(blur_radius, max_gain);
}

std::unique_ptr<TinyCnnModel> model_tinycnn(std::uint64_t seed) { return std::make_unique<TinyCnnModel>(seed); }

std::unique_ptr<TapeModel> model_from_params(const ModelParams& params) {
  if (params.count(kBlurRadius) || params.count(kMaxGain)) return std::make_unique<GainMapModel>(params);
  if (params.count(kCnnNames[0])) return std::make_unique<TinyCnnModel>(params);
  throw UsageError("cannot infer a model type from the parameter names");
}

std::vector<std::string> zoo_names() { return {"identity", "gainmap", "tinycnn"}; }

std::unique_ptr<DiffModel> make_model(const std::string& spec, std::uint64_t seed) {
  if (spec == "identity") return model_identity();
  if (spec == "gainmap") return model_gainmap();
  if (spec == "tinycnn") return model_tinycnn(seed);
  return model_from_params(load_params(spec));
}

Image gradcheck_image(int height, int width, std::uint64_t seed) {
  if (height < 1 || width < 1) throw UsageError("gradcheck image needs a positive size");
  Xoshiro256 rng(seed);
  const int rh = std::max(1, static_cast<int>(std::lround(height * rng.uniform(0.5, 0.7))));
  const int rw = std::max(1, static_cast<int>(std::lround(width * rng.uniform(0.5, 0.7))));
  const int top = rng.uniform_int(0, height - rh);
  const int left = rng.uniform_int(0, width - rw);
  const double dim = rng.uniform(0.25, 0.6);
  std::vector<double> px(static_cast<std::size_t>(height) * width * 3);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const bool dark = y >= top && y < top + rh && x >= left && x < left + rw;
      for (int c = 0; c < 3; ++c) {
        px[(static_cast<std::size_t>(y) * width + x) * 3 + c] = rng.uniform(0.3, 0.95) * (dark ? dim : 1.0);
      }
    }
  }
  return Image(Shape{height, width, 3}, std::move(px));
}

ad::GradCheckReport model_grad_check(const DiffModel& model, const Image& input, std::uint64_t probe_seed,
                                     const ad::GradCheckOptions& options) {
  Xoshiro256 rng(probe_seed);
  std::vector<double> probe(input.size());
  for (double& v : probe) v = rng.uniform(-1.0, 1.0);

  const std::vector<double> analytic = model.input_grad(input, probe);
  const Shape shape = input.shape();
  const ad::VectorFn f = [&](std::span<const double> x) {
    const Image out = model.forward(Image(shape, std::vector<double>(x.begin(), x.end())));
    return std::vector<double>(out.data().begin(), out.data().end());
  };
  return ad::grad_check(f, probe, analytic, input.data(), options);
}

}  // namespace shadowstorm
