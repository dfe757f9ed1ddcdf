#include <cmath>

#include "shadowstorm/error.hpp"
#include "shadowstorm/models.hpp"

namespace shadowstorm {
namespace {

ad::Tensor to_tensor(const Image& image) {
  const Shape& s = image.shape();
  return ad::Tensor({s.height, s.width, s.channels}, std::vector<double>(image.data().begin(), image.data().end()));
}

struct Pass {
  double sum_sq = 0.0;
  std::map<std::string, std::vector<double>> grads;
};

// Sum of squared errors over the dataset and its gradient w.r.t. the trainable parameters.
Pass evaluate(const TapeModel& model, std::span<const TrainingPair> dataset, const std::vector<std::string>& names,
              bool with_grad) {
  Pass pass;
  for (const auto& name : names) pass.grads[name].assign(model.params().at(name).size(), 0.0);
  for (const TrainingPair& pair : dataset) {
    ad::Tape tape;
    ad::Var x = tape.constant(to_tensor(pair.input));
    std::map<std::string, ad::Var> vars;
    for (const auto& [key, t] : model.params()) {
      const bool train = with_grad && pass.grads.count(key);
      vars.emplace(key, train ? tape.variable(t) : tape.constant(t));
    }
    ad::Var loss = ad::sq_l2norm(ad::sub(model.build(tape, x, vars), tape.constant(to_tensor(pair.target))));
    pass.sum_sq += loss.value().data[0];
    if (!with_grad) continue;
    tape.backward(loss);
    for (auto& [key, acc] : pass.grads) {
      const auto g = vars.at(key).grad();
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
    }
  }
  return pass;
}

}  // namespace

TrainReport train_toy(TapeModel& model, std::span<const TrainingPair> dataset, int epochs, double lr,
                      const std::function<void(int, double)>& on_epoch) {
  if (dataset.empty()) throw UsageError("training set is empty");
  if (epochs < 0) throw UsageError("epochs must be non-negative");
  if (!(lr > 0.0)) throw UsageError("learning rate must be positive");
  const Shape shape = dataset.front().input.shape();
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (dataset[i].input.shape() != shape || dataset[i].target.shape() != shape) {
      throw ShapeError("training pair " + std::to_string(i) + " does not match shape " + shape.str());
    }
  }
  const std::vector<std::string> names = model.trainable();
  if (names.empty()) throw UsageError("model " + model.name() + " has no trainable parameters");

  // Squared error is summed over a pixel's channels and averaged over pixels and pairs.
  const double count = static_cast<double>(dataset.size()) * static_cast<double>(shape.pixels());
  TrainReport report;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    const Pass pass = evaluate(model, dataset, names, true);
    const double loss = pass.sum_sq / count;
    if (!std::isfinite(loss)) {
      throw NumericError("training diverged at epoch " + std::to_string(epoch) +
                         " (loss is not finite); try a smaller learning rate");
    }
    report.epoch_losses.push_back(loss);
    if (on_epoch) on_epoch(epoch, loss);

    ModelParams next = model.params();
    for (const auto& [key, g] : pass.grads) {
      auto& data = next.at(key).data;
      for (std::size_t i = 0; i < data.size(); ++i) data[i] -= lr * g[i] / count;
    }
    for (const auto& [key, t] : next) {
      for (double v : t.data) {
        if (!std::isfinite(v)) {
          throw NumericError("training diverged at epoch " + std::to_string(epoch) + " (parameter " + key +
                             " is not finite); try a smaller learning rate");
        }
      }
    }
    model.set_params(std::move(next));
  }
  report.final_loss = evaluate(model, dataset, names, false).sum_sq / count;
  if (!std::isfinite(report.final_loss)) throw NumericError("training diverged; try a smaller learning rate");
  report.params = model.params();
  return report;
}

}  // namespace shadowstorm
