#include "mea/nn.hpp"

#include <algorithm>
#include <cmath>

#include "mea/errors.hpp"

namespace mea::nn {

ParameterSet::ParameterSet(const ParameterSet& other) : index_(other.index_) {
  items_.reserve(other.items_.size());
  for (const auto& p : other.items_) {
    items_.push_back(Parameter{p.name, ag::Var::leaf(p.var.value(), p.var.requires_grad())});
  }
}

ParameterSet& ParameterSet::operator=(const ParameterSet& other) {
  if (this != &other) {
    ParameterSet copy(other);
    *this = std::move(copy);
  }
  return *this;
}

const ag::Var& ParameterSet::add(std::string name, Tensor init) {
  if (index_.count(name)) throw ConfigError(name, "duplicate parameter name");
  index_.emplace(name, items_.size());
  items_.push_back(Parameter{std::move(name), ag::Var::leaf(std::move(init), true)});
  return items_.back().var;
}

const ag::Var& ParameterSet::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ModelStateError("missing parameter '" + name + "'");
  return items_[it->second].var;
}

std::string group_of(const std::string& parameter_name) {
  return parameter_name.substr(0, parameter_name.find('.'));
}

std::vector<std::string> ParameterSet::groups() const {
  std::vector<std::string> out;
  for (const auto& p : items_) {
    auto g = group_of(p.name);
    if (std::find(out.begin(), out.end(), g) == out.end()) out.push_back(g);
  }
  return out;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : items_) n += p.var.value().size();
  return n;
}

void ParameterSet::set_trainable(const std::string& group, bool trainable) {
  for (auto& p : items_)
    if (group_of(p.name) == group) p.var.set_requires_grad(trainable);
}

void ParameterSet::zero_grad() {
  for (auto& p : items_) p.var.zero_grad();
}

bool ParameterSet::all_finite() const {
  return std::all_of(items_.begin(), items_.end(), [](const Parameter& p) { return p.var.value().all_finite(); });
}

void add_conv(ParameterSet& ps, const std::string& prefix, int in, int out, int k, Rng& rng, double gain) {
  std::normal_distribution<double> dist(0.0, gain * std::sqrt(2.0 / (in * k * k)));
  Tensor w(Shape{out, in, k, k});
  for (auto& v : w.values()) v = dist(rng);
  ps.add(prefix + ".weight", std::move(w));
  ps.add(prefix + ".bias", Tensor(Shape{out, 1, 1, 1}, 0.0));
}

void add_linear(ParameterSet& ps, const std::string& prefix, int in, int out, Rng& rng, double gain) {
  std::normal_distribution<double> dist(0.0, gain * std::sqrt(1.0 / in));
  Tensor w(Shape{out, in, 1, 1});
  for (auto& v : w.values()) v = dist(rng);
  ps.add(prefix + ".weight", std::move(w));
  ps.add(prefix + ".bias", Tensor(Shape{out, 1, 1, 1}, 0.0));
}

ag::Var conv(const ParameterSet& ps, const std::string& prefix, const ag::Var& x) {
  return ag::conv2d(x, ps.get(prefix + ".weight"), ps.get(prefix + ".bias"));
}

ag::Var dense(const ParameterSet& ps, const std::string& prefix, const ag::Var& x) {
  return ag::linear(x, ps.get(prefix + ".weight"), ps.get(prefix + ".bias"));
}

Adam::Adam(std::vector<std::string> groups, Options options) : groups_(std::move(groups)), options_(options) {
  if (!(options_.lr > 0.0)) throw ConfigError("learning_rate", "must be positive");
}

bool Adam::selected(const std::string& name) const {
  return std::find(groups_.begin(), groups_.end(), group_of(name)) != groups_.end();
}

void Adam::step(ParameterSet& ps) {
  ++t_;
  const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
  for (auto& p : ps.items()) {
    if (!selected(p.name) || !p.var.requires_grad() || p.var.grad().empty()) continue;
    Tensor& value = p.var.mutable_value();
    const Tensor& grad = p.var.grad();
    auto& [m, v] = moments_[p.name];
    if (m.empty()) {
      m.assign(value.size(), 0.0);
      v.assign(value.size(), 0.0);
    }
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i];
      m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * g;
      v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * g * g;
      value[i] -= options_.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + options_.eps);
    }
  }
}

}  // namespace mea::nn
