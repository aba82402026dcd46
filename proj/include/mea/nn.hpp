#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "mea/autograd.hpp"
#include "mea/rng.hpp"

namespace mea::nn {

struct Parameter {
  std::string name;  // "<group>.<layer>.<weight|bias>"
  ag::Var var;
};

// Ordered, named collection of trainable tensors. Copies are deep.
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(const ParameterSet& other);
  ParameterSet& operator=(const ParameterSet& other);
  ParameterSet(ParameterSet&&) noexcept = default;
  ParameterSet& operator=(ParameterSet&&) noexcept = default;

  const ag::Var& add(std::string name, Tensor init);
  const ag::Var& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::vector<Parameter>& items() { return items_; }
  const std::vector<Parameter>& items() const { return items_; }

  // Distinct name prefixes before the first '.', in insertion order.
  std::vector<std::string> groups() const;
  std::size_t scalar_count() const;

  // Marks every parameter of `group` trainable or frozen.
  void set_trainable(const std::string& group, bool trainable);
  void zero_grad();
  bool all_finite() const;

 private:
  std::vector<Parameter> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

std::string group_of(const std::string& parameter_name);

// He-normal conv weight {out, in, k, k} and zero bias under `prefix`.
void add_conv(ParameterSet& ps, const std::string& prefix, int in, int out, int k, Rng& rng, double gain = 1.0);
// Weight {out, in, 1, 1} with N(0, gain^2 / in) and zero bias under `prefix`.
void add_linear(ParameterSet& ps, const std::string& prefix, int in, int out, Rng& rng, double gain = 1.0);

ag::Var conv(const ParameterSet& ps, const std::string& prefix, const ag::Var& x);
ag::Var dense(const ParameterSet& ps, const std::string& prefix, const ag::Var& x);

// Adaptive-moment optimizer over a fixed subset of a ParameterSet, selected by group.
class Adam {
 public:
  struct Options {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  Adam(std::vector<std::string> groups, Options options);

  // Applies one update from the accumulated gradients. Parameters without a
  // gradient (frozen or unreached) are left untouched.
  void step(ParameterSet& ps);
  long steps_taken() const { return t_; }
  const Options& options() const { return options_; }

 private:
  bool selected(const std::string& name) const;

  std::vector<std::string> groups_;
  Options options_;
  long t_ = 0;
  std::unordered_map<std::string, std::pair<std::vector<double>, std::vector<double>>> moments_;
};

}  // namespace mea::nn
