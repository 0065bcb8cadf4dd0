#include "fwigan/critic.hpp"

#include <cmath>
#include <random>
#include <string>

#include "fwigan/errors.hpp"

namespace fwigan {

namespace {

std::size_t round_up(std::size_t n, std::size_t multiple) { return (n + multiple - 1) / multiple * multiple; }

std::string conv_name(std::size_t i, const char* part) { return "conv" + std::to_string(i) + "." + part; }

nn::Tensor uniform_tensor(nn::Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> values(nn::shape_numel(shape));
  for (auto& v : values) v = dist(rng);
  return nn::Tensor::from(std::move(shape), std::move(values));
}

}  // namespace

std::size_t CriticConfig::padded_h() const { return round_up(input_h, std::size_t{1} << n_blocks); }

std::size_t CriticConfig::padded_w() const { return round_up(input_w, std::size_t{1} << n_blocks); }

std::vector<std::size_t> CriticConfig::block_channels() const {
  std::vector<std::size_t> out(n_blocks);
  for (std::size_t i = 0; i < n_blocks; ++i) out[i] = base_channels << i;
  return out;
}

nn::Shape CriticConfig::final_map_shape() const {
  return {base_channels << (n_blocks - 1), padded_h() >> n_blocks, padded_w() >> n_blocks};
}

std::size_t CriticConfig::flatten_size() const { return nn::shape_numel(final_map_shape()); }

std::size_t CriticConfig::parameter_count() const {
  std::size_t count = 0;
  std::size_t in = in_channels;
  for (std::size_t out : block_channels()) {
    count += out * in * 9 + out;
    in = out;
  }
  count += fc_width * flatten_size() + fc_width;
  count += fc_width + 1;
  return count;
}

void CriticConfig::validate() const {
  if (in_channels == 0 || input_h == 0 || input_w == 0 || base_channels == 0 || n_blocks == 0 || fc_width == 0) {
    throw InvalidInput("critic configuration needs positive sizes");
  }
  if (n_blocks > 16) throw InvalidInput("critic n_blocks too large to pad for");
}

Critic Critic::build(const CriticConfig& config, std::uint64_t seed) {
  config.validate();
  Critic critic;
  critic.config_ = config;
  std::mt19937_64 rng(seed);
  std::size_t in = config.in_channels;
  const auto channels = config.block_channels();
  for (std::size_t i = 0; i < channels.size(); ++i) {
    const std::size_t out = channels[i];
    critic.params_.add(conv_name(i, "weight"), uniform_tensor({out, in, 3, 3}, in * 9, rng));
    critic.params_.add(conv_name(i, "bias"), nn::Tensor::zeros({out}));
    in = out;
  }
  const std::size_t flat = config.flatten_size();
  critic.params_.add("fc1.weight", uniform_tensor({config.fc_width, flat}, flat, rng));
  critic.params_.add("fc1.bias", nn::Tensor::zeros({config.fc_width}));
  critic.params_.add("fc2.weight", uniform_tensor({1, config.fc_width}, config.fc_width, rng));
  critic.params_.add("fc2.bias", nn::Tensor::zeros({1}));
  return critic;
}

nn::Tensor Critic::forward(const nn::Tensor& x) const {
  const nn::Shape expected{config_.in_channels, config_.input_h, config_.input_w};
  if (x.shape() != expected) {
    throw InvalidInput("critic input " + nn::shape_string(x.shape()) + " does not match " +
                       nn::shape_string(expected));
  }
  nn::Tensor h = x;
  if (config_.padded_h() != config_.input_h || config_.padded_w() != config_.input_w) {
    h = nn::pad2d(h, config_.padded_h(), config_.padded_w());
  }
  for (std::size_t i = 0; i < config_.n_blocks; ++i) {
    h = nn::conv2d(h, params_.get(conv_name(i, "weight")), params_.get(conv_name(i, "bias")));
    h = nn::leaky_relu(nn::maxpool2d(h), 0.1);
  }
  h = nn::reshape(h, {config_.flatten_size()});
  h = nn::leaky_relu(nn::dense(h, params_.get("fc1.weight"), params_.get("fc1.bias")), 0.1);
  return nn::dense(h, params_.get("fc2.weight"), params_.get("fc2.bias"));
}

double Critic::score(const nn::Tensor& x) const {
  nn::GradMode off(false);
  return forward(x).item();
}

nn::Tensor Critic::input_gradient(const nn::Tensor& x) const {
  auto leaf = x.detach();
  leaf.set_requires_grad(true);
  nn::GradMode on(true);
  return nn::grad(forward(leaf), {leaf})[0];
}

Critic Critic::clone() const {
  Critic out;
  out.config_ = config_;
  out.params_ = params_.clone();
  return out;
}

}  // namespace fwigan
