#include "seasonet/model.hpp"

#include <cmath>
#include <random>
#include <set>

#include "seasonet/stacking.hpp"

namespace seasonet::model {

std::string arch_name(Arch a) { return a == Arch::kUNet ? "unet" : "unetpp"; }

Arch parse_arch(const std::string& s) {
  if (s == "unet") return Arch::kUNet;
  if (s == "unetpp" || s == "unet++") return Arch::kUNetPP;
  throw ConfigError("unknown architecture '" + s + "' (expected unet or unetpp)");
}

std::string padding_name(nn::PaddingMode m) {
  return m == nn::PaddingMode::kCircularBoth ? "circular-both" : "circular-lon-reflect-lat";
}

nn::PaddingMode parse_padding(const std::string& s) {
  if (s == "circular-both") return nn::PaddingMode::kCircularBoth;
  if (s == "circular-lon-reflect-lat") return nn::PaddingMode::kCircularLonReflectLat;
  throw ConfigError("unknown padding mode '" + s + "'");
}

void ModelConfig::validate() const {
  if (in_channels < 1) throw ConfigError("in_channels must be >= 1");
  if (base_width < 1) throw ConfigError("base_width must be >= 1");
  if (!case_id.empty()) {
    const auto c = stacking::TemporalCase::parse(case_id);
    const int expected = stacking::channel_count(c, elevation);
    if (expected != in_channels) {
      throw ConfigError("case " + case_id + (elevation ? " with" : " without") + " elevation needs " +
                        std::to_string(expected) + " input channels, config has " + std::to_string(in_channels));
    }
  }
  norm.validate();
}

// ---------------------------------------------------------------------------

template <typename T>
std::size_t Network<T>::add_node(std::string name, Role role, int level,
                                 std::vector<std::pair<std::size_t, FeedOp>> feeds, std::size_t out_channels,
                                 int n_blocks) {
  Node node;
  node.name = std::move(name);
  node.role = role;
  node.level = level;
  node.out_channels = out_channels;
  std::size_t in_ch = 0;
  for (auto [src, op] : feeds) {
    Feed f;
    f.source = src;
    f.op = op;
    f.channels = nodes_.at(src).out_channels;
    in_ch += f.channels;
    node.feeds.push_back(std::move(f));
  }
  for (int b = 0; b < n_blocks; ++b) {
    node.blocks.emplace_back(b == 0 ? in_ch : out_channels, out_channels, cfg_.padding,
                             node.name + "." + std::to_string(b));
  }
  nodes_.push_back(std::move(node));
  return nodes_.size() - 1;
}

template <typename T>
void Network<T>::add_head(std::size_t source) {
  Node node;
  node.name = "head";
  node.role = Role::kHead;
  node.out_channels = 1;
  Feed f;
  f.source = source;
  f.channels = nodes_.at(source).out_channels;
  node.feeds.push_back(std::move(f));
  node.head.emplace(node.feeds.front().channels, 1, cfg_.padding, "head.conv");
  nodes_.push_back(std::move(node));
}

template <typename T>
Network<T>::Network(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  const auto w0 = static_cast<std::size_t>(cfg_.base_width);
  const auto I = FeedOp::kIdentity;
  const auto P = FeedOp::kMaxPool;
  const auto U = FeedOp::kUpsample;

  Node input;
  input.name = "input";
  input.role = Role::kInput;
  input.out_channels = static_cast<std::size_t>(cfg_.in_channels);
  nodes_.push_back(std::move(input));

  const auto x00 = add_node("x00", Role::kEncoder, 0, {{0, I}}, w0, 2);
  const auto x10 = add_node("x10", Role::kEncoder, 1, {{x00, P}}, 2 * w0, 2);
  const auto x20 = add_node("x20", Role::kEncoder, 2, {{x10, P}}, 4 * w0, 2);
  const auto x30 = add_node("x30", Role::kEncoder, 3, {{x20, P}}, 8 * w0, 2);

  if (cfg_.arch == Arch::kUNet) {
    const auto d2 = add_node("d2", Role::kDecoder, 2, {{x20, I}, {x30, U}}, 4 * w0, 2);
    const auto d1 = add_node("d1", Role::kDecoder, 1, {{x10, I}, {d2, U}}, 2 * w0, 2);
    const auto d0 = add_node("d0", Role::kDecoder, 0, {{x00, I}, {d1, U}}, w0, 2);
    add_head(d0);
  } else {
    const auto x01 = add_node("x01", Role::kIntermediate, 0, {{x00, I}, {x10, U}}, w0, 1);
    const auto x11 = add_node("x11", Role::kIntermediate, 1, {{x10, I}, {x20, U}}, 2 * w0, 1);
    const auto x21 = add_node("x21", Role::kIntermediate, 2, {{x20, I}, {x30, U}}, 4 * w0, 1);
    const auto x02 = add_node("x02", Role::kIntermediate, 0, {{x00, I}, {x01, I}, {x11, U}}, w0, 1);
    const auto x12 = add_node("x12", Role::kIntermediate, 1, {{x10, I}, {x11, I}, {x21, U}}, 2 * w0, 1);
    const auto x03 = add_node("x03", Role::kIntermediate, 0, {{x00, I}, {x01, I}, {x02, I}, {x12, U}}, w0, 1);
    const auto d2 = add_node("d2", Role::kDecoder, 2, {{x20, I}, {x21, I}, {x30, U}}, 4 * w0, 2);
    const auto d1 = add_node("d1", Role::kDecoder, 1, {{x10, I}, {x11, I}, {x12, I}, {d2, U}}, 2 * w0, 2);
    const auto d0 = add_node("d0", Role::kDecoder, 0, {{x00, I}, {x01, I}, {x02, I}, {x03, I}, {d1, U}}, w0, 2);
    add_head(d0);
  }
  initialize(seed);
}

template <typename T>
void Network<T>::initialize(std::uint64_t seed) {
  // He-uniform weights (bound sqrt(6 / fan_in)), zero biases, gamma 1, beta 0,
  // running stats (0, 1). Values are drawn in double so float and double
  // networks built from one seed agree up to rounding.
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  auto init_conv = [&](nn::Conv2d<T>& conv) {
    const double bound = std::sqrt(6.0 / static_cast<double>(conv.in_channels() * 9));
    for (T& w : conv.weight.value) w = static_cast<T>(bound * uni(rng));
    std::fill(conv.bias.value.begin(), conv.bias.value.end(), T(0));
  };
  for (auto& node : nodes_) {
    for (auto& b : node.blocks) {
      init_conv(b.conv);
      b.bn.set_running_stats(std::vector<T>(b.bn.channels(), T(0)), std::vector<T>(b.bn.channels(), T(1)));
    }
    if (node.head) init_conv(*node.head);
  }
}

template <typename T>
nn::Tensor4<T> Network<T>::forward(const nn::Tensor4<T>& x) {
  if (x.c() != static_cast<std::size_t>(cfg_.in_channels)) {
    throw DimensionError("model" + (cfg_.case_id.empty() ? std::string() : " for case " + cfg_.case_id) +
                         " expects " + std::to_string(cfg_.in_channels) + " input channels, got " +
                         std::to_string(x.c()));
  }
  if (x.h() % 8 != 0 || x.w() % 8 != 0) {
    throw DimensionError("model input grid " + std::to_string(x.h()) + "x" + std::to_string(x.w()) +
                         " is not divisible by 8");
  }
  std::vector<nn::Tensor4<T>> outputs(nodes_.size());
  outputs[0] = x;
  for (std::size_t i = 1; i < nodes_.size(); ++i) {
    Node& node = nodes_[i];
    std::vector<nn::Tensor4<T>> fed;
    fed.reserve(node.feeds.size());
    for (auto& f : node.feeds) {
      const auto& src = outputs[f.source];
      switch (f.op) {
        case FeedOp::kIdentity:
          fed.push_back(src);
          break;
        case FeedOp::kMaxPool:
          fed.push_back(f.pool.forward(src));
          break;
        case FeedOp::kUpsample:
          fed.push_back(f.up.forward(src));
          break;
      }
    }
    nn::Tensor4<T> h;
    if (fed.size() == 1) {
      h = std::move(fed.front());
    } else {
      std::vector<const nn::Tensor4<T>*> parts;
      for (const auto& t : fed) parts.push_back(&t);
      h = nn::concat_channels<T>(parts);
    }
    if (node.head) {
      h = node.head->forward(h);
    } else {
      for (auto& b : node.blocks) h = b.forward(h);
    }
    outputs[i] = std::move(h);
  }
  forward_done_ = true;
  return outputs.back();
}

template <typename T>
nn::Tensor4<T> Network<T>::backward(const nn::Tensor4<T>& grad_out) {
  if (!forward_done_) throw StateError("model: backward called before forward");
  std::vector<nn::Tensor4<T>> grads(nodes_.size());
  grads.back() = grad_out;
  for (std::size_t i = nodes_.size() - 1; i >= 1; --i) {
    Node& node = nodes_[i];
    if (grads[i].empty()) continue;
    nn::Tensor4<T> g = std::move(grads[i]);
    if (node.head) {
      g = node.head->backward(g);
    } else {
      for (auto it = node.blocks.rbegin(); it != node.blocks.rend(); ++it) g = it->backward(g);
    }
    std::vector<nn::Tensor4<T>> parts;
    if (node.feeds.size() == 1) {
      parts.push_back(std::move(g));
    } else {
      std::vector<std::size_t> sizes;
      for (const auto& f : node.feeds) sizes.push_back(f.channels);
      parts = nn::split_channels<T>(g, sizes);
    }
    for (std::size_t k = 0; k < node.feeds.size(); ++k) {
      auto& f = node.feeds[k];
      nn::Tensor4<T> gs;
      switch (f.op) {
        case FeedOp::kIdentity:
          gs = std::move(parts[k]);
          break;
        case FeedOp::kMaxPool:
          gs = f.pool.backward(parts[k]);
          break;
        case FeedOp::kUpsample:
          gs = f.up.backward(parts[k]);
          break;
      }
      auto& acc = grads[f.source];
      if (acc.empty()) {
        acc = std::move(gs);
      } else {
        auto a = acc.data();
        auto b = gs.data();
        for (std::size_t e = 0; e < a.size(); ++e) a[e] += b[e];
      }
    }
  }
  return std::move(grads[0]);
}

template <typename T>
std::vector<nn::Param<T>*> Network<T>::params() {
  std::vector<nn::Param<T>*> out;
  for (auto& node : nodes_) {
    for (auto& b : node.blocks)
      for (auto* p : b.params()) out.push_back(p);
    if (node.head)
      for (auto* p : node.head->params()) out.push_back(p);
  }
  return out;
}

template <typename T>
void Network<T>::zero_grad() {
  for (auto* p : params()) p->zero_grad();
}

template <typename T>
void Network<T>::set_training(bool on) {
  training_ = on;
  for (auto& node : nodes_)
    for (auto& b : node.blocks) b.set_training(on);
}

template <typename T>
void Network<T>::clear_cache() {
  for (auto& node : nodes_) {
    for (auto& b : node.blocks) b.clear_cache();
    if (node.head) node.head->clear_cache();
    for (auto& f : node.feeds) f.pool.clear_cache();
  }
  forward_done_ = false;
}

template <typename T>
std::vector<typename Network<T>::Buffer> Network<T>::buffers() {
  std::vector<Buffer> out;
  for (auto& node : nodes_) {
    for (auto& b : node.blocks) {
      const auto& base = b.bn.gamma.name;  // "<node>.<k>.bn.gamma"
      const auto stem = base.substr(0, base.size() - std::string("gamma").size());
      out.push_back({stem + "running_mean", &b.bn.running_mean});
      out.push_back({stem + "running_var", &b.bn.running_var});
    }
  }
  return out;
}

template <typename T>
void Network<T>::mark_running_stats_ready() {
  for (auto& node : nodes_)
    for (auto& b : node.blocks) b.bn.set_running_stats(b.bn.running_mean, b.bn.running_var);
}

template <typename T>
GraphSummary Network<T>::summary() const {
  GraphSummary s;
  std::set<int> transitions;
  for (const auto& node : nodes_) {
    const int convs = static_cast<int>(node.blocks.size()) + (node.head ? 1 : 0);
    switch (node.role) {
      case Role::kEncoder:
        s.encoder_convs += convs;
        break;
      case Role::kIntermediate:
        s.intermediate_convs += convs;
        break;
      case Role::kDecoder:
      case Role::kHead:
        s.decoder_convs += convs;
        break;
      case Role::kInput:
        break;
    }
    for (const auto& f : node.feeds) {
      if (f.op == FeedOp::kMaxPool) ++s.maxpools;
      if (f.op == FeedOp::kUpsample) {
        if (node.role == Role::kDecoder) ++s.decoder_upsamples;
        if (node.role == Role::kIntermediate) {
          ++s.intermediate_upsamples;
          transitions.insert(nodes_[f.source].level);
        }
      }
    }
    for (const auto& b : node.blocks) {
      s.parameter_count += b.conv.weight.size() + b.conv.bias.size() + b.bn.gamma.size() + b.bn.beta.size();
    }
    if (node.head) s.parameter_count += node.head->weight.size() + node.head->bias.size();
  }
  s.intermediate_resolution_transitions = static_cast<int>(transitions.size());
  return s;
}

template class Network<float>;
template class Network<double>;

}  // namespace seasonet::model
