#pragma once

// UNet and UNet++ encoder-decoders built from circular 3x3 convolutions.
//
// Both variants share a 4-level encoder (two conv-bn-relu blocks per level,
// widths W0, 2W0, 4W0, 8W0, 2x2 max pooling between levels) and a decoder of
// two blocks per level fed by a nearest-neighbour upsample of the level below,
// followed by a 3x3 projection to one channel.
//
// UNet++ adds six nested skip nodes X(i,j), one conv-bn-relu each:
//
//   X(0,0) -> X(0,1) -> X(0,2) -> X(0,3)
//   X(1,0) -> X(1,1) -> X(1,2)
//   X(2,0) -> X(2,1)
//   X(3,0)
//
// X(i,j) sees every X(i,k<j) plus up(X(i+1,j-1)). The decoder at level i sees
// all X(i,*) and up(decoder level i+1).

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "seasonet/dataio.hpp"
#include "seasonet/nn/layers.hpp"

namespace seasonet::model {

enum class Arch { kUNet, kUNetPP };

std::string arch_name(Arch a);
Arch parse_arch(const std::string& s);
std::string padding_name(nn::PaddingMode m);
nn::PaddingMode parse_padding(const std::string& s);

struct ModelConfig {
  Arch arch = Arch::kUNetPP;
  int in_channels = 1;
  int base_width = 32;
  bool elevation = false;
  std::string case_id;
  nn::PaddingMode padding = nn::PaddingMode::kCircularBoth;
  dataio::NormStats norm;

  /// Checks in_channels against the case's channel count when case_id is set.
  void validate() const;
};

/// Layer counts read back from the built graph.
struct GraphSummary {
  int encoder_convs = 0;
  int decoder_convs = 0;       // includes the output head
  int intermediate_convs = 0;  // UNet++ nested nodes
  int maxpools = 0;
  int decoder_upsamples = 0;
  int intermediate_upsamples = 0;           // one per nested upsampled feed
  int intermediate_resolution_transitions = 0;  // distinct level pairs among those feeds
  std::size_t parameter_count = 0;
};

template <typename T>
class Network {
 public:
  Network(const ModelConfig& cfg, std::uint64_t seed);

  /// N x in_channels x H x W -> N x 1 x H x W. H and W must be divisible by 8.
  nn::Tensor4<T> forward(const nn::Tensor4<T>& x);
  /// Accumulates parameter gradients; returns the gradient w.r.t. the input.
  nn::Tensor4<T> backward(const nn::Tensor4<T>& grad_out);

  std::vector<nn::Param<T>*> params();
  void zero_grad();
  void set_training(bool on);
  bool training() const { return training_; }
  void clear_cache();

  struct Buffer {
    std::string name;
    std::vector<T>* values;
  };
  /// Batchnorm running statistics, in a stable order.
  std::vector<Buffer> buffers();
  /// Marks every batchnorm as having usable running statistics.
  void mark_running_stats_ready();

  GraphSummary summary() const;
  const ModelConfig& config() const { return cfg_; }
  ModelConfig& mutable_config() { return cfg_; }

 private:
  enum class Role { kInput, kEncoder, kIntermediate, kDecoder, kHead };
  enum class FeedOp { kIdentity, kMaxPool, kUpsample };

  struct Feed {
    std::size_t source = 0;
    FeedOp op = FeedOp::kIdentity;
    std::size_t channels = 0;
    nn::MaxPool2<T> pool;
    nn::Upsample2<T> up;
  };

  struct Node {
    std::string name;
    Role role = Role::kInput;
    int level = 0;
    std::vector<Feed> feeds;
    std::vector<nn::ConvBnRelu<T>> blocks;
    std::optional<nn::Conv2d<T>> head;
    std::size_t out_channels = 0;
  };

  std::size_t add_node(std::string name, Role role, int level, std::vector<std::pair<std::size_t, FeedOp>> feeds,
                       std::size_t out_channels, int n_blocks);
  void add_head(std::size_t source);
  void initialize(std::uint64_t seed);

  ModelConfig cfg_;
  std::vector<Node> nodes_;
  bool training_ = true;
  bool forward_done_ = false;
};

using Model = Network<float>;

// ---------------------------------------------------------------------------

struct TensorBlob {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<float> values;
};

struct Provenance {
  std::string stage;  // "init", "pretrain", "finetune"
  std::vector<std::string> dataset_ids;
  int epochs_run = 0;
  int best_epoch = 0;
  double best_validation_loss = 0.0;
  std::string parent;  // checkpoint this one was fine-tuned from
};

struct Checkpoint {
  static constexpr int kFormatVersion = 1;

  ModelConfig config;
  std::map<std::string, double> hyperparameters;  // optimizer, scheduler, batchnorm constants
  Provenance provenance;
  std::vector<TensorBlob> tensors;  // parameters, then batchnorm buffers
};

Checkpoint to_checkpoint(Model& model);
/// Restores a model; CorruptionError names any missing or mis-shaped tensor.
Model from_checkpoint(const Checkpoint& ckpt);

/// Directory layout: manifest.json + tensors/<name>.f32 (float32 little-endian).
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace seasonet::model
