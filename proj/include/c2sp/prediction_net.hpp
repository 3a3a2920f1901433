#pragma once

#include <vector>

#include "c2sp/layers.hpp"

namespace c2sp {

// How each basic block closes its residual connection.
//   ProjectUp: the identity path is lifted to the block's (wider) output via
//     a strided 1x1 convolution, which is what the width schedule
//     2*b*filters_stem requires.
//   Literal: the convolution path is projected back down to the input width
//     and added to the unmodified input (stride 1 throughout); kept as an
//     ablation switch.
enum class ResidualMode { ProjectUp, Literal };

struct PredictionConfig {
    std::size_t in_channels = 23;
    std::size_t filters_stem = 8;   // grid: {4, 8, 16, 32}
    std::size_t size_fc = 50;       // grid: {25, 50, 100}
    std::size_t n_blocks = 4;
    std::size_t convs_per_block = 2;
    std::size_t n_classes = 2;
    double leaky_slope = 0.01;
    ResidualMode residual = ResidualMode::ProjectUp;

    // Pinned layer geometry: stem conv 7/2/3, stem pool 3/2/1, block convs
    // kernel 3 (first stride 2), bottleneck 1x1 stride 2.
    std::size_t stem_kernel = 7, stem_stride = 2, stem_padding = 3;
    std::size_t pool_kernel = 3, pool_stride = 2, pool_padding = 1;
    std::size_t block_kernel = 3;

    std::size_t block_width(std::size_t b) const {  // b is 1-based
        return 2 * b * filters_stem;
    }
};

class PredictionNet {
  public:
    PredictionNet() = default;

    PredictionNet(const PredictionConfig& cfg, Rng& rng) : cfg_(cfg) {
        stem_conv_ = Conv1dLayer::create(cfg.in_channels, cfg.filters_stem, cfg.stem_kernel,
                                         cfg.stem_stride, cfg.stem_padding, false, rng);
        stem_bn_ = BatchNormLayer::create(cfg.filters_stem);
        std::size_t width = cfg.filters_stem;
        for (std::size_t b = 1; b <= cfg.n_blocks; ++b) {
            Block blk;
            const std::size_t out_w =
                cfg.residual == ResidualMode::ProjectUp ? cfg.block_width(b) : width;
            const std::size_t conv_w =
                cfg.residual == ResidualMode::ProjectUp ? out_w : cfg.block_width(b);
            const std::size_t first_stride = cfg.residual == ResidualMode::ProjectUp ? 2 : 1;
            blk.conv1 = Conv1dLayer::create(width, conv_w, cfg.block_kernel, first_stride, 1,
                                            false, rng);
            blk.bn1 = BatchNormLayer::create(conv_w);
            blk.conv2 = Conv1dLayer::create(conv_w, conv_w, cfg.block_kernel, 1, 1, false, rng);
            blk.bn2 = BatchNormLayer::create(conv_w);
            if (cfg.residual == ResidualMode::ProjectUp) {
                blk.shortcut = Conv1dLayer::create(width, out_w, 1, 2, 0, false, rng);
            } else {
                blk.shortcut = Conv1dLayer::create(conv_w, out_w, 1, 1, 0, false, rng);
            }
            blocks_.push_back(std::move(blk));
            width = out_w;
        }
        fc1_ = LinearLayer::create(width, cfg.size_fc, rng);
        fc2_ = LinearLayer::create(cfg.size_fc, cfg.n_classes, rng);
        final_width_ = width;
    }

    const PredictionConfig& config() const { return cfg_; }
    std::size_t final_width() const { return final_width_; }

    Tensor stem_forward(const Tensor& x, bool training) {
        if (x.ndim() != 3) throw dim_error("stem: input must be [BxCxM]");
        if (x.dim(2) < cfg_.stem_kernel && x.dim(2) + 2 * cfg_.stem_padding < cfg_.stem_kernel) {
            throw dim_error("stem: input length " + std::to_string(x.dim(2)) +
                            " shorter than kernel");
        }
        Tensor h = stem_conv_.forward(x);
        h = stem_bn_.forward(h, training);
        h = relu(h);
        return maxpool1d(h, cfg_.pool_kernel, cfg_.pool_stride, cfg_.pool_padding);
    }

    Tensor block_forward(std::size_t index, const Tensor& f_in, bool training) {
        Block& blk = blocks_.at(index);
        Tensor h = relu(blk.bn1.forward(blk.conv1.forward(f_in), training));
        h = relu(blk.bn2.forward(blk.conv2.forward(h), training));
        if (cfg_.residual == ResidualMode::ProjectUp) {
            return add(blk.shortcut.forward(f_in), h);
        }
        return add(f_in, blk.shortcut.forward(h));
    }

    Tensor head_forward(const Tensor& f_last) {
        Tensor h = global_avg_pool(f_last);
        h = leaky_relu(fc1_.forward(h), cfg_.leaky_slope);
        return softmax(fc2_.forward(h));
    }

    // [BxCxM] -> class probabilities [Bx2]
    Tensor forward(const Tensor& x, bool training) {
        Tensor h = stem_forward(x, training);
        for (std::size_t b = 0; b < blocks_.size(); ++b) h = block_forward(b, h, training);
        return head_forward(h);
    }

    std::vector<NamedParam> params() {
        std::vector<NamedParam> out;
        stem_conv_.collect("pred.stem.conv", out);
        stem_bn_.collect("pred.stem.bn", out);
        for (std::size_t b = 0; b < blocks_.size(); ++b) {
            const std::string p = "pred.block" + std::to_string(b + 1);
            blocks_[b].conv1.collect(p + ".conv1", out);
            blocks_[b].bn1.collect(p + ".bn1", out);
            blocks_[b].conv2.collect(p + ".conv2", out);
            blocks_[b].bn2.collect(p + ".bn2", out);
            blocks_[b].shortcut.collect(p + ".shortcut", out);
        }
        fc1_.collect("pred.fc1", out);
        fc2_.collect("pred.fc2", out);
        return out;
    }

    std::vector<NamedParam> state() {
        std::vector<NamedParam> out = params();
        stem_bn_.collect_state("pred.stem.bn", out);
        for (std::size_t b = 0; b < blocks_.size(); ++b) {
            const std::string p = "pred.block" + std::to_string(b + 1);
            blocks_[b].bn1.collect_state(p + ".bn1", out);
            blocks_[b].bn2.collect_state(p + ".bn2", out);
        }
        return out;
    }

    std::vector<BatchNormLayer*> batchnorms() {
        std::vector<BatchNormLayer*> out{&stem_bn_};
        for (auto& b : blocks_) {
            out.push_back(&b.bn1);
            out.push_back(&b.bn2);
        }
        return out;
    }

    std::vector<std::pair<std::string, BatchNormLayer*>> named_batchnorms() {
        std::vector<std::pair<std::string, BatchNormLayer*>> out{{"pred.stem.bn", &stem_bn_}};
        for (std::size_t b = 0; b < blocks_.size(); ++b) {
            const std::string p = "pred.block" + std::to_string(b + 1);
            out.push_back({p + ".bn1", &blocks_[b].bn1});
            out.push_back({p + ".bn2", &blocks_[b].bn2});
        }
        return out;
    }

    std::size_t n_blocks() const { return blocks_.size(); }

  private:
    struct Block {
        Conv1dLayer conv1, conv2, shortcut;
        BatchNormLayer bn1, bn2;
    };

    PredictionConfig cfg_;
    Conv1dLayer stem_conv_;
    BatchNormLayer stem_bn_;
    std::vector<Block> blocks_;
    LinearLayer fc1_, fc2_;
    std::size_t final_width_ = 0;
};

}  // namespace c2sp
