#pragma once

#include <vector>

#include "c2sp/compression.hpp"
#include "c2sp/layers.hpp"

namespace c2sp {

// Number of up-sampling blocks for a given compression ratio:
// floor(log2(1/r)) + 1, evaluated in exact integer arithmetic.
inline std::size_t n_upblocks(Ratio r) {
    if (r.num >= r.den) throw config_error("n_upblocks: ratio " + r.str() + " must be < 1");
    std::size_t k = 0;
    // Largest k with 2^k * num <= den.
    std::uint64_t pow = r.num;
    while (pow * 2 <= r.den) {
        pow *= 2;
        ++k;
    }
    return k + 1;
}

struct ReconstructionConfig {
    Ratio ratio{1, 4};
    std::size_t original_len = 5120;  // N
    std::size_t channels = 23;        // C
    std::size_t filters_recon = 16;   // first block width, doubled per block
    std::size_t kernel = 3;

    std::size_t n_blocks() const { return n_upblocks(ratio); }
    std::size_t compressed() const { return compressed_len(ratio, original_len); }
    std::size_t block_filters(std::size_t b) const {  // b is 1-based
        return filters_recon << (b - 1);
    }
};

// Adaptive-depth decoder: the first n_blocks-1 blocks double the length, the
// final block targets exactly N (an identity up-sample for dyadic ratios),
// then a 1x1 bottleneck maps back to the signal's channel count. The final
// bottleneck has no activation so reconstructions are unbounded like EEG.
class ReconstructionNet {
  public:
    ReconstructionNet() = default;

    ReconstructionNet(const ReconstructionConfig& cfg, Rng& rng) : cfg_(cfg) {
        std::size_t width = cfg.channels;
        for (std::size_t b = 1; b <= cfg.n_blocks(); ++b) {
            UpBlock blk;
            blk.conv = Conv1dLayer::create(width, cfg.block_filters(b), cfg.kernel, 1, 1, false,
                                           rng);
            blk.bn = BatchNormLayer::create(cfg.block_filters(b));
            blocks_.push_back(std::move(blk));
            width = cfg.block_filters(b);
        }
        bottleneck_ = Conv1dLayer::create(width, cfg.channels, 1, 1, 0, true, rng);
    }

    const ReconstructionConfig& config() const { return cfg_; }
    std::size_t n_blocks() const { return blocks_.size(); }
    std::size_t forward_calls() const { return forward_calls_; }

    Tensor up_block_forward(std::size_t index, const Tensor& f_in, std::size_t target_len,
                            bool training) {
        if (f_in.ndim() != 3) throw dim_error("up_block: input must be [BxCxL]");
        if (target_len < f_in.dim(2)) {
            throw state_error("up_block: target length " + std::to_string(target_len) +
                              " below input length " + std::to_string(f_in.dim(2)) +
                              "; this decoder never downsamples");
        }
        UpBlock& blk = blocks_.at(index);
        Tensor h = upsample_linear(f_in, target_len);
        return relu(blk.bn.forward(blk.conv.forward(h), training));
    }

    // z [BxCxM] -> x_hat [BxCxN]
    Tensor forward(const Tensor& z, bool training) {
        ++forward_calls_;
        if (z.ndim() != 3 || z.dim(1) != cfg_.channels || z.dim(2) != cfg_.compressed()) {
            throw dim_error("reconstruct: expected [Bx" + std::to_string(cfg_.channels) + "x" +
                            std::to_string(cfg_.compressed()) + "], got " + shape_str(z.shape()));
        }
        Tensor h = z;
        std::size_t len = cfg_.compressed();
        for (std::size_t b = 0; b < blocks_.size(); ++b) {
            const std::size_t target =
                b + 1 < blocks_.size() ? len * 2 : cfg_.original_len;
            h = up_block_forward(b, h, target, training);
            len = target;
        }
        return bottleneck_.forward(h);
    }

    std::vector<NamedParam> params() {
        std::vector<NamedParam> out;
        for (std::size_t b = 0; b < blocks_.size(); ++b) {
            const std::string p = "recon.block" + std::to_string(b + 1);
            blocks_[b].conv.collect(p + ".conv", out);
            blocks_[b].bn.collect(p + ".bn", out);
        }
        bottleneck_.collect("recon.bottleneck", out);
        return out;
    }

    std::vector<NamedParam> state() {
        std::vector<NamedParam> out = params();
        for (std::size_t b = 0; b < blocks_.size(); ++b) {
            blocks_[b].bn.collect_state("recon.block" + std::to_string(b + 1) + ".bn", out);
        }
        return out;
    }

    std::vector<BatchNormLayer*> batchnorms() {
        std::vector<BatchNormLayer*> out;
        for (auto& b : blocks_) out.push_back(&b.bn);
        return out;
    }

    std::vector<std::pair<std::string, BatchNormLayer*>> named_batchnorms() {
        std::vector<std::pair<std::string, BatchNormLayer*>> out;
        for (std::size_t b = 0; b < blocks_.size(); ++b)
            out.push_back({"recon.block" + std::to_string(b + 1) + ".bn", &blocks_[b].bn});
        return out;
    }

  private:
    struct UpBlock {
        Conv1dLayer conv;
        BatchNormLayer bn;
    };

    ReconstructionConfig cfg_;
    std::vector<UpBlock> blocks_;
    Conv1dLayer bottleneck_;
    std::size_t forward_calls_ = 0;
};

}  // namespace c2sp
