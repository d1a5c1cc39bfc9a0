// Encoder-Decoder LSTM cell. Inputs and the previous hidden state are
// concatenated, run through a skip-connected encoder-decoder, and the decoder
// output is split into the four LSTM gate maps. A final convolution projects
// the new hidden state to an RGB prediction; the bottleneck activation (fused
// with the higher level's code when present) is returned as the semantic code.
#pragma once

#include <cassert>
#include <string>
#include <vector>

#include "mspn/nn.hpp"

namespace mspn {

template <class S>
struct CellState {
  Var<S> h, c;
  bool initialized() const { return h.defined() && c.defined(); }
};

struct CellConfig {
  int level = 0;
  int input_channels = 6;    // concatenated input maps, not counting h
  int hidden_channels = 64;
  int encoder_stages = 1;    // L - l; every stage halves the spatial size
  int bottleneck_channels = 64;
  int higher_code_channels = 0;  // 0: top level, no fusion stage
  int kernel = 3;
  NormKind norm = NormKind::none;  // ablation hook; applies inside the codec only
};

template <class S>
class EDLSTMCell {
 public:
  EDLSTMCell() = default;
  EDLSTMCell(const CellConfig& cfg, Rng& rng) : cfg_(cfg) {
    const int k = cfg.kernel;
    int feat_ch = cfg.input_channels + cfg.hidden_channels;
    enc_feat_channels_.push_back(feat_ch);
    for (int i = 0; i < cfg.encoder_stages; ++i) {
      enc_.emplace_back(feat_ch, cfg.bottleneck_channels, k, 2, rng);
      feat_ch = cfg.bottleneck_channels;
      enc_feat_channels_.push_back(feat_ch);
    }
    if (cfg.higher_code_channels > 0)
      fuse_ = Conv2d<S>(cfg.bottleneck_channels + cfg.higher_code_channels, cfg.bottleneck_channels, k, 1, rng);
    dec_.resize(std::size_t(cfg.encoder_stages));
    for (int j = cfg.encoder_stages - 1; j >= 0; --j) {
      const int in_ch = cfg.bottleneck_channels + enc_feat_channels_[std::size_t(j)];
      const int out_ch = (j == 0) ? 4 * cfg.hidden_channels : cfg.bottleneck_channels;
      dec_[std::size_t(j)] = Conv2d<S>(in_ch, out_ch, k, 1, rng);
    }
    // forget-gate bias offset for recurrent stability
    auto& gate_bias = dec_[0].b.value();
    for (int ch = 0; ch < cfg.hidden_channels; ++ch) gate_bias.at(0, ch, 0, 0) += S(1);
    proj_ = Conv2d<S>(cfg.hidden_channels, 3, k, 1, rng);
  }

  struct Output {
    Var<S> prediction;  // 3 channels at level resolution
    CellState<S> state;
    Var<S> code;        // bottleneck activation, post-fusion
  };

  CellState<S> initial_state(int batch, int height, int width) const {
    CellState<S> st;
    st.h = Var<S>::constant(Tensor<S>::zeros(batch, cfg_.hidden_channels, height, width));
    st.c = Var<S>::constant(Tensor<S>::zeros(batch, cfg_.hidden_channels, height, width));
    return st;
  }

  // Code fusion: channel concat followed by one convolutional mixing stage
  // (linear), output at the local code's channel depth. Identity when there is
  // no higher level.
  Var<S> fuse_codes(const Var<S>& local, const Var<S>& higher) const {
    if (cfg_.higher_code_channels == 0)
      throw ContractViolation("fuse_codes: cell has no fusion stage");
    const auto& lv = local.value();
    const auto& hv = higher.value();
    if (lv.h != hv.h || lv.w != hv.w)
      throw DimensionError("fuse_codes: bottleneck spatial mismatch " + lv.shape_str() + " vs " + hv.shape_str());
    return fuse_(concat_ch<S>({local, higher}));
  }

  Output step(const std::vector<Var<S>>& inputs, const CellState<S>& state,
              const Var<S>* higher_code = nullptr) const {
    if (!state.initialized()) throw ContractViolation("cell_step: state not initialized");
    if (inputs.empty()) throw ContractViolation("cell_step: no inputs");
    const auto& hv = state.h.value();
    int in_ch = 0;
    for (const auto& x : inputs) {
      const auto& v = x.value();
      if (v.n != hv.n || v.h != hv.h || v.w != hv.w)
        throw DimensionError("cell_step: input resolution " + v.shape_str() + " does not match state " +
                             hv.shape_str());
      in_ch += v.c;
    }
    if (in_ch != cfg_.input_channels)
      throw DimensionError("cell_step: got " + std::to_string(in_ch) + " input channels, cell expects " +
                           std::to_string(cfg_.input_channels));
    if ((higher_code != nullptr) != (cfg_.higher_code_channels > 0))
      throw ContractViolation("cell_step: higher code presence does not match cell configuration");

    auto maybe_norm = [this](Var<S> v) {
      return cfg_.norm == NormKind::instance ? instance_norm(v) : v;
    };
    std::vector<Var<S>> stack = inputs;
    stack.push_back(state.h);
    std::vector<Var<S>> feats;
    feats.reserve(std::size_t(cfg_.encoder_stages) + 1);
    feats.push_back(concat_ch<S>(stack));
    for (int i = 0; i < cfg_.encoder_stages; ++i)
      feats.push_back(relu(maybe_norm(enc_[std::size_t(i)](feats.back()))));

    Var<S> code = higher_code ? fuse_codes(feats.back(), *higher_code) : feats.back();

    Var<S> d = code;
    for (int j = cfg_.encoder_stages - 1; j >= 0; --j) {
      d = dec_[std::size_t(j)](concat_ch<S>({upsample_nearest2(d), feats[std::size_t(j)]}));
      if (j > 0) d = relu(maybe_norm(d));  // the final stage stays linear: it carries the gate pre-activations
    }

    const int hc = cfg_.hidden_channels;
    Var<S> f = sigmoid(slice_ch(d, 0, hc));
    Var<S> i = sigmoid(slice_ch(d, hc, hc));
    Var<S> o = sigmoid(slice_ch(d, 2 * hc, hc));
    Var<S> c_hat = tanh(slice_ch(d, 3 * hc, hc));

    CellState<S> next;
    next.c = add(mul(f, state.c), mul(i, c_hat));
    next.h = mul(o, tanh(next.c));
    assert(next.c.value().all_finite() && "cell memory must stay finite");

    return Output{proj_(next.h), next, code};
  }

  const CellConfig& config() const { return cfg_; }
  int bottleneck_channels() const { return cfg_.bottleneck_channels; }

  // direct access for tests and weight surgery
  Conv2d<S>& encoder_stage(int i) { return enc_[std::size_t(i)]; }
  Conv2d<S>& decoder_stage(int j) { return dec_[std::size_t(j)]; }
  Conv2d<S>& fusion_conv() { return fuse_; }
  Conv2d<S>& projection_conv() { return proj_; }

  void collect_params(const std::string& prefix, ParamList<S>& out) const {
    for (std::size_t i = 0; i < enc_.size(); ++i) enc_[i].collect(prefix + "/enc" + std::to_string(i), out);
    for (std::size_t j = 0; j < dec_.size(); ++j) dec_[j].collect(prefix + "/dec" + std::to_string(j), out);
    if (cfg_.higher_code_channels > 0) fuse_.collect(prefix + "/fuse", out);
    proj_.collect(prefix + "/proj", out);
  }

 private:
  CellConfig cfg_;
  std::vector<Conv2d<S>> enc_;
  std::vector<Conv2d<S>> dec_;  // dec_[j] produces the resolution of feats[j]; dec_[0] emits the gate stack
  Conv2d<S> fuse_;
  Conv2d<S> proj_;
  std::vector<int> enc_feat_channels_;
};

}  // namespace mspn
