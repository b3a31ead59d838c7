#include "hmd/model.hpp"

#include <stdexcept>

#include "hmd/lstm_baseline.hpp"

namespace hmd {

namespace {

std::vector<std::size_t> real_tokens(const PaddedBatch& batch, std::size_t i) {
  const auto& row = batch.tokens[i];
  return {row.begin(), row.begin() + static_cast<std::ptrdiff_t>(batch.length(i))};
}

void check_batch(const PaddedBatch& batch) {
  if (batch.size() == 0) throw std::invalid_argument("loss: empty batch");
}

template <template <class> class S>
class CaptionerBase : public Captioner {
 public:
  CaptionerBase(DecoderConfig config, ModelShape shape, S<Tensor> params)
      : config_(config), shape_(shape), params_(std::move(params)) {}

  const DecoderConfig& config() const override { return config_; }
  const ModelShape& shape() const override { return shape_; }
  std::vector<NamedTensor> parameters() override { return named_tensors(params_); }
  std::vector<ConstNamedTensor> parameters() const override { return named_tensors(params_); }

 protected:
  DecoderConfig config_;
  ModelShape shape_;
  S<Tensor> params_;
};

class MemoryCaptioner final : public CaptionerBase<DecoderT> {
 public:
  using CaptionerBase::CaptionerBase;

  ParamInventory inventory() const override {
    return memory_decoder_inventory(config_, shape_.vocab_size, shape_.feature_width);
  }

  TapeLoss loss(ad::Tape& tape, const PaddedBatch& batch) const override {
    check_batch(batch);
    TapeLoss out;
    const DecoderVars vars = bind<DecoderT>(tape, params_, true, &out.leaves);
    std::vector<SequenceLogits> items;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const auto tokens = real_tokens(batch, i);
      const VisualContext visual = project_and_pool(tape.constant(*batch.frames[i]), vars.feature_proj);
      const ColdStartState cold = make_cold_start(config_.seed, batch.video_ids[i], config_.n);
      items.push_back(collect_logits(decoder_forward(vars, config_.attention, visual, cold, tokens), tokens));
    }
    const LossTerms terms = multilayer_loss(items, {config_.lambda1, config_.lambda3, config_.lambda5});
    out.total = terms.total;
    out.layer1 = terms.layer1;
    out.layer3 = terms.layer3;
    out.output = terms.layer5;
    return out;
  }

  GenerationResult generate(const Tensor& frames, std::string_view video_id) const override {
    return greedy_decode(params_, config_, frames, video_id);
  }

  std::unique_ptr<Captioner> clone() const override { return std::make_unique<MemoryCaptioner>(*this); }
};

class LstmCaptioner final : public CaptionerBase<LstmT> {
 public:
  using CaptionerBase::CaptionerBase;

  ParamInventory inventory() const override {
    return lstm_baseline_inventory(config_, shape_.vocab_size, shape_.feature_width);
  }

  TapeLoss loss(ad::Tape& tape, const PaddedBatch& batch) const override {
    check_batch(batch);
    TapeLoss out;
    const LstmVars vars = bind<LstmT>(tape, params_, true, &out.leaves);
    ad::Var sum;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const auto tokens = real_tokens(batch, i);
      const LstmForward f = lstm_forward(vars, tape.constant(*batch.frames[i]), tokens);
      const std::vector<std::size_t> targets(tokens.begin() + 1, tokens.end());
      const ad::Var ce = sequence_cross_entropy(f.logits, targets);
      sum = sum.valid() ? ad::add(sum, ce) : ce;
    }
    out.output = ad::scale(sum, 1.0 / static_cast<double>(batch.size()));
    out.total = out.output;
    return out;
  }

  GenerationResult generate(const Tensor& frames, std::string_view video_id) const override {
    return lstm_greedy_decode(params_, config_, frames, video_id);
  }

  std::unique_ptr<Captioner> clone() const override { return std::make_unique<LstmCaptioner>(*this); }
};

}  // namespace

std::unique_ptr<Captioner> make_captioner(const DecoderConfig& config, const ModelShape& shape) {
  config.validate();
  if (shape.vocab_size <= 4) throw config_error("vocabulary must contain at least one non-reserved token");
  if (shape.feature_width == 0) throw config_error("feature width q must be positive");
  if (config.decoder == DecoderKind::lstm) {
    return std::make_unique<LstmCaptioner>(config, shape,
                                           init_lstm_params(config, shape.vocab_size, shape.feature_width));
  }
  return std::make_unique<MemoryCaptioner>(config, shape,
                                           init_decoder_params(config, shape.vocab_size, shape.feature_width));
}

nlohmann::ordered_json config_to_json(const DecoderConfig& c) {
  nlohmann::ordered_json j;
  j["n"] = c.n;
  j["d_a"] = c.attention_width;
  j["num_layers"] = c.num_layers;
  j["lambda1"] = c.lambda1;
  j["lambda3"] = c.lambda3;
  j["lambda5"] = c.lambda5;
  j["max_caption_len"] = c.max_caption_len;
  j["seed"] = c.seed;
  j["attention"] = std::string(to_string(c.attention));
  j["decoder"] = std::string(to_string(c.decoder));
  return j;
}

DecoderConfig config_from_json(const nlohmann::json& j, DecoderConfig c) {
  if (!j.is_object()) throw config_error("config must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "n") c.n = value.get<std::size_t>();
      else if (key == "d_a") c.attention_width = value.get<std::size_t>();
      else if (key == "num_layers") c.num_layers = value.get<std::size_t>();
      else if (key == "lambda1") c.lambda1 = value.get<double>();
      else if (key == "lambda3") c.lambda3 = value.get<double>();
      else if (key == "lambda5") c.lambda5 = value.get<double>();
      else if (key == "max_caption_len") c.max_caption_len = value.get<std::size_t>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "attention") c.attention = parse_attention_kind(value.get<std::string>());
      else if (key == "decoder") c.decoder = parse_decoder_kind(value.get<std::string>());
      else throw config_error("unknown config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw config_error(std::string("bad config value: ") + e.what());
  }
  return c;
}

}  // namespace hmd
