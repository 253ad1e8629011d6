#include "patchlab/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>

#include "patchlab/base64.hpp"
#include "patchlab/error.hpp"
#include "patchlab/external_oracle.hpp"
#include "patchlab/simd.hpp"

namespace patchlab {

std::string_view score_kind_name(ScoreKind kind) {
  return kind == ScoreKind::kLogit ? "logit" : "probability";
}

ScoreKind parse_score_kind(std::string_view text) {
  if (text == "logit") return ScoreKind::kLogit;
  if (text == "probability") return ScoreKind::kProbability;
  throw ProtocolError("unknown score kind '" + std::string(text) + "'");
}

void OracleScores::validate() const {
  if (kind != ScoreKind::kProbability) return;
  double sum = 0.0;
  for (double s : scores) {
    if (!(s >= 0.0)) throw ProtocolError("probability scores must be non-negative");
    sum += s;
  }
  if (std::abs(sum - 1.0) > 1e-6) {
    throw ProtocolError("probability scores sum to " + std::to_string(sum));
  }
}

void require_uniform_batch(std::span<const ImageTensor> images) {
  for (const auto& img : images) require_same_shape(images.front(), img, "score_batch");
}

std::vector<OracleScores> score_batch(Oracle& oracle,
                                      std::span<const ImageTensor> images) {
  std::vector<OracleScores> out;
  if (images.empty()) return out;
  require_uniform_batch(images);
  auto scored = oracle.evaluate(images, false);
  out.reserve(scored.size());
  for (auto& s : scored) out.push_back(std::move(s.base));
  return out;
}

double contrastive_score(Oracle& oracle, const ImageTensor& x, std::size_t category) {
  if (category >= oracle.num_categories()) {
    throw ContractError("category " + std::to_string(category) + " >= k=" +
                        std::to_string(oracle.num_categories()));
  }
  if (!oracle.supports_contrast()) {
    throw ContractError("oracle " + oracle.describe() + " has no contrastive head");
  }
  auto scored = oracle.evaluate(std::span<const ImageTensor>(&x, 1), true);
  return scored.at(0).base.scores.at(category) -
         scored.at(0).contrast.value().scores.at(category);
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double hi = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - hi);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

LinearProbeClassifier::LinearProbeClassifier(
    std::size_t height, std::size_t width, std::size_t channels,
    std::vector<std::vector<float>> weights, std::vector<double> bias,
    std::optional<std::vector<double>> contrast_bias, ScoreKind output)
    : height_(height),
      width_(width),
      channels_(channels),
      weights_(std::move(weights)),
      bias_(std::move(bias)),
      output_(output) {
  if (weights_.empty()) throw ShapeError("linear probe: no categories");
  const std::size_t n = height * width * channels;
  for (const auto& w : weights_) {
    if (w.size() != n) {
      throw ShapeError("linear probe: weight field has " + std::to_string(w.size()) +
                       " entries, expected " + std::to_string(n));
    }
  }
  if (bias_.size() != weights_.size()) throw ShapeError("linear probe: bias size != k");
  if (contrast_bias) {
    if (contrast_bias->size() != weights_.size()) {
      throw ShapeError("linear probe: contrast bias size != k");
    }
    contrast_bias_ = std::move(*contrast_bias);
  } else {
    contrast_bias_.resize(bias_.size());
    std::transform(bias_.begin(), bias_.end(), contrast_bias_.begin(),
                   [](double b) { return -b; });
  }
}

double LinearProbeClassifier::linear_term(const ImageTensor& x,
                                          std::size_t category) const {
  return simd::kernels().dot_f32(weights_.at(category).data(), x.data().data(),
                                 x.size());
}

std::vector<ScoredImage> LinearProbeClassifier::evaluate(
    std::span<const ImageTensor> images, bool want_contrast) {
  std::vector<ScoredImage> out;
  out.reserve(images.size());
  const std::size_t k = weights_.size();
  for (const auto& img : images) {
    if (img.height() != height_ || img.width() != width_ || img.channels() != channels_) {
      throw ShapeError("linear probe expects " + std::to_string(height_) + "x" +
                       std::to_string(width_) + "x" + std::to_string(channels_) +
                       " images");
    }
    std::vector<double> f(k);
    std::vector<double> f_prime(k);
    for (std::size_t c = 0; c < k; ++c) {
      const double dot = linear_term(img, c);
      f[c] = dot + bias_[c];
      f_prime[c] = -dot + contrast_bias_[c];
    }
    ScoredImage s;
    if (output_ == ScoreKind::kProbability) {
      f = softmax(f);
      f_prime = softmax(f_prime);
    }
    s.base = OracleScores{std::move(f), output_};
    if (want_contrast) s.contrast = OracleScores{std::move(f_prime), output_};
    out.push_back(std::move(s));
  }
  return out;
}

std::string LinearProbeClassifier::describe() const {
  return "builtin:linear(k=" + std::to_string(weights_.size()) + ", " +
         std::to_string(height_) + "x" + std::to_string(width_) + "x" +
         std::to_string(channels_) + ")";
}

LinearProbeClassifier LinearProbeClassifier::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open linear probe file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
    if (j.at("format") != "patchlab-linear-probe" || j.at("version") != 1) {
      throw IoError(path.string() + " is not a version-1 linear probe file");
    }
    const auto h = j.at("height").get<std::size_t>();
    const auto w = j.at("width").get<std::size_t>();
    const auto c = j.at("channels").get<std::size_t>();
    const auto k = j.at("k").get<std::size_t>();
    const std::vector<float> flat =
        base64::decode_f32(j.at("weights").get<std::string>());
    const std::size_t n = h * w * c;
    if (flat.size() != n * k) throw IoError("linear probe weight payload has wrong size");
    std::vector<std::vector<float>> weights(k);
    for (std::size_t cat = 0; cat < k; ++cat) {
      weights[cat].assign(flat.begin() + static_cast<std::ptrdiff_t>(cat * n),
                          flat.begin() + static_cast<std::ptrdiff_t>((cat + 1) * n));
    }
    std::optional<std::vector<double>> contrast_bias;
    if (j.contains("contrast_bias")) {
      contrast_bias = j["contrast_bias"].get<std::vector<double>>();
    }
    const ScoreKind output =
        parse_score_kind(j.value("output", std::string("logit")));
    return LinearProbeClassifier(h, w, c, std::move(weights),
                                 j.at("bias").get<std::vector<double>>(),
                                 std::move(contrast_bias), output);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed linear probe file " + path.string() + ": " + e.what());
  }
}

void LinearProbeClassifier::save(const std::filesystem::path& path) const {
  std::vector<float> flat;
  for (const auto& w : weights_) flat.insert(flat.end(), w.begin(), w.end());
  nlohmann::json j = {{"format", "patchlab-linear-probe"},
                      {"version", 1},
                      {"height", height_},
                      {"width", width_},
                      {"channels", channels_},
                      {"k", weights_.size()},
                      {"bias", bias_},
                      {"contrast_bias", contrast_bias_},
                      {"output", score_kind_name(output_)},
                      {"weights", base64::encode_f32(flat)}};
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump() << '\n';
}

PairedOracle::PairedOracle(std::shared_ptr<Oracle> base,
                           std::shared_ptr<Oracle> contrast)
    : base_(std::move(base)), contrast_(std::move(contrast)) {
  if (base_->num_categories() != contrast_->num_categories()) {
    throw ShapeError("paired oracle: f and f' report different k");
  }
}

std::vector<ScoredImage> PairedOracle::evaluate(std::span<const ImageTensor> images,
                                                bool want_contrast) {
  auto out = base_->evaluate(images, false);
  if (want_contrast) {
    auto twin = contrast_->evaluate(images, false);
    for (std::size_t i = 0; i < out.size(); ++i) out[i].contrast = std::move(twin[i].base);
  }
  return out;
}

std::string PairedOracle::describe() const {
  return "pair(" + base_->describe() + ", " + contrast_->describe() + ")";
}

std::unique_ptr<Oracle> make_oracle(std::string_view spec) {
  constexpr std::string_view kLinear = "builtin:linear:";
  if (spec.starts_with(kLinear)) {
    return std::make_unique<LinearProbeClassifier>(
        LinearProbeClassifier::load(std::string(spec.substr(kLinear.size()))));
  }
  if (spec.starts_with("cmd:") || spec.starts_with("tcp:")) {
    return external_oracle_connect(spec, kProtocolVersion);
  }
  throw ContractError("unknown oracle spec '" + std::string(spec) +
                      "' (expected builtin:linear:<file>, cmd:<command> or "
                      "tcp:<host>:<port>)");
}

}  // namespace patchlab
