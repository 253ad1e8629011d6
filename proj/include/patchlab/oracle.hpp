#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "patchlab/image.hpp"

namespace patchlab {

enum class ScoreKind { kLogit, kProbability };
std::string_view score_kind_name(ScoreKind kind);
ScoreKind parse_score_kind(std::string_view text);

/// One score vector (higher = more evidence).
struct OracleScores {
  std::vector<double> scores;
  ScoreKind kind = ScoreKind::kLogit;

  std::size_t k() const noexcept { return scores.size(); }
  /// Throws ProtocolError if a probability vector is not one.
  void validate() const;
};

struct ScoredImage {
  OracleScores base;
  /// Scores of the flipped-head twin f'; present when requested.
  std::optional<OracleScores> contrast;
};

/// Black-box classifier, optionally with a contrastive twin f' (the same
/// network with its final classification layer negated).
///
/// In-process implementations are pure and thread-safe. External handles
/// serialize requests internally.
class Oracle {
 public:
  virtual ~Oracle() = default;

  virtual std::size_t num_categories() const = 0;
  virtual ScoreKind kind() const = 0;
  virtual bool supports_contrast() const = 0;
  /// Scores every image; `contrast` is filled iff `want_contrast`.
  virtual std::vector<ScoredImage> evaluate(std::span<const ImageTensor> images,
                                            bool want_contrast) = 0;
  virtual std::string describe() const = 0;
};

/// One score vector per image, order preserving. Images must share a shape.
std::vector<OracleScores> score_batch(Oracle& oracle,
                                      std::span<const ImageTensor> images);

/// f(x)[category] - f'(x)[category]
double contrastive_score(Oracle& oracle, const ImageTensor& x, std::size_t category);

/// Throws ShapeError unless every image shares the first image's shape.
void require_uniform_batch(std::span<const ImageTensor> images);

/// Linear classifier over raw pixels: score_c(x) = sum_l w_c(l) x(l) + b_c.
/// The contrast head uses -w_c with bias `contrast_bias` (default -b).
class LinearProbeClassifier final : public Oracle {
 public:
  LinearProbeClassifier(std::size_t height, std::size_t width, std::size_t channels,
                        std::vector<std::vector<float>> weights,
                        std::vector<double> bias,
                        std::optional<std::vector<double>> contrast_bias = std::nullopt,
                        ScoreKind output = ScoreKind::kLogit);

  /// JSON: {"format":"patchlab-linear-probe","version":1,"height","width",
  /// "channels","k","bias":[..],"contrast_bias":[..]?,"output":"logit"?,
  /// "weights":"<base64 little-endian f32, category-major>"}
  static LinearProbeClassifier load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::size_t num_categories() const override { return weights_.size(); }
  ScoreKind kind() const override { return output_; }
  bool supports_contrast() const override { return true; }
  std::vector<ScoredImage> evaluate(std::span<const ImageTensor> images,
                                    bool want_contrast) override;
  std::string describe() const override;

  /// w_c . x without bias.
  double linear_term(const ImageTensor& x, std::size_t category) const;
  std::span<const float> weights(std::size_t category) const {
    return weights_.at(category);
  }
  std::span<const double> bias() const { return bias_; }
  std::span<const double> contrast_bias() const { return contrast_bias_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t channels() const noexcept { return channels_; }

 private:
  std::size_t height_, width_, channels_;
  std::vector<std::vector<float>> weights_;
  std::vector<double> bias_;
  std::vector<double> contrast_bias_;
  ScoreKind output_;
};

/// Pairs two oracles as (f, f'). Both must report the same k.
class PairedOracle final : public Oracle {
 public:
  PairedOracle(std::shared_ptr<Oracle> base, std::shared_ptr<Oracle> contrast);

  std::size_t num_categories() const override { return base_->num_categories(); }
  ScoreKind kind() const override { return base_->kind(); }
  bool supports_contrast() const override { return true; }
  std::vector<ScoredImage> evaluate(std::span<const ImageTensor> images,
                                    bool want_contrast) override;
  std::string describe() const override;

 private:
  std::shared_ptr<Oracle> base_;
  std::shared_ptr<Oracle> contrast_;
};

/// Numerically stable softmax.
std::vector<double> softmax(std::span<const double> logits);

/// Builds an oracle from a CLI spec: `builtin:linear:<file>`,
/// `cmd:<shell command>` or `tcp:<host>:<port>`.
std::unique_ptr<Oracle> make_oracle(std::string_view spec);

}  // namespace patchlab
