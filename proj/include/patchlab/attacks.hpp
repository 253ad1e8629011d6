#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "patchlab/grid.hpp"
#include "patchlab/image.hpp"

namespace patchlab {

class SeededRandomSource;

enum class AttackKind { kPatchMix, kPatchDrop, kPatchPermute };

std::string_view attack_name(AttackKind kind);
/// Accepts "mix", "drop", "permute".
AttackKind parse_attack_kind(std::string_view text);

/// Largest information loss evaluated for drop/mix attacks.
inline constexpr double kMaxAttackLoss = 0.8;

struct AttackSpec {
  AttackKind kind = AttackKind::kPatchDrop;
  GridSpec grid{7, 7};
  /// Fraction of patches replaced or dropped; unused by permute.
  double loss_fraction = 0.0;
  /// Drop fill: one value for all channels, or one per channel.
  std::vector<float> fill{0.0f};
  std::uint64_t seed = 0;
  /// Lifts the [0, 0.8] loss bound (tests of the degenerate full-loss case).
  bool allow_full_loss = false;

  void validate() const;
};

struct AttackResult {
  ImageTensor image;
  PatchMask mask;
};

/// Replaces exactly round(loss * N) uniformly chosen patches of `x` with the
/// co-located patches of `donor`. No label smoothing is involved.
AttackResult patch_mix_attack(const ImageTensor& x, const ImageTensor& donor,
                              const AttackSpec& spec, SeededRandomSource& rng);

/// Per-patch donor variant: each replaced patch comes from a donor chosen
/// uniformly from `donors`. `donor_of_patch` receives the donor index per
/// patch (or -1 for untouched patches) when non-null.
AttackResult patch_mix_attack_multi(const ImageTensor& x,
                                    std::span<const ImageTensor> donors,
                                    const AttackSpec& spec, SeededRandomSource& rng,
                                    std::vector<int>* donor_of_patch = nullptr);

/// Sets exactly round(loss * N) uniformly chosen patches to the fill.
AttackResult patch_drop(const ImageTensor& x, const AttackSpec& spec,
                        SeededRandomSource& rng);

struct PermuteResult {
  ImageTensor image;
  /// Output patch j holds input patch permutation[j].
  std::vector<std::size_t> permutation;
};

/// Uniformly random (Fisher-Yates) rearrangement of the grid's patches.
PermuteResult patch_permute(const ImageTensor& x, GridSpec shuffle_grid,
                            SeededRandomSource& rng);

/// Output patch j = input patch permutation[j].
ImageTensor apply_patch_permutation(const ImageTensor& x, GridSpec grid,
                                    std::span<const std::size_t> permutation);
std::vector<std::size_t> invert_permutation(std::span<const std::size_t> permutation);

/// Copies one patch of `src` into the same or another position of `dst`.
void copy_patch(const ImageTensor& src, std::size_t src_patch, ImageTensor& dst,
                std::size_t dst_patch, const PatchGrid& grid);

}  // namespace patchlab
