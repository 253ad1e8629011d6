#include "patchlab/attacks.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "patchlab/augment.hpp"
#include "patchlab/error.hpp"
#include "patchlab/rng.hpp"

namespace patchlab {

std::string_view attack_name(AttackKind kind) {
  switch (kind) {
    case AttackKind::kPatchMix:
      return "mix";
    case AttackKind::kPatchDrop:
      return "drop";
    case AttackKind::kPatchPermute:
      return "permute";
  }
  return "unknown";
}

AttackKind parse_attack_kind(std::string_view text) {
  if (text == "mix") return AttackKind::kPatchMix;
  if (text == "drop") return AttackKind::kPatchDrop;
  if (text == "permute") return AttackKind::kPatchPermute;
  throw ContractError("unknown attack kind '" + std::string(text) +
                      "' (expected mix, drop or permute)");
}

void AttackSpec::validate() const {
  if (kind == AttackKind::kPatchPermute) return;
  const double hi = allow_full_loss ? 1.0 : kMaxAttackLoss;
  if (!(loss_fraction >= 0.0 && loss_fraction <= hi)) {
    throw ContractError("attack loss " + std::to_string(loss_fraction) +
                        " outside [0, " + std::to_string(hi) + "]");
  }
  if (kind == AttackKind::kPatchDrop) {
    if (fill.empty()) throw ContractError("patch_drop: empty fill");
    for (float f : fill) {
      if (!(f >= 0.0f && f <= 1.0f)) throw ContractError("patch_drop: fill outside [0, 1]");
    }
  }
}

void copy_patch(const ImageTensor& src, std::size_t src_patch, ImageTensor& dst,
                std::size_t dst_patch, const PatchGrid& grid) {
  const std::size_t c = src.channels();
  const std::size_t stride = src.width() * c;
  const std::size_t sr = patch_row0(grid, src_patch);
  const std::size_t sc = patch_col0(grid, src_patch);
  const std::size_t dr = patch_row0(grid, dst_patch);
  const std::size_t dc = patch_col0(grid, dst_patch);
  const auto in = src.data();
  auto out = dst.mutable_data();
  for (std::size_t r = 0; r < grid.patch_h; ++r) {
    std::copy_n(in.begin() + static_cast<std::ptrdiff_t>((sr + r) * stride + sc * c),
                grid.patch_w * c,
                out.begin() + static_cast<std::ptrdiff_t>((dr + r) * stride + dc * c));
  }
}

AttackResult patch_mix_attack(const ImageTensor& x, const ImageTensor& donor,
                              const AttackSpec& spec, SeededRandomSource& rng) {
  spec.validate();
  require_same_shape(x, donor, "patch_mix_attack");
  const PatchGrid grid = make_grid(x, spec.grid);
  PatchMask mask = sample_patch_mask(grid, spec.loss_fraction, rng);
  ImageTensor out = patch_mix(x, donor, mask);
  return {std::move(out), std::move(mask)};
}

AttackResult patch_mix_attack_multi(const ImageTensor& x,
                                    std::span<const ImageTensor> donors,
                                    const AttackSpec& spec, SeededRandomSource& rng,
                                    std::vector<int>* donor_of_patch) {
  spec.validate();
  if (donors.empty()) throw ContractError("patch_mix_attack: no donors");
  for (const auto& d : donors) require_same_shape(x, d, "patch_mix_attack");
  const PatchGrid grid = make_grid(x, spec.grid);
  PatchMask mask = sample_patch_mask(grid, spec.loss_fraction, rng);
  ImageTensor out = x;
  if (donor_of_patch) donor_of_patch->assign(grid.n_patches(), -1);
  for (std::size_t p = 0; p < grid.n_patches(); ++p) {
    if (!mask.test(p)) continue;
    const auto d = static_cast<std::size_t>(rng.uniform_index(donors.size()));
    copy_patch(donors[d], p, out, p, grid);
    if (donor_of_patch) (*donor_of_patch)[p] = static_cast<int>(d);
  }
  return {std::move(out), std::move(mask)};
}

AttackResult patch_drop(const ImageTensor& x, const AttackSpec& spec,
                        SeededRandomSource& rng) {
  spec.validate();
  const std::size_t c = x.channels();
  if (spec.fill.size() != 1 && spec.fill.size() != c) {
    throw ShapeError("patch_drop: fill has " + std::to_string(spec.fill.size()) +
                     " values for a " + std::to_string(c) + "-channel image");
  }
  const PatchGrid grid = make_grid(x, spec.grid);
  PatchMask mask = sample_patch_mask(grid, spec.loss_fraction, rng);
  ImageTensor out = x;
  auto data = out.mutable_data();
  for (std::size_t p = 0; p < grid.n_patches(); ++p) {
    if (!mask.test(p)) continue;
    const std::size_t r0 = patch_row0(grid, p);
    const std::size_t c0 = patch_col0(grid, p);
    for (std::size_t r = r0; r < r0 + grid.patch_h; ++r) {
      for (std::size_t col = c0; col < c0 + grid.patch_w; ++col) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          data[(r * x.width() + col) * c + ch] =
              spec.fill.size() == 1 ? spec.fill[0] : spec.fill[ch];
        }
      }
    }
  }
  return {std::move(out), std::move(mask)};
}

ImageTensor apply_patch_permutation(const ImageTensor& x, GridSpec grid_spec,
                                    std::span<const std::size_t> permutation) {
  const PatchGrid grid = make_grid(x, grid_spec);
  if (permutation.size() != grid.n_patches()) {
    throw ShapeError("permutation has " + std::to_string(permutation.size()) +
                     " entries for " + std::to_string(grid.n_patches()) + " patches");
  }
  std::vector<bool> seen(grid.n_patches(), false);
  for (std::size_t v : permutation) {
    if (v >= grid.n_patches() || seen[v]) {
      throw ContractError("permutation is not a bijection");
    }
    seen[v] = true;
  }
  ImageTensor out(x.height(), x.width(), x.channels());
  for (std::size_t j = 0; j < grid.n_patches(); ++j) {
    copy_patch(x, permutation[j], out, j, grid);
  }
  return out;
}

std::vector<std::size_t> invert_permutation(std::span<const std::size_t> permutation) {
  std::vector<std::size_t> inverse(permutation.size());
  for (std::size_t j = 0; j < permutation.size(); ++j) {
    if (permutation[j] >= permutation.size()) {
      throw ContractError("permutation is not a bijection");
    }
    inverse[permutation[j]] = j;
  }
  return inverse;
}

PermuteResult patch_permute(const ImageTensor& x, GridSpec shuffle_grid,
                            SeededRandomSource& rng) {
  const PatchGrid grid = make_grid(x, shuffle_grid);
  std::vector<std::size_t> perm(grid.n_patches());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t i = perm.size(); i > 1; --i) {
    const std::size_t j = rng.uniform_index(i);
    std::swap(perm[i - 1], perm[j]);
  }
  ImageTensor out = apply_patch_permutation(x, shuffle_grid, perm);
  return {std::move(out), std::move(perm)};
}

}  // namespace patchlab
