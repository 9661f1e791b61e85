#pragma once

namespace blendforge {

enum class WeightSource { LBO, SkeletonImport };

enum class BlockKind { Bar, Hat };

/// Provenance of one dictionary atom. Bar atoms are raw weight functions;
/// hat atoms are a weight function times one coordinate of one example.
struct AtomTag {
  BlockKind kind = BlockKind::Bar;
  int example = -1;   // hat atoms only
  int weight = 0;     // column of the weight field
  int function = 0;   // eigenfunction index (LBO) or bone index (skeleton)
  int coord = -1;     // hat atoms only, in [0, 3)

  friend bool operator==(const AtomTag&, const AtomTag&) = default;
};

}  // namespace blendforge
