#pragma once

// Three-hole potential (Metzner, Schütte, Vanden-Eijnden):
//   V(x, y) = sum_k A_k exp(-(x - cx_k)^2 - (y - cy_k)^2)
//             + Q (x^4 + (y - 1/3)^4)
// Test oracles and benchmark thresholds are derived from these values; bump
// the version when any constant changes.

namespace latf::sim::three_hole {

inline constexpr int kConstantsVersion = 1;

struct GaussianTerm {
  double amplitude;
  double center_x;
  double center_y;
};

inline constexpr GaussianTerm kTerms[] = {
    {3.0, 0.0, 1.0 / 3.0},   // central barrier
    {-3.0, 0.0, 5.0 / 3.0},  // upper-channel well
    {-5.0, 1.0, 0.0},        // right deep basin
    {-5.0, -1.0, 0.0},       // left deep basin
};

inline constexpr double kQuartic = 0.2;
inline constexpr double kQuarticCenterY = 1.0 / 3.0;

// Channels are separated by the horizontal line through the barrier centre.
inline constexpr double kChannelSplitY = 1.0 / 3.0;

}  // namespace latf::sim::three_hole
