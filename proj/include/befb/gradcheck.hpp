#pragma once

#include <ostream>

namespace befb {

// Checks every primitive's analytic backward against central finite
// differences, plus a full BEFB-integrated model with the threshold layer
// replaced by a frozen-center sigmoid surrogate in both paths. Prints the
// max relative error per layer kind. Returns true iff all errors < 1e-4.
// corrupt_conv deliberately breaks the conv backward (negative control).
bool run_gradcheck(std::ostream& os, bool corrupt_conv = false);

inline constexpr double kGradcheckTolerance = 1e-4;
inline constexpr double kGradcheckStep = 1e-5;

}  // namespace befb
