#pragma once

#include "carbonedge/kernels.hpp"

namespace carbonedge::kernels::detail {

extern const KernelTable kScalarTable;
#if defined(CARBONEDGE_HAVE_AVX2)
extern const KernelTable kAvx2Table;
#endif
#if defined(CARBONEDGE_HAVE_NEON)
extern const KernelTable kNeonTable;
#endif

}  // namespace carbonedge::kernels::detail
