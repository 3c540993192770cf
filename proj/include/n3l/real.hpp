#pragma once

namespace n3l {

#ifdef N3L_FLOAT32
using real = float;
#else
using real = double;
#endif

}  // namespace n3l
