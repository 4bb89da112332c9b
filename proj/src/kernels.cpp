#include "bas/kernels.hpp"

namespace bas::kernels {

namespace {
bool g_parallel = true;
}

bool parallel_enabled() { return g_parallel; }

void set_parallel(bool on) { g_parallel = on; }

}  // namespace bas::kernels
