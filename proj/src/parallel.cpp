#include "eprobust/parallel.hpp"

#include <cstdlib>
#include <string>

namespace eprobust {

int thread_count() {
    if (const char* env = std::getenv("EPROBUST_THREADS")) {
        try {
            const int n = std::stoi(env);
            if (n >= 1) return n;
        } catch (const std::exception&) {
        }
    }
    return int(std::max(1u, std::thread::hardware_concurrency()));
}

}  // namespace eprobust
