#include "pulseforge/parallel.hpp"

#include <cstdlib>
#include <string>

namespace pulseforge {

int resolve_threads(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("PULSEFORGE_THREADS")) {
        try {
            const int n = std::stoi(env);
            if (n > 0) return n;
        } catch (const std::exception&) {
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace pulseforge
