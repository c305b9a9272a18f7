#include "nysgrad/workspace.hpp"

#include <algorithm>

namespace nysgrad {
namespace {

thread_local std::size_t g_current = 0;
thread_local std::size_t g_peak = 0;

}  // namespace

void WorkspaceMeter::reset() {
    g_current = 0;
    g_peak = 0;
}

std::size_t WorkspaceMeter::reset_peak() {
    g_peak = g_current;
    return g_current;
}

std::size_t WorkspaceMeter::current() { return g_current; }
std::size_t WorkspaceMeter::peak() { return g_peak; }

void WorkspaceMeter::acquire(std::size_t bytes) {
    g_current += bytes;
    g_peak = std::max(g_peak, g_current);
}

void WorkspaceMeter::release(std::size_t bytes) { g_current -= std::min(bytes, g_current); }

}  // namespace nysgrad
