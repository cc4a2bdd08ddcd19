#pragma once

#include <mutex>

namespace downgen {

/// FFTW's planner is not thread-safe; hold this lock while creating or
/// destroying plans. Executing distinct plans needs no lock.
std::mutex& fftw_plan_mutex();

}  // namespace downgen
