#pragma once

#include <cstdlib>
#include <filesystem>
#include <stdexcept>
#include <string>

namespace downgen::test {

/// Fresh directory under the system temp path, removed on destruction.
class TempDir {
public:
    TempDir() {
        std::string tmpl = (std::filesystem::temp_directory_path() / "downgen-XXXXXX").string();
        if (!mkdtemp(tmpl.data())) {
            throw std::runtime_error("mkdtemp failed");
        }
        path_ = tmpl;
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }

    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

/// Pipeline configuration small enough to run every stage in about a second.
inline std::string tiny_pipeline_ini() {
    return "rng_seed = 7\n"
           "[synth]\nnx = 8\nny = 8\nn_days = 372\ntrain_days = 365\n"
           "[debias]\ntrain_steps = 20\nrk4_steps = 8\nwidths = 4,8\nembed_dim = 8\nn_freqs = 4\nwarmup_steps = 5\n"
           "[sr]\ntrain_steps = 20\nwidths = 4,8\nembed_dim = 8\nn_freqs = 4\nwarmup_steps = 5\n"
           "[sample]\nsteps = 8\n";
}

}  // namespace downgen::test
