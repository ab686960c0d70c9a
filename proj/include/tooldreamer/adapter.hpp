#pragma once

#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "tooldreamer/embedding.hpp"
#include "tooldreamer/errors.hpp"
#include "tooldreamer/jsonl.hpp"
#include "tooldreamer/util.hpp"

namespace tooldreamer {

/// A square linear map applied to frozen base embeddings, on both the
/// document and query sides. Stands in for encoder fine-tuning: training
/// adjusts this matrix only.
struct AdapterModel {
    std::size_t dim = 0;
    std::vector<double> weight; // row-major dim x dim
    std::string config_echo;    // training config summary baked into the fingerprint

    static AdapterModel identity(std::size_t dim) {
        AdapterModel m;
        m.dim = dim;
        m.weight.assign(dim * dim, 0.0);
        for (std::size_t i = 0; i < dim; ++i) m.weight[i * dim + i] = 1.0;
        return m;
    }

    EmbeddingVector apply(const EmbeddingVector& v) const {
        if (v.size() != dim) {
            throw data_error("adapter dim " + std::to_string(dim) + " does not match vector dim " +
                             std::to_string(v.size()));
        }
        EmbeddingVector out(dim, 0.0);
        for (std::size_t r = 0; r < dim; ++r) {
            double acc = 0.0;
            const double* row = weight.data() + r * dim;
            for (std::size_t c = 0; c < dim; ++c) acc += row[c] * v[c];
            out[r] = acc;
        }
        return out;
    }

    /// FNV-1a over the raw weight bytes plus dim and the config echo. Stable
    /// across save/load because weights serialize losslessly.
    std::string fingerprint() const {
        std::uint64_t h = 0xcbf29ce484222325ull;
        auto mix = [&h](const void* data, std::size_t n) {
            const unsigned char* p = static_cast<const unsigned char*>(data);
            for (std::size_t i = 0; i < n; ++i) {
                h ^= p[i];
                h *= 0x100000001b3ull;
            }
        };
        std::uint64_t d = dim;
        mix(&d, sizeof(d));
        static_assert(sizeof(double) == 8);
        for (double w : weight) mix(&w, sizeof(w));
        mix(config_echo.data(), config_echo.size());
        return to_hex64(h);
    }

    bool finite() const {
        for (double w : weight) {
            if (!std::isfinite(w)) return false;
        }
        return true;
    }

    void save(const std::filesystem::path& path) const {
        json j{{"dim", dim},
               {"fingerprint", fingerprint()},
               {"config", config_echo},
               {"weights", weight}};
        write_text_file(path, j.dump() + "\n");
    }

    static AdapterModel load(const std::filesystem::path& path) {
        json j = json::parse(read_text_file(path));
        AdapterModel m;
        m.dim = j.at("dim").get<std::size_t>();
        m.weight = j.at("weights").get<std::vector<double>>();
        m.config_echo = j.at("config").get<std::string>();
        if (m.weight.size() != m.dim * m.dim) throw data_error("adapter file has inconsistent dimensions");
        std::string stored = j.at("fingerprint").get<std::string>();
        if (stored != m.fingerprint()) {
            throw data_error("adapter fingerprint mismatch after load: " + path.string());
        }
        return m;
    }
};

} // namespace tooldreamer
