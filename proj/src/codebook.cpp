// Copyright 2026 The vicl Authors
// SPDX-License-Identifier: Apache-2.0

#include "vicl/codebook.hpp"

#include <algorithm>
#include <limits>

namespace vicl {

Array patchify(const Image& image, std::size_t patch) {
    if (patch == 0 || image.height() % patch != 0 || image.width() % patch != 0) {
        throw ShapeError("patchify: extents " + std::to_string(image.height()) + "x" + std::to_string(image.width()) +
                         " not divisible by patch " + std::to_string(patch));
    }
    const std::size_t gh = image.height() / patch, gw = image.width() / patch, dim = patch * patch * 3;
    Array out(Shape{gh * gw, dim});
    for (std::size_t py = 0; py < gh; ++py) {
        for (std::size_t px = 0; px < gw; ++px) {
            double* row = out.data() + (py * gw + px) * dim;
            for (std::size_t y = 0; y < patch; ++y) {
                const double* src = &image.data()[((py * patch + y) * image.width() + px * patch) * 3];
                std::copy(src, src + patch * 3, row + y * patch * 3);
            }
        }
    }
    return out;
}

Image unpatchify(const Array& patches, std::size_t height, std::size_t width, std::size_t patch) {
    const std::size_t gh = height / patch, gw = width / patch, dim = patch * patch * 3;
    if (height % patch || width % patch || patches.rows() != gh * gw || patches.cols() != dim) {
        throw ShapeError("unpatchify: patch matrix does not match extents");
    }
    Image out(height, width);
    for (std::size_t py = 0; py < gh; ++py) {
        for (std::size_t px = 0; px < gw; ++px) {
            const double* row = patches.data() + (py * gw + px) * dim;
            for (std::size_t y = 0; y < patch; ++y) {
                double* dst = &out.data()[((py * patch + y) * width + px * patch) * 3];
                std::copy(row + y * patch * 3, row + (y + 1) * patch * 3, dst);
            }
        }
    }
    return out;
}

Codebook::Codebook(std::size_t patch, Array entries) : patch_(patch), entries_(std::move(entries)) {
    if (entries_.ndim() != 2 || entries_.cols() != patch * patch * 3) throw ShapeError("codebook entry width mismatch");
    if (entries_.rows() < 2) throw Error("codebook needs at least two entries");
}

int Codebook::nearest(const double* p) const {
    const std::size_t v = vocab(), d = entry_dim();
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < v; ++k) {
        const double* e = entries_.data() + k * d;
        double dist = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            double diff = p[i] - e[i];
            dist += diff * diff;
        }
        if (dist < best_d) {
            best_d = dist;
            best = static_cast<int>(k);
        }
    }
    return best;
}

std::vector<int> Codebook::quantize(const Image& panel) const {
    Array patches = patchify(panel, patch_);
    std::vector<int> tokens(patches.rows());
    for (std::size_t r = 0; r < patches.rows(); ++r) tokens[r] = nearest(patches.data() + r * patches.cols());
    return tokens;
}

Image Codebook::decode(const std::vector<int>& tokens, std::size_t height, std::size_t width) const {
    const std::size_t d = entry_dim();
    Array patches(Shape{tokens.size(), d});
    for (std::size_t r = 0; r < tokens.size(); ++r) {
        if (tokens[r] < 0 || static_cast<std::size_t>(tokens[r]) >= vocab()) {
            throw Error("decode: token " + std::to_string(tokens[r]) + " out of range for V=" + std::to_string(vocab()));
        }
        std::copy(entries_.data() + tokens[r] * d, entries_.data() + (tokens[r] + 1) * d, patches.data() + r * d);
    }
    return unpatchify(patches, height, width, patch_);
}

namespace {

double sqdist(const double* a, const double* b, std::size_t d) {
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        double t = a[i] - b[i];
        s += t * t;
    }
    return s;
}

} // namespace

Codebook build_codebook(const std::vector<const Image*>& panels, std::size_t patch, const KMeansOptions& opts, Rng& rng) {
    if (panels.empty()) throw Error("build_codebook: no panels");
    if (opts.vocab < 2) throw Error("build_codebook: vocab must be >= 2");
    const std::size_t d = patch * patch * 3;

    // Gather every patch, then subsample without replacement.
    std::vector<double> all;
    for (const Image* im : panels) {
        Array p = patchify(*im, patch);
        all.insert(all.end(), p.storage().begin(), p.storage().end());
    }
    const std::size_t total = all.size() / d;
    std::vector<std::size_t> order(total);
    for (std::size_t i = 0; i < total; ++i) order[i] = i;
    rng.shuffle(order);
    const std::size_t n = std::min(total, opts.max_samples);
    std::vector<double> data(n * d);
    for (std::size_t i = 0; i < n; ++i) std::copy(&all[order[i] * d], &all[order[i] * d] + d, &data[i * d]);
    all.clear();

    const std::size_t v = opts.vocab;
    std::vector<double> centres(v * d);

    // k-means++ seeding
    std::vector<double> mind(n, std::numeric_limits<double>::infinity());
    std::size_t first = rng.index(n);
    std::copy(&data[first * d], &data[first * d] + d, &centres[0]);
    for (std::size_t k = 1; k < v; ++k) {
        double tot = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            mind[i] = std::min(mind[i], sqdist(&data[i * d], &centres[(k - 1) * d], d));
            tot += mind[i];
        }
        std::size_t pick = 0;
        if (tot > 0.0) {
            double r = rng.uniform() * tot, acc = 0.0;
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                acc += mind[i];
                if (r < acc) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = rng.index(n);
        }
        std::copy(&data[pick * d], &data[pick * d] + d, &centres[k * d]);
    }

    std::vector<std::size_t> assign(n, 0);
    std::vector<double> sums(v * d);
    std::vector<std::size_t> counts(v);
    for (std::size_t it = 0; it < opts.iterations; ++it) {
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < v; ++k) {
                double dist = sqdist(&data[i * d], &centres[k * d], d);
                if (dist < best) {
                    best = dist;
                    assign[i] = k;
                }
            }
        }
        std::fill(sums.begin(), sums.end(), 0.0);
        std::fill(counts.begin(), counts.end(), 0);
        for (std::size_t i = 0; i < n; ++i) {
            ++counts[assign[i]];
            for (std::size_t j = 0; j < d; ++j) sums[assign[i] * d + j] += data[i * d + j];
        }
        for (std::size_t k = 0; k < v; ++k) {
            if (counts[k] == 0) continue;
            for (std::size_t j = 0; j < d; ++j) centres[k * d + j] = sums[k * d + j] / static_cast<double>(counts[k]);
        }
    }

    // Enforce pairwise-distinct entries.
    for (std::size_t k = 1; k < v; ++k) {
        for (std::size_t attempt = 0;; ++attempt) {
            bool dup = false;
            for (std::size_t j = 0; j < k && !dup; ++j) dup = sqdist(&centres[k * d], &centres[j * d], d) == 0.0;
            if (!dup) break;
            if (attempt < n) {
                std::size_t pick = rng.index(n);
                std::copy(&data[pick * d], &data[pick * d] + d, &centres[k * d]);
            } else {
                for (std::size_t j = 0; j < d; ++j) centres[k * d + j] = rng.uniform();
            }
        }
    }
    for (auto& c : centres) c = std::clamp(c, 0.0, 1.0);
    return Codebook(patch, Array(Shape{v, d}, std::move(centres)));
}

} // namespace vicl
