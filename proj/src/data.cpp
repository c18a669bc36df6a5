#include "midnet/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "midnet/rng.hpp"

namespace midnet {

namespace {

namespace fs = std::filesystem;

std::size_t round_half_up(double x) {
    return static_cast<std::size_t>(std::floor(x + 0.5));
}

double clip01(double v) { return std::min(1.0, std::max(0.0, v)); }

// 5x7 bitmaps for glyph categories 0..9.
constexpr std::array<std::array<const char*, 7>, 10> kDigitFont{{
    {"01110", "10001", "10011", "10101", "11001", "10001", "01110"},
    {"00100", "01100", "00100", "00100", "00100", "00100", "01110"},
    {"01110", "10001", "00001", "00010", "00100", "01000", "11111"},
    {"11111", "00010", "00100", "00010", "00001", "10001", "01110"},
    {"00010", "00110", "01010", "10010", "11111", "00010", "00010"},
    {"11111", "10000", "11110", "00001", "00001", "10001", "01110"},
    {"00110", "01000", "10000", "11110", "10001", "10001", "01110"},
    {"11111", "00001", "00010", "00100", "01000", "01000", "01000"},
    {"01110", "10001", "10001", "01110", "10001", "10001", "01110"},
    {"01110", "10001", "10001", "01111", "00001", "00010", "01100"},
}};

// Appearance parameters of the target domain, fixed per dataset seed.
struct TargetTransform {
    static constexpr std::size_t kTile = 64;
    std::vector<double> texture;       // kTile x kTile x 3 smooth value noise
    std::array<double, 3> fg{};        // glyph color (dark)
    std::array<double, 3> bg_tint{};   // background tint (bright)
    double contrast = 0.85;

    explicit TargetTransform(std::uint64_t seed) {
        Rng rng(derive_seed(seed, "target_transform"));
        for (int c = 0; c < 3; ++c) {
            fg[c] = 0.05 + 0.10 * rng.uniform();
            bg_tint[c] = 0.60 + 0.35 * rng.uniform();
        }
        // Value noise: a coarse random grid, bilinearly upsampled.
        const std::size_t coarse = 8;
        const std::size_t scale = kTile / coarse;
        std::vector<double> grid(coarse * coarse * 3);
        for (double& v : grid) v = rng.uniform();
        texture.assign(kTile * kTile * 3, 0.0);
        for (std::size_t y = 0; y < kTile; ++y)
            for (std::size_t x = 0; x < kTile; ++x) {
                const double gy = static_cast<double>(y) / scale;
                const double gx = static_cast<double>(x) / scale;
                const std::size_t y0 = static_cast<std::size_t>(gy) % coarse;
                const std::size_t x0 = static_cast<std::size_t>(gx) % coarse;
                const std::size_t y1 = (y0 + 1) % coarse;
                const std::size_t x1 = (x0 + 1) % coarse;
                const double fy = gy - std::floor(gy);
                const double fx = gx - std::floor(gx);
                for (std::size_t c = 0; c < 3; ++c) {
                    const double v00 = grid[(y0 * coarse + x0) * 3 + c];
                    const double v01 = grid[(y0 * coarse + x1) * 3 + c];
                    const double v10 = grid[(y1 * coarse + x0) * 3 + c];
                    const double v11 = grid[(y1 * coarse + x1) * 3 + c];
                    texture[(y * kTile + x) * 3 + c] =
                        v00 * (1 - fy) * (1 - fx) + v01 * (1 - fy) * fx +
                        v10 * fy * (1 - fx) + v11 * fy * fx;
                }
            }
    }

    // Bright textured background, dark glyph, mild contrast compression:
    // an intensity inversion relative to the source domain.
    void apply(std::vector<double>& img, std::size_t h, std::size_t w, std::size_t ox,
               std::size_t oy) const {
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x)
                for (std::size_t c = 0; c < 3; ++c) {
                    const double m = img[(y * w + x) * 3 + c];
                    const double t =
                        texture[(((y + oy) % kTile) * kTile + ((x + ox) % kTile)) * 3 + c];
                    double v = m * fg[c] + (1.0 - m) * (0.76 + 0.16 * t) * bg_tint[c];
                    v = 0.5 + contrast * (v - 0.5);
                    img[(y * w + x) * 3 + c] = clip01(v);
                }
    }
};

const char* partition_name(int p) {
    switch (p) {
        case 0: return "train_labeled";
        case 1: return "train_unlabeled";
        case 2: return "validation";
        case 3: return "test_source";
        case 4: return "test_target_seen";
        case 5: return "test_target_new";
    }
    throw ContractError("unknown partition id");
}

}  // namespace

Tensor glyph_mask(const SyntheticSpec& spec, int category) {
    if (category < 0 || category >= spec.num_categories)
        throw ContractError("glyph_mask: category " + std::to_string(category) + " out of range");
    const std::size_t h = spec.height, w = spec.width;
    std::vector<double> mask(h * w, 0.0);
    auto set_px = [&](std::size_t y, std::size_t x) {
        if (y < h && x < w) mask[y * w + x] = 1.0;
    };

    // A 2x2 anchor block sits left of the glyph so that no glyph is
    // symmetric under horizontal flipping.
    set_px(1, 1); set_px(1, 2); set_px(2, 1); set_px(2, 2);

    if (category < 10) {
        // Scale the 5x7 font to the image, leaving room for the anchor.
        const std::size_t x0 = 4, y0 = 1;
        const std::size_t sx = std::max<std::size_t>(1, (w - x0 - 1) / 5);
        const std::size_t sy = std::max<std::size_t>(1, (h - y0 - 1) / 7);
        const std::size_t s = std::min(sx, sy);
        for (std::size_t r = 0; r < 7; ++r)
            for (std::size_t c = 0; c < 5; ++c)
                if (kDigitFont[category][r][c] == '1')
                    for (std::size_t dy = 0; dy < s; ++dy)
                        for (std::size_t dx = 0; dx < s; ++dx)
                            set_px(y0 + r * s + dy, x0 + c * s + dx);
    } else {
        // Procedural strokes for categories beyond the font table.
        Rng rng(derive_seed(0x9d1ccull, "glyph", static_cast<std::uint64_t>(category)));
        std::size_t y = 4 + rng.uniform_index(h - 8);
        std::size_t x = 4 + rng.uniform_index(w - 8);
        for (int stroke = 0; stroke < 4; ++stroke) {
            const int dy = static_cast<int>(rng.uniform_index(3)) - 1;
            const int dx = static_cast<int>(rng.uniform_index(3)) - 1;
            const std::size_t len = 3 + rng.uniform_index(4);
            for (std::size_t i = 0; i < len; ++i) {
                set_px(y, x);
                set_px(y + 1, x);
                set_px(y, x + 1);
                const long ny = static_cast<long>(y) + dy, nx = static_cast<long>(x) + dx;
                y = static_cast<std::size_t>(std::clamp(ny, 2L, static_cast<long>(h) - 3));
                x = static_cast<std::size_t>(std::clamp(nx, 2L, static_cast<long>(w) - 3));
            }
        }
    }
    return Tensor::from_data({h, w}, std::move(mask));
}

std::vector<Example> generate_synthetic(const SyntheticSpec& spec, const std::vector<CellCount>& counts) {
    if (spec.channels != 3) throw ConfigError("generate_synthetic: channels must be 3");
    for (const CellCount& c : counts) {
        if (c.count < 0) throw ContractError("generate_synthetic: negative count");
        if (c.category < 0 || c.category >= spec.num_categories)
            throw ContractError("generate_synthetic: category out of range");
        if (c.domain != 0 && c.domain != 1)
            throw ContractError("generate_synthetic: domain must be 0 or 1");
    }
    const TargetTransform transform(spec.seed);
    const std::size_t h = spec.height, w = spec.width;

    std::vector<Example> out;
    std::uint64_t id = 0;
    for (std::size_t cell = 0; cell < counts.size(); ++cell) {
        const CellCount& cc = counts[cell];
        const Tensor mask = glyph_mask(spec, cc.category);
        for (int j = 0; j < cc.count; ++j) {
            Rng rng(derive_seed(spec.seed, "example", cell, static_cast<std::uint64_t>(j)));
            std::vector<double> img(h * w * 3);
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w; ++x) {
                    const double g = mask.data()[y * w + x];
                    for (std::size_t c = 0; c < 3; ++c)
                        img[(y * w + x) * 3 + c] =
                            clip01(g + (spec.noise_sigma > 0.0
                                            ? rng.normal(0.0, spec.noise_sigma)
                                            : 0.0));
                }
            if (cc.domain == 1 && !spec.identity_target_transform) {
                const std::size_t ox = rng.uniform_index(TargetTransform::kTile);
                const std::size_t oy = rng.uniform_index(TargetTransform::kTile);
                transform.apply(img, h, w, ox, oy);
            }
            Example ex;
            ex.image = Tensor::from_data({h, w, 3}, std::move(img));
            ex.category = cc.category;
            ex.domain = cc.domain;
            ex.labeled = true;
            ex.id = id++;
            out.push_back(std::move(ex));
        }
    }
    return out;
}

DatasetSplit partition(const std::vector<Example>& examples, double labeled_fraction,
                       const std::set<int>& target_categories, int num_categories,
                       double test_fraction, std::uint64_t seed) {
    if (labeled_fraction <= 0.0 || labeled_fraction > 1.0)
        throw ConfigError("partition: labeled_fraction must be in (0, 1]");
    if (test_fraction < 0.0 || test_fraction >= 1.0)
        throw ConfigError("partition: test_fraction must be in [0, 1)");
    if (target_categories.empty())
        throw ConfigError("partition: target category set is empty");
    if (static_cast<int>(target_categories.size()) >= num_categories)
        throw ConfigError("partition: target categories must be a proper subset of all categories");
    for (int c : target_categories)
        if (c < 0 || c >= num_categories)
            throw ConfigError("partition: target category " + std::to_string(c) + " out of range");

    std::map<std::pair<int, int>, std::vector<std::size_t>> cells;
    for (std::size_t i = 0; i < examples.size(); ++i)
        cells[{examples[i].category, examples[i].domain}].push_back(i);

    DatasetSplit split;
    split.target_categories = target_categories;
    split.num_categories = num_categories;

    std::size_t cell_idx = 0;
    for (auto& [key, idx] : cells) {
        const auto [category, domain] = key;
        Rng rng(derive_seed(seed, "partition", cell_idx++));
        rng.shuffle(idx);

        if (domain == 1 && !target_categories.contains(category)) {
            // Held-out target category: test only, never seen in training.
            for (std::size_t i : idx) split.test_target_new.push_back(examples[i]);
            continue;
        }

        const std::size_t n = idx.size();
        const std::size_t n_test = round_half_up(static_cast<double>(n) * test_fraction);
        const std::size_t n_pool = n - n_test;
        const std::size_t n_val = round_half_up(static_cast<double>(n_pool) * 0.2);
        const std::size_t n_train = n_pool - n_val;
        const std::size_t n_labeled = round_half_up(static_cast<double>(n_train) * labeled_fraction);
        if (n_train > 0 && n_labeled == 0)
            throw ContractError("partition: cell (category " + std::to_string(category) + ", domain " +
                                std::to_string(domain) + ") has zero labeled examples after rounding");

        std::size_t p = 0;
        for (std::size_t i = 0; i < n_test; ++i, ++p) {
            if (domain == 0)
                split.test_source.push_back(examples[idx[p]]);
            else
                split.test_target_seen.push_back(examples[idx[p]]);
        }
        for (std::size_t i = 0; i < n_val; ++i, ++p) split.validation.push_back(examples[idx[p]]);
        for (std::size_t i = 0; i < n_train; ++i, ++p) {
            Example ex = examples[idx[p]];
            ex.labeled = i < n_labeled;
            if (ex.labeled)
                split.train_labeled.push_back(std::move(ex));
            else
                split.train_unlabeled.push_back(std::move(ex));
        }
    }
    return split;
}

std::vector<std::vector<std::size_t>> balanced_labeled_batches(const DatasetSplit& split,
                                                               std::size_t batch_size,
                                                               std::uint64_t seed, std::size_t epoch) {
    std::map<int, std::vector<std::size_t>> by_cat;
    for (std::size_t i = 0; i < split.train_labeled.size(); ++i)
        by_cat[split.train_labeled[i].category].push_back(i);
    if (by_cat.empty()) throw ContractError("balanced_labeled_batches: no labeled examples");
    const std::size_t ncats = by_cat.size();
    if (batch_size < ncats)
        throw ConfigError("balanced_labeled_batches: batch size " + std::to_string(batch_size) +
                          " is smaller than the number of labeled categories " + std::to_string(ncats));

    struct Queue {
        std::vector<std::size_t> order;
        std::size_t pos = 0;
        std::uint64_t refills = 0;
    };
    std::vector<int> cats;
    std::vector<Queue> queues;
    for (auto& [cat, idx] : by_cat) {
        Queue q;
        q.order = idx;
        Rng rng(derive_seed(seed, "balanced", epoch, static_cast<std::uint64_t>(cat)));
        rng.shuffle(q.order);
        cats.push_back(cat);
        queues.push_back(std::move(q));
    }
    auto draw = [&](std::size_t qi) {
        Queue& q = queues[qi];
        if (q.pos == q.order.size()) {
            ++q.refills;
            Rng rng(derive_seed(seed, "balanced-refill", epoch * 1000 + q.refills,
                                static_cast<std::uint64_t>(cats[qi])));
            rng.shuffle(q.order);
            q.pos = 0;
        }
        return q.order[q.pos++];
    };

    // Enough steps that the largest per-category queue is fully consumed, so
    // one epoch covers every labeled example at least once.
    std::size_t max_cat = 0;
    for (const Queue& q : queues) max_cat = std::max(max_cat, q.order.size());
    const std::size_t base = batch_size / ncats;
    const std::size_t rem = batch_size % ncats;
    const std::size_t steps = (max_cat + base - 1) / base;

    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t step = 0; step < steps; ++step) {
        std::vector<std::size_t> batch;
        for (std::size_t qi = 0; qi < ncats; ++qi) {
            std::size_t quota = base;
            // Remainder rotates across categories step by step.
            if (rem > 0 && (qi + ncats - step % ncats) % ncats < rem) ++quota;
            for (std::size_t k = 0; k < quota; ++k) batch.push_back(draw(qi));
        }
        batches.push_back(std::move(batch));
    }
    return batches;
}

UniformCycler::UniformCycler(std::size_t n, std::uint64_t seed) : n_(n), seed_(seed) {
    reshuffle();
}

void UniformCycler::reshuffle() {
    order_.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) order_[i] = i;
    Rng rng(derive_seed(seed_, "cycler", wraps_));
    rng.shuffle(order_);
    pos_ = 0;
    ++wraps_;
}

std::vector<std::size_t> UniformCycler::next(std::size_t count) {
    if (n_ == 0) return {};
    std::vector<std::size_t> out;
    out.reserve(count);
    while (out.size() < count) {
        if (pos_ == order_.size()) reshuffle();
        out.push_back(order_[pos_++]);
    }
    return out;
}

Tensor flip_horizontal(const Tensor& image) {
    const Shape& s = image.shape();
    if (s.size() != 3) throw ShapeError("flip_horizontal: image must be [H,W,C], got " + shape_str(s));
    const std::size_t h = s[0], w = s[1], c = s[2];
    std::vector<double> out(image.numel());
    const auto& d = image.data();
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t ch = 0; ch < c; ++ch)
                out[(y * w + x) * c + ch] = d[(y * w + (w - 1 - x)) * c + ch];
    return Tensor::from_data(s, std::move(out));
}

Tensor augment_flip(const Tensor& image, std::uint64_t seed) {
    Rng rng(seed);
    return rng.bernoulli(0.5) ? flip_horizontal(image) : image.detach();
}

Tensor stack_images(const std::vector<Example>& examples, const std::vector<std::size_t>& indices) {
    if (indices.empty()) throw ContractError("stack_images: empty batch");
    const Shape& s = examples.at(indices[0]).image.shape();
    const std::size_t row = shape_numel(s);
    std::vector<double> data(indices.size() * row);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const Example& ex = examples.at(indices[i]);
        if (ex.image.shape() != s)
            throw ShapeError("stack_images: inconsistent image shapes");
        std::copy(ex.image.data().begin(), ex.image.data().end(),
                  data.begin() + static_cast<std::ptrdiff_t>(i * row));
    }
    Shape out_shape{indices.size()};
    out_shape.insert(out_shape.end(), s.begin(), s.end());
    return Tensor::from_data(out_shape, std::move(data));
}

Tensor stack_images(const std::vector<Example>& examples) {
    std::vector<std::size_t> idx(examples.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    return stack_images(examples, idx);
}

Tensor one_hot(const std::vector<std::size_t>& labels, std::size_t num_classes) {
    std::vector<double> data(labels.size() * num_classes, 0.0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= num_classes)
            throw ContractError("one_hot: label " + std::to_string(labels[i]) + " out of range");
        data[i * num_classes + labels[i]] = 1.0;
    }
    return Tensor::from_data({labels.size(), num_classes}, std::move(data));
}

// --- dataset directory format ------------------------------------------

namespace {

void append_examples(const std::string& dir, std::ofstream& manifest,
                     const std::vector<Example>& examples, int partition) {
    for (const Example& ex : examples) {
        char name[32];
        std::snprintf(name, sizeof(name), "ex_%08llu.tensor",
                      static_cast<unsigned long long>(ex.id));
        write_tensor_file(dir + "/" + name, ex.image);
        manifest << name << " " << ex.category << " " << ex.domain << " " << (ex.labeled ? 1 : 0)
                 << " " << partition_name(partition) << "\n";
    }
}

}  // namespace

void write_dataset(const std::string& dir, const DatasetSplit& split, const SyntheticSpec& spec) {
    fs::create_directories(dir);
    std::ofstream manifest(dir + "/manifest.txt");
    if (!manifest) throw IoError("cannot write manifest in " + dir);
    manifest << "# midnet-dataset v1\n";
    manifest << "# num_categories=" << split.num_categories << "\n";
    manifest << "# height=" << spec.height << "\n";
    manifest << "# width=" << spec.width << "\n";
    manifest << "# channels=" << spec.channels << "\n";
    manifest << "# seed=" << spec.seed << "\n";
    manifest << "# target_categories=";
    bool first = true;
    for (int c : split.target_categories) {
        if (!first) manifest << ",";
        manifest << c;
        first = false;
    }
    manifest << "\n";
    append_examples(dir, manifest, split.train_labeled, 0);
    append_examples(dir, manifest, split.train_unlabeled, 1);
    append_examples(dir, manifest, split.validation, 2);
    append_examples(dir, manifest, split.test_source, 3);
    append_examples(dir, manifest, split.test_target_seen, 4);
    append_examples(dir, manifest, split.test_target_new, 5);
    if (!manifest) throw IoError("manifest write failed in " + dir);
}

DatasetSplit load_dataset(const std::string& dir) {
    std::ifstream manifest(dir + "/manifest.txt");
    if (!manifest) throw IoError("cannot open manifest in " + dir);
    DatasetSplit split;
    std::string line;
    while (std::getline(manifest, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            const auto eq = line.find('=');
            if (eq == std::string::npos) continue;
            const std::string key = line.substr(2, eq - 2);
            const std::string value = line.substr(eq + 1);
            if (key == "num_categories") split.num_categories = std::stoi(value);
            if (key == "target_categories") {
                std::stringstream ss(value);
                std::string part;
                while (std::getline(ss, part, ',')) split.target_categories.insert(std::stoi(part));
            }
            continue;
        }
        std::stringstream ss(line);
        std::string path, part;
        Example ex;
        int labeled = 0;
        if (!(ss >> path >> ex.category >> ex.domain >> labeled >> part))
            throw IoError("bad manifest record: " + line);
        ex.labeled = labeled != 0;
        ex.image = read_tensor_file(dir + "/" + path);
        // File names carry the generation-time id: ex_<id>.tensor.
        if (path.size() > 10 && path.rfind("ex_", 0) == 0)
            ex.id = std::stoull(path.substr(3, path.size() - 3 - 7));
        if (part == "train_labeled")
            split.train_labeled.push_back(std::move(ex));
        else if (part == "train_unlabeled")
            split.train_unlabeled.push_back(std::move(ex));
        else if (part == "validation")
            split.validation.push_back(std::move(ex));
        else if (part == "test_source")
            split.test_source.push_back(std::move(ex));
        else if (part == "test_target_seen")
            split.test_target_seen.push_back(std::move(ex));
        else if (part == "test_target_new")
            split.test_target_new.push_back(std::move(ex));
        else
            throw IoError("unknown partition in manifest: " + part);
    }
    return split;
}

}  // namespace midnet
