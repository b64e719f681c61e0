#include "eprobust/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace eprobust {

namespace {

constexpr char kMagic[8] = {'E', 'P', 'R', 'B', 'C', 'K', 'P', 'T'};

class Writer {
public:
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out.push_back(std::uint8_t(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out.push_back(std::uint8_t(v >> (8 * i)));
    }
    void text(const std::string& s) {
        u32(std::uint32_t(s.size()));
        out.insert(out.end(), s.begin(), s.end());
    }
    void f32(float f) { u32(std::bit_cast<std::uint32_t>(f)); }
    void tensor(const std::string& name, const Tensor<float>& t) {
        text(name);
        u32(std::uint32_t(t.rank()));
        for (Index d : t.shape()) u32(std::uint32_t(d));
        for (Index i = 0; i < t.size(); ++i) f32(t[i]);
    }

    std::vector<std::uint8_t> out;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}

    void need(std::size_t n, const char* what) const {
        if (bytes_.size() - pos_ < n) throw ParseError(std::string("checkpoint truncated in ") + what, pos_);
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(bytes_[pos_ + std::size_t(i)]) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64(const char* what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(bytes_[pos_ + std::size_t(i)]) << (8 * i);
        pos_ += 8;
        return v;
    }
    std::string text(const char* what) {
        const std::uint32_t n = u32(what);
        need(n, what);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    std::pair<std::string, Tensor<float>> tensor() {
        const std::size_t at = pos_;
        std::string name = text("tensor name");
        const std::uint32_t rank = u32("tensor rank");
        if (rank > 8) throw ParseError("tensor '" + name + "' has rank " + std::to_string(rank), at);
        Shape shape;
        for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(Index(u32("tensor dims")));
        Tensor<float> t(shape);
        need(std::size_t(t.size()) * 4, "tensor values");
        for (Index i = 0; i < t.size(); ++i) t[i] = std::bit_cast<float>(u32("tensor values"));
        return {std::move(name), std::move(t)};
    }
    std::size_t pos() const { return pos_; }
    bool done() const { return pos_ == bytes_.size(); }
    std::span<const std::uint8_t> bytes() const { return bytes_; }
    void skip(std::size_t n) { pos_ += n; }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

std::string descriptor(const Checkpoint& c) {
    RunConfig rc;
    rc.model = c.kind;
    rc.spec = c.spec;
    rc.train.beta = c.spec.beta;
    // only the architecture part of to_text is kept
    std::istringstream in(to_text(rc));
    std::ostringstream o;
    o << "timestep = " << c.timestep << "\n";
    bool arch = false;
    for (std::string line; std::getline(in, line);) {
        const std::string key = line.substr(0, line.find(' '));
        if (key == "model" || key == "input_shape") arch = true;
        if (key == "epochs") arch = false;
        if (arch && key.rfind("data_", 0) != 0) o << line << "\n";
    }
    return o.str();
}

}  // namespace

std::vector<std::uint8_t> serialize(const Checkpoint& c) {
    c.params.check(c.spec);
    Writer w;
    w.out.insert(w.out.end(), std::begin(kMagic), std::end(kMagic));
    w.u32(kCheckpointVersion);
    w.text(descriptor(c));
    const auto named = c.params.named();
    const bool norm = !c.normalization.identity();
    w.u32(std::uint32_t(named.size() + (norm ? 2 : 0)));
    for (const auto& [name, t] : named) w.tensor(name, *t);
    if (norm) {
        const Index C = Index(c.normalization.mean.size());
        Tensor<float> mean({C}), sd({C});
        for (Index i = 0; i < C; ++i) {
            mean[i] = float(c.normalization.mean[std::size_t(i)]);
            sd[i] = float(c.normalization.stddev[std::size_t(i)]);
        }
        w.tensor("normalization.mean", mean);
        w.tensor("normalization.std", sd);
    }
    w.text(c.config);
    w.u64(c.seed);
    return std::move(w.out);
}

Checkpoint deserialize(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    r.need(8, "magic");
    if (std::memcmp(bytes.data(), kMagic, 8) != 0) throw ParseError("not a checkpoint (bad magic)", 0);
    r.skip(8);
    const std::size_t version_at = r.pos();
    const std::uint32_t version = r.u32("version");
    if (version != kCheckpointVersion)
        throw ParseError("unsupported checkpoint version " + std::to_string(version), version_at);

    const std::size_t desc_at = r.pos();
    const std::string desc = r.text("descriptor");
    Checkpoint c;
    {
        std::istringstream in(desc);
        std::string first;
        std::getline(in, first);
        if (first.rfind("timestep = ", 0) != 0) throw ParseError("descriptor has no timestep", desc_at);
        c.timestep = std::stoi(first.substr(11));
        std::string rest((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        try {
            const RunConfig rc = parse_config(rest);
            if (!rc.model) throw ParseError("descriptor has no model kind", desc_at);
            c.kind = *rc.model;
            c.spec = rc.spec;
        } catch (const ConfigError& e) {
            throw ParseError(std::string("bad descriptor: ") + e.what(), desc_at);
        }
    }

    c.params = zero_params<float>(c.spec);
    auto named = c.params.named();
    const std::size_t count_at = r.pos();
    const std::uint32_t count = r.u32("tensor count");
    if (count != named.size() && count != named.size() + 2)
        throw ParseError("expected " + std::to_string(named.size()) + " parameter tensors, found " + std::to_string(count),
                         count_at);
    for (std::uint32_t k = 0; k < count; ++k) {
        const std::size_t at = r.pos();
        auto [name, t] = r.tensor();
        if (k < named.size()) {
            if (name != named[k].first) throw ParseError("expected tensor '" + named[k].first + "', found '" + name + "'", at);
            if (t.shape() != named[k].second->shape())
                throw ParseError("tensor '" + name + "' has shape " + to_string(t.shape()) + ", expected " +
                                     to_string(named[k].second->shape()),
                                 at);
            *named[k].second = std::move(t);
            continue;
        }
        auto& dst = k == named.size() ? c.normalization.mean : c.normalization.stddev;
        const char* want = k == named.size() ? "normalization.mean" : "normalization.std";
        if (name != want || t.rank() != 1 || t.dim(0) != c.spec.input_shape[0])
            throw ParseError(std::string("expected tensor '") + want + "'", at);
        for (Index i = 0; i < t.size(); ++i) dst.push_back(double(t[i]));
    }
    c.config = r.text("config snapshot");
    c.seed = r.u64("seed");
    if (!r.done()) throw ParseError("trailing bytes after checkpoint", r.pos());
    return c;
}

void save_checkpoint(const Checkpoint& c, const std::string& path) {
    const auto bytes = serialize(c);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint '" + path + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!out) throw std::runtime_error("failed writing checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint '" + path + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize(bytes);
}

}  // namespace eprobust
