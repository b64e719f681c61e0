#include "eprobust/config.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace eprobust {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return {};
    return s.substr(a, s.find_last_not_of(" \t\r") - a + 1);
}

std::vector<std::string> words(std::string s) {
    for (char& c : s)
        if (c == ',') c = ' ';
    std::istringstream in(s);
    std::vector<std::string> out;
    for (std::string w; in >> w;) out.push_back(w);
    return out;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

class Reader {
public:
    Reader(std::string key, std::string value, int line) : key_(std::move(key)), words_(words(value)), line_(line) {}

    [[noreturn]] void fail(const std::string& what) const { throw ConfigError(key_ + ": " + what, line_); }

    std::vector<double> numbers(std::size_t expect = 0) const {
        if (words_.empty()) fail("missing value");
        if (expect && words_.size() != expect) fail("expected " + std::to_string(expect) + " values");
        std::vector<double> v;
        for (const auto& w : words_) {
            try {
                std::size_t used = 0;
                v.push_back(std::stod(w, &used));
                if (used != w.size()) throw std::invalid_argument("");
            } catch (const std::exception&) {
                fail("'" + w + "' is not a number");
            }
        }
        return v;
    }
    std::vector<Index> integers(std::size_t expect = 0) const {
        std::vector<Index> out;
        for (double d : numbers(expect)) {
            if (d != std::floor(d)) fail("expected integers");
            out.push_back(Index(d));
        }
        return out;
    }
    double number() const { return numbers(1)[0]; }
    Index integer() const { return integers(1)[0]; }
    std::uint64_t unsigned_integer() const {
        const auto w = word();
        try {
            std::size_t used = 0;
            const auto v = std::stoull(w, &used);
            if (used != w.size() || w[0] == '-') throw std::invalid_argument("");
            return v;
        } catch (const std::exception&) {
            fail("'" + w + "' is not a non-negative integer");
        }
    }
    bool flag() const {
        const auto w = word();
        if (w == "true" || w == "1" || w == "yes") return true;
        if (w == "false" || w == "0" || w == "no") return false;
        fail("expected true or false");
    }
    std::string word() const {
        if (words_.size() != 1) fail("expected a single value");
        return words_[0];
    }
    template <typename F>
    auto parsed(F&& f) const {
        try {
            return f(word());
        } catch (const std::invalid_argument& e) {
            fail(e.what());
        }
    }

private:
    std::string key_;
    std::vector<std::string> words_;
    int line_;
};

AdversarialTraining& adv(RunConfig& c) {
    if (!c.train.adversarial) c.train.adversarial = AdversarialTraining{};
    return *c.train.adversarial;
}

}  // namespace

RunConfig parse_config(const std::string& text) {
    RunConfig c;
    c.spec.conv_layers.clear();
    c.spec.fc_layers.clear();
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        if (trim(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("expected 'key = value'", lineno);
        const std::string key = trim(line.substr(0, eq));
        const Reader r(key, line.substr(eq + 1), lineno);

        if (key == "model") c.model = r.parsed(parse_model_kind);
        else if (key == "data_source") {
            c.data.source = r.word();
            if (c.data.source != "blobs" && c.data.source != "stripes" && c.data.source != "cifar10" &&
                c.data.source != "cifar100")
                r.fail("expected blobs, stripes, cifar10 or cifar100");
        } else if (key == "data_path") c.data.path = trim(line.substr(eq + 1));
        else if (key == "data_train") c.data.train = r.integer();
        else if (key == "data_test") c.data.test = r.integer();
        else if (key == "data_noise") c.data.noise = r.number();
        else if (key == "data_jitter") c.data.jitter = r.number();
        else if (key == "data_seed") c.data.seed = r.unsigned_integer();
        else if (key == "input_shape") {
            const auto v = r.integers(3);
            c.spec.input_shape = {v[0], v[1], v[2]};
        } else if (key == "conv") {
            const auto v = r.integers(4);
            c.spec.conv_layers.push_back({v[0], v[1], v[2], v[3]});
        } else if (key == "fc") {
            const auto v = r.integers(2);
            c.spec.fc_layers.push_back({v[0], v[1]});
        } else if (key == "classes") c.spec.readout_dim = r.integer();
        else if (key == "t_free") c.spec.t_free = int(r.integer());
        else if (key == "t_nudge") c.spec.t_nudge = int(r.integer());
        else if (key == "fp_tol") c.spec.fp_tol = r.number();
        else if (key == "beta") c.spec.beta = c.train.beta = r.number();
        else if (key == "epochs") c.train.epochs = int(r.integer());
        else if (key == "batch_size") c.train.batch_size = r.integer();
        else if (key == "learning_rates") c.train.learning_rates = r.numbers();
        else if (key == "momentum") c.train.momentum = r.number();
        else if (key == "update_rule") c.train.update_rule = r.parsed(parse_update_rule);
        else if (key == "seed") c.train.seed = r.unsigned_integer();
        else if (key == "init_gain") c.train.init_gain = r.number();
        else if (key == "adv_norm") adv(c).norm = r.parsed(parse_norm);
        else if (key == "adv_epsilon") adv(c).epsilon = r.number();
        else if (key == "adv_steps") adv(c).steps = int(r.integer());
        else if (key == "augment_hflip") c.train.augment.hflip = r.flag();
        else if (key == "augment_crop") c.train.augment.crop = r.flag();
        else if (key == "augment_pad") c.train.augment.pad = r.integer();
        else throw ConfigError("unknown key '" + key + "'", lineno);
    }
    try {
        c.spec.validate();
        if (!c.train.learning_rates.empty()) c.train.validate(c.spec);
    } catch (const std::exception& e) {
        throw ConfigError(e.what(), 0);
    }
    return c;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'", 0);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string to_text(const RunConfig& c) {
    std::ostringstream o;
    if (c.model) o << "model = " << to_string(*c.model) << "\n";
    o << "data_source = " << c.data.source << "\n";
    if (!c.data.path.empty()) o << "data_path = " << c.data.path << "\n";
    o << "data_train = " << c.data.train << "\n"
      << "data_test = " << c.data.test << "\n"
      << "data_noise = " << fmt(c.data.noise) << "\n"
      << "data_jitter = " << fmt(c.data.jitter) << "\n"
      << "data_seed = " << c.data.seed << "\n";
    const auto& s = c.spec;
    o << "input_shape = " << s.input_shape[0] << " " << s.input_shape[1] << " " << s.input_shape[2] << "\n";
    for (const auto& l : s.conv_layers)
        o << "conv = " << l.in_channels << " " << l.out_channels << " " << l.kernel << " " << l.padding << "\n";
    for (const auto& l : s.fc_layers) o << "fc = " << l.in_dim << " " << l.out_dim << "\n";
    o << "classes = " << s.readout_dim << "\n"
      << "t_free = " << s.t_free << "\n"
      << "t_nudge = " << s.t_nudge << "\n"
      << "fp_tol = " << fmt(s.fp_tol) << "\n"
      << "beta = " << fmt(c.train.beta) << "\n";
    const auto& t = c.train;
    o << "epochs = " << t.epochs << "\n" << "batch_size = " << t.batch_size << "\n";
    if (!t.learning_rates.empty()) {
        o << "learning_rates =";
        for (double lr : t.learning_rates) o << " " << fmt(lr);
        o << "\n";
    }
    o << "momentum = " << fmt(t.momentum) << "\n"
      << "update_rule = " << to_string(t.update_rule) << "\n"
      << "seed = " << t.seed << "\n"
      << "init_gain = " << fmt(t.init_gain) << "\n";
    if (t.adversarial)
        o << "adv_norm = " << to_string(t.adversarial->norm) << "\n"
          << "adv_epsilon = " << fmt(t.adversarial->epsilon) << "\n"
          << "adv_steps = " << t.adversarial->steps << "\n";
    o << "augment_hflip = " << (t.augment.hflip ? "true" : "false") << "\n"
      << "augment_crop = " << (t.augment.crop ? "true" : "false") << "\n"
      << "augment_pad = " << t.augment.pad << "\n";
    return o.str();
}

std::pair<Dataset, Dataset> load_data(const DataConfig& data, const ModelSpec& spec) {
    if (data.synthetic()) {
        const SynthKind kind = parse_synth_kind(data.source);
        const SynthOptions opts{data.noise, data.jitter};
        auto train = synth_dataset(kind, data.train, spec.input_shape, spec.readout_dim, example_seed(data.seed, 0), opts);
        auto test = synth_dataset(kind, data.test, spec.input_shape, spec.readout_dim, example_seed(data.seed, 1), opts);
        train.split = "train";
        test.split = "test";
        return {std::move(train), std::move(test)};
    }
    namespace fs = std::filesystem;
    const bool c100 = data.source == "cifar100";
    const auto variant = c100 ? CifarVariant::cifar100 : CifarVariant::cifar10;
    const fs::path root(data.path);
    if (!fs::is_directory(root)) throw ConfigError("data_path '" + data.path + "' is not a directory", 0);
    Dataset train, test;
    if (c100) {
        train = load_cifar_binary((root / "train.bin").string(), variant);
        test = load_cifar_binary((root / "test.bin").string(), variant);
    } else {
        std::vector<Tensor<float>> imgs;
        std::vector<int> labels;
        for (int b = 1; b <= 5; ++b) {
            const auto part = load_cifar_binary((root / ("data_batch_" + std::to_string(b) + ".bin")).string(), variant);
            for (Index i = 0; i < part.size(); ++i) imgs.push_back(part.image(i));
            labels.insert(labels.end(), part.labels.begin(), part.labels.end());
        }
        train = make_dataset(imgs, std::move(labels), 10);
        test = load_cifar_binary((root / "test_batch.bin").string(), variant);
    }
    train.split = "train";
    test.split = "test";
    return {std::move(train), std::move(test)};
}

bool operator==(const TrainConfig& a, const TrainConfig& b) {
    const auto adv_eq = [](const std::optional<AdversarialTraining>& x, const std::optional<AdversarialTraining>& y) {
        if (x.has_value() != y.has_value()) return false;
        return !x || (x->norm == y->norm && x->epsilon == y->epsilon && x->steps == y->steps);
    };
    return a.epochs == b.epochs && a.batch_size == b.batch_size && a.learning_rates == b.learning_rates &&
           a.beta == b.beta && a.momentum == b.momentum && a.update_rule == b.update_rule && a.seed == b.seed &&
           a.init_gain == b.init_gain && adv_eq(a.adversarial, b.adversarial) && a.augment.hflip == b.augment.hflip &&
           a.augment.crop == b.augment.crop && a.augment.pad == b.augment.pad;
}

bool operator==(const RunConfig& a, const RunConfig& b) {
    return a.model == b.model && a.data == b.data && a.spec == b.spec && a.train == b.train;
}

}  // namespace eprobust
