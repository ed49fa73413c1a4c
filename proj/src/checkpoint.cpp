#include "fringelab/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace fringelab {

namespace {

void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void put_u64(std::ostream& os, uint64_t v) {
    put_u32(os, static_cast<uint32_t>(v & 0xffffffffu));
    put_u32(os, static_cast<uint32_t>(v >> 32));
}

uint64_t get_u64(std::istream& is) {
    uint64_t lo = get_u32(is);
    uint64_t hi = get_u32(is);
    return lo | (hi << 32);
}

void put_string(std::ostream& os, const std::string& s) {
    put_u32(os, static_cast<uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& is) {
    uint32_t n = get_u32(is);
    std::string s(n, '\0');
    is.read(s.data(), n);
    return s;
}

void put_f64_vec(std::ostream& os, const std::vector<double>& v) {
    os.write(reinterpret_cast<const char*>(v.data()),
             static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void get_f64_vec(std::istream& is, std::vector<double>& v) {
    is.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}

}  // namespace

void save_ldw(const std::string& path, const nn::ParamList& params) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("save_ldw: cannot open " + path);
    os.write("LDW1", 4);
    for (const auto& p : params) {
        put_string(os, p.name);
        const auto& shape = p.tensor.shape();
        put_u32(os, static_cast<uint32_t>(shape.size()));
        for (int64_t d : shape) put_u32(os, static_cast<uint32_t>(d));
        std::vector<float> buf(p.tensor.data().size());
        for (size_t i = 0; i < buf.size(); i++) buf[i] = static_cast<float>(p.tensor.data()[i]);
        os.write(reinterpret_cast<const char*>(buf.data()),
                 static_cast<std::streamsize>(buf.size() * sizeof(float)));
    }
    if (!os) throw std::runtime_error("save_ldw: write failed for " + path);
}

std::map<std::string, LdwEntry> read_ldw(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw MissingPrereqError("read_ldw: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "LDW1", 4) != 0)
        throw std::runtime_error("read_ldw: bad magic in " + path);
    std::map<std::string, LdwEntry> out;
    while (is.peek() != EOF) {
        std::string name = get_string(is);
        uint32_t rank = get_u32(is);
        LdwEntry e;
        size_t n = 1;
        for (uint32_t i = 0; i < rank; i++) {
            uint32_t d = get_u32(is);
            e.shape.push_back(static_cast<int64_t>(d));
            n *= d;
        }
        std::vector<float> buf(n);
        is.read(reinterpret_cast<char*>(buf.data()),
                static_cast<std::streamsize>(n * sizeof(float)));
        if (!is) throw std::runtime_error("read_ldw: truncated entry in " + path);
        e.data.assign(buf.begin(), buf.end());
        out.emplace(std::move(name), std::move(e));
    }
    return out;
}

void load_ldw(const std::string& path, nn::ParamList& params) {
    auto entries = read_ldw(path);
    for (auto& p : params) {
        auto it = entries.find(p.name);
        if (it == entries.end())
            throw MissingPrereqError("load_ldw: missing parameter " + p.name + " in " + path);
        if (it->second.shape != p.tensor.shape())
            throw std::runtime_error("load_ldw: shape mismatch for " + p.name + " in " + path);
        p.tensor.data() = it->second.data;
        entries.erase(it);
    }
    if (!entries.empty())
        throw std::runtime_error("load_ldw: unexpected parameter " + entries.begin()->first +
                                 " in " + path);
}

void save_train_state(const std::string& path, const nn::Adam& opt, const std::string& rng_state,
                      int64_t step) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("save_train_state: cannot open " + path);
    os.write("LDT1", 4);
    put_u64(os, static_cast<uint64_t>(step));
    put_string(os, rng_state);
    auto& mut = const_cast<nn::Adam&>(opt);
    const auto& params = opt.params();
    put_u32(os, static_cast<uint32_t>(params.size()));
    for (size_t i = 0; i < params.size(); i++) {
        put_string(os, params[i].name);
        const auto& shape = params[i].tensor.shape();
        put_u32(os, static_cast<uint32_t>(shape.size()));
        for (int64_t d : shape) put_u32(os, static_cast<uint32_t>(d));
        put_f64_vec(os, params[i].tensor.data());
        put_f64_vec(os, mut.moment1()[i]);
        put_f64_vec(os, mut.moment2()[i]);
    }
    if (!os) throw std::runtime_error("save_train_state: write failed for " + path);
}

TrainState load_train_state(const std::string& path, nn::Adam& opt) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw MissingPrereqError("load_train_state: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "LDT1", 4) != 0)
        throw std::runtime_error("load_train_state: bad magic in " + path);
    TrainState st;
    st.step = static_cast<int64_t>(get_u64(is));
    st.rng_state = get_string(is);
    uint32_t count = get_u32(is);
    auto& params = const_cast<nn::ParamList&>(opt.params());
    require(count == params.size(), "load_train_state: parameter count mismatch");
    for (uint32_t i = 0; i < count; i++) {
        std::string name = get_string(is);
        if (name != params[i].name)
            throw std::runtime_error("load_train_state: parameter order mismatch at " + name);
        uint32_t rank = get_u32(is);
        Shape shape;
        for (uint32_t r = 0; r < rank; r++) shape.push_back(static_cast<int64_t>(get_u32(is)));
        require(shape == params[i].tensor.shape(), "load_train_state: shape mismatch at " + name);
        get_f64_vec(is, params[i].tensor.data());
        get_f64_vec(is, opt.moment1()[i]);
        get_f64_vec(is, opt.moment2()[i]);
    }
    if (!is) throw std::runtime_error("load_train_state: truncated file " + path);
    opt.set_step_count(st.step);
    return st;
}

}  // namespace fringelab
