#include "pmnc/nc.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace pmnc::nc {

namespace {

constexpr std::uint32_t kTagDimension = 0x0A;
constexpr std::uint32_t kTagVariable = 0x0B;
constexpr std::uint32_t kTagAttribute = 0x0C;

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
    throw std::runtime_error("netcdf: " + path + ": " + msg);
}

struct BinReader {
    std::ifstream f;
    std::string path;

    explicit BinReader(const std::string& p) : f(p, std::ios::binary), path(p) {
        if (!f) fail(p, "cannot open file");
    }

    void read_bytes(void* dst, std::size_t n) {
        f.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
        if (!f) fail(path, "unexpected end of file");
    }

    std::uint32_t u32() {
        unsigned char b[4];
        read_bytes(b, 4);
        return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
               (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
    }

    std::uint64_t u64() {
        std::uint64_t hi = u32();
        return (hi << 32) | u32();
    }

    std::string name() {
        std::uint32_t n = u32();
        std::string s(n, '\0');
        read_bytes(s.data(), n);
        skip_pad(n);
        return s;
    }

    void skip_pad(std::size_t n) {
        std::size_t pad = (4 - n % 4) % 4;
        if (pad) f.seekg(static_cast<std::streamoff>(pad), std::ios::cur);
    }

    void seek(std::uint64_t off) { f.seekg(static_cast<std::streamoff>(off), std::ios::beg); }
};

double decode_value(const unsigned char* p, Type t) {
    switch (t) {
    case Type::Byte:
        return static_cast<double>(static_cast<signed char>(p[0]));
    case Type::Char:
        return static_cast<double>(p[0]);
    case Type::Short: {
        std::int16_t v = static_cast<std::int16_t>((std::uint16_t(p[0]) << 8) | p[1]);
        return static_cast<double>(v);
    }
    case Type::Int: {
        std::uint32_t u =
            (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
            (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
        return static_cast<double>(static_cast<std::int32_t>(u));
    }
    case Type::Float: {
        std::uint32_t u =
            (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
            (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
        float f;
        std::memcpy(&f, &u, 4);
        return static_cast<double>(f);
    }
    case Type::Double: {
        std::uint64_t u = 0;
        for (int i = 0; i < 8; ++i) u = (u << 8) | p[i];
        double d;
        std::memcpy(&d, &u, 8);
        return d;
    }
    }
    throw std::runtime_error("netcdf: unknown external type");
}

void encode_value(double v, Type t, std::string& out) {
    auto push_u32 = [&out](std::uint32_t u) {
        out.push_back(static_cast<char>(u >> 24));
        out.push_back(static_cast<char>(u >> 16));
        out.push_back(static_cast<char>(u >> 8));
        out.push_back(static_cast<char>(u));
    };
    switch (t) {
    case Type::Byte:
    case Type::Char:
        out.push_back(static_cast<char>(static_cast<std::int8_t>(v)));
        return;
    case Type::Short: {
        auto s = static_cast<std::int16_t>(v);
        out.push_back(static_cast<char>(static_cast<std::uint16_t>(s) >> 8));
        out.push_back(static_cast<char>(s));
        return;
    }
    case Type::Int:
        push_u32(static_cast<std::uint32_t>(static_cast<std::int32_t>(std::llround(v))));
        return;
    case Type::Float: {
        float f = static_cast<float>(v);
        std::uint32_t u;
        std::memcpy(&u, &f, 4);
        push_u32(u);
        return;
    }
    case Type::Double: {
        std::uint64_t u;
        std::memcpy(&u, &v, 8);
        push_u32(static_cast<std::uint32_t>(u >> 32));
        push_u32(static_cast<std::uint32_t>(u));
        return;
    }
    }
    throw std::runtime_error("netcdf: unknown external type");
}

std::vector<Attribute> parse_att_list(BinReader& r) {
    std::uint32_t tag = r.u32();
    std::uint32_t n = r.u32();
    if (tag == 0 && n == 0) return {};
    if (tag != kTagAttribute) fail(r.path, "malformed attribute list");
    std::vector<Attribute> atts(n);
    for (auto& a : atts) {
        a.name = r.name();
        a.type = static_cast<Type>(r.u32());
        std::uint32_t count = r.u32();
        std::size_t nbytes = count * type_size(a.type);
        std::vector<unsigned char> buf(nbytes);
        if (nbytes) r.read_bytes(buf.data(), nbytes);
        r.skip_pad(nbytes);
        if (a.type == Type::Char) {
            a.text.assign(reinterpret_cast<char*>(buf.data()), nbytes);
        } else {
            std::size_t ts = type_size(a.type);
            for (std::uint32_t i = 0; i < count; ++i)
                a.numbers.push_back(decode_value(buf.data() + i * ts, a.type));
        }
    }
    return atts;
}

void write_name(std::string& out, const std::string& s) {
    auto push_u32 = [&out](std::uint32_t u) {
        out.push_back(static_cast<char>(u >> 24));
        out.push_back(static_cast<char>(u >> 16));
        out.push_back(static_cast<char>(u >> 8));
        out.push_back(static_cast<char>(u));
    };
    push_u32(static_cast<std::uint32_t>(s.size()));
    out += s;
    while (out.size() % 4) out.push_back('\0');
}

void write_att_list(std::string& out, const std::vector<Attribute>& atts) {
    auto push_u32 = [&out](std::uint32_t u) {
        out.push_back(static_cast<char>(u >> 24));
        out.push_back(static_cast<char>(u >> 16));
        out.push_back(static_cast<char>(u >> 8));
        out.push_back(static_cast<char>(u));
    };
    if (atts.empty()) {
        push_u32(0);
        push_u32(0);
        return;
    }
    push_u32(kTagAttribute);
    push_u32(static_cast<std::uint32_t>(atts.size()));
    for (const auto& a : atts) {
        write_name(out, a.name);
        push_u32(static_cast<std::uint32_t>(a.type));
        if (a.type == Type::Char) {
            push_u32(static_cast<std::uint32_t>(a.text.size()));
            out += a.text;
        } else {
            push_u32(static_cast<std::uint32_t>(a.numbers.size()));
            for (double v : a.numbers) encode_value(v, a.type, out);
        }
        while (out.size() % 4) out.push_back('\0');
    }
}

} // namespace

std::size_t type_size(Type t) {
    switch (t) {
    case Type::Byte:
    case Type::Char:
        return 1;
    case Type::Short:
        return 2;
    case Type::Int:
    case Type::Float:
        return 4;
    case Type::Double:
        return 8;
    }
    throw std::runtime_error("netcdf: unknown external type");
}

Attribute Attribute::str(std::string name, std::string value) {
    Attribute a;
    a.name = std::move(name);
    a.type = Type::Char;
    a.text = std::move(value);
    return a;
}

Attribute Attribute::num(std::string name, Type t, std::vector<double> values) {
    Attribute a;
    a.name = std::move(name);
    a.type = t;
    a.numbers = std::move(values);
    return a;
}

const Attribute* VarInfo::find_att(const std::string& n) const {
    for (const auto& a : atts)
        if (a.name == n) return &a;
    return nullptr;
}

Reader::Reader(const std::string& path) : path_(path) {
    BinReader r(path);
    char magic[4];
    r.read_bytes(magic, 4);
    if (magic[0] == char(0x89) && magic[1] == 'H' && magic[2] == 'D' && magic[3] == 'F')
        fail(path, "NetCDF-4/HDF5 container is not supported; re-save as classic NetCDF");
    if (magic[0] != 'C' || magic[1] != 'D' || magic[2] != 'F')
        fail(path, "not a NetCDF classic file");
    version_ = magic[3];
    if (version_ != 1 && version_ != 2)
        fail(path, "unsupported classic version " + std::to_string(version_));

    numrecs_ = r.u32();
    if (numrecs_ == 0xFFFFFFFFu) fail(path, "streaming numrecs not supported");

    // dimension list
    {
        std::uint32_t tag = r.u32();
        std::uint32_t n = r.u32();
        if (!(tag == 0 && n == 0)) {
            if (tag != kTagDimension) fail(path, "malformed dimension list");
            dims_.resize(n);
            for (auto& d : dims_) {
                d.name = r.name();
                d.length = static_cast<int>(r.u32());
            }
        }
    }
    gatts_ = parse_att_list(r);

    // variable list
    {
        std::uint32_t tag = r.u32();
        std::uint32_t n = r.u32();
        if (!(tag == 0 && n == 0)) {
            if (tag != kTagVariable) fail(path, "malformed variable list");
            vars_.resize(n);
            for (auto& v : vars_) {
                v.name = r.name();
                std::uint32_t nd = r.u32();
                v.dim_ids.resize(nd);
                for (auto& id : v.dim_ids) id = static_cast<int>(r.u32());
                v.atts = parse_att_list(r);
                v.type = static_cast<Type>(r.u32());
                v.vsize = r.u32();
                v.begin = version_ == 1 ? r.u32() : r.u64();
                v.is_record = !v.dim_ids.empty() && dims_.at(v.dim_ids[0]).length == 0;
            }
        }
    }

    int record_vars = 0;
    for (const auto& v : vars_)
        if (v.is_record) {
            ++record_vars;
            record_size_ += v.vsize;
        }
    if (record_vars == 1) {
        // single record variable: vsize may be unpadded; record stride is vsize
        for (const auto& v : vars_)
            if (v.is_record) record_size_ = v.vsize;
    }
}

const VarInfo* Reader::find_var(const std::string& name) const {
    for (const auto& v : vars_)
        if (v.name == name) return &v;
    return nullptr;
}

std::uint64_t Reader::element_count(const VarInfo& v) const {
    std::uint64_t n = 1;
    for (std::size_t i = 0; i < v.dim_ids.size(); ++i) {
        int len = dims_.at(v.dim_ids[i]).length;
        n *= (i == 0 && v.is_record) ? numrecs_ : static_cast<std::uint64_t>(len);
    }
    return n;
}

std::vector<double> Reader::read_var(const VarInfo& v) const {
    BinReader r(path_);
    std::size_t ts = type_size(v.type);
    std::uint64_t per_record = 1;
    for (std::size_t i = v.is_record ? 1 : 0; i < v.dim_ids.size(); ++i)
        per_record *= static_cast<std::uint64_t>(dims_.at(v.dim_ids[i]).length);

    std::uint64_t records = v.is_record ? numrecs_ : 1;
    std::vector<double> out;
    out.reserve(per_record * records);
    std::vector<unsigned char> buf(per_record * ts);
    for (std::uint64_t rec = 0; rec < records; ++rec) {
        r.seek(v.begin + (v.is_record ? rec * record_size_ : 0));
        r.read_bytes(buf.data(), buf.size());
        for (std::uint64_t i = 0; i < per_record; ++i)
            out.push_back(decode_value(buf.data() + i * ts, v.type));
    }
    return out;
}

std::vector<double> Reader::read_var(const std::string& name) const {
    const VarInfo* v = find_var(name);
    if (!v) fail(path_, "variable not found: " + name);
    return read_var(*v);
}

int Writer::add_dim(const std::string& name, int length) {
    if (length <= 0) throw std::invalid_argument("netcdf writer: dimensions must be fixed-size");
    dims.push_back({name, length});
    return static_cast<int>(dims.size()) - 1;
}

Writer::Var& Writer::add_var(const std::string& name, Type type, std::vector<int> dim_ids) {
    Var v;
    v.name = name;
    v.type = type;
    v.dim_ids = std::move(dim_ids);
    vars.push_back(std::move(v));
    return vars.back();
}

void Writer::save(const std::string& path) const {
    auto push_u32 = [](std::string& out, std::uint32_t u) {
        out.push_back(static_cast<char>(u >> 24));
        out.push_back(static_cast<char>(u >> 16));
        out.push_back(static_cast<char>(u >> 8));
        out.push_back(static_cast<char>(u));
    };
    auto push_u64 = [&push_u32](std::string& out, std::uint64_t u) {
        push_u32(out, static_cast<std::uint32_t>(u >> 32));
        push_u32(out, static_cast<std::uint32_t>(u));
    };

    // per-variable sizes
    std::vector<std::uint64_t> vsizes;
    for (const auto& v : vars) {
        std::uint64_t n = 1;
        for (int id : v.dim_ids) n *= static_cast<std::uint64_t>(dims.at(id).length);
        if (v.data.size() != n)
            throw std::invalid_argument("netcdf writer: variable " + v.name + " has " +
                                        std::to_string(v.data.size()) + " values, expected " +
                                        std::to_string(n));
        std::uint64_t bytes = n * type_size(v.type);
        vsizes.push_back((bytes + 3) / 4 * 4);
    }

    // header without begins, to learn its size
    auto build_header = [&](const std::vector<std::uint64_t>& begins) {
        std::string h = "CDF";
        h.push_back(2);
        push_u32(h, 0); // numrecs: no record dimension written
        if (dims.empty()) {
            push_u32(h, 0);
            push_u32(h, 0);
        } else {
            push_u32(h, kTagDimension);
            push_u32(h, static_cast<std::uint32_t>(dims.size()));
            for (const auto& d : dims) {
                write_name(h, d.name);
                push_u32(h, static_cast<std::uint32_t>(d.length));
            }
        }
        write_att_list(h, global_atts);
        if (vars.empty()) {
            push_u32(h, 0);
            push_u32(h, 0);
        } else {
            push_u32(h, kTagVariable);
            push_u32(h, static_cast<std::uint32_t>(vars.size()));
            for (std::size_t i = 0; i < vars.size(); ++i) {
                const auto& v = vars[i];
                write_name(h, v.name);
                push_u32(h, static_cast<std::uint32_t>(v.dim_ids.size()));
                for (int id : v.dim_ids) push_u32(h, static_cast<std::uint32_t>(id));
                write_att_list(h, v.atts);
                push_u32(h, static_cast<std::uint32_t>(v.type));
                push_u32(h, static_cast<std::uint32_t>(vsizes[i]));
                push_u64(h, begins.empty() ? 0 : begins[i]);
            }
        }
        return h;
    };

    std::uint64_t header_size = build_header({}).size();
    std::vector<std::uint64_t> begins(vars.size());
    std::uint64_t off = header_size;
    for (std::size_t i = 0; i < vars.size(); ++i) {
        begins[i] = off;
        off += vsizes[i];
    }

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) fail(path, "cannot open for writing");
    std::string header = build_header(begins);
    f.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (std::size_t i = 0; i < vars.size(); ++i) {
        std::string blob;
        blob.reserve(vsizes[i]);
        for (double v : vars[i].data) encode_value(v, vars[i].type, blob);
        while (blob.size() % 4) blob.push_back('\0');
        f.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    }
    if (!f) fail(path, "write failed");
}

} // namespace pmnc::nc
