#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace pmnc::nc {

/// Classic NetCDF (CDF-1 / CDF-2) external types.
enum class Type : std::int32_t {
    Byte = 1,
    Char = 2,
    Short = 3,
    Int = 4,
    Float = 5,
    Double = 6,
};

std::size_t type_size(Type t);

struct Attribute {
    std::string name;
    Type type = Type::Char;
    std::string text;            // Type::Char payload
    std::vector<double> numbers; // numeric payload

    static Attribute str(std::string name, std::string value);
    static Attribute num(std::string name, Type t, std::vector<double> values);
};

struct Dimension {
    std::string name;
    int length = 0; // 0 marks the record (unlimited) dimension
};

struct VarInfo {
    std::string name;
    Type type = Type::Float;
    std::vector<int> dim_ids;
    std::vector<Attribute> atts;
    std::uint64_t vsize = 0;
    std::uint64_t begin = 0;
    bool is_record = false;

    const Attribute* find_att(const std::string& n) const;
};

/// Read-only classic-format file. The header is parsed eagerly; variable
/// payloads are read on demand and widened to double.
class Reader {
public:
    explicit Reader(const std::string& path);

    const std::vector<Dimension>& dims() const { return dims_; }
    const std::vector<Attribute>& global_atts() const { return gatts_; }
    const std::vector<VarInfo>& vars() const { return vars_; }
    std::uint64_t num_records() const { return numrecs_; }

    const VarInfo* find_var(const std::string& name) const;
    const Dimension& dim(int id) const { return dims_.at(static_cast<std::size_t>(id)); }

    /// Total element count of a variable (record dim expanded to numrecs).
    std::uint64_t element_count(const VarInfo& v) const;

    /// Reads the whole variable in dimension order, converted to double.
    std::vector<double> read_var(const VarInfo& v) const;
    std::vector<double> read_var(const std::string& name) const;

private:
    std::string path_;
    int version_ = 1;
    std::uint64_t numrecs_ = 0;
    std::uint64_t record_size_ = 0;
    std::vector<Dimension> dims_;
    std::vector<Attribute> gatts_;
    std::vector<VarInfo> vars_;
};

/// In-memory dataset written as CDF-2 (64-bit offsets), fixed dimensions
/// only. Enough for the archives and bias maps this project emits.
struct Writer {
    struct Var {
        std::string name;
        Type type = Type::Float;
        std::vector<int> dim_ids;
        std::vector<Attribute> atts;
        std::vector<double> data; // converted to `type` on write
    };

    std::vector<Dimension> dims;
    std::vector<Attribute> global_atts;
    std::vector<Var> vars;

    int add_dim(const std::string& name, int length);
    Var& add_var(const std::string& name, Type type, std::vector<int> dim_ids);

    void save(const std::string& path) const;
};

} // namespace pmnc::nc
