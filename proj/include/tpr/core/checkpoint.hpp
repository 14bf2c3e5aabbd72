#ifndef TPR_CORE_CHECKPOINT_HPP
#define TPR_CORE_CHECKPOINT_HPP

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <variant>
#include <vector>

#include "tpr/core/errors.hpp"
#include "tpr/core/param.hpp"
#include "tpr/core/tensor.hpp"

namespace tpr {

static_assert(std::endian::native == std::endian::little,
              "TPCK/TPRD containers are little-endian; big-endian hosts would "
              "need byte swapping");

// Named-tensor checkpoint container ("TPCK"). Byte layout:
//   magic "TPCK" | version u32 | entry count u32
//   per entry: name len u16 | name bytes | dtype u8 (0=f32, 1=f64) |
//              rank u8 | dims u32 each | raw row-major values
// Entries keep insertion order, which makes writes byte-reproducible.
class Checkpoint {
 public:
  using Value = std::variant<Tensor<float>, Tensor<double>>;

  static constexpr std::uint32_t kVersion = 1;

  void add(const std::string& name, Tensor<float> t) { entries_.emplace_back(name, Value(std::move(t))); }
  void add(const std::string& name, Tensor<double> t) { entries_.emplace_back(name, Value(std::move(t))); }

  void add_scalar(const std::string& name, double v) {
    add(name, Tensor<double>::scalar(v));
  }

  template <typename T>
  void add_params(const ParamRefs<T>& params, const std::string& prefix = "") {
    for (auto* p : params) add(prefix + p->name, p->value);
  }

  bool contains(const std::string& name) const { return find(name) != nullptr; }

  const Value* find(const std::string& name) const {
    for (const auto& [n, v] : entries_)
      if (n == name) return &v;
    return nullptr;
  }

  template <typename T>
  const Tensor<T>& get(const std::string& name) const {
    const Value* v = find(name);
    require_format(v != nullptr, "checkpoint entry missing: " + name);
    const Tensor<T>* t = std::get_if<Tensor<T>>(v);
    require_format(t != nullptr, "checkpoint entry has wrong dtype: " + name);
    return *t;
  }

  double get_scalar(const std::string& name) const {
    const Value* v = find(name);
    require_format(v != nullptr, "checkpoint entry missing: " + name);
    if (const auto* t = std::get_if<Tensor<double>>(v)) {
      require_format(t->numel() == 1, "checkpoint entry not scalar: " + name);
      return (*t)[0];
    }
    const auto& t = std::get<Tensor<float>>(*v);
    require_format(t.numel() == 1, "checkpoint entry not scalar: " + name);
    return static_cast<double>(t[0]);
  }

  template <typename T>
  void load_params(const ParamRefs<T>& params, const std::string& prefix = "") const {
    for (auto* p : params) {
      const Tensor<T>& stored = get<T>(prefix + p->name);
      require_format(stored.shape() == p->value.shape(),
                     "checkpoint shape mismatch for " + p->name);
      p->value = stored;
    }
  }

  const std::vector<std::pair<std::string, Value>>& entries() const { return entries_; }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(out.good(), "cannot open for writing: " + path);
    out.write("TPCK", 4);
    write_u32(out, kVersion);
    write_u32(out, static_cast<std::uint32_t>(entries_.size()));
    for (const auto& [name, value] : entries_) {
      require_format(name.size() <= 0xffff, "checkpoint entry name too long");
      write_u16(out, static_cast<std::uint16_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      std::visit(
          [&](const auto& t) {
            using S = typename std::decay_t<decltype(t)>;
            using Scalar = std::decay_t<decltype(t[0])>;
            (void)sizeof(S);
            write_u8(out, DtypeCode<Scalar>::value);
            write_u8(out, static_cast<std::uint8_t>(t.ndim()));
            for (int d : t.shape()) write_u32(out, static_cast<std::uint32_t>(d));
            out.write(reinterpret_cast<const char*>(t.data()),
                      static_cast<std::streamsize>(sizeof(Scalar) * t.numel()));
          },
          value);
    }
    require(out.good(), "write failed: " + path);
  }

  static Checkpoint load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require_format(in.good(), "cannot open checkpoint: " + path);
    char magic[4];
    in.read(magic, 4);
    require_format(in.gcount() == 4 && std::memcmp(magic, "TPCK", 4) == 0,
                   "bad checkpoint magic in " + path);
    const std::uint32_t version = read_u32(in, path);
    require_format(version == kVersion,
                   "unsupported checkpoint version " + std::to_string(version));
    const std::uint32_t count = read_u32(in, path);
    Checkpoint ck;
    for (std::uint32_t e = 0; e < count; ++e) {
      const std::uint16_t name_len = read_u16(in, path);
      std::string name(name_len, '\0');
      in.read(name.data(), name_len);
      require_format(in.gcount() == name_len, "truncated checkpoint: " + path);
      const std::uint8_t dtype = read_u8(in, path);
      const std::uint8_t rank = read_u8(in, path);
      std::vector<int> shape(rank);
      for (auto& d : shape) d = static_cast<int>(read_u32(in, path));
      if (dtype == DtypeCode<float>::value) {
        ck.add(name, read_tensor<float>(in, shape, path));
      } else if (dtype == DtypeCode<double>::value) {
        ck.add(name, read_tensor<double>(in, shape, path));
      } else {
        throw FormatError("unknown dtype code in " + path);
      }
    }
    return ck;
  }

 private:
  template <typename T>
  static Tensor<T> read_tensor(std::ifstream& in, const std::vector<int>& shape,
                               const std::string& path) {
    Tensor<T> t(shape);
    const std::streamsize bytes = static_cast<std::streamsize>(sizeof(T) * t.numel());
    in.read(reinterpret_cast<char*>(t.data()), bytes);
    require_format(in.gcount() == bytes, "truncated checkpoint: " + path);
    return t;
  }

  static void write_u8(std::ofstream& o, std::uint8_t v) { o.write(reinterpret_cast<const char*>(&v), 1); }
  static void write_u16(std::ofstream& o, std::uint16_t v) { o.write(reinterpret_cast<const char*>(&v), 2); }
  static void write_u32(std::ofstream& o, std::uint32_t v) { o.write(reinterpret_cast<const char*>(&v), 4); }

  static std::uint8_t read_u8(std::ifstream& in, const std::string& path) {
    std::uint8_t v;
    in.read(reinterpret_cast<char*>(&v), 1);
    require_format(in.gcount() == 1, "truncated checkpoint: " + path);
    return v;
  }
  static std::uint16_t read_u16(std::ifstream& in, const std::string& path) {
    std::uint16_t v;
    in.read(reinterpret_cast<char*>(&v), 2);
    require_format(in.gcount() == 2, "truncated checkpoint: " + path);
    return v;
  }
  static std::uint32_t read_u32(std::ifstream& in, const std::string& path) {
    std::uint32_t v;
    in.read(reinterpret_cast<char*>(&v), 4);
    require_format(in.gcount() == 4, "truncated checkpoint: " + path);
    return v;
  }

  std::vector<std::pair<std::string, Value>> entries_;
};

}  // namespace tpr

#endif
