#pragma once

#include <cstdint>
#include <algorithm>
#include <cstring>
#include <type_traits>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

namespace streamrecon {
namespace ply {

enum class Type { kInt8, kUInt8, kInt16, kUInt16, kInt32, kUInt32, kFloat32, kFloat64 };
enum class Format { kAscii, kBinaryLittleEndian, kBinaryBigEndian };

struct Property {
  std::string name;
  Type type = Type::kFloat32;
  bool is_list = false;
  Type count_type = Type::kUInt8;  // lists only
};

struct Element {
  std::string name;
  std::size_t count = 0;
  std::vector<Property> properties;

  int PropertyIndex(const std::string& property) const;
};

struct Schema {
  Format format = Format::kBinaryLittleEndian;
  std::vector<Element> elements;
  std::vector<std::string> comments;

  const Element* Find(const std::string& name) const;
};

// Writes the header. Only binary little-endian is written.
void WriteHeader(std::ostream& out, const Schema& schema);
Schema ReadHeader(std::istream& in);

// Reads one row of `element`. Scalar property i lands in (*scalars)[i];
// list property i lands in (*lists)[i].
void ReadRow(std::istream& in, Format format, const Element& element,
             std::vector<double>* scalars,
             std::vector<std::vector<double>>* lists = nullptr);
inline void ReadRow(std::istream& in, const Element& element,
                    std::vector<double>* scalars) {
  ReadRow(in, Format::kBinaryLittleEndian, element, scalars);
}
void SkipElement(std::istream& in, Format format, const Element& element);
inline void SkipElement(std::istream& in, const Element& element) {
  SkipElement(in, Format::kBinaryLittleEndian, element);
}

template <typename T>
void WriteLE(std::ostream& out, T value) {
  static_assert(std::is_arithmetic_v<T>);
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
#if defined(__BYTE_ORDER__) && __BYTE_ORDER__ == __ORDER_BIG_ENDIAN__
  std::reverse(bytes, bytes + sizeof(T));
#endif
  out.write(bytes, sizeof(T));
}

}  // namespace ply
}  // namespace streamrecon
