#include "streamrecon/ply.h"

#include <algorithm>
#include <sstream>

#include "streamrecon/common.h"

namespace streamrecon {
namespace ply {
namespace {

const char* TypeName(Type t) {
  switch (t) {
    case Type::kInt8: return "char";
    case Type::kUInt8: return "uchar";
    case Type::kInt16: return "short";
    case Type::kUInt16: return "ushort";
    case Type::kInt32: return "int";
    case Type::kUInt32: return "uint";
    case Type::kFloat32: return "float";
    case Type::kFloat64: return "double";
  }
  return "float";
}

Type ParseType(const std::string& s) {
  if (s == "char" || s == "int8") return Type::kInt8;
  if (s == "uchar" || s == "uint8") return Type::kUInt8;
  if (s == "short" || s == "int16") return Type::kInt16;
  if (s == "ushort" || s == "uint16") return Type::kUInt16;
  if (s == "int" || s == "int32") return Type::kInt32;
  if (s == "uint" || s == "uint32") return Type::kUInt32;
  if (s == "float" || s == "float32") return Type::kFloat32;
  if (s == "double" || s == "float64") return Type::kFloat64;
  throw InputError("unknown PLY type '" + s + "'");
}

std::size_t TypeSize(Type t) {
  switch (t) {
    case Type::kInt8:
    case Type::kUInt8: return 1;
    case Type::kInt16:
    case Type::kUInt16: return 2;
    case Type::kInt32:
    case Type::kUInt32:
    case Type::kFloat32: return 4;
    case Type::kFloat64: return 8;
  }
  return 4;
}

template <typename T>
double Decode(const char* raw, bool swap) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, raw, sizeof(T));
  if (swap) std::reverse(bytes, bytes + sizeof(T));
  T v;
  std::memcpy(&v, bytes, sizeof(T));
  return static_cast<double>(v);
}

double ReadValue(std::istream& in, Format format, Type t) {
  if (format == Format::kAscii) {
    double v;
    STREAMRECON_CHECK_INPUT(static_cast<bool>(in >> v), "truncated ASCII PLY body");
    return v;
  }
  char raw[8];
  const std::size_t n = TypeSize(t);
  in.read(raw, static_cast<std::streamsize>(n));
  STREAMRECON_CHECK_INPUT(in.gcount() == static_cast<std::streamsize>(n),
                          "truncated PLY body");
#if defined(__BYTE_ORDER__) && __BYTE_ORDER__ == __ORDER_BIG_ENDIAN__
  const bool swap = format == Format::kBinaryLittleEndian;
#else
  const bool swap = format == Format::kBinaryBigEndian;
#endif
  switch (t) {
    case Type::kInt8: return Decode<std::int8_t>(raw, swap);
    case Type::kUInt8: return Decode<std::uint8_t>(raw, swap);
    case Type::kInt16: return Decode<std::int16_t>(raw, swap);
    case Type::kUInt16: return Decode<std::uint16_t>(raw, swap);
    case Type::kInt32: return Decode<std::int32_t>(raw, swap);
    case Type::kUInt32: return Decode<std::uint32_t>(raw, swap);
    case Type::kFloat32: return Decode<float>(raw, swap);
    case Type::kFloat64: return Decode<double>(raw, swap);
  }
  return 0.0;
}

}  // namespace

int Element::PropertyIndex(const std::string& property) const {
  for (std::size_t i = 0; i < properties.size(); ++i) {
    if (properties[i].name == property) return static_cast<int>(i);
  }
  return -1;
}

const Element* Schema::Find(const std::string& name) const {
  for (const auto& e : elements) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

void WriteHeader(std::ostream& out, const Schema& schema) {
  out << "ply\nformat binary_little_endian 1.0\n";
  for (const auto& c : schema.comments) out << "comment " << c << '\n';
  for (const auto& e : schema.elements) {
    out << "element " << e.name << ' ' << e.count << '\n';
    for (const auto& p : e.properties) {
      if (p.is_list) {
        out << "property list " << TypeName(p.count_type) << ' '
            << TypeName(p.type) << ' ' << p.name << '\n';
      } else {
        out << "property " << TypeName(p.type) << ' ' << p.name << '\n';
      }
    }
  }
  out << "end_header\n";
}

Schema ReadHeader(std::istream& in) {
  std::string line;
  std::getline(in, line);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  STREAMRECON_CHECK_INPUT(line == "ply", "not a PLY file");
  Schema schema;
  bool have_format = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "end_header") {
      STREAMRECON_CHECK_INPUT(have_format, "PLY header lacks a format line");
      return schema;
    }
    if (word == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt == "ascii") {
        schema.format = Format::kAscii;
      } else if (fmt == "binary_little_endian") {
        schema.format = Format::kBinaryLittleEndian;
      } else if (fmt == "binary_big_endian") {
        schema.format = Format::kBinaryBigEndian;
      } else {
        throw InputError("unknown PLY format '" + fmt + "'");
      }
      have_format = true;
    } else if (word == "comment" || word == "obj_info") {
      std::string rest;
      std::getline(ls, rest);
      schema.comments.push_back(rest.empty() ? rest : rest.substr(1));
    } else if (word == "element") {
      Element e;
      STREAMRECON_CHECK_INPUT(static_cast<bool>(ls >> e.name >> e.count),
                              "bad PLY element line: ", line);
      schema.elements.push_back(e);
    } else if (word == "property") {
      STREAMRECON_CHECK_INPUT(!schema.elements.empty(),
                              "PLY property before any element");
      Property p;
      std::string type;
      ls >> type;
      if (type == "list") {
        std::string count_type, item_type;
        ls >> count_type >> item_type >> p.name;
        p.is_list = true;
        p.count_type = ParseType(count_type);
        p.type = ParseType(item_type);
      } else {
        p.type = ParseType(type);
        ls >> p.name;
      }
      STREAMRECON_CHECK_INPUT(!p.name.empty(), "bad PLY property line: ", line);
      schema.elements.back().properties.push_back(p);
    } else if (!word.empty()) {
      throw InputError("unexpected PLY header line: " + line);
    }
  }
  throw InputError("PLY header not terminated");
}

void ReadRow(std::istream& in, Format format, const Element& element,
             std::vector<double>* scalars,
             std::vector<std::vector<double>>* lists) {
  const std::size_t n = element.properties.size();
  scalars->assign(n, 0.0);
  if (lists != nullptr) lists->resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Property& p = element.properties[i];
    if (!p.is_list) {
      (*scalars)[i] = ReadValue(in, format, p.type);
      continue;
    }
    const double count = ReadValue(in, format, p.count_type);
    STREAMRECON_CHECK_INPUT(count >= 0 && count < 1e6, "bad PLY list length");
    std::vector<double>* items = lists != nullptr ? &(*lists)[i] : nullptr;
    if (items != nullptr) items->clear();
    for (int k = 0; k < static_cast<int>(count); ++k) {
      const double v = ReadValue(in, format, p.type);
      if (items != nullptr) items->push_back(v);
    }
  }
}

void SkipElement(std::istream& in, Format format, const Element& element) {
  std::vector<double> scalars;
  for (std::size_t r = 0; r < element.count; ++r) {
    ReadRow(in, format, element, &scalars, nullptr);
  }
}

}  // namespace ply
}  // namespace streamrecon
