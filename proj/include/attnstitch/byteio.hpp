#pragma once

// Little-endian primitives shared by the .melb, .asck and tensor formats.

#include <cstdint>
#include <iosfwd>
#include <string>

namespace astitch::io {

void put_u32(std::ostream& os, std::uint32_t v);
void put_u64(std::ostream& os, std::uint64_t v);
void put_f32(std::ostream& os, float v);
void put_f64(std::ostream& os, double v);
void put_bytes(std::ostream& os, const std::string& bytes);

// Readers throw FormatError on a short read.
std::uint32_t get_u32(std::istream& is);
std::uint64_t get_u64(std::istream& is);
float get_f32(std::istream& is);
double get_f64(std::istream& is);
std::string get_bytes(std::istream& is, std::size_t n);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& bytes);

}  // namespace astitch::io
