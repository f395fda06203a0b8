#include "nametune/fileutil.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "nametune/core.hpp"
#include "nametune/rng.hpp"

namespace nametune {

void atomic_write_file(const std::string& path, const std::string& bytes) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) throw IoError("short write to " + tmp.string());
    }
    fs::rename(tmp, target);
}

std::string read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::uint64_t file_digest(const std::string& path) {
    const std::string bytes = read_file_bytes(path);
    return fnv1a64(bytes.data(), bytes.size());
}

}  // namespace nametune
