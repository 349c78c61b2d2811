#pragma once

#include <cstddef>
#include <string>

namespace io {

enum class Mode { Read, Write, Append };

union Word {
    unsigned int u;
    float f;
};

class File {
public:
    explicit File(std::string path);
    ~File();

    bool open(Mode mode);
    void close();

    std::size_t size() const { return size_; }

private:
    std::string path_;
    int fd_ = -1;
    std::size_t size_ = 0;
};

struct Stat {
    std::size_t bytes;
    bool readable;
};

Stat stat_path(const std::string &path);

} // namespace io
