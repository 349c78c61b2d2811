#include "file.hpp"

#include <fcntl.h>
#include <unistd.h>

#define IO_DEFAULT_PERMS 0644

namespace io {

static int open_flags(Mode mode)
{
    switch (mode) {
    case Mode::Read:
        return O_RDONLY;
    case Mode::Write:
        return O_WRONLY | O_CREAT | O_TRUNC;
    case Mode::Append:
        return O_WRONLY | O_CREAT | O_APPEND;
    }
    return O_RDONLY;
}

File::File(std::string path) : path_(std::move(path)) {}

File::~File()
{
    close();
}

bool File::open(Mode mode)
{
    fd_ = ::open(path_.c_str(), open_flags(mode), IO_DEFAULT_PERMS);
    if (fd_ < 0) {
        return false;
    }
    off_t end = ::lseek(fd_, 0, SEEK_END);
    size_ = end < 0 ? 0 : static_cast<std::size_t>(end);
    ::lseek(fd_, 0, SEEK_SET);
    return true;
}

void File::close()
{
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
}

Stat stat_path(const std::string &path)
{
    File f(path);
    Stat st{0, false};
    if (f.open(Mode::Read)) {
        st.bytes = f.size();
        st.readable = true;
    }
    return st;
}

} // namespace io

int open_file(const char *path)
{
    io::File f(path);
    return f.open(io::Mode::Read) ? 0 : -1;
}
